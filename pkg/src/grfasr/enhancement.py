"""Mask-based speech enhancement: BLSTM mask estimator and spectrum-approximation loss."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import BLSTM, Linear, Module, Tensor

IAM_FLOOR = 1e-10
IAM_CEILING = 10.0


@dataclass
class EnhancementConfig:
    input_dim: int = 257
    hidden: int = 64
    layers: int = 2
    dropout: float = 0.5

    def __post_init__(self):
        if self.layers < 1 or self.hidden < 1:
            raise ValueError("enhancement needs layers >= 1 and hidden >= 1")


FULL_SCALE_ENHANCEMENT = EnhancementConfig(input_dim=257, hidden=512, layers=3, dropout=0.5)


def iam_target(clean, noisy, eps=IAM_FLOOR, ceiling=IAM_CEILING):
    """Ideal amplitude mask |X| / max(|Y|, eps), clamped to [0, ceiling]."""
    clean = np.asarray(clean, dtype=np.float64)
    noisy = np.asarray(noisy, dtype=np.float64)
    if clean.shape != noisy.shape:
        raise ValueError(f"IAM shape mismatch: clean {clean.shape}, noisy {noisy.shape}")
    return np.clip(clean / np.maximum(noisy, eps), 0.0, ceiling)


def compress(mag):
    """Input compression applied to |Y| before the BLSTM stack."""
    return np.log1p(mag)


class EnhancementNet(Module):
    """BLSTM stack -> linear -> ReLU, producing a non-negative T x F mask."""

    def __init__(self, cfg, rng):
        super().__init__()
        self.cfg = cfg
        self.blstm = BLSTM(cfg.input_dim, cfg.hidden, cfg.layers, rng, cfg.dropout)
        self.mask_layer = Linear(2 * cfg.hidden, cfg.input_dim, rng)
        # start near the identity mask so the ReLU is active everywhere
        self.mask_layer.bias.data[:] = 1.0

    def forward(self, noisy_mag):
        """Return ``(mask, enhanced_mag)`` as tensors; ``noisy_mag`` is ``T x F``."""
        y = noisy_mag.data if isinstance(noisy_mag, Tensor) else np.asarray(noisy_mag, dtype=np.float64)
        if y.ndim != 2 or y.shape[1] != self.cfg.input_dim:
            raise ValueError(f"expected T x {self.cfg.input_dim} magnitudes, got {y.shape}")
        h = self.blstm(Tensor(compress(y)))
        mask = ad.relu(self.mask_layer(h))
        return mask, mask * Tensor(y)


def enhance_forward(noisy_mag, net):
    return net(noisy_mag)


def sa_loss(mask, noisy, clean):
    """(1/TF) * sum((mask * |Y| - |X|)^2); differentiable in ``mask``."""
    noisy = np.asarray(getattr(noisy, "data", noisy), dtype=np.float64)
    clean = np.asarray(getattr(clean, "data", clean), dtype=np.float64)
    mask = ad.as_tensor(mask)
    if mask.shape != noisy.shape or noisy.shape != clean.shape:
        raise ValueError("sa_loss: mask, noisy and clean shapes differ")
    if noisy.size == 0:
        raise ValueError("sa_loss of an empty spectrogram")
    diff = mask * Tensor(noisy) - Tensor(clean)
    return (diff * diff).mean()
