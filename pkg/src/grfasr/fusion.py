"""Two-stream deep feature encoders and the multi-stage gated recurrent fusion block."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import BLSTM, Linear, Module, Parameter, Tensor

MODES = ("grf", "concat", "enhanced_only", "noisy_only")


@dataclass
class FusionConfig:
    feat_dim: int = 80
    encoder_hidden: int = 64
    encoder_layers: int = 1
    stages: int = 4
    mode: str = "grf"
    out_dim: int = 64
    dropout: float = 0.5
    h0_scale: float = 0.01

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown fusion mode {self.mode!r}; expected one of {MODES}")
        if self.stages < 1:
            raise ValueError("GRF needs stages >= 1")
        if self.out_dim < 1:
            raise ValueError("out_dim must be >= 1")

    @property
    def output_dim(self):
        """Width of the feature matrix handed to the recogniser."""
        if self.mode == "grf":
            return self.out_dim
        if self.mode == "concat":
            return 4 * self.encoder_hidden
        return self.feat_dim


FULL_SCALE_FUSION = FusionConfig(feat_dim=80, encoder_hidden=320, encoder_layers=2, stages=4, out_dim=320)


class GrfBlock(Module):
    """One GRU-style fusion step, shared by every step of every stage.

    reset  r  = sigmoid([x, h] W_r + b_r)
    update z  = sigmoid([x, h] W_z + b_z)
    cand   hc = tanh([x, r*h] W_h + b_h)
    out       = z*h + (1 - z)*hc
    """

    def __init__(self, in_dim, hidden, rng):
        super().__init__()
        self.in_dim = in_dim
        self.hidden = hidden
        self.w_r = Linear(in_dim + hidden, hidden, rng)
        self.w_z = Linear(in_dim + hidden, hidden, rng)
        self.w_h = Linear(in_dim + hidden, hidden, rng)

    def forward(self, x, h):
        if x.shape[-1] != self.in_dim or h.shape[-1] != self.hidden or x.shape[0] != h.shape[0]:
            raise ValueError(f"GRF step got input {x.shape} and state {h.shape}")
        xh = ad.concat([x, h], axis=-1)
        r = ad.sigmoid(self.w_r(xh))
        z = ad.sigmoid(self.w_z(xh))
        hc = ad.tanh(self.w_h(ad.concat([x, r * h], axis=-1)))
        return z * h + (1.0 - z) * hc


def grf_step(x, h, block):
    """Apply the fusion block framewise: ``x`` is T x D, ``h`` is T x H."""
    return block(ad.as_tensor(x), ad.as_tensor(h))


def grf_fuse(beta_noisy, beta_enhanced, block, h0, stages):
    """Run ``stages`` x (noisy step, enhanced step) from the per-frame initial state ``h0``.

    Returns the final hidden state (the fused representation), T x H.
    """
    beta_noisy = ad.as_tensor(beta_noisy)
    beta_enhanced = ad.as_tensor(beta_enhanced)
    if beta_noisy.shape[0] != beta_enhanced.shape[0]:
        raise ValueError("noisy and enhanced streams differ in frame count")
    T = beta_noisy.shape[0]
    h = Tensor(np.tile(np.asarray(getattr(h0, "data", h0)), (T, 1)))
    for _ in range(stages):
        h = block(beta_noisy, h)
        h = block(beta_enhanced, h)
    return h


class FusionNet(Module):
    """Routes noisy/enhanced Fbank streams to the recogniser according to ``cfg.mode``."""

    def __init__(self, cfg, rng):
        super().__init__()
        self.cfg = cfg
        self.rng = rng
        if cfg.mode in ("grf", "concat"):
            args = (cfg.feat_dim, cfg.encoder_hidden, cfg.encoder_layers, rng, cfg.dropout)
            self.enc_noisy = BLSTM(*args)
            self.enc_enhanced = BLSTM(*args)
        if cfg.mode == "grf":
            width = 2 * cfg.encoder_hidden
            self.grf = GrfBlock(width, width, rng)
            self.h0 = Parameter(rng.uniform(-cfg.h0_scale, cfg.h0_scale, size=width), trainable=False)
            self.proj = Linear(3 * width, cfg.out_dim, rng)

    def encode_streams(self, noisy_fbank, enhanced_fbank):
        noisy_fbank = ad.as_tensor(noisy_fbank)
        enhanced_fbank = ad.as_tensor(enhanced_fbank)
        if noisy_fbank.shape[0] != enhanced_fbank.shape[0]:
            raise ValueError("noisy and enhanced streams differ in frame count")
        return self.enc_noisy(noisy_fbank), self.enc_enhanced(enhanced_fbank)

    def forward(self, noisy_fbank, enhanced_fbank):
        mode = self.cfg.mode
        if mode == "enhanced_only":
            return ad.as_tensor(enhanced_fbank)
        if mode == "noisy_only":
            return ad.as_tensor(noisy_fbank)
        beta_n, beta_e = self.encode_streams(noisy_fbank, enhanced_fbank)
        if mode == "concat":
            return ad.concat([beta_e, beta_n], axis=-1)
        f_grf = grf_fuse(beta_n, beta_e, self.grf, self.h0, self.cfg.stages)
        return ad.relu(self.proj(ad.concat([beta_n, f_grf, beta_e], axis=-1)))


def fuse(noisy_fbank, enhanced_fbank, net):
    return net(noisy_fbank, enhanced_fbank)
