"""Signal processing: STFT/iSTFT, Mel filterbank, log-Fbank, SNR mixing, WAV I/O."""

import wave
from dataclasses import dataclass, field

import numpy as np

from .autodiff import tensor as ad

SAMPLE_RATE = 16000
FRAME_LENGTH_S = 0.032
FRAME_SHIFT_S = 0.016
FFT_SIZE = 512
N_MELS = 80
LOG_FLOOR = 1e-10


class DataError(ValueError):
    """Bad or inconsistent audio/corpus input."""


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise DataError("waveforms are mono: expected a 1-D sample array")
        if int(self.sample_rate) <= 0:
            raise DataError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise DataError("waveform contains NaN or Inf")
        self.sample_rate = int(self.sample_rate)

    def __len__(self):
        return len(self.samples)

    @property
    def energy(self):
        return float(np.dot(self.samples, self.samples))

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


@dataclass
class Spectrogram:
    """One-sided complex STFT frames, ``T x (fft_size/2 + 1)``."""

    frames: np.ndarray
    frame_shift: float
    frame_length: float
    fft_size: int
    sample_rate: int = SAMPLE_RATE
    n_samples: int = 0

    @property
    def win_length(self):
        return int(round(self.frame_length * self.sample_rate))

    @property
    def hop_length(self):
        return int(round(self.frame_shift * self.sample_rate))

    @property
    def magnitude(self):
        return np.abs(self.frames)

    @property
    def phase(self):
        return np.angle(self.frames)

    @property
    def shape(self):
        return self.frames.shape


@dataclass
class FeatureMatrix:
    values: np.ndarray
    feature_kind: str = "log-fbank"


@dataclass
class Mixture:
    """Result of additive mixing: ``noisy = clean + noise`` sample by sample."""

    noisy: Waveform
    clean: Waveform
    noise: Waveform
    snr_db: float
    noise_offset: int = 0
    gain: float = 1.0
    meta: dict = field(default_factory=dict)


def _is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


def analysis_window(win_length):
    """Periodic Hamming window."""
    return np.hamming(win_length + 1)[:-1]


def num_frames(n_samples, win_length, hop_length):
    if n_samples < win_length:
        return 0
    return 1 + (n_samples - win_length) // hop_length


def stft(w, frame_length_s=FRAME_LENGTH_S, frame_shift_s=FRAME_SHIFT_S, fft_size=FFT_SIZE):
    """Hamming-windowed one-sided STFT without end padding."""
    if len(w) == 0:
        raise DataError("stft of an empty waveform")
    if not _is_pow2(fft_size):
        raise ValueError(f"fft_size must be a power of two, got {fft_size}")
    win = int(round(frame_length_s * w.sample_rate))
    hop = int(round(frame_shift_s * w.sample_rate))
    if win > fft_size:
        raise ValueError(f"window of {win} samples exceeds fft_size {fft_size}")
    if hop < 1:
        raise ValueError("frame shift rounds to zero samples")
    T = num_frames(len(w), win, hop)
    F = fft_size // 2 + 1
    if T == 0:
        frames = np.zeros((0, F), dtype=np.complex128)
    else:
        idx = np.arange(win)[None, :] + hop * np.arange(T)[:, None]
        segs = w.samples[idx] * analysis_window(win)
        frames = np.fft.rfft(segs, n=fft_size, axis=1)
    return Spectrogram(frames, frame_shift_s, frame_length_s, fft_size, w.sample_rate, len(w))


def istft(s, phase_source=None):
    """Weighted overlap-add inverse of :func:`stft`.

    Uses the magnitudes of ``s`` and the phases of ``phase_source`` (``s``
    itself when omitted). Output has ``s.n_samples`` samples; samples not
    covered by any frame are zero.
    """
    if phase_source is None:
        phase_source = s
    if s.frames.shape != phase_source.frames.shape or (
        s.win_length, s.hop_length, s.fft_size) != (
        phase_source.win_length, phase_source.hop_length, phase_source.fft_size
    ):
        raise ValueError("istft: magnitude and phase spectrograms differ in shape or framing")
    win, hop = s.win_length, s.hop_length
    T = s.frames.shape[0]
    n_out = max(s.n_samples, (T - 1) * hop + win if T else 0)
    out = np.zeros(n_out)
    norm = np.zeros(n_out)
    if T:
        spec = np.abs(s.frames) * np.exp(1j * np.angle(phase_source.frames))
        frames = np.fft.irfft(spec, n=s.fft_size, axis=1)[:, :win]
        window = analysis_window(win)
        for t in range(T):
            a = t * hop
            out[a:a + win] += frames[t] * window
            norm[a:a + win] += window * window
    covered = norm > 1e-12
    out[covered] /= norm[covered]
    return Waveform(out, s.sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(fft_size=FFT_SIZE, n_mels=N_MELS, sample_rate=SAMPLE_RATE):
    """``F x n_mels`` triangular filters on FFT-bin edges, mel-spaced 0 Hz..Nyquist.

    Edge/centre points are rounded to bins and forced strictly increasing, so
    every triangle peaks at exactly 1 on its centre bin and no filter is empty.
    """
    if fft_size % 2:
        raise ValueError("fft_size must be even")
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    F = fft_size // 2 + 1
    if n_mels > F - 2:
        raise ValueError(f"n_mels={n_mels} too large for {F} frequency bins")
    mels = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2)
    pts = np.round(mel_to_hz(mels) * fft_size / sample_rate).astype(int)
    pts[0] = 0
    pts[-1] = F - 1
    for k in range(1, n_mels + 2):
        pts[k] = max(pts[k], pts[k - 1] + 1)
    for k in range(n_mels, -1, -1):
        pts[k] = min(pts[k], pts[k + 1] - 1)
    bins = np.arange(F)
    fb = np.zeros((F, n_mels))
    for m in range(n_mels):
        lo, c, hi = pts[m], pts[m + 1], pts[m + 2]
        rise = (bins - lo) / (c - lo)
        fall = (hi - bins) / (hi - c)
        fb[:, m] = np.clip(np.minimum(rise, fall), 0.0, None)
    return fb


def log_fbank(m, filterbank, floor=LOG_FLOOR):
    """log(max(m @ filterbank, floor)).

    Accepts a numpy array / :class:`MagnitudeSpectrum`-like array or an
    autodiff :class:`~grfasr.autodiff.Tensor`; the latter stays in the graph.
    """
    fb = np.asarray(filterbank, dtype=np.float64)
    if isinstance(m, ad.Tensor):
        if m.shape[-1] != fb.shape[0]:
            raise ValueError(f"magnitude width {m.shape[-1]} != filterbank rows {fb.shape[0]}")
        return ad.log(ad.clamp_min(ad.matmul(m, fb), floor))
    m = np.asarray(m, dtype=np.float64)
    if m.shape[-1] != fb.shape[0]:
        raise ValueError(f"magnitude width {m.shape[-1]} != filterbank rows {fb.shape[0]}")
    return np.log(np.maximum(m @ fb, floor))


def _fit_noise(noise, n, rng):
    """Random crop (long noise) or tiling from a random offset (short noise)."""
    L = len(noise)
    if L >= n:
        off = int(rng.integers(0, L - n + 1))
        return noise[off:off + n].copy(), off
    off = int(rng.integers(0, L))
    return np.take(noise, (off + np.arange(n)) % L), off


def mix_at_snr(clean, noise, snr_db, rng_seed=0, headroom=0.99):
    """Add ``noise`` to ``clean`` so that 10 log10(E_clean / E_noise) = snr_db.

    ``snr_db=inf`` returns the clean signal unchanged. When the mixture would
    clip, noisy, clean and noise are scaled together (SNR is preserved) and
    the scaled clean signal is returned as the supervision target.
    """
    if clean.sample_rate != noise.sample_rate:
        raise DataError("clean and noise sample rates differ")
    if clean.energy <= 0.0:
        raise DataError("clean signal has zero energy")
    if np.isinf(snr_db) and snr_db > 0:
        zero = Waveform(np.zeros(len(clean)), clean.sample_rate)
        return Mixture(Waveform(clean.samples.copy(), clean.sample_rate), clean, zero, float("inf"))
    if noise.energy <= 0.0:
        raise DataError("noise signal has zero energy")
    rng = np.random.default_rng(rng_seed)
    seg, off = _fit_noise(noise.samples, len(clean), rng)
    e_seg = float(np.dot(seg, seg))
    if e_seg <= 0.0:
        raise DataError("selected noise segment is silent")
    scale = np.sqrt(clean.energy / (e_seg * 10.0 ** (snr_db / 10.0)))
    n = seg * scale
    x = clean.samples.copy()
    y = x + n
    gain = 1.0
    peak = float(np.max(np.abs(y)))
    if peak > headroom:
        gain = headroom / peak
        x *= gain
        n *= gain
        y = x + n
    sr = clean.sample_rate
    return Mixture(Waveform(y, sr), Waveform(x, sr), Waveform(n, sr), float(snr_db), off, gain)


def measured_snr_db(clean, noisy):
    """10 log10(E_clean / E_(noisy - clean))."""
    c = np.asarray(getattr(clean, "samples", clean), dtype=np.float64)
    y = np.asarray(getattr(noisy, "samples", noisy), dtype=np.float64)
    r = y - c
    e_r = float(np.dot(r, r))
    if e_r == 0.0:
        return float("inf")
    return float(10.0 * np.log10(np.dot(c, c) / e_r))


def rms(x):
    x = np.asarray(getattr(x, "samples", x), dtype=np.float64)
    return float(np.sqrt(np.mean(x * x))) if x.size else 0.0


def snr_fuse(original, enhanced, target_db=20.0):
    """enhanced + g * original, with 20 log10(rms(enhanced) / rms(g * original)) = target_db."""
    if len(original) != len(enhanced) or original.sample_rate != enhanced.sample_rate:
        raise DataError("snr_fuse needs equal lengths and sample rates")
    r_e = rms(enhanced)
    if r_e == 0.0:
        raise DataError("enhanced signal is silent")
    r_o = rms(original)
    if r_o == 0.0:
        return Waveform(enhanced.samples.copy(), enhanced.sample_rate)
    g = r_e / (r_o * 10.0 ** (target_db / 20.0))
    return Waveform(enhanced.samples + g * original.samples, enhanced.sample_rate)


# -- WAV I/O (RIFF PCM16 mono) ------------------------------------------


def read_wav(path):
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1:
            raise DataError(f"{path}: expected mono audio, got {fh.getnchannels()} channels")
        if fh.getsampwidth() != 2:
            raise DataError(f"{path}: expected 16-bit PCM")
        sr = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    return Waveform(pcm / 32768.0, sr)


def write_wav(path, w):
    pcm = np.clip(np.round(np.clip(w.samples, -1.0, 1.0) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate)
        fh.writeframes(pcm.tobytes())
