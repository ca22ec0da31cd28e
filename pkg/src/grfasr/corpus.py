"""Corpus layer: synthetic tone-word corpus, noise generation, SNR-conditioned
set construction, JSONL manifests, and per-utterance feature loading."""

import json
import logging
import os
import string
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import dsp
from .asr import Vocabulary
from .dsp import DataError, Waveform

log = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")
MANIFEST_FIELDS = ("id", "audio_path", "transcript", "split", "snr_db", "noise_id")

# Tone-word layout: token k has its fundamental on FFT bin BASE_BIN + BIN_STEP*k
# (at fft_size 512). With these constants no harmonic of one token lands on
# a harmonic of another.
BASE_BIN = 8
BIN_STEP = 3
HARMONIC_AMPS = (1.0, 0.5, 0.25)
RAMP_S = 0.05


@dataclass
class ManifestEntry:
    id: str
    audio_path: str
    transcript: str
    split: str
    snr_db: float = None
    noise_id: str = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise DataError(f"entry {self.id}: unknown split {self.split!r}")
        if (self.snr_db is None) != (self.noise_id is None):
            raise DataError(f"entry {self.id}: snr_db and noise_id must be set together")

    @property
    def is_noisy(self):
        return self.snr_db is not None

    @property
    def clean_path(self):
        """Path of the clean supervision signal paired with this entry."""
        return clean_pair_path(self.audio_path) if self.is_noisy else self.audio_path

    @property
    def condition(self):
        if self.snr_db is None:
            return "clean"
        s = float(self.snr_db)
        return str(int(s)) if s.is_integer() else f"{s:g}"


def clean_pair_path(audio_path):
    root, _ = os.path.splitext(audio_path)
    return root + ".clean.wav"


@dataclass
class SyntheticSpec:
    vocab_size: int = 8
    utterances: int = 20
    tokens_per_utt: tuple = (3, 6)
    token_duration_s: float = 0.16
    seed: int = 7
    dev_utterances: int = 0
    test_utterances: int = 0
    sample_rate: int = dsp.SAMPLE_RATE
    fft_size: int = dsp.FFT_SIZE
    gain_range: tuple = (0.08, 0.16)

    def __post_init__(self):
        if not 2 <= self.vocab_size <= 26:
            raise ValueError("vocab_size must lie in [2, 26]")
        if self.utterances < 1:
            raise ValueError("need at least one utterance")
        lo, hi = self.tokens_per_utt
        if not 1 <= lo <= hi:
            raise ValueError("tokens_per_utt must be a range 1 <= lo <= hi")


def token_symbols(vocab_size):
    return list(string.ascii_lowercase[:vocab_size])


def fundamental_bin(k):
    return BASE_BIN + BIN_STEP * k


def token_signature(k, n_samples, sample_rate=dsp.SAMPLE_RATE, fft_size=dsp.FFT_SIZE):
    """Deterministic tone word for token ``k``: fundamental + 2 harmonics with cosine ramps."""
    f0 = fundamental_bin(k) * sample_rate / fft_size
    if len(HARMONIC_AMPS) * f0 >= sample_rate / 2:
        raise ValueError(f"token {k} harmonics exceed Nyquist")
    t = np.arange(n_samples) / sample_rate
    sig = sum(a * np.sin(2 * np.pi * (h + 1) * f0 * t) for h, a in enumerate(HARMONIC_AMPS))
    ramp = min(int(round(RAMP_S * sample_rate)), n_samples // 2)
    if ramp:
        env = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        sig[:ramp] *= env
        sig[n_samples - ramp:] *= env[::-1]
    return sig / sum(HARMONIC_AMPS)


def synthesize(transcript, symbols, token_duration_s, sample_rate=dsp.SAMPLE_RATE, gain=0.1,
               fft_size=dsp.FFT_SIZE):
    n = int(round(token_duration_s * sample_rate))
    index = {s: k for k, s in enumerate(symbols)}
    parts = [token_signature(index[ch], n, sample_rate, fft_size) for ch in transcript]
    return Waveform(gain * np.concatenate(parts), sample_rate)


def _split_plan(spec):
    return (["train"] * spec.utterances + ["dev"] * spec.dev_utterances
            + ["test"] * spec.test_utterances)


def generate_synthetic_corpus(spec, out_dir):
    """Write WAVs, ``manifest.jsonl`` and ``vocab.txt`` under ``out_dir``; returns the manifest."""
    out = Path(out_dir)
    try:
        (out / "wav").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {out}: {exc}") from exc
    symbols = token_symbols(spec.vocab_size)
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.tokens_per_utt
    entries = []
    counters = {s: 0 for s in SPLITS}
    for split in _split_plan(spec):
        n_tok = int(rng.integers(lo, hi + 1))
        transcript = "".join(symbols[int(k)] for k in rng.integers(0, len(symbols), size=n_tok))
        gain = float(rng.uniform(*spec.gain_range))
        w = synthesize(transcript, symbols, spec.token_duration_s, spec.sample_rate, gain, spec.fft_size)
        uid = f"{split}{counters[split]:04d}"
        counters[split] += 1
        rel = os.path.join("wav", uid + ".wav")
        dsp.write_wav(out / rel, w)
        entries.append(ManifestEntry(uid, rel, transcript, split))
    write_manifest(entries, out / "manifest.jsonl")
    Vocabulary(symbols).save(out / "vocab.txt")
    return entries


def generate_noise_corpus(out_dir, seed=0, duration_s=4.0, sample_rate=dsp.SAMPLE_RATE, level=0.1):
    """White, pink and babble-like (random tone mixture) noise WAVs; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    white = rng.standard_normal(n)
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / sample_rate)
    spec[1:] /= np.sqrt(f[1:])
    spec[0] = 0.0
    pink = np.fft.irfft(spec, n=n)
    t = np.arange(n) / sample_rate
    babble = np.zeros(n)
    for _ in range(24):
        freq = rng.uniform(150.0, 3000.0)
        am = 0.5 + 0.5 * np.sin(2 * np.pi * rng.uniform(0.5, 4.0) * t + rng.uniform(0, 2 * np.pi))
        babble += am * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    paths = []
    for name, sig in (("white", white), ("pink", pink), ("babble", babble)):
        sig = level * sig / dsp.rms(sig)
        path = out / f"{name}.wav"
        dsp.write_wav(path, Waveform(sig, sample_rate))
        paths.append(path)
    return paths


def _load_noises(noise_dir):
    paths = sorted(Path(noise_dir).glob("*.wav"))
    if not paths:
        raise DataError(f"no WAV files in noise directory {noise_dir}")
    return [(p.stem, dsp.read_wav(p)) for p in paths]


def _entry_rng(seed, index, salt):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index), int(salt)]))


def build_noisy_sets(clean_manifest, noise_dir, train_snr_range=(0.0, 20.0),
                     eval_snrs=(0.0, 5.0, 10.0, 15.0, 20.0), seed=0, data_root=".", out_subdir="noisy"):
    """Expand a clean manifest into a mixed one.

    Train entries get one mixture each at a uniform SNR from ``train_snr_range``;
    dev/test entries get one mixture per SNR in ``eval_snrs``. Every clean entry
    is retained. Audio paths are relative to ``data_root``.
    """
    root = Path(data_root)
    noises = _load_noises(noise_dir)
    (root / out_subdir).mkdir(parents=True, exist_ok=True)
    lo, hi = train_snr_range
    out = []
    for idx, e in enumerate(clean_manifest):
        if e.is_noisy:
            continue
        out.append(e)
        clean = dsp.read_wav(root / e.audio_path)
        if any(nw.sample_rate != clean.sample_rate for _, nw in noises):
            raise DataError(f"noise sample rate differs from {e.id}")
        if e.split == "train":
            rng = _entry_rng(seed, idx, 0)
            jobs = [(f"{e.id}_mix", float(rng.uniform(lo, hi)), rng)]
        else:
            jobs = []
            for k, snr in enumerate(eval_snrs):
                rng = _entry_rng(seed, idx, k + 1)
                jobs.append((f"{e.id}_snr{float(snr):g}", float(snr), rng))
        for uid, snr, rng in jobs:
            noise_id, noise = noises[int(rng.integers(0, len(noises)))]
            mix = dsp.mix_at_snr(clean, noise, snr, rng_seed=int(rng.integers(0, 2**31)))
            rel = os.path.join(out_subdir, uid + ".wav")
            dsp.write_wav(root / rel, mix.noisy)
            dsp.write_wav(root / clean_pair_path(rel), mix.clean)
            out.append(ManifestEntry(uid, rel, e.transcript, e.split, snr, noise_id))
    return out


# -- manifest I/O --------------------------------------------------------


def write_manifest(entries, path):
    ids = [e.id for e in entries]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate manifest ids")
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps({k: getattr(e, k) for k in MANIFEST_FIELDS}, ensure_ascii=False) + "\n")


def read_manifest(path):
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                entries.append(ManifestEntry(**{k: rec.get(k) for k in MANIFEST_FIELDS}))
            except (json.JSONDecodeError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad manifest line ({exc})") from exc
    ids = [e.id for e in entries]
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate manifest ids")
    return entries


# -- features ------------------------------------------------------------

CMVN_FLOOR = 1e-2


def cmvn(x, floor=CMVN_FLOOR):
    """Per-utterance mean/variance normalisation over time; differentiable for tensors."""
    if isinstance(x, ad.Tensor):
        xc = x - x.mean(axis=0, keepdims=True)
        var = (xc * xc).mean(axis=0, keepdims=True)
        return xc / ad.sqrt(var + floor)
    x = np.asarray(x, dtype=np.float64)
    xc = x - x.mean(axis=0, keepdims=True)
    return xc / np.sqrt((xc * xc).mean(axis=0, keepdims=True) + floor)


@dataclass
class FeatureConfig:
    sample_rate: int = dsp.SAMPLE_RATE
    frame_length_s: float = dsp.FRAME_LENGTH_S
    frame_shift_s: float = dsp.FRAME_SHIFT_S
    fft_size: int = dsp.FFT_SIZE
    n_mels: int = dsp.N_MELS


class FeaturePipeline:
    """STFT -> magnitude -> log-Fbank -> CMVN, plus transcript tokenisation."""

    def __init__(self, vocab, cfg=None):
        self.vocab = vocab
        self.cfg = cfg or FeatureConfig()
        self.filterbank = dsp.mel_filterbank(self.cfg.fft_size, self.cfg.n_mels, self.cfg.sample_rate)

    def spectrogram(self, w):
        if w.sample_rate != self.cfg.sample_rate:
            raise DataError(f"expected {self.cfg.sample_rate} Hz audio, got {w.sample_rate}")
        return dsp.stft(w, self.cfg.frame_length_s, self.cfg.frame_shift_s, self.cfg.fft_size)

    def fbank(self, mag):
        """Normalised log-Fbank of a magnitude array or tensor."""
        return cmvn(dsp.log_fbank(mag, self.filterbank))

    def tokens(self, text):
        return self.vocab.encode(text, on_unknown=lambda ch: log.warning("token %r not in vocabulary; using <unk>", ch))


@dataclass
class Utterance:
    id: str
    transcript: str
    tokens: list
    split: str
    snr_db: float
    noisy_spec: dsp.Spectrogram
    clean_spec: dsp.Spectrogram
    noisy_fbank: np.ndarray
    clean_fbank: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def noisy_mag(self):
        return np.abs(self.noisy_spec.frames)

    @property
    def clean_mag(self):
        return np.abs(self.clean_spec.frames)

    @property
    def condition(self):
        if self.snr_db is None:
            return "clean"
        s = float(self.snr_db)
        return str(int(s)) if s.is_integer() else f"{s:g}"


def load_utterance(entry, pipeline, data_root=".", noisy_override=None):
    root = Path(data_root)
    path = root / entry.audio_path
    if not path.exists():
        raise DataError(f"missing audio file {path}")
    noisy = dsp.read_wav(path) if noisy_override is None else noisy_override
    if entry.is_noisy:
        cpath = root / entry.clean_path
        if not cpath.exists():
            raise DataError(f"missing clean pair {cpath} for {entry.id}")
        clean = dsp.read_wav(cpath)
    else:
        clean = dsp.read_wav(path)
    ns = pipeline.spectrogram(noisy)
    cs = pipeline.spectrogram(clean)
    if ns.frames.shape != cs.frames.shape:
        raise DataError(f"{entry.id}: noisy/clean frame counts differ")
    return Utterance(
        id=entry.id,
        transcript=entry.transcript,
        tokens=pipeline.tokens(entry.transcript),
        split=entry.split,
        snr_db=entry.snr_db,
        noisy_spec=ns,
        clean_spec=cs,
        noisy_fbank=pipeline.fbank(np.abs(ns.frames)),
        clean_fbank=pipeline.fbank(np.abs(cs.frames)),
    )


def load_batch(manifest, ids, pipeline, data_root="."):
    """Load the listed entries as :class:`Utterance` objects (no padding)."""
    by_id = {e.id: e for e in manifest}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise DataError(f"unknown manifest id {missing[0]!r}")
    return [load_utterance(by_id[i], pipeline, data_root) for i in ids]


def spec_to_dict(spec):
    return asdict(spec)
