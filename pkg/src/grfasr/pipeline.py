"""Training phases, joint loss, SNR-grid evaluation, mode comparison and spectrogram dumps."""

import csv
import dataclasses
import functools
import io
import json
import logging
import math
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import dsp
from .asr import SpeechTransformer, Vocabulary, asr_loss, beam_decode, spec_augment_mask
from .autodiff import Module, Tensor
from .corpus import FeaturePipeline, Utterance, load_utterance, read_manifest
from .dsp import DataError
from .enhancement import EnhancementNet, sa_loss
from .fusion import FusionNet
from .metrics import edit_distance

log = logging.getLogger(__name__)

PHASES = ("enh", "asr", "joint")
SNR_CONDITIONS = ("0", "5", "10", "15", "20")
REFERENCE_ORDERING_0DB = (("grf", 21.98), ("concat", 23.65), ("enhanced_only", 25.17))


class DivergenceError(RuntimeError):
    """Loss stayed non-finite for too many consecutive steps."""


class PhaseOrderError(RuntimeError):
    """A phase was started without the checkpoints it depends on."""


# -- model -----------------------------------------------------------------


def _rng(seed, salt):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(salt)]))


class JointModel(Module):
    """Enhancement front end, fusion block and transformer recogniser in one module tree.

    Parameter names are prefixed ``enh.``, ``fus.`` and ``asr.``. In ``noisy_only``
    mode there is no enhancement network.
    """

    def __init__(self, cfg, vocab_size, seed=None):
        super().__init__()
        seed = cfg.seed if seed is None else seed
        self.cfg = cfg
        self.features = FeaturePipeline(None, cfg.features)
        enh_cfg = dataclasses.replace(cfg.enh, input_dim=cfg.features.fft_size // 2 + 1)
        fus_cfg = dataclasses.replace(cfg.fusion, feat_dim=cfg.features.n_mels, mode=cfg.mode)
        asr_cfg = dataclasses.replace(cfg.asr, input_dim=fus_cfg.output_dim, vocab=vocab_size)
        if cfg.mode != "noisy_only":
            self.enh = EnhancementNet(enh_cfg, _rng(seed, 1))
        else:
            self.enh = None
        self.fus = FusionNet(fus_cfg, _rng(seed, 2))
        self.asr = SpeechTransformer(asr_cfg, _rng(seed, 3))
        self.augment_rng = _rng(seed, 4)

    def phase_parameters(self, phase):
        if phase == "enh":
            if self.enh is None:
                raise ValueError("noisy_only mode has no enhancement network")
            return self.enh.parameters()
        if phase == "asr":
            return self.fus.parameters() + self.asr.parameters()
        return self.parameters()

    def enhance(self, noisy_mag):
        return self.enh(noisy_mag)

    def streams(self, utt, phase):
        """Return ``(noisy_fbank, enhanced_fbank, enh_loss)``; ``enh_loss`` may be None."""
        if phase == "asr":
            clean = Tensor(utt.clean_fbank)
            return clean, clean, None
        noisy = Tensor(utt.noisy_fbank)
        if self.enh is None:
            return noisy, noisy, None
        mask, enhanced = self.enh(utt.noisy_mag)
        return noisy, self.features.fbank(enhanced), sa_loss(mask, utt.noisy_mag, utt.clean_mag)

    def recogniser_input(self, utt, phase="joint"):
        noisy, enhanced, enh_loss = self.streams(utt, phase)
        if self.training and self.cfg.augment == "specaugment":
            keep = spec_augment_mask(*noisy.shape, self.cfg.time_mask, self.cfg.freq_mask, self.augment_rng)
            noisy = ad.masked_fill(noisy, keep, 0.0)
            enhanced = ad.masked_fill(enhanced, keep, 0.0)
        return self.fus(noisy, enhanced), enh_loss

    def losses(self, utt, phase, alpha=1.0):
        """Return ``(total, asr_loss, enh_loss)`` tensors for one utterance."""
        if phase == "enh":
            mask, _ = self.enh(utt.noisy_mag)
            l_enh = sa_loss(mask, utt.noisy_mag, utt.clean_mag)
            return l_enh, None, l_enh
        feats, l_enh = self.recogniser_input(utt, phase)
        l_asr = asr_loss(feats, utt.tokens, self.asr)
        if phase == "asr" or l_enh is None:
            return l_asr, l_asr, None
        return joint_loss(l_asr, l_enh, alpha), l_asr, l_enh

    def transcribe(self, utt, beam=5, length_norm=True, vocab=None):
        was = self.training
        self.eval()
        try:
            with ad.no_grad():
                feats, _ = self.recogniser_input(utt, "joint")
                hyp = beam_decode(feats, self.asr, beam=beam, length_norm=length_norm)
        finally:
            self.train(was)
        return hyp if vocab is None else vocab.decode(hyp.ids)


def joint_loss(asr_loss_value, enh_loss_value, alpha):
    """asr + alpha * enh. Works on tensors or plain floats; non-finite input raises."""
    a = float(getattr(asr_loss_value, "data", asr_loss_value))
    e = float(getattr(enh_loss_value, "data", enh_loss_value))
    if not (math.isfinite(a) and math.isfinite(e)):
        raise FloatingPointError(f"non-finite loss (asr={a}, enh={e})")
    if isinstance(asr_loss_value, Tensor) or isinstance(enh_loss_value, Tensor):
        return ad.as_tensor(asr_loss_value) + ad.as_tensor(enh_loss_value) * alpha
    return asr_loss_value + alpha * enh_loss_value


# -- data ------------------------------------------------------------------


@dataclass
class Dataset:
    cfg: object
    vocab: Vocabulary
    manifest: list
    root: Path
    cache: dict = field(default_factory=dict)

    @classmethod
    def open(cls, cfg):
        root = Path(cfg.paths.data_dir)
        manifest_path = root / cfg.paths.manifest
        vocab_path = root / cfg.paths.vocab
        for p in (manifest_path, vocab_path):
            if not p.exists():
                raise DataError(f"missing {p}")
        return cls(cfg, Vocabulary.load(vocab_path), read_manifest(manifest_path), root)

    @functools.cached_property
    def pipeline(self):
        return FeaturePipeline(self.vocab, self.cfg.features)

    def utterance(self, entry):
        if entry.id not in self.cache:
            self.cache[entry.id] = load_utterance(entry, self.pipeline, self.root)
        return self.cache[entry.id]

    def entries(self, split, noisy=None):
        out = [e for e in self.manifest if e.split == split]
        if noisy is not None:
            out = [e for e in out if e.is_noisy == noisy]
        return out

    def phase_entries(self, phase):
        if phase == "asr":
            return self.entries("train", noisy=False)
        if phase == "enh":
            return self.entries("train")
        return self.entries("train") if self.cfg.mct else self.entries("train", noisy=True)

    def by_id(self, uid):
        for e in self.manifest:
            if e.id == uid:
                return e
        raise DataError(f"unknown utterance id {uid!r}")


# -- training --------------------------------------------------------------


@dataclass
class PhaseResult:
    phase: str
    steps: int
    final_loss: float
    losses: list
    checkpoint: Path = None


def _finite(t):
    return t is None or math.isfinite(float(t.data))


def _value(t):
    return None if t is None else float(t.data)


def phase_steps(cfg, phase):
    return {"enh": cfg.train.enh_steps, "asr": cfg.train.asr_steps, "joint": cfg.train.joint_steps}[phase]


def run_phase(model, phase, data, cfg, steps=None, log_path=None, ckpt_dir=None, seed=None):
    """Train ``model`` for one phase with Adam + Noam; returns a :class:`PhaseResult`."""
    if phase not in PHASES:
        raise ValueError(f"unknown phase {phase!r}")
    seed = cfg.seed if seed is None else seed
    steps = phase_steps(cfg, phase) if steps is None else steps
    entries = data.phase_entries(phase)
    if not entries:
        raise DataError(f"no training entries for phase {phase}")
    params = model.phase_parameters(phase)
    state = ad.OptimizerState(base_factor=cfg.train.lr_factor, warmup_steps=cfg.train.warmup,
                              model_dim=cfg.asr.d_model)
    order_rng = _rng(seed, 10 + PHASES.index(phase))
    order = []
    B = cfg.train.batch_size
    bad_streak = 0
    losses = []
    model.train()
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for step in range(1, steps + 1):
            for p in params:
                p.grad = None
            totals, asr_vals, enh_vals = [], [], []
            finite = True
            for _ in range(B):
                if not order:
                    order = [int(i) for i in order_rng.permutation(len(entries))][::-1]
                utt = data.utterance(entries[order.pop()])
                try:
                    total, l_asr, l_enh = model.losses(utt, phase, cfg.alpha)
                except FloatingPointError:
                    finite = False
                    break
                if not (_finite(total) and _finite(l_asr) and _finite(l_enh)):
                    finite = False
                    break
                (total * (1.0 / B)).backward()
                totals.append(_value(total))
                asr_vals.append(_value(l_asr))
                enh_vals.append(_value(l_enh))
            if not finite:
                bad_streak += 1
                log.warning("%s step %d: non-finite loss, batch skipped", phase, step)
                if bad_streak >= cfg.train.nan_patience:
                    raise DivergenceError(f"{phase}: loss non-finite for {bad_streak} consecutive steps")
                continue
            bad_streak = 0
            ad.clip_grad_norm(params, cfg.train.clip_norm)
            lr = ad.adam_noam_step(state, params)
            loss = float(np.mean(totals))
            losses.append(loss)
            if log_fh and (step % cfg.train.log_every == 0 or step == steps):
                rec = {
                    "phase": phase,
                    "step": step,
                    "L_ASR": None if asr_vals[0] is None else float(np.mean(asr_vals)),
                    "L_Enh": None if enh_vals[0] is None else float(np.mean(enh_vals)),
                    "L": loss,
                    "lr": lr,
                    "time": time.time(),
                }
                log_fh.write(json.dumps(rec) + "\n")
                log_fh.flush()
            if ckpt_dir and cfg.train.checkpoint_every and step % cfg.train.checkpoint_every == 0:
                save_model(model, Path(ckpt_dir) / f"{phase}_step{step}.grf", phase)
    finally:
        if log_fh:
            log_fh.close()
        for p in params:
            p.grad = None
    model.eval()
    ckpt = None
    if ckpt_dir:
        ckpt = Path(ckpt_dir) / f"{phase}.grf"
        save_model(model, ckpt, phase)
    return PhaseResult(phase, steps, losses[-1] if losses else float("nan"), losses, ckpt)


PHASE_PREFIXES = {"enh": ("enh.",), "asr": ("fus.", "asr."), "joint": ("",)}


def save_model(model, path, phase="joint"):
    """Write the tensors a phase trains; pretraining checkpoints hold only their own submodules."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    keep = PHASE_PREFIXES[phase]
    ad.save_checkpoint([(n, p) for n, p in model.named_parameters() if n.startswith(keep)], path)


def build_model(cfg, data, seed=None):
    return JointModel(cfg, len(data.vocab), seed)


def init_checkpoints(out_dir):
    out = Path(out_dir)
    return out / "enh.grf", out / "asr.grf"


def train(cfg, phases=PHASES, data=None, out_dir=None, from_scratch=False, seed=None, reuse_enh=None):
    """Run the requested phases in order, chaining through checkpoints in ``out_dir``.

    The joint phase starts from ``enh.grf`` and ``asr.grf`` (enhancement and
    clean-data recogniser); without them it refuses unless ``from_scratch``.
    Every phase starts from a freshly seeded model so results do not depend
    on which phases ran in the same process.

    Enhancement pretraining does not depend on the fusion mode, so
    ``reuse_enh`` may name an ``enh.grf`` from a run with the same seed and
    data; it is copied instead of retrained.
    """
    cfg.validate()
    data = data or Dataset.open(cfg)
    seed = cfg.seed if seed is None else seed
    out = Path(out_dir or cfg.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    enh_ckpt, asr_ckpt = init_checkpoints(out)
    results = {}
    for phase in phases:
        model = build_model(cfg, data, seed)
        if phase == "enh" and model.enh is None:
            log.info("noisy_only mode: skipping enhancement pretraining")
            continue
        if phase == "enh" and reuse_enh is not None:
            shutil.copyfile(reuse_enh, enh_ckpt)
            continue
        if phase == "joint":
            needed = [asr_ckpt] + ([enh_ckpt] if model.enh is not None else [])
            missing = [p for p in needed if not p.exists()]
            if missing and not from_scratch:
                raise PhaseOrderError(
                    "joint training needs init checkpoints " + ", ".join(str(p) for p in missing)
                    + " (run pretrain-enh / pretrain-asr or pass --from-scratch)")
            if not missing:
                if model.enh is not None:
                    ad.load_into(model, enh_ckpt, prefix="enh.")
                ad.load_into(model, asr_ckpt, prefix="fus.")
                ad.load_into(model, asr_ckpt, prefix="asr.")
        results[phase] = run_phase(model, phase, data, cfg, log_path=out / "train_log.jsonl",
                                   ckpt_dir=out, seed=seed)
    return results


def load_model(cfg, data, checkpoint, seed=None):
    model = build_model(cfg, data, seed)
    try:
        ad.load_into(model, checkpoint, strict=True)
    except ad.CheckpointError as exc:
        raise DataError(f"{checkpoint}: {exc}") from exc
    model.eval()
    return model


# -- evaluation ------------------------------------------------------------


@dataclass
class ResultTable:
    """CER percentages keyed by ``(model_tag, condition)``."""

    rows: dict = field(default_factory=dict)

    def add(self, tag, condition, value):
        self.rows[(tag, str(condition))] = float(value)

    def tags(self):
        return list(dict.fromkeys(t for t, _ in self.rows))

    def avg(self, tag):
        vals = [self.rows[(tag, c)] for c in SNR_CONDITIONS if (tag, c) in self.rows]
        if len(vals) != len(SNR_CONDITIONS):
            raise ValueError(f"{tag}: AVG needs all of {SNR_CONDITIONS}")
        return float(np.mean(vals))

    def get(self, tag, condition):
        if condition == "AVG":
            return self.avg(tag)
        return self.rows[(tag, str(condition))]

    def columns(self):
        present = {c for _, c in self.rows}
        cols = [c for c in SNR_CONDITIONS if c in present]
        cols += sorted(present - set(SNR_CONDITIONS) - {"clean"})
        if "clean" in present:
            cols.append("clean")
        return cols

    def _records(self):
        cols = self.columns()
        with_avg = all(c in cols for c in SNR_CONDITIONS)
        header = ["model"] + cols + (["AVG"] if with_avg else [])
        body = []
        for tag in self.tags():
            row = [tag] + [self.rows.get((tag, c)) for c in cols]
            if with_avg:
                row.append(self.avg(tag))
            body.append(row)
        return header, body

    def to_csv(self):
        header, body = self._records()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in body:
            w.writerow([row[0]] + ["" if v is None else f"{v:.2f}" for v in row[1:]])
        return buf.getvalue()

    def to_text(self):
        header, body = self._records()
        cells = [header] + [[r[0]] + ["-" if v is None else f"{v:.2f}" for v in r[1:]] for r in body]
        widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
        lines = ["  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths)))
                 for row in cells]
        return "\n".join(lines) + "\n"


def evaluate(model, data, cfg, split="test", tag=None, beam=None, snr_fuse_db=None, entries=None):
    """Decode every ``split`` entry and tabulate corpus CER per SNR condition.

    With ``snr_fuse_db`` the enhanced magnitude is resynthesised with the noisy
    phase and the noisy waveform is added back at that enhanced-to-noisy ratio
    before recognition.
    """
    beam = cfg.beam if beam is None else beam
    tag = tag or cfg.mode
    entries = data.entries(split) if entries is None else entries
    if not entries:
        raise DataError(f"no {split} entries to evaluate")
    edits, totals = {}, {}
    hyps = {}
    for e in entries:
        utt = data.utterance(e)
        if snr_fuse_db is not None and model.enh is not None:
            utt = snr_fused_utterance(model, utt, data, snr_fuse_db)
        text = model.transcribe(utt, beam=beam, length_norm=cfg.length_norm, vocab=data.vocab)
        hyps[e.id] = text
        c = e.condition
        edits[c] = edits.get(c, 0) + edit_distance(text, e.transcript)
        totals[c] = totals.get(c, 0) + len(e.transcript)
    table = ResultTable()
    for c in edits:
        if totals[c] == 0:
            raise DataError(f"condition {c}: empty references")
        table.add(tag, c, 100.0 * edits[c] / totals[c])
    table.hypotheses = hyps
    return table


def enhanced_waveform(model, utt):
    """Resynthesise the enhanced magnitude with the noisy phase."""
    with ad.no_grad():
        _, enhanced = model.enhance(utt.noisy_mag)
    spec = dataclasses.replace(utt.noisy_spec, frames=enhanced.data * np.exp(1j * utt.noisy_spec.phase))
    return dsp.istft(spec)


def snr_fused_utterance(model, utt, data, target_db):
    """Noisy waveform added to the enhanced waveform at ``target_db`` (enhanced over noisy)."""
    fused = dsp.snr_fuse(dsp.istft(utt.noisy_spec), enhanced_waveform(model, utt), target_db)
    spec = data.pipeline.spectrogram(fused)
    if spec.frames.shape != utt.noisy_spec.frames.shape:
        raise DataError(f"{utt.id}: resynthesis changed the frame count")
    return dataclasses.replace(utt, noisy_spec=spec, noisy_fbank=data.pipeline.fbank(np.abs(spec.frames)))


def mean_enhancement_loss(model, data, entries):
    """Average spectral-magnitude loss over ``entries`` in eval mode."""
    model.eval()
    with ad.no_grad():
        return float(np.mean([_value(model.losses(data.utterance(e), "enh")[0]) for e in entries]))


def snr_improvement_db(model, data, entries):
    """Per-utterance output SNR minus input SNR, both against the clean reference waveform."""
    model.eval()
    gains = []
    for e in entries:
        if not e.is_noisy:
            raise DataError(f"{e.id} has no noisy version")
        utt = data.utterance(e)
        clean = dsp.read_wav(data.root / e.clean_path).samples
        noisy = dsp.read_wav(data.root / e.audio_path).samples
        out = enhanced_waveform(model, utt).samples
        n = min(len(out), len(clean))
        gains.append(dsp.measured_snr_db(clean[:n], out[:n]) - dsp.measured_snr_db(clean[:n], noisy[:n]))
    return gains


# -- mode comparison -------------------------------------------------------


@dataclass
class ComparisonReport:
    modes: list
    seeds: list
    tables: dict  # (mode, seed) -> ResultTable
    condition: str = "0"

    def cer(self, mode, seed, condition=None):
        return self.tables[(mode, seed)].get(mode, condition or self.condition)

    def mean(self, mode, condition=None):
        return float(np.mean([self.cer(mode, s, condition) for s in self.seeds]))

    def pairwise(self, condition=None):
        """``(a, b) -> mean over seeds of sign(CER_a - CER_b)``; negative means ``a`` is better."""
        out = {}
        for i, a in enumerate(self.modes):
            for b in self.modes[i + 1:]:
                if a == b:
                    continue
                signs = [np.sign(self.cer(a, s, condition) - self.cer(b, s, condition)) for s in self.seeds]
                out[(a, b)] = float(np.mean(signs))
        return out

    def wins(self, a, b, condition=None):
        """Seeds on which ``a`` has strictly lower CER than ``b``."""
        return sum(self.cer(a, s, condition) < self.cer(b, s, condition) for s in self.seeds)

    def to_text(self):
        lines = [f"per-seed CER (%) at condition {self.condition}:"]
        for m in self.modes:
            per = "  ".join(f"seed{s}={self.cer(m, s):.2f}" for s in self.seeds)
            lines.append(f"  {m:<14} {per}  mean={self.mean(m):.2f}")
        has_avg = all(self._has_avg(m, s) for m in self.modes for s in self.seeds)
        if has_avg:
            lines.append("mean AVG CER (%) over the five SNRs:")
            for m in self.modes:
                lines.append(f"  {m:<14} {self.mean(m, 'AVG'):.2f}")
        lines.append("pairwise mean sign(CER_a - CER_b) over seeds (negative: a better):")
        for (a, b), v in self.pairwise().items():
            lines.append(f"  {a} vs {b}: {v:+.2f}")
        if "grf" in self.modes and "enhanced_only" in self.modes:
            lines.append(f"grf strictly better than enhanced_only on "
                         f"{self.wins('grf', 'enhanced_only')}/{len(self.seeds)} seeds")
        ref = " < ".join(f"{m} ({v:.2f})" for m, v in REFERENCE_ORDERING_0DB)
        lines.append(f"reference ordering at 0 dB: {ref}")
        return "\n".join(lines) + "\n"

    def _has_avg(self, mode, seed):
        try:
            self.tables[(mode, seed)].avg(mode)
            return True
        except ValueError:
            return False


def compare_modes(cfg, modes, seeds, data=None, out_dir=None, condition="0", progress=None):
    """Train and evaluate every mode for every seed under identical data.

    A failing sub-run raises after the tables finished so far are written to
    ``out_dir``.
    """
    if not seeds:
        raise ValueError("compare_modes needs at least one seed")
    data = data or Dataset.open(cfg)
    out = Path(out_dir or cfg.paths.out_dir)
    tables = {}
    done = {}
    try:
        for seed in seeds:
            enh_source = None
            for mode in modes:
                if mode in done.get(seed, {}):
                    tables[(mode, seed)] = done[seed][mode]
                    continue
                run_cfg = dataclasses.replace(cfg, mode=mode, seed=seed)
                run_dir = out / f"{mode}_seed{seed}"
                train(run_cfg, data=data, out_dir=run_dir, seed=seed, reuse_enh=enh_source)
                if mode != "noisy_only" and enh_source is None:
                    enh_source = run_dir / "enh.grf"
                model = load_model(run_cfg, data, run_dir / "joint.grf", seed)
                table = evaluate(model, data, run_cfg, tag=mode)
                tables[(mode, seed)] = table
                done.setdefault(seed, {})[mode] = table
                (run_dir / "results.csv").write_text(table.to_csv())
                if progress:
                    progress(mode, seed, table)
    finally:
        if tables:
            out.mkdir(parents=True, exist_ok=True)
            with open(out / "compare_tables.csv", "w", encoding="utf-8") as fh:
                for (mode, seed), t in tables.items():
                    fh.write(f"# mode={mode} seed={seed}\n{t.to_csv()}")
    report = ComparisonReport(list(dict.fromkeys(modes)), list(seeds), tables, condition)
    (out / "compare_report.txt").write_text(report.to_text())
    return report


# -- spectrogram dumps -----------------------------------------------------


def log_magnitude(mag, floor=dsp.LOG_FLOOR):
    return np.log(np.maximum(mag, floor))


def write_pgm(path, matrix, lo=None, hi=None):
    """Binary 8-bit PGM; frequency runs bottom-to-top, time left-to-right."""
    m = np.asarray(matrix, dtype=np.float64).T[::-1]
    lo = m.min() if lo is None else lo
    hi = m.max() if hi is None else hi
    scaled = np.zeros_like(m) if hi <= lo else (m - lo) / (hi - lo)
    pixels = np.clip(np.round(scaled * 255.0), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def dump_spectrograms(model, data, utterance_id, out_dir):
    """Write noisy / enhanced / clean log-magnitudes as ``.npy`` and ``.pgm``; returns the paths.

    All three images share one intensity scale whose minimum is the log floor,
    so bins masked to zero render as black.
    """
    entry = data.by_id(utterance_id)
    utt = data.utterance(entry)
    if model.enh is None:
        raise ValueError("noisy_only models have no enhancement output to dump")
    with ad.no_grad():
        was = model.training
        model.eval()
        _, enhanced = model.enhance(utt.noisy_mag)
        model.train(was)
    mats = {
        "noisy": log_magnitude(utt.noisy_mag),
        "enhanced": log_magnitude(enhanced.data),
        "clean": log_magnitude(utt.clean_mag),
    }
    hi = max(m.max() for m in mats.values())
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, m in mats.items():
        npy = out / f"{utterance_id}.{name}.npy"
        pgm = out / f"{utterance_id}.{name}.pgm"
        np.save(npy, m)
        write_pgm(pgm, m, lo=math.log(dsp.LOG_FLOOR), hi=hi)
        paths[name] = (npy, pgm)
    return paths
