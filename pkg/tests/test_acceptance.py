"""Acceptance criteria; each test prints one PASS/FAIL line and asserts it."""

import time

import numpy as np
import pytest

import gradcases
import oracles
from grfasr import autodiff as ad
from grfasr import cli, corpus, dsp, pipeline
from grfasr.asr import attention, beam_decode, greedy_decode
from grfasr.autodiff import Tensor
from grfasr.config import ExperimentConfig
from grfasr.fusion import GrfBlock
from grfasr.metrics import cer, edit_distance
from test_asr import brute_force_best, micro_model
from test_cli import log_without_time, run_all, tree
from test_fusion import block_params

ORACLE_CASES = 100


@pytest.fixture(scope="module")
def default_corpus(tmp_path_factory):
    """The corpus every training criterion uses: default config, built through the CLI."""
    root = tmp_path_factory.mktemp("acceptance_corpus")
    assert cli.main(["gen-corpus", "--data", str(root)]) == 0
    assert cli.main(["mix", "--data", str(root)]) == 0
    return root


def default_config(data_dir, out_dir, **kw):
    cfg = ExperimentConfig(**kw)
    cfg.paths.data_dir = str(data_dir)
    cfg.paths.out_dir = str(out_dir)
    return cfg.validate()


def test_gradient_suite(criterion):
    start = time.perf_counter()
    errors = {}
    for name, case in {**gradcases.PRIMITIVES, **gradcases.COMPOSITES}.items():
        errors[name] = gradcases.max_error(case)
    micro = gradcases.max_error(gradcases.micro_model_case)
    elapsed = time.perf_counter() - start
    worst = max(errors, key=errors.get)
    ok = errors[worst] < 1e-6 and micro < 1e-5 and elapsed < 120
    criterion("gradient suite", ok,
              f"{len(errors)} cases, worst {worst} {errors[worst]:.1e}, micro-model {micro:.1e}, {elapsed:.0f} s")
    assert ok


def test_oracle_equivalence(criterion, rng):
    start = time.perf_counter()
    worst = {}

    errs = []
    for _ in range(ORACLE_CASES):
        din, dh, T = rng.integers(1, 6), rng.integers(1, 5), rng.integers(1, 5)
        block = GrfBlock(int(din), int(dh), rng)
        x, h = rng.standard_normal((T, din)), rng.standard_normal((T, dh))
        out = block(Tensor(x), Tensor(h)).data
        ref = np.array([oracles.grf_step(x[t], h[t], *block_params(block)) for t in range(T)])
        errs.append(np.max(np.abs(out - ref)))
    worst["grf step"] = (max(errs), 1e-12)

    errs = []
    for _ in range(ORACLE_CASES):
        din, dh, layers, T = (int(v) for v in rng.integers(1, 4, size=4))
        net = ad.BLSTM(din, dh, layers, rng)
        net.eval()
        x = rng.standard_normal((T + 1, din))
        ref = np.array(oracles.blstm(x.tolist(), oracles.blstm_params(net)))
        errs.append(np.max(np.abs(net(Tensor(x)).data - ref)))
    worst["blstm"] = (max(errs), 1e-12)

    errs = []
    for _ in range(ORACLE_CASES):
        n_mels = int(rng.integers(2, 10))
        fb = dsp.mel_filterbank(64, n_mels, 16000)
        mag = np.abs(rng.standard_normal((int(rng.integers(1, 4)), 33))) * rng.uniform(1e-3, 10)
        ref = np.array(oracles.log_fbank(mag.tolist(), fb.tolist()))
        errs.append(np.max(np.abs(dsp.log_fbank(mag, fb) - ref)))
    worst["log-fbank"] = (max(errs), 1e-10)

    errs = []
    for _ in range(ORACLE_CASES):
        tq, tk, d, dv = (int(v) for v in rng.integers(1, 6, size=4))
        q, k, v = rng.standard_normal((tq, d)), rng.standard_normal((tk, d)), rng.standard_normal((tk, dv))
        mask = rng.random((tq, tk)) > 0.3
        mask[:, 0] = True
        out = attention(Tensor(q), Tensor(k), Tensor(v), mask).data
        ref = np.array(oracles.attention(q.tolist(), k.tolist(), v.tolist(), mask.tolist()))
        errs.append(np.max(np.abs(out - ref)))
    worst["attention"] = (max(errs), 1e-12)

    errs = []
    for _ in range(ORACLE_CASES * 10):
        ref = "".join(rng.choice(list("abcde"), size=rng.integers(1, 12)))
        hyp = "".join(rng.choice(list("abcde"), size=rng.integers(0, 12)))
        dist = oracles.levenshtein(hyp, ref)
        errs.append(max(abs(edit_distance(hyp, ref) - dist), abs(cer(hyp, ref) - 100.0 * dist / len(ref))))
    worst["cer"] = (max(errs), 1e-12)

    elapsed = time.perf_counter() - start
    ok = all(e < tol for e, tol in worst.values()) and elapsed < 60
    criterion("oracle equivalence", ok,
              ", ".join(f"{k} {e:.1e}<{tol:.0e}" for k, (e, tol) in worst.items()) + f", {elapsed:.1f} s")
    assert ok


def test_dsp_suite(criterion, rng):
    round_trip = []
    for n in (512, 1000, 16000, 48123):
        w = dsp.Waveform(rng.standard_normal(n) * rng.uniform(0.01, 1.0))
        s = dsp.stft(w)
        back = dsp.istft(s)
        covered = (s.frames.shape[0] - 1) * s.hop_length + s.win_length
        round_trip.append(np.max(np.abs(back.samples[:covered] - w.samples[:covered])) / np.max(np.abs(w.samples)))
    snr_err = []
    for snr in (0, 5, 10, 15, 20):
        for seed in range(5):
            r = np.random.default_rng(seed)
            clean = dsp.Waveform(r.standard_normal(16000) * 0.1)
            noise = dsp.Waveform(r.standard_normal(40000) * 0.1)
            mix = dsp.mix_at_snr(clean, noise, snr, rng_seed=seed)
            snr_err.append(abs(dsp.measured_snr_db(mix.clean, mix.noisy) - snr))
    shape = dsp.mel_filterbank().shape
    ok = max(round_trip) < 1e-6 and max(snr_err) < 0.01 and shape == (257, 80)
    criterion("dsp suite", ok, f"round trip {max(round_trip):.1e} of peak, snr error {max(snr_err):.1e} dB, "
                               f"filterbank {shape[0]}x{shape[1]}")
    assert ok


@pytest.mark.slow
def test_enhancement_sanity(criterion, default_corpus, tmp_path):
    cfg = default_config(default_corpus, tmp_path)
    data = pipeline.Dataset.open(cfg)
    model = pipeline.build_model(cfg, data)
    train_entries = data.phase_entries("enh")
    test_0db = [e for e in data.entries("test", noisy=True) if e.snr_db == 0.0]
    before = pipeline.mean_enhancement_loss(model, data, train_entries)
    start = time.perf_counter()
    res = pipeline.run_phase(model, "enh", data, cfg, steps=500)
    elapsed = time.perf_counter() - start
    after = pipeline.mean_enhancement_loss(model, data, train_entries)
    gain = float(np.mean(pipeline.snr_improvement_db(model, data, test_0db)))
    ratio = after / before
    ok = res.steps == 500 and ratio < 0.5 and gain >= 3.0
    criterion("enhancement sanity", ok, f"loss ratio {ratio:.3f}, 0 dB SNR gain {gain:+.2f} dB "
                                        f"over {len(test_0db)} utterances, {elapsed:.0f} s")
    assert ok


@pytest.mark.slow
def test_asr_overfit(criterion, tmp_path):
    cfg = default_config(tmp_path / "data", tmp_path / "runs", mode="noisy_only")
    cfg.corpus = corpus.SyntheticSpec(utterances=20)
    entries = corpus.generate_synthetic_corpus(cfg.corpus, cfg.paths.data_dir)
    data = pipeline.Dataset.open(cfg)
    model = pipeline.build_model(cfg, data)
    start = time.perf_counter()
    pipeline.run_phase(model, "asr", data, cfg, steps=2000)
    table = pipeline.evaluate(model, data, cfg, split="train", entries=entries)
    elapsed = time.perf_counter() - start
    value = table.get("noisy_only", "clean")
    ok = len(entries) == 20 and value <= 5.0 and elapsed < 600
    criterion("asr overfit", ok, f"train CER {value:.2f}% on {len(entries)} utterances after 2000 steps, "
                                 f"{elapsed:.0f} s")
    assert ok


@pytest.mark.slow
def test_joint_training_trend(criterion, default_corpus, tmp_path):
    cfg = default_config(default_corpus, tmp_path)
    modes = ["grf", "concat", "enhanced_only"]
    start = time.perf_counter()
    report = pipeline.compare_modes(cfg, modes, list(cfg.seeds))
    elapsed = time.perf_counter() - start
    text = report.to_text()
    assert (tmp_path / "compare_report.txt").read_text() == text
    grf, concat, enh = (report.mean(m) for m in modes)
    wins = report.wins("grf", "enhanced_only")
    ok = grf <= concat and grf <= enh and wins >= 2
    criterion("joint-training trend", ok,
              f"0 dB mean CER grf {grf:.2f} / concat {concat:.2f} / enhanced_only {enh:.2f}, "
              f"grf beats enhanced_only on {wins}/{len(report.seeds)} seeds, {elapsed / 60:.1f} min", extra=text)
    assert ok


def test_decoding(criterion):
    mismatches = 0
    for seed in range(50):
        model = micro_model(seed)
        feats = np.random.default_rng(1000 + seed).standard_normal((12, 6)) * 2
        g, b = greedy_decode(feats, model), beam_decode(feats, model, beam=1)
        mismatches += g.ids != b.ids or g.log_prob != b.log_prob
    toy_gap, below = 0.0, 0
    for seed in range(20):
        model = micro_model(seed, vocab=4)
        feats = np.random.default_rng(seed).standard_normal((8, 6)) * 3
        best = brute_force_best(model, feats, max_len=4)
        b5 = beam_decode(feats, model, beam=5, max_len=4, length_norm=False)
        b1 = beam_decode(feats, model, beam=1, max_len=4, length_norm=False)
        toy_gap = max(toy_gap, abs(b5.log_prob - best))
        below += b5.log_prob < b1.log_prob
    ok = mismatches == 0 and below == 0 and toy_gap < 1e-12
    criterion("decoding", ok, f"beam 1 vs greedy mismatches {mismatches}/50, beam 5 below beam 1 on {below}/20 toys, "
                              f"beam 5 vs enumeration gap {toy_gap:.1e}")
    assert ok


def test_determinism(criterion, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    codes_a, _ = run_all(a)
    codes_b, _ = run_all(b)
    checks = {
        "exit codes": codes_a == codes_b and not any(codes_a.values()),
        "manifest": (a / "data" / "manifest.jsonl").read_bytes() == (b / "data" / "manifest.jsonl").read_bytes(),
        "audio": tree(a / "data", "*.wav") == tree(b / "data", "*.wav"),
        "logs": log_without_time(a / "runs" / "train_log.jsonl") == log_without_time(b / "runs" / "train_log.jsonl"),
        "checkpoints": tree(a / "runs", "*.grf") == tree(b / "runs", "*.grf"),
        "results": tree(a / "runs", "results.*") == tree(b / "runs", "results.*"),
        "decodes": (a / "hyps.jsonl").read_bytes() == (b / "hyps.jsonl").read_bytes(),
        "dumps": tree(a / "runs", "*.npy") == tree(b / "runs", "*.npy"),
    }
    ok = all(checks.values())
    criterion("determinism", ok, f"{len(codes_a)} subcommands; " +
              ", ".join(f"{k} {'same' if v else 'DIFFER'}" for k, v in checks.items()))
    assert ok
