import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from grfasr import autodiff as ad
from grfasr import config as cfgmod
from grfasr import corpus, dsp, pipeline
from grfasr.asr import spec_augment, spec_augment_mask
from grfasr.corpus import ManifestEntry
from grfasr.metrics import cer, edit_distance

FAST = settings(max_examples=60, deadline=None)
text = st.text(alphabet="abcd", max_size=10)
finite = st.floats(-50, 50, allow_nan=False)


@FAST
@given(text, text)
def test_edit_distance_matches_table(a, b):
    assert edit_distance(a, b) == oracles.levenshtein(a, b)


@FAST
@given(text, text, text)
def test_edit_distance_is_a_metric(a, b, c):
    assert edit_distance(a, b) == edit_distance(b, a)
    assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)
    assert (edit_distance(a, b) == 0) == (a == b)


@FAST
@given(text, st.text(alphabet="abcd", min_size=1, max_size=10))
def test_cer_bounds(hyp, ref):
    value = cer(hyp, ref)
    assert 0.0 <= value <= 100.0 * max(len(hyp), len(ref)) / len(ref)
    assert cer(ref, ref) == 0.0


@FAST
@given(st.lists(st.tuples(st.sampled_from(["0", "5", "10", "15", "20"]), st.floats(0, 100)),
                min_size=5, max_size=5, unique_by=lambda x: x[0]))
def test_table_average_is_mean(cells):
    t = pipeline.ResultTable()
    for cond, v in cells:
        t.add("m", cond, v)
    assert abs(t.get("m", "AVG") - np.mean([v for _, v in cells])) < 1e-12


@FAST
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 7)), elements=finite))
def test_softmax_rows_sum_to_one(x):
    p = ad.softmax(ad.Tensor(x), axis=-1).data
    assert np.all(p >= 0)
    assert np.allclose(p.sum(axis=-1), 1.0, atol=1e-12)
    assert np.allclose(np.exp(ad.log_softmax(ad.Tensor(x), axis=-1).data), p, atol=1e-12)


@FAST
@given(st.integers(0, 2**32 - 1), st.integers(1200, 4000))
def test_stft_round_trip(seed, n):
    w = dsp.Waveform(np.random.default_rng(seed).standard_normal(n) * 0.1)
    back = dsp.istft(dsp.stft(w))
    err = np.max(np.abs(back.samples[512:-512] - w.samples[512:-512]))
    assert err < 1e-6 * np.max(np.abs(w.samples))


@FAST
@given(st.integers(0, 2**32 - 1), st.floats(-5.0, 25.0))
def test_mixing_hits_requested_snr(seed, snr):
    rng = np.random.default_rng(seed)
    clean = dsp.Waveform(rng.standard_normal(2000) * 0.1)
    noise = dsp.Waveform(rng.standard_normal(3000) * 0.1)
    mix = dsp.mix_at_snr(clean, noise, snr, rng_seed=seed)
    assert abs(dsp.measured_snr_db(mix.clean, mix.noisy) - snr) < 0.01
    assert np.max(np.abs(mix.noisy.samples)) <= 0.99 + 1e-12


@FAST
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 30.0))
def test_snr_fuse_ratio(seed, target):
    rng = np.random.default_rng(seed)
    orig = dsp.Waveform(rng.standard_normal(500))
    enh = dsp.Waveform(rng.standard_normal(500) * 0.3)
    fused = dsp.snr_fuse(orig, enh, target)
    added = fused.samples - enh.samples
    assert abs(20 * np.log10(dsp.rms(enh) / dsp.rms(added)) - target) < 1e-9


@FAST
@given(st.integers(1, 40), st.integers(1, 30), st.integers(0, 50), st.integers(0, 40), st.integers(0, 10**6))
def test_spec_augment_mask_structure(T, F, tw, fw, seed):
    x = np.random.default_rng(seed).standard_normal((T, F)) + 5.0
    keep = spec_augment_mask(T, F, tw, fw, seed)
    y = spec_augment(x, tw, fw, seed=seed)
    assert np.array_equal(y[keep], x[keep]) and np.all(y[~keep] == 0.0)
    dropped_rows = np.flatnonzero(~keep.any(axis=1))
    dropped_cols = np.flatnonzero(~keep.any(axis=0))
    assert len(dropped_rows) <= min(tw, T) or len(dropped_cols) == F
    assert len(dropped_cols) <= min(fw, F) or len(dropped_rows) == T


ids = st.text(alphabet="abcxyz0123_", min_size=1, max_size=8)


@st.composite
def manifests(draw):
    names = draw(st.lists(ids, min_size=1, max_size=6, unique=True))
    out = []
    for name in names:
        noisy = draw(st.booleans())
        out.append(ManifestEntry(
            name, f"wav/{name}.wav", draw(st.text(alphabet="abc", min_size=1, max_size=6)),
            draw(st.sampled_from(corpus.SPLITS)),
            draw(st.floats(-5, 30)) if noisy else None,
            draw(st.sampled_from(["white", "pink", "babble"])) if noisy else None,
        ))
    return out


@FAST
@given(manifests())
def test_manifest_round_trip(tmp_path_factory, entries):
    path = tmp_path_factory.mktemp("m") / "manifest.jsonl"
    corpus.write_manifest(entries, path)
    assert corpus.read_manifest(path) == entries


@FAST
@given(st.floats(0.0, 10.0), st.integers(1, 5000), st.sampled_from(["grf", "concat", "enhanced_only", "noisy_only"]),
       st.booleans(), st.lists(st.integers(-10, 30), min_size=1, max_size=5))
def test_config_round_trip(alpha, warmup, mode, mct, snrs):
    cfg = cfgmod.ExperimentConfig(alpha=alpha, mode=mode, mct=mct)
    cfg.train.warmup = warmup
    cfg.mix.eval_snrs = tuple(snrs)
    again = cfgmod.parse_config_text(cfgmod.dump_config_text(cfg))
    assert cfgmod.flatten(again) == cfgmod.flatten(cfg)


@FAST
@given(st.floats(-100, 100), st.floats(0, 100), st.floats(0, 10))
def test_joint_loss_is_affine_in_alpha(asr, enh, alpha):
    assert pipeline.joint_loss(asr, enh, alpha) == asr + alpha * enh
    assert pipeline.joint_loss(asr, enh, 0.0) == asr
