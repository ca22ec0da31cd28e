import os

import numpy as np
import pytest

import oracles
from grfasr import _pykernels, kernels

BACKENDS = [_pykernels]
try:
    from grfasr import _ckernels

    BACKENDS.append(_ckernels)
except ImportError:  # extension not built
    _ckernels = None


def lstm_inputs(rng, T=6, H=5):
    xproj = rng.standard_normal((T, 4 * H))
    w_hh = rng.standard_normal((H, 4 * H)) * 0.5
    return xproj, w_hh, rng.standard_normal(H) * 0.1, rng.standard_normal(H) * 0.1


def test_backend_selected():
    assert kernels.BACKEND in kernels.available_backends()
    if _ckernels is not None and os.environ.get("GRFASR_KERNELS", "").lower() != "python":
        assert kernels.BACKEND == "cython"


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_lstm_forward_against_scalar_loop(impl, rng):
    T, D, H = 4, 3, 3
    x = rng.standard_normal((T, D))
    w_ih = rng.standard_normal((D, 4 * H))
    w_hh = rng.standard_normal((H, 4 * H))
    b = rng.standard_normal(4 * H)
    hs, _, _ = impl.lstm_forward(np.ascontiguousarray(x @ w_ih + b), w_hh, np.zeros(H), np.zeros(H))
    ref = oracles.lstm_direction(x.tolist(), w_ih.tolist(), w_hh.tolist(), b.tolist())
    assert np.max(np.abs(hs - np.array(ref))) < 1e-12


@pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")
class TestParity:
    def test_lstm_forward(self, rng):
        for T, H in [(1, 1), (7, 3), (20, 16)]:
            args = lstm_inputs(rng, T, H)
            for a, b in zip(_pykernels.lstm_forward(*args), _ckernels.lstm_forward(*args)):
                assert np.max(np.abs(a - b)) < 1e-12

    def test_lstm_backward(self, rng):
        xproj, w_hh, h0, c0 = lstm_inputs(rng, 9, 4)
        hs, cs, gates = _pykernels.lstm_forward(xproj, w_hh, h0, c0)
        dhs = rng.standard_normal(hs.shape)
        py = _pykernels.lstm_backward(dhs, gates, cs, w_hh, c0)
        cy = _ckernels.lstm_backward(dhs, gates, cs, w_hh, c0)
        for a, b in zip(py, cy):
            assert np.max(np.abs(a - b)) < 1e-12

    def test_edit_distance(self, rng):
        for _ in range(200):
            a = rng.integers(0, 4, size=rng.integers(0, 9)).astype(np.int64)
            b = rng.integers(0, 4, size=rng.integers(0, 9)).astype(np.int64)
            assert _pykernels.edit_distance(a, b) == _ckernels.edit_distance(a, b)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_edit_distance_against_table(impl, rng):
    for _ in range(100):
        a = rng.integers(0, 3, size=rng.integers(0, 7)).astype(np.int64)
        b = rng.integers(0, 3, size=rng.integers(0, 7)).astype(np.int64)
        assert impl.edit_distance(a, b) == oracles.levenshtein(a.tolist(), b.tolist())


def test_lstm_backward_matches_finite_differences(rng):
    xproj, w_hh, h0, c0 = lstm_inputs(rng, 5, 3)
    dhs = rng.standard_normal((5, 3))

    def f(xp):
        return float((kernels.lstm_forward(xp, w_hh, h0, c0)[0] * dhs).sum())

    hs, cs, gates = kernels.lstm_forward(xproj, w_hh, h0, c0)
    dx, dh0, dc0 = kernels.lstm_backward(dhs, gates, cs, w_hh, c0)
    num = np.zeros_like(xproj)
    for idx in np.ndindex(*xproj.shape):
        xp, xm = xproj.copy(), xproj.copy()
        xp[idx] += 1e-6
        xm[idx] -= 1e-6
        num[idx] = (f(xp) - f(xm)) / 2e-6
    assert np.linalg.norm(dx - num) / np.linalg.norm(num) < 1e-7


def test_benchmark_script_runs(capsys):
    import importlib.util
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    bench = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(bench)
    bench.main(["--repeat", "1"])
    out = capsys.readouterr().out
    assert "lstm_forward" in out and "edit_distance" in out
