"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from grfasr import kernels


def lstm_case(rng, T, H):
    xproj = rng.standard_normal((T, 4 * H))
    w_hh = rng.standard_normal((H, 4 * H)) * 0.3
    return xproj, w_hh, np.zeros(H), np.zeros(H)


def cases(rng):
    """Yield ``(name, {backend: callable})`` pairs at the sizes training uses."""
    for T, H in ((60, 64), (120, 128)):
        args = lstm_case(rng, T, H)
        fwd = {k: (lambda m=m: m.lstm_forward(*args)) for k, m in kernels.available_backends().items()}
        yield f"lstm_forward T={T} H={H}", fwd
        hs, cs, gates = kernels.lstm_forward(*args)
        dhs = rng.standard_normal(hs.shape)
        bwd = {k: (lambda m=m: m.lstm_backward(dhs, gates, cs, args[1], args[3]))
               for k, m in kernels.available_backends().items()}
        yield f"lstm_backward T={T} H={H}", bwd
    a = rng.integers(0, 30, size=40).astype(np.int64)
    b = rng.integers(0, 30, size=45).astype(np.int64)
    yield "edit_distance 40x45", {k: (lambda m=m: m.edit_distance(a, b))
                                  for k, m in kernels.available_backends().items()}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(0)
    backends = list(kernels.available_backends())
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':28s}" + "".join(f"{b:>14s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fns in cases(rng):
        times = {}
        for backend, fn in fns.items():
            number, _ = timeit.Timer(fn).autorange()
            times[backend] = min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number
        row = f"{name:28s}" + "".join(f"{times[b] * 1e3:12.3f}ms" for b in backends)
        if "cython" in times:
            row += f"{times['python'] / times['cython']:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
