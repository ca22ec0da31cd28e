"""Central finite-difference gradient checks."""

import numpy as np

from .tensor import Tensor


def relative_error(analytic, numeric):
    """Norm-wise relative error ||a - n|| / max(||a||, ||n||), 0 when both vanish."""
    a = np.ravel(analytic)
    n = np.ravel(numeric)
    denom = max(np.linalg.norm(a), np.linalg.norm(n))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


def numeric_grad(f, x, h=1e-6):
    """d f() / d x.data by central differences; ``f`` returns a float."""
    g = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = g.reshape(-1)
    for k in range(flat.size):
        old = flat[k]
        flat[k] = old + h
        fp = f()
        flat[k] = old - h
        fm = f()
        flat[k] = old
        gflat[k] = (fp - fm) / (2.0 * h)
    return g


def check_gradients(build_loss, inputs, h=1e-6):
    """Compare backprop against finite differences for every tensor in ``inputs``.

    ``build_loss()`` must rebuild the graph from the current input values and
    return a scalar Tensor. Returns ``{index_or_name: relative_error}``.
    """
    for t in inputs:
        t.grad = None
    build_loss().backward()
    analytic = [None if t.grad is None else t.grad.copy() for t in inputs]
    errors = {}
    for k, t in enumerate(inputs):
        key = getattr(t, "name", "") or k
        num = numeric_grad(lambda: float(build_loss().data), t, h)
        a = analytic[k] if analytic[k] is not None else np.zeros_like(num)
        errors[key] = relative_error(a, num)
    return errors


def random_projection_loss(out, rng):
    """Scalar sum(out * W) with fixed random W, so every output entry matters."""
    w = rng.normal(size=out.shape)
    return (out * Tensor(w)).sum()
