"""Independent scalar-loop reference implementations used as test oracles.

Everything here is written with explicit Python loops over plain floats so
that it shares no code path with the vectorised library.
"""

import math

import numpy as np


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def dot(row, vec):
    s = 0.0
    for a, b in zip(row, vec):
        s += a * b
    return s


def linear(x, W, b=None):
    """x (D,) times W (D, O) plus b, one output at a time."""
    out = []
    for j in range(len(W[0])):
        s = 0.0 if b is None else b[j]
        for i in range(len(x)):
            s += x[i] * W[i][j]
        out.append(s)
    return out


def lstm_direction(xs, w_ih, w_hh, bias, reverse=False):
    """Single-direction LSTM with gate blocks [input, forget, cell, output]."""
    T = len(xs)
    H = len(w_hh)
    h = [0.0] * H
    c = [0.0] * H
    out = [None] * T
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        pre = [bias[k] for k in range(4 * H)]
        for k in range(4 * H):
            for i in range(len(xs[t])):
                pre[k] += xs[t][i] * w_ih[i][k]
            for i in range(H):
                pre[k] += h[i] * w_hh[i][k]
        new_h, new_c = [], []
        for j in range(H):
            ig = _sig(pre[j])
            fg = _sig(pre[H + j])
            gg = math.tanh(pre[2 * H + j])
            og = _sig(pre[3 * H + j])
            cj = fg * c[j] + ig * gg
            new_c.append(cj)
            new_h.append(og * math.tanh(cj))
        h, c = new_h, new_c
        out[t] = list(h)
    return out


def blstm(xs, layers):
    """``layers`` is a list of (fwd_params, bwd_params), each (w_ih, w_hh, bias)."""
    h = [list(map(float, row)) for row in xs]
    for fwd, bwd in layers:
        f = lstm_direction(h, *fwd)
        b = lstm_direction(h, *bwd, reverse=True)
        h = [f[t] + b[t] for t in range(len(h))]
    return h


def grf_step(x, h, Wr, br, Wz, bz, Wh, bh):
    """One gated fusion step for a single frame."""
    xh = list(x) + list(h)
    r = [_sig(v) for v in linear(xh, Wr, br)]
    z = [_sig(v) for v in linear(xh, Wz, bz)]
    xrh = list(x) + [r[j] * h[j] for j in range(len(h))]
    hc = [math.tanh(v) for v in linear(xrh, Wh, bh)]
    return [z[j] * h[j] + (1.0 - z[j]) * hc[j] for j in range(len(h))]


def attention(q, k, v, mask=None):
    """Scaled dot-product attention with explicit per-query softmax."""
    dk = len(q[0])
    out = []
    for i in range(len(q)):
        scores = []
        for j in range(len(k)):
            if mask is not None and not mask[i][j]:
                scores.append(None)
            else:
                scores.append(dot(q[i], k[j]) / math.sqrt(dk))
        m = max(s for s in scores if s is not None)
        w = [0.0 if s is None else math.exp(s - m) for s in scores]
        z = sum(w)
        row = []
        for d in range(len(v[0])):
            row.append(sum(w[j] / z * v[j][d] for j in range(len(k))))
        out.append(row)
    return out


def log_fbank(mag, fb, floor=1e-10):
    T, F = len(mag), len(fb)
    M = len(fb[0])
    out = []
    for t in range(T):
        row = []
        for m in range(M):
            s = 0.0
            for f in range(F):
                s += mag[t][f] * fb[f][m]
            row.append(math.log(max(s, floor)))
        out.append(row)
    return out


def levenshtein_table(a, b):
    """Full (len(a)+1) x (len(b)+1) DP table; distance is the bottom-right cell."""
    D = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        D[i][0] = i
    for j in range(len(b) + 1):
        D[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            D[i][j] = min(D[i - 1][j] + 1, D[i][j - 1] + 1, D[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return D


def levenshtein(a, b):
    return levenshtein_table(a, b)[-1][-1]


def dft_frame(segment, n_fft):
    """One-sided DFT of a zero-padded segment by direct summation."""
    F = n_fft // 2 + 1
    out = np.zeros(F, dtype=np.complex128)
    for k in range(F):
        s = 0.0 + 0.0j
        for n, x in enumerate(segment):
            s += x * complex(math.cos(2 * math.pi * k * n / n_fft), -math.sin(2 * math.pi * k * n / n_fft))
        out[k] = s
    return out


def hamming_periodic(n):
    return [0.54 - 0.46 * math.cos(2 * math.pi * i / n) for i in range(n)]


def lstm_params(direction):
    """(w_ih, w_hh, bias) nested lists from an LSTMDirection module."""
    return (direction.w_ih.data.tolist(), direction.w_hh.data.tolist(), direction.bias.data.tolist())


def blstm_params(net):
    return [(lstm_params(getattr(net, f"l{k}_fwd")), lstm_params(getattr(net, f"l{k}_bwd")))
            for k in range(net.layers)]
