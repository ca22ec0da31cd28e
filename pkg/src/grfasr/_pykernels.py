"""Pure-Python/numpy reference versions of the hot kernels.

Gate layout for the LSTM kernels is ``[i, f, g, o]`` along the last axis of
the pre-activation buffer, each block ``H`` wide.
"""

import numpy as np


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_forward(xproj, w_hh, h0, c0):
    """Run the recurrence over precomputed input projections.

    Returns ``(hs, cs, gates)`` where ``gates`` holds post-activation values.
    """
    T, four_h = xproj.shape
    H = four_h // 4
    hs = np.empty((T, H))
    cs = np.empty((T, H))
    gates = np.empty((T, four_h))
    h = h0
    c = c0
    for t in range(T):
        a = xproj[t] + h @ w_hh
        i = _sigmoid(a[:H])
        f = _sigmoid(a[H:2 * H])
        g = np.tanh(a[2 * H:3 * H])
        o = _sigmoid(a[3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[t, :H] = i
        gates[t, H:2 * H] = f
        gates[t, 2 * H:3 * H] = g
        gates[t, 3 * H:] = o
        hs[t] = h
        cs[t] = c
    return hs, cs, gates


def lstm_backward(dhs, gates, cs, w_hh, c0):
    """Backpropagate through time.

    Returns ``(dxproj, dh0, dc0)``; the recurrent weight gradient is formed by
    the caller as one matrix product over all steps.
    """
    T, H = dhs.shape
    dxproj = np.empty((T, 4 * H))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        i = gates[t, :H]
        f = gates[t, H:2 * H]
        g = gates[t, 2 * H:3 * H]
        o = gates[t, 3 * H:]
        c_prev = cs[t - 1] if t > 0 else c0
        tc = np.tanh(cs[t])
        dh = dhs[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dxproj[t, :H] = dc * g * i * (1.0 - i)
        dxproj[t, H:2 * H] = dc * c_prev * f * (1.0 - f)
        dxproj[t, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dxproj[t, 3 * H:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = w_hh @ dxproj[t]
    return dxproj, dh_next, dc_next


def edit_distance(a, b):
    """Levenshtein distance between two integer sequences (two-row DP)."""
    n = len(b)
    prev = list(range(n + 1))
    for i, ai in enumerate(a, 1):
        cur = [i] + [0] * n
        for j in range(1, n + 1):
            cost = 0 if ai == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[n]
