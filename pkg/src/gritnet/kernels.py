"""Hot loops for GritNet: the LSTM recurrence and the embedding-gradient scatter.

Only the sequential part of the recurrence lives here: input projections
and the weight-gradient GEMMs are batched over all timesteps by the caller.
Each kernel has a numba and a numpy implementation with one contract. The
numba one is used when numba imports and ``GRITNET_DISABLE_NUMBA`` is unset
or "0"; the numpy one is the fallback and the reference the tests compare
against.

Layout: ``xproj`` is (B, T, 4H) with gate blocks ordered input, forget,
candidate, output and the bias already added. ``mask`` is (B, T) of 0/1.
Masked steps hold the state and gates at exactly zero, which is correct for
pre-padding (pads come before every valid step in the forward direction and
after them in the reversed one).
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("GRITNET_DISABLE_NUMBA", "0") in ("", "0")


def _sig(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def lstm_forward_numpy(xproj, UT, mask):
    """Returns (gates, cs, hs): activated gates (B,T,4H), cells and hiddens (B,T,H)."""
    B, T, G = xproj.shape
    H = G // 4
    gates = np.empty((B, T, G))
    cs = np.zeros((B, T, H))
    hs = np.zeros((B, T, H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        z = xproj[:, t] + h @ UT
        i = _sig(z[:, :H])
        f = _sig(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = _sig(z[:, 3 * H :])
        m = mask[:, t, None]
        c = (f * c + i * g) * m
        h = (o * np.tanh(c)) * m
        gates[:, t, :H] = i * m
        gates[:, t, H : 2 * H] = f * m
        gates[:, t, 2 * H : 3 * H] = g * m
        gates[:, t, 3 * H :] = o * m
        cs[:, t] = c
        hs[:, t] = h
    return gates, cs, hs


def lstm_backward_numpy(gates, cs, U, mask, dh_out):
    """Backprop through time; returns dz (B,T,4H), the loss gradient w.r.t. gate pre-activations."""
    B, T, G = gates.shape
    H = G // 4
    dz = np.zeros((B, T, G))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    zero = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        m = mask[:, t, None]
        i = gates[:, t, :H]
        f = gates[:, t, H : 2 * H]
        g = gates[:, t, 2 * H : 3 * H]
        o = gates[:, t, 3 * H :]
        tc = np.tanh(cs[:, t])
        c_prev = cs[:, t - 1] if t > 0 else zero
        dh = (dh_out[:, t] + dh_next) * m
        dc = dc_next * m + dh * o * (1.0 - tc * tc)
        dz[:, t, :H] = dc * g * i * (1.0 - i)
        dz[:, t, H : 2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, t, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
        dz[:, t, 3 * H :] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dz[:, t] @ U
    return dz


if NUMBA_AVAILABLE:

    @numba.njit(cache=True)
    def lstm_forward_numba(xproj, UT, mask):
        B, T, G = xproj.shape
        H = G // 4
        gates = np.empty((B, T, G))
        cs = np.zeros((B, T, H))
        hs = np.zeros((B, T, H))
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        for t in range(T):
            rec = np.dot(h, UT)
            for b in range(B):
                if mask[b, t] == 0.0:
                    gates[b, t, :] = 0.0
                    c[b, :] = 0.0
                    h[b, :] = 0.0
                    continue
                m = mask[b, t]
                for j in range(H):
                    zi = xproj[b, t, j] + rec[b, j]
                    zf = xproj[b, t, H + j] + rec[b, H + j]
                    zg = xproj[b, t, 2 * H + j] + rec[b, 2 * H + j]
                    zo = xproj[b, t, 3 * H + j] + rec[b, 3 * H + j]
                    gi = 1.0 / (1.0 + np.exp(-zi))
                    gf = 1.0 / (1.0 + np.exp(-zf))
                    gg = np.tanh(zg)
                    go = 1.0 / (1.0 + np.exp(-zo))
                    cn = (gf * c[b, j] + gi * gg) * m
                    hn = (go * np.tanh(cn)) * m
                    c[b, j] = cn
                    h[b, j] = hn
                    gates[b, t, j] = gi
                    gates[b, t, H + j] = gf
                    gates[b, t, 2 * H + j] = gg
                    gates[b, t, 3 * H + j] = go
                    cs[b, t, j] = cn
                    hs[b, t, j] = hn
        return gates, cs, hs

    @numba.njit(cache=True)
    def lstm_backward_numba(gates, cs, U, mask, dh_out):
        B, T, G = gates.shape
        H = G // 4
        dz = np.zeros((B, T, G))
        dzt = np.zeros((B, G))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            for b in range(B):
                if mask[b, t] == 0.0:
                    # masked steps cut the chain: no gradient flows in or out
                    dzt[b, :] = 0.0
                    dc_next[b, :] = 0.0
                    continue
                m = mask[b, t]
                for j in range(H):
                    gi = gates[b, t, j]
                    gf = gates[b, t, H + j]
                    gg = gates[b, t, 2 * H + j]
                    go = gates[b, t, 3 * H + j]
                    tc = np.tanh(cs[b, t, j])
                    c_prev = cs[b, t - 1, j] if t > 0 else 0.0
                    dh = (dh_out[b, t, j] + dh_next[b, j]) * m
                    dc = dc_next[b, j] * m + dh * go * (1.0 - tc * tc)
                    dzt[b, j] = dc * gg * gi * (1.0 - gi)
                    dzt[b, H + j] = dc * c_prev * gf * (1.0 - gf)
                    dzt[b, 2 * H + j] = dc * gi * (1.0 - gg * gg)
                    dzt[b, 3 * H + j] = dh * tc * go * (1.0 - go)
                    dc_next[b, j] = dc * gf
            dh_next = np.dot(dzt, U)
            dz[:, t, :] = dzt
        return dz

    @numba.njit(cache=True)
    def scatter_add_rows_numba(out, idx, vals):
        for r in range(idx.shape[0]):
            row = idx[r]
            for k in range(vals.shape[1]):
                out[row, k] += vals[r, k]

else:  # pragma: no cover
    lstm_forward_numba = None
    lstm_backward_numba = None
    scatter_add_rows_numba = None


def scatter_add_rows_numpy(out, idx, vals):
    np.add.at(out, idx, vals)


def lstm_forward(xproj, UT, mask):
    xproj = np.ascontiguousarray(xproj, dtype=np.float64)
    UT = np.ascontiguousarray(UT, dtype=np.float64)
    mask = np.ascontiguousarray(mask, dtype=np.float64)
    if USE_NUMBA:
        return lstm_forward_numba(xproj, UT, mask)
    return lstm_forward_numpy(xproj, UT, mask)


def lstm_backward(gates, cs, U, mask, dh_out):
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (gates, cs, U, mask, dh_out)]
    if USE_NUMBA:
        return lstm_backward_numba(*args)
    return lstm_backward_numpy(*args)


def scatter_add_rows(out, idx, vals):
    """``out[idx[r]] += vals[r]`` for every r, repeated indices accumulating; in place."""
    if USE_NUMBA:
        scatter_add_rows_numba(out, np.ascontiguousarray(idx, dtype=np.int64), np.ascontiguousarray(vals, dtype=np.float64))
    else:
        scatter_add_rows_numpy(out, idx, vals)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
