"""Compare the numba and numpy LSTM kernels, and time one full training step.

    python3 benchmarks/bench_kernels.py [--batch 32] [--steps 120] [--hidden 32]

The full-step timing uses whichever backend ``GRITNET_DISABLE_NUMBA`` selects;
run it twice (flag unset, flag=1) to compare end to end.
"""

import argparse
import timeit

import numpy as np

from gritnet import kernels
from gritnet.encoding import EncodedSequence, stack_batch
from gritnet.model import backward_batch, forward_batch, init_model


def best_of(fn, repeat=5, number=3):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--steps", type=int, default=120)
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--embed", type=int, default=64)
    args = ap.parse_args()
    B, T, H = args.batch, args.steps, args.hidden

    rng = np.random.default_rng(0)
    xproj = rng.normal(0, 1, (B, T, 4 * H))
    U = rng.normal(0, 0.3, (4 * H, H))
    UT = np.ascontiguousarray(U.T)
    lengths = rng.integers(T // 4, T + 1, B)
    mask = (np.arange(T)[None] >= T - lengths[:, None]).astype(np.float64)
    dh = rng.normal(0, 1, (B, T, H)) * mask[..., None]

    print(f"B={B} T={T} H={H}  (active backend for model code: {kernels.backend()})")
    rows = []
    if kernels.NUMBA_AVAILABLE:
        kernels.lstm_forward_numba(xproj, UT, mask)  # compile
        gates, cs, _ = kernels.lstm_forward_numba(xproj, UT, mask)
        kernels.lstm_backward_numba(gates, cs, U, mask, dh)
    gates, cs, _ = kernels.lstm_forward_numpy(xproj, UT, mask)
    impls = [("numpy", kernels.lstm_forward_numpy, kernels.lstm_backward_numpy)]
    if kernels.NUMBA_AVAILABLE:
        impls.append(("numba", kernels.lstm_forward_numba, kernels.lstm_backward_numba))
    for name, fwd, bwd in impls:
        tf = best_of(lambda: fwd(xproj, UT, mask))
        tb = best_of(lambda: bwd(gates, cs, U, mask, dh))
        rows.append((name, tf, tb))
    base = rows[0]
    for name, tf, tb in rows:
        print(f"{name:>6}  forward {tf * 1e3:8.2f} ms  backward {tb * 1e3:8.2f} ms  speedup {base[1] / tf:5.2f}x / {base[2] / tb:5.2f}x")

    model = init_model(60, 30, args.embed, H, dropout_rate=0.1, seed=0)
    seqs = [EncodedSequence(rng.integers(0, 60, n), rng.integers(0, 31, n), n) for n in lengths]
    batch = stack_batch(seqs)
    y = rng.integers(0, 2, B)

    def step():
        cache = forward_batch(model, batch, training=True, rng=np.random.default_rng(1))
        backward_batch(model, cache, y, reduction="mean")

    step()
    print(f"full train step (forward + backward, {kernels.backend()}): {best_of(step) * 1e3:.2f} ms")


if __name__ == "__main__":
    main()
