"""Central finite-difference check of GritNet's analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoding import EncodedSequence
from .model import GritNetModel, bce_loss, forward, init_model, loss_and_grads


@dataclass
class GradCheckResult:
    seed: int
    errors: dict[str, float]  # normwise relative error per parameter block

    @property
    def max_error(self) -> float:
        return max(self.errors.values())


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / (||a|| + ||n||)``, 0 when both are exactly zero."""
    denom = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def numeric_gradients(model: GritNetModel, seq: EncodedSequence, y: int, training: bool, rng_seed: int, eps: float = 1e-6):
    def loss():
        p, _ = forward(model, seq, training, rng_seed)
        return bce_loss(p, y)

    grads = {}
    for name, arr in model.parameters().items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + eps
            up = loss()
            flat[k] = old - eps
            down = loss()
            flat[k] = old
            gflat[k] = (up - down) / (2.0 * eps)
        grads[name] = g
    return grads


def random_instance(seed: int, embed_dim: int = 4, hidden: int = 3, max_len: int = 6, n_actions: int = 5, d_max: int = 3):
    rng = np.random.default_rng(seed)
    dropout = float(rng.choice([0.0, 0.2]))
    model = init_model(n_actions, d_max, embed_dim, hidden, dropout_rate=dropout, seed=seed)
    # larger weights than the default init so gradients are not vanishingly small
    for arr in model.parameters().values():
        arr[...] = rng.normal(0.0, 0.5, size=arr.shape)
    T = int(rng.integers(1, max_len + 1))
    valid = int(rng.integers(1, T + 1))
    acts = np.full(T, -1, dtype=np.int64)
    dts = np.full(T, -1, dtype=np.int64)
    acts[T - valid :] = rng.integers(0, n_actions, size=valid)
    dts[T - valid :] = rng.integers(0, d_max + 1, size=valid)
    seq = EncodedSequence(acts, dts, valid)
    y = int(rng.integers(0, 2))
    return model, seq, y


def check_instance(seed: int, **kwargs) -> GradCheckResult:
    model, seq, y = random_instance(seed, **kwargs)
    training = model.dropout_rate > 0
    _, analytic = loss_and_grads(model, seq, y, training=training, rng_seed=seed)
    numeric = numeric_gradients(model, seq, y, training, seed)
    return GradCheckResult(seed, {k: relative_error(analytic[k], numeric[k]) for k in analytic})


def run_gradcheck(trials: int = 20, seed: int = 0, **kwargs) -> list[GradCheckResult]:
    return [check_instance(seed + t, **kwargs) for t in range(trials)]
