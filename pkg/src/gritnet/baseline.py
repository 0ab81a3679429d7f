"""Bag-of-words logistic regression baseline with L2 penalty and chi-square selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class DivergenceError(RuntimeError):
    pass


def sigmoid(z):
    """Logistic function, branching on sign so neither tail overflows."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def _log_sigmoid(z):
    # log(sigmoid(z)) = -log1p(exp(-z)), evaluated stably
    return -np.logaddexp(0.0, -z)


@dataclass(frozen=True)
class LogRegModel:
    theta: np.ndarray
    bias: float
    alpha: float
    selected_features: Optional[tuple[int, ...]] = None
    loss_history: tuple[float, ...] = ()

    def _select(self, features: np.ndarray) -> np.ndarray:
        if self.selected_features is None:
            return features
        return features[..., list(self.selected_features)]

    def decision_function(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        x = self._select(x)
        if x.shape[-1] != len(self.theta):
            raise ValueError(f"expected {len(self.theta)} features, got {x.shape[-1]}")
        return x @ self.theta + self.bias


def regularized_loss(theta: np.ndarray, bias: float, X: np.ndarray, y: np.ndarray, alpha: float) -> float:
    """Mean binary cross entropy plus ``alpha / M * ||theta||^2``."""
    M = X.shape[0]
    z = X @ theta + bias
    nll = -(y * _log_sigmoid(z) + (1.0 - y) * _log_sigmoid(-z))
    return float(nll.mean() + alpha / M * (theta @ theta))


def regularized_grad(theta: np.ndarray, bias: float, X: np.ndarray, y: np.ndarray, alpha: float):
    M = X.shape[0]
    r = sigmoid(X @ theta + bias) - y
    return X.T @ r / M + 2.0 * alpha / M * theta, float(r.mean())


def default_learning_rate(X: np.ndarray, alpha: float) -> tuple[float, float]:
    """Steps (weights, bias) for which gradient descent never increases the loss.

    With ``lam`` the largest eigenvalue of the unpenalised curvature bound
    ``[X 1]^T [X 1] / 4M``, the preconditioned Hessian stays below identity
    when the weight step is ``1 / (2 lam + 4 alpha / M)`` and the bias step
    ``1 / (2 lam)``. Keeping the bias step free of ``alpha`` matters because
    the bias is not penalised.
    """
    M = X.shape[0]
    Xb = np.hstack([X, np.ones((M, 1))])
    lam = np.linalg.norm(Xb, 2) ** 2 / (4.0 * M)
    return 1.0 / (2.0 * lam + 4.0 * alpha / M), 1.0 / (2.0 * lam)


def logreg_train(
    features,
    labels,
    alpha: float = 0.0,
    learning_rate: Optional[float] = None,
    epochs: int = 1000,
    seed: int = 0,
    selected_features: Optional[Sequence[int]] = None,
    tol: float = 0.0,
) -> LogRegModel:
    """Full-batch gradient descent on the L2-penalised logistic loss.

    The bias is not penalised. With ``learning_rate=None`` the steps come
    from ``default_learning_rate`` and the loss is non-increasing; an
    explicit rate that makes the loss go up raises ``DivergenceError``.
    Training stops early once an epoch improves the loss by less than ``tol``.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("features must be an M x N matrix with M >= 1")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must have one entry per row")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if selected_features is not None:
        selected_features = tuple(int(i) for i in selected_features)
        X = X[:, list(selected_features)]

    if learning_rate is None:
        lr, lr_bias = default_learning_rate(X, alpha)
    else:
        lr = lr_bias = float(learning_rate)
    rng = np.random.default_rng(seed)
    theta = rng.normal(0.0, 1e-3, size=X.shape[1])
    bias = 0.0
    loss = regularized_loss(theta, bias, X, y, alpha)
    history = [loss]
    for epoch in range(epochs):
        g_theta, g_bias = regularized_grad(theta, bias, X, y, alpha)
        theta = theta - lr * g_theta
        bias = bias - lr_bias * g_bias
        new_loss = regularized_loss(theta, bias, X, y, alpha)
        if not np.isfinite(new_loss):
            raise DivergenceError(f"non-finite loss at epoch {epoch}")
        if new_loss > loss + 1e-12 * max(1.0, abs(loss)):
            raise DivergenceError(
                f"loss increased at epoch {epoch} ({loss:.6g} -> {new_loss:.6g}); "
                f"use a smaller learning rate than {lr:g}"
            )
        history.append(new_loss)
        improved = loss - new_loss
        loss = new_loss
        if improved < tol:
            break
    return LogRegModel(theta, float(bias), float(alpha), selected_features, tuple(history))


def logreg_predict(model: LogRegModel, features) -> np.ndarray | float:
    """Graduation probability for one feature vector or a matrix of them."""
    return sigmoid(model.decision_function(features))


def chi_square_scores(features, labels) -> np.ndarray:
    """Chi-square statistic of each binarized column (count > 0) against the label."""
    B = np.asarray(features) > 0
    y = np.asarray(labels).astype(bool)
    n = len(y)
    a = (B & y[:, None]).sum(0).astype(np.float64)  # present, positive
    b = (B & ~y[:, None]).sum(0).astype(np.float64)  # present, negative
    c = y.sum() - a
    d = (~y).sum() - b
    denom = (a + b) * (c + d) * (a + c) * (b + d)
    num = n * (a * d - b * c) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = np.where(denom > 0, num / np.where(denom > 0, denom, 1.0), 0.0)
    return scores


def chi_square_select(features, labels, k: int) -> list[int]:
    """Indices of the ``k`` highest chi-square columns, ties to the lower index."""
    scores = chi_square_scores(features, labels)
    if not 1 <= k <= len(scores):
        raise ValueError(f"k must be in [1, {len(scores)}], got {k}")
    order = np.argsort(-scores, kind="stable")
    return sorted(int(i) for i in order[:k])


def save_logreg(model: LogRegModel) -> str:
    """Flat text: N, alpha, bias, then theta one per line; selected indices follow if any."""
    lines = [str(len(model.theta)), repr(float(model.alpha)), repr(float(model.bias))]
    lines += [repr(float(t)) for t in model.theta]
    if model.selected_features is not None:
        lines.append("selected")
        lines += [str(i) for i in model.selected_features]
    return "\n".join(lines) + "\n"


def load_logreg(text: str) -> LogRegModel:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    n = int(lines[0])
    alpha = float(lines[1])
    bias = float(lines[2])
    theta = np.array([float(v) for v in lines[3 : 3 + n]])
    if len(theta) != n:
        raise ValueError(f"expected {n} weights, found {len(theta)}")
    selected = None
    rest = lines[3 + n :]
    if rest:
        if rest[0] != "selected":
            raise ValueError(f"unexpected trailer {rest[0]!r}")
        selected = tuple(int(v) for v in rest[1:])
    return LogRegModel(theta, bias, alpha, selected)
