"""GritNet: event embedding, bidirectional LSTM, masked global max pooling, dense + sigmoid.

Everything is float64 numpy. The sequential LSTM loops are delegated to
:mod:`gritnet.kernels`; all other work is batched over a pre-padded
(B, T) index array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .baseline import DivergenceError, sigmoid
from .encoding import DEFAULT_D_MAX, PAD, EncodedSequence, PaddedBatch, encode_sequence, stack_batch
from .events import StudentRecord, Vocabulary

BCE_EPS = 1e-12
FORMAT_VERSION = 1

PARAM_NAMES = (
    "action_table",
    "delta_table",
    "fwd_W",
    "fwd_U",
    "fwd_b",
    "bwd_W",
    "bwd_U",
    "bwd_b",
    "dense_w",
    "dense_b",
)


@dataclass
class LstmParams:
    W: np.ndarray  # (4H, E)
    U: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.U.shape[1]


@dataclass
class GritNetModel:
    action_table: np.ndarray  # (n_actions, E); last row is the unknown-action slot
    delta_table: np.ndarray  # (d_max + 1, E)
    fwd: LstmParams
    bwd: LstmParams
    dense_w: np.ndarray  # (2H,)
    dense_b: np.ndarray  # (1,) so every block updates in place
    dropout_rate: float = 0.0

    @property
    def n_actions(self) -> int:
        return self.action_table.shape[0]

    @property
    def d_max(self) -> int:
        return self.delta_table.shape[0] - 1

    @property
    def embed_dim(self) -> int:
        return self.action_table.shape[1]

    @property
    def hidden(self) -> int:
        return self.fwd.hidden

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            "action_table": self.action_table,
            "delta_table": self.delta_table,
            "fwd_W": self.fwd.W,
            "fwd_U": self.fwd.U,
            "fwd_b": self.fwd.b,
            "bwd_W": self.bwd.W,
            "bwd_U": self.bwd.U,
            "bwd_b": self.bwd.b,
            "dense_w": self.dense_w,
            "dense_b": self.dense_b,
        }

    def copy(self) -> "GritNetModel":
        return GritNetModel(
            self.action_table.copy(),
            self.delta_table.copy(),
            LstmParams(self.fwd.W.copy(), self.fwd.U.copy(), self.fwd.b.copy()),
            LstmParams(self.bwd.W.copy(), self.bwd.U.copy(), self.bwd.b.copy()),
            self.dense_w.copy(),
            self.dense_b.copy(),
            self.dropout_rate,
        )


def _init_lstm(rng, E, H):
    k = 1.0 / math.sqrt(H)
    W = rng.uniform(-k, k, size=(4 * H, E))
    U = rng.uniform(-k, k, size=(4 * H, H))
    b = rng.uniform(-k, k, size=4 * H)
    b[H : 2 * H] = 1.0
    return LstmParams(W, U, b)


def init_model(
    n_actions: int,
    d_max: int = DEFAULT_D_MAX,
    embed_dim: int = 64,
    hidden: int = 32,
    dropout_rate: float = 0.1,
    seed: int = 0,
) -> GritNetModel:
    """Randomly initialised model.

    ``n_actions`` counts the table rows, i.e. vocabulary size plus one for
    the unknown-action slot. Use :func:`init_for_vocab` to get that right.
    """
    if not 0.0 <= dropout_rate < 1.0:
        raise ValueError("dropout_rate must be in [0, 1)")
    rng = np.random.default_rng(seed)
    action_table = rng.uniform(-0.05, 0.05, size=(n_actions, embed_dim))
    delta_table = rng.uniform(-0.05, 0.05, size=(d_max + 1, embed_dim))
    fwd = _init_lstm(rng, embed_dim, hidden)
    bwd = _init_lstm(rng, embed_dim, hidden)
    k = 1.0 / math.sqrt(hidden)
    dense_w = rng.uniform(-k, k, size=2 * hidden)
    return GritNetModel(action_table, delta_table, fwd, bwd, dense_w, np.zeros(1), dropout_rate)


def init_for_vocab(vocab: Vocabulary, **kwargs) -> GritNetModel:
    return init_model(len(vocab) + 1, **kwargs)


# ---------------------------------------------------------------------------
# forward pieces


def _check_indices(actions, deltas, n_actions, d_max):
    valid = actions != PAD
    if np.any((deltas != PAD) != valid):
        raise IndexError("pad positions must be padded in both halves of the token")
    a, d = actions[valid], deltas[valid]
    if a.size and (a.min() < 0 or a.max() >= n_actions):
        raise IndexError(f"action index out of range [0, {n_actions})")
    if d.size and (d.min() < 0 or d.max() > d_max):
        raise IndexError(f"delta index out of range [0, {d_max}]")


def _embed(model: GritNetModel, actions: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    _check_indices(actions, deltas, model.n_actions, model.d_max)
    valid = (actions != PAD)[..., None]
    rows = model.action_table[actions] + model.delta_table[deltas]
    return np.where(valid, rows, 0.0)


def embed_tokens(sequence: EncodedSequence, model: GritNetModel) -> np.ndarray:
    """(T, E) event embeddings; pad rows are exactly zero."""
    return _embed(model, sequence.actions, sequence.deltas)


def lstm_step(x, h_prev, c_prev, params: LstmParams):
    """One LSTM step on single vectors, returns (h, c)."""
    H = params.hidden
    z = params.W @ x + params.U @ h_prev + params.b
    i = sigmoid(z[:H])
    f = sigmoid(z[H : 2 * H])
    g = np.tanh(z[2 * H : 3 * H])
    o = sigmoid(z[3 * H :])
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def _run_direction(X, mask, p: LstmParams):
    B, T, E = X.shape
    xproj = (X.reshape(B * T, E) @ p.W.T).reshape(B, T, p.W.shape[0]) + p.b
    return kernels.lstm_forward(xproj, p.U.T, mask)


def blstm_forward(embedded: np.ndarray, valid_length: int, fwd: LstmParams, bwd: LstmParams) -> np.ndarray:
    """(T, 2H) concatenated forward/backward hidden states; pad rows are zero.

    The first ``T - valid_length`` rows are treated as pre-padding and never
    enter the recurrence.
    """
    T = embedded.shape[0]
    H = fwd.hidden
    out = np.zeros((T, 2 * H))
    if valid_length == 0:
        return out
    X = embedded[T - valid_length :][None]
    mask = np.ones((1, valid_length))
    _, _, hf = _run_direction(X, mask, fwd)
    _, _, hb = _run_direction(X[:, ::-1], mask, bwd)
    out[T - valid_length :, :H] = hf[0]
    out[T - valid_length :, H:] = hb[0, ::-1]
    return out


def global_max_pool(outputs: np.ndarray, valid_length: int):
    """Column-wise max over the last ``valid_length`` rows, with earliest argmax.

    An empty sequence pools to zeros and argmax -1.
    """
    T, D = outputs.shape
    if valid_length == 0:
        return np.zeros(D), np.full(D, -1, dtype=np.int64)
    start = T - valid_length
    arg = np.argmax(outputs[start:], axis=0) + start
    return outputs[arg, np.arange(D)], arg


def bce_loss(p, y):
    p = np.clip(np.asarray(p, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(y, dtype=np.float64)
    out = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return out if out.ndim else float(out)


@dataclass
class ForwardCache:
    actions: np.ndarray
    deltas: np.ndarray
    mask: np.ndarray
    lengths: np.ndarray
    X: np.ndarray
    fwd: tuple  # (gates, cs, hs), time runs left to right
    bwd: tuple  # (gates, cs, hs) in reversed time order
    outputs: np.ndarray  # (B, T, 2H)
    pooled: np.ndarray  # (B, 2H)
    argmax: np.ndarray  # (B, 2H), -1 for empty sequences
    dropout_mask: np.ndarray  # (B, 2H), already scaled by 1/(1-rate)
    p: np.ndarray  # (B,)


def forward_batch(
    model: GritNetModel,
    batch: PaddedBatch,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> ForwardCache:
    B, T = batch.shape
    H = model.hidden
    X = _embed(model, batch.actions, batch.deltas)
    mask = batch.mask
    fwd = _run_direction(X, mask, model.fwd)
    bwd = _run_direction(X[:, ::-1], mask[:, ::-1], model.bwd)
    outputs = np.concatenate([fwd[2], bwd[2][:, ::-1]], axis=2)

    masked = np.where(mask[..., None] > 0, outputs, -np.inf)
    argmax = np.argmax(masked, axis=1) if T else np.zeros((B, 2 * H), dtype=np.int64)
    pooled = np.take_along_axis(outputs, argmax[:, None, :], axis=1)[:, 0, :] if T else np.zeros((B, 2 * H))
    empty = batch.lengths == 0
    pooled[empty] = 0.0
    argmax[empty] = -1

    rate = model.dropout_rate
    if training and rate > 0.0:
        if rng is None:
            raise ValueError("training with dropout needs an rng")
        keep = rng.random((B, 2 * H)) >= rate
        dmask = keep / (1.0 - rate)
    else:
        dmask = np.ones((B, 2 * H))
    logits = (pooled * dmask) @ model.dense_w + model.dense_b[0]
    p = sigmoid(logits)
    p = np.atleast_1d(p)
    return ForwardCache(batch.actions, batch.deltas, mask, batch.lengths, X, fwd, bwd, outputs, pooled, argmax, dmask, p)


def _direction_grads(X, mask, p: LstmParams, state, dh_out):
    gates, cs, hs = state
    B, T, E = X.shape
    G = gates.shape[2]
    dz = kernels.lstm_backward(gates, cs, p.U, mask, dh_out)
    h_prev = np.zeros_like(hs)
    h_prev[:, 1:] = hs[:, :-1]
    dz2 = dz.reshape(B * T, G)
    dW = dz2.T @ X.reshape(B * T, E)
    dU = dz2.T @ h_prev.reshape(B * T, p.hidden)
    db = dz2.sum(axis=0)
    dX = (dz2 @ p.W).reshape(B, T, E)
    return dW, dU, db, dX


def backward_batch(model: GritNetModel, cache: ForwardCache, y, reduction: str = "sum") -> dict[str, np.ndarray]:
    """Exact gradients of the summed (or mean) BCE over the batch."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    B, T = cache.actions.shape
    H = model.hidden
    scale = 1.0 if reduction == "sum" else 1.0 / B
    ds = (cache.p - y) * scale  # dL/dlogit

    grads = {}
    dropped = cache.pooled * cache.dropout_mask
    grads["dense_w"] = ds @ dropped
    grads["dense_b"] = np.array([ds.sum()])
    dpooled = ds[:, None] * model.dense_w[None, :] * cache.dropout_mask

    douts = np.zeros((B, T, 2 * H))
    rows, cols = np.nonzero(cache.argmax >= 0)
    douts[rows, cache.argmax[rows, cols], cols] = dpooled[rows, cols]

    dWf, dUf, dbf, dXf = _direction_grads(cache.X, cache.mask, model.fwd, cache.fwd, douts[:, :, :H])
    Xr = cache.X[:, ::-1]
    dWb, dUb, dbb, dXr = _direction_grads(Xr, cache.mask[:, ::-1], model.bwd, cache.bwd, douts[:, ::-1, H:])
    grads.update(fwd_W=dWf, fwd_U=dUf, fwd_b=dbf, bwd_W=dWb, bwd_U=dUb, bwd_b=dbb)

    dX = dXf + dXr[:, ::-1]
    valid = cache.actions != PAD
    dA = np.zeros_like(model.action_table)
    dD = np.zeros_like(model.delta_table)
    dX_valid = dX[valid]
    kernels.scatter_add_rows(dA, cache.actions[valid], dX_valid)
    kernels.scatter_add_rows(dD, cache.deltas[valid], dX_valid)
    grads["action_table"] = dA
    grads["delta_table"] = dD
    return {name: grads[name] for name in PARAM_NAMES}


def _single_batch(sequence: EncodedSequence) -> PaddedBatch:
    return stack_batch([sequence.valid()])


def forward(model: GritNetModel, sequence: EncodedSequence, training: bool = False, rng_seed: int = 0):
    """Probability of the positive outcome for one sequence, plus the cache for ``backward``.

    Padding is stripped before the recurrence, so any amount of pre-padding
    gives a bit-identical result.
    """
    rng = np.random.default_rng(rng_seed) if training else None
    cache = forward_batch(model, _single_batch(sequence), training=training, rng=rng)
    return float(cache.p[0]), cache


def backward(model: GritNetModel, cache: ForwardCache, y) -> dict[str, np.ndarray]:
    return backward_batch(model, cache, np.atleast_1d(y), reduction="sum")


def loss_and_grads(model, sequence, y, training=False, rng_seed=0):
    p, cache = forward(model, sequence, training, rng_seed)
    return bce_loss(p, y), backward(model, cache, y)


# ---------------------------------------------------------------------------
# training and inference


@dataclass
class TrainResult:
    model: GritNetModel
    loss_history: list[float] = field(default_factory=list)


def sgd_train(
    model: GritNetModel,
    sequences: Sequence[EncodedSequence],
    labels,
    batch_size: int = 32,
    learning_rate: float = 0.05,
    epochs: int = 10,
    dropout_rate: Optional[float] = None,
    seed: int = 0,
) -> TrainResult:
    """Minibatch SGD on mean BCE; returns a trained copy and per-epoch mean loss.

    Each epoch reshuffles with the seeded rng; each batch is pre-padded to its
    own longest sequence. The input model is left untouched.
    """
    if not sequences:
        raise ValueError("empty training set")
    labels = np.asarray(labels, dtype=np.float64)
    if len(labels) != len(sequences):
        raise ValueError("one label per sequence required")
    model = model.copy()
    if dropout_rate is not None:
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        model.dropout_rate = dropout_rate
    rng = np.random.default_rng(seed)
    params = model.parameters()
    n = len(sequences)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, batch_size)):
            idx = order[start : start + batch_size]
            batch = stack_batch([sequences[i] for i in idx])
            cache = forward_batch(model, batch, training=True, rng=rng)
            losses = bce_loss(cache.p, labels[idx])
            batch_loss = float(np.sum(losses))
            if not math.isfinite(batch_loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {bi}")
            total += batch_loss
            if learning_rate != 0.0:
                grads = backward_batch(model, cache, labels[idx], reduction="mean")
                for name, g in grads.items():
                    params[name] -= learning_rate * g
        history.append(total / n)
    return TrainResult(model, history)


def predict_sequences(model: GritNetModel, sequences: Sequence[EncodedSequence], batch_size: int = 128) -> np.ndarray:
    """Inference-mode probabilities; batches are formed over length-sorted sequences."""
    n = len(sequences)
    out = np.empty(n)
    order = sorted(range(n), key=lambda i: sequences[i].valid_length)
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        cache = forward_batch(model, stack_batch([sequences[i] for i in idx]))
        out[idx] = cache.p
    return out


def predict(model: GritNetModel, record: StudentRecord, vocab: Vocabulary, d_max: Optional[int] = None) -> float:
    """Graduation probability for one record; unseen actions use the unknown slot."""
    seq = encode_sequence(record, vocab, model.d_max if d_max is None else d_max, allow_unknown=True)
    p, _ = forward(model, seq)
    return p


def outcome_log_likelihood(probs: Sequence[float], outcomes: Sequence[int]) -> float:
    """Sum of per-outcome log-likelihoods ``log p(y_i | v)`` for independent future outcomes."""
    return -float(np.sum(bce_loss(np.asarray(probs), np.asarray(outcomes))))


# ---------------------------------------------------------------------------
# serialization


def save_model(model: GritNetModel) -> str:
    """Versioned text form; floats are written with ``repr`` so the round trip is bit-exact."""
    lines = [
        f"gritnet-model {FORMAT_VERSION}",
        f"dims {model.n_actions} {model.d_max} {model.embed_dim} {model.hidden}",
        f"dropout_rate {model.dropout_rate!r}",
    ]
    for name, arr in model.parameters().items():
        lines.append(f"{name} {' '.join(str(s) for s in arr.shape)}")
        lines.extend(repr(float(v)) for v in arr.ravel())
    return "\n".join(lines) + "\n"


def load_model(text: str) -> GritNetModel:
    it = iter(text.splitlines())
    header = next(it).split()
    if header[0] != "gritnet-model" or int(header[1]) != FORMAT_VERSION:
        raise ValueError(f"unsupported model header {' '.join(header)!r}")
    _, L, d_max, E, H = next(it).split()
    L, d_max, E, H = int(L), int(d_max), int(E), int(H)
    key, rate = next(it).split()
    if key != "dropout_rate":
        raise ValueError("expected dropout_rate line")
    blocks = {}
    for name in PARAM_NAMES:
        parts = next(it).split()
        if parts[0] != name:
            raise ValueError(f"expected block {name!r}, found {parts[0]!r}")
        shape = tuple(int(s) for s in parts[1:])
        size = int(np.prod(shape)) if shape else 1
        vals = [float(next(it)) for _ in range(size)]
        blocks[name] = np.array(vals).reshape(shape)
    m = GritNetModel(
        blocks["action_table"],
        blocks["delta_table"],
        LstmParams(blocks["fwd_W"], blocks["fwd_U"], blocks["fwd_b"]),
        LstmParams(blocks["bwd_W"], blocks["bwd_U"], blocks["bwd_b"]),
        blocks["dense_w"],
        blocks["dense_b"],
        float(rate),
    )
    if (m.n_actions, m.d_max, m.embed_dim, m.hidden) != (L, d_max, E, H):
        raise ValueError("dimension line does not match parameter blocks")
    return m
