"""Turn student records into model inputs.

Sequences become (action index, day-gap bucket) token pairs that are
pre-padded into batches; the baseline gets order-free count vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .events import Event, StudentRecord, Vocabulary

DEFAULT_D_MAX = 30
PAD = -1  # reserved index for both halves of a pad token; embeds to zero


@dataclass(frozen=True)
class EncodedSequence:
    actions: np.ndarray  # int64, PAD at padded positions
    deltas: np.ndarray
    valid_length: int

    def __post_init__(self):
        if self.actions.shape != self.deltas.shape or self.actions.ndim != 1:
            raise ValueError("actions and deltas must be 1-D arrays of equal length")
        if not 0 <= self.valid_length <= len(self.actions):
            raise ValueError("valid_length out of range")

    @property
    def total_length(self) -> int:
        return len(self.actions)

    @property
    def pad_length(self) -> int:
        return len(self.actions) - self.valid_length

    @property
    def tokens(self) -> list[tuple[int, int]]:
        return list(zip(self.actions.tolist(), self.deltas.tolist()))

    def valid(self) -> "EncodedSequence":
        """The same sequence with all padding stripped."""
        if self.pad_length == 0:
            return self
        s = self.pad_length
        return EncodedSequence(self.actions[s:], self.deltas[s:], self.valid_length)


@dataclass(frozen=True)
class PaddedBatch:
    """Index arrays plus mask for a pre-padded batch, shape (B, T)."""

    actions: np.ndarray
    deltas: np.ndarray
    mask: np.ndarray  # float64 0/1
    lengths: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.actions.shape


def discretize_deltas(days: Sequence[int] | Sequence[Event], d_max: int = DEFAULT_D_MAX) -> list[int]:
    """Day gaps between adjacent events, clamped to ``d_max``; the first gap is 0."""
    if d_max < 0:
        raise ValueError("d_max must be >= 0")
    ds = [e.day if isinstance(e, Event) else int(e) for e in days]
    out = []
    prev = None
    for d in ds:
        if prev is None:
            out.append(0)
        else:
            gap = d - prev
            if gap < 0:
                raise ValueError("events must be sorted by day")
            out.append(min(gap, d_max))
        prev = d
    return out


def encode_sequence(
    record: StudentRecord,
    vocab: Vocabulary,
    d_max: int = DEFAULT_D_MAX,
    allow_unknown: bool = False,
) -> EncodedSequence:
    """Unpadded token-pair encoding of one record.

    Out-of-vocabulary actions raise ``KeyError`` unless ``allow_unknown`` is
    set (inference), in which case they map to ``vocab.unknown_index``.
    """
    acts = np.fromiter(
        (vocab.lookup(e.action, allow_unknown=allow_unknown) for e in record.events),
        dtype=np.int64,
        count=len(record.events),
    )
    dts = np.asarray(discretize_deltas(record.events, d_max), dtype=np.int64)
    return EncodedSequence(acts, dts, len(acts))


def pre_pad(seq: EncodedSequence, target_length: int) -> EncodedSequence:
    if target_length < seq.valid_length:
        raise ValueError(
            f"target_length {target_length} is shorter than valid_length {seq.valid_length}"
        )
    v = seq.valid()
    n_pad = target_length - v.valid_length
    if n_pad == 0:
        return v
    pad = np.full(n_pad, PAD, dtype=np.int64)
    return EncodedSequence(
        np.concatenate([pad, v.actions]), np.concatenate([pad, v.deltas]), v.valid_length
    )


def pre_pad_batch(sequences: Sequence[EncodedSequence], target_length: int | None = None) -> list[EncodedSequence]:
    """Left-pad every sequence to ``target_length`` (default: the batch max)."""
    if target_length is None:
        target_length = max((s.valid_length for s in sequences), default=0)
    return [pre_pad(s, target_length) for s in sequences]


def stack_batch(sequences: Sequence[EncodedSequence], target_length: int | None = None) -> PaddedBatch:
    padded = pre_pad_batch(sequences, target_length)
    T = padded[0].total_length if padded else 0
    B = len(padded)
    actions = np.full((B, T), PAD, dtype=np.int64)
    deltas = np.full((B, T), PAD, dtype=np.int64)
    for b, s in enumerate(padded):
        actions[b] = s.actions
        deltas[b] = s.deltas
    lengths = np.array([s.valid_length for s in padded], dtype=np.int64)
    mask = (actions != PAD).astype(np.float64)
    return PaddedBatch(actions, deltas, mask, lengths)


def truncate_to_week(record: StudentRecord, week: int) -> StudentRecord:
    """Keep events in the half-open window ``[enrollment, enrollment + 7*week)``."""
    if week < 1:
        raise ValueError("week must be a positive integer")
    cutoff = record.enrollment_day + 7 * week
    kept = tuple(e for e in record.events if e.day < cutoff)
    if len(kept) == len(record.events):
        return record
    return replace(record, events=kept)


def bow_featurize(record: StudentRecord, vocab: Vocabulary) -> np.ndarray:
    counts = np.zeros(len(vocab), dtype=np.int64)
    for e in record.events:
        counts[vocab.lookup(e.action)] += 1
    return counts


def bow_matrix(records: Sequence[StudentRecord], vocab: Vocabulary) -> np.ndarray:
    if not records:
        return np.zeros((0, len(vocab)), dtype=np.int64)
    return np.stack([bow_featurize(r, vocab) for r in records])


def two_hot(action: int, delta: int, n_actions: int, d_max: int) -> np.ndarray:
    """Concatenated one-hot of action and gap bucket (all zeros for a pad token)."""
    v = np.zeros(n_actions + d_max + 1)
    if action != PAD:
        v[action] = 1.0
        v[n_actions + delta] = 1.0
    return v
