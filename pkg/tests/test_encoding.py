import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gritnet.encoding import (
    PAD,
    EncodedSequence,
    bow_featurize,
    discretize_deltas,
    encode_sequence,
    pre_pad,
    pre_pad_batch,
    stack_batch,
    truncate_to_week,
    two_hot,
)
from gritnet.events import Event, StudentRecord, Vocabulary


def rec(pairs, enroll=0, label=0):
    return StudentRecord("s", enroll, tuple(Event(a, d) for a, d in pairs), label)


def test_discretize_deltas():
    assert discretize_deltas([10, 10, 12]) == [0, 0, 2]
    assert discretize_deltas([7]) == [0]
    assert discretize_deltas([]) == []
    # clamp oracle min(gap, d_max)
    assert discretize_deltas([0, 100], d_max=30) == [0, min(100 - 0, 30)]


def test_discretize_rejects_unsorted():
    with pytest.raises(ValueError):
        discretize_deltas([5, 3])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 500), max_size=30), st.integers(0, 40))
def test_deltas_always_clamped(days, d_max):
    out = discretize_deltas(sorted(days), d_max)
    assert all(0 <= d <= d_max for d in out)


def test_encode_sequence():
    vocab = Vocabulary(["v1", "q1"])
    seq = encode_sequence(rec([("v1", 0), ("q1", 0)]), vocab)
    assert seq.tokens == [(0, 0), (1, 0)]
    assert seq.valid_length == seq.total_length == 2
    empty = encode_sequence(rec([]), vocab)
    assert empty.tokens == [] and empty.valid_length == 0


def test_encode_oov():
    vocab = Vocabulary(["v1"])
    with pytest.raises(KeyError, match="mystery"):
        encode_sequence(rec([("mystery", 0)]), vocab)
    seq = encode_sequence(rec([("mystery", 0)]), vocab, allow_unknown=True)
    assert seq.tokens == [(vocab.unknown_index, 0)]


def test_two_hot_has_ones_at_action_and_offset_delta():
    L, d_max = 5, 4
    for a in range(L):
        for d in range(d_max + 1):
            v = two_hot(a, d, L, d_max)
            assert v.sum() == 2
            assert np.flatnonzero(v).tolist() == [a, L + d]
    assert not two_hot(PAD, PAD, L, d_max).any()


def test_pre_pad_batch():
    a = EncodedSequence(np.array([1, 2]), np.array([0, 3]), 2)
    b = EncodedSequence(np.arange(5), np.zeros(5, dtype=np.int64), 5)
    pa, pb = pre_pad_batch([a, b], 5)
    assert pa.tokens[:3] == [(PAD, PAD)] * 3
    assert pa.tokens[3:] == a.tokens
    assert pa.valid_length == 2 and pa.total_length == 5
    assert pb.tokens == b.tokens
    with pytest.raises(ValueError):
        pre_pad_batch([a, b], 4)


def test_default_target_is_batch_max():
    seqs = [EncodedSequence(np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64), n) for n in (3, 7, 1)]
    batch = stack_batch(seqs)
    assert batch.shape == (3, 7)
    assert batch.mask.sum(axis=1).tolist() == [3, 7, 1]
    # pads strictly precede valid positions
    for row in batch.mask:
        assert np.all(np.diff(row) >= 0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 9), max_size=12), st.integers(0, 10))
def test_pre_pad_preserves_suffix(actions, extra):
    n = len(actions)
    seq = EncodedSequence(np.array(actions, dtype=np.int64), np.zeros(n, dtype=np.int64), n)
    padded = pre_pad(seq, n + extra)
    assert padded.tokens[padded.total_length - n :] == seq.tokens
    assert padded.valid().tokens == seq.tokens


def test_truncate_to_week():
    r = rec([("a", 101), ("b", 106), ("c", 108)], enroll=100)
    assert truncate_to_week(r, 1).days == [101, 106]
    assert truncate_to_week(r, 10) == r
    r2 = rec([("a", d) for d in range(0, 20)], enroll=0)
    assert truncate_to_week(r2, 2).days == [d for d in range(20) if 0 <= d < 14]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 80), max_size=25), st.integers(1, 10))
def test_truncation_monotone(days, week):
    r = rec([("a", d) for d in sorted(days)])
    w1 = truncate_to_week(r, week).events
    w2 = truncate_to_week(r, week + 1).events
    assert w2[: len(w1)] == w1


def test_bow_featurize():
    vocab = Vocabulary(["v1", "q1", "p1"])
    assert bow_featurize(rec([("v1", 0), ("v1", 1), ("q1", 2)]), vocab).tolist() == [2, 1, 0]
    assert bow_featurize(rec([]), vocab).tolist() == [0, 0, 0]
    with pytest.raises(KeyError):
        bow_featurize(rec([("zz", 0)]), vocab)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from("abcd"), min_size=2, max_size=15), st.randoms(use_true_random=False))
def test_bow_order_invariant_sequence_order_sensitive(actions, rnd):
    vocab = Vocabulary("abcd")
    original = rec([(a, 0) for a in actions])
    perm = list(actions)
    rnd.shuffle(perm)
    permuted = rec([(a, 0) for a in perm])
    assert bow_featurize(original, vocab).tolist() == bow_featurize(permuted, vocab).tolist()
    assert bow_featurize(original, vocab).sum() == len(actions)
    same = encode_sequence(original, vocab).tokens == encode_sequence(permuted, vocab).tokens
    assert same == (perm == list(actions))
