import math

import numpy as np
import pytest

from gritnet.encoding import PAD, EncodedSequence, encode_sequence, pre_pad, stack_batch, truncate_to_week, two_hot
from gritnet.evaluation import roc_auc
from gritnet.events import Event, StudentRecord, Vocabulary, filter_pre_enrollment, parse_event_log
from gritnet.gradcheck import check_instance, relative_error
from gritnet.model import (
    PARAM_NAMES,
    LstmParams,
    backward,
    backward_batch,
    bce_loss,
    blstm_forward,
    embed_tokens,
    forward,
    forward_batch,
    global_max_pool,
    init_for_vocab,
    init_model,
    load_model,
    loss_and_grads,
    lstm_step,
    predict,
    predict_sequences,
    save_model,
    sgd_train,
)
from gritnet.synthetic import SyntheticSpec, generate_synthetic


def seq_of(tokens):
    a = np.array([t[0] for t in tokens], dtype=np.int64)
    d = np.array([t[1] for t in tokens], dtype=np.int64)
    return EncodedSequence(a, d, int((a != PAD).sum()))


def random_seq(rng, n_actions, d_max, n):
    return EncodedSequence(rng.integers(0, n_actions, n), rng.integers(0, d_max + 1, n), n)


def small_model(seed=0, n_actions=6, d_max=4, E=5, H=3, dropout=0.0, scale=None):
    m = init_model(n_actions, d_max, E, H, dropout_rate=dropout, seed=seed)
    if scale is not None:
        rng = np.random.default_rng(seed + 1000)
        for arr in m.parameters().values():
            arr[...] = rng.normal(0, scale, arr.shape)
    return m


# embedding


def test_embedding_equals_two_hot_projection():
    m = small_model(scale=1.0)
    L, D = m.n_actions, m.d_max
    Eo = np.vstack([m.action_table, m.delta_table]).T  # E x (L + D + 1)
    seq = seq_of([(0, 0), (3, 2), (5, 4), (1, 1)])
    emb = embed_tokens(seq, m)
    for t, (a, d) in enumerate(seq.tokens):
        oracle = Eo @ two_hot(a, d, L, D)
        np.testing.assert_allclose(emb[t], oracle, rtol=0, atol=1e-15)


def test_pad_rows_embed_to_zero_and_bad_indices_raise():
    m = small_model(scale=1.0)
    emb = embed_tokens(seq_of([(PAD, PAD), (PAD, PAD), (2, 1)]), m)
    assert not emb[:2].any() and emb[2].any()
    with pytest.raises(IndexError):
        embed_tokens(seq_of([(m.n_actions, 0)]), m)
    with pytest.raises(IndexError):
        embed_tokens(seq_of([(0, m.d_max + 1)]), m)


# lstm step


def _scalar_lstm_step(x, h, c, W, U, b):
    """Plain-Python reference, one gate unit at a time."""
    H = len(h)
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    z = [sum(W[r][k] * x[k] for k in range(len(x))) + sum(U[r][k] * h[k] for k in range(H)) + b[r] for r in range(4 * H)]
    c_new, h_new = [], []
    for j in range(H):
        i, f, g, o = sig(z[j]), sig(z[H + j]), math.tanh(z[2 * H + j]), sig(z[3 * H + j])
        cj = f * c[j] + i * g
        c_new.append(cj)
        h_new.append(o * math.tanh(cj))
    return h_new, c_new


def test_lstm_step_matches_scalar_oracle():
    rng = np.random.default_rng(4)
    for _ in range(10):
        E, H = 2, 2
        p = LstmParams(rng.normal(0, 1, (4 * H, E)), rng.normal(0, 1, (4 * H, H)), rng.normal(0, 1, 4 * H))
        x, h, c = rng.normal(0, 1, E), rng.normal(0, 1, H), rng.normal(0, 1, H)
        h1, c1 = lstm_step(x, h, c, p)
        ho, co = _scalar_lstm_step(x, h, c, p.W.tolist(), p.U.tolist(), p.b.tolist())
        np.testing.assert_allclose(h1, ho, rtol=0, atol=1e-12)
        np.testing.assert_allclose(c1, co, rtol=0, atol=1e-12)


def test_lstm_step_zero_params_stays_zero():
    H, E = 3, 4
    p = LstmParams(np.zeros((4 * H, E)), np.zeros((4 * H, H)), np.zeros(4 * H))
    h, c = lstm_step(np.ones(E), np.zeros(H), np.zeros(H), p)
    assert not h.any() and not c.any()


def test_lstm_step_saturated_forget_gate_accumulates():
    H, E = 2, 2
    rng = np.random.default_rng(0)
    b = rng.normal(0, 1, 4 * H)
    b[H : 2 * H] = 100.0
    p = LstmParams(rng.normal(0, 1, (4 * H, E)), rng.normal(0, 1, (4 * H, H)), b)
    x, h, c = rng.normal(0, 1, E), rng.normal(0, 1, H), rng.normal(0, 1, H)
    _, c1 = lstm_step(x, h, c, p)
    z = p.W @ x + p.U @ h + b
    i = 1 / (1 + np.exp(-z[:H]))
    g = np.tanh(z[2 * H : 3 * H])
    np.testing.assert_allclose(c1, c + i * g, atol=1e-12)


# bidirectional pass and pooling


def test_blstm_single_step_is_one_step_each_way():
    m = small_model(scale=0.7)
    seq = seq_of([(2, 3)])
    x = embed_tokens(seq, m)[0]
    out = blstm_forward(embed_tokens(seq, m), 1, m.fwd, m.bwd)
    H = m.hidden
    hf, _ = lstm_step(x, np.zeros(H), np.zeros(H), m.fwd)
    hb, _ = lstm_step(x, np.zeros(H), np.zeros(H), m.bwd)
    np.testing.assert_allclose(out[0], np.concatenate([hf, hb]), atol=1e-14)


def test_blstm_matches_stepwise_loop():
    m = small_model(scale=0.7)
    seq = random_seq(np.random.default_rng(1), m.n_actions, m.d_max, 7)
    X = embed_tokens(seq, m)
    out = blstm_forward(X, 7, m.fwd, m.bwd)
    H = m.hidden
    h, c = np.zeros(H), np.zeros(H)
    for t in range(7):
        h, c = lstm_step(X[t], h, c, m.fwd)
        np.testing.assert_allclose(out[t, :H], h, atol=1e-13)
    h, c = np.zeros(H), np.zeros(H)
    for t in reversed(range(7)):
        h, c = lstm_step(X[t], h, c, m.bwd)
        np.testing.assert_allclose(out[t, H:], h, atol=1e-13)


def test_blstm_pre_padding_is_invisible():
    m = small_model(scale=0.7)
    seq = random_seq(np.random.default_rng(2), m.n_actions, m.d_max, 5)
    base = blstm_forward(embed_tokens(seq, m), 5, m.fwd, m.bwd)
    padded = pre_pad(seq, 12)
    out = blstm_forward(embed_tokens(padded, m), 5, m.fwd, m.bwd)
    assert np.array_equal(out[7:], base)
    assert not out[:7].any()


def test_global_max_pool():
    row = np.array([[0.3, -0.2, 0.9]])
    pooled, arg = global_max_pool(row, 1)
    assert np.array_equal(pooled, row[0]) and arg.tolist() == [0, 0, 0]

    dominated = np.array([[0.1, 0.2], [0.5, 0.6], [0.0, -1.0]])
    pooled, arg = global_max_pool(dominated, 3)
    assert pooled.tolist() == [0.5, 0.6] and arg.tolist() == [1, 1]

    rng = np.random.default_rng(0)
    for _ in range(20):
        A = rng.normal(size=(6, 4))
        valid = int(rng.integers(1, 7))
        pooled, arg = global_max_pool(A, valid)
        oracle = [max(A[t, j] for t in range(6 - valid, 6)) for j in range(4)]
        assert pooled.tolist() == oracle
        assert all(arg >= 6 - valid)

    pooled, arg = global_max_pool(np.ones((3, 2)), 0)
    assert not pooled.any() and (arg == -1).all()


# forward and loss


def test_zero_head_gives_sigmoid_of_bias():
    m = small_model(scale=1.0)
    m.dense_w[:] = 0.0
    m.dense_b[:] = 0.7
    seq = random_seq(np.random.default_rng(0), m.n_actions, m.d_max, 6)
    p, _ = forward(m, seq)
    assert p == pytest.approx(1 / (1 + math.exp(-0.7)), abs=1e-15)
    m.dense_b[:] = 0.0
    assert forward(m, seq)[0] == 0.5


def test_forward_deterministic_and_dropout_zero_equals_inference():
    m = small_model(scale=0.8)
    seq = random_seq(np.random.default_rng(5), m.n_actions, m.d_max, 8)
    p1, _ = forward(m, seq)
    p2, _ = forward(m, seq)
    assert p1 == p2
    m.dropout_rate = 0.0
    assert forward(m, seq, training=True, rng_seed=3)[0] == p1
    m.dropout_rate = 0.5
    assert forward(m, seq, training=True, rng_seed=3)[0] == forward(m, seq, training=True, rng_seed=3)[0]
    assert forward(m, seq)[0] == p1


def test_padding_invariance_is_exact():
    rng = np.random.default_rng(9)
    for k in range(15):
        m = small_model(seed=k, scale=0.6)
        seq = random_seq(rng, m.n_actions, m.d_max, int(rng.integers(1, 9)))
        p, _ = forward(m, seq)
        for pad in (1, 4, 17):
            assert forward(m, pre_pad(seq, seq.total_length + pad))[0] - p == 0.0


def test_bce_values():
    assert bce_loss(0.5, 1) == pytest.approx(math.log(2), abs=1e-15)
    assert bce_loss(0.5, 0) == pytest.approx(0.693147, abs=1e-6)
    assert bce_loss(0.9, 0) == pytest.approx(2.302585, abs=1e-6)
    assert math.isfinite(bce_loss(1.0, 0)) and math.isfinite(bce_loss(0.0, 1))


# gradients


@pytest.mark.parametrize("seed", range(8))
def test_gradients_match_finite_differences(seed):
    assert check_instance(seed).max_error < 1e-5


def test_pooled_gradient_sparsity():
    m = small_model(scale=0.8)
    seq = random_seq(np.random.default_rng(11), m.n_actions, m.d_max, 12)
    p, cache = forward(m, seq)
    # each pooled unit is fed by one timestep, so at most 2H steps receive gradient
    assert len(set(cache.argmax[0].tolist())) <= 2 * m.hidden
    grads = backward(m, cache, 1)
    np.testing.assert_allclose(grads["dense_w"], (p - 1.0) * cache.pooled[0], rtol=1e-14)


def test_duplicate_examples_double_summed_gradient():
    m = small_model(scale=0.8)
    seq = random_seq(np.random.default_rng(6), m.n_actions, m.d_max, 5)
    _, single = loss_and_grads(m, seq, 1)
    cache = forward_batch(m, stack_batch([seq, seq]))
    double = backward_batch(m, cache, [1, 1], reduction="sum")
    for name in PARAM_NAMES:
        np.testing.assert_allclose(double[name], 2 * single[name], rtol=1e-12, atol=1e-15)


def test_batched_mean_gradient_equals_average_of_single_gradients():
    m = small_model(scale=0.8)
    rng = np.random.default_rng(8)
    seqs = [random_seq(rng, m.n_actions, m.d_max, n) for n in (1, 4, 7, 2)]
    ys = [1, 0, 0, 1]
    cache = forward_batch(m, stack_batch(seqs))
    batched = backward_batch(m, cache, ys, reduction="mean")
    singles = [loss_and_grads(m, s, y)[1] for s, y in zip(seqs, ys)]
    for name in PARAM_NAMES:
        mean = sum(g[name] for g in singles) / len(seqs)
        assert relative_error(batched[name], mean) < 1e-12


def test_empty_sequence_only_moves_the_head():
    m = small_model(scale=0.8)
    empty = EncodedSequence(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), 0)
    p, _ = forward(m, empty)
    assert p == pytest.approx(1 / (1 + math.exp(-m.dense_b[0])), abs=1e-15)
    _, grads = loss_and_grads(m, empty, 1)
    assert grads["dense_b"][0] == pytest.approx(p - 1)
    for name in PARAM_NAMES[:-1]:
        assert not grads[name].any()


# training


def _toy_data(n=40, seed=0, n_actions=6, d_max=4):
    rng = np.random.default_rng(seed)
    seqs = [random_seq(rng, n_actions, d_max, int(rng.integers(1, 8))) for _ in range(n)]
    ys = rng.integers(0, 2, n)
    return seqs, ys


def test_zero_learning_rate_leaves_parameters_unchanged():
    m = small_model()
    seqs, ys = _toy_data()
    res = sgd_train(m, seqs, ys, learning_rate=0.0, epochs=3, dropout_rate=0.0)
    for name in PARAM_NAMES:
        assert np.array_equal(res.model.parameters()[name], m.parameters()[name])
    assert max(res.loss_history) - min(res.loss_history) < 1e-12


def test_full_batch_epoch_is_one_gradient_step():
    m = small_model(scale=0.3)
    seqs, ys = _toy_data(12)
    res = sgd_train(m, seqs, ys, batch_size=len(seqs), learning_rate=0.1, epochs=1, dropout_rate=0.0)
    # one mean-reduced step over the whole set; order does not matter for the sum
    cache = forward_batch(m, stack_batch(seqs))
    g = backward_batch(m, cache, ys, reduction="mean")
    for name in PARAM_NAMES:
        np.testing.assert_allclose(res.model.parameters()[name], m.parameters()[name] - 0.1 * g[name], atol=1e-14)


def test_training_is_seeded_and_does_not_mutate_input():
    m = small_model()
    before = save_model(m)
    seqs, ys = _toy_data()
    a = sgd_train(m, seqs, ys, epochs=2, seed=4)
    b = sgd_train(m, seqs, ys, epochs=2, seed=4)
    assert save_model(a.model) == save_model(b.model)
    assert a.loss_history == b.loss_history
    assert save_model(m) == before


def test_separable_synthetic_set_is_learned():
    raw = generate_synthetic(SyntheticSpec(student_count=50, order_signal_strength=1.0, seed=3))
    records, vocab = parse_event_log(raw.splitlines())
    records = [truncate_to_week(filter_pre_enrollment(r), 2) for r in records]
    seqs = [encode_sequence(r, vocab) for r in records]
    y = np.array([r.label for r in records])
    res = sgd_train(init_for_vocab(vocab, seed=0), seqs, y, epochs=30, seed=0)
    assert res.loss_history[4] < res.loss_history[0]
    assert roc_auc(predict_sequences(res.model, seqs), y).auc >= 0.95


def test_predict_sequences_matches_single_forward():
    m = small_model(scale=0.5)
    seqs, _ = _toy_data(10)
    batched = predict_sequences(m, seqs, batch_size=3)
    single = [forward(m, s)[0] for s in seqs]
    np.testing.assert_allclose(batched, single, rtol=0, atol=1e-14)


# inference on records


def test_predict_record_edge_cases():
    vocab = Vocabulary(["a", "b"])
    m = init_for_vocab(vocab, embed_dim=4, hidden=3, d_max=5, seed=1)
    empty = StudentRecord("s", 0)
    assert predict(m, empty, vocab) == pytest.approx(1 / (1 + math.exp(-m.dense_b[0])), abs=1e-15)
    r = StudentRecord("s", 0, (Event("a", 0), Event("zzz", 3), Event("b", 90)))
    p = predict(m, r, vocab)
    assert 0.0 < p < 1.0 and predict(m, r, vocab) == p
    m.dense_w[:] = 0.0
    m.dense_b[:] = 0.0
    assert predict(m, r, vocab) == 0.5


def test_order_matters():
    m = small_model(scale=1.0)
    seq = seq_of([(0, 0), (1, 1), (2, 2), (3, 0)])
    rev = seq_of(list(reversed(seq.tokens)))
    assert forward(m, seq)[0] != forward(m, rev)[0]


# serialization


def test_model_text_round_trip_is_bit_exact():
    m = small_model(seed=3, scale=1.0, dropout=0.25)
    m.fwd.W[0, 0] = 1 / 3
    m.bwd.b[1] = -2.5e-300
    text = save_model(m)
    back = load_model(text)
    assert back.dropout_rate == 0.25
    for name in PARAM_NAMES:
        a, b = m.parameters()[name], back.parameters()[name]
        assert a.shape == b.shape and np.array_equal(a, b)
    assert save_model(back) == text
    assert text.splitlines()[0] == "gritnet-model 1"


def test_load_rejects_unknown_version():
    text = save_model(small_model())
    with pytest.raises(ValueError):
        load_model(text.replace("gritnet-model 1", "gritnet-model 99", 1))
