import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlap2seq.autodiff import ContractError, Tensor, grad_check, ops
from mlap2seq.decoders import (
    LinearDecoder,
    LSTMDecoder,
    attend,
    linear_decode,
    lstm_cell,
    lstm_decode_sequence,
    lstm_step,
    truncate_at_eos,
)
from mlap2seq.encoder import LayerRepresentations
from mlap2seq.vocab import EOS, SOS, UNK

GET, MEAN = 3, 4


def reps_from(arrays):
    layers = [Tensor(a) for a in arrays[:-1]]
    return LayerRepresentations(layers, Tensor(arrays[-1]))


def random_reps(rng, b=2, layers=2, d=4, requires_grad=False):
    arrs = [rng.normal(size=(b, d)) for _ in range(layers + 1)]
    return LayerRepresentations(
        [Tensor(a, requires_grad=requires_grad) for a in arrs[:-1]], Tensor(arrs[-1], requires_grad=requires_grad)
    )


# --- Linear decoder ---------------------------------------------------------------


def test_truncate_examples():
    assert truncate_at_eos([GET, EOS, MEAN, EOS, EOS]) == [GET]
    assert truncate_at_eos([EOS] * 5) == []
    assert truncate_at_eos([SOS, GET, UNK]) == [GET, UNK]


def test_linear_decoder_follows_biases():
    dec = LinearDecoder(np.random.default_rng(0), 5, 6, 3, np.float64)
    for emb in dec.embeddings:
        emb.weight.data[:] = 0.0
    for bias, word in zip(dec.biases, [GET, EOS, MEAN, EOS, EOS]):
        bias.data[word] = 5.0
    out = dec.decode(Tensor(np.zeros((1, 3))))
    assert out.predictions == [[GET]]
    for bias in dec.biases:
        bias.data[:] = 0.0
        bias.data[EOS] = 5.0
    assert dec.decode(Tensor(np.zeros((1, 3)))).predictions == [[]]


def test_orthogonal_rows_inner_product_argmax():
    v, d = 6, 6
    dec = LinearDecoder(np.random.default_rng(0), 2, v, d, np.float64)
    for emb in dec.embeddings:
        emb.weight.data[:] = np.eye(v, d)
    h = np.zeros((2, d))
    h[0, 5] = 1.0
    h[1, 4] = 1.0
    out = linear_decode(Tensor(h), dec)
    assert [int(np.argmax(p.data[0])) for p in out.probs] == [5, 5]
    assert [int(np.argmax(p.data[1])) for p in out.probs] == [4, 4]


def test_linear_position_independence_and_normalisation():
    rng = np.random.default_rng(1)
    dec = LinearDecoder(rng, 5, 7, 4, np.float64)
    h = Tensor(rng.normal(size=(3, 4)))
    before = [p.data.copy() for p in dec.decode(h).probs]
    for p in before:
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)
        assert (p >= 0).all()
    dec.embeddings[2].weight.data += rng.normal(size=(7, 4))
    after = [p.data for p in dec.decode(h).probs]
    for i in range(5):
        assert np.array_equal(before[i], after[i]) == (i != 2)


def test_linear_shape_mismatch():
    dec = LinearDecoder(np.random.default_rng(0), 5, 7, 4, np.float64)
    with pytest.raises(ContractError):
        dec.decode(Tensor(np.zeros((2, 3))))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_linear_never_emits_eos_or_words_after(seed):
    rng = np.random.default_rng(seed)
    dec = LinearDecoder(rng, 5, 5, 2, np.float64)
    for emb in dec.embeddings:
        emb.weight.data[:] = 0.0
    logits = rng.normal(size=(5, 5))
    for bias, row in zip(dec.biases, logits):
        bias.data[:] = row
    pred = dec.decode(Tensor(np.zeros((1, 2)))).predictions[0]
    arg = logits.argmax(axis=1).tolist()
    stop = arg.index(EOS) if EOS in arg else 5
    assert pred == [w for w in arg[:stop] if w != SOS]
    assert EOS not in pred and SOS not in pred


# --- LSTM pieces ------------------------------------------------------------------


def test_lstm_cell_zero_weights_closed_form():
    dec = LSTMDecoder(np.random.default_rng(0), 5, 6, 2, np.float64)
    for lin in (dec.w_input, dec.w_state):
        lin.weight.data[:] = 0.0
        lin.bias.data[:] = 0.0
    c = np.array([[0.8, -1.5]])
    s, c2 = lstm_cell(Tensor(np.ones((1, 2))), Tensor(np.zeros((1, 2))), Tensor(c), dec)
    # all gates sigmoid(0) = 0.5, candidate tanh(0) = 0
    np.testing.assert_allclose(c2.data, 0.5 * c, rtol=1e-12)
    np.testing.assert_allclose(s.data, 0.5 * np.tanh(0.5 * c), rtol=1e-12)


def test_attention_two_way_for_one_layer_and_equal_reps():
    rng = np.random.default_rng(0)
    reps = random_reps(rng, b=3, layers=1, d=4)
    stacked = ops.stack(reps.all(), axis=1)
    _, alpha = attend(stacked, Tensor(rng.normal(size=(3, 4))))
    assert alpha.shape == (3, 2)
    np.testing.assert_allclose(alpha.data.sum(axis=1), 1.0, atol=1e-12)
    row = rng.normal(size=(3, 4))
    same = ops.stack([Tensor(row)] * 4, axis=1)
    ctx, _ = attend(same, Tensor(rng.normal(size=(3, 4))))
    np.testing.assert_allclose(ctx.data, row, rtol=1e-12)


def test_lstm_step_outputs():
    rng = np.random.default_rng(2)
    dec = LSTMDecoder(rng, 5, 9, 4, np.float64)
    reps = random_reps(rng, b=2, layers=3, d=4)
    stacked = ops.stack(reps.all(), axis=1)
    s, c, o, p, alpha = lstm_step(reps.graph, reps.graph, Tensor(rng.normal(size=(2, 4))), stacked, dec)
    assert s.shape == c.shape == o.shape == (2, 4)
    assert np.all(np.abs(o.data) <= 1.0)
    np.testing.assert_allclose(p.data.sum(axis=1), 1.0, atol=1e-6)
    np.testing.assert_allclose(alpha.data.sum(axis=1), 1.0, atol=1e-6)
    with pytest.raises(ContractError):
        lstm_step(reps.graph, reps.graph, Tensor(np.zeros((2, 3))), stacked, dec)


def test_lstm_immediate_eos_runs_one_step():
    rng = np.random.default_rng(3)
    dec = LSTMDecoder(rng, 5, 6, 4, np.float64)
    dec.word_bias.data[EOS] = 50.0
    out = lstm_decode_sequence(random_reps(rng, b=2, d=4), dec, 5, mode="infer")
    assert out.steps == 1 and out.predictions == [[], []]


def test_lstm_train_mode_runs_all_steps():
    rng = np.random.default_rng(4)
    dec = LSTMDecoder(rng, 5, 6, 4, np.float64)
    dec.word_bias.data[EOS] = 50.0
    targets = np.full((2, 5), EOS)
    out = lstm_decode_sequence(random_reps(rng, b=2, d=4), dec, 5, mode="train", targets=targets)
    assert out.steps == 5 and len(out.probs) == 5


def test_lstm_argument_contracts():
    rng = np.random.default_rng(5)
    dec = LSTMDecoder(rng, 5, 6, 4, np.float64)
    reps = random_reps(rng, b=2, d=4)
    with pytest.raises(ContractError):
        lstm_decode_sequence(reps, dec, 5, mode="train", targets=np.zeros((2, 4), dtype=int))
    with pytest.raises(ContractError):
        lstm_decode_sequence(reps, dec, 5, mode="train")
    with pytest.raises(ContractError):
        lstm_decode_sequence(reps, dec, 5, mode="infer", targets=np.zeros((2, 5), dtype=int))
    with pytest.raises(ContractError):
        lstm_decode_sequence(reps, dec, 0)
    with pytest.raises(ContractError):
        lstm_decode_sequence(reps, dec, 5, mode="beam")


def test_first_input_is_sos_then_previous_output():
    rng = np.random.default_rng(6)
    dec = LSTMDecoder(rng, 3, 6, 4, np.float64)
    reps = random_reps(rng, b=1, d=4)
    stacked = ops.stack(reps.all(), axis=1)
    s, c = reps.graph, reps.graph
    r = Tensor(dec.vocab.weight.data[[SOS]])
    expected = []
    for _ in range(3):
        s, c, o, p, _ = lstm_step(s, c, r, stacked, dec)
        expected.append(p.data)
        r = o
    out = lstm_decode_sequence(reps, dec, 3, mode="train", targets=np.full((1, 3), EOS))
    for a, b in zip(out.probs, expected):
        np.testing.assert_allclose(a.data, b, rtol=1e-12)


def test_teacher_forcing_feeds_target_embeddings():
    rng = np.random.default_rng(7)
    plain = LSTMDecoder(rng, 3, 6, 4, np.float64)
    assert plain.teacher_forcing is False
    forced = LSTMDecoder(np.random.default_rng(7), 3, 6, 4, np.float64, teacher_forcing=True)
    forced.load_state_dict(plain.state_dict())
    reps = random_reps(rng, b=1, d=4)
    targets = np.array([[3, 4, EOS]])
    a = lstm_decode_sequence(reps, plain, 3, mode="train", targets=targets)
    b = lstm_decode_sequence(reps, forced, 3, mode="train", targets=targets)
    np.testing.assert_array_equal(a.probs[0].data, b.probs[0].data)  # step 1 consumes SOS in both
    assert not np.allclose(a.probs[1].data, b.probs[1].data)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_lstm_steps_bounded_and_stop_at_eos(seed, t):
    rng = np.random.default_rng(seed)
    dec = LSTMDecoder(rng, t, 5, 3, np.float64)
    for p in dec.parameters():
        p.data += rng.normal(0, 1.0, size=p.shape)
    out = lstm_decode_sequence(random_reps(rng, b=1, d=3), dec, t, mode="infer")
    assert 1 <= out.steps <= t
    chosen = [int(np.argmax(p.data[0])) for p in out.probs]
    if EOS in chosen:
        assert chosen.index(EOS) == out.steps - 1
    else:
        assert out.steps == t
    assert EOS not in out.predictions[0] and SOS not in out.predictions[0]


def test_decoder_gradients_match_finite_differences():
    rng = np.random.default_rng(8)
    for dec in (LinearDecoder(rng, 3, 5, 4, np.float64), LSTMDecoder(rng, 3, 5, 4, np.float64)):
        for p in dec.parameters():
            p.data += rng.normal(0, 0.3, size=p.shape)
        reps = random_reps(rng, b=2, layers=2, d=4)
        targets = np.array([[3, 4, EOS], [4, EOS, EOS]])

        def loss():
            out = dec(reps, targets)
            picked = [ops.sum(ops.log(ops.sum(ops.mul(p, Tensor(np.eye(5)[targets[:, i]])), axis=1))) for i, p in enumerate(out.probs)]
            total = picked[0]
            for x in picked[1:]:
                total = ops.add(total, x)
            return total

        assert grad_check(loss, dec.parameters()) < 1e-4
