import numpy as np
import pytest

from mvhand import tensor as T
from mvhand.errors import ContractError, DimensionError
from mvhand.gradcheck import run_check, scalarize
from mvhand.params import ParamStore
from mvhand.recurrent import (GRUCell, LSTMCell, SequenceLearner, SequenceLearnerConfig,
                              gru_cell_step, lstm_cell_step, run_learner)


@pytest.fixture(autouse=True)
def float64_mode():
    T.set_default_dtype("float64")
    yield
    T.set_default_dtype("float32")


def make_lstm(input_size=1, hidden_size=1, seed=0):
    store = ParamStore()
    cell = LSTMCell(input_size, hidden_size, store, np.random.default_rng(seed), "cell")
    return cell, store


def set_all(store, value):
    for name in store.names():
        store[name].data[...] = value


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def test_zero_parameters_zero_state_gives_zero():
    cell, store = make_lstm(input_size=4, hidden_size=3)
    set_all(store, 0.0)
    h, c = lstm_cell_step(np.array([1.0, -2.0, 0.5, 3.0]), None, None, cell)
    np.testing.assert_array_equal(h.data, np.zeros(3))
    np.testing.assert_array_equal(c.data, np.zeros(3))


def test_saturated_forget_gate_carries_cell_state():
    cell, store = make_lstm()
    set_all(store, 0.0)
    store["cell.b_f"].data[...] = 30.0   # f ~ 1
    store["cell.b_r"].data[...] = -30.0  # r ~ 0
    h, c = lstm_cell_step(np.array([0.3]), np.array([0.1]), np.array([0.7]), cell)
    assert c.data[0] == pytest.approx(0.7, abs=1e-3)


def test_all_ones_weights_hand_evaluation():
    cell, store = make_lstm()
    set_all(store, 1.0)
    for name in store.names():
        if name.startswith("cell.b_"):
            store[name].data[...] = 0.0
    h, c = lstm_cell_step(np.array([1.0]), None, None, cell)
    gate = sigmoid(1.0)
    c_expect = gate * np.tanh(1.0)
    h_expect = gate * np.tanh(c_expect)
    assert c.data[0] == pytest.approx(c_expect, abs=1e-9)
    assert h.data[0] == pytest.approx(h_expect, abs=1e-9)


def test_hidden_state_identity_and_gate_ranges():
    store = ParamStore()
    cell = LSTMCell(6, 5, store, np.random.default_rng(3), "cell")
    rng = np.random.default_rng(4)
    h = T.Tensor(np.zeros((2, 5)))
    c = T.Tensor(np.zeros((2, 5)))
    for _ in range(4):
        x = T.Tensor(rng.normal(size=(2, 6)))
        h, c, gates = cell.step(x, h, c, return_gates=True)
        for g in ("r", "f", "o"):
            assert (gates[g].data > 0).all() and (gates[g].data < 1).all()
        assert (np.abs(gates["c_tilde"].data) < 1).all()
        np.testing.assert_allclose(h.data, gates["o"].data * np.tanh(c.data),
                                   rtol=0, atol=1e-15)


def test_gru_zero_params_zero_state():
    store = ParamStore()
    cell = GRUCell(3, 2, store, np.random.default_rng(0), "g")
    set_all(store, 0.0)
    h = gru_cell_step(np.array([1.0, 2.0, 3.0]), None, cell)
    np.testing.assert_array_equal(h.data, np.zeros(2))


def test_gru_saturated_update_gate_keeps_previous_hidden():
    store = ParamStore()
    cell = GRUCell(2, 2, store, np.random.default_rng(1), "g")
    store["g.b_z"].data[...] = 30.0
    h_prev = np.array([0.4, -0.2])
    h = gru_cell_step(np.array([1.0, -1.0]), h_prev, cell)
    np.testing.assert_allclose(h.data, h_prev, atol=1e-3)


def test_gru_determinism():
    store = ParamStore()
    cell = GRUCell(3, 4, store, np.random.default_rng(2), "g")
    x = np.random.default_rng(5).normal(size=(3,))
    a = gru_cell_step(x, None, cell)
    b = gru_cell_step(x, None, cell)
    np.testing.assert_array_equal(a.data, b.data)


def make_learner(cell_kind="lstm", length=5, layers=2, hidden=8, input_size=6, seed=7):
    store = ParamStore()
    cfg = SequenceLearnerConfig(axis="temporal", sequence_length=length,
                                input_size=input_size, num_layers=layers,
                                hidden_size=hidden, cell_kind=cell_kind)
    return SequenceLearner(cfg, store, np.random.default_rng(seed), "temporal"), store


def test_learner_output_count_and_width():
    learner, _ = make_learner(length=5, hidden=128, input_size=16)
    out = run_learner(np.random.default_rng(0).normal(size=(5, 16)), learner)
    assert out.shape == (5, 128)


def test_learner_length_one_equals_stacked_cell_steps():
    learner, store = make_learner(length=1, layers=2, hidden=4, input_size=3)
    x = np.random.default_rng(1).normal(size=(1, 3))
    out = run_learner(x, learner).data
    h, _ = lstm_cell_step(x[0], None, None, learner.cells[0])
    h2, _ = lstm_cell_step(h, None, None, learner.cells[1])
    np.testing.assert_allclose(out[0], h2.data, atol=1e-12)


def test_learner_rejects_wrong_length_and_empty():
    learner, _ = make_learner(length=3, input_size=2)
    with pytest.raises(DimensionError):
        run_learner(np.zeros((4, 2)), learner)
    with pytest.raises((ContractError, DimensionError)):
        run_learner(np.zeros((0, 2)), learner)


def test_batch_rows_independent():
    # permuting which view's sequence sits in which batch row permutes outputs
    learner, _ = make_learner(length=4, input_size=5)
    seqs = np.random.default_rng(2).normal(size=(3, 4, 5))
    out = learner.run(T.Tensor(seqs)).data
    perm = [2, 0, 1]
    out_perm = learner.run(T.Tensor(seqs[perm])).data
    np.testing.assert_allclose(out_perm, out[perm], atol=1e-12)


def test_causality_along_sequence_axis():
    learner, _ = make_learner(length=5, input_size=3)
    base = np.random.default_rng(3).normal(size=(1, 5, 3))
    out_base = learner.run(T.Tensor(base)).data
    bumped = base.copy()
    bumped[0, 3, :] += 1.0
    out_bump = learner.run(T.Tensor(bumped)).data
    np.testing.assert_array_equal(out_base[0, :3], out_bump[0, :3])
    assert np.abs(out_base[0, 3:] - out_bump[0, 3:]).max() > 0


@pytest.mark.parametrize("cell_kind", ["lstm", "gru"])
def test_gradcheck_through_unrolled_learner(cell_kind):
    seq = np.random.default_rng(8).normal(size=(2, 5, 3))
    weights = np.random.default_rng(9).normal(size=(2, 5, 4))

    def make_instance(dt):
        with T.using_dtype(dt):
            store = ParamStore()
            cfg = SequenceLearnerConfig(axis="temporal", sequence_length=5, input_size=3,
                                        num_layers=2, hidden_size=4, cell_kind=cell_kind)
            learner = SequenceLearner(cfg, store, np.random.default_rng(10), "t")
            tseq = T.Tensor(seq, requires_grad=True, dtype=dt)

        def fwd():
            with T.using_dtype(dt):
                return scalarize(learner.run(tseq), weights)

        return fwd, [("seq", tseq)] + [(n, store[n]) for n in store.names()]

    result = run_check(f"learner-{cell_kind}", make_instance, "float64",
                       sample=25, step_scale=1e-4)
    assert result.passed, result.line()


def test_gradcheck_single_cells():
    x = np.random.default_rng(11).normal(size=(2, 3))
    weights = np.random.default_rng(12).normal(size=(2, 4))

    def make_lstm_instance(dt):
        with T.using_dtype(dt):
            store = ParamStore()
            cell = LSTMCell(3, 4, store, np.random.default_rng(13), "c")
            tx = T.Tensor(x, requires_grad=True, dtype=dt)

        def fwd():
            with T.using_dtype(dt):
                h, c = cell.step(tx, T.Tensor(np.zeros((2, 4)), dtype=dt),
                                 T.Tensor(np.zeros((2, 4)), dtype=dt))
                return scalarize(T.mul(h, c), weights)

        return fwd, [("x", tx)] + [(n, store[n]) for n in store.names()]

    assert run_check("lstm-cell", make_lstm_instance, "float64").passed

    def make_gru_instance(dt):
        with T.using_dtype(dt):
            store = ParamStore()
            cell = GRUCell(3, 4, store, np.random.default_rng(14), "c")
            tx = T.Tensor(x, requires_grad=True, dtype=dt)

        def fwd():
            with T.using_dtype(dt):
                h = cell.step(tx, T.Tensor(np.full((2, 4), 0.3), dtype=dt))
                return scalarize(h, weights)

        return fwd, [("x", tx)] + [(n, store[n]) for n in store.names()]

    assert run_check("gru-cell", make_gru_instance, "float64").passed
