"""LSTM and GRU cells plus the stacked sequence learners built from them.

The same cell runs over either axis of a multi-view video: a temporal
learner consumes one view's frames in time order, an angular learner
consumes the simultaneous views in camera order. Both are unidirectional
with zero initial states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DimensionError
from .params import ParamStore, uniform_init


def _linear_gate(x, h, wx, wh, b):
    return T.add(T.add(T.matmul(x, T.transpose(wx, (1, 0))),
                       T.matmul(h, T.transpose(wh, (1, 0)))), b)


class LSTMCell:
    """One LSTM unit: input gate r, forget f, output o, candidate cell c.

    Weight matrices are (hidden_size, input_size) for the x-weights and
    (hidden_size, hidden_size) for the h-weights; biases are vectors.
    """

    GATES = ("r", "f", "o", "c")

    def __init__(self, input_size: int, hidden_size: int, store: ParamStore,
                 rng: np.random.Generator, prefix: str):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.store = store
        self.prefix = prefix
        for gate in self.GATES:
            store.add(f"{prefix}.w_{gate}x",
                      T.Tensor(uniform_init(rng, (hidden_size, input_size), fan_in=input_size)))
            store.add(f"{prefix}.w_{gate}h",
                      T.Tensor(uniform_init(rng, (hidden_size, hidden_size), fan_in=hidden_size)))
            store.add(f"{prefix}.b_{gate}", T.Tensor(np.zeros(hidden_size, dtype=T.default_dtype())))

    def _p(self, name):
        return self.store[f"{self.prefix}.{name}"]

    def step(self, x, h_prev, c_prev, return_gates: bool = False):
        r = T.sigmoid(_linear_gate(x, h_prev, self._p("w_rx"), self._p("w_rh"), self._p("b_r")))
        f = T.sigmoid(_linear_gate(x, h_prev, self._p("w_fx"), self._p("w_fh"), self._p("b_f")))
        o = T.sigmoid(_linear_gate(x, h_prev, self._p("w_ox"), self._p("w_oh"), self._p("b_o")))
        c_tilde = T.tanh(_linear_gate(x, h_prev, self._p("w_cx"), self._p("w_ch"), self._p("b_c")))
        c = T.add(T.mul(r, c_tilde), T.mul(f, c_prev))
        h = T.mul(o, T.tanh(c))
        if return_gates:
            return h, c, {"r": r, "f": f, "o": o, "c_tilde": c_tilde}
        return h, c


class GRUCell:
    """One GRU unit: update gate z, reset gate r, candidate n.

    z saturated at 1 copies the previous hidden state through unchanged.
    """

    GATES = ("z", "r", "n")

    def __init__(self, input_size: int, hidden_size: int, store: ParamStore,
                 rng: np.random.Generator, prefix: str):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.store = store
        self.prefix = prefix
        for gate in self.GATES:
            store.add(f"{prefix}.w_{gate}x",
                      T.Tensor(uniform_init(rng, (hidden_size, input_size), fan_in=input_size)))
            store.add(f"{prefix}.w_{gate}h",
                      T.Tensor(uniform_init(rng, (hidden_size, hidden_size), fan_in=hidden_size)))
            store.add(f"{prefix}.b_{gate}", T.Tensor(np.zeros(hidden_size, dtype=T.default_dtype())))

    def _p(self, name):
        return self.store[f"{self.prefix}.{name}"]

    def step(self, x, h_prev, return_gates: bool = False):
        z = T.sigmoid(_linear_gate(x, h_prev, self._p("w_zx"), self._p("w_zh"), self._p("b_z")))
        r = T.sigmoid(_linear_gate(x, h_prev, self._p("w_rx"), self._p("w_rh"), self._p("b_r")))
        n = T.tanh(_linear_gate(x, T.mul(r, h_prev),
                                self._p("w_nx"), self._p("w_nh"), self._p("b_n")))
        h = T.add(T.mul(z, h_prev), T.mul(T.sub(1.0, z), n))
        if return_gates:
            return h, {"z": z, "r": r, "n": n}
        return h


def _as_batched(x, width_name):
    t = x if isinstance(x, T.Tensor) else T.Tensor(x)
    if t.ndim == 1:
        return T.reshape(t, (1, t.shape[0])), True
    if t.ndim != 2:
        raise DimensionError(f"{width_name}: expected 1-D or 2-D input, got {t.shape}")
    return t, False


def lstm_cell_step(x, h_prev, c_prev, params: LSTMCell):
    """Single cell step; vectors are promoted to a batch of one."""
    xb, squeeze = _as_batched(x, "lstm_cell_step")
    hidden = params.hidden_size
    if xb.shape[1] != params.input_size:
        raise DimensionError(
            f"lstm_cell_step: input width {xb.shape[1]} != cell input size {params.input_size}")
    zeros = np.zeros((xb.shape[0], hidden), dtype=T.default_dtype())
    hb = _as_batched(h_prev, "lstm_cell_step")[0] if h_prev is not None else T.Tensor(zeros)
    cb = _as_batched(c_prev, "lstm_cell_step")[0] if c_prev is not None else T.Tensor(zeros)
    h, c = params.step(xb, hb, cb)
    if squeeze:
        return T.reshape(h, (hidden,)), T.reshape(c, (hidden,))
    return h, c


def gru_cell_step(x, h_prev, params: GRUCell):
    xb, squeeze = _as_batched(x, "gru_cell_step")
    hidden = params.hidden_size
    if xb.shape[1] != params.input_size:
        raise DimensionError(
            f"gru_cell_step: input width {xb.shape[1]} != cell input size {params.input_size}")
    zeros = np.zeros((xb.shape[0], hidden), dtype=T.default_dtype())
    hb = _as_batched(h_prev, "gru_cell_step")[0] if h_prev is not None else T.Tensor(zeros)
    h = params.step(xb, hb)
    if squeeze:
        return T.reshape(h, (hidden,))
    return h


@dataclass(frozen=True)
class SequenceLearnerConfig:
    axis: str                      # "temporal" or "angular"
    sequence_length: int
    input_size: int
    num_layers: int = 2
    hidden_size: int = 128
    cell_kind: str = "lstm"        # "lstm" or "gru"

    def validate(self) -> None:
        if self.axis not in ("temporal", "angular"):
            raise ConfigError(f"unknown learner axis {self.axis!r}")
        if self.sequence_length < 1:
            raise ConfigError("sequence_length must be >= 1")
        if self.num_layers < 1:
            raise ConfigError("num_layers must be >= 1")
        if self.cell_kind not in ("lstm", "gru"):
            raise ConfigError(f"unknown cell kind {self.cell_kind!r}")


class SequenceLearner:
    """Stacked unidirectional recurrent layers over one sequence axis.

    Layer k consumes layer k-1's full hidden sequence; there is no
    inter-layer dropout and all initial states are zero.
    """

    def __init__(self, config: SequenceLearnerConfig, store: ParamStore,
                 rng: np.random.Generator, prefix: str):
        config.validate()
        self.config = config
        self.cells = []
        cell_cls = LSTMCell if config.cell_kind == "lstm" else GRUCell
        in_size = config.input_size
        for layer in range(config.num_layers):
            self.cells.append(cell_cls(in_size, config.hidden_size, store, rng,
                                       prefix=f"{prefix}.l{layer}"))
            in_size = config.hidden_size

    def run(self, seq: T.Tensor) -> T.Tensor:
        """(B, L, D) -> (B, L, hidden); one output per input position."""
        if seq.ndim != 3:
            raise DimensionError(f"learner: expected (B, L, D), got {seq.shape}")
        batch, length, _ = seq.shape
        if length == 0:
            raise ContractError("learner: empty sequence")
        if length != self.config.sequence_length:
            raise DimensionError(
                f"learner: sequence length {length} != configured {self.config.sequence_length}")
        hidden = self.config.hidden_size
        for cell in self.cells:
            zeros = T.Tensor(np.zeros((batch, hidden)), dtype=seq.dtype)
            h = zeros
            c = zeros
            outs = []
            for k in range(length):
                xk = T.reshape(T.narrow(seq, 1, k, 1), (batch, seq.shape[2]))
                if isinstance(cell, LSTMCell):
                    h, c = cell.step(xk, h, c)
                else:
                    h = cell.step(xk, h)
                outs.append(T.reshape(h, (batch, 1, hidden)))
            seq = T.concat(outs, axis=1)
        return seq


def run_learner(embeddings, learner: SequenceLearner) -> T.Tensor:
    """Spec surface: a (L, D) sequence of vectors -> (L, hidden) outputs."""
    x = embeddings if isinstance(embeddings, T.Tensor) else T.Tensor(embeddings)
    if x.ndim != 2:
        raise DimensionError(f"run_learner: expected (L, D), got {x.shape}")
    out = learner.run(T.reshape(x, (1,) + x.shape))
    return T.reshape(out, (x.shape[0], learner.config.hidden_size))
