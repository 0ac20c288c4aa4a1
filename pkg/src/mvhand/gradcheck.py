"""Central-finite-difference gradient checking for primitives and modules.

The analytic gradient is computed at the precision under test; the
finite-difference reference always runs in float64 so the oracle stays
accurate regardless of build precision. Tolerances: 1e-4 for float32,
1e-6 for float64. The difference step is 1e-3 * max(1, |x|).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

STEP_SCALE = 1e-3

TOLERANCES = {"float32": 1e-4, "float64": 1e-6}


def default_tolerance(dtype) -> float:
    return TOLERANCES[str(np.dtype(dtype))]


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tolerance: float
    n_entries: int

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.name:<34s} max_rel_err={self.max_rel_err:.3e} "
                f"tol={self.tolerance:.0e} entries={self.n_entries} {status}")


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def _sample_indices(shape, sample, rng) -> np.ndarray:
    size = int(np.prod(shape)) if shape else 1
    if sample is None or sample >= size:
        return np.arange(size)
    return rng.choice(size, size=sample, replace=False)


def fd_gradient(forward_fn, tensor: Tensor, indices, step_scale: float = STEP_SCALE) -> np.ndarray:
    """Central differences of forward_fn() w.r.t. selected flat entries."""
    shape = tensor.shape or (1,)
    grads = np.empty(len(indices))
    for pos, idx in enumerate(indices):
        # index by coordinates: reshape(-1) would copy non-contiguous data
        coord = np.unravel_index(idx, shape)
        saved = float(tensor.data[coord])
        h = step_scale * max(1.0, abs(saved))
        tensor.data[coord] = saved + h
        up = forward_fn().item()
        tensor.data[coord] = saved - h
        down = forward_fn().item()
        tensor.data[coord] = saved
        grads[pos] = (up - down) / (2.0 * h)
    return grads


def run_check(name, make_instance, dtype, tolerance=None, sample=None, seed=0,
              step_scale: float = STEP_SCALE) -> CheckResult:
    """Compare analytic vs FD gradients for one differentiable computation.

    make_instance(dtype) must deterministically build the computation and
    return (forward_fn, checked) where `checked` is a list of (label,
    Tensor) whose gradients are to be verified. forward_fn() reads the
    tensors' current data and returns a fresh scalar Tensor.

    Deep compositions (especially through relu) should pass a smaller
    step_scale: truncation error shrinks as h^2 and the probability of an
    FD step crossing a relu kink shrinks as h.
    """
    dtype = str(np.dtype(dtype))
    if tolerance is None:
        tolerance = default_tolerance(dtype)
    rng = np.random.default_rng(seed)

    with T.using_dtype(dtype):
        fwd, checked = make_instance(dtype)
        for _, t in checked:
            t.requires_grad = True
        loss = fwd()
        T.backward(loss, params=[t for _, t in checked])
        analytic = {label: t.grad.copy() for label, t in checked}

    with T.using_dtype("float64"):
        fwd64, checked64 = make_instance("float64")
        worst = 0.0
        total = 0
        for label, t in checked64:
            idx = _sample_indices(t.shape, sample, rng)
            numeric = fd_gradient(fwd64, t, idx, step_scale=step_scale)
            ana = analytic[label].reshape(-1)[idx].astype(np.float64)
            errs = np.abs(ana - numeric) / np.maximum(
                1.0, np.maximum(np.abs(ana), np.abs(numeric)))
            # an FD step that crosses a relu kink reports ~half the slope;
            # re-measure suspects with a smaller step (a genuinely wrong
            # gradient stays wrong at every step size)
            suspects = np.nonzero(errs >= tolerance)[0]
            if len(suspects):
                refined = fd_gradient(fwd64, t, idx[suspects], step_scale=step_scale / 8)
                ref_errs = np.abs(ana[suspects] - refined) / np.maximum(
                    1.0, np.maximum(np.abs(ana[suspects]), np.abs(refined)))
                errs[suspects] = np.minimum(errs[suspects], ref_errs)
            if len(errs):
                worst = max(worst, float(errs.max()))
            total += len(idx)

    return CheckResult(name, worst, tolerance, total)


# ---------------------------------------------------------------------------
# per-primitive random cases


def _smooth(rng, shape):
    return rng.normal(size=shape)


def _away_from_kink(rng, shape):
    x = rng.normal(size=shape)
    return x + np.sign(x) * 0.1 + np.where(x == 0, 0.1, 0.0)


def _rand_shape(rng, max_rank=3, max_dim=5):
    rank = int(rng.integers(1, max_rank + 1))
    return tuple(int(rng.integers(1, max_dim + 1)) for _ in range(rank))


def _primitive_case(name: str, rng):
    """Return (input arrays, build(tensors) -> output Tensor) for one case."""
    if name in ("add", "sub", "mul", "div"):
        shape = _rand_shape(rng)
        a = _smooth(rng, shape)
        if name == "div":
            # keep |denominator| >= 2: FD truncation blows up ~1/b^3
            sign = np.where(_smooth(rng, shape) < 0, -1.0, 1.0)
            b = sign * rng.uniform(2.0, 4.0, size=shape)
        else:
            b = _smooth(rng, shape)
        if rng.random() < 0.4 and len(shape) >= 2 and name != "div":
            b = b[..., :1, :]  # exercise broadcasting
        op = getattr(T, name)
        return [a, b], lambda ts: op(ts[0], ts[1])
    if name == "matmul":
        n, k, m = (int(rng.integers(1, 5)) for _ in range(3))
        if rng.random() < 0.5:
            batch = int(rng.integers(1, 4))
            return [_smooth(rng, (batch, n, k)), _smooth(rng, (k, m))], \
                lambda ts: T.matmul(ts[0], ts[1])
        return [_smooth(rng, (n, k)), _smooth(rng, (k, m))], \
            lambda ts: T.matmul(ts[0], ts[1])
    if name in ("sigmoid", "tanh", "softplus"):
        op = getattr(T, name)
        return [_smooth(rng, _rand_shape(rng))], lambda ts: op(ts[0])
    if name == "relu":
        return [_away_from_kink(rng, _rand_shape(rng))], lambda ts: T.relu(ts[0])
    if name == "sqrt":
        shape = _rand_shape(rng)
        return [rng.uniform(0.5, 2.0, size=shape)], lambda ts: T.sqrt(ts[0])
    if name == "concat":
        rank = int(rng.integers(1, 4))
        axis = int(rng.integers(0, rank))
        base = [int(rng.integers(1, 4)) for _ in range(rank)]
        arrays = []
        for _ in range(int(rng.integers(2, 4))):
            s = list(base)
            s[axis] = int(rng.integers(1, 4))
            arrays.append(_smooth(rng, tuple(s)))
        return arrays, lambda ts: T.concat(ts, axis=axis)
    if name == "conv2d":
        cin, cout = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        k = int(rng.integers(1, 4))
        stride = int(rng.integers(1, 3))
        padding = int(rng.integers(0, 2))
        h = int(rng.integers(k, k + 4))
        w = int(rng.integers(k, k + 4))
        x = _smooth(rng, (int(rng.integers(1, 3)), h, w, cin))
        kern = _smooth(rng, (k, k, cin, cout))
        return [x, kern], lambda ts: T.conv2d(ts[0], ts[1], stride=stride, padding=padding)
    if name == "avgpool2d":
        k = int(rng.integers(1, 4))
        x = _smooth(rng, (int(rng.integers(1, 3)), k * int(rng.integers(1, 4)),
                          k * int(rng.integers(1, 4)), int(rng.integers(1, 3))))
        return [x], lambda ts: T.avgpool2d(ts[0], k)
    if name == "dropout":
        shape = _rand_shape(rng)
        keep = float(rng.uniform(0.5, 0.95))
        seed = int(rng.integers(0, 2 ** 31))
        return [_smooth(rng, shape)], \
            lambda ts: T.dropout(ts[0], keep_prob=keep, seed=seed)
    if name in ("mean", "sum"):
        shape = _rand_shape(rng)
        rank = len(shape)
        choice = rng.random()
        axis = None if choice < 0.4 else tuple(
            sorted(rng.choice(rank, size=int(rng.integers(1, rank + 1)), replace=False).tolist()))
        keepdims = bool(rng.random() < 0.5)
        op = T.mean if name == "mean" else T.tsum
        return [_smooth(rng, shape)], lambda ts: op(ts[0], axis=axis, keepdims=keepdims)
    if name == "reshape":
        shape = _rand_shape(rng)
        return [_smooth(rng, shape)], lambda ts: T.reshape(ts[0], (-1,))
    if name == "transpose":
        shape = _rand_shape(rng, max_rank=4)
        perm = tuple(rng.permutation(len(shape)).tolist())
        return [_smooth(rng, shape)], lambda ts: T.transpose(ts[0], perm)
    if name == "slice":
        shape = _rand_shape(rng)
        axis = int(rng.integers(0, len(shape)))
        start = int(rng.integers(0, shape[axis]))
        length = int(rng.integers(1, shape[axis] - start + 1))
        return [_smooth(rng, shape)], lambda ts: T.narrow(ts[0], axis, start, length)
    raise KeyError(name)


def scalarize(out: Tensor, weights: np.ndarray) -> Tensor:
    """Reduce an op output to a scalar so every entry influences the loss."""
    w = Tensor(weights, dtype=out.dtype)
    return T.tsum(T.mul(out, w))


def check_primitive(name: str, dtype="float64", n_cases: int = 20, seed: int = 0) -> CheckResult:
    """Gradcheck one primitive over n_cases random small shapes."""
    worst = 0.0
    total = 0
    for case in range(n_cases):
        rng = np.random.default_rng(sum(map(ord, name)) * 1009 + seed * 97 + case)
        arrays, build = _primitive_case(name, rng)
        probe = build([Tensor(a, dtype="float64") for a in arrays])
        weights = rng.normal(size=probe.shape)

        def make_instance(dt, arrays=arrays, build=build, weights=weights):
            tensors = [Tensor(a, requires_grad=True, dtype=dt) for a in arrays]
            return (lambda: scalarize(build(tensors), weights),
                    [(f"in{i}", t) for i, t in enumerate(tensors)])

        result = run_check(f"{name}[{case}]", make_instance, dtype, seed=seed)
        worst = max(worst, result.max_rel_err)
        total += result.n_entries
    return CheckResult(name, worst, default_tolerance(dtype), total)


def check_all_primitives(dtype="float64", n_cases: int = 20, seed: int = 0) -> list[CheckResult]:
    return [check_primitive(name, dtype=dtype, n_cases=n_cases, seed=seed)
            for name in T.PRIMITIVES]


# ---------------------------------------------------------------------------
# module-level checks: cells, learners, graph stack, encoder, full model

_MODULE_STEP = 1e-4  # deep relu compositions need the smaller FD step


def _toy_model_config():
    from .pipeline import ModelConfig
    return ModelConfig(variant="full", views=2, window=3, resolution=16,
                       encoder_channels=(2, 4), embedding_size=12, hidden_size=8,
                       surrogate_width=10, fc_hidden=8,
                       unet_nodes=(21, 6, 21), unet_features=(2, 8, 3), seed=21)


def _lstm_cell_instance(dt):
    from .params import ParamStore
    from .recurrent import LSTMCell
    rng = np.random.default_rng(31)
    x = rng.normal(size=(2, 3))
    weights = rng.normal(size=(2, 4))
    with T.using_dtype(dt):
        store = ParamStore()
        cell = LSTMCell(3, 4, store, np.random.default_rng(32), "cell")
        tx = Tensor(x, requires_grad=True, dtype=dt)

    def fwd():
        with T.using_dtype(dt):
            h, c = cell.step(tx, Tensor(np.zeros((2, 4)), dtype=dt),
                             Tensor(np.full((2, 4), 0.2), dtype=dt))
            return scalarize(T.mul(h, c), weights)

    return fwd, [("x", tx)] + [(n, store[n]) for n in store.names()]


def _gru_cell_instance(dt):
    from .params import ParamStore
    from .recurrent import GRUCell
    rng = np.random.default_rng(33)
    x = rng.normal(size=(2, 3))
    weights = rng.normal(size=(2, 4))
    with T.using_dtype(dt):
        store = ParamStore()
        cell = GRUCell(3, 4, store, np.random.default_rng(34), "cell")
        tx = Tensor(x, requires_grad=True, dtype=dt)

    def fwd():
        with T.using_dtype(dt):
            return scalarize(cell.step(tx, Tensor(np.full((2, 4), 0.3), dtype=dt)), weights)

    return fwd, [("x", tx)] + [(n, store[n]) for n in store.names()]


def _learner_instance(cell_kind):
    def make(dt):
        from .params import ParamStore
        from .recurrent import SequenceLearner, SequenceLearnerConfig
        rng = np.random.default_rng(35)
        seq = rng.normal(size=(2, 5, 3))
        weights = rng.normal(size=(2, 5, 4))
        with T.using_dtype(dt):
            store = ParamStore()
            learner = SequenceLearner(
                SequenceLearnerConfig("temporal", 5, 3, 2, 4, cell_kind),
                store, np.random.default_rng(36), "t")
            tseq = Tensor(seq, requires_grad=True, dtype=dt)

        def fwd():
            with T.using_dtype(dt):
                return scalarize(learner.run(tseq), weights)

        return fwd, [("seq", tseq)] + [(n, store[n]) for n in store.names()]

    return make


def _graph_conv_instance(dt):
    from .graph import GraphConv
    from .params import ParamStore
    rng = np.random.default_rng(37)
    x = rng.normal(size=(5, 4))
    weights = rng.normal(size=(5, 3))
    with T.using_dtype(dt):
        store = ParamStore()
        conv = GraphConv(5, 4, 3, store, np.random.default_rng(38), "gc",
                         activation="relu", adjacency_mode="learned")
        tx = Tensor(x, requires_grad=True, dtype=dt)

    def fwd():
        with T.using_dtype(dt):
            return scalarize(conv.forward(tx), weights)

    return fwd, [("x", tx)] + [(n, store[n]) for n in store.names()]


def _pool_unpool_instance(dt):
    from .graph import graph_pool, graph_unpool
    from .params import ParamStore
    rng = np.random.default_rng(39)
    x = rng.normal(size=(21, 3))
    weights = rng.normal(size=(21, 3))
    with T.using_dtype(dt):
        store = ParamStore()
        pool = store.add("pool", Tensor(rng.normal(size=(10, 21)) * 0.3))
        unpool = store.add("unpool", Tensor(rng.normal(size=(21, 10)) * 0.3))
        tx = Tensor(x, requires_grad=True, dtype=dt)

    def fwd():
        with T.using_dtype(dt):
            return scalarize(graph_unpool(graph_pool(tx, pool), unpool), weights)

    return fwd, [("x", tx), ("pool", pool), ("unpool", unpool)]


def _unet_instance(dt):
    from .graph import GraphUNet, GraphUNetConfig
    from .params import ParamStore
    rng = np.random.default_rng(40)
    w = rng.normal(size=(21, 2))
    weights = rng.normal(size=(21, 3))
    with T.using_dtype(dt):
        store = ParamStore()
        unet = GraphUNet(store, np.random.default_rng(41),
                         config=GraphUNetConfig((21, 6, 21), (2, 8, 3)))
        tw = Tensor(w, requires_grad=True, dtype=dt)

    def fwd():
        with T.using_dtype(dt):
            return scalarize(unet.lift(tw), weights)

    return fwd, [("w", tw)] + [(n, store[n]) for n in store.names()]


def _encoder_instance(dt):
    from .encoder import ConvEncoder, EncoderConfig
    from .params import ParamStore
    rng = np.random.default_rng(42)
    frame = rng.random((8, 8, 3))
    weights = rng.normal(size=(7,))
    with T.using_dtype(dt):
        store = ParamStore()
        enc = ConvEncoder(EncoderConfig(resolution=8, stage_channels=(2, 3),
                                        embedding_size=7),
                          store, np.random.default_rng(43))
        tframe = Tensor(frame, requires_grad=True, dtype=dt)

    def fwd():
        with T.using_dtype(dt):
            return scalarize(enc.encode(tframe), weights)

    return fwd, [("frame", tframe)] + [(n, store[n]) for n in store.names()]


def _full_model_instance(dt):
    from .pipeline import build_variant
    rng = np.random.default_rng(44)
    cfg = _toy_model_config()
    clip = rng.random((cfg.views, cfg.window, cfg.resolution, cfg.resolution, 3))
    w_poses = rng.normal(size=(cfg.views, cfg.window, 21, 3))
    w_2d = rng.normal(size=(cfg.views, cfg.window, 21, 2)) * 0.05
    with T.using_dtype(dt):
        model = build_variant(cfg)
        tclip = Tensor(clip, requires_grad=True, dtype=dt)

    def fwd():
        with T.using_dtype(dt):
            poses, joints2d = model.heads_from_embeddings(
                T.reshape(model.encoder.encode(
                    T.reshape(tclip, (cfg.views * cfg.window, cfg.resolution,
                                      cfg.resolution, 3))),
                          (cfg.views, cfg.window, cfg.embedding_size)))
            return T.add(scalarize(poses, w_poses), scalarize(joints2d, w_2d))

    checked = [("clip", tclip)] + [(n, model.store[n]) for n in model.store.names()]
    return fwd, checked


def module_check_specs():
    """(name, make_instance, entry sample size) for every standard check."""
    return [
        ("lstm-cell", _lstm_cell_instance, None),
        ("gru-cell", _gru_cell_instance, None),
        ("learner-lstm", _learner_instance("lstm"), 30),
        ("learner-gru", _learner_instance("gru"), 30),
        ("graph-conv-learned", _graph_conv_instance, None),
        ("pool-unpool", _pool_unpool_instance, None),
        ("graph-unet-lift", _unet_instance, 30),
        ("encoder", _encoder_instance, 30),
        ("full-model", _full_model_instance, 4),
    ]


def run_module_checks(dtype="float64", seed: int = 0) -> list[CheckResult]:
    return [run_check(name, make, dtype, sample=sample, seed=seed,
                      step_scale=_MODULE_STEP)
            for name, make, sample in module_check_specs()]


def run_full_suite(dtype="float64", n_cases: int = 20, seed: int = 0):
    """Primitive + module checks; returns (results, all_passed)."""
    results = check_all_primitives(dtype=dtype, n_cases=n_cases, seed=seed)
    results += run_module_checks(dtype=dtype, seed=seed)
    return results, all(r.passed for r in results)
