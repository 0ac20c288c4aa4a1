"""Graph convolutions over the 21-joint hand graph and the 2D->3D lifters.

Three lifter shapes: the graph U-Net (encoder-decoder with trainable
pooling matrices and skip concatenation), a flat 3-layer GCN, and an MLP
autoencoder used by the no-graph ablation. Adjacency is either learned
per layer (softplus-positive, normalization differentiated) or a fixed
binary graph (hand skeleton / seeded random).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError, NumericError
from .params import ParamStore, uniform_init

NUM_JOINTS = 21

# wrist -> MCP -> PIP -> DIP -> TIP per finger (thumb, index, middle, ring, pinkie)
HAND_BONES = tuple(
    (0, 1 + 4 * f) for f in range(5)
) + tuple(
    (1 + 4 * f + j, 2 + 4 * f + j) for f in range(5) for j in range(3)
)

ADJACENCY_MODES = ("learned", "hand-skeleton", "random-seeded")


def hand_skeleton_adjacency() -> np.ndarray:
    """Binary 21x21 adjacency of the 20-bone kinematic tree."""
    a = np.zeros((NUM_JOINTS, NUM_JOINTS))
    for i, j in HAND_BONES:
        a[i, j] = a[j, i] = 1.0
    return a


def random_binary_adjacency(n: int, seed: int, density: float = 0.3) -> np.ndarray:
    """Symmetric binary graph with self-loops excluded and no isolated rows."""
    rng = np.random.default_rng(seed)
    upper = rng.random((n, n)) < density
    a = np.triu(upper, k=1)
    a = (a | a.T).astype(float)
    for i in range(n):                      # Ahat = A + I keeps degrees positive anyway,
        if n > 1 and a[i].sum() == 0:       # but avoid fully isolated nodes for variety
            j = int(rng.integers(0, n - 1))
            j = j + 1 if j >= i else j
            a[i, j] = a[j, i] = 1.0
    return a


def complete_adjacency(n: int) -> np.ndarray:
    return np.ones((n, n)) - np.eye(n)


def normalize_adjacency(a, eps: float = 0.0) -> T.Tensor:
    """Symmetric normalization D^-1/2 (A + I) D^-1/2, differentiable in A.

    `eps` is added inside the square root; the learned-adjacency path uses
    1e-8, the exact binary algebra keeps the default 0.
    """
    a = a if isinstance(a, T.Tensor) else T.Tensor(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"normalize_adjacency: expected square matrix, got {a.shape}")
    n = a.shape[0]
    ahat = T.add(a, T.Tensor(np.eye(n), dtype=a.dtype))
    deg = T.tsum(ahat, axis=1)
    if (deg.data <= 0).any():
        raise NumericError("normalize_adjacency: non-positive node degree")
    inv_sqrt = T.div(1.0, T.sqrt(T.add(deg, float(eps))))
    col = T.reshape(inv_sqrt, (n, 1))
    row = T.reshape(inv_sqrt, (1, n))
    return T.mul(T.mul(col, ahat), row)


def fixed_adjacency(mode: str, nodes: int, seed: int) -> np.ndarray:
    """Binary adjacency for the non-learned modes.

    The kinematic tree only exists at 21 nodes; pooled levels fall back to
    complete graphs in hand-skeleton mode.
    """
    if mode == "hand-skeleton":
        return hand_skeleton_adjacency() if nodes == NUM_JOINTS else complete_adjacency(nodes)
    if mode == "random-seeded":
        return random_binary_adjacency(nodes, seed)
    raise ConfigError(f"no fixed adjacency for mode {mode!r}")


class GraphConv:
    """One layer Y = act(Abar X W) with its own (possibly learned) adjacency."""

    def __init__(self, nodes: int, f_in: int, f_out: int, store: ParamStore,
                 rng: np.random.Generator, prefix: str, activation: str = "relu",
                 adjacency_mode: str = "learned", adjacency_seed: int = 0):
        if adjacency_mode not in ADJACENCY_MODES:
            raise ConfigError(f"unknown adjacency mode {adjacency_mode!r}")
        self.nodes = nodes
        self.f_in = f_in
        self.f_out = f_out
        self.activation = activation
        self.adjacency_mode = adjacency_mode
        self.store = store
        self.prefix = prefix
        store.add(f"{prefix}.w", T.Tensor(uniform_init(rng, (f_in, f_out), fan_in=f_in)))
        if adjacency_mode == "learned":
            store.add(f"{prefix}.adj",
                      T.Tensor(uniform_init(rng, (nodes, nodes), fan_in=nodes)))
            self._fixed_norm = None
        else:
            binary = fixed_adjacency(adjacency_mode, nodes, adjacency_seed)
            self._fixed_norm = normalize_adjacency(binary).data

    def normalized_adjacency(self) -> T.Tensor:
        if self.adjacency_mode == "learned":
            positive = T.softplus(self.store[f"{self.prefix}.adj"])
            return normalize_adjacency(positive, eps=1e-8)
        return T.Tensor(self._fixed_norm)

    def forward(self, x: T.Tensor) -> T.Tensor:
        if x.shape[-2] != self.nodes or x.shape[-1] != self.f_in:
            raise DimensionError(
                f"graph_conv: expected (..., {self.nodes}, {self.f_in}), got {x.shape}")
        y = T.matmul(self.normalized_adjacency(), T.matmul(x, self.store[f"{self.prefix}.w"]))
        if self.activation == "relu":
            return T.relu(y)
        return y


def graph_conv(x, layer: GraphConv) -> T.Tensor:
    x = x if isinstance(x, T.Tensor) else T.Tensor(x)
    return layer.forward(x)


def graph_pool(x, matrix) -> T.Tensor:
    """(..., N_in, F) -> (..., N_out, F) through a trainable aggregation matrix."""
    x = x if isinstance(x, T.Tensor) else T.Tensor(x)
    if x.shape[-2] != matrix.shape[1]:
        raise DimensionError(
            f"graph_pool: input has {x.shape[-2]} nodes, matrix expects {matrix.shape[1]}")
    return T.matmul(matrix, x)


graph_unpool = graph_pool  # expansion is the same contraction with a (N_in, N_out) matrix


@dataclass(frozen=True)
class GraphUNetConfig:
    nodes: tuple = (21, 10, 4, 1, 4, 10, 21)
    features: tuple = (2, 64, 128, 256, 128, 64, 3)

    def validate(self) -> None:
        if len(self.nodes) != len(self.features):
            raise ConfigError("nodes and features schedules must have equal length")
        if len(self.nodes) < 3 or len(self.nodes) % 2 == 0:
            raise ConfigError("node schedule must be odd-length (encoder, bottleneck, decoder)")
        if self.nodes[0] != NUM_JOINTS or self.nodes[-1] != NUM_JOINTS:
            raise ConfigError(f"node schedule must start and end at {NUM_JOINTS}")
        if tuple(self.nodes) != tuple(reversed(self.nodes)):
            raise ConfigError("node schedule must be palindromic")
        if any(n < 1 for n in self.nodes):
            raise ConfigError("node counts must be positive")

    @property
    def depth(self) -> int:
        return (len(self.nodes) - 1) // 2


class GraphUNet:
    """Encoder-decoder of graph convolutions lifting 21x2 to 21x3.

    Pooling/unpooling are dense trainable matrices; decoder features are
    concatenated with the paired encoder level's output before each conv.
    The input coordinates are augmented with a constant homogeneous
    column (u, v, 1) so the first layer has a direct path for constant
    offsets; each layer itself stays Y = act(Abar X W).
    """

    def __init__(self, store: ParamStore, rng: np.random.Generator,
                 prefix: str = "lifter", config: GraphUNetConfig | None = None,
                 adjacency_mode: str = "learned", adjacency_seed: int = 0):
        config = config or GraphUNetConfig()
        config.validate()
        self.config = config
        self.store = store
        self.prefix = prefix
        depth = config.depth
        nodes, feats = config.nodes, config.features

        self.enc_convs = [
            GraphConv(nodes[i], feats[i] + (1 if i == 0 else 0), feats[i + 1], store, rng,
                      prefix=f"{prefix}.enc{i}", activation="relu",
                      adjacency_mode=adjacency_mode, adjacency_seed=adjacency_seed + i)
            for i in range(depth)
        ]
        self.pools = [
            store.add(f"{prefix}.pool{i}",
                      T.Tensor(uniform_init(rng, (nodes[i + 1], nodes[i]), fan_in=nodes[i])))
            for i in range(depth)
        ]
        self.bottleneck = GraphConv(nodes[depth], feats[depth], feats[depth], store, rng,
                                    prefix=f"{prefix}.mid", activation="relu",
                                    adjacency_mode=adjacency_mode,
                                    adjacency_seed=adjacency_seed + depth)
        self.unpools = []
        self.dec_convs = []
        for i in reversed(range(depth)):
            self.unpools.append(
                store.add(f"{prefix}.unpool{i}",
                          T.Tensor(uniform_init(rng, (nodes[i], nodes[i + 1]), fan_in=nodes[i + 1]))))
            level = len(nodes) - 1 - i
            f_in = feats[level - 1] + feats[i + 1]  # unpooled features + encoder skip
            last = (i == 0)
            self.dec_convs.append(
                GraphConv(nodes[i], f_in, feats[level], store, rng,
                          prefix=f"{prefix}.dec{i}",
                          activation="identity" if last else "relu",
                          adjacency_mode=adjacency_mode,
                          adjacency_seed=adjacency_seed + depth + 1 + i))

    @property
    def num_graph_conv_layers(self) -> int:
        return len(self.enc_convs) + 1 + len(self.dec_convs)

    def lift(self, w) -> T.Tensor:
        """(21, 2) or batched (..., 21, 2) -> same leading shape x (21, 3)."""
        x = w if isinstance(w, T.Tensor) else T.Tensor(w)
        if x.shape[-2:] != (NUM_JOINTS, self.config.features[0]):
            raise DimensionError(
                f"lift: expected (..., {NUM_JOINTS}, {self.config.features[0]}), got {x.shape}")
        x = _with_homogeneous_column(x)
        skips = []
        for conv, pool in zip(self.enc_convs, self.pools):
            x = conv.forward(x)
            skips.append(x)
            x = graph_pool(x, pool)
        x = self.bottleneck.forward(x)
        for unpool, conv, skip in zip(self.unpools, self.dec_convs, reversed(skips)):
            x = graph_unpool(x, unpool)
            x = T.concat([x, skip], axis=-1)
            x = conv.forward(x)
        return x


def _with_homogeneous_column(x: T.Tensor) -> T.Tensor:
    ones = T.Tensor(np.ones(x.shape[:-1] + (1,)), dtype=x.dtype)
    return T.concat([x, ones], axis=-1)


class GCNLifter:
    """Flat lifter: exactly three graph-conv layers on the 21-node graph."""

    def __init__(self, store: ParamStore, rng: np.random.Generator,
                 prefix: str = "lifter", hidden: int = 64,
                 adjacency_mode: str = "learned", adjacency_seed: int = 0):
        widths = (3, hidden, hidden, 3)  # input is (u, v, 1) homogeneous
        self.convs = [
            GraphConv(NUM_JOINTS, widths[i], widths[i + 1], store, rng,
                      prefix=f"{prefix}.gc{i}",
                      activation="identity" if i == 2 else "relu",
                      adjacency_mode=adjacency_mode, adjacency_seed=adjacency_seed + i)
            for i in range(3)
        ]

    @property
    def num_graph_conv_layers(self) -> int:
        return len(self.convs)

    def lift(self, w) -> T.Tensor:
        x = w if isinstance(w, T.Tensor) else T.Tensor(w)
        if x.shape[-2:] != (NUM_JOINTS, 2):
            raise DimensionError(f"lift: expected (..., {NUM_JOINTS}, 2), got {x.shape}")
        x = _with_homogeneous_column(x)
        for conv in self.convs:
            x = conv.forward(x)
        return x


class AutoEncLifter:
    """No-graph ablation: a flat MLP autoencoder over the 42 coordinates."""

    WIDTHS = (42, 128, 64, 32, 64, 128, 63)

    def __init__(self, store: ParamStore, rng: np.random.Generator, prefix: str = "lifter"):
        self.store = store
        self.prefix = prefix
        for i in range(len(self.WIDTHS) - 1):
            store.add(f"{prefix}.fc{i}.w",
                      T.Tensor(uniform_init(rng, (self.WIDTHS[i], self.WIDTHS[i + 1]),
                                            fan_in=self.WIDTHS[i])))
            store.add(f"{prefix}.fc{i}.b",
                      T.Tensor(np.zeros(self.WIDTHS[i + 1], dtype=T.default_dtype())))

    @property
    def num_graph_conv_layers(self) -> int:
        return 0

    def lift(self, w) -> T.Tensor:
        x = w if isinstance(w, T.Tensor) else T.Tensor(w)
        if x.shape[-2:] != (NUM_JOINTS, 2):
            raise DimensionError(f"lift: expected (..., {NUM_JOINTS}, 2), got {x.shape}")
        lead = x.shape[:-2]
        flat = T.reshape(x, (-1, 42))
        n_layers = len(self.WIDTHS) - 1
        for i in range(n_layers):
            w_mat = self.store[f"{self.prefix}.fc{i}.w"]
            b = self.store[f"{self.prefix}.fc{i}.b"]
            flat = T.add(T.matmul(flat, w_mat), b)
            if i < n_layers - 1:
                flat = T.relu(flat)
        return T.reshape(flat, lead + (NUM_JOINTS, 3))


def lift_2d_to_3d(w, lifter) -> T.Tensor:
    """Spec surface: 21x2 joint coordinates -> 21x3 camera coordinates."""
    x = w if isinstance(w, T.Tensor) else T.Tensor(w)
    if x.shape[-2:] != (NUM_JOINTS, 2):
        raise DimensionError(f"lift_2d_to_3d: expected (..., 21, 2), got {x.shape}")
    return lifter.lift(x)
