"""Full model assembly: encoder, temporal/angular learners, 2D head, 3D lifter.

A clip of V views x T frames flows per-frame through the encoder, the two
recurrent learners run over their own axes, their outputs are concatenated
and mapped by fully connected layers to 21x2 joint coordinates, and a
graph lifter turns those into 21x3 camera-frame millimeters. Ablation
variants drop learners or swap the lifter; a per-frame surrogate variant
replaces both learners with one FC layer for stage-1 training.

Internally the head and lifter work in normalized coordinate spaces (two
fixed architecture constants: 2D scale = image resolution, 3D scale in
mm) so desk-scale step counts can reach millimeter-scale targets; losses
and metrics see pixels and millimeters.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, fields, replace

import numpy as np

from . import iobin
from . import tensor as T
from .encoder import ConvEncoder, EncoderConfig
from .errors import ConfigError, DimensionError, FormatError
from .graph import NUM_JOINTS, AutoEncLifter, GCNLifter, GraphUNet, GraphUNetConfig
from .params import ParamStore, uniform_init
from .recurrent import SequenceLearner, SequenceLearnerConfig

CHECKPOINT_MAGIC = "MVHANDCKPT"
CHECKPOINT_VERSION = 1

# wiring per variant: cell kind per learner (None = learner absent), lifter kind
VARIANT_WIRING = {
    "full": ("lstm", "lstm", "unet"),
    "gru-both": ("gru", "gru", "unet"),
    "lstm_v-gru_t": ("gru", "lstm", "unet"),
    "lstm_t-gru_v": ("lstm", "gru", "unet"),
    "autoenc-lifter": ("lstm", "lstm", "autoenc"),
    "gcn-only-lifter": ("lstm", "lstm", "gcn"),
    "baseline1-no-temporal": (None, "lstm", "unet"),
    "baseline2-no-angular": ("lstm", None, "unet"),
    "baseline3-single-frame": (None, None, "unet"),
    "stage1-surrogate": (None, None, "unet"),
}

VARIANTS = tuple(VARIANT_WIRING)


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "full"
    views: int = 3
    window: int = 5
    resolution: int = 64
    encoder_channels: tuple = (16, 32, 64, 128)
    embedding_size: int = 512
    hidden_size: int = 128
    num_layers: int = 2
    surrogate_width: int = 256
    fc_hidden: int = 128
    dropout_rate: float = 0.25
    adjacency_mode: str = "learned"
    adjacency_seed: int = 1
    lifter_kind: str = "auto"      # auto = whatever the variant wires in
    lifter_tied: bool = True
    unet_nodes: tuple = (21, 10, 4, 1, 4, 10, 21)
    unet_features: tuple = (2, 64, 128, 256, 128, 64, 3)
    coord_scale_2d: float = 0.0   # 0 = use the image resolution
    coord_scale_3d: float = 500.0
    seed: int = 0

    def validate(self) -> None:
        if self.variant not in VARIANT_WIRING:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.views < 1 or self.window < 1:
            raise ConfigError("views and window must be >= 1")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.lifter_kind not in ("auto", "unet", "gcn", "autoenc"):
            raise ConfigError(f"unknown lifter_kind {self.lifter_kind!r}")
        if self.fc_hidden < 1 or self.surrogate_width < 1:
            raise ConfigError("fc widths must be positive")
        if self.coord_scale_3d <= 0:
            raise ConfigError("coord_scale_3d must be positive")
        EncoderConfig(self.resolution, tuple(self.encoder_channels),
                      self.embedding_size).validate()

    @property
    def scale_2d(self) -> float:
        return self.coord_scale_2d if self.coord_scale_2d > 0 else float(self.resolution)

    @property
    def per_frame(self) -> bool:
        temporal, angular, _ = VARIANT_WIRING[self.variant]
        return temporal is None and angular is None

    @property
    def effective_lifter_kind(self) -> str:
        if self.lifter_kind != "auto":
            return self.lifter_kind
        return VARIANT_WIRING[self.variant][2]


def _config_to_items(config: ModelConfig):
    items = []
    for f in fields(config):
        v = getattr(config, f.name)
        if isinstance(v, tuple):
            items.append((f.name, ",".join(str(x) for x in v)))
        else:
            items.append((f.name, repr(v) if isinstance(v, float) else str(v)))
    return items


def _config_from_items(items: dict) -> ModelConfig:
    kwargs = {}
    for f in fields(ModelConfig):
        if f.name not in items:
            continue
        raw = items[f.name]
        default = getattr(ModelConfig, f.name)
        if isinstance(default, bool):
            kwargs[f.name] = raw.lower() in ("1", "true", "yes")
        elif isinstance(default, tuple):
            kwargs[f.name] = tuple(int(x) for x in raw.split(",") if x)
        elif isinstance(default, int):
            kwargs[f.name] = int(raw)
        elif isinstance(default, float):
            kwargs[f.name] = float(raw)
        else:
            kwargs[f.name] = raw
    unknown = set(items) - {f.name for f in fields(ModelConfig)}
    if unknown:
        raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
    return ModelConfig(**kwargs)


class HandPoseNet:
    """The assembled network; parameters live in `self.store` by name."""

    def __init__(self, config: ModelConfig):
        config.validate()
        self.config = config
        self.store = ParamStore()
        rng = np.random.default_rng(config.seed)
        self.encoder = ConvEncoder(
            EncoderConfig(config.resolution, tuple(config.encoder_channels),
                          config.embedding_size),
            self.store, rng)

        temporal_kind, angular_kind, _ = VARIANT_WIRING[config.variant]
        lifter_kind = config.effective_lifter_kind
        self.temporal = None
        self.angular = None
        if temporal_kind:
            self.temporal = SequenceLearner(
                SequenceLearnerConfig("temporal", config.window, config.embedding_size,
                                      config.num_layers, config.hidden_size, temporal_kind),
                self.store, rng, "temporal")
        if angular_kind:
            self.angular = SequenceLearner(
                SequenceLearnerConfig("angular", config.views, config.embedding_size,
                                      config.num_layers, config.hidden_size, angular_kind),
                self.store, rng, "angular")

        if self.temporal and self.angular:
            head_widths = (2 * config.hidden_size, config.fc_hidden, 2 * NUM_JOINTS)
        elif self.temporal or self.angular:
            head_widths = (config.hidden_size, config.fc_hidden, 2 * NUM_JOINTS)
        else:
            # per-frame path: one FC layer standing in for the learners
            head_widths = (config.embedding_size, config.surrogate_width,
                           config.fc_hidden, 2 * NUM_JOINTS)
        self.head_widths = head_widths
        for i in range(len(head_widths) - 1):
            self.store.add(f"head.fc{i}.w",
                           T.Tensor(uniform_init(rng, (head_widths[i], head_widths[i + 1]),
                                                 fan_in=head_widths[i])))
            self.store.add(f"head.fc{i}.b",
                           T.Tensor(np.zeros(head_widths[i + 1], dtype=T.default_dtype())))

        n_lifters = 1 if config.lifter_tied else config.views * config.window
        self.lifters = [self._build_lifter(lifter_kind, rng, "lifter" if n_lifters == 1
                                           else f"lifter{i}")
                        for i in range(n_lifters)]
        self._dropout_base = config.seed
        self._dropout_counter = 0

    def _build_lifter(self, kind, rng, prefix):
        cfg = self.config
        if kind == "unet":
            return GraphUNet(self.store, rng, prefix=prefix,
                             config=GraphUNetConfig(tuple(cfg.unet_nodes),
                                                    tuple(cfg.unet_features)),
                             adjacency_mode=cfg.adjacency_mode,
                             adjacency_seed=cfg.adjacency_seed)
        if kind == "gcn":
            return GCNLifter(self.store, rng, prefix=prefix,
                             adjacency_mode=cfg.adjacency_mode,
                             adjacency_seed=cfg.adjacency_seed)
        if kind == "autoenc":
            return AutoEncLifter(self.store, rng, prefix=prefix)
        raise ConfigError(f"unknown lifter kind {kind!r}")

    # parameter-name groups used by the two-stage trainer
    def encoder_param_names(self):
        return [n for n in self.store.names() if n.startswith("encoder.")]

    def lifter_param_names(self):
        return [n for n in self.store.names() if n.startswith("lifter")]

    def num_params(self) -> int:
        return self.store.num_values()

    def set_dropout_state(self, base: int, counter: int = 0) -> None:
        self._dropout_base = int(base)
        self._dropout_counter = int(counter)

    def _next_dropout_seed(self) -> int:
        seed = (self._dropout_base * 1_000_003 + self._dropout_counter) & 0x7FFFFFFFFFFFFFFF
        self._dropout_counter += 1
        return seed

    def _check_clip(self, clip_shape):
        cfg = self.config
        if len(clip_shape) != 5 or clip_shape[2] != cfg.resolution \
                or clip_shape[3] != cfg.resolution or clip_shape[4] != 3:
            raise DimensionError(
                f"forward: expected clip (V,T,{cfg.resolution},{cfg.resolution},3), "
                f"got {clip_shape}")
        if not self.per_frame and (clip_shape[0] != cfg.views or clip_shape[1] != cfg.window):
            raise DimensionError(
                f"forward: clip grid {clip_shape[:2]} != configured "
                f"({cfg.views}, {cfg.window})")

    @property
    def per_frame(self) -> bool:
        return self.config.per_frame

    def embed_clip(self, clip) -> T.Tensor:
        """Encode all frames of a (V,T,H,W,3) clip into (V, T, embedding)."""
        self._check_clip(np.shape(clip))
        v, t = np.shape(clip)[:2]
        frames = T.Tensor(np.asarray(clip).reshape((v * t,) + np.shape(clip)[2:]))
        emb = self.encoder.encode(frames)
        return T.reshape(emb, (v, t, self.config.embedding_size))

    def heads_from_embeddings(self, emb: T.Tensor, training: bool = False):
        """(V, T, embedding) -> (poses (V,T,21,3) mm, joints2d (V,T,21,2) px)."""
        cfg = self.config
        v, t, _ = emb.shape
        if self.temporal or self.angular:
            parts = []
            if self.temporal:
                parts.append(self.temporal.run(emb))                     # (V,T,H)
            if self.angular:
                swapped = T.transpose(emb, (1, 0, 2))                    # (T,V,E)
                y = self.angular.run(swapped)                            # (T,V,H)
                parts.append(T.transpose(y, (1, 0, 2)))                  # (V,T,H)
            z = parts[0] if len(parts) == 1 else T.concat(parts, axis=2)
            feats = T.reshape(z, (v * t, z.shape[2]))
            if training and cfg.dropout_rate > 0:
                feats = T.dropout(feats, keep_prob=1.0 - cfg.dropout_rate,
                                  seed=self._next_dropout_seed())
        else:
            feats = T.reshape(emb, (v * t, cfg.embedding_size))

        h = feats
        n_fc = len(self.head_widths) - 1
        for i in range(n_fc):
            h = T.add(T.matmul(h, self.store[f"head.fc{i}.w"]), self.store[f"head.fc{i}.b"])
            if i < n_fc - 1:
                h = T.relu(h)
        w_norm = T.reshape(h, (v * t, NUM_JOINTS, 2))

        if len(self.lifters) == 1:
            p_norm = self.lifters[0].lift(w_norm)
        else:
            if v * t != len(self.lifters):
                raise DimensionError(
                    f"forward: untied lifters expect {len(self.lifters)} frames, got {v * t}")
            lifted = [T.reshape(self.lifters[i].lift(
                T.reshape(T.narrow(w_norm, 0, i, 1), (NUM_JOINTS, 2))),
                (1, NUM_JOINTS, 3)) for i in range(v * t)]
            p_norm = T.concat(lifted, axis=0)

        joints2d = T.reshape(T.mul(w_norm, cfg.scale_2d), (v, t, NUM_JOINTS, 2))
        poses = T.reshape(T.mul(p_norm, cfg.coord_scale_3d), (v, t, NUM_JOINTS, 3))
        return poses, joints2d

    def forward(self, clip, training: bool = False):
        """Clip (V,T,H,W,3) in [0,1] -> (poses (V,T,21,3), joints2d (V,T,21,2))."""
        return self.heads_from_embeddings(self.embed_clip(clip), training=training)


def build_variant(config: ModelConfig) -> HandPoseNet:
    return HandPoseNet(config)


def stage1_config_for(config: ModelConfig) -> ModelConfig:
    """The per-frame surrogate sharing the target model's encoder and lifter."""
    return replace(config, variant="stage1-surrogate", lifter_tied=True,
                   lifter_kind=config.effective_lifter_kind)


# ---------------------------------------------------------------------------
# checkpoint serialization: text headers, raw little-endian array records

_write_array = iobin.write_array
_read_line = iobin.read_line
_read_array = iobin.read_array


def save_checkpoint(model: HandPoseNet, path, *, stage: int = 0, epoch: int = 0,
                    seed: int = 0, include_optimizer: bool = True) -> None:
    store = model.store
    with open(path, "wb") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n".encode())
        items = _config_to_items(model.config)
        fh.write(f"config {len(items)}\n".encode())
        for k, v in items:
            fh.write(f"{k}={v}\n".encode())
        frozen = ",".join(sorted(store.frozen)) or "-"
        fh.write(f"meta stage={stage} epoch={epoch} seed={seed} frozen={frozen}\n".encode())
        fh.write(f"params {len(store.params)}\n".encode())
        for name in store.names():
            _write_array(fh, name, store[name].data)
        if include_optimizer:
            fh.write(f"adam {len(store.state)} step={store.step_count}\n".encode())
            for name in sorted(store.state):
                m, v = store.state[name]
                _write_array(fh, name + ".m", m)
                _write_array(fh, name + ".v", v)
        else:
            fh.write(b"adam 0 step=0\n")
        fh.write(b"end\n")


def load_checkpoint(path, expect_variant: str | None = None):
    """Rebuild a model from disk; returns (model, meta dict).

    Raises FormatError for a malformed/truncated file or a version
    mismatch, ConfigError when expect_variant does not match.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    fh = io.BytesIO(data)
    head = _read_line(fh).split(" ")
    if len(head) != 2 or head[0] != CHECKPOINT_MAGIC:
        raise FormatError(f"not a checkpoint file: magic {head[0]!r}")
    if int(head[1]) != CHECKPOINT_VERSION:
        raise FormatError(
            f"checkpoint version {head[1]} unsupported; this build reads version {CHECKPOINT_VERSION}")

    cfg_head = _read_line(fh).split(" ")
    if cfg_head[0] != "config":
        raise FormatError("missing config block")
    items = {}
    for _ in range(int(cfg_head[1])):
        k, _, v = _read_line(fh).partition("=")
        items[k] = v
    config = _config_from_items(items)
    if expect_variant is not None and config.variant != expect_variant:
        raise ConfigError(
            f"checkpoint holds variant {config.variant!r}, expected {expect_variant!r}")

    meta_parts = _read_line(fh).split(" ")
    if meta_parts[0] != "meta":
        raise FormatError("missing meta line")
    meta = dict(p.split("=", 1) for p in meta_parts[1:])
    meta = {"stage": int(meta["stage"]), "epoch": int(meta["epoch"]),
            "seed": int(meta["seed"]),
            "frozen": [] if meta["frozen"] == "-" else meta["frozen"].split(",")}

    model = HandPoseNet(config)
    params_head = _read_line(fh).split(" ")
    if params_head[0] != "params":
        raise FormatError("missing params block")
    n_params = int(params_head[1])
    if n_params != len(model.store.params):
        raise FormatError(
            f"checkpoint has {n_params} parameters, model expects {len(model.store.params)}")
    for _ in range(n_params):
        name, arr = _read_array(fh)
        if name not in model.store:
            raise FormatError(f"unexpected parameter {name!r} in checkpoint")
        tensor = model.store[name]
        if arr.shape != tensor.shape:
            raise FormatError(
                f"parameter {name!r} has shape {arr.shape}, model expects {tensor.shape}")
        tensor.data = arr.astype(tensor.dtype, copy=True)

    adam_head = _read_line(fh).split(" ")
    if adam_head[0] != "adam":
        raise FormatError("missing adam block")
    n_state = int(adam_head[1])
    model.store.step_count = int(adam_head[2].split("=")[1])
    moments = {}
    for _ in range(2 * n_state):
        name, arr = _read_array(fh)
        moments[name] = arr
    for name in {n.rsplit(".", 1)[0] for n in moments}:
        model.store.state[name] = (moments[name + ".m"].astype(T.default_dtype(), copy=True),
                                   moments[name + ".v"].astype(T.default_dtype(), copy=True))

    if _read_line(fh) != "end":
        raise FormatError("missing end marker")
    if meta["frozen"]:
        model.store.freeze(meta["frozen"])
    return model, meta
