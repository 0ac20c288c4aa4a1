"""Per-frame convolutional encoder producing a fixed-size visual embedding.

A plain stack of stride-2 convolution + relu stages followed by global
average pooling and a linear map, trained from scratch. Desk default is
64x64 input and a 512-wide embedding; larger resolutions are just config.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .params import ParamStore, uniform_init


@dataclass(frozen=True)
class EncoderConfig:
    resolution: int = 64
    stage_channels: tuple = (16, 32, 64, 128)
    embedding_size: int = 512
    kernel_size: int = 3

    def validate(self) -> None:
        if self.embedding_size <= 0:
            raise ConfigError(f"embedding_size must be positive, got {self.embedding_size}")
        if not self.stage_channels:
            raise ConfigError("need at least one conv stage")
        stride_total = 2 ** len(self.stage_channels)
        if self.resolution % stride_total:
            raise ConfigError(
                f"resolution {self.resolution} not divisible by 2^{len(self.stage_channels)}")
        if self.kernel_size % 2 == 0:
            raise ConfigError("kernel_size must be odd")


class ConvEncoder:
    """Maps an RGB frame (values in [0, 1]) to an embedding vector."""

    def __init__(self, config: EncoderConfig, store: ParamStore,
                 rng: np.random.Generator, prefix: str = "encoder"):
        config.validate()
        self.config = config
        self.store = store
        self.prefix = prefix
        k = config.kernel_size
        cin = 3
        for i, cout in enumerate(config.stage_channels):
            store.add(f"{prefix}.conv{i}.w",
                      T.Tensor(uniform_init(rng, (k, k, cin, cout), fan_in=k * k * cin)))
            store.add(f"{prefix}.conv{i}.b", T.Tensor(np.zeros(cout, dtype=T.default_dtype())))
            cin = cout
        store.add(f"{prefix}.proj.w",
                  T.Tensor(uniform_init(rng, (cin, config.embedding_size), fan_in=cin)))
        store.add(f"{prefix}.proj.b",
                  T.Tensor(np.zeros(config.embedding_size, dtype=T.default_dtype())))

    def param_names(self):
        return [n for n in self.store.names() if n.startswith(self.prefix + ".")]

    def encode(self, frames) -> T.Tensor:
        """Encode (H,W,3) or a batch (B,H,W,3); single frames return a vector."""
        x = frames if isinstance(frames, T.Tensor) else T.Tensor(frames)
        single = x.ndim == 3
        if single:
            x = T.reshape(x, (1,) + x.shape)
        res = self.config.resolution
        if x.ndim != 4 or x.shape[1] != res or x.shape[2] != res or x.shape[3] != 3:
            raise DimensionError(
                f"encode: expected frames ({res},{res},3), got {frames.shape}")
        k = self.config.kernel_size
        for i in range(len(self.config.stage_channels)):
            w = self.store[f"{self.prefix}.conv{i}.w"]
            b = self.store[f"{self.prefix}.conv{i}.b"]
            x = T.relu(T.add(T.conv2d(x, w, stride=2, padding=k // 2), b))
        x = T.avgpool2d(x, (x.shape[1], x.shape[2]))
        x = T.reshape(x, (x.shape[0], x.shape[3]))
        emb = T.add(T.matmul(x, self.store[f"{self.prefix}.proj.w"]),
                    self.store[f"{self.prefix}.proj.b"])
        if single:
            emb = T.reshape(emb, (self.config.embedding_size,))
        return emb


def encode(frame, encoder: ConvEncoder) -> T.Tensor:
    return encoder.encode(frame)
