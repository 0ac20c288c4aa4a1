"""Two-stage training: per-frame stage 1, sequence-aware stage 2.

Stage 1 trains the encoder, the per-frame FC surrogate and the lifter on
independent frames with alpha*L2D + L3D. Stage 2 rebuilds the target
variant, copies the stage-1 encoder (frozen bit-for-bit) and lifter,
re-initializes the head and learners, and trains on whole clips with the
grid-averaged 3D loss. The learning rate steps down by a fixed factor
every decay period. Batches are frames in stage 1, clips in stage 2.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .errors import ConfigError, WorkflowError
from .losses import loss_stage1, loss_stage2
from .params import adam_step
from .pipeline import HandPoseNet, ModelConfig, build_variant, stage1_config_for


@dataclass(frozen=True)
class TrainingConfig:
    stage: int
    epochs: int
    batch_size: int
    learning_rate: float
    weight_decay: float
    decay_period: int
    decay_factor: float = 0.1
    alpha: float = 0.01
    seed: int = 0
    cache_embeddings: bool = True   # stage 2 only; valid because the encoder is frozen

    def validate(self) -> None:
        if self.stage not in (1, 2):
            raise ConfigError(f"stage must be 1 or 2, got {self.stage}")
        if self.epochs < 0 or self.batch_size < 1 or self.decay_period < 1:
            raise ConfigError("epochs >= 0, batch_size >= 1, decay_period >= 1 required")
        if self.learning_rate <= 0 or self.weight_decay < 0 or self.alpha < 0:
            raise ConfigError("rates must be positive, alpha and decay non-negative")


# paper-scale schedules; desk variants scale the epoch budget and keep
# the decay period proportional (100/500 and 100/400 of the epochs)
def paper_stage1(**overrides) -> TrainingConfig:
    cfg = TrainingConfig(stage=1, epochs=500, batch_size=64, learning_rate=0.001,
                         weight_decay=0.1, decay_period=100)
    return replace(cfg, **overrides) if overrides else cfg


def paper_stage2(**overrides) -> TrainingConfig:
    cfg = TrainingConfig(stage=2, epochs=400, batch_size=8, learning_rate=0.006,
                         weight_decay=0.07, decay_period=100)
    return replace(cfg, **overrides) if overrides else cfg


def desk_stage1(**overrides) -> TrainingConfig:
    merged = {"epochs": 60, "decay_period": 12}
    merged.update(overrides)
    return paper_stage1(**merged)


def desk_stage2(**overrides) -> TrainingConfig:
    merged = {"epochs": 40, "decay_period": 10}
    merged.update(overrides)
    return paper_stage2(**merged)


def learning_rate_at(config: TrainingConfig, epoch: int) -> float:
    return config.learning_rate * config.decay_factor ** (epoch // config.decay_period)


def _log(log_lines, epoch, stage, lr, loss) -> None:
    log_lines.append(f"epoch={epoch} stage={stage} lr={lr!r} loss={loss!r}")


def flatten_frames(clips):
    """All (view, frame) samples of the clips as independent frame records."""
    images, gt2d, gt3d = [], [], []
    for clip in clips:
        v, t = clip.images.shape[:2]
        images.append(clip.images.reshape((v * t,) + clip.images.shape[2:]))
        gt2d.append(clip.joints2d.reshape(v * t, 21, 2))
        gt3d.append(clip.joints3d_cam.reshape(v * t, 21, 3))
    return (np.concatenate(images), np.concatenate(gt2d), np.concatenate(gt3d))


def train_stage1(model: HandPoseNet, clips, config: TrainingConfig, log_lines) -> None:
    """Optimize the per-frame surrogate on shuffled frame batches."""
    config.validate()
    if not model.per_frame:
        raise WorkflowError("stage 1 expects the per-frame surrogate variant")
    images, gt2d, gt3d = flatten_frames(clips)
    n = images.shape[0]
    rng = np.random.default_rng(config.seed)
    model.set_dropout_state(config.seed)
    for epoch in range(config.epochs):
        lr = learning_rate_at(config, epoch)
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            model.store.zero_grads()
            frames = images[batch][:, None]     # (B, 1, H, W, 3) one-frame grid
            poses, joints2d = model.forward(frames, training=True)
            loss = loss_stage1(
                T.reshape(joints2d, (len(batch), 21, 2)), gt2d[batch],
                T.reshape(poses, (len(batch), 21, 3)), gt3d[batch],
                alpha=config.alpha)
            T.backward(loss, params=model.store)
            adam_step(model.store, lr, config.weight_decay)
            epoch_loss += loss.item()
            n_batches += 1
        _log(log_lines, epoch, 1, lr, epoch_loss / max(n_batches, 1))


def train_stage2(model: HandPoseNet, clips, config: TrainingConfig, log_lines) -> None:
    """Optimize learners, head and lifter on whole clips; encoder stays frozen."""
    config.validate()
    frozen = [n for n in model.encoder_param_names() if n in model.store.frozen]
    if len(frozen) != len(model.encoder_param_names()):
        raise WorkflowError("stage 2 requires the encoder to be frozen")
    cached = None
    if config.cache_embeddings:
        # the encoder is frozen and dropout sits downstream, so per-clip
        # embeddings are constants; computing them once per run is pure speed
        cached = [model.embed_clip(clip.images).data.copy() for clip in clips]
    rng = np.random.default_rng(config.seed)
    model.set_dropout_state(config.seed + 1)
    n = len(clips)
    for epoch in range(config.epochs):
        lr = learning_rate_at(config, epoch)
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            model.store.zero_grads()
            losses = []
            for idx in batch:
                clip = clips[idx]
                if cached is not None:
                    poses, _ = model.heads_from_embeddings(T.Tensor(cached[idx]),
                                                           training=True)
                else:
                    poses, _ = model.forward(clip.images, training=True)
                losses.append(loss_stage2(poses, clip.joints3d_cam))
            total = losses[0] if len(losses) == 1 else \
                T.div(sum(losses[1:], start=losses[0]), float(len(losses)))
            T.backward(total, params=model.store)
            adam_step(model.store, lr, config.weight_decay)
            epoch_loss += total.item()
            n_batches += 1
        _log(log_lines, epoch, 2, lr, epoch_loss / max(n_batches, 1))


def transfer_stage1_weights(target: HandPoseNet, stage1: HandPoseNet) -> None:
    """Copy encoder + lifter from the stage-1 surrogate, then freeze the encoder."""
    if stage1.config.variant != "stage1-surrogate":
        raise WorkflowError(
            f"stage-2 warm start needs a stage1-surrogate checkpoint, "
            f"got {stage1.config.variant!r}")
    names = stage1.encoder_param_names() + (
        stage1.lifter_param_names() if target.config.lifter_tied else [])
    if target.config.lifter_tied:
        pairs = [(n, n) for n in names]
    else:
        pairs = [(n, n) for n in stage1.encoder_param_names()]
        # replicate the single stage-1 lifter into every untied copy
        for src in stage1.lifter_param_names():
            suffix = src.split(".", 1)[1]
            for i in range(target.config.views * target.config.window):
                pairs.append((f"lifter{i}.{suffix}", src))
    for dst, src in pairs:
        if dst not in target.store or src not in stage1.store:
            raise WorkflowError(f"cannot transfer parameter {src!r} -> {dst!r}")
        if target.store[dst].shape != stage1.store[src].shape:
            raise WorkflowError(f"shape mismatch transferring {src!r}")
        target.store[dst].data = stage1.store[src].data.copy()
    target.store.freeze(target.encoder_param_names())


def train_two_stage(model_config: ModelConfig, train_clips,
                    stage1_cfg: TrainingConfig, stage2_cfg: TrainingConfig,
                    stage1_model: HandPoseNet | None = None):
    """Run both stages; returns (final model, stage-1 model, log lines)."""
    if stage1_cfg.stage != 1 or stage2_cfg.stage != 2:
        raise ConfigError("pass a stage-1 and a stage-2 TrainingConfig in that order")
    log_lines = []
    if stage1_model is None:
        stage1_model = build_variant(stage1_config_for(model_config))
        train_stage1(stage1_model, train_clips, stage1_cfg, log_lines)
    model = build_variant(model_config)
    transfer_stage1_weights(model, stage1_model)
    train_stage2(model, train_clips, stage2_cfg, log_lines)
    return model, stage1_model, log_lines
