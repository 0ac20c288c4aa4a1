"""Training losses: per-joint Euclidean distances averaged over joints.

Stage 1 supervises 2D pixels and 3D millimeters per frame with
L = alpha * L2D + L3D; stage 2 averages the 3D term over the full
V x T clip grid. Distances stay in pixels/mm so the losses are
commensurate with the evaluation metrics.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .graph import NUM_JOINTS


def joint_distance_mean(pred: T.Tensor, gt) -> T.Tensor:
    """Mean over batch and joints of per-joint Euclidean distance."""
    gt = np.asarray(gt)
    if tuple(pred.shape) != gt.shape:
        raise DimensionError(f"loss: prediction {pred.shape} != target {gt.shape}")
    if pred.ndim < 2 or pred.shape[-2] != NUM_JOINTS:
        raise DimensionError(f"loss: expected (..., {NUM_JOINTS}, k), got {pred.shape}")
    diff = T.sub(pred, T.Tensor(gt, dtype=pred.dtype))
    sq = T.tsum(T.mul(diff, diff), axis=-1)
    return T.mean(T.sqrt(sq))


def loss_stage1(pred_2d: T.Tensor, gt_2d, pred_3d: T.Tensor, gt_3d,
                alpha: float = 0.01) -> T.Tensor:
    """alpha * L2D + L3D over a batch of independent frames."""
    l2d = joint_distance_mean(pred_2d, gt_2d)
    l3d = joint_distance_mean(pred_3d, gt_3d)
    return T.add(T.mul(l2d, float(alpha)), l3d)


def loss_stage2(pred: T.Tensor, gt) -> T.Tensor:
    """Mean over the V x T grid of per-frame 3D losses."""
    gt = np.asarray(gt)
    if pred.ndim != 4 or pred.shape[-2:] != (NUM_JOINTS, 3):
        raise DimensionError(
            f"loss_stage2: expected a full (V, T, {NUM_JOINTS}, 3) grid, got {pred.shape}")
    return joint_distance_mean(pred, gt)
