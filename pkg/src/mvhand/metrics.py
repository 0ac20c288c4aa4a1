"""Endpoint-error and PCK/AUC evaluation with per-joint breakdowns.

Errors are pooled: every joint of every evaluated frame contributes one
Euclidean distance (mm) to a single pool; mean/median EPE, the PCK curve
over 0..50 mm (1 mm grid) and its trapezoidal AUC are read off that pool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError
from .graph import NUM_JOINTS

PCK_THRESHOLDS = np.arange(0.0, 51.0)

JOINT_CLASSES = {
    "Wrist": (0,),
    "MCP": (1, 5, 9, 13, 17),
    "PIP": (2, 6, 10, 14, 18),
    "DIP": (3, 7, 11, 15, 19),
    "TIP": (4, 8, 12, 16, 20),
}

FINGER_JOINTS = {
    "Thumb": (1, 2, 3, 4),
    "Index": (5, 6, 7, 8),
    "Middle": (9, 10, 11, 12),
    "Ring": (13, 14, 15, 16),
    "Pinkie": (17, 18, 19, 20),
}


def joint_errors(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Per-joint Euclidean distances, shape (..., 21)."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DimensionError(f"joint_errors: shapes {pred.shape} != {gt.shape}")
    if pred.ndim < 2 or pred.shape[-2] != NUM_JOINTS:
        raise DimensionError(f"joint_errors: expected (..., {NUM_JOINTS}, k), got {pred.shape}")
    return np.linalg.norm(pred - gt, axis=-1)


def pooled_errors(pred, gt) -> np.ndarray:
    errors = joint_errors(pred, gt).reshape(-1)
    if errors.size == 0:
        raise ContractError("empty evaluation set")
    return errors


def compute_epe(pred, gt):
    """(mean, median) of the pooled per-joint error distribution, in mm."""
    errors = pooled_errors(pred, gt)
    return float(errors.mean()), float(np.median(errors))


def compute_pck_auc(pred, gt, thresholds: np.ndarray | None = None):
    """PCK(s) = fraction of pooled errors <= s; AUC = trapezoid / range."""
    if thresholds is None:
        thresholds = PCK_THRESHOLDS
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.size == 0:
        raise ContractError("empty threshold grid")
    errors = pooled_errors(pred, gt)
    pck = (errors[None, :] <= thresholds[:, None]).mean(axis=1)
    span = thresholds[-1] - thresholds[0]
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    auc = float(trapezoid(pck, thresholds) / span) if span > 0 else float(pck[0])
    return pck, auc


@dataclass
class EvalReport:
    epe_mean: float
    epe_median: float
    auc: float
    pck: np.ndarray
    thresholds: np.ndarray
    per_class: dict
    per_finger: dict
    n_frames: int

    def validate(self) -> None:
        if (np.diff(self.pck) < 0).any():
            raise ContractError("PCK must be non-decreasing in the threshold")
        if not (0 <= self.pck.min() and self.pck.max() <= 1 and 0 <= self.auc <= 1):
            raise ContractError("PCK/AUC out of [0, 1]")

    def lines(self):
        out = [f"frames      {self.n_frames}",
               f"epe_mean    {self.epe_mean:.6f}",
               f"epe_median  {self.epe_median:.6f}",
               f"auc         {self.auc:.6f}"]
        for name, value in list(self.per_class.items()) + list(self.per_finger.items()):
            out.append(f"{name.lower():<12s}{value:.6f}")
        return out

    def curve_rows(self):
        rows = ["threshold_mm,pck"]
        rows += [f"{t:g},{p:.9f}" for t, p in zip(self.thresholds, self.pck)]
        return rows


def evaluate_poses(pred, gt) -> EvalReport:
    """Build the full report from matched (..., 21, 3) arrays in mm."""
    errors = joint_errors(pred, gt)
    flat = errors.reshape(-1, NUM_JOINTS)
    pck, auc = compute_pck_auc(pred, gt)
    report = EvalReport(
        epe_mean=float(flat.mean()),
        epe_median=float(np.median(flat)),
        auc=auc,
        pck=pck,
        thresholds=PCK_THRESHOLDS.copy(),
        per_class={k: float(flat[:, list(idx)].mean()) for k, idx in JOINT_CLASSES.items()},
        per_finger={k: float(flat[:, list(idx)].mean()) for k, idx in FINGER_JOINTS.items()},
        n_frames=flat.shape[0],
    )
    report.validate()
    return report


def evaluate_model(model, clips, threads: int = 1) -> EvalReport:
    """Forward every clip (eval mode) and score against its 3D camera labels.

    Per-clip work may run concurrently; pooling always happens in clip
    order, so any thread count produces the identical report.
    """
    if not clips:
        raise ContractError("empty evaluation set")

    def one(clip):
        poses, _ = model.forward(clip.images, training=False)
        return poses.data

    if threads > 1:
        import concurrent.futures
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            preds = list(pool.map(one, clips))
    else:
        preds = [one(clip) for clip in clips]
    pred = np.concatenate([p.reshape(-1, NUM_JOINTS, 3) for p in preds])
    gt = np.concatenate([c.joints3d_cam.reshape(-1, NUM_JOINTS, 3) for c in clips])
    return evaluate_poses(pred, gt)
