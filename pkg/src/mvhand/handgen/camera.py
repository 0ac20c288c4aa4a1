"""Semicircular camera ring: fixed and hand-tracking pinhole cameras.

Cameras sit on a half-ring around the scene at the six canonical angles.
Fixed cameras keep one look-at-origin extrinsic for a whole clip;
tracking cameras re-aim their optical axis at the wrist every frame.
Camera-frame coordinates are p = R (x - c) with c the camera center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, VisibilityError

RING_ANGLES = (15.0, 45.0, 75.0, 105.0, 135.0, 165.0)
CAMERA_KINDS = ("fixed", "tracking")


@dataclass(frozen=True)
class Camera:
    kind: str                 # "fixed" | "tracking"
    angle_deg: float          # position on the ring
    radius: float             # mm
    height: float             # mm above the ring plane
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.kind not in CAMERA_KINDS:
            raise ConfigError(f"camera kind must be one of {CAMERA_KINDS}, got {self.kind!r}")

    @property
    def position(self) -> np.ndarray:
        theta = np.radians(self.angle_deg)
        return np.array([self.radius * np.cos(theta),
                         self.radius * np.sin(theta),
                         self.height])

    @property
    def intrinsics(self) -> np.ndarray:
        return np.array([self.fx, self.fy, self.cx, self.cy])

    def extrinsics(self, target: np.ndarray):
        """Rotation (3,3) and center (3,) aiming the optical axis at target."""
        return look_at_rotation(self.position, np.asarray(target, dtype=float)), self.position


def look_at_rotation(eye: np.ndarray, target: np.ndarray,
                     up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Rows are the camera's x (image right), y (image down), z (forward)."""
    forward = target - eye
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise ConfigError("look_at: eye and target coincide")
    z = forward / norm
    up = np.asarray(up, dtype=float)
    x = np.cross(z, up)
    xn = np.linalg.norm(x)
    if xn < 1e-9:
        x = np.cross(z, np.array([0.0, 1.0, 0.0]))
        xn = np.linalg.norm(x)
    x = x / xn
    y = np.cross(z, x)
    return np.stack([x, y, z])


def project(world_joints: np.ndarray, rotation: np.ndarray, center: np.ndarray,
            intrinsics: np.ndarray):
    """World (N,3) -> (camera-frame (N,3), pixels (N,2)).

    Raises VisibilityError when any joint has non-positive depth so the
    caller can regenerate the clip with a larger camera radius.
    """
    cam = (np.asarray(world_joints, dtype=float) - center) @ rotation.T
    depth = cam[:, 2]
    if (depth <= 0).any():
        raise VisibilityError(
            f"{int((depth <= 0).sum())} joints behind the camera (min depth {depth.min():.1f} mm)")
    fx, fy, cx, cy = intrinsics
    pixels = np.stack([fx * cam[:, 0] / depth + cx,
                       fy * cam[:, 1] / depth + cy], axis=1)
    return cam, pixels


def ring_cameras(n_views: int, kind: str, radius: float, height: float,
                 resolution: int, focal_scale: float = 1.0):
    """The first n_views cameras of the ring, nearest angles first."""
    if not 1 <= n_views <= len(RING_ANGLES):
        raise ConfigError(f"views must be in 1..{len(RING_ANGLES)}, got {n_views}")
    f = focal_scale * resolution
    half = resolution / 2.0
    return [Camera(kind, RING_ANGLES[i], radius, height, f, f, half, half)
            for i in range(n_views)]
