"""Skeleton rasterizer: anti-aliased bones and joint discs on noise backgrounds.

Foreground is accumulated as an alpha mask (distance-field ramps around
segments and discs), optionally erased by occlusion patches, composited
over the background, then the whole frame is multiplied by the lighting
scalar. Everything is pure numpy and deterministic given its inputs.
"""

from __future__ import annotations

import numpy as np

LINE_WIDTH = 1.1
JOINT_RADIUS = 1.6
WRIST_RADIUS = 2.6
SKIN_TINT = np.array([1.0, 0.82, 0.70])
JOINT_TINT = np.array([1.05, 0.9, 0.8])


def noise_background(resolution: int, rng: np.random.Generator) -> np.ndarray:
    """Smooth two-octave value noise with a random per-channel tint."""
    img = np.zeros((resolution, resolution))
    for cells, weight in ((4, 0.6), (16, 0.4)):
        grid = rng.random((cells + 1, cells + 1))
        axis = np.linspace(0, cells, resolution)
        i0 = np.clip(axis.astype(int), 0, cells - 1)
        frac = axis - i0
        top = grid[i0][:, i0] * (1 - frac)[None, :] + grid[i0][:, i0 + 1] * frac[None, :]
        bot = grid[i0 + 1][:, i0] * (1 - frac)[None, :] + grid[i0 + 1][:, i0 + 1] * frac[None, :]
        img += weight * (top * (1 - frac)[:, None] + bot * frac[:, None])
    tint = rng.uniform(0.25, 0.95, size=3)
    out = img[:, :, None] * tint[None, None, :]
    return np.clip(out, 0.0, 1.0)


def _disc_alpha(alpha: np.ndarray, center, radius: float) -> None:
    res = alpha.shape[0]
    cx, cy = center
    x0 = max(int(cx - radius - 2), 0)
    x1 = min(int(cx + radius + 3), res)
    y0 = max(int(cy - radius - 2), 0)
    y1 = min(int(cy + radius + 3), res)
    if x0 >= x1 or y0 >= y1:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1]
    dist = np.hypot(xs + 0.5 - cx, ys + 0.5 - cy)
    a = np.clip(radius + 0.5 - dist, 0.0, 1.0)
    np.maximum(alpha[y0:y1, x0:x1], a, out=alpha[y0:y1, x0:x1])


def _segment_alpha(alpha: np.ndarray, p, q, width: float) -> None:
    res = alpha.shape[0]
    x0 = max(int(min(p[0], q[0]) - width - 2), 0)
    x1 = min(int(max(p[0], q[0]) + width + 3), res)
    y0 = max(int(min(p[1], q[1]) - width - 2), 0)
    y1 = min(int(max(p[1], q[1]) + width + 3), res)
    if x0 >= x1 or y0 >= y1:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1]
    px = xs + 0.5 - p[0]
    py = ys + 0.5 - p[1]
    dx, dy = q[0] - p[0], q[1] - p[1]
    seg_len2 = dx * dx + dy * dy
    if seg_len2 < 1e-12:
        t = np.zeros_like(px)
    else:
        t = np.clip((px * dx + py * dy) / seg_len2, 0.0, 1.0)
    dist = np.hypot(px - t * dx, py - t * dy)
    a = np.clip(width + 0.5 - dist, 0.0, 1.0)
    np.maximum(alpha[y0:y1, x0:x1], a, out=alpha[y0:y1, x0:x1])


def render(joints2d: np.ndarray, bones, lighting: float, resolution: int,
           background: np.ndarray | None = None, tone: float = 0.6,
           occlusions=() ) -> np.ndarray:
    """Rasterize one frame; returns float32 (H, W, 3) in [0, 1].

    `occlusions` is a list of (cx, cy, radius) patches where the
    foreground is erased so the background shows through (stand-in for
    self-occlusion). Lighting multiplies the whole composited frame.
    """
    if background is None:
        background = np.full((resolution, resolution, 3), 0.5)
    alpha = np.zeros((resolution, resolution))
    joint_alpha = np.zeros_like(alpha)
    pts = np.asarray(joints2d, dtype=float)
    for i, j in bones:
        _segment_alpha(alpha, pts[i], pts[j], LINE_WIDTH)
    for k in range(len(pts)):
        _disc_alpha(joint_alpha, pts[k], WRIST_RADIUS if k == 0 else JOINT_RADIUS)
    for cx, cy, radius in occlusions:
        hole = np.zeros_like(alpha)
        _disc_alpha(hole, (cx, cy), radius)
        keep = 1.0 - hole
        alpha *= keep
        joint_alpha *= keep

    bone_color = np.clip(tone * SKIN_TINT, 0.0, 1.0)
    joint_color = np.clip(tone * JOINT_TINT, 0.0, 1.0)
    img = background * (1.0 - alpha[:, :, None]) + bone_color * alpha[:, :, None]
    img = img * (1.0 - joint_alpha[:, :, None]) + joint_color * joint_alpha[:, :, None]
    img = np.clip(img, 0.0, 1.0) * lighting
    return img.astype(np.float32)
