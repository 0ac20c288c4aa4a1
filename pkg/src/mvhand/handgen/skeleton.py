"""21-joint kinematic hand: per-subject bone tables and forward kinematics.

Joint layout: index 0 is the wrist; each finger (thumb, index, middle,
ring, pinkie) contributes MCP, PIP, DIP, TIP at indices 1+4f .. 4+4f.
All lengths are millimeters. Zero joint angles give the canonical flat
open hand in the palm plane, fingers fanned at fixed base splay angles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..graph import HAND_BONES, NUM_JOINTS

NUM_SUBJECTS = 10
FINGERS = ("thumb", "index", "middle", "ring", "pinkie")

# base splay of each finger's metacarpal, radians from the hand x-axis
BASE_SPLAY = np.radians([55.0, 18.0, 2.0, -14.0, -30.0])

# canonical segment lengths (mm): metacarpal, proximal, middle, distal
_CANON = np.array([
    [38.0, 32.0, 26.0, 22.0],   # thumb
    [68.0, 42.0, 26.0, 20.0],   # index
    [72.0, 46.0, 30.0, 22.0],   # middle
    [66.0, 42.0, 28.0, 21.0],   # ring
    [58.0, 32.0, 20.0, 18.0],   # pinkie
])

_SUBJECT_TAG = 0x5B0E


@dataclass
class HandSkeleton:
    """One posed hand: world-frame joints plus the subject's constants."""
    joints: np.ndarray                    # (21, 3) mm, world frame
    bone_lengths: np.ndarray              # (20,) mm, ordered like HAND_BONES
    tone: float
    bones: tuple = field(default=HAND_BONES)


def bone_length_table(segments: np.ndarray) -> np.ndarray:
    """(5, 4) per-finger segment lengths -> (20,) ordered like HAND_BONES."""
    table = np.empty(20)
    table[:5] = segments[:, 0]
    for f in range(5):
        table[5 + 3 * f: 8 + 3 * f] = segments[f, 1:]
    return table


def subject_profile(subject: int):
    """Deterministic per-subject (segment lengths (5,4), tone scalar)."""
    if not 1 <= subject <= NUM_SUBJECTS:
        raise ConfigError(f"subject id must be in 1..{NUM_SUBJECTS}, got {subject}")
    rng = np.random.default_rng([_SUBJECT_TAG, subject])
    scale = rng.uniform(0.85, 1.15)
    jitter = rng.uniform(0.95, 1.05, size=_CANON.shape)
    tone = float(rng.uniform(0.35, 0.85))
    return _CANON * scale * jitter, tone


def _rotate(v: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation of v around a unit axis."""
    c, s = np.cos(angle), np.sin(angle)
    return v * c + np.cross(axis, v) * s + axis * np.dot(axis, v) * (1.0 - c)


def forward_kinematics(segments: np.ndarray, splay: np.ndarray, flex: np.ndarray,
                       wrist: np.ndarray | None = None,
                       rotation: np.ndarray | None = None) -> np.ndarray:
    """Pose the hand: (5,4) segment lengths, (5,) splay offsets, (5,3) flexion.

    Flexion angles accumulate along each finger and curl it out of the
    palm plane; splay swings the whole finger inside the plane. `wrist`
    translates and `rotation` (3x3) orients the hand in the world.
    """
    joints = np.zeros((NUM_JOINTS, 3))
    for f in range(5):
        psi = BASE_SPLAY[f] + splay[f]
        direction = np.array([np.cos(psi), np.sin(psi), 0.0])
        bend_axis = np.array([-np.sin(psi), np.cos(psi), 0.0])
        mcp = 1 + 4 * f
        joints[mcp] = direction * segments[f, 0]
        pos = joints[mcp]
        total = 0.0
        for j in range(3):
            total += flex[f, j]
            seg_dir = _rotate(direction, bend_axis, -total)
            pos = pos + seg_dir * segments[f, j + 1]
            joints[mcp + j + 1] = pos
    if rotation is not None:
        joints = joints @ rotation.T
    if wrist is not None:
        joints = joints + wrist
    return joints


def measured_bone_lengths(joints: np.ndarray) -> np.ndarray:
    """(20,) bone lengths recovered from posed joints, HAND_BONES order."""
    return np.array([np.linalg.norm(joints[j] - joints[i]) for i, j in HAND_BONES])
