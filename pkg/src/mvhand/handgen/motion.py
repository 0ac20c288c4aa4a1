"""Procedural motion programs: 19 activities as sinusoidal joint-angle scripts.

Each activity fixes frequencies, amplitudes and phases for every
articulation; the clip seed only shifts phases and the hand's resting
position, so one activity looks like the same movement performed with
small variations. All angles evolve smoothly in time and bone lengths
come straight from the subject table.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .skeleton import HandSkeleton, bone_length_table, forward_kinematics, subject_profile

NUM_ACTIVITIES = 19
_ACTIVITY_TAG = 0xAC71
_CLIP_TAG = 0xC117
FRAME_DT = 0.08  # seconds per frame


def _euler_to_matrix(rx: float, ry: float, rz: float) -> np.ndarray:
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return mz @ my @ mx


class ActivityProgram:
    """Frozen oscillator bank for one activity id."""

    def __init__(self, activity: int):
        if not 1 <= activity <= NUM_ACTIVITIES:
            raise ConfigError(f"activity id must be in 1..{NUM_ACTIVITIES}, got {activity}")
        rng = np.random.default_rng([_ACTIVITY_TAG, activity])
        # per-finger flexion: base curl, oscillation amplitude, frequency, phase
        self.flex_base = rng.uniform(0.15, 0.55, size=(5, 3))
        self.flex_amp = rng.uniform(0.10, 0.45, size=(5, 3))
        self.flex_freq = rng.uniform(0.2, 0.9, size=(5, 3))
        self.flex_phase = rng.uniform(0, 2 * np.pi, size=(5, 3))
        self.splay_amp = rng.uniform(0.02, 0.10, size=5)
        self.splay_freq = rng.uniform(0.2, 0.6, size=5)
        self.splay_phase = rng.uniform(0, 2 * np.pi, size=5)
        self.rot_base = rng.uniform(-0.4, 0.4, size=3)
        self.rot_amp = rng.uniform(0.05, 0.35, size=3)
        self.rot_freq = rng.uniform(0.15, 0.5, size=3)
        self.rot_phase = rng.uniform(0, 2 * np.pi, size=3)
        self.pos_amp = rng.uniform(8.0, 28.0, size=3) * np.array([1.0, 1.0, 0.6])
        self.pos_freq = rng.uniform(0.1, 0.4, size=3)
        self.pos_phase = rng.uniform(0, 2 * np.pi, size=3)


class ClipVariation:
    """Seeded per-clip offsets layered on top of an activity program."""

    def __init__(self, seed: int, subject: int, activity: int):
        rng = np.random.default_rng([_CLIP_TAG, seed & 0xFFFFFFFF, subject, activity])
        self.phase_shift = rng.uniform(0, 2 * np.pi)
        self.center = rng.uniform(-18.0, 18.0, size=3) * np.array([1.0, 1.0, 0.5])


def sample_pose(seed: int, subject: int, activity: int, t: int) -> np.ndarray:
    """World-frame (21, 3) joints at frame t of a clip; pure in its arguments."""
    return sample_skeleton(seed, subject, activity, t).joints


def sample_skeleton(seed: int, subject: int, activity: int, t: int) -> HandSkeleton:
    segments, tone = subject_profile(subject)
    program = ActivityProgram(activity)
    var = ClipVariation(seed, subject, activity)
    tau = t * FRAME_DT

    def osc(base, amp, freq, phase):
        return base + amp * np.sin(2 * np.pi * freq * tau + phase + var.phase_shift)

    flex = osc(program.flex_base, program.flex_amp, program.flex_freq, program.flex_phase)
    flex = np.maximum(flex, 0.0)
    splay = osc(0.0, program.splay_amp, program.splay_freq, program.splay_phase)
    rot = osc(program.rot_base, program.rot_amp, program.rot_freq, program.rot_phase)
    pos = var.center + osc(0.0, program.pos_amp, program.pos_freq, program.pos_phase)
    joints = forward_kinematics(segments, splay, flex,
                                wrist=pos, rotation=_euler_to_matrix(*rot))
    return HandSkeleton(joints=joints, bone_lengths=bone_length_table(segments), tone=tone)
