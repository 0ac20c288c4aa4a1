"""Multi-view clip generation and the on-disk dataset container.

A clip is V synchronized view streams of T frames: rendered images plus
2D/3D labels, intrinsics and per-frame extrinsics. The container is a
UTF-8 header line followed by per-clip records of raw little-endian
arrays (images float32, all geometry float64); a sibling .manifest file
lists clip byte offsets and the cross-subject / cross-activity split
assignment of every clip. Generation is pure per clip, so any thread
count produces byte-identical files.
"""

from __future__ import annotations

import concurrent.futures
import os
from dataclasses import dataclass

import numpy as np

from .. import iobin
from ..errors import ConfigError, FormatError, NumericError, VisibilityError
from ..graph import HAND_BONES
from .camera import project, ring_cameras
from .motion import NUM_ACTIVITIES, sample_skeleton
from .render import noise_background, render
from .skeleton import NUM_SUBJECTS, measured_bone_lengths

DATASET_MAGIC = "MVHANDDS"
DATASET_VERSION = 1
MANIFEST_MAGIC = "MVHANDMANIFEST"

CROSS_SUBJECT_TEST = frozenset({1, 2, 10})
CROSS_ACTIVITY_TEST = frozenset({8, 19})

_GEN_TAG = 0xDA7A

CLIP_ARRAYS = ("images", "joints2d", "joints3d_cam", "joints3d_world",
               "intrinsics", "extrinsics", "lighting", "camera_angles", "camera_kinds")


@dataclass(frozen=True)
class DatasetConfig:
    subjects: int = 3
    activities: int = 4
    clips_per_pair: int = 4
    views: int = 3
    window: int = 5
    resolution: int = 64
    seed: int = 0
    camera_kind: str = "tracking"      # tracking | fixed | mixed
    ring_radius: float = 450.0
    camera_height: float = 120.0
    focal_scale: float = 1.0
    occlusion_prob: float = 0.0
    subject_ids: tuple = ()            # overrides `subjects` when non-empty
    activity_ids: tuple = ()

    def validate(self) -> None:
        if self.camera_kind not in ("tracking", "fixed", "mixed"):
            raise ConfigError(f"camera_kind must be tracking/fixed/mixed, got {self.camera_kind!r}")
        if not (1 <= self.views <= 6):
            raise ConfigError("views must be in 1..6 (ring has six angles per kind)")
        if self.window < 1 or self.clips_per_pair < 1:
            raise ConfigError("window and clips_per_pair must be >= 1")
        if self.resolution < 8:
            raise ConfigError("resolution must be >= 8")
        if not (0.0 <= self.occlusion_prob <= 1.0):
            raise ConfigError("occlusion_prob must be in [0, 1]")
        for s in self.subject_id_list():
            if not 1 <= s <= NUM_SUBJECTS:
                raise ConfigError(f"subject id {s} outside 1..{NUM_SUBJECTS}")
        for a in self.activity_id_list():
            if not 1 <= a <= NUM_ACTIVITIES:
                raise ConfigError(f"activity id {a} outside 1..{NUM_ACTIVITIES}")

    def subject_id_list(self):
        return list(self.subject_ids) if self.subject_ids else list(range(1, self.subjects + 1))

    def activity_id_list(self):
        return list(self.activity_ids) if self.activity_ids else list(range(1, self.activities + 1))


@dataclass
class Clip:
    subject: int
    activity: int
    clip_index: int
    truncated: int
    images: np.ndarray          # (V, T, H, W, 3) float32
    joints2d: np.ndarray        # (V, T, 21, 2) float64, pixels
    joints3d_cam: np.ndarray    # (V, T, 21, 3) float64, mm
    joints3d_world: np.ndarray  # (V, T, 21, 3) float64, mm (same for every view)
    intrinsics: np.ndarray      # (V, 4) float64: fx, fy, cx, cy
    extrinsics: np.ndarray      # (V, T, 12) float64: row-major R then camera center
    lighting: np.ndarray        # (T,) float64 in [0.2, 1.0]
    camera_angles: np.ndarray   # (V,) float64 degrees
    camera_kinds: np.ndarray    # (V,) float64: 0 fixed, 1 tracking

    @property
    def views(self) -> int:
        return self.images.shape[0]

    @property
    def window(self) -> int:
        return self.images.shape[1]


def split_of_subject(subject: int) -> str:
    return "test" if subject in CROSS_SUBJECT_TEST else "train"


def split_of_activity(activity: int) -> str:
    return "test" if activity in CROSS_ACTIVITY_TEST else "train"


def _view_kinds(config: DatasetConfig):
    if config.camera_kind == "mixed":
        return ["tracking" if i % 2 == 0 else "fixed" for i in range(config.views)]
    return [config.camera_kind] * config.views


def generate_clip(config: DatasetConfig, subject: int, activity: int,
                  clip_index: int) -> Clip:
    """Render one clip; pure in (config, ids) including under retries."""
    last_error = None
    for attempt in range(5):
        radius = config.ring_radius * (1.5 ** attempt)
        try:
            return _generate_clip_once(config, subject, activity, clip_index, radius, attempt)
        except VisibilityError as err:
            last_error = err
    raise NumericError(f"could not place cameras with positive depth: {last_error}")


def _generate_clip_once(config, subject, activity, clip_index, radius, attempt) -> Clip:
    res = config.resolution
    v_count, t_count = config.views, config.window
    rng = np.random.default_rng(
        [_GEN_TAG, config.seed & 0xFFFFFFFF, subject, activity, clip_index, attempt])

    amp = rng.uniform(0.1, 0.38)
    freq = rng.uniform(0.1, 0.5)
    phase = rng.uniform(0, 2 * np.pi)
    lighting = 0.6 + amp * np.sin(2 * np.pi * freq * np.arange(t_count) * 0.08 + phase)

    kinds = _view_kinds(config)
    cameras = []
    for i, kind in enumerate(kinds):
        base = ring_cameras(config.views, kind, radius, config.camera_height,
                            res, config.focal_scale)[i]
        cameras.append(base)
    backgrounds = [noise_background(res, rng) for _ in range(v_count)]

    skeletons = [sample_skeleton(config.seed, subject, activity, t) for t in range(t_count)]

    images = np.zeros((v_count, t_count, res, res, 3), dtype=np.float32)
    joints2d = np.zeros((v_count, t_count, 21, 2))
    joints3d_cam = np.zeros((v_count, t_count, 21, 3))
    joints3d_world = np.zeros((v_count, t_count, 21, 3))
    extrinsics = np.zeros((v_count, t_count, 12))
    intrinsics = np.stack([cam.intrinsics for cam in cameras])
    truncated = 0

    for vi, cam in enumerate(cameras):
        fixed_ext = cam.extrinsics(np.zeros(3)) if cam.kind == "fixed" else None
        for t in range(t_count):
            skel = skeletons[t]
            rot, center = fixed_ext if fixed_ext is not None else cam.extrinsics(skel.joints[0])
            cam3d, pix = project(skel.joints, rot, center, cam.intrinsics)
            joints3d_cam[vi, t] = cam3d
            joints3d_world[vi, t] = skel.joints
            joints2d[vi, t] = pix
            extrinsics[vi, t, :9] = rot.reshape(-1)
            extrinsics[vi, t, 9:] = center
            truncated += int(((pix < 0) | (pix >= res)).any(axis=1).sum())

            occlusions = []
            if config.occlusion_prob > 0 and rng.random() < config.occlusion_prob:
                for _ in range(int(rng.integers(1, 4))):
                    j = int(rng.integers(0, 21))
                    cx = pix[j, 0] + rng.uniform(-2, 2)
                    cy = pix[j, 1] + rng.uniform(-2, 2)
                    occlusions.append((cx, cy, rng.uniform(res / 24, res / 10)))
            images[vi, t] = render(pix, HAND_BONES, float(lighting[t]), res,
                                   background=backgrounds[vi], tone=skel.tone,
                                   occlusions=occlusions)

    clip = Clip(subject=subject, activity=activity, clip_index=clip_index,
                truncated=truncated, images=images, joints2d=joints2d,
                joints3d_cam=joints3d_cam, joints3d_world=joints3d_world,
                intrinsics=intrinsics, extrinsics=extrinsics, lighting=lighting,
                camera_angles=np.array([c.angle_deg for c in cameras], dtype=float),
                camera_kinds=np.array([1.0 if k == "tracking" else 0.0 for k in kinds]))
    _verify_clip_consistency(clip, skeletons[0].bone_lengths)
    return clip


def _verify_clip_consistency(clip: Clip, bone_lengths: np.ndarray) -> None:
    """Write-time invariants: 2D = projection of 3D-camera; bones constant."""
    fx = clip.intrinsics[:, 0][:, None, None]
    fy = clip.intrinsics[:, 1][:, None, None]
    cx = clip.intrinsics[:, 2][:, None, None]
    cy = clip.intrinsics[:, 3][:, None, None]
    z = clip.joints3d_cam[..., 2]
    u = fx * clip.joints3d_cam[..., 0] / z + cx
    v = fy * clip.joints3d_cam[..., 1] / z + cy
    err = max(np.abs(u - clip.joints2d[..., 0]).max(),
              np.abs(v - clip.joints2d[..., 1]).max())
    if err > 1e-6:
        raise NumericError(f"2D/3D projection mismatch at write time: {err:.2e} px")
    for t in range(clip.window):
        lengths = measured_bone_lengths(clip.joints3d_world[0, t])
        if np.abs(lengths - bone_lengths).max() > 1e-6:
            raise NumericError("bone lengths drifted at write time")


def clip_seed_tuple(config: DatasetConfig):
    """Every (subject, activity, clip_index) of the configured grid, in order."""
    return [(s, a, c)
            for s in config.subject_id_list()
            for a in config.activity_id_list()
            for c in range(config.clips_per_pair)]


def _header_line(config: DatasetConfig, n_clips: int) -> str:
    n_frames = n_clips * config.views * config.window
    return (f"{DATASET_MAGIC} version={DATASET_VERSION} n_clips={n_clips} "
            f"n_frames={n_frames} views={config.views} window={config.window} "
            f"resolution={config.resolution} seed={config.seed} "
            f"subjects={','.join(str(s) for s in config.subject_id_list())} "
            f"activities={','.join(str(a) for a in config.activity_id_list())} "
            f"clips_per_pair={config.clips_per_pair} camera_kind={config.camera_kind} "
            f"occlusion_prob={config.occlusion_prob!r}")


def generate_dataset(config: DatasetConfig, path, threads: int = 1):
    """Write the container and its manifest; returns the manifest summary."""
    config.validate()
    specs = clip_seed_tuple(config)
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            clips = list(pool.map(
                lambda sac: generate_clip(config, *sac), specs))
    else:
        clips = [generate_clip(config, *sac) for sac in specs]

    path = os.fspath(path)
    offsets = []
    with open(path, "wb") as fh:
        iobin.write_line(fh, _header_line(config, len(clips)))
        for idx, clip in enumerate(clips):
            offsets.append(fh.tell())
            iobin.write_line(fh, f"clip {idx} subject={clip.subject} "
                                 f"activity={clip.activity} clip_index={clip.clip_index} "
                                 f"truncated={clip.truncated}")
            for name in CLIP_ARRAYS:
                iobin.write_array(fh, name, getattr(clip, name))
        iobin.write_line(fh, "end")

    manifest_path = path + ".manifest"
    subjects = config.subject_id_list()
    activities = config.activity_id_list()
    with open(manifest_path, "w", encoding="utf-8") as mh:
        mh.write(f"{MANIFEST_MAGIC} version={DATASET_VERSION}\n")
        mh.write(f"dataset={os.path.basename(path)} n_clips={len(clips)} "
                 f"n_frames={len(clips) * config.views * config.window} "
                 f"views={config.views} window={config.window} "
                 f"resolution={config.resolution} seed={config.seed}\n")
        mh.write("cross_subject_train="
                 f"{','.join(str(s) for s in subjects if split_of_subject(s) == 'train')}\n")
        mh.write("cross_subject_test="
                 f"{','.join(str(s) for s in subjects if split_of_subject(s) == 'test')}\n")
        mh.write("cross_activity_train="
                 f"{','.join(str(a) for a in activities if split_of_activity(a) == 'train')}\n")
        mh.write("cross_activity_test="
                 f"{','.join(str(a) for a in activities if split_of_activity(a) == 'test')}\n")
        mh.write("columns idx offset subject activity clip_index "
                 "split_subject split_activity truncated\n")
        for idx, (clip, off) in enumerate(zip(clips, offsets)):
            mh.write(f"{idx} {off} {clip.subject} {clip.activity} {clip.clip_index} "
                     f"{split_of_subject(clip.subject)} {split_of_activity(clip.activity)} "
                     f"{clip.truncated}\n")
    return {"n_clips": len(clips), "n_frames": len(clips) * config.views * config.window,
            "path": path, "manifest": manifest_path}


def parse_dataset_header(line: str) -> dict:
    parts = line.split(" ")
    if parts[0] != DATASET_MAGIC:
        raise FormatError(f"not a dataset container: magic {parts[0]!r}")
    header = dict(p.split("=", 1) for p in parts[1:])
    if int(header["version"]) != DATASET_VERSION:
        raise FormatError(
            f"dataset version {header['version']} unsupported; this build reads {DATASET_VERSION}")
    return header


def read_dataset(path):
    """Load the full container; returns (header dict, list of Clip)."""
    with open(path, "rb") as fh:
        header = parse_dataset_header(iobin.read_line(fh))
        clips = []
        for _ in range(int(header["n_clips"])):
            head = iobin.read_line(fh).split(" ")
            if head[0] != "clip":
                raise FormatError(f"expected clip record, got {head[0]!r}")
            meta = dict(p.split("=", 1) for p in head[2:])
            arrays = {}
            for expected in CLIP_ARRAYS:
                name, arr = iobin.read_array(fh)
                if name != expected:
                    raise FormatError(f"expected array {expected!r}, found {name!r}")
                arrays[name] = arr
            clips.append(Clip(subject=int(meta["subject"]), activity=int(meta["activity"]),
                              clip_index=int(meta["clip_index"]),
                              truncated=int(meta["truncated"]), **arrays))
        if iobin.read_line(fh) != "end":
            raise FormatError("missing dataset end marker")
    return header, clips


def read_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as mh:
        lines = mh.read().splitlines()
    if not lines or not lines[0].startswith(MANIFEST_MAGIC):
        raise FormatError("not a dataset manifest")
    info = dict(p.split("=", 1) for p in lines[1].split(" "))
    splits = {}
    for line in lines[2:6]:
        key, _, value = line.partition("=")
        splits[key] = [int(x) for x in value.split(",") if x]
    rows = []
    for line in lines[7:]:
        idx, off, subj, act, ci, ss, sa, trunc = line.split(" ")
        rows.append({"idx": int(idx), "offset": int(off), "subject": int(subj),
                     "activity": int(act), "clip_index": int(ci),
                     "split_subject": ss, "split_activity": sa, "truncated": int(trunc)})
    return {"info": info, "splits": splits, "rows": rows}


def recover_world_from_view(clip: Clip, view: int) -> np.ndarray:
    """Invert the stored extrinsics: x = R^T p + c for every frame of a view."""
    out = np.zeros_like(clip.joints3d_cam[view])
    for t in range(clip.window):
        rot = clip.extrinsics[view, t, :9].reshape(3, 3)
        center = clip.extrinsics[view, t, 9:]
        out[t] = clip.joints3d_cam[view, t] @ rot + center
    return out


def select_clips(clips, split: str, protocol: str):
    """Filter clips by protocol: cross-subject, cross-activity, holdout-clips.

    holdout-clips keeps the last clip_index of every (subject, activity)
    pair as the test set, for desk datasets whose ids all fall on the
    paper splits' train side.
    """
    if split not in ("train", "test", "all"):
        raise ConfigError(f"split must be train/test/all, got {split!r}")
    if split == "all":
        return list(clips)
    if protocol == "cross-subject":
        return [c for c in clips if split_of_subject(c.subject) == split]
    if protocol == "cross-activity":
        return [c for c in clips if split_of_activity(c.activity) == split]
    if protocol == "holdout-clips":
        max_idx = max(c.clip_index for c in clips)
        if split == "test":
            return [c for c in clips if c.clip_index == max_idx]
        return [c for c in clips if c.clip_index != max_idx]
    raise ConfigError(f"unknown protocol {protocol!r}")
