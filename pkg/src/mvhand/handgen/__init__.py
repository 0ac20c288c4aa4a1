"""Procedural multi-view hand video generator: geometry, labels, rendering."""

from .camera import Camera, RING_ANGLES, look_at_rotation, project, ring_cameras
from .dataset import (Clip, DatasetConfig, generate_clip, generate_dataset,
                      read_dataset, read_manifest, recover_world_from_view,
                      select_clips, split_of_activity, split_of_subject)
from .motion import sample_pose, sample_skeleton
from .render import noise_background, render
from .skeleton import (HandSkeleton, forward_kinematics, measured_bone_lengths,
                       subject_profile)

__all__ = [
    "Camera", "RING_ANGLES", "look_at_rotation", "project", "ring_cameras",
    "Clip", "DatasetConfig", "generate_clip", "generate_dataset",
    "read_dataset", "read_manifest", "recover_world_from_view", "select_clips",
    "split_of_activity", "split_of_subject",
    "sample_pose", "sample_skeleton",
    "noise_background", "render",
    "HandSkeleton", "forward_kinematics", "measured_bone_lengths", "subject_profile",
]
