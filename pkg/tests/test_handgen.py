import numpy as np
import pytest

from mvhand.errors import ConfigError, FormatError, VisibilityError
from mvhand.graph import HAND_BONES
from mvhand.handgen import (Camera, DatasetConfig, generate_clip, generate_dataset,
                            look_at_rotation, project, read_dataset, read_manifest,
                            recover_world_from_view, render, ring_cameras, sample_pose,
                            sample_skeleton, select_clips)
from mvhand.handgen.render import noise_background
from mvhand.handgen.skeleton import (bone_length_table, forward_kinematics,
                                     measured_bone_lengths, subject_profile)


# ---------------------------------------------------------------------------
# skeleton / motion


def test_flat_hand_at_zero_angles_in_palm_plane():
    segments, _ = subject_profile(4)
    joints = forward_kinematics(segments, np.zeros(5), np.zeros((5, 3)))
    np.testing.assert_allclose(joints[:, 2], 0.0, atol=1e-12)
    table = bone_length_table(segments)
    np.testing.assert_allclose(measured_bone_lengths(joints), table, atol=1e-9)


def test_sample_pose_deterministic():
    a = sample_pose(7, 2, 3, 4)
    b = sample_pose(7, 2, 3, 4)
    np.testing.assert_array_equal(a, b)
    c = sample_pose(8, 2, 3, 4)
    assert np.abs(a - c).max() > 0


def test_bone_length_audit_100_random_frames():
    rng = np.random.default_rng(0)
    for _ in range(100):
        subject = int(rng.integers(1, 11))
        activity = int(rng.integers(1, 20))
        seed = int(rng.integers(0, 1000))
        t = int(rng.integers(0, 12))
        skel = sample_skeleton(seed, subject, activity, t)
        measured = measured_bone_lengths(skel.joints)
        assert np.abs(measured - skel.bone_lengths).max() < 1e-6


def test_out_of_range_ids_rejected():
    with pytest.raises(ConfigError):
        sample_pose(0, 11, 1, 0)
    with pytest.raises(ConfigError):
        sample_pose(0, 1, 20, 0)


def test_subject_profiles_differ_and_are_stable():
    lengths = {s: bone_length_table(subject_profile(s)[0]) for s in range(1, 11)}
    for s in range(1, 11):
        np.testing.assert_array_equal(lengths[s], bone_length_table(subject_profile(s)[0]))
    assert np.abs(lengths[1] - lengths[2]).max() > 0


# ---------------------------------------------------------------------------
# cameras / projection


def test_principal_point_projection():
    rot = np.eye(3)
    center = np.zeros(3)
    intr = np.array([90.0, 90.0, 32.0, 32.0])
    _, pix = project(np.array([[0.0, 0.0, 321.0]]), rot, center, intr)
    np.testing.assert_allclose(pix[0], [32.0, 32.0], atol=1e-12)


def test_pinhole_hand_computation():
    rot = np.eye(3)
    center = np.zeros(3)
    intr = np.array([100.0, 100.0, 32.0, 32.0])
    cam, pix = project(np.array([[50.0, 0.0, 500.0]]), rot, center, intr)
    np.testing.assert_allclose(cam[0], [50.0, 0.0, 500.0], atol=1e-12)
    np.testing.assert_allclose(pix[0], [42.0, 32.0], atol=1e-12)


def test_negative_depth_raises_visibility_error():
    rot = np.eye(3)
    with pytest.raises(VisibilityError):
        project(np.array([[0.0, 0.0, -5.0]]), rot, np.zeros(3), np.array([50, 50, 16, 16.0]))


def test_mirror_symmetry_of_opposite_ring_cameras():
    # a point set inside the ring's symmetry plane (x = 0)
    points = np.array([[0.0, y, z] for y, z in [(-40, 0), (10, 25), (0, -30), (35, 15)]])
    cam15 = Camera("fixed", 15.0, 400.0, 100.0, 64.0, 64.0, 32.0, 32.0)
    cam165 = Camera("fixed", 165.0, 400.0, 100.0, 64.0, 64.0, 32.0, 32.0)
    r15, c15 = cam15.extrinsics(np.zeros(3))
    r165, c165 = cam165.extrinsics(np.zeros(3))
    _, pix15 = project(points, r15, c15, cam15.intrinsics)
    _, pix165 = project(points, r165, c165, cam165.intrinsics)
    np.testing.assert_allclose(pix15[:, 0] + pix165[:, 0], 2 * 32.0, atol=1e-9)
    np.testing.assert_allclose(pix15[:, 1], pix165[:, 1], atol=1e-9)


def test_look_at_rotation_is_orthonormal():
    rng = np.random.default_rng(1)
    for _ in range(20):
        eye = rng.normal(size=3) * 100
        target = rng.normal(size=3) * 10
        rot = look_at_rotation(eye, target)
        np.testing.assert_allclose(rot @ rot.T, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(np.cross(rot[0], rot[1]), rot[2], atol=1e-12)


def test_ring_camera_count_and_angles():
    cams = ring_cameras(3, "tracking", 450.0, 120.0, 64)
    assert [c.angle_deg for c in cams] == [15.0, 45.0, 75.0]
    with pytest.raises(ConfigError):
        ring_cameras(7, "fixed", 450.0, 120.0, 64)


# ---------------------------------------------------------------------------
# rendering


def test_render_no_geometry_is_pure_background():
    bg = noise_background(32, np.random.default_rng(2))
    img = render(np.zeros((0, 2)), [], 1.0, 32, background=bg)
    np.testing.assert_allclose(img, bg.astype(np.float32), atol=1e-7)


def test_render_lighting_is_exactly_multiplicative():
    rng = np.random.default_rng(3)
    pts = rng.uniform(5, 27, size=(21, 2))
    bg = noise_background(32, np.random.default_rng(4))
    bright = render(pts, HAND_BONES, 1.0, 32, background=bg, tone=0.7)
    dim = render(pts, HAND_BONES, 0.5, 32, background=bg, tone=0.7)
    np.testing.assert_array_equal(dim, bright * np.float32(0.5))


def test_render_deterministic():
    pts = np.random.default_rng(5).uniform(5, 27, size=(21, 2))
    bg = noise_background(32, np.random.default_rng(6))
    a = render(pts, HAND_BONES, 0.8, 32, background=bg, tone=0.6)
    b = render(pts, HAND_BONES, 0.8, 32, background=bg, tone=0.6)
    assert a.tobytes() == b.tobytes()


def test_render_values_in_unit_range_and_foreground_visible():
    pts = np.random.default_rng(7).uniform(8, 24, size=(21, 2))
    bg = np.zeros((32, 32, 3))
    img = render(pts, HAND_BONES, 1.0, 32, background=bg, tone=0.8)
    assert img.min() >= 0.0 and img.max() <= 1.0
    assert img.max() > 0.3  # bones actually drawn


def test_render_occlusion_restores_background():
    pts = np.full((21, 2), 16.0) + np.random.default_rng(8).uniform(-6, 6, (21, 2))
    bg = noise_background(32, np.random.default_rng(9))
    occluded = render(pts, HAND_BONES, 1.0, 32, background=bg, tone=0.9,
                      occlusions=[(16.0, 16.0, 40.0)])  # patch covers everything
    np.testing.assert_allclose(occluded, bg.astype(np.float32), atol=1e-6)


# ---------------------------------------------------------------------------
# dataset container


def small_config(**kw):
    base = dict(subjects=2, activities=2, clips_per_pair=1, views=3, window=5,
                resolution=16, seed=11)
    base.update(kw)
    return DatasetConfig(**base)


def test_frame_counting_contract(tmp_path):
    cfg = small_config()
    summary = generate_dataset(cfg, tmp_path / "d.mvds")
    assert summary["n_frames"] == 2 * 2 * 1 * 3 * 5
    header, clips = read_dataset(tmp_path / "d.mvds")
    assert int(header["n_frames"]) == 60
    assert len(clips) == 4


def test_same_seed_byte_identical(tmp_path):
    cfg = small_config()
    (tmp_path / "run1").mkdir()
    (tmp_path / "run2").mkdir()
    generate_dataset(cfg, tmp_path / "run1" / "d.mvds")
    generate_dataset(cfg, tmp_path / "run2" / "d.mvds")
    assert (tmp_path / "run1" / "d.mvds").read_bytes() == (tmp_path / "run2" / "d.mvds").read_bytes()
    assert (tmp_path / "run1" / "d.mvds.manifest").read_text() == \
        (tmp_path / "run2" / "d.mvds.manifest").read_text()


def test_threads_do_not_change_bytes(tmp_path):
    cfg = small_config()
    generate_dataset(cfg, tmp_path / "t1.mvds", threads=1)
    generate_dataset(cfg, tmp_path / "t4.mvds", threads=4)
    assert (tmp_path / "t1.mvds").read_bytes() == (tmp_path / "t4.mvds").read_bytes()


def test_roundtrip_preserves_arrays(tmp_path):
    cfg = small_config()
    clips_direct = [generate_clip(cfg, s, a, c)
                    for (s, a, c) in [(1, 1, 0), (1, 2, 0), (2, 1, 0), (2, 2, 0)]]
    generate_dataset(cfg, tmp_path / "d.mvds")
    _, clips_read = read_dataset(tmp_path / "d.mvds")
    for direct, read in zip(clips_direct, clips_read):
        np.testing.assert_array_equal(direct.images, read.images)
        np.testing.assert_array_equal(direct.joints2d, read.joints2d)
        np.testing.assert_array_equal(direct.joints3d_cam, read.joints3d_cam)
        np.testing.assert_array_equal(direct.extrinsics, read.extrinsics)


def test_label_consistency_2d_reprojects_3d(tmp_path):
    cfg = small_config()
    generate_dataset(cfg, tmp_path / "d.mvds")
    _, clips = read_dataset(tmp_path / "d.mvds")
    for clip in clips:
        fx, fy, cx, cy = (clip.intrinsics[:, i][:, None, None] for i in range(4))
        z = clip.joints3d_cam[..., 2]
        u = fx * clip.joints3d_cam[..., 0] / z + cx
        v = fy * clip.joints3d_cam[..., 1] / z + cy
        assert np.abs(u - clip.joints2d[..., 0]).max() < 1e-4
        assert np.abs(v - clip.joints2d[..., 1]).max() < 1e-4


def test_simultaneity_cross_view_world_agreement(tmp_path):
    cfg = small_config()
    generate_dataset(cfg, tmp_path / "d.mvds")
    _, clips = read_dataset(tmp_path / "d.mvds")
    for clip in clips:
        recovered = [recover_world_from_view(clip, v) for v in range(clip.views)]
        for v in range(1, clip.views):
            assert np.abs(recovered[v] - recovered[0]).max() < 1e-6


def test_tracking_camera_centers_wrist():
    cfg = small_config()
    clip = generate_clip(cfg, 1, 1, 0)
    wrist_px = clip.joints2d[:, :, 0, :]
    res = cfg.resolution
    lo, hi = res / 4, 3 * res / 4
    inside = (wrist_px >= lo) & (wrist_px < hi)
    assert inside.all()


def test_fixed_cameras_have_constant_extrinsics():
    cfg = small_config(camera_kind="fixed")
    clip = generate_clip(cfg, 1, 1, 0)
    assert (clip.camera_kinds == 0).all()
    for v in range(clip.views):
        for t in range(1, clip.window):
            np.testing.assert_array_equal(clip.extrinsics[v, t], clip.extrinsics[v, 0])


def test_mixed_kind_marks_cameras():
    cfg = small_config(camera_kind="mixed")
    clip = generate_clip(cfg, 1, 1, 0)
    np.testing.assert_array_equal(clip.camera_kinds, [1.0, 0.0, 1.0])


def test_manifest_splits_full_ten_subjects(tmp_path):
    cfg = DatasetConfig(subjects=10, activities=2, clips_per_pair=1, views=2, window=2,
                        resolution=16, seed=1)
    generate_dataset(cfg, tmp_path / "d.mvds")
    manifest = read_manifest(tmp_path / "d.mvds.manifest")
    assert manifest["splits"]["cross_subject_test"] == [1, 2, 10]
    assert manifest["splits"]["cross_subject_train"] == [3, 4, 5, 6, 7, 8, 9]
    for row in manifest["rows"]:
        assert row["split_subject"] == ("test" if row["subject"] in (1, 2, 10) else "train")


def test_split_disjointness_and_holdout(tmp_path):
    cfg = small_config(subjects=3, activities=2, clips_per_pair=3)
    generate_dataset(cfg, tmp_path / "d.mvds")
    _, clips = read_dataset(tmp_path / "d.mvds")
    train = select_clips(clips, "train", "cross-subject")
    test = select_clips(clips, "test", "cross-subject")
    assert {c.subject for c in train}.isdisjoint({c.subject for c in test})
    assert len(train) + len(test) == len(clips)
    h_train = select_clips(clips, "train", "holdout-clips")
    h_test = select_clips(clips, "test", "holdout-clips")
    assert {c.clip_index for c in h_test} == {2}
    assert len(h_train) + len(h_test) == len(clips)


def test_truncated_container_raises_format_error(tmp_path):
    cfg = small_config(subjects=1, activities=1)
    generate_dataset(cfg, tmp_path / "d.mvds")
    blob = (tmp_path / "d.mvds").read_bytes()
    (tmp_path / "cut.mvds").write_bytes(blob[: len(blob) // 2])
    with pytest.raises(FormatError):
        read_dataset(tmp_path / "cut.mvds")


def test_occlusion_prob_changes_pixels_not_labels(tmp_path):
    clean = generate_clip(small_config(), 1, 1, 0)
    occluded = generate_clip(small_config(occlusion_prob=1.0), 1, 1, 0)
    np.testing.assert_array_equal(clean.joints2d, occluded.joints2d)
    np.testing.assert_array_equal(clean.joints3d_cam, occluded.joints3d_cam)
    assert np.abs(clean.images - occluded.images).max() > 0.01


def test_invalid_config_rejected():
    with pytest.raises(ConfigError):
        small_config(views=9).validate()
    with pytest.raises(ConfigError):
        small_config(camera_kind="orbit").validate()
    with pytest.raises(ConfigError):
        DatasetConfig(subject_ids=(44,)).validate()
