import numpy as np
import pytest

from mvhand.errors import ConfigError, WorkflowError
from mvhand.handgen import DatasetConfig, generate_clip
from mvhand.metrics import evaluate_model
from mvhand.pipeline import ModelConfig, build_variant, stage1_config_for
from mvhand.training import (TrainingConfig, desk_stage1, desk_stage2, learning_rate_at,
                             paper_stage1, paper_stage2, train_stage1, train_stage2,
                             train_two_stage, transfer_stage1_weights)


def tiny_model_config(**kw):
    base = dict(variant="full", views=2, window=3, resolution=16,
                encoder_channels=(2, 4), embedding_size=12, hidden_size=8,
                surrogate_width=10, fc_hidden=8,
                unet_nodes=(21, 6, 21), unet_features=(2, 8, 3), seed=5)
    base.update(kw)
    return ModelConfig(**base)


def tiny_clips(n=2, views=2, window=3, seed=3, occlusion=0.0):
    cfg = DatasetConfig(subjects=1, activities=1, clips_per_pair=n, views=views,
                        window=window, resolution=16, seed=seed,
                        occlusion_prob=occlusion)
    return [generate_clip(cfg, 1, 1, c) for c in range(n)]


def fast_cfg(stage, **kw):
    base = dict(stage=stage, epochs=3, batch_size=4, learning_rate=0.01,
                weight_decay=0.0, decay_period=2, seed=1)
    base.update(kw)
    return TrainingConfig(**base)


def test_learning_rate_step_decay():
    cfg = paper_stage1()
    assert learning_rate_at(cfg, 0) == 0.001
    assert learning_rate_at(cfg, 99) == 0.001
    assert learning_rate_at(cfg, 100) == pytest.approx(0.0001)
    assert learning_rate_at(cfg, 250) == pytest.approx(0.00001)


def test_schedule_defaults_match_published_table():
    s1, s2 = paper_stage1(), paper_stage2()
    assert (s1.epochs, s1.batch_size, s1.learning_rate, s1.weight_decay) == (500, 64, 0.001, 0.1)
    assert (s2.epochs, s2.batch_size, s2.learning_rate, s2.weight_decay) == (400, 8, 0.006, 0.07)
    assert s1.decay_period == s2.decay_period == 100
    d1, d2 = desk_stage1(), desk_stage2()
    assert (d1.epochs, d1.decay_period) == (60, 12)
    assert (d2.epochs, d2.decay_period) == (40, 10)
    assert d1.learning_rate == 0.001 and d2.learning_rate == 0.006


def test_invalid_training_config_rejected():
    with pytest.raises(ConfigError):
        fast_cfg(3).validate()
    with pytest.raises(ConfigError):
        fast_cfg(1, learning_rate=0.0).validate()


def test_stage1_needs_per_frame_model():
    model = build_variant(tiny_model_config())
    with pytest.raises(WorkflowError):
        train_stage1(model, tiny_clips(), fast_cfg(1), [])


def test_stage2_needs_frozen_encoder():
    model = build_variant(tiny_model_config())
    with pytest.raises(WorkflowError):
        train_stage2(model, tiny_clips(), fast_cfg(2), [])


def test_transfer_rejects_non_surrogate():
    target = build_variant(tiny_model_config())
    wrong = build_variant(tiny_model_config(variant="baseline1-no-temporal"))
    with pytest.raises(WorkflowError):
        transfer_stage1_weights(target, wrong)


def test_stage1_training_reduces_loss():
    clips = tiny_clips()
    model = build_variant(stage1_config_for(tiny_model_config()))
    log = []
    train_stage1(model, clips, fast_cfg(1, epochs=8), log)
    first = float(log[0].split("loss=")[1])
    last = float(log[-1].split("loss=")[1])
    assert last < first
    assert all("stage=1" in line for line in log)


def test_two_stage_freezes_encoder_bit_for_bit():
    clips = tiny_clips()
    model, stage1, log = train_two_stage(
        tiny_model_config(), clips, fast_cfg(1, epochs=2), fast_cfg(2, epochs=3))
    for name in model.encoder_param_names():
        assert model.store[name].data.tobytes() == stage1.store[name].data.tobytes()
    assert any("stage=2" in line for line in log)
    report = evaluate_model(model, clips)
    assert np.isfinite(report.epe_mean)


def test_two_stage_deterministic_bit_identical():
    def run():
        clips = tiny_clips()
        model, _, log = train_two_stage(
            tiny_model_config(), clips, fast_cfg(1, epochs=2), fast_cfg(2, epochs=2))
        blob = b"".join(model.store[n].data.tobytes() for n in model.store.names())
        return blob, tuple(log)

    blob_a, log_a = run()
    blob_b, log_b = run()
    assert blob_a == blob_b
    assert log_a == log_b


def test_stage2_embedding_cache_matches_uncached():
    clips = tiny_clips()

    def run(cache):
        model, _, _ = train_two_stage(
            tiny_model_config(), clips, fast_cfg(1, epochs=2),
            fast_cfg(2, epochs=3, cache_embeddings=cache))
        return b"".join(model.store[n].data.tobytes() for n in model.store.names())

    assert run(True) == run(False)


def test_two_stage_with_untied_lifters():
    clips = tiny_clips()
    model, _, _ = train_two_stage(
        tiny_model_config(lifter_tied=False), clips,
        fast_cfg(1, epochs=1), fast_cfg(2, epochs=1))
    assert len(model.lifters) == 6


def test_two_stage_for_nonunet_lifter_variants():
    clips = tiny_clips()
    for variant in ("gcn-only-lifter", "autoenc-lifter"):
        model, stage1, _ = train_two_stage(
            tiny_model_config(variant=variant), clips,
            fast_cfg(1, epochs=1), fast_cfg(2, epochs=1))
        assert stage1.config.effective_lifter_kind == model.config.effective_lifter_kind
