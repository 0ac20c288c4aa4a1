import numpy as np
import pytest

from mvhand import tensor as T
from mvhand.encoder import ConvEncoder, EncoderConfig
from mvhand.errors import ConfigError, DimensionError
from mvhand.gradcheck import run_check, scalarize
from mvhand.params import ParamStore


@pytest.fixture(autouse=True)
def float64_mode():
    T.set_default_dtype("float64")
    yield
    T.set_default_dtype("float32")


def build_encoder(config=None, seed=0):
    store = ParamStore()
    enc = ConvEncoder(config or EncoderConfig(), store, np.random.default_rng(seed))
    return enc, store


def test_embedding_length_is_config_driven():
    enc, _ = build_encoder()
    frame = np.random.default_rng(0).random((64, 64, 3))
    emb = enc.encode(frame)
    assert emb.shape == (512,)

    small = EncoderConfig(resolution=16, stage_channels=(4, 8), embedding_size=33)
    enc2, _ = build_encoder(small)
    emb2 = enc2.encode(np.zeros((16, 16, 3)))
    assert emb2.shape == (33,)


def test_zero_frame_zero_biases_gives_zero_embedding():
    enc, _ = build_encoder()
    emb = enc.encode(np.zeros((64, 64, 3)))
    np.testing.assert_array_equal(emb.data, np.zeros(512))


def test_same_frame_twice_identical():
    enc, _ = build_encoder()
    frame = np.random.default_rng(1).random((64, 64, 3))
    np.testing.assert_array_equal(enc.encode(frame).data, enc.encode(frame).data)


def test_resolution_mismatch_raises():
    enc, _ = build_encoder()
    with pytest.raises(DimensionError):
        enc.encode(np.zeros((32, 32, 3)))


def test_invalid_config_rejected():
    with pytest.raises(ConfigError):
        EncoderConfig(resolution=60, stage_channels=(4, 8, 16)).validate()
    with pytest.raises(ConfigError):
        EncoderConfig(embedding_size=0).validate()


def test_batched_and_single_agree():
    enc, _ = build_encoder(EncoderConfig(resolution=16, stage_channels=(4, 8), embedding_size=12))
    frames = np.random.default_rng(2).random((3, 16, 16, 3))
    batched = enc.encode(frames).data
    for i in range(3):
        np.testing.assert_allclose(enc.encode(frames[i]).data, batched[i], atol=1e-12)


def test_gradients_flow_through_toy_encoder():
    frame = np.random.default_rng(3).random((8, 8, 3))
    weights = np.random.default_rng(4).normal(size=(7,))

    def make_instance(dt):
        with T.using_dtype(dt):
            store = ParamStore()
            enc = ConvEncoder(EncoderConfig(resolution=8, stage_channels=(2, 3),
                                            embedding_size=7),
                              store, np.random.default_rng(5))
            tframe = T.Tensor(frame, requires_grad=True, dtype=dt)

        def fwd():
            with T.using_dtype(dt):
                return scalarize(enc.encode(tframe), weights)

        checked = [("frame", tframe)] + [(n, store[n]) for n in store.names()]
        return fwd, checked

    result = run_check("encoder-toy", make_instance, "float64", sample=40)
    assert result.passed, result.line()
