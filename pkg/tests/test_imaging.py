import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nhaze.imaging import (
    CameraIntrinsics,
    DepthMap,
    DimensionError,
    ImageIOError,
    LatentMaps,
    SemanticMap,
    apply_imaging_model,
    compose_nighttime_clear,
    load_class_map,
    read_depth,
    read_image,
    read_label_png,
    read_pfm,
    write_image,
    write_label_png,
    write_pfm,
)


def _latents(h, w, L=1.0, eta=(1, 1, 1), t=1.0):
    return LatentMaps(np.full((h, w), L), np.broadcast_to(np.array(eta, float), (h, w, 3)).copy(),
                      np.full((h, w), t))


def test_imaging_model_examples():
    I = apply_imaging_model(np.ones((2, 2, 3)), _latents(2, 2))
    np.testing.assert_array_equal(I, 1.0)
    R = np.random.default_rng(0).random((3, 4, 3))
    I = apply_imaging_model(R, _latents(3, 4, 0.7, (1, 0.5, 0.2), 0.0))
    np.testing.assert_allclose(I, np.broadcast_to([0.7, 0.35, 0.14], I.shape))
    I = apply_imaging_model(np.full((1, 1, 3), 0.5), _latents(1, 1, 0.8, (1, 0.9, 0.6), 0.5))
    np.testing.assert_allclose(I[0, 0], [0.6, 0.54, 0.36])


def test_imaging_model_dimension_errors():
    with pytest.raises(DimensionError):
        apply_imaging_model(np.ones((2, 3, 3)), _latents(2, 2))
    with pytest.raises(DimensionError):
        LatentMaps(np.ones((2, 2)), np.ones((2, 2, 3)), np.ones((3, 2)))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_imaging_model_monotone_and_bounded(seed):
    rng = np.random.default_rng(seed)
    R = rng.random((5, 6, 3))
    R2 = np.minimum(R + rng.random(R.shape) * 0.3, 1.0)
    eta = rng.uniform(0.1, 1, (5, 6, 3))
    eta /= eta.max(axis=2, keepdims=True)
    lat = LatentMaps(rng.random((5, 6)), eta, rng.random((5, 6)))
    I, I2 = apply_imaging_model(R, lat), apply_imaging_model(R2, lat)
    assert np.all(I <= I2 + 1e-15)
    assert np.all(I <= lat.L[..., None] * lat.eta + 1e-15)


def test_compose_examples():
    R = np.random.default_rng(1).random((4, 4, 3))
    np.testing.assert_array_equal(compose_nighttime_clear(R, np.ones((4, 4))), R)
    np.testing.assert_array_equal(compose_nighttime_clear(R, np.zeros((4, 4))), 0)
    J = compose_nighttime_clear(np.array([[[1, 0.5, 0.25]]]), np.array([[0.4]]))
    np.testing.assert_allclose(J[0, 0], [0.4, 0.2, 0.1])
    with pytest.raises(DimensionError):
        compose_nighttime_clear(R, np.ones((3, 4)))


def test_png_codes(tmp_path):
    import cv2
    cv2.imwrite(str(tmp_path / "a.png"), np.array([[0, 255]], np.uint8))
    np.testing.assert_array_equal(read_image(tmp_path / "a.png"), [[0.0, 1.0]])
    cv2.imwrite(str(tmp_path / "b.png"), np.array([[32768]], np.uint16))
    assert read_image(tmp_path / "b.png")[0, 0] == pytest.approx(0.50000763, abs=1e-8)


@pytest.mark.parametrize("bits", [8, 16])
def test_png_roundtrip_half_step(tmp_path, bits):
    img = np.random.default_rng(bits).random((7, 9, 3))
    write_image(tmp_path / "x.png", img, bits)
    back = read_image(tmp_path / "x.png")
    assert np.abs(back - img).max() <= 0.5 / ((1 << bits) - 1) + 1e-12


def test_write_clamps_and_rejects_nan(tmp_path):
    write_image(tmp_path / "c.png", np.array([[-0.5, 1.5]]))
    np.testing.assert_array_equal(read_image(tmp_path / "c.png"), [[0.0, 1.0]])
    with pytest.raises(ImageIOError):
        write_image(tmp_path / "n.png", np.array([[np.nan]]))


def test_unreadable_and_bad_channels(tmp_path):
    with pytest.raises(ImageIOError):
        read_image(tmp_path / "missing.png")
    (tmp_path / "junk.png").write_bytes(b"not a png")
    with pytest.raises(ImageIOError):
        read_image(tmp_path / "junk.png")
    with pytest.raises(ImageIOError):
        write_image(tmp_path / "two.png", np.zeros((2, 2, 2)))


def test_pfm_roundtrip_and_nan(tmp_path):
    d = np.random.default_rng(0).random((5, 8)).astype(np.float32) * 50
    write_pfm(tmp_path / "d.pfm", d)
    np.testing.assert_array_equal(read_pfm(tmp_path / "d.pfm"), d)
    bad = d.copy()
    bad[1, 1] = np.nan
    write_pfm(tmp_path / "n.pfm", bad)
    with pytest.raises(ImageIOError):
        read_pfm(tmp_path / "n.pfm")


def test_depth_units(tmp_path):
    import cv2
    cv2.imwrite(str(tmp_path / "d.png"), np.array([[1500, 0]], np.uint16))
    D = read_depth(tmp_path / "d.png")
    assert D.data[0, 0] == pytest.approx(1.5)
    assert D.sky_mask.tolist() == [[False, True]]
    assert read_depth(tmp_path / "d.png", depth_scale=0.01).data[0, 0] == pytest.approx(15.0)
    write_pfm(tmp_path / "d.pfm", np.array([[12.5, 3.0]]))
    np.testing.assert_allclose(read_depth(tmp_path / "d.pfm").data, [[12.5, 3.0]])


def test_depth_invariants():
    with pytest.raises(ValueError):
        DepthMap(np.array([[1.0, -2.0]]), np.zeros((1, 2), bool))
    D = DepthMap(np.array([[1.0, 0.0]]), np.array([[False, True]]))
    assert D.shape == (1, 2)
    D = DepthMap.from_array(np.array([[np.inf, 2.0, 0.0]]))
    assert D.sky_mask.tolist() == [[True, False, True]]


def test_semantic_map_and_class_file(tmp_path):
    (tmp_path / "c.toml").write_text("road = [7, 8]\nsky = [23]\n")
    cfg = load_class_map(tmp_path / "c.toml")
    C = SemanticMap(np.array([[7, 23, 1], [8, 8, 0]]), cfg)
    assert C.mask("road").tolist() == [[True, False, False], [True, True, False]]
    assert C.kinds().tolist() == [[1, 2, 0], [1, 1, 0]]
    (tmp_path / "bad.toml").write_text("road = [1]\ncars = [2]\n")
    with pytest.raises(ValueError):
        load_class_map(tmp_path / "bad.toml")


def test_label_png_roundtrip(tmp_path):
    labels = np.array([[0, 3, 300]])
    write_label_png(tmp_path / "l.png", labels)
    np.testing.assert_array_equal(read_label_png(tmp_path / "l.png"), labels)


def test_camera_file(tmp_path):
    (tmp_path / "cam.toml").write_text("[camera]\nfx = 500.0\nfy = 500\ncx = 320\ncy = 240\n")
    K = CameraIntrinsics.from_file(tmp_path / "cam.toml")
    assert (K.fx, K.cy) == (500.0, 240.0)
    with pytest.raises(ValueError):
        CameraIntrinsics(0, 1, 0, 0)
