# Copyright Contributors to the ZoomSplat Project
# SPDX-License-Identifier: Apache-2.0
import math

import numpy as np
import pytest

import zoomsplat as zs


def ring(count=4, radius=4.0, size=32):
    cams = []
    for i in range(count):
        a = 2.0 * math.pi * i / count
        eye = np.array([radius * math.sin(a), 0.3 * (-1) ** i, -radius * math.cos(a)])
        cams.append(zs.Camera.look_at(eye, np.zeros(3), np.array([0.0, 1.0, 0.0]), 60.0, size, size))
    return cams


def blob_scene(cams):
    p = zs.GaussianPrimitive()
    p.center = np.zeros(3)
    p.log_scale = np.full(3, math.log(0.3))
    p.opacity_logit = 3.0
    p.sh_coeffs = [np.array([1.0, -0.5, 0.2])]
    return zs.make_base_scene([p], 0, cams)


def test_psnr_and_ssim():
    a = np.full((16, 16, 3), 0.5)
    assert zs.psnr(a, a) == 99.0
    assert zs.psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)
    assert zs.ssim(a, a) == 1.0
    with pytest.raises(zs.InvalidParameter):
        zs.ssim(np.zeros((8, 8)), np.zeros((8, 8)))


def test_lod_weight_and_psi():
    assert zs.lod_weight(1.0, 1.0, 4.0) == 1.0
    assert zs.lod_weight(2.0, 1.0, 4.0) == pytest.approx(0.5)
    cam = zs.Camera()
    cam.fx = cam.fy = 100.0
    cam.width = cam.height = 64
    assert zs.scale_projection_coefficient(cam, np.array([0.0, 0.0, 200.0])) == pytest.approx(2.0)


def test_render_shapes_and_center_color():
    cams = ring()
    out = zs.render(blob_scene(cams), cams[0])
    assert out["color"].shape == (32, 32, 3)
    assert out["alpha"].shape == (32, 32, 1)
    assert out["depth"].shape == (32, 32)
    assert out["alpha"][16, 16, 0] > 0.9
    assert out["color"][16, 16, 0] > out["color"][16, 16, 2]
    assert out["depth"][16, 16] == pytest.approx(4.0, rel=0.05)


def test_scene_bytes_round_trip(tmp_path):
    cams = ring()
    scene = blob_scene(cams)
    data = zs.encode_scene(scene)
    assert data.startswith(b"ply\n")
    assert zs.encode_scene(zs.decode_scene(data)) == data
    zs.write_scene(tmp_path / "s.ply", scene)
    assert len(zs.read_scene(tmp_path / "s.ply")) == 1
    with pytest.raises(zs.LoadError):
        zs.decode_scene(b"plx\n")


def test_cameras_and_roi(tmp_path):
    cams = ring()
    zs.write_cameras(tmp_path / "c.json", cams)
    assert zs.read_cameras(tmp_path / "c.json") == cams
    roi = zs.compute_roi(cams)
    assert np.linalg.norm(roi.center) < 0.35
    zoomed = zs.make_zoom_cameras(cams, roi, 1, 4)
    assert zoomed[0].fx == pytest.approx(4 * cams[0].fx)


def test_builtin_sr_and_resampling():
    lr = np.full((8, 8, 3), 0.25)
    hr = zs.builtin_reference_sr(lr, 4)
    assert hr.shape == (32, 32, 3)
    assert np.allclose(hr, 0.25)
    assert zs.bicubic_downsample(zs.bicubic_upsample(lr, 2), 2).shape == lr.shape


def test_warp_identity():
    cam = ring(size=16)[0]
    img = np.random.default_rng(0).random((16, 16, 3))
    depth = np.full((16, 16), 4.0)
    warped, mask = zs.warp_image(img, depth, depth, cam, cam)
    assert mask.min() == 1.0
    assert np.allclose(warped, img, atol=1e-9)


def test_config_round_trip():
    cfg = zs.parse_config("zoom_factor_s = 4\n# note\nstatic_prompt = a photo\n")
    assert zs.parse_config(zs.emit_config(cfg)) == cfg
