import json

import numpy as np
import pytest

import scenekit


def test_camera_round_trip():
    cam = scenekit.fov_to_intrinsics(60.0, 64, 48)
    assert cam.width == 64 and cam.height == 48
    assert cam.fx == pytest.approx(32.0 / np.tan(np.radians(30.0)))

    rng = np.random.default_rng(0)
    depth = rng.uniform(0.5, 4.0, size=(48, 64))
    depth[3, 5] = np.nan
    points, pixels = scenekit.unproject(depth, cam)
    assert points.shape == (64 * 48 - 1, 3)
    assert 3 * 64 + 5 not in set(pixels.tolist())

    uvd = scenekit.project(points, cam)
    u, v = pixels % 64, pixels // 64
    np.testing.assert_allclose(uvd[:, 0], u + 0.5, atol=1e-9)
    np.testing.assert_allclose(uvd[:, 1], v + 0.5, atol=1e-9)
    np.testing.assert_allclose(uvd[:, 2], depth.reshape(-1)[pixels])

    behind = scenekit.project(np.array([[0.0, 0.0, -1.0]]), cam)
    assert np.isnan(behind[0, 0])


def test_fit_scale_shift():
    affine = np.linspace(0.1, 1.0, 20).reshape(4, 5)
    scale, shift = scenekit.fit_scale_shift(affine, 2.5 * affine + 0.3)
    assert scale == pytest.approx(2.5)
    assert shift == pytest.approx(0.3)
    with pytest.raises(scenekit.Error, match="rank_deficient"):
        scenekit.fit_scale_shift(np.ones((2, 2)), affine[:2, :2])


def test_metrics_on_arrays():
    a = np.zeros((1, 3))
    b = np.array([[1.0, 0.0, 0.0]])
    assert scenekit.chamfer(a, b) == pytest.approx(1.0)
    f, p, r = scenekit.f_score(a, b, 0.5)
    assert (f, p, r) == (0.0, 0.0, 0.0)
    f, p, r = scenekit.f_score(a, b, 1.5)
    assert f == pytest.approx(100.0)
    with pytest.raises(ValueError):
        scenekit.chamfer(np.zeros((3, 2)), b)


def test_marching_cubes_sphere(tmp_path):
    n = 40
    axis = np.linspace(-1.0, 1.0, n)
    z, y, x = np.meshgrid(axis, axis, axis, indexing="ij")
    sdf = np.sqrt(x * x + y * y + z * z) - 0.6
    verts, faces = scenekit.marching_cubes(sdf, (-1, -1, -1), (1, 1, 1))
    assert faces.shape[1] == 3 and len(faces) > 100
    radii = np.linalg.norm(verts, axis=1)
    assert np.abs(radii - 0.6).max() < 0.02

    path = tmp_path / "sphere.obj"
    scenekit.write_mesh(path, verts, faces)
    back_v, back_f = scenekit.read_mesh(path)
    np.testing.assert_array_equal(back_f, faces)
    np.testing.assert_allclose(back_v, verts, atol=1e-5)


def test_amodal_pair():
    h, w = 32, 32
    target = np.full((h, w, 3), 0.8, dtype=np.float32)
    mask = np.zeros((h, w), dtype=bool)
    mask[8:24, 8:24] = True
    silhouette = np.zeros((h, w), dtype=bool)
    silhouette[4:28, 12:20] = True
    pair = scenekit.compose_amodal_pair(target, mask, silhouette, "a red cube", seed=3)
    assert 0.1 <= pair["occluded_fraction"] <= 0.5
    hidden = pair["occluder"] & mask
    assert np.all(pair["conditioning"][hidden] == scenekit.NEUTRAL)
    assert np.all(pair["target"][~mask] == scenekit.NEUTRAL)
    assert pair["prompt"] == "a red cube"


def test_synth_reconstruct_evaluate(tmp_path):
    manifest = scenekit.synth(7, tmp_path / "bundle", things=3, crop_res=64)
    info = scenekit.load_manifest(manifest)
    things = [i for i in info["instances"] if i["category"] == "thing"]
    assert len(things) == 3

    depth = scenekit.read_pfm(tmp_path / "bundle" / info["depth"])
    assert depth.shape == (info["camera"]["height"], info["camera"]["width"])

    config = {"crop_res": 64, "background": {"enabled": False}, "jobs": 1}
    report = scenekit.reconstruct(manifest, tmp_path / "out", config)
    assert report["exit_code"] == 0
    assert report["summary"]["skipped"] == 0
    assert (tmp_path / "out" / "scene.obj").exists()
    index = json.loads((tmp_path / "out" / "scene_index.json").read_text())
    assert len(index["components"]) == 3

    ev = scenekit.evaluate(tmp_path / "out" / "scene.obj", tmp_path / "bundle" / "gt" / "scene.obj",
                           preset="custom", tau=0.05, points=5000, foreground_only=True)
    assert ev["metrics"]["f_score"] > 80.0

    with pytest.raises(scenekit.Error, match="^io: "):
        scenekit.load_manifest(tmp_path / "missing.json")
