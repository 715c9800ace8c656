"""Compositional single-view scene reconstruction."""

import json as _json

from . import _core
from ._core import (
    DEFAULT_CROP_RESOLUTION,
    NEUTRAL,
    CameraIntrinsics,
    Error,
    chamfer,
    compose_amodal_pair,
    f_score,
    fit_scale_shift,
    fov_to_intrinsics,
    marching_cubes,
    project,
    read_mask,
    read_mesh,
    read_pfm,
    read_png,
    synth,
    unproject,
    write_mesh,
)

__all__ = [
    "DEFAULT_CROP_RESOLUTION",
    "NEUTRAL",
    "CameraIntrinsics",
    "Error",
    "chamfer",
    "compose_amodal_pair",
    "evaluate",
    "f_score",
    "fit_scale_shift",
    "fov_to_intrinsics",
    "load_manifest",
    "marching_cubes",
    "project",
    "read_mask",
    "read_mesh",
    "read_pfm",
    "read_png",
    "reconstruct",
    "synth",
    "unproject",
    "write_mesh",
]


def load_manifest(path):
    """Validate a scene manifest and return it as a dict."""
    return _json.loads(_core.load_manifest(str(path)))


def reconstruct(manifest, out, config=None):
    """Reconstruct a scene into `out`. Returns the run report as a dict."""
    return _json.loads(_core.reconstruct(str(manifest), _json.dumps(config or {}), str(out)))


def evaluate(recon, gt, preset="front", tau=None, points=None, foreground_only=None, seed=0):
    """Compare two scene meshes. Returns the evaluation report as a dict."""
    return _json.loads(
        _core.evaluate(str(recon), str(gt), preset, tau, points, foreground_only, seed)
    )
