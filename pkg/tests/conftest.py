"""Shared fixtures: deterministic demo footage and prebuilt datasets."""

import os

import pytest

from chromawarp import dataset, demo

# frame mtimes are pinned so manifest creation stamps are reproducible
FIXED_MTIME = 1700000000


@pytest.fixture(scope="session")
def demo_clip(tmp_path_factory):
    """The bundled 200-frame test clip written to disk with pinned mtimes."""
    root = tmp_path_factory.mktemp("demo_clip")
    frames_dir = root / "frames"
    paths = demo.write_clip(frames_dir, demo.render_demo_clip())
    for p in paths:
        os.utime(p, (FIXED_MTIME, FIXED_MTIME))
    return frames_dir, paths


@pytest.fixture(scope="session")
def demo_dataset(demo_clip, tmp_path_factory):
    """Full dataset build (manifest + shots + sketches) over the demo clip."""
    frames_dir, _ = demo_clip
    out_dir = tmp_path_factory.mktemp("demo_dataset") / "out"
    manifest, shots = dataset.build_manifest(frames_dir, out_dir)
    return out_dir, manifest, shots
