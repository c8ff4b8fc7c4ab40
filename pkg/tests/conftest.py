"""Shared fixtures: small dictionary specs and synthetic scenes."""

import numpy as np
import pytest

from gcmp.dictionary import DictionarySpec
from gcmp.synthesize import SceneObject, SceneSpec, synthesize


DIMS = (48, 48)


@pytest.fixture(scope="session")
def small_spec():
    return DictionarySpec(image_dims=DIMS, rotation_count=1, scale_count=5)


@pytest.fixture(scope="session")
def stereo_scene():
    """Two moving objects over a static textured background."""
    scene = SceneSpec(dims=DIMS, objects=[
        SceneObject("disk", 2, 30, 8, 8, 90.0, shift=(0, 0)),
        SceneObject("rect", 30, 2, 10, 8, 70.0, shift=(0, 0)),
        SceneObject("disk", 4, 4, 6, 6, 110.0, shift=(0, 0)),
        SceneObject("rect", 20, 38, 12, 6, 80.0, shift=(0, 0)),
        SceneObject("rect", 8, 14, 12, 10, 200.0, shift=(3, 0)),
        SceneObject("disk", 28, 24, 12, 12, 150.0, shift=(-2, 1)),
    ], background=30.0, blur_sigma=1.2)
    return synthesize(scene)


@pytest.fixture(scope="session")
def rectified_scene():
    """Rectified stereo: full-frame background plane at disparity 1 plus
    textured static blobs at disparity 1 and two foreground objects."""
    rng = np.random.default_rng(7)
    objs = [SceneObject("rect", -8, -8, 64, 64, 45.0, shift=(1, 0))]
    for i in range(24):
        x, y = rng.integers(0, 44, 2)
        w = int(rng.integers(4, 9))
        inten = float(rng.uniform(60, 140))
        objs.append(SceneObject("disk" if i % 2 else "rect",
                                int(x), int(y), w, w, inten, shift=(1, 0)))
    objs.append(SceneObject("rect", 8, 14, 12, 10, 220.0, shift=(3, 0)))
    objs.append(SceneObject("disk", 28, 24, 12, 12, 180.0, shift=(2, 0)))
    scene = SceneSpec(dims=DIMS, objects=objs, background=30.0,
                      blur_sigma=1.5)
    return synthesize(scene)


@pytest.fixture(scope="session")
def multiview_scene():
    """Three-view scene: six far disks, two near disks, known depths."""
    objs = [
        SceneObject("disk", 2, 2, 7, 7, 90.0, depth=48.0),
        SceneObject("disk", 36, 6, 8, 8, 120.0, depth=48.0),
        SceneObject("disk", 4, 34, 8, 8, 70.0, depth=48.0),
        SceneObject("disk", 22, 40, 7, 7, 110.0, depth=48.0),
        SceneObject("disk", 40, 36, 7, 7, 95.0, depth=48.0),
        SceneObject("disk", 22, 4, 7, 7, 80.0, depth=48.0),
        SceneObject("disk", 8, 14, 11, 11, 220.0, depth=16.0),
        SceneObject("disk", 28, 22, 13, 13, 170.0, depth=24.0),
    ]
    scene = SceneSpec(dims=DIMS, objects=objs, background=30.0,
                      blur_sigma=1.5, focal=48.0, baselines=(1.0, 2.0),
                      background_depth=48.0)
    return synthesize(scene)
