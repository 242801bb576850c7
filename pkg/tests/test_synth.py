import numpy as np
import pytest

from accnn.synth import NOISE_AMPLITUDE, SynthSceneParams, gen_synthetic_scene, size_at


def test_empty_scene_is_noise():
    img, pts = gen_synthetic_scene(SynthSceneParams(50, 40, 0, seed=3))
    assert pts == [] and img.shape == (40, 50)
    assert img.max() <= NOISE_AMPLITUDE


def test_deterministic():
    p = SynthSceneParams(80, 60, 15, 3, 9, 180, seed=11)
    a, b = gen_synthetic_scene(p), gen_synthetic_scene(p)
    assert np.array_equal(a[0], b[0]) and a[1] == b[1]


def test_seed_matters():
    a = gen_synthetic_scene(SynthSceneParams(seed=1))
    b = gen_synthetic_scene(SynthSceneParams(seed=2))
    assert a[1] != b[1]


def test_linear_size_law():
    p = SynthSceneParams(200, 200, 40, 4, 16, seed=5)
    _, pts = gen_synthetic_scene(p)
    ys = np.array([q.y for q in pts])
    sizes = np.array([q.head_size for q in pts])
    assert np.allclose(sizes, 4 + 12 * ys / 200, rtol=0, atol=1e-12)
    assert size_at(0, p) == 4 and size_at(200, p) == 16


def test_disks_inside_and_drawn():
    p = SynthSceneParams(120, 90, 25, 3, 12, 200, seed=7)
    img, pts = gen_synthetic_scene(p)
    for q in pts:
        r = q.head_size / 2
        assert r <= q.x <= 120 - r and r <= q.y <= 90 - r
        assert img[int(q.y), int(q.x)] >= 200


@pytest.mark.parametrize("kwargs", [
    dict(width=10, height=10, size_at_bottom=16),
    dict(width=20, height=20, n_people=100, size_at_top=4),
])
def test_capacity_errors(kwargs):
    with pytest.raises(ValueError, match="fit"):
        gen_synthetic_scene(SynthSceneParams(**kwargs))


@pytest.mark.parametrize("kwargs", [dict(size_at_top=0), dict(size_at_top=8, size_at_bottom=4),
                                    dict(n_people=-1), dict(blob_contrast=300)])
def test_bad_params(kwargs):
    with pytest.raises(ValueError):
        SynthSceneParams(**kwargs)
