import numpy as np
import pytest

import xannot


def test_decompose_orders_planes():
    scene = xannot.synth_scene(seed=3)
    high, low = xannot.decompose(scene["image"])
    assert high.shape == scene["image"].shape[:2]
    assert (high >= low).all()
    assert np.array_equal(high, scene["high"])


def test_attenuation_value():
    assert xannot.attenuation(1.0, 2.0, 1.0, 0.0) == pytest.approx(8.0)


def test_rle_round_trip():
    m = np.zeros((3, 3), np.uint8)
    m[1, 1] = 1
    rle = xannot.rle_encode(m)
    assert rle == {"size": [3, 3], "counts": [4, 1, 4]}
    assert np.array_equal(xannot.rle_decode(rle["counts"], tuple(rle["size"])), m)


def test_metrics():
    a = np.zeros((2, 2), np.uint8)
    b = np.zeros((2, 2), np.uint8)
    a[0, :] = 1
    b[:, 0] = 1
    assert xannot.iou(a, b) == pytest.approx(1 / 3)
    assert xannot.dice(a, b) == pytest.approx(1 / 2)


def test_laplacian_impulse():
    g = np.zeros((5, 5), np.uint8)
    g[2, 2] = 1
    assert xannot.laplacian_variance(g) == pytest.approx(20 / 9)


def test_apg_dumbbell_clusters():
    scene = xannot.synth_scene(kind="dumbbell", width=128, height=128)
    r = xannot.apg_generate(scene["image"], 64.5, 64.5, seed=1)
    assert r["mode"] == "clustered"
    (x1, _), (x2, _) = r["points"]
    assert x1 < 64 < x2 or x2 < 64 < x1


def test_farthest_pair():
    p, q = xannot.farthest_cross_pair([(0, 0), (1, 0)], [(5, 0), (9, 0)])
    assert (p, q) == ((0, 0), (9, 0))


def test_taxonomy():
    groups = xannot.taxonomy()
    assert sum(len(v) for v in groups.values()) == 30
    assert xannot.validate_category("Hammer") == ("Tools", "Hammer")
    with pytest.raises(xannot.TaxonomyError):
        xannot.validate_category("Knife")


def test_errors_share_base():
    with pytest.raises(xannot.Error):
        xannot.rle_decode([5], (2, 2))
