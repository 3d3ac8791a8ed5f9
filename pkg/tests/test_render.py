import numpy as np
import pytest
from conftest import make_scan

from impurity_anomaly.area import Cluster
from impurity_anomaly.exceptions import InvalidInputError
from impurity_anomaly.render import (
    UNCLUSTERED_GREY,
    colormap,
    mask_background,
    render_clusters,
    render_overlay,
    save_png,
)


def test_colormap_endpoints():
    assert colormap([0.0, 1 / 3, 2 / 3, 1.0]).tolist() == [[0, 0, 255], [0, 255, 255], [255, 255, 0], [255, 0, 0]]
    assert colormap([0.5]).tolist() == [[128, 255, 127]]  # 127.5 rounds half to even
    with pytest.raises(InvalidInputError):
        colormap([1.2])
    with pytest.raises(InvalidInputError):
        colormap([np.nan])


def test_overlay_pixels():
    scan = make_scan([(1, 1, 2, 2), (5, 1, 6, 3)], width=10, height=6)
    rgb = render_overlay(scan, [0.0, 1.0])
    assert rgb.shape == (6, 10, 3) and rgb.dtype == np.uint8
    assert rgb[1, 1].tolist() == [0, 0, 255]
    assert rgb[3, 6].tolist() == [255, 0, 0]
    assert rgb[0, 0].tolist() == [0, 0, 0]
    painted = (rgb != 0).any(axis=2)
    assert painted.sum() == 4 + 6


def test_background_and_errors():
    scan = make_scan([(1, 1, 2, 2)], width=5, height=4)
    bg = np.full((4, 5, 3), 50, dtype=np.uint8)
    rgb = render_overlay(scan, [1.0], background=bg)
    assert rgb[0, 0].tolist() == [50, 50, 50] and bg[1, 1].tolist() == [50, 50, 50]
    with pytest.raises(InvalidInputError):
        render_overlay(scan, [1.0], background=np.zeros((3, 3, 3), dtype=np.uint8))
    with pytest.raises(InvalidInputError):
        render_overlay(scan, [1.0, 0.5])


def test_empty_scan():
    scan = make_scan([], width=8, height=3)
    assert render_overlay(scan, []).sum() == 0
    assert mask_background(scan).shape == (3, 8, 3)


def test_clusters():
    scan = make_scan([(0, 0, 0, 0), (2, 0, 2, 0), (4, 0, 4, 0), (6, 0, 6, 0)], width=8, height=2)
    clusters = [Cluster([0], [0, 1], 0.0, 10.0), Cluster([2], [2], 0.0, 2.0)]
    rgb = render_clusters(scan, clusters)
    assert rgb[0, 0].tolist() == rgb[0, 2].tolist() == [255, 0, 0]
    assert rgb[0, 4].tolist() == [0, 0, 255]
    assert tuple(rgb[0, 6]) == UNCLUSTERED_GREY
    with pytest.raises(InvalidInputError):
        render_clusters(scan, [Cluster([0], [0], 0.0)])


def test_png_bytes_are_stable(tmp_path):
    scan = make_scan([(1, 1, 4, 4), (6, 2, 8, 3)], width=12, height=8)
    rgb = render_overlay(scan, [0.25, 0.75])
    save_png(rgb, tmp_path / "a.png")
    save_png(render_overlay(scan, [0.25, 0.75]), tmp_path / "b.png")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    from PIL import Image
    assert np.array_equal(np.asarray(Image.open(tmp_path / "a.png")), rgb)
