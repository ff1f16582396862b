import numpy as np
import pytest

from eegloc.errors import DegeneratePoint
from eegloc.pancake import project, rasterize, read_pgm, render_pancake, write_pgm


def test_vertex_maps_to_origin():
    proj = project({"Cz": np.array([1.0, 2.0, 93.0])}, head_center=(1.0, 2.0, 3.0))
    np.testing.assert_allclose(proj.coords["Cz"], (0.0, 0.0), atol=1e-12)


def test_axis_convention_and_mirror():
    pts = {"R": np.array([40.0, 10.0, 30.0]), "L": np.array([-40.0, 10.0, 30.0]), "A": np.array([0.0, 50.0, 0.0])}
    c = project(pts, (0, 0, 0)).coords
    assert c["R"][0] == pytest.approx(-c["L"][0], abs=1e-12)
    assert c["R"][1] == pytest.approx(c["L"][1], abs=1e-12)
    assert c["R"][0] > 0
    # anterior equator point: theta = pi/2 along +v
    np.testing.assert_allclose(c["A"], (0.0, np.pi / 2), atol=1e-12)


def test_custom_vertex_axis():
    proj = project({"p": np.array([0.0, 0.0, 50.0]), "q": np.array([50.0, 0.0, 0.0])}, (0, 0, 0), (1.0, 0, 0))
    np.testing.assert_allclose(proj.coords["q"], (0, 0), atol=1e-12)
    assert np.hypot(*proj.coords["p"]) == pytest.approx(np.pi / 2)


def test_template_projection_injective(clean_phantom):
    proj = project(clean_phantom.truth, clean_phantom.spec.head_center_mm)
    uv = np.array(list(proj.coords.values()))
    assert len(uv) == 65
    d = np.linalg.norm(uv[:, None] - uv[None], axis=-1) + np.eye(65) * 1e9
    assert d.min() > 0.05


def test_degenerate_point():
    with pytest.raises(DegeneratePoint):
        project({"x": np.zeros(3)}, (0, 0, 0))


def test_raster_and_files(tmp_path, clean_phantom):
    proj, img = render_pancake(clean_phantom.truth, clean_phantom.spec.head_center_mm,
                               image_path=tmp_path / "p.pgm", coords_path=tmp_path / "p.csv", size=256)
    assert img.shape == (256, 256) and img.dtype == np.uint8
    assert (img == 255).sum() > 65 and (img == 90).any()
    back = read_pgm(tmp_path / "p.pgm")
    assert np.array_equal(back, img)
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "label,u,v" and len(lines) == 66
    # whitespace-valued first pixels survive the header parse
    raw = np.full((4, 5), 32, dtype=np.uint8)
    write_pgm(raw, tmp_path / "w.pgm")
    assert np.array_equal(read_pgm(tmp_path / "w.pgm"), raw)
    assert np.array_equal(rasterize(proj, 256), img)
