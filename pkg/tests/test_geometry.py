import math

import numpy as np
import pytest

from curveflow.errors import DegenerateCurve, TooFewNodes
from curveflow.geometry import (BoundaryGeometry, Curve, compute_frame, read_curve_csv,
                                reflect_extend, resample_uniform, turning_and_winding,
                                write_curve_csv)
from curveflow.inequalities import ExteriorCurveSpec, generate_exterior_curve
from curveflow.runner import circle_arc


def neumann_graph(a=0.01, n=64, gap=1.0, mode=1):
    return Curve.graph(lambda x: a * np.cos(mode * math.pi * (x + 0.5 * gap) / gap), gap, n)


# resampling

def test_uniform_segment_is_a_fixed_point():
    seg = Curve.segment(1.0, 64)
    out = resample_uniform(seg, 64)
    assert np.max(np.abs(out.nodes - seg.nodes)) <= 1e-12


def test_clustered_segment_becomes_uniform():
    u = np.geomspace(1.0, 50.0, 201) - 1.0
    x = u / u[-1] - 0.5
    x[0], x[-1] = -0.5, 0.5
    clustered = Curve(np.column_stack([x, np.zeros_like(x)]), BoundaryGeometry(1.0))
    out = resample_uniform(clustered, 64)
    spacing = np.diff(out.nodes[:, 0])
    assert np.max(np.abs(spacing - 1 / 64)) <= 1e-10
    assert out.length == pytest.approx(1.0, abs=1e-6)


def test_resample_rejects_too_few_nodes():
    with pytest.raises(TooFewNodes):
        resample_uniform(Curve.segment(1.0, 64), 4)


def test_resample_keeps_endpoints_on_lines():
    out = resample_uniform(neumann_graph(0.1, 300), 97)
    assert out.endpoint_offsets() == (0.0, 0.0)
    assert out.n_segments == 97


def test_coincident_nodes_are_degenerate():
    nodes = Curve.segment(1.0, 16).nodes.copy()
    nodes[5] = nodes[4]
    with pytest.raises(DegenerateCurve):
        Curve(nodes, BoundaryGeometry(1.0))


# reflection

def test_ghosts_continue_a_segment():
    ext = reflect_extend(Curve.segment(1.0, 16), 2)
    x = ext.nodes[:, 0]
    assert np.allclose(np.diff(x), 1 / 16, atol=1e-15)
    assert np.all(ext.nodes[:, 1] == 0.0)
    assert ext.off_line == (False, False)


@pytest.mark.parametrize("depth", [1, 2, 3])
def test_ghosts_are_mirror_images(depth):
    curve = neumann_graph(0.05, 32)
    ext = reflect_extend(curve, depth).nodes
    for j in range(1, depth + 1):
        left_ghost = ext[depth - j]
        assert left_ghost[0] == pytest.approx(-1.0 - curve.nodes[j, 0], abs=1e-15)
        assert left_ghost[1] == curve.nodes[j, 1]


def test_perturbed_graph_has_exactly_zero_endpoint_k_s():
    frame = compute_frame(neumann_graph(0.01, 128))
    assert frame.k_s[0] == 0.0 and frame.k_s[-1] == 0.0
    assert frame.k_sss[0] == 0.0 and frame.k_sss[-1] == 0.0


def test_reflection_is_across_the_line_for_off_line_endpoint():
    nodes = Curve.segment(1.0, 16).nodes.copy()
    nodes[0, 0] += 1e-3
    curve = Curve(nodes, BoundaryGeometry(1.0), strict=False)
    ext = reflect_extend(curve, 1)
    assert ext.off_line == (True, False)
    assert ext.nodes[0, 0] == pytest.approx(-1.0 - nodes[1, 0])


def test_bad_depth_is_rejected():
    with pytest.raises(ValueError):
        reflect_extend(Curve.segment(), 4)


# frames

def test_segment_frame_is_flat():
    frame = compute_frame(Curve.segment(1.0, 50))
    assert np.all(frame.k == 0.0) and np.all(frame.k_s == 0.0)
    assert frame.length == pytest.approx(1.0, abs=1e-15)


def test_circle_curvature_is_second_order():
    for n in (64, 128, 256):
        err = np.max(np.abs(compute_frame(circle_arc(n)).k[1:-1] - 1.0))
        assert err <= 0.2 * (math.pi / n) ** 2


def test_graph_curvature_matches_closed_form():
    a, n = 0.01, 128
    curve = Curve.graph(lambda x: a * np.cos(math.pi * x), 1.0, n)
    frame = compute_frame(curve)
    x = curve.nodes[:, 0]
    yp = -a * math.pi * np.sin(math.pi * x)
    ypp = -a * math.pi ** 2 * np.cos(math.pi * x)
    # left-to-right graph: the normal points down, so k = -y'' / (1 + y'^2)^{3/2}
    exact = -ypp / (1 + yp ** 2) ** 1.5
    err = np.max(np.abs(frame.k[1:-1] - exact[1:-1]))
    assert err <= 5.0 * (1.0 / n) ** 2 * a * math.pi ** 4


def test_frame_arclength_is_increasing():
    frame = compute_frame(neumann_graph(0.2, 40))
    assert frame.s[0] == 0.0 and frame.s[-1] == frame.length
    assert np.all(np.diff(frame.s) > 0)


# winding

def test_segment_has_no_winding():
    assert turning_and_winding(compute_frame(Curve.segment()))[1] == 0.0


@pytest.mark.parametrize("omega", [0.5, 1.0])
def test_exterior_curve_winding(omega):
    curve = generate_exterior_curve(ExteriorCurveSpec(omega, n=512))
    total, w = turning_and_winding(compute_frame(curve))
    assert total == pytest.approx(2 * math.pi * omega, abs=1e-4)
    assert w == pytest.approx(omega, abs=1e-4)


def test_reversal_flips_winding():
    curve = generate_exterior_curve(ExteriorCurveSpec(0.5, n=512, seed=3, amplitude=0.5))
    w = turning_and_winding(compute_frame(curve))[1]
    w_rev = turning_and_winding(compute_frame(curve.reversed()))[1]
    assert w_rev == pytest.approx(-w, abs=1e-12)


# persistence

def test_curve_csv_round_trip_is_lossless(tmp_path):
    curve = generate_exterior_curve(ExteriorCurveSpec(1.0, n=64, seed=1, amplitude=0.3))
    path = tmp_path / "c.csv"
    write_curve_csv(curve, path)
    assert path.read_text().splitlines()[0] == "index,x,y"
    back = read_curve_csv(path, 1.0)
    assert np.array_equal(back.nodes, curve.nodes)
