import math

import numpy as np
import pytest

from curveflow.engine import (SolverConfig, StepMode, StopReason, read_trajectory_csv, run,
                              step_explicit, step_semi_implicit, write_trajectory_csv)
from curveflow.errors import MalformedTrajectory
from curveflow.geometry import Curve, compute_frame
from curveflow.runner import circle_arc
from curveflow.velocity import FlowKind, normal_velocity


def neumann_graph(a=0.01, n=64):
    return Curve.graph(lambda x: a * np.cos(math.pi * (x + 0.5)), 1.0, n)


def amplitude(curve):
    """Coefficient of cos(pi (x + 1/2)) by the trapezoidal rule."""
    x, y = curve.nodes[:, 0], curve.nodes[:, 1]
    return 2.0 * np.trapezoid(y * np.cos(math.pi * (x + 0.5)), x)


# velocity

@pytest.mark.parametrize("flow", list(FlowKind))
def test_segment_velocity_is_zero(flow):
    assert np.all(normal_velocity(compute_frame(Curve.segment(1.0, 32)), flow) == 0.0)


def test_arc_velocity():
    frame = compute_frame(circle_arc(256, radius=2.0))
    inner = slice(8, -8)
    assert np.max(np.abs(normal_velocity(frame, FlowKind.CURVE_DIFFUSION)[inner])) < 1e-6
    e_speed = normal_velocity(frame, FlowKind.ELASTIC)[inner]
    assert np.allclose(e_speed, 1 / (2 * 2.0 ** 3), rtol=1e-4)


def test_linearised_cd_velocity():
    a, n = 0.01, 256
    curve = neumann_graph(a, n)
    speed = normal_velocity(compute_frame(curve), FlowKind.CURVE_DIFFUSION)
    x = curve.nodes[:, 0]
    # the normal points down along a left-to-right graph, hence the sign
    expected = -a * math.pi ** 4 * np.cos(math.pi * (x + 0.5))
    assert np.max(np.abs(speed - expected)) <= a * math.pi ** 4 * (a + 1e-3)


def test_flow_kind_parse():
    assert FlowKind.parse("CD") is FlowKind.CURVE_DIFFUSION
    assert FlowKind.parse("elastic") is FlowKind.ELASTIC
    with pytest.raises(ValueError):
        FlowKind.parse("heat")


# steppers

@pytest.mark.parametrize("stepper,tol", [(step_explicit, 1e-14), (step_semi_implicit, 1e-12)])
def test_segment_is_fixed(stepper, tol):
    seg = Curve.segment(1.0, 64)
    out = stepper(seg, FlowKind.ELASTIC, 1e-9).curve
    assert np.max(np.abs(out.nodes - seg.nodes)) <= tol


def test_euler_step_amplitude():
    curve = neumann_graph(0.01, 64)
    dt = (1 / 64) ** 4 / 16
    out = step_explicit(curve, FlowKind.CURVE_DIFFUSION, dt).curve
    decrement = 1.0 - amplitude(out) / amplitude(curve)
    assert decrement == pytest.approx(dt * math.pi ** 4, rel=0.02)


def test_explicit_step_beyond_stability_fails():
    h = 1 / 64
    cfg = SolverConfig(n=64, mode=StepMode.EXPLICIT, c_dt=1.0, t_max=100 * h ** 4,
                       record_interval=1.0, kappa_max=1e3)
    traj = run(neumann_graph(0.01, 64), FlowKind.CURVE_DIFFUSION, cfg)
    assert traj.stop_reason in (StopReason.CURVATURE_BLOWUP, StopReason.NUMERICAL_FAILURE)


def test_explicit_step_within_stability_is_quiet():
    h = 1 / 64
    cfg = SolverConfig(n=64, mode=StepMode.EXPLICIT, t_max=100 * h ** 4 / 16, record_interval=1.0)
    traj = run(neumann_graph(0.01, 64), FlowKind.CURVE_DIFFUSION, cfg)
    assert traj.stop_reason is StopReason.MAX_TIME


@pytest.mark.parametrize("dt", [10 * (1 / 64) ** 4 / 8, 1e-3])
def test_semi_implicit_amplitude_decay(dt):
    curve = neumann_graph(0.01, 64)
    out = step_semi_implicit(curve, FlowKind.CURVE_DIFFUSION, dt).curve
    factor = amplitude(out) / amplitude(curve)
    assert factor == pytest.approx(math.exp(-dt * math.pi ** 4), rel=0.05)


def test_steppers_agree_to_second_order():
    curve = neumann_graph(0.01, 64)
    h4 = (1 / 64) ** 4
    diffs = []
    for dt in (h4, h4 / 2):
        a = step_explicit(curve, FlowKind.CURVE_DIFFUSION, dt).curve.nodes
        b = step_semi_implicit(curve, FlowKind.CURVE_DIFFUSION, dt).curve.nodes
        diffs.append(np.max(np.abs(a - b)))
    assert diffs[0] <= 1e3 * h4 ** 2
    assert diffs[0] / diffs[1] == pytest.approx(4.0, rel=0.1)


def test_semi_implicit_rejects_bad_dt():
    with pytest.raises(ValueError):
        step_semi_implicit(Curve.segment(), FlowKind.ELASTIC, 0.0)


# run loop

def test_run_confines_endpoints_and_records_in_order():
    cfg = SolverConfig(n=64, t_max=5e-3, record_interval=1e-3, record_snapshots=True,
                       snapshot_times=(0.0, 2e-3))
    traj = run(neumann_graph(0.05, 64), FlowKind.CURVE_DIFFUSION, cfg)
    assert traj.stop_reason is StopReason.MAX_TIME
    assert np.all(np.diff(traj.times) > 0)
    for curve in traj.record_curves + [c for _, c in traj.snapshots]:
        assert curve.endpoint_offsets() == (0.0, 0.0)
    assert [t for t, _ in traj.snapshots][0] == 0.0 and len(traj.snapshots) == 2


def test_run_converges_to_translate():
    cfg = SolverConfig(n=64, t_max=1.0, record_interval=1e-2)
    traj = run(neumann_graph(0.01, 64), FlowKind.CURVE_DIFFUSION, cfg)
    assert traj.stop_reason is StopReason.CONVERGED
    y = traj.final_curve.nodes[:, 1]
    assert np.ptp(y) < 1e-6


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(n=4)
    with pytest.raises(ValueError):
        SolverConfig(t_max=-1)
    assert SolverConfig(mode="explicit").mode is StepMode.EXPLICIT


def test_trajectory_csv_round_trip(tmp_path):
    cfg = SolverConfig(n=32, t_max=2e-3, record_interval=5e-4)
    traj = run(neumann_graph(0.05, 32), FlowKind.ELASTIC, cfg)
    path = tmp_path / "t.csv"
    write_trajectory_csv(traj, path)
    cols = read_trajectory_csv(path)
    assert np.array_equal(cols["t"], traj.times)
    assert np.array_equal(cols["E"], traj.column("E"))


def test_missing_column_is_named(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,L\n0,1\n")
    with pytest.raises(MalformedTrajectory, match="kinf"):
        read_trajectory_csv(path)
