import math
from dataclasses import replace

import numpy as np
import pytest

from curveflow import diagnostics as dg
from curveflow.engine import SolverConfig, Trajectory, run
from curveflow.errors import (HypothesisNotMet, InsufficientRecords, MissingSnapshots,
                              NonPositiveField)
from curveflow.geometry import Curve, compute_frame, resample_uniform
from curveflow.runner import circle_arc
from curveflow.scenario import perturbed_segment
from curveflow.velocity import FlowKind


def equilibrium(flow=FlowKind.CURVE_DIFFUSION, count=6):
    seg = Curve.segment(1.0, 64)
    base = dg.measure(seg, flow)
    records = [replace(base, t=0.1 * i) for i in range(count)]
    return Trajectory(records=records, flow=flow, gap=1.0, record_curves=[seg] * count)


def synthetic(name, values, times):
    base = dg.measure(Curve.segment(1.0, 16))
    records = [replace(base, t=float(t), **{name: float(v)}) for t, v in zip(times, values)]
    return Trajectory(records=records, flow=FlowKind.ELASTIC, gap=1.0)


# measure

def test_segment_functionals():
    rec = dg.measure(Curve.segment(1.0, 64))
    assert rec.L == pytest.approx(1.0, abs=1e-15)
    assert (rec.E, rec.Kosc, rec.omega_hat, rec.area) == (0.0, 0.0, 0.0, 0.0)
    assert rec.isoper is None


def test_semicircle_functionals():
    n = 256
    arc = circle_arc(n)
    rec = dg.measure(arc, frame=compute_frame(arc, "open"))
    h2 = (math.pi / n) ** 2
    assert rec.L == pytest.approx(math.pi, abs=h2)
    assert rec.kbar == pytest.approx(1.0, abs=h2)
    assert rec.Kosc <= h2
    assert rec.omega_hat == pytest.approx(0.5, abs=1e-12)


def test_kosc_matches_fine_reference():
    ref = dg.measure(perturbed_segment(1.0, [0.01], [1], 8192)).Kosc
    coarse = dg.measure(resample_uniform(perturbed_segment(1.0, [0.01], [1], 8192), 256)).Kosc
    assert coarse == pytest.approx(ref, rel=0.01)


def test_algebraic_identity_per_record():
    cfg = SolverConfig(n=64, t_max=5e-3, record_interval=1e-3)
    traj = run(perturbed_segment(1.0, [0.05], [1], 64), FlowKind.CURVE_DIFFUSION, cfg)
    assert dg.check_kosc_algebra(traj).verdict


# identity checks on equilibria

def test_equilibrium_length_identity_is_trivial():
    rep = dg.check_length_identity(equilibrium())
    assert rep.worst == 0.0 and rep.verdict


def test_equilibrium_winding_and_kbar():
    rep = dg.check_winding_and_kbar(equilibrium())
    assert rep.worst == 0.0 and rep.verdict


def test_equilibrium_kosc_evolution():
    rep = dg.check_kosc_evolution(equilibrium())
    assert rep.worst == 0.0


def test_equilibrium_time_integral():
    rep = dg.check_time_integral_bound(equilibrium())
    assert rep.details["integral"] == 0.0 and rep.verdict


def test_equilibrium_envelope():
    rep = dg.check_decay_envelope(equilibrium(FlowKind.ELASTIC))
    assert rep.verdict


def test_insufficient_records():
    traj = equilibrium(count=2)
    with pytest.raises(InsufficientRecords):
        dg.check_length_identity(traj)


def test_kosc_evolution_needs_snapshots():
    traj = equilibrium()
    traj.record_curves = []
    with pytest.raises(MissingSnapshots):
        dg.check_kosc_evolution(traj)


def test_envelope_hypothesis_gate():
    # L * int k^2 = pi lies above 4 pi / 7
    from curveflow.scenario import _hit_target, PerturbedSegment
    curve = _hit_target(PerturbedSegment(target_product=math.pi), np.ones(1), 1.0, 128)
    traj = Trajectory(records=[dg.measure(curve)] * 2, flow=FlowKind.ELASTIC, gap=1.0)
    with pytest.raises(HypothesisNotMet):
        dg.check_decay_envelope(traj)


# monotonicity reports

def test_monotone_report_slack():
    traj = synthetic("E", [1.0, 0.9, 0.9 + 5e-4, 0.5], [0, 1, 2, 3])
    rep = dg.monotone_report(traj, "E")
    assert rep.worst == pytest.approx(5e-4) and rep.verdict
    strict = dg.monotone_report(traj, "E", abs_slack=0.0, rel_slack=0.0)
    assert not strict.verdict and strict.first_violation_time == 2.0
    assert strict.line().startswith("FAIL")


# rate fits

def test_exact_exponential_rate():
    t = np.linspace(0.0, 2.0, 41)
    rate, r2 = dg.fit_exponential_rate(synthetic("E", np.exp(-3 * t), t), "E")
    assert rate == pytest.approx(3.0, abs=1e-6)
    assert r2 >= 0.999999


def test_rate_needs_positive_field():
    t = np.linspace(0.0, 1.0, 10)
    with pytest.raises(NonPositiveField):
        dg.fit_exponential_rate(synthetic("E", 1.0 - t, t), "E")


# scenario-scale behaviour

def test_elastic_length_never_grows(runs):
    traj, _ = runs("e-stability")
    rep = dg.check_length_identity(traj, skip=10)
    assert rep.details["max_dLdt"] <= 0.0


def test_elastic_energy_rate(runs):
    traj, _ = runs("e-stability")
    rate, r2 = dg.fit_exponential_rate(traj, "E")
    assert rate > 0 and r2 >= 0.99


def test_cd_kbar_stays_zero(runs):
    traj, _ = runs("cd-stability")
    assert np.max(np.abs(traj.column("kbar"))) <= 1e-8


def test_cd_kosc_never_increases(runs):
    traj, _ = runs("cd-stability")
    assert traj.records[0].Kosc <= 2 * math.pi / 3
    assert dg.check_kosc_evolution(traj).details["max_increase"] <= 0.0


def test_cd_time_integral_budget(runs):
    traj, _ = runs("cd-stability")
    assert dg.check_time_integral_bound(traj).worst <= 0.5


def test_report_rendering():
    text = dg.render_report("demo", [dg.check_kosc_algebra(equilibrium())], {"N": 64})
    assert text.splitlines()[0] == "[demo]"
    assert "N = 64" in text
