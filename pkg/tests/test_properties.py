"""Randomised invariants over generated curves, functions and scenarios."""

import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from curveflow.diagnostics import measure
from curveflow.engine import SolverConfig
from curveflow.geometry import Curve, compute_frame, resample_uniform
from curveflow.inequalities import (SampledFunction, poincare_ratio, poincare_tolerance,
                                    random_trig_function)
from curveflow.scenario import (ExteriorData, LemniscateLobe, PerturbedSegment, ScenarioSpec,
                                parse_scenario, perturbed_segment, render_scenario)
from curveflow.velocity import FlowKind

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

amplitudes = st.lists(st.floats(-0.05, 0.05), min_size=1, max_size=4)
gaps = st.floats(0.25, 4.0)
sizes = st.integers(16, 200)


@st.composite
def graphs(draw):
    amps = draw(amplitudes)
    gap = draw(gaps)
    modes = list(range(1, len(amps) + 1))
    return perturbed_segment(gap, [a * gap for a in amps], modes, draw(sizes))


@SETTINGS
@given(graphs(), st.integers(16, 128))
def test_resampling_is_idempotent(curve, n):
    once = resample_uniform(curve, n)
    twice = resample_uniform(once, n)
    assert np.max(np.abs(twice.nodes - once.nodes)) <= 1e-12 * max(1.0, curve.gap)


@SETTINGS
@given(graphs())
def test_frame_is_orthonormal(curve):
    frame = compute_frame(curve)
    assert np.max(np.abs(np.sum(frame.tau * frame.nu, axis=1))) <= 1e-12
    assert np.max(np.abs(np.hypot(frame.nu[:, 0], frame.nu[:, 1]) - 1.0)) <= 1e-12
    assert np.all(np.diff(frame.s) > 0)


@SETTINGS
@given(graphs())
def test_endpoint_odd_derivatives_vanish(curve):
    frame = compute_frame(curve)
    for values in (frame.k_s, frame.k_sss):
        assert values[0] == 0.0 and values[-1] == 0.0


@SETTINGS
@given(graphs())
def test_graphs_have_no_winding(curve):
    rec = measure(curve)
    assert abs(rec.omega_hat) <= 1e-12
    assert abs(rec.Kosc - (rec.L * rec.E - (2 * math.pi * rec.omega_hat) ** 2)) <= 1e-10 * max(rec.L * rec.E, 1e-300)


@SETTINGS
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["mean-zero", "dirichlet"]),
       st.floats(0.5, 2.0), st.sampled_from([256, 512, 1024]))
def test_poincare_never_violated(seed, variant, length, n):
    f = random_trig_function(np.random.default_rng(seed), variant, length, n)
    assert poincare_ratio(f, variant) <= length ** 2 / math.pi ** 2 * (1 + poincare_tolerance(n))


@SETTINGS
@given(st.floats(0.5, 2.0), st.integers(1, 5))
def test_poincare_is_scale_covariant(length, mode):
    s = np.linspace(0.0, 1.0, 513)
    base = SampledFunction(np.cos(mode * math.pi * s), 1.0)
    scaled = SampledFunction(np.cos(mode * math.pi * s), length)
    assert math.isclose(poincare_ratio(scaled, "mean-zero"),
                        length ** 2 * poincare_ratio(base, "mean-zero"), rel_tol=1e-12)


names = st.from_regex(r"[A-Za-z0-9][A-Za-z0-9._-]{0,20}", fullmatch=True)
positive = st.floats(1e-3, 1e3, allow_nan=False)
generators = st.one_of(
    st.builds(PerturbedSegment,
              amplitude=st.floats(0, 0.4),
              modes=st.lists(st.integers(1, 9), min_size=1, max_size=4, unique=True).map(tuple),
              seed=st.integers(0, 10 ** 6),
              target_product=st.none() | positive,
              amplitude_cap=positive),
    st.builds(ExteriorData,
              omega=st.integers(-6, 6).filter(bool).map(lambda k: k / 2),
              seed=st.integers(0, 10 ** 6), amplitude=st.floats(0, 2)),
    st.builds(LemniscateLobe, scale=st.floats(0.05, 1.0), lobe_turns=st.floats(0.1, 2.0)),
)
solvers = st.builds(
    SolverConfig,
    n=st.integers(8, 4096),
    mode=st.sampled_from(["explicit", "semi-implicit"]),
    c_dt=st.none() | positive,
    resample_every=st.integers(1, 50),
    t_max=positive,
    conv_tol=positive,
    kappa_max=positive,
    record_interval=positive,
    snapshot_times=st.lists(st.floats(0, 10), max_size=3).map(tuple),
    record_snapshots=st.booleans(),
)


@SETTINGS
@given(names, st.sampled_from(list(FlowKind)), positive, generators, solvers,
       st.lists(st.sampled_from(["converged", "winding", "parity", "monotone-L"]), unique=True),
       st.floats(0, 1), st.integers(0, 100), st.none() | positive)
def test_scenario_round_trip(name, flow, gap, generator, solver, checks, slack, skip, budget):
    spec = ScenarioSpec(name=name, flow=flow, gap=gap, generator=generator, solver=solver,
                        checks=tuple(checks), mono_rel_slack=slack, identity_skip=skip,
                        wall_budget=budget)
    assert parse_scenario(render_scenario(spec)) == spec


@SETTINGS
@given(st.floats(0.5, 2.0), st.integers(16, 64))
def test_segment_is_fixed_by_resampling(gap, n):
    seg = Curve.segment(gap, n)
    assert np.max(np.abs(resample_uniform(seg, n).nodes - seg.nodes)) <= 1e-12 * gap
