"""Scenario execution, check evaluation, verification suites and on-disk outputs."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .engine import StopReason, Trajectory, run, trajectory_summary, write_trajectory_csv
from .errors import CurveFlowError
from .geometry import BoundaryGeometry, Curve, compute_frame, write_curve_csv
from .inequalities import (boundary_parity_check, corollary_rhs, cosine_perturbation,
                           exterior_sweep, linearization_residual, poincare_sharp_cases,
                           poincare_sweep, write_exterior_csv, write_poincare_csv)
from .scenario import SUITES, ScenarioSpec, generate_initial, render_scenario
from .velocity import FlowKind

OUTPUT_ENV = "CURVEFLOW_OUT"
SUITES_ALL = SUITES


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "curveflow-out"))


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    limit: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: worst={self.worst:.6g} limit={self.limit:.6g}{extra}"


def _from_report(name: str, rep: dg.MonotonicityReport) -> CheckResult:
    detail = "" if rep.worst_time is None else f"worst at t={rep.worst_time:.6g}"
    return CheckResult(name, rep.verdict, rep.worst, rep.slack, detail)


def linear_rate(gap: float) -> float:
    """Decay rate of ||k_ss||^2 for the slowest compliant mode, ``2 (pi/d)^4``."""
    return 2.0 * (math.pi / gap) ** 4


def _curves_of(traj: Trajectory):
    curves = list(traj.record_curves) + [c for _, c in traj.snapshots]
    if traj.final_curve is not None:
        curves.append(traj.final_curve)
    if traj.initial_curve is not None:
        curves.append(traj.initial_curve)
    return curves


def parity_over_run(traj: Trajectory) -> CheckResult:
    """Endpoint odd derivatives over every record and every stored curve."""
    worst = max((r.parity for r in traj.records), default=0.0)
    for curve in _curves_of(traj):
        worst = max(worst, boundary_parity_check(curve).max_reflected)
    return CheckResult("parity", worst == 0.0, worst, 0.0, f"{len(traj.records)} records")


def strict_decrease(traj: Trajectory, name: str = "L") -> CheckResult:
    values = traj.column(name)
    inc = np.diff(values)
    worst = float(np.max(inc)) if inc.size else -math.inf
    return CheckResult(f"strict-{name}", bool(inc.size and worst < 0.0), worst, 0.0,
                       "largest change between records must be negative")


def evaluate_check(name: str, spec: ScenarioSpec, traj: Trajectory) -> CheckResult:
    final = traj.records[-1]
    abs_s, rel_s = spec.mono_abs_slack, spec.mono_rel_slack
    try:
        if name == "converged":
            ok = traj.stop_reason is StopReason.CONVERGED and final.kinf <= spec.solver.conv_tol
            return CheckResult(name, ok, final.kinf, spec.solver.conv_tol,
                               f"stop={traj.stop_reason.value} at t={final.t:.6g}")
        if name == "blowup":
            ok = traj.stop_reason is StopReason.CURVATURE_BLOWUP and math.isfinite(final.t)
            return CheckResult(name, ok, final.kinf, spec.solver.kappa_max,
                               f"stop={traj.stop_reason.value} at t={final.t:.6g}: {traj.stop_message}")
        if name == "length-identity":
            return _from_report(name, dg.check_length_identity(traj, skip=spec.identity_skip))
        if name == "winding":
            return _from_report(name, dg.check_winding_and_kbar(traj))
        if name == "kosc-evolution":
            return _from_report(name, dg.check_kosc_evolution(traj))
        if name == "time-integral":
            rep = dg.check_time_integral_bound(traj)
            return CheckResult(name, rep.verdict, rep.worst, 1.0, "integral / (L0^4 / 4 pi^2), strict")
        if name == "decay-envelope":
            return _from_report(name, dg.check_decay_envelope(traj))
        if name.startswith("monotone-"):
            field_name = name.split("-", 1)[1]
            return _from_report(name, dg.monotone_report(traj, field_name, abs_s, rel_s))
        if name == "strict-L":
            return strict_decrease(traj, "L")
        if name == "kosc-algebra":
            return _from_report(name, dg.check_kosc_algebra(traj))
        if name == "parity":
            return parity_over_run(traj)
        if name == "rate-kss":
            rate, r2 = dg.fit_exponential_rate(traj, "kss_l2sq")
            target = linear_rate(spec.gap)
            rel = abs(rate - target) / target
            return CheckResult(name, rel <= 0.2, rel, 0.2,
                               f"rate={rate:.6g} vs 2(pi/d)^4={target:.6g}, R^2={r2:.6f}")
        if name == "rate-E":
            rate, r2 = dg.fit_exponential_rate(traj, "E")
            return CheckResult(name, rate > 0 and r2 >= 0.99, -rate, 0.0,
                               f"decay rate={rate:.6g}, R^2={r2:.6f}")
    except CurveFlowError as exc:
        return CheckResult(name, False, math.nan, math.nan, f"{type(exc).__name__}: {exc}")
    raise ValueError(f"unknown check {name!r}")


@dataclass
class SummaryReport:
    scenario: str
    stop_reason: str
    stop_message: str
    final: dg.DiagnosticsRecord
    checks: list
    rates: dict
    wall_seconds: float
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def render(self, include_timing: bool = True) -> str:
        lines = [f"[summary {self.scenario}]", f"stop_reason = {self.stop_reason}",
                 f"stop_message = {self.stop_message}"]
        for key, value in self.info.items():
            lines.append(f"{key} = {value}")
        if include_timing:
            lines.append(f"wall_seconds = {self.wall_seconds:.3f}")
        lines.append("")
        lines.append("[final]")
        for key, value in self.final.as_dict().items():
            lines.append(f"{key} = {'undefined' if value is None else format(value, '.17g')}")
        lines.append("")
        lines.append("[rates]")
        for key, value in self.rates.items():
            lines.append(f"{key} = {value}")
        lines.append("")
        lines.append("[checks]")
        for c in self.checks:
            lines.append(f"{c.name} = {'pass' if c.passed else 'fail'}; worst={c.worst:.6g}; "
                         f"limit={c.limit:.6g}; {c.detail}")
        lines.append(f"all_pass = {str(self.passed).lower()}")
        return "\n".join(lines) + "\n"


def _rates(traj: Trajectory) -> dict:
    out = {}
    for name in ("kss_l2sq", "E", "Kosc"):
        try:
            rate, r2 = dg.fit_exponential_rate(traj, name)
            out[f"{name}_rate"] = f"{rate:.10g}"
            out[f"{name}_r2"] = f"{r2:.10f}"
        except CurveFlowError as exc:
            out[f"{name}_rate"] = f"unavailable ({type(exc).__name__})"
    return out


def run_scenario(spec: ScenarioSpec, outdir: Path | str | None = None):
    """Run ``spec``; if ``outdir`` is given, write the scenario's files there.

    Returns ``(trajectory, summary)``.
    """
    clock = time.perf_counter()
    initial = generate_initial(spec)
    traj = run(initial, spec.flow, spec.solver)
    wall = time.perf_counter() - clock
    checks = [evaluate_check(name, spec, traj) for name in spec.checks]
    if spec.expected_stop is not None:
        checks.append(CheckResult("expected-stop", traj.stop_reason.value == spec.expected_stop,
                                  0.0, 0.0, f"got {traj.stop_reason.value}, documented {spec.expected_stop}"))
    if spec.wall_budget is not None:
        checks.append(CheckResult("wall-budget", wall <= spec.wall_budget, wall, spec.wall_budget,
                                  "seconds"))
    info = {k: v for k, v in trajectory_summary(traj).items()
            if k in ("flow", "steps", "dt", "records", "t_final")}
    summary = SummaryReport(spec.name, traj.stop_reason.value, traj.stop_message, traj.records[-1],
                            checks, _rates(traj), wall, info)
    if outdir is not None:
        write_outputs(spec, traj, summary, Path(outdir))
    return traj, summary


def write_outputs(spec, traj, summary, outdir: Path):
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "scenario.txt").write_text(render_scenario(spec))
    write_trajectory_csv(traj, outdir / "trajectory.csv")
    (outdir / "summary.txt").write_text(summary.render())
    write_curve_csv(traj.final_curve, outdir / "final_curve.csv")
    if traj.snapshots:
        snapdir = outdir / "snapshots"
        snapdir.mkdir(exist_ok=True)
        for i, (t, curve) in enumerate(traj.snapshots):
            write_curve_csv(curve, snapdir / f"snapshot_{i:03d}_t{t:.6e}.csv")


def _run_one(args):
    spec, outdir = args
    _, summary = run_scenario(spec, outdir)
    return summary


def run_batch(specs, root: Path, workers: int = 1):
    """Independent scenarios, each writing into its own directory under ``root``."""
    items = [(spec, root / spec.name) for spec in specs]
    if workers <= 1:
        return [_run_one(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, items))


# Verification suites ----------------------------------------------------------------

@dataclass
class SuiteReport:
    name: str
    checks: list
    info: dict = field(default_factory=dict)
    wall_seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def render(self, include_timing: bool = True) -> str:
        lines = [f"[suite {self.name}]"]
        for key, value in self.info.items():
            lines.append(f"{key} = {value}")
        if include_timing:
            lines.append(f"wall_seconds = {self.wall_seconds:.3f}")
        lines.append("")
        lines.append("[checks]")
        for c in self.checks:
            lines.append(f"{c.name} = {'pass' if c.passed else 'fail'}; worst={c.worst:.6g}; "
                         f"limit={c.limit:.6g}; {c.detail}")
        lines.append(f"all_pass = {str(self.passed).lower()}")
        return "\n".join(lines) + "\n"


def poincare_suite(seed: int = 0, count: int = 1000, n: int = 1024, outdir=None, workers: int = 1):
    cases = poincare_sweep(count, seed, n, workers)
    checks = []
    for variant in ("mean-zero", "dirichlet"):
        for kind in ("poincare", "sup"):
            sel = [c for c in cases if c.variant == variant and c.kind == kind]
            worst = max(c.ratio / c.bound for c in sel)
            bad = sum(c.margin < 0 for c in sel)
            checks.append(CheckResult(f"{kind}-{variant}", bad == 0, worst, 1.0,
                                      f"{bad} violations in {len(sel)} samples"))
    sharp = poincare_sharp_cases(n)
    for label in ("mean-zero cos(pi s/L)", "dirichlet sin(pi s/L)"):
        dev = abs(sharp[label] - 1.0)
        checks.append(CheckResult(f"sharp {label}", dev <= 0.01, dev, 0.01,
                                  f"ratio / (L^2/pi^2) = {sharp[label]:.8f}"))
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
        write_poincare_csv(cases, outdir / "poincare.csv")
    return checks, {"samples_per_variant": count, "N": n}


def exterior_suite(seed: int = 0, count: int = 100, amplitude: float = 1.0, outdir=None,
                   workers: int = 1):
    cases = exterior_sweep(count, (0.5, 1.0), seed, amplitude, workers=workers)
    checks = []
    for omega, expected in ((0.5, 0.0504), (1.0, 0.0136)):
        sel = [c for c in cases if c.omega == omega]
        worst_gap = min(c.gap for c in sel)
        checks.append(CheckResult(f"gap omega={omega:g}", worst_gap >= -1e-6, -worst_gap, 1e-6,
                                  f"min gap {worst_gap:.6g} over {len(sel)} curves"))
        rhs = corollary_rhs(omega)
        checks.append(CheckResult(f"rhs omega={omega:g}", abs(rhs - expected) <= 5e-4,
                                  abs(rhs - expected), 5e-4, f"rhs = {rhs:.6f}"))
        drift = max(abs(c.omega_hat - c.omega) for c in sel)
        checks.append(CheckResult(f"winding omega={omega:g}", drift <= 1e-4, drift, 1e-4,
                                  "|omega_hat - omega|"))
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
        write_exterior_csv(cases, outdir / "exterior.csv")
    return checks, {"curves_per_omega": count, "perturbation_amplitude": amplitude}


def linearization_suite(n: int = 1024, outdir=None):
    eta = cosine_perturbation(1.0, n)
    checks = []
    rows = []
    for flow in (FlowKind.CURVE_DIFFUSION, FlowKind.ELASTIC):
        res = linearization_residual(eta, (1e-2, 5e-3, 2.5e-3), flow)
        checks.append(CheckResult(f"slope {flow.value}", abs(res.slope - 3.0) <= 0.3,
                                  abs(res.slope - 3.0), 0.3, f"slope = {res.slope:.4f}"))
        rows.extend((flow.value, e, r) for e, r in zip(res.epsilons, res.residuals))
        zero = linearization_residual(eta, (0.0,), flow).residuals[0]
        checks.append(CheckResult(f"flat {flow.value}", zero == 0.0, zero, 0.0, "eps = 0"))
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "linearization.csv", "w") as fh:
            fh.write("flow,epsilon,residual\n")
            for flow, e, r in rows:
                fh.write(f"{flow},{e:.17g},{r:.17g}\n")
    return checks, {"N": n}


def circle_arc(n: int, radius: float = 1.0) -> Curve:
    """Upper semicircle traversed from left to right (k = 1/r under this orientation)."""
    t = np.linspace(math.pi, 0.0, n + 1)
    nodes = radius * np.column_stack([np.cos(t), np.sin(t)])
    nodes[0] = (-radius, 0.0)
    nodes[-1] = (radius, 0.0)
    return Curve(nodes, BoundaryGeometry(2.0 * radius), strict=False)


def circle_curvature_error(n: int) -> float:
    """Max curvature error on interior nodes, where stencils see only the arc itself."""
    frame = compute_frame(circle_arc(n))
    return float(np.max(np.abs(frame.k[1:-1] - 1.0)))


def convergence_suite(ns=(64, 128, 256), outdir=None):
    errors = [circle_curvature_error(n) for n in ns]
    checks = []
    for (n0, e0), (n1, e1) in zip(zip(ns, errors), zip(ns[1:], errors[1:])):
        ratio = e0 / e1
        checks.append(CheckResult(f"ratio N={n0}->{n1}", abs(ratio - 4.0) <= 0.8,
                                  abs(ratio - 4.0), 0.8, f"error ratio = {ratio:.4f}"))
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "convergence.csv", "w") as fh:
            fh.write("N,max_curvature_error\n")
            for n, e in zip(ns, errors):
                fh.write(f"{n},{e:.17g}\n")
    return checks, {"N": list(ns)}


def run_suite(name: str, seed: int = 0, outdir=None, workers: int = 1) -> SuiteReport:
    clock = time.perf_counter()
    outdir = None if outdir is None else Path(outdir)
    if name == "poincare-suite":
        checks, info = poincare_suite(seed, outdir=outdir, workers=workers)
    elif name == "exterior-corollary":
        checks, info = exterior_suite(seed, outdir=outdir, workers=workers)
    elif name == "linearization-order":
        checks, info = linearization_suite(outdir=outdir)
    elif name == "convergence-order":
        checks, info = convergence_suite(outdir=outdir)
    else:
        raise ValueError(f"unknown suite {name!r}")
    info = {"seed": seed, **info}
    report = SuiteReport(name, checks, info, time.perf_counter() - clock)
    if outdir is not None:
        (outdir / "report.txt").write_text(report.render())
    return report
