"""Time stepping for the two flows and the run loop that produces trajectories.

Both steppers move every node, endpoints included, by the normal velocity and
then snap the endpoint abscissae back onto the lines. The semi-implicit
stepper solves

    (I + dt D4) delta = -dt F nu

per coordinate, where D4 is the discrete fourth arclength derivative with the
mirror closure (even for y, odd for x) built from the current spacings. This
is the explicit step preconditioned by a backward-Euler treatment of the
leading-order term, so it fixes equilibria exactly, matches the explicit step
to O(dt^2) and damps every linear mode.
"""

from __future__ import annotations

import csv
import enum
import math
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from .diagnostics import TRAJECTORY_COLUMNS, DiagnosticsRecord, measure
from .errors import DegenerateCurve, MalformedTrajectory, NumericalFailure, SingularSolve
from .geometry import Curve, FrameField, compute_frame, resample_uniform, segment_lengths
from .velocity import FlowKind, normal_velocity


class StepMode(str, enum.Enum):
    EXPLICIT = "explicit"
    SEMI_IMPLICIT = "semi-implicit"

    @classmethod
    def parse(cls, value) -> "StepMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        if key in ("semi-implicit", "semiimplicit", "implicit", "imex"):
            return cls.SEMI_IMPLICIT
        if key == "explicit":
            return cls.EXPLICIT
        raise ValueError(f"unknown stepping mode {value!r}")


class StopReason(str, enum.Enum):
    CONVERGED = "Converged"
    CURVATURE_BLOWUP = "CurvatureBlowup"
    NODE_COLLAPSE = "NodeCollapse"
    MAX_TIME = "MaxTime"
    NUMERICAL_FAILURE = "NumericalFailure"


DEFAULT_C_DT = {StepMode.EXPLICIT: 1.0 / 16.0, StepMode.SEMI_IMPLICIT: 0.5}


@dataclass(frozen=True)
class SolverConfig:
    """Discretisation, stopping and recording settings for :func:`run`.

    ``c_dt`` sets the step: ``c_dt * h_min**4`` in explicit mode and
    ``c_dt * h**2 * d**2`` in semi-implicit mode with ``h = L0 / N``. ``None``
    selects the mode default. Thresholds on curvature are the dimensionless
    ``d * max|k|``. ``max_turning`` (radians) is the largest turning angle
    between consecutive chords the grid is trusted to resolve; exceeding it is
    reported as a curvature blowup because at fixed N the discrete curvature
    cannot exceed roughly ``pi / h``.
    """

    n: int = 256
    mode: StepMode = StepMode.SEMI_IMPLICIT
    c_dt: float | None = None
    resample_every: int = 1
    t_max: float = 1.0
    conv_tol: float = 1e-6
    kappa_max: float = 1e4
    min_spacing_frac: float = 1e-4
    max_turning: float = 0.5
    record_interval: float = 1e-3
    snapshot_times: tuple = ()
    record_snapshots: bool = False
    max_steps: int = 10_000_000

    def __post_init__(self):
        object.__setattr__(self, "mode", StepMode.parse(self.mode))
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))
        errors = []
        if self.n < 8:
            errors.append(f"N must be at least 8, got {self.n}")
        for name in ("resample_every", "t_max", "conv_tol", "kappa_max", "min_spacing_frac",
                     "max_turning", "record_interval", "max_steps"):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.c_dt is not None and not self.c_dt > 0:
            errors.append(f"c_dt must be positive, got {self.c_dt!r}")
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def cfl(self) -> float:
        return DEFAULT_C_DT[self.mode] if self.c_dt is None else self.c_dt

    def time_step(self, curve: Curve) -> float:
        if self.mode is StepMode.EXPLICIT:
            return self.cfl * float(np.min(segment_lengths(curve.nodes))) ** 4
        h = curve.length / self.n
        return self.cfl * h * h * curve.gap * curve.gap


@dataclass(frozen=True, eq=False)
class StepResult:
    curve: Curve
    dt: float


@dataclass(eq=False)
class Trajectory:
    """Records in time order, optional snapshots and the reason the run ended."""

    records: list
    flow: FlowKind
    gap: float
    stop_reason: StopReason | None = None
    stop_message: str = ""
    snapshots: list = field(default_factory=list)
    record_curves: list = field(default_factory=list)
    final_curve: Curve | None = None
    initial_curve: Curve | None = None
    config: SolverConfig | None = None
    dt: float | None = None
    steps: int = 0
    wall_seconds: float = 0.0

    def column(self, name) -> np.ndarray:
        return np.array([_nan_if_none(getattr(r, name)) for r in self.records], dtype=float)

    @property
    def times(self) -> np.ndarray:
        return self.column("t")

    def __len__(self):
        return len(self.records)


def _nan_if_none(v):
    return math.nan if v is None else v


# Banded fourth-derivative operator -------------------------------------------------

def _second_difference_bands(h, parity):
    hh = np.concatenate([h[:1], h, h[-1:]])
    hl, hr = hh[:-1], hh[1:]
    lower = 2.0 / (hl * (hl + hr))
    diag = -2.0 / (hl * hr)
    upper = 2.0 / (hr * (hl + hr))
    # mirror ghosts fold back onto the first interior neighbour
    upper = upper.copy()
    lower = lower.copy()
    upper[0] += parity * lower[0]
    lower[-1] += parity * upper[-1]
    lower[0] = 0.0
    upper[-1] = 0.0
    return lower, diag, upper


def fourth_difference_banded(h, parity):
    """Matrix ``D2 @ D2`` in LAPACK (2, 2) banded storage, ``ab[2 + i - j, j] = D4[i, j]``."""
    lo, di, up = _second_difference_bands(np.asarray(h, dtype=float), parity)
    n = di.size
    ab = np.zeros((5, n))
    # row i of D2 has entries lo[i] at i-1, di[i] at i, up[i] at i+1
    ab[2] = di * di
    ab[2, 1:] += lo[1:] * up[:-1]
    ab[2, :-1] += up[:-1] * lo[1:]
    sub1 = lo[1:] * di[:-1] + di[1:] * lo[1:]           # D4[i, i-1], i >= 1
    sup1 = di[:-1] * up[:-1] + up[:-1] * di[1:]         # D4[i, i+1], i <= n-2
    sub2 = lo[2:] * lo[1:-1]                            # D4[i, i-2], i >= 2
    sup2 = up[:-2] * up[1:-1]                           # D4[i, i+2], i <= n-3
    ab[3, :-1] = sub1
    ab[1, 1:] = sup1
    ab[4, :-2] = sub2
    ab[0, 2:] = sup2
    return ab


# Steppers ------------------------------------------------------------------------

def _finish_step(curve: Curve, new_nodes, dt, resample_n):
    if not np.all(np.isfinite(new_nodes)):
        raise NumericalFailure("non-finite node coordinates after step")
    new_nodes[0, 0] = curve.boundary.left
    new_nodes[-1, 0] = curve.boundary.right
    try:
        out = Curve(new_nodes, curve.boundary)
        if resample_n is not None:
            out = resample_uniform(out, resample_n)
    except DegenerateCurve as exc:
        raise NumericalFailure(f"step produced a degenerate curve: {exc}") from exc
    return StepResult(out, dt)


def step_explicit(curve: Curve, flow: FlowKind, dt: float, resample_n=None,
                  frame: FrameField | None = None) -> StepResult:
    """Forward Euler: ``gamma <- gamma - dt F nu``."""
    frame = compute_frame(curve) if frame is None else frame
    speed = normal_velocity(frame, flow)
    new = curve.nodes - dt * speed[:, None] * frame.nu
    return _finish_step(curve, new, dt, resample_n)


def step_semi_implicit(curve: Curve, flow: FlowKind, dt: float, resample_n=None,
                       frame: FrameField | None = None) -> StepResult:
    """Backward-Euler damping of the fourth-order part, everything else explicit."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    frame = compute_frame(curve) if frame is None else frame
    speed = normal_velocity(frame, flow)
    rhs = -dt * speed[:, None] * frame.nu
    delta = np.empty_like(rhs)
    for axis, parity in ((0, -1.0), (1, 1.0)):
        ab = dt * fourth_difference_banded(frame.spacing, parity)
        ab[2] += 1.0
        try:
            delta[:, axis] = solve_banded((2, 2), ab, rhs[:, axis], check_finite=True)
        except (LinAlgError, ValueError) as exc:
            raise SingularSolve(f"banded solve failed: {exc}") from exc
    return _finish_step(curve, curve.nodes + delta, dt, resample_n)


def step(curve, flow, dt, mode, resample_n=None, frame=None) -> StepResult:
    if StepMode.parse(mode) is StepMode.EXPLICIT:
        return step_explicit(curve, flow, dt, resample_n, frame)
    return step_semi_implicit(curve, flow, dt, resample_n, frame)


# Run loop -------------------------------------------------------------------------

def _check_state(curve, frame, config, h0):
    """Return a stop reason for the current state, or None to continue."""
    kinf = curve.gap * float(np.max(np.abs(frame.k)))
    if not math.isfinite(kinf):
        return StopReason.NUMERICAL_FAILURE, "non-finite curvature"
    if kinf >= config.kappa_max:
        return StopReason.CURVATURE_BLOWUP, f"d*max|k| = {kinf:.6g} reached the blowup threshold"
    turn = float(np.max(np.abs(frame.turning)))
    if turn >= config.max_turning:
        return (StopReason.CURVATURE_BLOWUP,
                f"turning angle {turn:.4g} rad exceeds grid resolution (d*max|k| = {kinf:.6g})")
    if float(np.min(frame.spacing)) < config.min_spacing_frac * h0:
        return StopReason.NODE_COLLAPSE, "node spacing fell below the minimum fraction"
    if kinf <= config.conv_tol:
        return StopReason.CONVERGED, f"d*max|k| = {kinf:.3g}"
    return None


def run(initial: Curve, flow: FlowKind, config: SolverConfig) -> Trajectory:
    """Advance ``initial`` until a stop condition fires.

    The initial curve is resampled to ``config.n`` equal chords first. A record
    is taken at t = 0, then every ``record_interval`` (rounded to a whole number
    of steps) and at the final state.
    """
    flow = FlowKind.parse(flow)
    clock = time.perf_counter()
    curve = resample_uniform(initial, config.n)
    dt = config.time_step(curve)
    h0 = curve.length / config.n
    record_stride = max(1, int(round(config.record_interval / dt)))
    snap_steps = sorted({max(0, int(round(t / dt))) for t in config.snapshot_times})
    traj = Trajectory(records=[], flow=flow, gap=curve.gap, initial_curve=curve,
                      config=config, dt=dt)

    def record(c, fr, t):
        traj.records.append(measure(c, flow, t=t, frame=fr))
        if config.record_snapshots:
            traj.record_curves.append(c)

    frame = compute_frame(curve)
    record(curve, frame, 0.0)
    if snap_steps and snap_steps[0] == 0:
        traj.snapshots.append((0.0, curve))
    snap_idx = 1 if snap_steps and snap_steps[0] == 0 else 0
    reason = _check_state(curve, frame, config, h0)
    message = reason[1] if reason else ""
    reason = reason[0] if reason else None
    steps = 0
    max_steps = min(config.max_steps, int(math.ceil(config.t_max / dt - 1e-9)))
    recorded_last = True
    while reason is None:
        if steps >= max_steps:
            reason, message = StopReason.MAX_TIME, f"t_max = {config.t_max:g} reached"
            break
        resample_n = config.n if (steps + 1) % config.resample_every == 0 else None
        try:
            result = step(curve, flow, dt, config.mode, resample_n, frame)
            curve = result.curve
            frame = compute_frame(curve)
        except (NumericalFailure, DegenerateCurve) as exc:
            reason, message = StopReason.NUMERICAL_FAILURE, str(exc)
            break
        steps += 1
        t = steps * dt
        recorded_last = False
        if steps % record_stride == 0:
            record(curve, frame, t)
            recorded_last = True
        while snap_idx < len(snap_steps) and snap_steps[snap_idx] <= steps:
            traj.snapshots.append((t, curve))
            snap_idx += 1
        state = _check_state(curve, frame, config, h0)
        if state is not None:
            reason, message = state
    if not recorded_last and reason is not StopReason.NUMERICAL_FAILURE:
        record(curve, frame, steps * dt)
    traj.stop_reason = reason
    traj.stop_message = message
    traj.final_curve = curve
    traj.steps = steps
    traj.wall_seconds = time.perf_counter() - clock
    return traj


# Persistence ---------------------------------------------------------------------

def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return format(float(v), ".17g")


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_COLUMNS)
        for rec in traj.records:
            writer.writerow([_fmt(getattr(rec, DiagnosticsRecord.column_attr(c))) for c in TRAJECTORY_COLUMNS])


def read_trajectory_csv(path) -> dict:
    """Load a trajectory CSV into a dict of column arrays."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = list(reader)
    except OSError as exc:
        raise MalformedTrajectory(f"cannot read {path}: {exc}") from exc
    if header is None:
        raise MalformedTrajectory(f"{path} is empty")
    header = [h.strip() for h in header]
    missing = [c for c in TRAJECTORY_COLUMNS if c not in header]
    if missing:
        raise MalformedTrajectory(f"{path} is missing column(s): {', '.join(missing)}")
    if not rows:
        raise MalformedTrajectory(f"{path} has no records")
    cols = {c: [] for c in TRAJECTORY_COLUMNS}
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise MalformedTrajectory(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        for c in TRAJECTORY_COLUMNS:
            raw = row[header.index(c)]
            try:
                cols[c].append(float(raw))
            except ValueError:
                raise MalformedTrajectory(f"line {lineno}: column {c} has non-numeric value {raw!r}") from None
    out = {c: np.array(v) for c, v in cols.items()}
    if np.any(np.diff(out["t"]) <= 0):
        raise MalformedTrajectory(f"{path}: times are not strictly increasing")
    return out


def trajectory_summary(traj: Trajectory) -> dict:
    final = traj.records[-1]
    out = {
        "stop_reason": traj.stop_reason.value if traj.stop_reason else "none",
        "stop_message": traj.stop_message,
        "flow": traj.flow.value,
        "steps": traj.steps,
        "dt": traj.dt,
        "records": len(traj.records),
        "t_final": final.t,
    }
    for f in fields(DiagnosticsRecord):
        out[f"final_{f.name}"] = getattr(final, f.name)
    return out


def with_config(config: SolverConfig, **changes) -> SolverConfig:
    return replace(config, **changes)
