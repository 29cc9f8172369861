"""Monitored functionals and the identity, monotonicity and decay checks run on trajectories.

Every integral is the trapezoidal rule on node arclengths. Time derivatives
are centred differences over record times, so the first and last records never
enter a derivative check.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import HypothesisNotMet, InsufficientRecords, MissingSnapshots, NonPositiveField
from .geometry import Curve, FrameField, compute_frame, turning_and_winding
from .velocity import FlowKind, normal_velocity

TRAJECTORY_COLUMNS = ("t", "L", "E", "Kosc", "omega_hat", "kbar", "ks_l2sq", "kss_l2sq",
                      "area", "isoper", "gamma_sup", "kinf")

ISOPER_OMEGA_FLOOR = 1e-3
DEFAULT_ABS_SLACK = 1e-10
DEFAULT_REL_SLACK = 1e-3


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One time slice. ``isoper`` is None when the winding is numerically zero.

    ``fk_integral`` (the integral of F k) and ``parity`` (largest endpoint
    |k_s| or |k_sss|) are kept in memory only and are not written to CSV.
    """

    t: float
    L: float
    E: float
    Kosc: float
    omega_hat: float
    kbar: float
    ks_l2sq: float
    kss_l2sq: float
    area: float
    isoper: float | None
    gamma_sup: float
    kinf: float
    fk_integral: float = 0.0
    parity: float = 0.0

    @staticmethod
    def column_attr(column: str) -> str:
        return column

    def as_dict(self) -> dict:
        return asdict(self)


def measure(curve: Curve, flow: FlowKind = FlowKind.CURVE_DIFFUSION, t: float = 0.0,
            frame: FrameField | None = None) -> DiagnosticsRecord:
    """All monitored functionals of ``curve`` at time ``t``."""
    fr = compute_frame(curve) if frame is None else frame
    length = fr.length
    total, omega_hat = turning_and_winding(fr)
    kbar = total / length
    energy = fr.integrate(fr.k ** 2)
    kosc = length * fr.integrate((fr.k - kbar) ** 2)
    area = -0.5 * fr.integrate(np.einsum("ij,ij->i", fr.positions, fr.nu))
    if abs(omega_hat) < ISOPER_OMEGA_FLOOR or area == 0.0:
        isoper = None
    else:
        isoper = length ** 2 / (4.0 * omega_hat * math.pi * area)
    speed = normal_velocity(fr, flow)
    ends = [0, -1]
    parity = float(max(np.max(np.abs(fr.k_s[ends])), np.max(np.abs(fr.k_sss[ends]))))
    return DiagnosticsRecord(
        t=float(t), L=length, E=energy, Kosc=kosc, omega_hat=omega_hat, kbar=kbar,
        ks_l2sq=fr.integrate(fr.k_s ** 2), kss_l2sq=fr.integrate(fr.k_ss ** 2),
        area=area, isoper=isoper,
        gamma_sup=float(np.max(np.hypot(fr.positions[:, 0], fr.positions[:, 1]))),
        kinf=curve.gap * float(np.max(np.abs(fr.k))),
        fk_integral=fr.integrate(speed * fr.k), parity=parity,
    )


@dataclass(frozen=True)
class MonotonicityReport:
    """Outcome of one check. ``worst`` is the signed worst violation or residual;
    the verdict holds iff ``worst <= slack``."""

    quantity: str
    statement: str
    worst: float
    slack: float
    worst_time: float | None = None
    first_violation_time: float | None = None
    details: dict = field(default_factory=dict)

    @property
    def verdict(self) -> bool:
        return bool(self.worst <= self.slack)

    def line(self) -> str:
        status = "PASS" if self.verdict else "FAIL"
        at = "" if self.worst_time is None else f" at t={self.worst_time:.6g}"
        return f"{status} {self.quantity}: worst={self.worst:.6g} (limit {self.slack:.3g}){at}"


def _series(traj, name):
    return np.array([math.nan if getattr(r, name) is None else getattr(r, name)
                     for r in traj.records], dtype=float)


def _require(traj, count=3):
    if len(traj.records) < count:
        raise InsufficientRecords(f"need at least {count} records, got {len(traj.records)}")


def _centred(t, y):
    return (y[2:] - y[:-2]) / (t[2:] - t[:-2])


def monotone_report(traj, name, abs_slack=DEFAULT_ABS_SLACK, rel_slack=DEFAULT_REL_SLACK,
                    statement="non-increasing") -> MonotonicityReport:
    """Largest increase of ``name`` between consecutive records.

    The allowed slack is ``abs_slack + rel_slack * |initial value|``.
    """
    _require(traj, 2)
    t = _series(traj, "t")
    y = _series(traj, name)
    inc = np.diff(y)
    slack = abs_slack + rel_slack * abs(y[0])
    idx = int(np.argmax(inc))
    bad = np.nonzero(inc > slack)[0]
    return MonotonicityReport(
        quantity=f"{name} non-increasing", statement=statement, worst=float(inc[idx]),
        slack=slack, worst_time=float(t[idx + 1]),
        first_violation_time=float(t[bad[0] + 1]) if bad.size else None,
    )


def check_length_identity(traj, flow: FlowKind | None = None, tol: float = 0.05, skip: int = 0,
                          resolution: float = 0.0) -> MonotonicityReport:
    """Compare the centred difference of L with ``-||k_s||^2`` (CD) or ``int F k`` (E).

    ``skip`` drops leading records (transients). Records where the predicted
    change of L over the difference stencil is below ``resolution * L``
    cannot be resolved in double precision and are excluded; the count is
    reported. For the elastic flow the sign of dL/dt is reported as well.
    """
    _require(traj)
    flow = FlowKind.parse(flow if flow is not None else traj.flow)
    t = _series(traj, "t")
    length = _series(traj, "L")
    if flow is FlowKind.CURVE_DIFFUSION:
        rhs = -_series(traj, "ks_l2sq")[1:-1]
        statement = "L'(t) = -int k_s^2 ds"
    else:
        rhs = _series(traj, "fk_integral")[1:-1]
        statement = "L'(t) = int F k ds"
    lhs = _centred(t, length)
    span = t[2:] - t[:-2]
    idx = np.arange(1, len(t) - 1)
    keep = (idx >= max(1, skip)) & (np.abs(rhs) * span > resolution * length[1:-1])
    both_zero = (rhs == 0) & (lhs == 0)
    keep &= ~both_zero
    details = {"compared": int(keep.sum()), "unresolved": int((~keep & (idx >= skip) & ~both_zero).sum()),
               "max_dLdt": float(np.max(lhs)) if lhs.size else 0.0}
    if not keep.any():
        return MonotonicityReport("length identity", statement, 0.0, tol, details=details)
    rel = np.abs(lhs[keep] - rhs[keep]) / np.abs(rhs[keep])
    j = int(np.argmax(rel))
    bad = np.nonzero(rel > tol)[0]
    return MonotonicityReport(
        "length identity", statement, float(rel[j]), tol, worst_time=float(t[idx[keep][j]]),
        first_violation_time=float(t[idx[keep][bad[0]]]) if bad.size else None, details=details,
    )


def check_winding_and_kbar(traj, tol: float = 1e-6, kbar_tol: float = 1e-8,
                           rel_tol: float = 0.10) -> MonotonicityReport:
    """Winding drift, plus the average-curvature law for curve diffusion.

    With zero winding the average curvature must stay at zero (absolute
    ``kbar_tol``). Otherwise the centred difference of kbar is compared with
    ``(2 omega pi / L^2) ||k_s||^2`` to relative ``rel_tol``. The reported
    ``worst`` is the winding drift scaled by ``tol`` or the kbar residual
    scaled by its own tolerance, whichever is larger, so the verdict is
    ``worst <= 1``.
    """
    _require(traj)
    t = _series(traj, "t")
    omega = _series(traj, "omega_hat")
    drift = np.abs(omega - omega[0])
    j = int(np.argmax(drift))
    details = {"winding_drift": float(drift[j]), "winding_drift_time": float(t[j]),
               "omega0": float(omega[0])}
    scores = [(float(drift[j]) / tol, float(t[j]))]
    if traj.flow is FlowKind.CURVE_DIFFUSION:
        kbar = _series(traj, "kbar")
        if abs(omega[0]) < 0.25:
            m = int(np.argmax(np.abs(kbar)))
            details["kbar_max_abs"] = float(abs(kbar[m]))
            scores.append((float(abs(kbar[m])) / kbar_tol, float(t[m])))
        else:
            length = _series(traj, "L")
            rhs = (2.0 * math.pi * omega / length ** 2 * _series(traj, "ks_l2sq"))[1:-1]
            lhs = _centred(t, kbar)
            scale = np.maximum(np.abs(rhs), 1e-300)
            rel = np.abs(lhs - rhs) / scale
            m = int(np.argmax(rel))
            details["kbar_rel_residual"] = float(rel[m])
            scores.append((float(rel[m]) / rel_tol, float(t[m + 1])))
    worst, when = max(scores)
    return MonotonicityReport("winding and average curvature",
                              "int k ds = 2 omega pi; kbar' = (2 omega pi / L^2) ||k_s||^2",
                              worst, 1.0, worst_time=when, details=details)


def kosc_rhs(frame: FrameField) -> tuple:
    """Right side of the oscillation evolution law and its dominant term ``2 L ||k_ss||^2``."""
    length = frame.length
    total = frame.integrate(frame.k)
    kbar = total / length
    kosc = length * frame.integrate((frame.k - kbar) ** 2)
    ks2 = frame.integrate(frame.k_s ** 2)
    kss2 = frame.integrate(frame.k_ss ** 2)
    dev = frame.k - kbar
    rhs = (-kosc * ks2 / length - 2.0 * length * kss2
           + 3.0 * length * frame.integrate(dev ** 2 * frame.k_s ** 2)
           + 6.0 * kbar * length * frame.integrate(dev * frame.k_s ** 2)
           + 2.0 * kbar ** 2 * length * ks2)
    return rhs, 2.0 * length * kss2


def check_kosc_evolution(traj, tol: float = 0.10, skip: int = 0) -> MonotonicityReport:
    """Centred dK_osc/dt against the closed-form right side, relative to ``2 L ||k_ss||^2``.

    Needs one stored curve per record (``record_snapshots=True``). Also reports
    whether K_osc increased anywhere.
    """
    _require(traj)
    curves = getattr(traj, "record_curves", None)
    if not curves or len(curves) != len(traj.records):
        raise MissingSnapshots("oscillation identity needs a stored curve at every record")
    t = _series(traj, "t")
    kosc = _series(traj, "Kosc")
    lhs = _centred(t, kosc)
    worst, when, first = 0.0, None, None
    for i in range(max(1, skip), len(t) - 1):
        rhs, dominant = kosc_rhs(compute_frame(curves[i]))
        diff = abs(lhs[i - 1] - rhs)
        if dominant == 0.0:
            rel = 0.0 if diff == 0.0 else math.inf
        else:
            rel = diff / dominant
        if rel > worst:
            worst, when = rel, float(t[i])
        if rel > tol and first is None:
            first = float(t[i])
    details = {"max_increase": float(np.max(np.diff(kosc)))}
    return MonotonicityReport(
        "oscillation evolution identity",
        "K_osc' + K_osc ||k_s||^2 / L + 2L ||k_ss||^2 = 3L int (k-kbar)^2 k_s^2 "
        "+ 6 kbar L int (k-kbar) k_s^2 + 2 kbar^2 L ||k_s||^2",
        worst, tol, worst_time=when, first_violation_time=first, details=details,
    )


def check_time_integral_bound(traj) -> MonotonicityReport:
    """Trapezoidal time integral of K_osc against ``L(0)^4 / 4 pi^2``.

    ``worst`` is the ratio integral / bound; the verdict requires it strictly
    below one.
    """
    _require(traj, 2)
    t = _series(traj, "t")
    kosc = _series(traj, "Kosc")
    integral = float(np.trapezoid(kosc, t))
    bound = _series(traj, "L")[0] ** 4 / (4.0 * math.pi ** 2)
    ratio = integral / bound
    # strict inequality: nudge the limit below one
    return MonotonicityReport("time integral of K_osc", "||K_osc||_1 < L(0)^4 / 4 pi^2",
                              ratio, np.nextafter(1.0, 0.0), worst_time=float(t[-1]),
                              details={"integral": integral, "bound": bound})


ENVELOPE_THRESHOLD = 4.0 * math.pi / 7.0


def check_decay_envelope(traj, slack: float = 0.10) -> MonotonicityReport:
    """Elastic flow: ``||k_s||^2(t) <= 3 L0^2 K1 / (K1 t + 3 L0^2)`` with K1 = ||k_s||^2(0).

    ``worst`` is the largest ratio of observed value to envelope minus one.
    """
    _require(traj, 2)
    first = traj.records[0]
    product = first.L * first.E
    if product > ENVELOPE_THRESHOLD:
        raise HypothesisNotMet(
            f"initial L*int k^2 = {product:.6g} exceeds 4 pi/7 = {ENVELOPE_THRESHOLD:.6g}")
    t = _series(traj, "t")
    ks2 = _series(traj, "ks_l2sq")
    l0, k1 = first.L, first.ks_l2sq
    envelope = 3.0 * l0 ** 2 * k1 / (k1 * t + 3.0 * l0 ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        excess = np.where(envelope > 0, ks2 / envelope - 1.0, np.where(ks2 > 0, math.inf, -1.0))
    j = int(np.argmax(excess))
    bad = np.nonzero(excess > slack)[0]
    return MonotonicityReport(
        "decay envelope of ||k_s||^2", "||k_s||^2 <= 3 L0^2 K1 / (K1 t + 3 L0^2)",
        float(excess[j]), slack, worst_time=float(t[j]),
        first_violation_time=float(t[bad[0]]) if bad.size else None,
        details={"initial_product": product, "K1": k1},
    )


def fit_exponential_rate(traj, name: str, fraction: float = 0.5, stop_at: float | None = None):
    """Least-squares decay rate of ``name`` over the final ``fraction`` of records.

    Returns ``(rate, r_squared)`` with ``rate = -d log(field)/dt``, so a
    decaying field has a positive rate. ``stop_at`` trims records after that
    time (for example the convergence time).
    """
    t = _series(traj, "t")
    y = _series(traj, name)
    if stop_at is not None:
        mask = t <= stop_at
        t, y = t[mask], y[mask]
    start = int(math.floor(len(t) * (1.0 - fraction)))
    t, y = t[start:], y[start:]
    if len(t) < 3:
        raise InsufficientRecords("fit window holds fewer than 3 records")
    if not np.all(y > 0):
        raise NonPositiveField(f"{name} is not positive over the fit window")
    logy = np.log(y)
    slope, intercept = np.polyfit(t, logy, 1)
    resid = logy - (slope * t + intercept)
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(-slope), r2


def check_kosc_algebra(traj, tol: float = 1e-10) -> MonotonicityReport:
    """Per record, K_osc = L E - (2 pi omega_hat)^2 relative to L E."""
    _require(traj, 1)
    worst, when = 0.0, None
    for r in traj.records:
        alt = r.L * r.E - (2.0 * math.pi * r.omega_hat) ** 2
        scale = max(r.L * r.E, 1e-300)
        rel = abs(r.Kosc - alt) / scale if r.L * r.E > 0 else abs(r.Kosc - alt)
        if rel > worst:
            worst, when = rel, r.t
    return MonotonicityReport("oscillation algebra", "K_osc = L int k^2 - (int k)^2", worst, tol,
                              worst_time=when)


def check_parity(traj) -> MonotonicityReport:
    """Largest endpoint |k_s| or |k_sss| over all records; must be exactly zero."""
    _require(traj, 1)
    values = _series(traj, "parity")
    j = int(np.argmax(values))
    return MonotonicityReport("endpoint odd derivatives", "k_s = k_sss = 0 at both ends",
                              float(values[j]), 0.0, worst_time=float(traj.records[j].t))


def render_report(title: str, reports, extra: dict | None = None) -> str:
    """Key-value text block: one section per check."""
    lines = [f"[{title}]"]
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value}")
    for rep in reports:
        lines.append("")
        lines.append(f"[check {rep.quantity}]")
        lines.append(f"statement = {rep.statement}")
        lines.append(f"verdict = {'pass' if rep.verdict else 'fail'}")
        lines.append(f"worst = {rep.worst:.17g}")
        lines.append(f"limit = {rep.slack:.17g}")
        if rep.worst_time is not None:
            lines.append(f"worst_time = {rep.worst_time:.17g}")
        if rep.first_violation_time is not None:
            lines.append(f"first_violation_time = {rep.first_violation_time:.17g}")
        for key, value in rep.details.items():
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
