"""Standalone inequalities and structural facts checked on synthesised inputs.

Covers the two Poincare-Wirtinger inequalities (mean-zero and Dirichlet) and
their sup-norm corollary, generation of exterior curves with prescribed
winding and the lower bound they satisfy, the order of the linearisation of
the normal velocity about a straight segment, and the endpoint parity audit.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .diagnostics import measure
from .errors import ClosureFailed, HypothesisNotMet, InvalidWinding, ZeroFunction
from .geometry import BoundaryGeometry, Curve, compute_frame, second_derivative
from .velocity import FlowKind, normal_velocity

MIN_SAMPLES = 16


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Values ``f_0 .. f_N`` on a uniform grid over ``[0, length]``."""

    values: np.ndarray
    length: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size - 1 < MIN_SAMPLES:
            raise ValueError(f"need at least {MIN_SAMPLES + 1} samples, got {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("sampled values must be finite")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length!r}")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, func, length=1.0, n=1024) -> "SampledFunction":
        return cls(func(np.linspace(0.0, length, n + 1)), length)

    @property
    def n(self) -> int:
        return self.values.size - 1

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n + 1)

    def derivative(self) -> np.ndarray:
        return np.gradient(self.values, self.spacing, edge_order=2)

    def integral(self, values=None) -> float:
        return float(np.trapezoid(self.values if values is None else values, dx=self.spacing))


VARIANTS = ("mean-zero", "dirichlet")


def _check_variant(f: SampledFunction, variant: str):
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    peak = float(np.max(np.abs(f.values)))
    if peak == 0.0:
        raise ZeroFunction("function is identically zero")
    if variant == "mean-zero":
        mean = f.integral()
        if abs(mean) > 1e-10 * f.length * peak:
            raise HypothesisNotMet(f"integral {mean:.3g} is not zero")
    elif f.values[0] != 0.0 or f.values[-1] != 0.0:
        raise HypothesisNotMet("Dirichlet variant needs f(0) = f(L) = 0")
    return peak


def poincare_ratio(f: SampledFunction, variant: str) -> float:
    """``int f^2 / int f_s^2``; the inequality says this is at most ``L^2 / pi^2``."""
    _check_variant(f, variant)
    grad = f.derivative()
    denom = f.integral(grad ** 2)
    if denom == 0.0:
        raise ZeroFunction("derivative vanishes identically")
    return f.integral(f.values ** 2) / denom


def sup_bound_ratio(f: SampledFunction, variant: str) -> float:
    """``||f||_inf^2`` over ``c L / pi ||f'||_2^2`` with c = 1 (Dirichlet) or 2 (mean zero)."""
    peak = _check_variant(f, variant)
    grad = f.derivative()
    denom = f.integral(grad ** 2)
    if denom == 0.0:
        raise ZeroFunction("derivative vanishes identically")
    factor = 1.0 if variant == "dirichlet" else 2.0
    return peak ** 2 / (factor * f.length / math.pi * denom)


def poincare_tolerance(n: int) -> float:
    """Relative allowance ``5 h^2`` with the dimensionless spacing ``h = 1/N``."""
    return 5.0 / n ** 2


def random_trig_function(rng: np.random.Generator, variant: str, length: float = 1.0,
                         n: int = 1024, modes: int = 12) -> SampledFunction:
    """Truncated trigonometric series with coefficients decaying like ``m^-3``."""
    s = np.linspace(0.0, length, n + 1)
    m = np.arange(1, modes + 1)
    decay = m.astype(float) ** -3
    if variant == "dirichlet":
        coef = rng.standard_normal(modes) * decay
        vals = np.sin(np.outer(s, m) * math.pi / length) @ coef
        vals[0] = vals[-1] = 0.0
        return SampledFunction(vals, length)
    if variant == "mean-zero":
        a = rng.standard_normal(modes) * decay
        b = rng.standard_normal(modes) * decay
        phase = np.outer(s, m) * math.pi / length
        vals = np.cos(phase) @ a + np.sin(phase) @ b
        vals = vals - np.trapezoid(vals, s) / length
        return SampledFunction(vals, length)
    raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")


@dataclass(frozen=True)
class PoincareCase:
    case_id: int
    variant: str
    kind: str
    seed: int
    length: float
    ratio: float
    bound: float

    @property
    def margin(self) -> float:
        return self.bound - self.ratio


def _poincare_case(args):
    case_id, variant, entropy, n = args
    rng = np.random.default_rng(entropy)
    length = float(rng.uniform(0.5, 2.0))
    f = random_trig_function(rng, variant, length, n)
    tol = 1.0 + poincare_tolerance(n)
    seed = int(entropy[-1]) if isinstance(entropy, tuple) else int(entropy)
    return [
        PoincareCase(case_id, variant, "poincare", seed, length,
                     poincare_ratio(f, variant), length ** 2 / math.pi ** 2 * tol),
        PoincareCase(case_id, variant, "sup", seed, length, sup_bound_ratio(f, variant), tol),
    ]


def _child_entropy(seed: int, count: int):
    return [tuple(child.generate_state(4)) for child in np.random.SeedSequence(seed).spawn(count)]


def _parallel_map(func, items, workers):
    if workers is None or workers <= 1:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=max(1, len(items) // (4 * workers))))


def poincare_sweep(count: int = 1000, seed: int = 0, n: int = 1024, workers: int = 1):
    """Random admissible functions for both variants, per-sample seeds from ``seed``."""
    cases = []
    for v_index, variant in enumerate(VARIANTS):
        entropy = _child_entropy(seed * 2 + v_index, count)
        items = [(i, variant, e, n) for i, e in enumerate(entropy)]
        for pair in _parallel_map(_poincare_case, items, workers):
            cases.extend(pair)
    return cases


def poincare_sharp_cases(n: int = 1024, length: float = 1.0) -> dict:
    """Ratios of the extremal functions, normalised by ``L^2 / pi^2``."""
    bound = length ** 2 / math.pi ** 2
    cos1 = SampledFunction.from_callable(lambda s: np.cos(math.pi * s / length), length, n)
    sin1 = SampledFunction.from_callable(lambda s: np.sin(math.pi * s / length), length, n)
    sin1 = SampledFunction(np.concatenate([[0.0], sin1.values[1:-1], [0.0]]), length)
    cos2 = SampledFunction.from_callable(lambda s: np.cos(2 * math.pi * s / length), length, n)
    return {
        "mean-zero cos(pi s/L)": poincare_ratio(cos1, "mean-zero") / bound,
        "dirichlet sin(pi s/L)": poincare_ratio(sin1, "dirichlet") / bound,
        "mean-zero cos(2 pi s/L)": poincare_ratio(cos2, "mean-zero") / bound,
    }


def write_poincare_csv(cases, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case_id", "variant", "ratio", "bound", "margin"])
        for c in cases:
            label = c.variant if c.kind == "poincare" else f"{c.variant}-sup"
            writer.writerow([c.case_id, label, format(c.ratio, ".17g"), format(c.bound, ".17g"),
                             format(c.margin, ".17g")])


# Exterior curves --------------------------------------------------------------------

def smoothstep(u):
    """Quintic ``B(u) = 6u^5 - 15u^4 + 10u^3``: B(0)=0, B(1)=1, B' = B'' = 0 at both ends."""
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u))


@dataclass(frozen=True)
class ExteriorCurveSpec:
    """Exterior data with winding ``omega`` (a nonzero multiple of 1/2).

    The tangent angle turns by ``-2 omega pi`` along a smoothstep, plus a
    random perturbation of relative size ``amplitude`` that vanishes to third
    order at both ends. Half-integer windings start pointing out of the strip
    (angle pi) and use a front-loaded profile so the closure integral is
    positive.
    """

    omega: float
    gap: float = 1.0
    seed: int = 0
    amplitude: float = 0.0
    n: int = 512
    modes: int = 4
    max_attempts: int = 50
    skew: float = 2.0

    def __post_init__(self):
        twice = 2.0 * self.omega
        if not (math.isfinite(twice) and twice == round(twice) and round(twice) != 0):
            raise InvalidWinding(f"omega must be a nonzero multiple of 1/2, got {self.omega!r}")
        if not self.gap > 0:
            raise ValueError(f"gap must be positive, got {self.gap!r}")
        if self.n < 8:
            raise ValueError(f"need at least 8 segments, got {self.n}")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")


def _exterior_angle(spec: ExteriorCurveSpec, coef):
    half = round(2.0 * spec.omega) % 2 != 0
    theta0 = math.pi if half else 0.0

    def theta(u):
        g = 1.0 - (1.0 - u) ** spec.skew if half else u
        base = theta0 - 2.0 * math.pi * spec.omega * smoothstep(g)
        if coef is None:
            return base
        m = np.arange(1, coef.size + 1)
        bump = (u * (1.0 - u)) ** 3 * 64.0
        return base + bump * (np.sin(np.multiply.outer(u, m) * math.pi) @ coef)

    return theta


def integrate_angle(theta, gap: float, n: int, order: int = 8):
    """Nodes of the curve with unit-speed tangent angle ``theta(u)`` scaled to
    span the strip, at ``u = i / n``. Returns ``(nodes, length, closure)``
    where closure is ``int_0^1 cos theta du``."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, n + 1)
    half = 0.5 / n
    pts = (edges[:-1, None] + half) + half * xg[None, :]
    th = theta(pts)
    cx = (np.cos(th) @ wg) * half
    cy = (np.sin(th) @ wg) * half
    closure = math.fsum(cx)
    if not closure > 0.0:
        return None, math.nan, closure
    length = gap / closure
    x = -0.5 * gap + length * np.concatenate([[0.0], np.cumsum(cx)])
    y = length * np.concatenate([[0.0], np.cumsum(cy)])
    x[0], x[-1] = -0.5 * gap, 0.5 * gap
    return np.column_stack([x, y]), length, closure


def generate_exterior_curve(spec: ExteriorCurveSpec) -> Curve:
    """Exterior curve by tangent-angle integration; resamples the perturbation
    until the closure integral is positive."""
    rng = np.random.default_rng(spec.seed)
    attempts = spec.max_attempts if spec.amplitude > 0 else 1
    for _ in range(attempts):
        coef = None
        if spec.amplitude > 0:
            coef = spec.amplitude * rng.standard_normal(spec.modes) * np.arange(1, spec.modes + 1) ** -3.0
        nodes, _, closure = integrate_angle(_exterior_angle(spec, coef), spec.gap, spec.n)
        if nodes is not None:
            return Curve(nodes, BoundaryGeometry(spec.gap))
    raise ClosureFailed(f"no admissible exterior curve after {attempts} attempt(s) "
                        f"(last closure integral {closure:.4g})")


def corollary_rhs(omega: float) -> float:
    w = abs(omega)
    return (12 * math.pi ** 2 * w ** 2 + math.pi
            - 2 * w * math.pi * math.sqrt(6 * math.pi * (6 * math.pi * w ** 2 + 1))) / 3.0


def corollary_gap(curve: Curve):
    """``(lhs, rhs, gap)`` with lhs = K_osc + 8 pi^2 log(L/d) and the closed-form
    right side at the measured winding rounded to the nearest half."""
    rec = measure(curve)
    if abs(rec.omega_hat) < 0.25:
        raise HypothesisNotMet(f"winding {rec.omega_hat:.4g} is not that of an exterior curve")
    omega = round(2.0 * rec.omega_hat) / 2.0
    lhs = rec.Kosc + 8.0 * math.pi ** 2 * math.log(rec.L / curve.gap)
    rhs = corollary_rhs(omega)
    return lhs, rhs, lhs - rhs


@dataclass(frozen=True)
class ExteriorCase:
    case_id: int
    seed: int
    omega: float
    lhs: float
    rhs: float
    gap: float
    omega_hat: float


def _exterior_case(args):
    case_id, omega, seed, amplitude, n, gap = args
    curve = generate_exterior_curve(ExteriorCurveSpec(omega, gap, seed, amplitude, n))
    lhs, rhs, diff = corollary_gap(curve)
    return ExteriorCase(case_id, seed, omega, lhs, rhs, diff, measure(curve).omega_hat)


def exterior_sweep(count: int = 100, omegas=(0.5, 1.0), seed: int = 0, amplitude: float = 1.0,
                   n: int = 512, gap: float = 1.0, workers: int = 1):
    """Random exterior curves for each winding; per-case seeds derive from ``seed``."""
    items = []
    seeds = np.random.SeedSequence(seed).generate_state(count * len(omegas), dtype=np.uint32)
    for j, omega in enumerate(omegas):
        for i in range(count):
            case_id = j * count + i
            items.append((case_id, float(omega), int(seeds[case_id]), amplitude, n, gap))
    return _parallel_map(_exterior_case, items, workers)


def write_exterior_csv(cases, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case_id", "seed", "omega", "lhs", "rhs", "gap"])
        for c in cases:
            writer.writerow([c.case_id, c.seed, format(c.omega, "g"), format(c.lhs, ".17g"),
                             format(c.rhs, ".17g"), format(c.gap, ".17g")])


# Linearisation ----------------------------------------------------------------------

def _endpoint_derivatives(values, h, degree=8, fraction=0.1):
    """First and third derivatives at both ends from a degree-8 polynomial fit
    over the last tenth of the interval."""
    points = max(degree + 4, int(fraction * (values.size - 1)) + 1)
    out = []
    for side in (values[:points], values[::-1][:points]):
        x = np.arange(side.size) * h
        poly = np.polynomial.Polynomial.fit(x, side, degree)
        out.append((abs(poly.deriv(1)(0.0)), abs(poly.deriv(3)(0.0))))
    return out


@dataclass(frozen=True)
class LinearizationResult:
    slope: float
    epsilons: tuple
    residuals: tuple


def linearization_residual(perturbation: SampledFunction, epsilons=(1e-2, 5e-3, 2.5e-3),
                           flow: FlowKind = FlowKind.CURVE_DIFFUSION,
                           compliance_tol: float = 1e-8,
                           third_tol: float = 1e-6) -> LinearizationResult:
    """Order of the remainder after linearising F about the straight segment.

    ``perturbation`` holds eta on a uniform grid over ``[-d/2, d/2]`` (so its
    ``length`` is the gap d). For each epsilon the graph ``(x, eps * eta)`` is
    built and ``r = max|F + eps * eta_xxxx|`` is computed; with the normal
    ``nu = (tau_2, -tau_1)`` a left-to-right graph has ``nu ~ -e_2``, so the
    leading term of F is ``-eps * eta_xxxx``. The fourth derivative uses the
    same mirrored stencils as the frame. Returns the log-log slope of r
    against epsilon.

    Boundary compliance is checked on dimensionless endpoint derivatives:
    ``|eta_x| d / max|eta| <= compliance_tol`` and ``|eta_xxx| d^3 / max|eta|
    <= third_tol``. The looser third-derivative gate reflects how far a third
    derivative of sampled data can be resolved in double precision.
    """
    flow = FlowKind.parse(flow)
    eta = perturbation.values
    d = perturbation.length
    h = perturbation.spacing
    scale = max(float(np.max(np.abs(eta))), 1e-300)
    for d1, d3 in _endpoint_derivatives(eta, h):
        if d1 * d / scale > compliance_tol or d3 * d ** 3 / scale > third_tol:
            raise HypothesisNotMet("perturbation does not meet the boundary conditions "
                                   f"(|eta_x| = {d1:.3g}, |eta_xxx| = {d3:.3g} at an end)")
    spacing = np.full(perturbation.n, h)
    eta4 = second_derivative(second_derivative(eta, spacing), spacing)
    x = np.linspace(-0.5 * d, 0.5 * d, perturbation.n + 1)
    x[0], x[-1] = -0.5 * d, 0.5 * d
    geom = BoundaryGeometry(d)
    residuals = []
    for eps in epsilons:
        curve = Curve(np.column_stack([x, eps * eta]), geom)
        speed = normal_velocity(compute_frame(curve), flow)
        residuals.append(float(np.max(np.abs(speed + eps * eta4))))
    eps_arr = np.asarray(epsilons, dtype=float)
    res_arr = np.asarray(residuals)
    positive = (eps_arr > 0) & (res_arr > 0)
    if positive.sum() >= 2:
        slope = float(np.polyfit(np.log(eps_arr[positive]), np.log(res_arr[positive]), 1)[0])
    else:
        slope = math.nan
    return LinearizationResult(slope, tuple(float(e) for e in epsilons), tuple(residuals))


def cosine_perturbation(gap: float = 1.0, n: int = 1024, mode: int = 1) -> SampledFunction:
    """``cos(m pi (x + d/2) / d)`` on ``[-d/2, d/2]``; satisfies the boundary conditions."""
    x = np.linspace(-0.5 * gap, 0.5 * gap, n + 1)
    return SampledFunction(np.cos(mode * math.pi * (x + 0.5 * gap) / gap), gap)


# Parity audit -----------------------------------------------------------------------

@dataclass(frozen=True)
class ParityReport:
    """Endpoint odd derivatives of curvature.

    ``reflected`` are the values the flow uses (through the mirror
    extension); they vanish exactly. ``one_sided`` are second-order one-sided
    estimates from the curve's own nodes and ``tilt`` the angle of each end
    chord from the horizontal, which expose a non-compliant endpoint.
    """

    reflected_ks: tuple
    reflected_ksss: tuple
    one_sided_ks: tuple
    one_sided_ksss: tuple
    tilt: tuple

    @property
    def max_reflected(self) -> float:
        return float(max(map(abs, self.reflected_ks + self.reflected_ksss)))

    @property
    def max_one_sided(self) -> float:
        return float(max(map(abs, self.one_sided_ks + self.one_sided_ksss)))


def _one_sided(values, h0, h1):
    # derivative at node 0 from nodes 0, 1, 2 with spacings h0, h1
    a = h0 + h1
    return (-(2 * h0 + h1) / (h0 * a) * values[0] + a / (h0 * h1) * values[1]
            - h0 / (h1 * a) * values[2])


def boundary_parity_check(curve: Curve) -> ParityReport:
    fr = compute_frame(curve)
    h = fr.spacing
    left_ks = _one_sided(fr.k, h[0], h[1])
    right_ks = -_one_sided(fr.k[::-1], h[-1], h[-2])
    left_ksss = _one_sided(fr.k_ss, h[0], h[1])
    right_ksss = -_one_sided(fr.k_ss[::-1], h[-1], h[-2])
    chord_l = curve.nodes[1] - curve.nodes[0]
    chord_r = curve.nodes[-1] - curve.nodes[-2]
    tilt_l = math.atan2(chord_l[1], abs(chord_l[0]))
    tilt_r = math.atan2(chord_r[1], abs(chord_r[0]))
    return ParityReport(
        reflected_ks=(float(fr.k_s[0]), float(fr.k_s[-1])),
        reflected_ksss=(float(fr.k_sss[0]), float(fr.k_sss[-1])),
        one_sided_ks=(float(left_ks), float(right_ks)),
        one_sided_ksss=(float(left_ksss), float(right_ksss)),
        tilt=(tilt_l, tilt_r),
    )
