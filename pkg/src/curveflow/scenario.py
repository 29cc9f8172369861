"""Scenario files: a flat ``key = value`` format, its validation, and initial data.

Values are numbers (a trailing ``pi`` multiplies by pi, e.g. ``0.09pi``),
booleans, bare strings, or bracketed lists ``[a, b]``. ``#`` starts a
comment. Every key, its type and its unit are listed in :data:`KEYS`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .diagnostics import measure
from .engine import SolverConfig
from .errors import ClosureFailed, ParseError, TargetUnreachable, ValidationError
from .geometry import BoundaryGeometry, Curve, read_curve_csv, resample_uniform
from .inequalities import ExteriorCurveSpec, generate_exterior_curve, integrate_angle, smoothstep
from .velocity import FlowKind

GENERATORS = ("perturbed-segment", "exterior", "lemniscate-lobe", "file")

CHECKS = (
    "converged", "blowup", "length-identity", "winding", "kosc-evolution", "time-integral",
    "decay-envelope", "monotone-L", "strict-L", "monotone-E", "monotone-Kosc", "kosc-algebra",
    "parity", "rate-kss", "rate-E",
)

_NAME_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


@dataclass(frozen=True)
class KeySpec:
    kind: str
    unit: str
    help: str


# key -> (type, unit, meaning). Order fixes the rendering order.
KEYS = {
    "name": KeySpec("str", "-", "scenario name, used as the output directory"),
    "flow": KeySpec("str", "-", "cd (curve diffusion) or e (elastic)"),
    "gap": KeySpec("float", "length", "distance d between the supporting lines"),
    "generator": KeySpec("str", "-", "perturbed-segment | exterior | lemniscate-lobe | file"),
    "amplitude": KeySpec("float", "length", "perturbed-segment: largest mode amplitude; exterior: tangent-angle perturbation size (radians)"),
    "modes": KeySpec("intlist", "-", "perturbed-segment: cosine modes m in cos(m pi (x + d/2) / d)"),
    "seed": KeySpec("int", "-", "seed for mode weights or exterior perturbation"),
    "target_product": KeySpec("float", "-", "perturbed-segment: rescale amplitudes so L*int k^2 hits this value"),
    "amplitude_cap": KeySpec("float", "d", "perturbed-segment: largest admissible amplitude, in units of d"),
    "omega": KeySpec("float", "-", "exterior: winding number, a nonzero multiple of 1/2"),
    "scale": KeySpec("float", "-", "lemniscate-lobe: fraction of the length taken by the lobe, in (0, 1]"),
    "lobe_turns": KeySpec("float", "turns", "lemniscate-lobe: peak tangent rotation, in full turns"),
    "path": KeySpec("str", "-", "file: curve CSV with header index,x,y"),
    "N": KeySpec("int", "-", "number of segments"),
    "mode": KeySpec("str", "-", "explicit | semi-implicit"),
    "c_dt": KeySpec("float", "-", "time-step factor; omitted means the mode default"),
    "resample_every": KeySpec("int", "steps", "equal-chord resampling period"),
    "t_max": KeySpec("float", "length^4", "maximum simulated time"),
    "conv_tol": KeySpec("float", "-", "convergence threshold on d*max|k|"),
    "kappa_max": KeySpec("float", "-", "blowup threshold on d*max|k|"),
    "max_turning": KeySpec("float", "rad", "largest resolvable turning angle between chords"),
    "min_spacing_frac": KeySpec("float", "-", "node-collapse threshold as a fraction of L0/N"),
    "record_interval": KeySpec("float", "length^4", "time between diagnostics records"),
    "snapshot_times": KeySpec("floatlist", "length^4", "times at which curves are saved"),
    "record_snapshots": KeySpec("bool", "-", "keep the curve at every record (needed by kosc-evolution)"),
    "checks": KeySpec("strlist", "-", "checks evaluated after the run"),
    "mono_abs_slack": KeySpec("float", "-", "absolute slack of monotonicity checks"),
    "mono_rel_slack": KeySpec("float", "-", "slack of monotonicity checks relative to the initial value"),
    "identity_skip": KeySpec("int", "records", "leading records excluded from identity checks"),
    "expected_stop": KeySpec("str", "-", "documented stop reason"),
    "wall_budget": KeySpec("float", "s", "documented wall-clock budget"),
}


@dataclass(frozen=True)
class PerturbedSegment:
    amplitude: float = 0.0
    modes: tuple = (1,)
    seed: int = 0
    target_product: float | None = None
    amplitude_cap: float = 0.5


@dataclass(frozen=True)
class ExteriorData:
    omega: float = 0.5
    seed: int = 0
    amplitude: float = 0.0


@dataclass(frozen=True)
class LemniscateLobe:
    scale: float = 0.5
    lobe_turns: float = 1.0


@dataclass(frozen=True)
class CurveFile:
    path: str = ""


_GENERATOR_TYPES = {
    "perturbed-segment": PerturbedSegment,
    "exterior": ExteriorData,
    "lemniscate-lobe": LemniscateLobe,
    "file": CurveFile,
}

_SOLVER_KEYS = {
    "N": "n", "mode": "mode", "c_dt": "c_dt", "resample_every": "resample_every",
    "t_max": "t_max", "conv_tol": "conv_tol", "kappa_max": "kappa_max",
    "max_turning": "max_turning", "min_spacing_frac": "min_spacing_frac",
    "record_interval": "record_interval", "snapshot_times": "snapshot_times",
    "record_snapshots": "record_snapshots",
}


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    flow: FlowKind
    gap: float
    generator: object
    solver: SolverConfig
    checks: tuple = ()
    mono_abs_slack: float = 1e-10
    mono_rel_slack: float = 1e-3
    identity_skip: int = 10
    expected_stop: str | None = None
    wall_budget: float | None = None

    @property
    def generator_id(self) -> str:
        for key, cls in _GENERATOR_TYPES.items():
            if isinstance(self.generator, cls):
                return key
        raise TypeError(f"unknown generator {self.generator!r}")


# Parsing ----------------------------------------------------------------------------

_NUMBER_RE = re.compile(r"^([+-]?(?:\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?))?\s*\*?\s*(pi)?$")


def _parse_float(raw: str) -> float:
    text = raw.strip()
    m = _NUMBER_RE.match(text)
    if not m or (m.group(1) is None and m.group(2) is None):
        raise ValueError(f"expected a number, got {raw!r}")
    value = float(m.group(1)) if m.group(1) is not None else 1.0
    if m.group(2):
        value *= math.pi
    return value


def _parse_int(raw: str) -> int:
    text = raw.strip()
    if not re.fullmatch(r"[+-]?\d+", text):
        raise ValueError(f"expected an integer, got {raw!r}")
    return int(text)


def _parse_bool(raw: str) -> bool:
    text = raw.strip().lower()
    if text in ("true", "yes", "1", "on"):
        return True
    if text in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true or false, got {raw!r}")


def _parse_list(raw: str, item):
    text = raw.strip()
    if not (text.startswith("[") and text.endswith("]")):
        raise ValueError(f"expected a bracketed list, got {raw!r}")
    inner = text[1:-1].strip()
    if not inner:
        return ()
    return tuple(item(part) for part in inner.split(","))


def _convert(kind: str, raw: str):
    if kind == "str":
        value = raw.strip()
        if not value:
            raise ValueError("empty value")
        return value
    if kind == "float":
        return _parse_float(raw)
    if kind == "int":
        return _parse_int(raw)
    if kind == "bool":
        return _parse_bool(raw)
    if kind == "intlist":
        return _parse_list(raw, _parse_int)
    if kind == "floatlist":
        return _parse_list(raw, _parse_float)
    if kind == "strlist":
        return _parse_list(raw, lambda s: s.strip())
    raise AssertionError(kind)


def _read_pairs(text: str) -> dict:
    values, lines = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ParseError("expected 'key = value'", line=lineno)
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in KEYS:
            raise ParseError("unknown key", line=lineno, field=key)
        if key in values:
            raise ParseError(f"duplicate key (first on line {lines[key]})", line=lineno, field=key)
        try:
            values[key] = _convert(KEYS[key].kind, raw)
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno, field=key) from None
        lines[key] = lineno
    return values


_GENERATOR_KEYS = {
    "perturbed-segment": ("amplitude", "modes", "seed", "target_product", "amplitude_cap"),
    "exterior": ("omega", "seed", "amplitude"),
    "lemniscate-lobe": ("scale", "lobe_turns"),
    "file": ("path",),
}


def parse_scenario(text: str, default_name: str = "scenario") -> ScenarioSpec:
    """Parse and validate a scenario; raises ParseError or ValidationError.

    ``name`` may be omitted, in which case ``default_name`` is used.
    """
    values = _read_pairs(text)
    values.setdefault("name", default_name)
    errors = []
    for key in ("flow", "gap", "generator"):
        if key not in values:
            errors.append(f"{key}: required key is missing")
    if errors:
        raise ValidationError(errors)

    name = values["name"]
    if not _NAME_RE.match(name):
        errors.append(f"name: {name!r} is not filesystem-safe (letters, digits, '.', '_', '-')")
    try:
        flow = FlowKind.parse(values["flow"])
    except ValueError as exc:
        errors.append(f"flow: {exc}")
        flow = None
    gap = values["gap"]
    if not (gap > 0 and math.isfinite(gap)):
        errors.append(f"gap: gap must be positive (got {gap!r})")

    gen_id = values["generator"]
    generator = None
    if gen_id not in _GENERATOR_TYPES:
        errors.append(f"generator: must be one of {', '.join(GENERATORS)}")
    else:
        allowed = set(_GENERATOR_KEYS[gen_id])
        for key in ("amplitude", "modes", "seed", "target_product", "amplitude_cap",
                    "omega", "scale", "lobe_turns", "path"):
            if key in values and key not in allowed:
                errors.append(f"{key}: not used by generator {gen_id}")
        kwargs = {k: values[k] for k in _GENERATOR_KEYS[gen_id] if k in values}
        generator = _GENERATOR_TYPES[gen_id](**kwargs)
        errors.extend(_validate_generator(generator))

    solver_kwargs = {attr: values[key] for key, attr in _SOLVER_KEYS.items() if key in values}
    try:
        solver = SolverConfig(**solver_kwargs)
    except ValueError as exc:
        errors.extend(f"solver: {msg}" for msg in str(exc).split("; "))
        solver = None

    checks = values.get("checks", ())
    for c in checks:
        if c not in CHECKS:
            errors.append(f"checks: unknown check {c!r}")
    if "kosc-evolution" in checks and not values.get("record_snapshots", False):
        errors.append("checks: kosc-evolution needs record_snapshots = true")
    for key in ("mono_abs_slack", "mono_rel_slack"):
        if key in values and values[key] < 0:
            errors.append(f"{key}: must be non-negative")
    if values.get("identity_skip", 0) < 0:
        errors.append("identity_skip: must be non-negative")
    if "expected_stop" in values:
        from .engine import StopReason
        if values["expected_stop"] not in {r.value for r in StopReason}:
            errors.append(f"expected_stop: unknown stop reason {values['expected_stop']!r}")
    if "wall_budget" in values and not values["wall_budget"] > 0:
        errors.append("wall_budget: must be positive")
    if errors:
        raise ValidationError(errors)
    extra = {k: values[k] for k in ("mono_abs_slack", "mono_rel_slack", "identity_skip",
                                     "expected_stop", "wall_budget") if k in values}
    return ScenarioSpec(name=name, flow=flow, gap=gap, generator=generator, solver=solver,
                        checks=tuple(checks), **extra)


def _validate_generator(gen) -> list:
    errors = []
    if isinstance(gen, PerturbedSegment):
        if not gen.modes:
            errors.append("modes: at least one mode is required")
        if any(m < 1 for m in gen.modes):
            errors.append("modes: modes must be positive integers")
        if len(set(gen.modes)) != len(gen.modes):
            errors.append("modes: modes must be distinct")
        if gen.amplitude < 0 or not math.isfinite(gen.amplitude):
            errors.append("amplitude: must be non-negative")
        if not gen.amplitude_cap > 0:
            errors.append("amplitude_cap: must be positive")
        if gen.target_product is not None and not gen.target_product > 0:
            errors.append("target_product: must be positive")
    elif isinstance(gen, ExteriorData):
        twice = 2.0 * gen.omega
        if not (twice == round(twice) and round(twice) != 0):
            errors.append(f"omega: winding must be a nonzero integer multiple of 1/2 (got {gen.omega!r})")
        if gen.amplitude < 0:
            errors.append("amplitude: must be non-negative")
    elif isinstance(gen, LemniscateLobe):
        if not 0 < gen.scale <= 1:
            errors.append(f"scale: must lie in (0, 1] (got {gen.scale!r})")
        if not gen.lobe_turns > 0:
            errors.append("lobe_turns: must be positive")
    elif isinstance(gen, CurveFile):
        if not gen.path:
            errors.append("path: required for the file generator")
    return errors


# Rendering --------------------------------------------------------------------------

def _render_value(kind: str, value) -> str:
    if kind == "float":
        return repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    if kind == "int":
        return str(int(value))
    if kind in ("intlist", "floatlist", "strlist"):
        fmt = repr if kind == "floatlist" else str
        return "[" + ", ".join(fmt(float(v)) if kind == "floatlist" else fmt(v) for v in value) + "]"
    return str(value)


def render_scenario(spec: ScenarioSpec) -> str:
    """Text form accepted by :func:`parse_scenario`; every field is written out."""
    values = {"name": spec.name, "flow": spec.flow.value, "gap": spec.gap,
              "generator": spec.generator_id}
    for f in fields(spec.generator):
        v = getattr(spec.generator, f.name)
        if v is not None:
            values[f.name] = v
    for key, attr in _SOLVER_KEYS.items():
        v = getattr(spec.solver, attr)
        if key == "mode":
            v = v.value
        if v is not None:
            values[key] = v
    values["checks"] = spec.checks
    values["mono_abs_slack"] = spec.mono_abs_slack
    values["mono_rel_slack"] = spec.mono_rel_slack
    values["identity_skip"] = spec.identity_skip
    if spec.expected_stop is not None:
        values["expected_stop"] = spec.expected_stop
    if spec.wall_budget is not None:
        values["wall_budget"] = spec.wall_budget
    lines = []
    for key, ks in KEYS.items():
        if key in values:
            lines.append(f"{key} = {_render_value(ks.kind, values[key])}")
    return "\n".join(lines) + "\n"


def load_scenario(path) -> ScenarioSpec:
    """Parse a scenario file; an omitted name defaults to the file stem."""
    path = Path(path)
    return parse_scenario(path.read_text(), default_name=path.stem)


# Initial data -----------------------------------------------------------------------

def _mode_weights(gen: PerturbedSegment) -> np.ndarray:
    if len(gen.modes) == 1:
        return np.ones(1)
    z = np.random.default_rng(gen.seed).standard_normal(len(gen.modes))
    return z / np.max(np.abs(z))


def perturbed_segment(gap: float, amplitudes, modes, n: int) -> Curve:
    """Graph of ``sum a_m cos(m pi (x + d/2) / d)`` sampled at ``n`` segments."""
    amplitudes = np.asarray(amplitudes, dtype=float)
    modes = np.asarray(modes)

    def y(x):
        phase = np.multiply.outer(x + 0.5 * gap, modes) * math.pi / gap
        return np.cos(phase) @ amplitudes

    return Curve.graph(y, gap, n)


def energy_product(curve: Curve) -> float:
    rec = measure(curve)
    return rec.L * rec.E


def _fine(n: int) -> int:
    return max(2048, 8 * n)


def generate_initial(spec: ScenarioSpec) -> Curve:
    """Initial curve for ``spec``, resampled to the scenario's N."""
    gen, gap, n = spec.generator, spec.gap, spec.solver.n
    if isinstance(gen, PerturbedSegment):
        weights = _mode_weights(gen)
        if gen.target_product is None:
            curve = perturbed_segment(gap, gen.amplitude * weights, gen.modes, _fine(n))
        else:
            curve = _hit_target(gen, weights, gap, n)
    elif isinstance(gen, ExteriorData):
        curve = generate_exterior_curve(ExteriorCurveSpec(gen.omega, gap, gen.seed, gen.amplitude,
                                                          _fine(n)))
    elif isinstance(gen, LemniscateLobe):
        curve = lemniscate_lobe(gap, gen.scale, gen.lobe_turns, _fine(n))
    elif isinstance(gen, CurveFile):
        curve = read_curve_csv(gen.path, gap)
    else:
        raise TypeError(f"unknown generator {gen!r}")
    return resample_uniform(curve, n)


def _hit_target(gen: PerturbedSegment, weights, gap, n) -> Curve:
    """Bisect a common amplitude so the measured ``L * int k^2`` at N segments hits the target."""
    cap = gen.amplitude_cap * gap

    def product(a):
        c = perturbed_segment(gap, a * weights, gen.modes, _fine(n))
        return energy_product(resample_uniform(c, n)), c

    top, _ = product(cap)
    if top < gen.target_product:
        raise TargetUnreachable(
            f"L*int k^2 reaches only {top:.6g} at the amplitude cap {cap:g} "
            f"(target {gen.target_product:.6g}); use higher modes or raise the cap")
    a = brentq(lambda s: product(s)[0] - gen.target_product, 0.0, cap, xtol=1e-15, rtol=1e-13)
    return product(a)[1]


def lemniscate_lobe(gap: float, scale: float = 0.5, lobe_turns: float = 1.0, n: int = 2048) -> Curve:
    """Straight segment carrying a figure-eight-like double loop.

    Over the middle fraction ``scale`` of the length the tangent angle rises
    smoothly by ``2 pi lobe_turns`` and falls back, so the total turning is zero
    and the two loops have opposite orientation. Outside that window the curve
    is straight. This approximates the shrinking figure-eight configuration
    and is exploratory.
    """
    peak = 2.0 * math.pi * lobe_turns
    start = 0.5 * (1.0 - scale)

    def theta(u):
        v = (u - start) / scale
        inside = (v > 0.0) & (v < 1.0)
        profile = np.where(v <= 0.5, smoothstep(2.0 * v), smoothstep(2.0 - 2.0 * v))
        return np.where(inside, peak * profile, 0.0)

    nodes, _, closure = integrate_angle(theta, gap, n)
    if nodes is None:
        raise ClosureFailed(f"lobe does not span the strip (closure integral {closure:.4g}); "
                            "reduce scale or lobe_turns")
    return Curve(nodes, BoundaryGeometry(gap))


# Presets ----------------------------------------------------------------------------

PRESETS = {
    "cd-stability": """\
# Curve diffusion from a mode-1 graph at 90% of the energy threshold pi/10.
name = cd-stability
flow = cd
gap = 1.0
generator = perturbed-segment
modes = [1]
target_product = 0.09pi
N = 256
mode = semi-implicit
t_max = 2.0
record_interval = 5e-4
record_snapshots = true
checks = [converged, monotone-Kosc, monotone-L, winding, length-identity, kosc-evolution, time-integral, kosc-algebra, parity, rate-kss]
mono_abs_slack = 0
mono_rel_slack = 1e-8
identity_skip = 10
expected_stop = Converged
wall_budget = 120
""",
    "e-stability": """\
# Elastic flow from a mode-1 graph at 90% of the energy threshold pi.
name = e-stability
flow = e
gap = 1.0
generator = perturbed-segment
modes = [1]
target_product = 0.9pi
N = 256
mode = semi-implicit
t_max = 2.0
record_interval = 5e-4
checks = [converged, monotone-L, monotone-Kosc, monotone-E, winding, length-identity, kosc-algebra, parity, rate-E]
mono_abs_slack = 1e-10
mono_rel_slack = 0
expected_stop = Converged
wall_budget = 120
""",
    "e-decay-envelope": """\
# Elastic flow at 90% of 4 pi / 7, checking the decay envelope of ||k_s||^2.
name = e-decay-envelope
flow = e
gap = 1.0
generator = perturbed-segment
modes = [1]
target_product = 0.5142857142857143pi
N = 256
mode = semi-implicit
t_max = 2.0
record_interval = 5e-4
checks = [converged, decay-envelope, monotone-E, winding, parity]
mono_abs_slack = 1e-10
mono_rel_slack = 0
expected_stop = Converged
wall_budget = 120
""",
    "lemniscate-singularity": """\
# Curve diffusion from a figure-eight-like double loop; expected to pinch in finite time.
name = lemniscate-singularity
flow = cd
gap = 1.0
generator = lemniscate-lobe
scale = 0.5
lobe_turns = 1.0
N = 256
mode = semi-implicit
c_dt = 0.001
t_max = 1e-3
record_interval = 1e-7
checks = [blowup, strict-L, time-integral, parity]
expected_stop = CurvatureBlowup
wall_budget = 60
""",
}

SUITES = ("poincare-suite", "exterior-corollary", "linearization-order", "convergence-order")


def preset(name: str) -> ScenarioSpec:
    try:
        return parse_scenario(PRESETS[name])
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None


def resolve_scenario(ref: str) -> ScenarioSpec:
    """A preset name or a path to a scenario file."""
    if ref in PRESETS:
        return preset(ref)
    return load_scenario(ref)


def with_overrides(spec: ScenarioSpec, text_pairs: dict) -> ScenarioSpec:
    """Re-parse ``spec`` with some keys replaced (values given as text)."""
    lines = render_scenario(spec).splitlines()
    keyed = {line.split("=", 1)[0].strip(): line for line in lines}
    for key, raw in text_pairs.items():
        if key not in KEYS:
            raise ParseError("unknown key", field=key)
        keyed[key] = f"{key} = {raw}"
    return parse_scenario("\n".join(keyed.values()) + "\n")


def renamed(spec: ScenarioSpec, name: str) -> ScenarioSpec:
    return replace(spec, name=name)
