"""Open plane curves between two vertical lines and their discrete geometry.

The supporting lines sit at ``x = -d/2`` and ``x = +d/2``. Boundary conditions
are carried by mirror ghost nodes: reflecting the curve across each line gives
the even continuation of the curve, so the first-order stencils at an endpoint
see a horizontal tangent and every odd arclength derivative of curvature
vanishes there by symmetry.

Sign conventions: ``tau`` is the unit tangent in node order, ``nu = (tau_y,
-tau_x)`` is its clockwise rotation and ``k = <gamma_ss, nu>``. A curve
traversed clockwise around a circle of radius ``r`` has ``k = 1/r``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from ._walk import compass_walk
from .errors import DegenerateCurve, TooFewNodes

MIN_SEGMENTS = 8
ENDPOINT_TOL = 1e-9


@dataclass(frozen=True)
class BoundaryGeometry:
    """Two vertical supporting lines a distance ``gap`` apart, symmetric about x = 0."""

    gap: float

    def __post_init__(self):
        if not (self.gap > 0 and math.isfinite(self.gap)):
            raise ValueError(f"gap must be positive, got {self.gap!r}")

    @property
    def left(self) -> float:
        return -0.5 * self.gap

    @property
    def right(self) -> float:
        return 0.5 * self.gap

    @property
    def e(self) -> np.ndarray:
        """Vector joining the lines; every length minimiser is a translate of it."""
        return np.array([self.gap, 0.0])

    @property
    def f(self) -> np.ndarray:
        """Graph direction, ``e`` rotated by a quarter turn and normalised."""
        return np.array([0.0, 1.0])

    def mirror_left(self, points):
        pts = np.array(points, dtype=float, copy=True)
        pts[..., 0] = -self.gap - pts[..., 0]
        return pts

    def mirror_right(self, points):
        pts = np.array(points, dtype=float, copy=True)
        pts[..., 0] = self.gap - pts[..., 0]
        return pts


@dataclass(frozen=True, eq=False)
class Curve:
    """Polyline ``gamma_0 .. gamma_N`` with its endpoints on the two lines.

    With ``strict=False`` the endpoint constraint is not enforced; such curves
    are useful for auditing the reflection machinery on non-compliant data.
    """

    nodes: np.ndarray
    boundary: BoundaryGeometry
    strict: bool = field(default=True, repr=False)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise ValueError("nodes must have shape (N+1, 2)")
        if nodes.shape[0] - 1 < MIN_SEGMENTS:
            raise TooFewNodes(f"need at least {MIN_SEGMENTS} segments, got {nodes.shape[0] - 1}")
        if not np.all(np.isfinite(nodes)):
            raise DegenerateCurve("non-finite node coordinates")
        if np.min(segment_lengths(nodes)) <= 0.0:
            raise DegenerateCurve("consecutive nodes coincide")
        if self.strict:
            off = np.abs([nodes[0, 0] - self.boundary.left, nodes[-1, 0] - self.boundary.right])
            if np.any(off != 0.0):
                raise ValueError(f"endpoints are not on the supporting lines (offsets {off})")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n_segments(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def gap(self) -> float:
        return self.boundary.gap

    @property
    def length(self) -> float:
        return math.fsum(segment_lengths(self.nodes))

    def endpoint_offsets(self):
        """Signed horizontal distances of the endpoints from their lines."""
        return (self.nodes[0, 0] - self.boundary.left, self.nodes[-1, 0] - self.boundary.right)

    def with_nodes(self, nodes, strict=None) -> "Curve":
        return Curve(nodes, self.boundary, self.strict if strict is None else strict)

    def reversed(self) -> "Curve":
        """Reverse traversal, turned by a half rotation so the first node again
        sits on the left line. Rigid motion keeps k; reversal flips its sign."""
        return self.with_nodes(-self.nodes[::-1])

    def projected(self) -> "Curve":
        """Snap the endpoint abscissae onto the lines."""
        nodes = self.nodes.copy()
        nodes[0, 0] = self.boundary.left
        nodes[-1, 0] = self.boundary.right
        return Curve(nodes, self.boundary, True)

    @classmethod
    def segment(cls, gap=1.0, n=64, height=0.0) -> "Curve":
        x = np.linspace(-0.5 * gap, 0.5 * gap, n + 1)
        x[0], x[-1] = -0.5 * gap, 0.5 * gap
        return cls(np.column_stack([x, np.full_like(x, height)]), BoundaryGeometry(gap))

    @classmethod
    def graph(cls, func, gap=1.0, n=64) -> "Curve":
        """Graph ``(x, func(x))`` sampled uniformly in x."""
        x = np.linspace(-0.5 * gap, 0.5 * gap, n + 1)
        x[0], x[-1] = -0.5 * gap, 0.5 * gap
        return cls(np.column_stack([x, func(x)]), BoundaryGeometry(gap))


def segment_lengths(nodes):
    diff = np.diff(nodes, axis=0)
    return np.hypot(diff[:, 0], diff[:, 1])


class ExtendedNodes(NamedTuple):
    nodes: np.ndarray
    depth: int
    off_line: tuple
    offsets: tuple


def reflect_extend(curve: Curve, depth: int = 2) -> ExtendedNodes:
    """Prepend and append ``depth`` mirror ghosts across the supporting lines.

    The reflection is always taken across the exact line ``x = -+d/2``; if an
    endpoint is not on its line the corresponding ``off_line`` flag is set.
    """
    if depth not in (1, 2, 3):
        raise ValueError(f"depth must be 1, 2 or 3, got {depth}")
    pts = curve.nodes
    if pts.shape[0] - 1 < depth:
        raise TooFewNodes("curve shorter than the ghost depth")
    left = curve.boundary.mirror_left(pts[depth:0:-1])
    right = curve.boundary.mirror_right(pts[-2:-depth - 2:-1])
    offsets = curve.endpoint_offsets()
    off = tuple(bool(abs(o) > ENDPOINT_TOL) for o in offsets)
    return ExtendedNodes(np.vstack([left, pts, right]), depth, off, offsets)


def resample_uniform(curve: Curve, n: int) -> Curve:
    """Place ``n + 1`` nodes with equal chords along the input polyline.

    Endpoints are kept exactly. A curve whose chords are already equal is
    reproduced to rounding, so the operation is idempotent.
    """
    if n < MIN_SEGMENTS:
        raise TooFewNodes(f"need at least {MIN_SEGMENTS} segments, got {n}")
    pts = np.ascontiguousarray(curve.nodes)
    seg = segment_lengths(pts)
    if np.min(seg) <= 0.0:
        raise DegenerateCurve("consecutive nodes coincide")
    cumlen = np.concatenate([[0.0], np.cumsum(seg)])
    out = np.empty((n + 1, 2))

    def residual(c):
        return compass_walk(pts, cumlen, c, n, out)

    hi = cumlen[-1] / n
    r_hi = residual(hi)
    # chords never exceed arcs, so L/n overshoots except for rounding
    bump = 1e-14
    while r_hi < 0.0:
        if bump > 1e-6:
            raise DegenerateCurve("equal-chord resampling failed to bracket")
        hi = cumlen[-1] / n * (1.0 + bump)
        r_hi = residual(hi)
        bump *= 16.0
    if r_hi == 0.0:
        root = hi
    else:
        lo = 0.5 * hi
        while residual(lo) >= 0.0:
            lo *= 0.5
            if lo < 1e-12 * hi:
                raise DegenerateCurve("equal-chord resampling failed to bracket")
        root = brentq(residual, lo, hi, xtol=4 * np.finfo(float).eps * hi, rtol=4 * np.finfo(float).eps)
    residual(root)
    out[0] = pts[0]
    out[-1] = pts[-1]
    return curve.with_nodes(out)


# Scalar finite differences on nonuniform arclength grids.  ``h`` holds the N
# physical spacings; scalars are continued across the lines as even
# (parity=+1) or odd (parity=-1) functions, matching the mirror ghosts.

def _extend(values, depth, parity):
    left = parity * values[depth:0:-1]
    right = parity * values[-2:-depth - 2:-1]
    return np.concatenate([left, values, right])


def _extend_spacing(h, depth):
    return np.concatenate([h[depth - 1::-1], h, h[:-depth - 1:-1]])


def first_derivative(values, h, parity=1):
    f = _extend(values, 1, parity)
    hh = _extend_spacing(h, 1)
    hl, hr = hh[:-1], hh[1:]
    wl = -hr / (hl * (hl + hr))
    wc = (hr - hl) / (hl * hr)
    wr = hl / (hr * (hl + hr))
    return wl * f[:-2] + wc * f[1:-1] + wr * f[2:]


def second_derivative(values, h, parity=1):
    f = _extend(values, 1, parity)
    hh = _extend_spacing(h, 1)
    hl, hr = hh[:-1], hh[1:]
    wl = 2.0 / (hl * (hl + hr))
    wc = -2.0 / (hl * hr)
    wr = 2.0 / (hr * (hl + hr))
    return wl * f[:-2] + wc * f[1:-1] + wr * f[2:]


def trapezoid_weights(h):
    w = np.empty(h.size + 1)
    w[0] = 0.5 * h[0]
    w[-1] = 0.5 * h[-1]
    w[1:-1] = 0.5 * (h[:-1] + h[1:])
    return w


@dataclass(frozen=True, eq=False)
class FrameField:
    """Per-node tangent, normal, curvature and its arclength derivatives."""

    tau: np.ndarray
    nu: np.ndarray
    k: np.ndarray
    k_s: np.ndarray
    k_ss: np.ndarray
    k_sss: np.ndarray
    k_ssss: np.ndarray
    s: np.ndarray
    length: float
    spacing: np.ndarray
    turning: np.ndarray
    weights: np.ndarray
    positions: np.ndarray

    def integrate(self, values) -> float:
        """Trapezoidal rule on the node arclengths."""
        return float(np.dot(self.weights, values))


def compute_frame(curve: Curve, closure: str = "reflect") -> FrameField:
    """Discrete Frenet data of ``curve`` with the boundary closure built in.

    Curvature at node i is the signed turning angle between the incoming and
    outgoing chords divided by the dual cell length; it agrees with the second
    difference of position projected on the normal to second order and makes
    the trapezoidal total curvature telescope exactly.

    ``closure="reflect"`` (used by the flow) closes the ends with mirror
    ghosts. ``closure="open"`` treats the curve as a free polyline: endpoint
    curvature is extrapolated from the interior and derivatives are one-sided.
    It is meant for measuring curves that do not meet the lines at right angles.
    """
    if closure == "reflect":
        ext = reflect_extend(curve, 1)
        off_left, off_right = ext.off_line
        pts = ext.nodes
    elif closure == "open":
        p = curve.nodes
        pts = np.vstack([2 * p[0] - p[1], p, 2 * p[-1] - p[-2]])
        off_left = off_right = True
    else:
        raise ValueError(f"closure must be 'reflect' or 'open', got {closure!r}")
    chords = np.diff(pts, axis=0)
    lengths = np.hypot(chords[:, 0], chords[:, 1])
    if np.min(lengths[1:-1]) <= 0.0:
        raise DegenerateCurve("consecutive nodes coincide")
    if lengths[0] <= 0.0 or lengths[-1] <= 0.0:
        raise DegenerateCurve("first or last chord lies along its supporting line")
    h = lengths[1:-1]
    c_in, c_out = chords[:-1], chords[1:]
    l_in, l_out = lengths[:-1].copy(), lengths[1:].copy()
    # the ghost chord mirrors the first/last physical chord; use that length exactly
    l_in[0] = h[0]
    l_out[-1] = h[-1]
    cross = c_in[:, 0] * c_out[:, 1] - c_in[:, 1] * c_out[:, 0]
    dot = c_in[:, 0] * c_out[:, 0] + c_in[:, 1] * c_out[:, 1]
    alpha = np.arctan2(cross, dot)
    theta_in = np.arctan2(c_in[:, 1], c_in[:, 0])
    theta = theta_in + alpha * l_in / (l_in + l_out)
    tau = np.column_stack([np.cos(theta), np.sin(theta)])
    if not off_left:
        tau[0] = (math.copysign(1.0, c_out[0, 0]), 0.0)
    if not off_right:
        tau[-1] = (math.copysign(1.0, c_in[-1, 0]), 0.0)
    nu = np.column_stack([tau[:, 1], -tau[:, 0]])
    dual = 0.5 * (l_in + l_out)
    k = -alpha / dual
    s = np.concatenate([[0.0], np.cumsum(h)])

    if closure == "reflect":
        k_s = first_derivative(k, h, 1)
        k_ss = second_derivative(k, h, 1)
        k_sss = first_derivative(k_ss, h, 1)
        k_ssss = second_derivative(k_ss, h, 1)
    else:
        k[0] = k[1] + (k[1] - k[2]) * h[0] / h[1]
        k[-1] = k[-2] + (k[-2] - k[-3]) * h[-1] / h[-2]
        k_s = np.gradient(k, s, edge_order=2)
        k_ss = np.gradient(k_s, s, edge_order=2)
        k_sss = np.gradient(k_ss, s, edge_order=2)
        k_ssss = np.gradient(k_sss, s, edge_order=2)

    length = math.fsum(h)
    s[-1] = length
    return FrameField(
        tau=tau, nu=nu, k=k, k_s=k_s, k_ss=k_ss, k_sss=k_sss, k_ssss=k_ssss,
        s=s, length=length, spacing=h, turning=alpha,
        weights=trapezoid_weights(h), positions=curve.nodes,
    )


def turning_and_winding(frame: FrameField):
    """Total curvature ``int k ds`` and the normalised winding ``omega_hat``."""
    total = frame.integrate(frame.k)
    return total, total / (2.0 * math.pi)


def write_curve_csv(curve: Curve, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "x", "y"])
        for i, (x, y) in enumerate(curve.nodes):
            writer.writerow([i, format(x, ".17g"), format(y, ".17g")])


def read_curve_csv(path, gap: float, strict: bool = True) -> Curve:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["index", "x", "y"]:
            raise ValueError(f"expected header index,x,y in {path}, got {reader.fieldnames}")
        rows = sorted(((int(r["index"]), float(r["x"]), float(r["y"])) for r in reader))
    if [r[0] for r in rows] != list(range(len(rows))):
        raise ValueError(f"node indices in {path} are not contiguous from 0")
    nodes = np.array([[x, y] for _, x, y in rows])
    return Curve(nodes, BoundaryGeometry(gap), strict)
