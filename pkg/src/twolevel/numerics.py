"""Numerical kernel: complex quadrature, root finding, differentiation, ODE stepping.

Everything here is a pure function of its inputs and safe to call concurrently.
All state is complex-valued at the interface; nothing is split into real and
imaginary parts.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import solve_ivp

from .errors import (
    NonConvergence,
    NonFiniteSample,
    NonFiniteState,
    StepUnderflow,
    StiffnessAbort,
)

__all__ = [
    "ComplexPath",
    "Rectangle",
    "Tolerance",
    "integrate_path",
    "find_roots",
    "derivative",
    "ode_propagate",
]


@dataclass(frozen=True)
class Tolerance:
    """Error control knobs shared by quadrature and ODE stepping.

    rel + abs must be positive; max_subdivisions bounds adaptive recursion.
    """

    rel: float = 1e-10
    abs: float = 1e-12
    max_subdivisions: int = 2000

    def __post_init__(self):
        if self.rel < 0 or self.abs < 0 or self.rel + self.abs <= 0:
            raise ValueError("need rel >= 0, abs >= 0, rel + abs > 0")
        if self.max_subdivisions <= 0:
            raise ValueError("max_subdivisions must be positive")


@dataclass(frozen=True)
class ComplexPath:
    """Piecewise-linear path in the complex s-plane."""

    waypoints: tuple

    def __init__(self, waypoints: Sequence[complex]):
        pts = tuple(complex(w) for w in waypoints)
        if len(pts) < 2:
            raise ValueError("path needs at least 2 waypoints")
        for a, b in zip(pts, pts[1:]):
            if a == b:
                raise ValueError("consecutive waypoints must be distinct")
        object.__setattr__(self, "waypoints", pts)

    @property
    def start(self) -> complex:
        return self.waypoints[0]

    @property
    def end(self) -> complex:
        return self.waypoints[-1]

    def segments(self):
        return list(zip(self.waypoints, self.waypoints[1:]))

    def length(self) -> float:
        return sum(abs(b - a) for a, b in self.segments())

    def reversed(self) -> "ComplexPath":
        return ComplexPath(tuple(reversed(self.waypoints)))

    def join(self, other: "ComplexPath") -> "ComplexPath":
        if self.end != other.start:
            raise ValueError("paths do not meet")
        return ComplexPath(self.waypoints + other.waypoints[1:])

    def sample(self, n_per_segment: int) -> np.ndarray:
        """n_per_segment+1 evenly spaced points on each segment, deduplicated."""
        pts = [self.waypoints[0]]
        for a, b in self.segments():
            ts = np.linspace(0.0, 1.0, n_per_segment + 1)[1:]
            pts.extend(a + t * (b - a) for t in ts)
        return np.asarray(pts, dtype=complex)


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned search region in the complex plane."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError("degenerate rectangle")

    def contains(self, s: complex, margin: float = 0.0) -> bool:
        return (
            self.re_min - margin <= s.real <= self.re_max + margin
            and self.im_min - margin <= s.imag <= self.im_max + margin
        )

    @property
    def diagonal(self) -> float:
        return math.hypot(self.re_max - self.re_min, self.im_max - self.im_min)

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))


# Embedded Gauss pair (7 and 15 nodes) per panel; the 15-point value is kept,
# the difference estimates the error.  Gauss-Kronrod-class behaviour with
# plain Legendre nodes.
_GL7_X, _GL7_W = leggauss(7)
_GL15_X, _GL15_W = leggauss(15)


def _panel(f, a: complex, b: complex):
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    f15 = np.array([f(mid + half * x) for x in _GL15_X], dtype=complex)
    if not np.all(np.isfinite(f15)):
        raise NonFiniteSample(f"integrand not finite on segment {a} -> {b}")
    f7 = np.array([f(mid + half * x) for x in _GL7_X], dtype=complex)
    if not np.all(np.isfinite(f7)):
        raise NonFiniteSample(f"integrand not finite on segment {a} -> {b}")
    hi = half * np.sum(_GL15_W * f15)
    lo = half * np.sum(_GL7_W * f7)
    return hi, abs(hi - lo)


def integrate_path(
    f: Callable[[complex], complex],
    path: ComplexPath,
    tol: Tolerance = Tolerance(),
) -> complex:
    """Integral of f(s) ds along a piecewise-linear path.

    Adaptive bisection of each segment with an embedded Gauss pair; the
    returned value is deterministic for fixed inputs.  Raises NonConvergence
    when the subdivision budget runs out and NonFiniteSample on NaN/inf.
    """
    total = 0.0 + 0.0j
    budget = tol.max_subdivisions
    n_seg = len(path.segments())
    for a, b in path.segments():
        hi, err = _panel(f, a, b)
        seg_tol = max(tol.abs, tol.rel * abs(hi)) / n_seg
        acc = 0.0 + 0.0j
        stack = [(a, b, hi, err)]
        while stack:
            xa, xb, val, er = stack.pop()
            local_tol = max(seg_tol * abs(xb - xa) / abs(b - a), 1e-16 * abs(val))
            if er <= local_tol:
                acc += val
                continue
            budget -= 1
            if budget <= 0:
                raise NonConvergence("subdivision budget exhausted")
            xm = 0.5 * (xa + xb)
            stack.append((xa, xm) + _panel(f, xa, xm))
            stack.append((xm, xb) + _panel(f, xm, xb))
        total += acc
    return total


def derivative(
    f: Callable[[complex], complex],
    s: complex,
    order: int = 1,
    step: float = 1e-5,
) -> complex:
    """Central-difference derivative with one Richardson extrapolation.

    Valid for analytic f; error O(step^4).  `order` is 1 or 2.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    floor = 1e3 * np.finfo(float).eps * max(1.0, abs(s))
    if step < floor:
        raise StepUnderflow(f"step {step} below floor {floor}")

    def d(h):
        if order == 1:
            return (f(s + h) - f(s - h)) / (2.0 * h)
        return (f(s + h) - 2.0 * f(s) + f(s - h)) / (h * h)

    # both stencils have O(h^2) leading error, so one Richardson step
    # cancels it and leaves O(h^4)
    return (4.0 * d(step / 2.0) - d(step)) / 3.0


def find_roots(
    f: Callable[[complex], complex],
    region: Rectangle,
    seed_density: int = 20,
    abs_tol: float = 1e-10,
    dedupe_radius: float | None = None,
    max_iter: int = 60,
) -> list[complex]:
    """Roots of an analytic f inside a rectangle via Newton from a seed grid.

    Newton derivatives are taken numerically, duplicates within the cluster
    radius are merged, and results come back sorted by (Im, Re).  Seeds whose
    iteration escapes the (margin-padded) region are dropped silently; an
    empty list is a valid answer.
    """
    if dedupe_radius is None:
        dedupe_radius = 1e-6 * region.diagonal
    res = np.linspace(region.re_min, region.re_max, seed_density)
    ims = np.linspace(region.im_min, region.im_max, seed_density)
    margin = 0.25 * region.diagonal
    scale = max(1.0, region.diagonal)
    h = 1e-7 * scale
    roots: list[complex] = []
    for re in res:
        for im in ims:
            z = complex(re, im)
            ok = False
            for _ in range(max_iter):
                fz = f(z)
                if not (np.isfinite(fz.real) and np.isfinite(fz.imag)):
                    break
                if abs(fz) <= abs_tol:
                    ok = True
                    break
                df = (f(z + h) - f(z - h)) / (2.0 * h)
                if df == 0 or not np.isfinite(abs(df)):
                    break
                dz = fz / df
                if abs(dz) > margin:
                    dz *= margin / abs(dz)
                z = z - dz
                if not region.contains(z, margin=margin):
                    break
                if abs(dz) < 1e-15 * scale:
                    ok = abs(f(z)) <= abs_tol
                    break
            if ok and region.contains(z, margin=1e-9 * scale):
                for i, r in enumerate(roots):
                    if abs(r - z) < dedupe_radius:
                        if abs(f(z)) < abs(f(r)):
                            roots[i] = z
                        break
                else:
                    roots.append(z)
    roots.sort(key=lambda r: (r.imag, r.real))
    return roots


def ode_propagate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    s0: float,
    s1: float,
    y0: Sequence[complex],
    tol: Tolerance = Tolerance(rel=1e-10, abs=1e-12),
) -> np.ndarray:
    """Propagate y' = rhs(s, y) from s0 to s1 with an adaptive RK (DOP853).

    The state is complex end to end.  Raises StiffnessAbort when the step
    size collapses and NonFiniteState when the state leaves the finite range.
    """
    if s0 == s1:
        return np.asarray(y0, dtype=complex)
    y_init = np.asarray(y0, dtype=complex)
    sol = solve_ivp(
        rhs,
        (s0, s1),
        y_init,
        method="DOP853",
        rtol=max(tol.rel, 1e-13),
        atol=tol.abs,
        dense_output=False,
    )
    if not sol.success:
        msg = sol.message or "integration failed"
        if "step size" in msg.lower():
            raise StiffnessAbort(msg)
        raise StiffnessAbort(msg)
    y_end = sol.y[:, -1]
    if not np.all(np.isfinite(y_end.view(float))):
        raise NonFiniteState("state not finite at end of integration")
    return y_end
