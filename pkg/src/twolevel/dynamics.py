"""Coupling, frequency, potentials, and exact propagation of the amplitude system.

The two-level problem in the adiabatic eigenbasis reduces to

    a+' =  c(s,T) exp(+i Phi) a-,      Phi(s) = integral of omega from the anchor,
    a-' = -c*(s,T) exp(-i Phi) a+,

with the coupling c and frequency omega derived from the field vector and its
s-derivative.  The same data defines the Schroedinger-form potentials q+/q-
whose turning points drive the Stokes-graph machinery.

Branch conventions: sqrt(B^2) is anchored positive on the real axis and
continued by nearest-value tracking where a caller supplies a reference;
|c|^2 off the real axis means the analytic continuation c(s) * conj(c(conj s)).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import (
    CoordinateSingularity,
    CouplingZero,
    CutoffTooSmall,
)
from .fields import FieldModel
from .numerics import ComplexPath, Tolerance

__all__ = [
    "AmplitudeState",
    "TransitionMatrix",
    "Potential",
    "coupling_c",
    "frequency_omega",
    "potential_q",
    "potential_q_leading",
    "make_potential",
    "propagate_exact",
    "transition_probability_exact",
    "transition_matrix",
    "propagate_spinor",
    "spinor_amplitudes",
    "real_coupling_zeros",
]

_PERP_FLOOR = 1e-280


@dataclass(frozen=True)
class AmplitudeState:
    """Pair of adiabatic amplitudes plus the carried phase integral."""

    a_plus: complex
    a_minus: complex
    s: float
    T: float
    phase_accumulator: float = 0.0

    @property
    def norm(self) -> float:
        return abs(self.a_plus) ** 2 + abs(self.a_minus) ** 2


@dataclass(frozen=True)
class TransitionMatrix:
    """2x2 propagator of the amplitude system, U(-cutoff) = identity."""

    u11: complex
    u12: complex
    u21: complex
    u22: complex
    s: float
    T: float

    def as_array(self) -> np.ndarray:
        return np.array([[self.u11, self.u12], [self.u21, self.u22]], dtype=complex)

    def unitarity_defect(self) -> float:
        u = self.as_array()
        return float(np.linalg.norm(u.conj().T @ u - np.eye(2)))


def _field_bits(model: FieldModel, s: complex, T: float):
    b = model.eval(s, T)
    db = model.eval_deriv(s, T)
    bx, by, bz = b
    dbx, dby, dbz = db
    b2 = bx * bx + by * by + bz * bz
    perp2 = bx * bx + by * by
    cross_z = bx * dby - by * dbx                      # (B x B')_z
    bdotdb = bx * dbx + by * dby + bz * dbz
    bxbxdb_z = bz * bdotdb - dbz * b2                  # [B x (B x B')]_z
    return b2, perp2, cross_z, bxbxdb_z, bz


def _sqrt_near(value: complex, ref: complex | None) -> complex:
    """Square root of `value` on the branch nearest `ref` (principal if None)."""
    r = cmath.sqrt(value)
    if ref is None:
        return r
    return r if abs(r - ref) <= abs(-r - ref) else -r


def coupling_c(model: FieldModel, s: complex, T: float, sqrt_b2: complex | None = None) -> complex:
    """Coupling c = -dTheta/dt / 2 + (i/2) dphi/dt sin(Theta), in vector form.

    Analytic continuation to complex s uses principal square roots; models
    whose field crosses the z-axis supply a closed form instead.
    """
    cf = model.coupling_closed_form(s, T)
    if cf is not None:
        return cf
    b2, perp2, cross_z, bxbxdb_z, _ = _field_bits(model, s, T)
    if abs(perp2) < _PERP_FLOOR:
        raise CoordinateSingularity(f"field along z-axis at s = {s}")
    r = cmath.sqrt(perp2)
    bb = _sqrt_near(b2, sqrt_b2)
    return -0.5 * bxbxdb_z / (b2 * r) + 0.5j * cross_z / (bb * r)


def frequency_omega(
    model: FieldModel,
    s: complex,
    T: float,
    include_geometric: bool = True,
    geometric_only: bool = False,
    sqrt_b2: complex | None = None,
) -> complex:
    """Frequency omega = mu T sqrt(B^2) - geometric term.

    The geometric (Berry) part -(B_z/B)(B x B')_z/(B_x^2+B_y^2) is retrievable
    alone via geometric_only; include_geometric=False drops it.
    """
    b2, perp2, cross_z, _, bz = _field_bits(model, s, T)
    bb = _sqrt_near(b2, sqrt_b2)
    if cross_z == 0:
        geo = 0.0j
    else:
        if abs(perp2) < _PERP_FLOOR:
            raise CoordinateSingularity(f"field along z-axis at s = {s}")
        geo = (bz / bb) * cross_z / perp2
    if geometric_only:
        return -geo
    gap_part = model.mu * T * bb
    return gap_part - geo if include_geometric else gap_part


def _coupling_sq(model, s, T, sqrt_b2=None):
    c = coupling_c(model, s, T, sqrt_b2)
    return c * c


def _coupling_bar(model, s, T, sqrt_b2=None):
    """c-bar(s) = conj(c(conj s)): the continuation of conj(c) off the axis."""
    c = coupling_c(model, complex(s).conjugate(), T, None if sqrt_b2 is None else complex(sqrt_b2).conjugate())
    return c.conjugate()


def potential_q(
    model: FieldModel,
    kind: str,
    s: complex,
    T: float,
    with_langer: bool = False,
    langer_poles: tuple = (),
    sqrt_b2: complex | None = None,
    diff_step: float = 1e-5,
) -> complex:
    """Full Schroedinger-form potential q+ or q- at complex s.

    Built from the defining expression: q = [-(X/2)^2 + c cbar + X'/2] / T^2
    with X = d(log c)/ds + i omega (plus sign) or d(log cbar)/ds - i omega
    (minus sign).  Log-derivatives are computed from c^2, which is single
    valued; the remaining branch (sqrt of B^2) follows the supplied reference.
    Raises CouplingZero at roots of c, which are genuine double poles.
    """
    if kind not in ("plus", "minus"):
        raise ValueError("kind must be 'plus' or 'minus'")
    ref = sqrt_b2
    c_val = coupling_c(model, s, T, ref)
    cbar_val = _coupling_bar(model, s, T, ref)

    if kind == "plus":
        u = lambda z: _coupling_sq(model, z, T, ref)
        u0 = c_val * c_val
        sign = +1.0
    else:
        u = lambda z: _coupling_bar(model, z, T, ref) ** 2
        u0 = cbar_val * cbar_val
        sign = -1.0
    if abs(u0) < 1e-120:
        raise CouplingZero(f"coupling vanishes at s = {s}")

    # log-derivative through c^2, which is free of the sqrt(Bx^2+By^2) sign
    h = diff_step * max(1.0, abs(s))
    du = numerics.derivative(u, s, 1, h)
    d2u = numerics.derivative(u, s, 2, h)
    dlog = du / (2.0 * u0)
    dlog_prime = d2u / (2.0 * u0) - (du * du) / (2.0 * u0 * u0)

    om = frequency_omega(model, s, T, sqrt_b2=ref)
    dom = _omega_deriv(model, s, T, ref)

    x = dlog + sign * 1j * om
    dx = dlog_prime + sign * 1j * dom

    q = (-0.25 * x * x + c_val * cbar_val) / (T * T) + dx / (2.0 * T * T)
    if with_langer:
        q += _langer_sum(langer_poles, s) / (T * T)
    return q


def _omega_deriv(model, s, T, sqrt_b2=None):
    """d(omega)/ds with the gap part done analytically."""
    b2 = model.b2(s, T)
    bb = _sqrt_near(b2, sqrt_b2)
    gap_part = model.mu * T * model.b2_deriv(s, T) / (2.0 * bb)
    geo = lambda z: frequency_omega(model, z, T, geometric_only=True, sqrt_b2=bb)
    g0 = geo(s)
    if g0 == 0 and model.planar:
        return gap_part
    h = 1e-5 * max(1.0, abs(s))
    return gap_part + numerics.derivative(geo, s, 1, h)


def _langer_sum(poles, s):
    acc = 0.0j
    for z, order in poles:
        if order in (1, 2):
            d = s - z
            acc += 1.0 / (4.0 * d * d)
    return acc


def potential_q_leading(model: FieldModel, s: complex) -> complex:
    """Leading large-T potential q0 = (mu^2/4) B^2(s): sets the limit graph."""
    return 0.25 * model.mu ** 2 * model.b2(s, 1.0)


@dataclass(frozen=True)
class Potential:
    """Evaluable potential with pole metadata for the Stokes machinery.

    kind "q_leading" is single valued (no internal square roots); the full
    kinds carry a sqrt(B^2) branch which callers thread through
    eval_continued during path tracing.
    """

    kind: str  # "q_plus" | "q_minus" | "q_leading"
    model: FieldModel
    T: float
    with_langer: bool = False
    langer_poles: tuple = ()

    def eval(self, s: complex, T: float | None = None) -> complex:
        t = self.T if T is None else T
        if self.kind == "q_leading":
            q = potential_q_leading(self.model, s)
            if self.with_langer:
                q += _langer_sum(self.langer_poles, s) / (t * t)
            return q
        kind = "plus" if self.kind == "q_plus" else "minus"
        return potential_q(
            self.model, kind, s, t,
            with_langer=self.with_langer, langer_poles=self.langer_poles,
        )

    def eval_continued(self, s: complex, sqrt_b2_ref: complex | None):
        """Value plus the updated sqrt(B^2) branch reference at s."""
        if self.kind == "q_leading":
            return self.eval(s), None
        bb = _sqrt_near(self.model.b2(s, self.T), sqrt_b2_ref)
        kind = "plus" if self.kind == "q_plus" else "minus"
        q = potential_q(
            self.model, kind, s, self.T,
            with_langer=self.with_langer, langer_poles=self.langer_poles,
            sqrt_b2=bb,
        )
        return q, bb

    def deriv(self, s: complex, n: int = 1) -> complex:
        """First or second s-derivative; analytic for the leading kind."""
        if self.kind == "q_leading":
            mu2 = 0.25 * self.model.mu ** 2
            d = mu2 * (self.model.b2_deriv(s, self.T) if n == 1 else self.model.b2_deriv2(s, self.T))
            if self.with_langer:
                t2 = self.T * self.T
                for z, order in self.langer_poles:
                    if order in (1, 2):
                        if n == 1:
                            d += -0.5 / (s - z) ** 3 / t2
                        else:
                            d += 1.5 / (s - z) ** 4 / t2
            return d
        h = 1e-5 * max(1.0, abs(s))
        return numerics.derivative(self.eval, s, n, h)

    def poles(self) -> list:
        """Known poles (location, order) relevant for tracing/termination."""
        out = [(p.location, p.b2_order) for p in self.model.singularities()]
        if self.kind != "q_leading":
            for x in self.model.real_coupling_zero_guesses():
                out.append((complex(x), 2))
        return out

    def langer_eligible_poles(self) -> list:
        return [(z, o) for z, o in self.poles() if o in (1, 2)]


def make_potential(
    model: FieldModel,
    kind: str,
    T: float,
    with_langer: bool = False,
) -> Potential:
    """Build a Potential; Langer poles are filled from the model metadata."""
    if kind not in ("q_plus", "q_minus", "q_leading"):
        raise ValueError(f"unknown potential kind {kind!r}")
    poles = ()
    if with_langer:
        probe = Potential(kind, model, T)
        poles = tuple(probe.langer_eligible_poles())
    return Potential(kind, model, T, with_langer, poles)


# --- propagation -----------------------------------------------------------


def _amplitude_rhs(model: FieldModel, T: float, include_geometric: bool):
    def rhs(s, y):
        ap, am, phi = y
        c = coupling_c(model, complex(s), T)
        om = frequency_omega(model, complex(s), T, include_geometric=include_geometric)
        e = cmath.exp(1j * phi)
        return np.array([c * e * am, -c.conjugate() / e * ap, om], dtype=complex)

    return rhs


def propagate_exact(
    model: FieldModel,
    T: float,
    s_start: float,
    s_end: float,
    init: AmplitudeState,
    tol: Tolerance = Tolerance(rel=1e-11, abs=1e-13),
    include_geometric: bool = True,
) -> AmplitudeState:
    """Integrate the amplitude system from s_start to s_end.

    The phase integral rides along as a third state component, so the
    oscillatory exponent is never interpolated.
    """
    if s_start >= s_end:
        raise ValueError("need s_start < s_end")
    rhs = _amplitude_rhs(model, T, include_geometric)
    y0 = np.array([init.a_plus, init.a_minus, init.phase_accumulator], dtype=complex)
    y = numerics.ode_propagate(rhs, s_start, s_end, y0, tol)
    return AmplitudeState(
        a_plus=complex(y[0]),
        a_minus=complex(y[1]),
        s=s_end,
        T=T,
        phase_accumulator=float(y[2].real),
    )


def _edge_series(model, T, s_edge, include_geometric=True, orders=2):
    """Alternating boundary series G1 - G2 + ... from integrating the tail
    integral of c* exp(-i Phi) by parts, with G1 = i cbar/omega and
    G_{k+1} = i G_k'/omega.  Multiplied by exp(-i phi(edge)) by the caller."""

    def om(z):
        return frequency_omega(model, z, T, include_geometric=include_geometric)

    g = lambda z: 1j * _coupling_bar(model, z, T) / om(z)
    total = 0.0j
    sign = 1.0
    for k in range(orders):
        total += sign * g(complex(s_edge))
        if k + 1 < orders:
            g_prev = g
            g = lambda z, gp=g_prev: 1j * numerics.derivative(gp, z, 1, 1e-4 * max(1.0, abs(z))) / om(z)
        sign = -sign
    return total


def _tail_residual_estimate(model, T, s_edge, include_geometric=True):
    """Size of the first neglected boundary term (order 3)."""

    def om(z):
        return frequency_omega(model, z, T, include_geometric=include_geometric)

    g1 = lambda z: 1j * _coupling_bar(model, z, T) / om(z)
    g2 = lambda z: 1j * numerics.derivative(g1, z, 1, 1e-4 * max(1.0, abs(z))) / om(z)
    h = 2e-3 * max(1.0, abs(s_edge))
    g3 = 1j * numerics.derivative(g2, complex(s_edge), 1, h) / om(complex(s_edge))
    return abs(g3)


def _abs_coupling_tail_estimate(model, T, cutoff):
    """Crude bound on integral of |c| beyond the cutoff from the local decay."""
    vals = []
    for x in (cutoff, 1.5 * cutoff, 2.25 * cutoff):
        vals.append(max(abs(coupling_c(model, complex(x), T)), abs(coupling_c(model, complex(-x), T))))
    c0, c1, _ = vals
    if c0 < 1e-300:
        return 0.0
    ratio = c1 / c0 if c0 > 0 else 0.0
    if ratio <= 0 or ratio >= 1.0:
        return math.inf
    # model |c| ~ c0 * (x/cutoff)^(-p): integral = c0*cutoff/(p-1)
    p = -math.log(ratio) / math.log(1.5)
    if p <= 1.0:
        return math.inf
    return 2.0 * c0 * cutoff / (p - 1.0)


def transition_probability_exact(
    model: FieldModel,
    T: float,
    cutoff: float,
    tol: Tolerance = Tolerance(rel=1e-11, abs=1e-13),
    include_geometric: bool = True,
    tail_correction: bool = True,
    tail_tol: float | None = None,
) -> tuple[float, float]:
    """P = |a-(+inf)|^2 with the system started purely in the upper level.

    The finite window [-cutoff, cutoff] is supplemented by boundary-series
    corrections at both edges (matched to the incoming/outgoing asymptotic
    solution), which is what makes algebraically decaying couplings usable
    at moderate cutoffs.  Raises CutoffTooSmall when the estimated remainder
    exceeds tail_tol.
    """
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    if tail_tol is None:
        tail_tol = max(tol.abs * 10.0, 1e-11)

    if tail_correction:
        resid = max(
            _tail_residual_estimate(model, T, +cutoff, include_geometric),
            _tail_residual_estimate(model, T, -cutoff, include_geometric),
        )
    else:
        resid = _abs_coupling_tail_estimate(model, T, cutoff)
    if not (resid <= tail_tol):
        raise CutoffTooSmall(
            f"tail bound {resid:.3e} exceeds {tail_tol:.3e} at cutoff {cutoff}",
            tail_bound=resid,
        )

    # phase anchor s' = 0: carry Phi(-S) = integral of omega from 0 to -S
    phi_left = -numerics.integrate_path(
        lambda z: frequency_omega(model, z, T, include_geometric=include_geometric),
        ComplexPath([complex(-cutoff), 0.0j]),
        Tolerance(rel=1e-12, abs=1e-14),
    )
    phi_left = float(phi_left.real)

    a_minus0 = 0.0j
    if tail_correction:
        a_minus0 = -cmath.exp(-1j * phi_left) * _edge_series(model, T, -cutoff, include_geometric)
    a_plus0 = math.sqrt(max(0.0, 1.0 - abs(a_minus0) ** 2))

    init = AmplitudeState(a_plus0, a_minus0, -cutoff, T, phi_left)
    out = propagate_exact(model, T, -cutoff, cutoff, init, tol, include_geometric)

    a_minus = out.a_minus
    if tail_correction:
        a_minus = a_minus + out.a_plus * cmath.exp(-1j * out.phase_accumulator) * _edge_series(
            model, T, cutoff, include_geometric
        )
    p = abs(a_minus) ** 2
    return p, cmath.phase(a_minus)


def transition_matrix(
    model: FieldModel,
    T: float,
    s: float,
    cutoff: float,
    tol: Tolerance = Tolerance(rel=1e-11, abs=1e-13),
) -> TransitionMatrix:
    """Propagator U(s,T) with columns from the basis initial conditions.

    U(-cutoff) is the identity by construction and U stays unitary for
    real s up to solver tolerance.
    """
    if s < -cutoff:
        raise ValueError("s must be >= -cutoff")
    cols = []
    for a0 in ((1.0 + 0.0j, 0.0j), (0.0j, 1.0 + 0.0j)):
        if s == -cutoff:
            cols.append(a0)
            continue
        init = AmplitudeState(a0[0], a0[1], -cutoff, T, 0.0)
        out = propagate_exact(model, T, -cutoff, s, init, tol)
        cols.append((out.a_plus, out.a_minus))
    return TransitionMatrix(
        u11=cols[0][0], u12=cols[1][0],
        u21=cols[0][1], u22=cols[1][1],
        s=s, T=T,
    )


# --- spinor-form oracle ------------------------------------------------------


def propagate_spinor(
    model: FieldModel,
    T: float,
    s_start: float,
    s_end: float,
    psi0: np.ndarray,
    tol: Tolerance = Tolerance(rel=1e-11, abs=1e-13),
) -> np.ndarray:
    """Direct integration of the spinor equation i psi'/T = (mu/2) B.sigma psi."""
    mu = model.mu

    def rhs(s, y):
        bx, by, bz = model.eval(complex(s), T)
        f = -0.5j * T * mu
        return np.array(
            [f * (bz * y[0] + (bx - 1j * by) * y[1]),
             f * ((bx + 1j * by) * y[0] - bz * y[1])],
            dtype=complex,
        )

    return numerics.ode_propagate(rhs, s_start, s_end, np.asarray(psi0, dtype=complex), tol)


def adiabatic_eigenvectors(model: FieldModel, s: float, T: float):
    """Instantaneous eigenvectors (upper, lower) of B.sigma at real s."""
    bx, by, bz = (v.real for v in model.eval(complex(s), T))
    r = math.hypot(bx, by)
    b = math.hypot(r, bz)
    theta = math.atan2(r, bz)
    phi = math.atan2(by, bx) if r > 0 else 0.0
    ct, st = math.cos(theta / 2.0), math.sin(theta / 2.0)
    e = cmath.exp(1j * phi)
    psi_plus = np.array([ct, st * e], dtype=complex)
    psi_minus = np.array([st, -ct * e], dtype=complex)
    return psi_plus, psi_minus


def spinor_amplitudes(model: FieldModel, s: float, T: float, psi: np.ndarray):
    """|projection| of a spinor on the instantaneous eigenbasis (phases dropped)."""
    psi_plus, psi_minus = adiabatic_eigenvectors(model, s, T)
    return (
        complex(np.vdot(psi_plus, psi)),
        complex(np.vdot(psi_minus, psi)),
    )


def real_coupling_zeros(model: FieldModel, lo: float, hi: float, T: float = 1.0) -> list[float]:
    """Zeros of |c| on a real interval (poles of the full potentials)."""
    zeros = [float(g) for g in model.real_coupling_zero_guesses() if lo < g < hi]

    def cmag(x):
        try:
            return abs(coupling_c(model, complex(x), T))
        except CoordinateSingularity:
            return math.nan

    samples = np.linspace(lo, hi, 801)
    vals = [cmag(x) for x in samples]
    for i in range(1, len(samples) - 1):
        trio = vals[i - 1 : i + 2]
        if not all(math.isfinite(v) for v in trio):
            continue
        if vals[i] < vals[i - 1] and vals[i] < vals[i + 1] and vals[i] < 1e-3:
            a, b = samples[i - 1], samples[i + 1]
            for _ in range(80):
                m1 = a + (b - a) / 3.0
                m2 = b - (b - a) / 3.0
                if cmag(m1) < cmag(m2):
                    b = m2
                else:
                    a = m1
            z = 0.5 * (a + b)
            if cmag(z) < 1e-10 and not any(abs(z - q) < 1e-6 for q in zeros):
                zeros.append(float(z))
    return sorted(zeros)
