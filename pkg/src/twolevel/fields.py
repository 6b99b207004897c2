"""Effective magnetic-field models B(s,T) and their asymptotic metadata.

Each model is an immutable object evaluable at complex s (analytic
continuation of the real-axis field), with closed-form first and second
derivatives and declared singularities of B^2 on the principal sheet.
mu is stored on the model; T is always a call argument so one instance
serves a whole T-sweep.

Conventions: the constant part of the field points along z and the varying
part lies in the x-z plane for the hyperbolic models; this choice fixes the
signs of the derived coupling and frequency.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateParams, FitFailure, ZeroField

__all__ = [
    "FieldModel",
    "Singularity",
    "AsymptoticData",
    "GapFunction",
    "make_nikitin",
    "make_sech",
    "make_tanh",
    "make_berry",
    "make_constant",
    "make_rational",
    "build_model",
    "asymptotic_data",
]

Vec3 = tuple[complex, complex, complex]


@dataclass(frozen=True)
class Singularity:
    """A declared singular point of B^2 on the principal sheet."""

    location: complex
    kind: str  # "pole" of B^2 (possibly a branch point of B itself)
    b2_order: int  # pole order of B^2 at the point


@dataclass(frozen=True)
class AsymptoticData:
    """Tail data of B(s) as Re s -> +/-inf (limit field + leading correction).

    For algebraic tails, B(s) ~ B0 + B1/|s|^alpha1 on each side with
    alpha1 > 1/2.  Exponential models carry a decay rate instead; constant
    fields have decay "none".
    """

    b0_plus: tuple[float, float, float]
    b0_minus: tuple[float, float, float]
    b1_plus: tuple[float, float, float]
    b1_minus: tuple[float, float, float]
    alpha1_plus: float | None
    alpha1_minus: float | None
    decay: str  # "algebraic" | "exponential" | "none"
    rate_plus: float | None = None
    rate_minus: float | None = None

    def __post_init__(self):
        if self.decay == "algebraic":
            if not (self.alpha1_plus > 0.5 and self.alpha1_minus > 0.5):
                raise ValueError("algebraic decay requires alpha1 > 1/2")


class FieldModel:
    """Base class; concrete models override the eval methods.

    All models here are already rescaled (t = sT), so the evaluated field is
    T-independent; T stays in the signature for models that need it.
    """

    name: str = "base"

    def __init__(self, mu: float, params: dict):
        if mu <= 0:
            raise DegenerateParams("mu must be positive")
        self.mu = float(mu)
        self.params = dict(params)

    def eval(self, s: complex, T: float) -> Vec3:
        raise NotImplementedError

    def eval_deriv(self, s: complex, T: float) -> Vec3:
        raise NotImplementedError

    def eval_deriv2(self, s: complex, T: float) -> Vec3:
        raise NotImplementedError

    def b2(self, s: complex, T: float) -> complex:
        bx, by, bz = self.eval(s, T)
        return bx * bx + by * by + bz * bz

    def b2_deriv(self, s: complex, T: float) -> complex:
        b = self.eval(s, T)
        db = self.eval_deriv(s, T)
        return 2.0 * sum(bi * dbi for bi, dbi in zip(b, db))

    def b2_deriv2(self, s: complex, T: float) -> complex:
        b = self.eval(s, T)
        db = self.eval_deriv(s, T)
        d2b = self.eval_deriv2(s, T)
        return 2.0 * sum(dbi * dbi + bi * d2bi for bi, dbi, d2bi in zip(b, db, d2b))

    def singularities(self) -> list[Singularity]:
        """Principal-sheet singularities of B^2 nearest the real axis."""
        return []

    def singularities_in(self, re_min, re_max, im_min, im_max) -> list[Singularity]:
        """All declared B^2 singularities inside a rectangle."""
        return [
            p
            for p in self.singularities()
            if re_min <= p.location.real <= re_max and im_min <= p.location.imag <= im_max
        ]

    @property
    def planar(self) -> bool:
        """True when B_y = 0 identically (no geometric term in omega)."""
        return False

    def coupling_closed_form(self, s: complex, T: float):
        """Closed-form c(s,T) where the generic polar formula degenerates."""
        return None

    def real_coupling_zero_guesses(self) -> list[float]:
        """Real-axis zeros of the coupling (poles of the full potential)."""
        return []

    def __repr__(self):
        ps = ", ".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{type(self).__name__}({ps}, mu={self.mu})"


class NikitinField(FieldModel):
    """B = (delta_eps/mu) * ((b^2+s^2)^(-3/2), 0, 1): dipole atom-atom model."""

    name = "nikitin"

    def __init__(self, b, delta_eps, mu):
        super().__init__(mu, {"b": float(b), "delta_eps": float(delta_eps)})
        self._b2 = float(b) ** 2
        self._g = float(delta_eps) / float(mu)

    def eval(self, s, T):
        w = self._b2 + s * s
        return (self._g * w ** -1.5, 0.0j, complex(self._g))

    def eval_deriv(self, s, T):
        w = self._b2 + s * s
        return (-3.0 * self._g * s * w ** -2.5, 0.0j, 0.0j)

    def eval_deriv2(self, s, T):
        w = self._b2 + s * s
        return (self._g * (15.0 * s * s * w ** -3.5 - 3.0 * w ** -2.5), 0.0j, 0.0j)

    def b2(self, s, T):
        w = self._b2 + s * s
        return self._g ** 2 * (1.0 + w ** -3)

    def b2_deriv(self, s, T):
        w = self._b2 + s * s
        return self._g ** 2 * (-6.0 * s * w ** -4)

    def b2_deriv2(self, s, T):
        w = self._b2 + s * s
        return self._g ** 2 * (48.0 * s * s * w ** -5 - 6.0 * w ** -4)

    def singularities(self):
        b = self.params["b"]
        return [
            Singularity(complex(0.0, b), "pole", 3),
            Singularity(complex(0.0, -b), "pole", 3),
        ]

    @property
    def planar(self):
        return True

    def real_coupling_zero_guesses(self):
        return [0.0]


class SechField(FieldModel):
    """B = (B1/cosh s, 0, B0): exponentially localized transverse pulse."""

    name = "sech"

    def __init__(self, B0, B1, mu):
        if B0 == B1:
            raise DegenerateParams("sech model requires B0 != B1")
        if B0 <= 0 or B1 <= 0:
            raise DegenerateParams("sech model requires B0, B1 > 0")
        super().__init__(mu, {"B0": float(B0), "B1": float(B1)})

    def eval(self, s, T):
        B0, B1 = self.params["B0"], self.params["B1"]
        return (B1 / cmath.cosh(s), 0.0j, complex(B0))

    def eval_deriv(self, s, T):
        B1 = self.params["B1"]
        ch = cmath.cosh(s)
        return (-B1 * cmath.sinh(s) / (ch * ch), 0.0j, 0.0j)

    def eval_deriv2(self, s, T):
        B1 = self.params["B1"]
        ch = cmath.cosh(s)
        sh = cmath.sinh(s)
        return (B1 * (2.0 * sh * sh - ch * ch) / ch ** 3, 0.0j, 0.0j)

    def b2(self, s, T):
        B0, B1 = self.params["B0"], self.params["B1"]
        ch = cmath.cosh(s)
        return B0 * B0 + B1 * B1 / (ch * ch)

    def b2_deriv(self, s, T):
        B1 = self.params["B1"]
        ch = cmath.cosh(s)
        return -2.0 * B1 * B1 * cmath.sinh(s) / ch ** 3

    def b2_deriv2(self, s, T):
        B1 = self.params["B1"]
        ch = cmath.cosh(s)
        sh = cmath.sinh(s)
        return B1 * B1 * (6.0 * sh * sh - 2.0 * ch * ch) / ch ** 4

    def singularities(self):
        # cosh s = 0 at s = i(pi/2 + k pi); B^2 has double poles there
        out = []
        for k in (-2, -1, 0, 1):
            y = math.pi / 2 + k * math.pi
            out.append(Singularity(complex(0.0, y), "pole", 2))
        return out

    @property
    def planar(self):
        return True

    def real_coupling_zero_guesses(self):
        return [0.0]


class TanhField(FieldModel):
    """B = B0 * (tanh s, 0, 1): monotone sweep between crossed limits."""

    name = "tanh"

    def __init__(self, B0, mu):
        if B0 <= 0:
            raise DegenerateParams("tanh model requires B0 > 0")
        super().__init__(mu, {"B0": float(B0)})

    def eval(self, s, T):
        B0 = self.params["B0"]
        return (B0 * cmath.tanh(s), 0.0j, complex(B0))

    def eval_deriv(self, s, T):
        B0 = self.params["B0"]
        ch = cmath.cosh(s)
        return (B0 / (ch * ch), 0.0j, 0.0j)

    def eval_deriv2(self, s, T):
        B0 = self.params["B0"]
        ch = cmath.cosh(s)
        return (-2.0 * B0 * cmath.sinh(s) / ch ** 3, 0.0j, 0.0j)

    def b2(self, s, T):
        B0 = self.params["B0"]
        ch = cmath.cosh(s)
        return B0 * B0 * cmath.cosh(2.0 * s) / (ch * ch)

    def b2_deriv(self, s, T):
        # d/ds [B0^2 (tanh^2 s + 1)] = 2 B0^2 tanh s / cosh^2 s
        B0 = self.params["B0"]
        ch = cmath.cosh(s)
        return 2.0 * B0 * B0 * cmath.tanh(s) / (ch * ch)

    def b2_deriv2(self, s, T):
        B0 = self.params["B0"]
        ch = cmath.cosh(s)
        th = cmath.tanh(s)
        return 2.0 * B0 * B0 * (1.0 - 2.0 * th * th) / (ch * ch)

    def singularities(self):
        out = []
        for k in (-2, -1, 0, 1):
            y = math.pi / 2 + k * math.pi
            out.append(Singularity(complex(0.0, y), "pole", 2))
        return out

    @property
    def planar(self):
        return True

    def coupling_closed_form(self, s, T):
        # polar formula is 0/0 at s = 0 where B passes through the z-axis;
        # the analytic continuation through it is smooth
        return -0.5 / cmath.cosh(2.0 * s)


class BerryField(FieldModel):
    """B = B0/(1+s^2) * (1, alpha*s, s^2): non-planar, geometric term active."""

    name = "berry"

    def __init__(self, B0, alpha, mu):
        if alpha <= math.sqrt(2.0):
            raise DegenerateParams("berry model requires alpha > sqrt(2)")
        if B0 <= 0:
            raise DegenerateParams("berry model requires B0 > 0")
        super().__init__(mu, {"B0": float(B0), "alpha": float(alpha)})

    def eval(self, s, T):
        B0, a = self.params["B0"], self.params["alpha"]
        u = B0 / (1.0 + s * s)
        return (u, a * s * u, s * s * u)

    def eval_deriv(self, s, T):
        B0, a = self.params["B0"], self.params["alpha"]
        w = 1.0 + s * s
        du = -2.0 * B0 * s / (w * w)
        u = B0 / w
        return (du, a * (u + s * du), 2.0 * s * u + s * s * du)

    def eval_deriv2(self, s, T):
        B0, a = self.params["B0"], self.params["alpha"]
        w = 1.0 + s * s
        u = B0 / w
        du = -2.0 * B0 * s / (w * w)
        d2u = B0 * (8.0 * s * s / w ** 3 - 2.0 / (w * w))
        return (
            d2u,
            a * (2.0 * du + s * d2u),
            2.0 * u + 4.0 * s * du + s * s * d2u,
        )

    def b2(self, s, T):
        B0, a = self.params["B0"], self.params["alpha"]
        w = 1.0 + s * s
        return B0 * B0 * (1.0 + a * a * s * s + s ** 4) / (w * w)

    def b2_deriv(self, s, T):
        B0, a = self.params["B0"], self.params["alpha"]
        w = 1.0 + s * s
        p = 1.0 + a * a * s * s + s ** 4
        dp = 2.0 * a * a * s + 4.0 * s ** 3
        return B0 * B0 * (dp * w - 4.0 * s * p) / w ** 3

    def b2_deriv2(self, s, T):
        B0, a = self.params["B0"], self.params["alpha"]
        w = 1.0 + s * s
        p = 1.0 + a * a * s * s + s ** 4
        dp = 2.0 * a * a * s + 4.0 * s ** 3
        d2p = 2.0 * a * a + 12.0 * s * s
        num = d2p * w * w - 6.0 * s * dp * w - 4.0 * p * w + 24.0 * s * s * p
        return B0 * B0 * num / w ** 4

    def singularities(self):
        return [
            Singularity(1j, "pole", 2),
            Singularity(-1j, "pole", 2),
        ]


class ConstantField(FieldModel):
    """s-independent field; the coupling vanishes identically."""

    name = "constant"

    def __init__(self, Bvec, mu):
        bx, by, bz = (float(v) for v in Bvec)
        if bx == by == bz == 0.0:
            raise ZeroField("constant field must be nonzero")
        super().__init__(mu, {"Bx": bx, "By": by, "Bz": bz})
        self._vec = (complex(bx), complex(by), complex(bz))

    def eval(self, s, T):
        return self._vec

    def eval_deriv(self, s, T):
        return (0.0j, 0.0j, 0.0j)

    def eval_deriv2(self, s, T):
        return (0.0j, 0.0j, 0.0j)

    @property
    def planar(self):
        return self.params["By"] == 0.0

    def coupling_closed_form(self, s, T):
        return 0.0j


def _polyval(coeffs, s):
    """Horner evaluation, coeffs highest degree first."""
    acc = 0.0j
    for c in coeffs:
        acc = acc * s + c
    return acc


def _polyder(coeffs):
    n = len(coeffs) - 1
    return [c * (n - i) for i, c in enumerate(coeffs[:-1])] or [0.0]


class RationalField(FieldModel):
    """Componentwise rational field B_i = P_i(s)/Q_i(s) for custom tails.

    An optional frame rotation about the y-axis keeps the field off the
    z-axis on the real line (the rotation leaves every transition
    probability invariant).
    """

    name = "rational"

    def __init__(self, components, mu, rotation=0.0):
        # components: dict axis -> (num_coeffs, den_coeffs), highest degree first
        super().__init__(
            mu,
            {
                "rotation": float(rotation),
                **{
                    f"{ax}_{part}": tuple(float(c) for c in coeffs)
                    for ax, (num, den) in components.items()
                    for part, coeffs in (("num", num), ("den", den))
                },
            },
        )
        self._num = {}
        self._den = {}
        for ax in "xyz":
            num, den = components.get(ax, ((0.0,), (1.0,)))
            self._num[ax] = [complex(c) for c in num]
            self._den[ax] = [complex(c) for c in den]
        self._rot = float(rotation)

    def _raw(self, s, der=0):
        out = []
        for ax in "xyz":
            p, q = self._num[ax], self._den[ax]
            if der == 0:
                out.append(_polyval(p, s) / _polyval(q, s))
            elif der == 1:
                P, Q = _polyval(p, s), _polyval(q, s)
                dP, dQ = _polyval(_polyder(p), s), _polyval(_polyder(q), s)
                out.append((dP * Q - P * dQ) / (Q * Q))
            else:
                P, Q = _polyval(p, s), _polyval(q, s)
                dP, dQ = _polyval(_polyder(p), s), _polyval(_polyder(q), s)
                d2P, d2Q = _polyval(_polyder(_polyder(p)), s), _polyval(_polyder(_polyder(q)), s)
                out.append(
                    d2P / Q
                    - 2.0 * dP * dQ / (Q * Q)
                    - P * d2Q / (Q * Q)
                    + 2.0 * P * dQ * dQ / Q ** 3
                )
        return tuple(out)

    def _rotate(self, v):
        if self._rot == 0.0:
            return v
        c, sn = math.cos(self._rot), math.sin(self._rot)
        x, y, z = v
        return (c * x + sn * z, y, -sn * x + c * z)

    def eval(self, s, T):
        return self._rotate(self._raw(s, 0))

    def eval_deriv(self, s, T):
        return self._rotate(self._raw(s, 1))

    def eval_deriv2(self, s, T):
        return self._rotate(self._raw(s, 2))

    def singularities(self):
        out = []
        seen = []
        for ax in "xyz":
            den = self._den[ax]
            if len(den) > 1:
                for r in np.roots(den):
                    r = complex(r)
                    if not any(abs(r - q) < 1e-9 for q in seen):
                        seen.append(r)
                        mult = sum(1 for rr in np.roots(den) if abs(complex(rr) - r) < 1e-9)
                        out.append(Singularity(r, "pole", 2 * mult))
        return out

    @property
    def planar(self):
        return all(c == 0 for c in self._num["y"])


def make_nikitin(b: float, delta_eps: float, mu: float = 1.0) -> FieldModel:
    if b <= 0 or delta_eps <= 0:
        raise DegenerateParams("nikitin model requires b, delta_eps > 0")
    return NikitinField(b, delta_eps, mu)


def make_sech(B0: float, B1: float, mu: float = 1.0) -> FieldModel:
    return SechField(B0, B1, mu)


def make_tanh(B0: float, mu: float = 1.0) -> FieldModel:
    return TanhField(B0, mu)


def make_berry(B0: float, alpha: float, mu: float = 1.0) -> FieldModel:
    return BerryField(B0, alpha, mu)


def make_constant(Bvec, mu: float = 1.0) -> FieldModel:
    return ConstantField(Bvec, mu)


def make_rational(components, mu: float = 1.0, rotation: float = 0.0) -> FieldModel:
    """components: dict axis -> (numerator coeffs, denominator coeffs).

    If the field touches the z-axis on the real line, retries with small
    fixed frame rotations until the polar angles are defined everywhere.
    """
    model = RationalField(components, mu, rotation)
    for rot in (rotation, 0.15, 0.31):
        model = RationalField(components, mu, rot)
        samples = np.linspace(-25.0, 25.0, 301)
        ok = True
        for x in samples:
            bx, by, bz = model.eval(complex(x), 1.0)
            b2 = abs(bx) ** 2 + abs(by) ** 2 + abs(bz) ** 2
            if b2 == 0:
                raise ZeroField(f"rational field vanishes at s = {x}")
            if (abs(bx) ** 2 + abs(by) ** 2) / b2 < 1e-16:
                ok = False
                break
        if ok:
            return model
    raise DegenerateParams("rational field stays on the z-axis; rotation failed")


_REGISTRY = {
    "nikitin": lambda p, mu: make_nikitin(p["b"], p["delta_eps"], mu),
    "sech": lambda p, mu: make_sech(p["B0"], p["B1"], mu),
    "tanh": lambda p, mu: make_tanh(p["B0"], mu),
    "berry": lambda p, mu: make_berry(p["B0"], p["alpha"], mu),
    "constant": lambda p, mu: make_constant((p["Bx"], p["By"], p["Bz"]), mu),
    "rational": lambda p, mu: make_rational(p["components"], mu, p.get("rotation", 0.0)),
}


def build_model(name: str, params: dict, mu: float = 1.0) -> FieldModel:
    """Construct a model by registry name (the config-file entry point)."""
    if name not in _REGISTRY:
        raise DegenerateParams(f"unknown model '{name}' (have {sorted(_REGISTRY)})")
    return _REGISTRY[name](params, mu)


def limit_field(model: FieldModel, sign: int, T: float = 1.0):
    """Real limit vector B(+-inf); falls back to a nearer probe when the
    hyperbolic models overflow at the far one."""
    for probe in (1e7, 300.0, 60.0):
        try:
            b = model.eval(complex(sign * probe), T)
            return tuple(v.real for v in b)
        except OverflowError:
            continue
    raise OverflowError("field evaluation overflows even at |s| = 60")


@dataclass(frozen=True)
class GapFunction:
    """Level gap mu*sqrt(B^2) with the positive branch fixed on the real axis."""

    model: FieldModel
    branch_anchor: float = 0.0

    def squared(self, s: complex, T: float) -> complex:
        return self.model.mu ** 2 * self.model.b2(s, T)

    def eval_real(self, x: float, T: float) -> float:
        g2 = self.squared(complex(x), T)
        if g2.real <= 0:
            raise ValueError(f"gap^2 not positive at real s = {x}")
        return math.sqrt(g2.real)


def asymptotic_data(model: FieldModel, s_probe: float = 1e7) -> AsymptoticData:
    """Fit the tail B(s) ~ B0 + B1/|s|^alpha on each side of the real axis.

    Works numerically: estimates the limit field far out, log-log fits the
    residual decay, snaps alpha to a small rational, and validates the
    remainder is o(|s|^-alpha).  Exponential models come back flagged with
    a rate instead of (B1, alpha).
    """
    samples = np.geomspace(16.0, 2000.0, 14)

    def side(sign):
        b0 = np.array(limit_field(model, sign))
        resid = []
        for x in samples:
            b = np.array([v.real for v in model.eval(complex(sign * x), 1.0)])
            resid.append(b - b0)
        resid = np.array(resid)
        mags = np.linalg.norm(resid, axis=1)
        scale = 1.0 + np.linalg.norm(b0)
        if mags[0] < 1e-12 * scale:
            return b0, np.zeros(3), None, "none", None
        # compare algebraic vs exponential decay of the residual magnitude
        lm = np.log(np.maximum(mags, 1e-300))
        A_alg = np.vstack([np.ones_like(samples), np.log(samples)]).T
        A_exp = np.vstack([np.ones_like(samples), samples]).T
        mask = mags > 1e-250
        coef_a, res_a, *_ = np.linalg.lstsq(A_alg[mask], lm[mask], rcond=None)
        coef_e, res_e, *_ = np.linalg.lstsq(A_exp[mask], lm[mask], rcond=None)
        sse_a = float(res_a[0]) if len(res_a) else 0.0
        sse_e = float(res_e[0]) if len(res_e) else 0.0
        if mags[-1] < 1e-200 or sse_e < sse_a:
            rate = -coef_e[1]
            return b0, np.zeros(3), None, "exponential", float(rate)
        alpha_hat = -coef_a[1]
        alpha = _snap_rational(alpha_hat)
        if alpha is None or alpha <= 0.5:
            raise FitFailure(f"tail exponent fit {alpha_hat:.4f} not a usable rational")
        b1 = np.mean(resid[-5:] * samples[-5:, None] ** alpha, axis=0)
        # remainder must vanish relative to the fitted order
        rem_near = np.linalg.norm(resid[2] - b1 / samples[2] ** alpha) * samples[2] ** alpha
        rem_far = np.linalg.norm(resid[-1] - b1 / samples[-1] ** alpha) * samples[-1] ** alpha
        if rem_far > 0.5 * max(rem_near, 1e-12 * scale) and rem_far > 1e-9 * scale:
            raise FitFailure("tail remainder is not o(|s|^-alpha)")
        return b0, b1, float(alpha), "algebraic", None

    b0p, b1p, ap, kindp, ratep = side(+1)
    b0m, b1m, am, kindm, ratem = side(-1)
    if kindp != kindm:
        raise FitFailure(f"tail kinds differ: +{kindp} vs -{kindm}")
    return AsymptoticData(
        b0_plus=tuple(b0p),
        b0_minus=tuple(b0m),
        b1_plus=tuple(b1p),
        b1_minus=tuple(b1m),
        alpha1_plus=ap,
        alpha1_minus=am,
        decay=kindp,
        rate_plus=ratep,
        rate_minus=ratem,
    )


def _snap_rational(x: float, max_den: int = 4, tol: float = 0.05):
    """Nearest p/q with q <= max_den, or None if nothing is close."""
    best = None
    for q in range(1, max_den + 1):
        p = round(x * q)
        if p <= 0:
            continue
        cand = p / q
        if abs(cand - x) < tol and (best is None or abs(cand - x) < abs(best - x)):
            best = cand
    return best
