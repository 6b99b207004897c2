"""Stokes-graph engine: turning points, line tracing, actions, chi series.

A Stokes line through a simple turning point s_i of the (Langer-corrected)
potential solves Im W(s) = 0, with W the action integral of sqrt(q) from s_i;
anti-Stokes lines solve Re W = 0.  Lines are traced by an arc-length predictor
along the direction that keeps dW real (resp. imaginary) plus a Newton
corrector transverse to the line.  All square-root branch decisions are
path-local: the running value of sqrt(q) (and, for the full potentials, of
sqrt(B^2) inside q) is continued by nearest-value selection; no global cuts
are laid out.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .dynamics import Potential
from .errors import (
    BranchJumpDetected,
    NearSingularity,
    NearTurningPoint,
    NoCanonicalPathFound,
    NoLinkingLine,
    NonCanonicalPath,
    StallDetected,
)
from .numerics import ComplexPath, Rectangle

__all__ = [
    "TurningPoint",
    "StokesLine",
    "StokesGraph",
    "Sector",
    "Termination",
    "TraceOptions",
    "langer_delta",
    "find_turning_points",
    "trace_stokes_line",
    "build_stokes_graph",
    "closest_stokes_line",
    "action_W",
    "omega_correction",
    "chi_series",
    "canonical_path",
    "sector_at",
    "graph_csv_rows",
    "graph_svg",
]


def langer_delta(poles):
    """delta(s) = sum of 1/(4 (s-z_k)^2) over first/second-order poles.

    An empty pole list gives the zero function.
    """
    locs = []
    for p in poles or ():
        if isinstance(p, tuple):
            z, order = p[0], (p[1] if len(p) > 1 else 2)
            if order in (1, 2):
                locs.append(complex(z))
        else:
            locs.append(complex(p))

    def delta(s: complex) -> complex:
        acc = 0.0j
        for z in locs:
            d = s - z
            acc += 1.0 / (4.0 * d * d)
        return acc

    return delta


@dataclass(frozen=True)
class TurningPoint:
    location: complex
    multiplicity: int = 1
    source: str = "leading_potential"  # or "full_potential"


@dataclass(frozen=True)
class Termination:
    kind: str  # "pole" | "infinity" | "turning_point" | "max_length"
    data: object = None  # pole location, exit side, or turning-point index


@dataclass
class StokesLine:
    origin_index: int
    direction_index: int
    kind: str  # "stokes" | "anti_stokes"
    points: np.ndarray      # complex polyline, starting near the origin root
    w_values: np.ndarray    # W along the points (W = 0 at the origin root)
    sqrt_q: np.ndarray      # branch-tracked sqrt(q) along the points
    termination: Termination
    max_im_w_defect: float = 0.0
    crossings: tuple = ()   # turning-point indices (assembled chains only)

    @property
    def w_along(self):
        return self.w_values.real

    def min_abs_im(self) -> float:
        return float(np.min(np.abs(self.points.imag)))


@dataclass(frozen=True)
class Sector:
    anchor: object          # complex pole location or "inf:<side>"
    seed: complex
    sign_sigma: int
    bounding_line_ids: tuple = ()


@dataclass(frozen=True)
class TraceOptions:
    step: float = 0.02
    trace_tol: float = 1e-8
    max_arc: float = 60.0
    start_offset: float = 2e-4
    collide_radius: float = 6e-3
    pole_radius: float = 1e-3
    seed_density: int = 28
    root_tol: float = 1e-11
    dedupe_radius: float | None = None
    trace_anti_stokes: bool = False
    max_steps: int = 40000


@dataclass
class StokesGraph:
    potential: Potential
    region: Rectangle
    turning_points: list
    poles: list             # (location, order)
    lines: list
    options: TraceOptions
    closest_line: StokesLine | None = None
    sectors: list = field(default_factory=list)

    def crossing_points(self) -> list[complex]:
        if self.closest_line is None:
            return []
        return [self.turning_points[i].location for i in self.closest_line.crossings]


def _sqrt_cont(value: complex, ref: complex | None) -> complex:
    r = cmath.sqrt(value)
    if ref is None:
        return r
    return r if abs(r - ref) <= abs(-r - ref) else -r


class _PotOnPath:
    """Potential evaluator that threads the internal sqrt(B^2) branch along
    the evaluation sequence (no-op for the single-valued leading kind)."""

    def __init__(self, pot: Potential):
        self.pot = pot
        self.b2_ref = None

    def __call__(self, s: complex) -> complex:
        q, self.b2_ref = self.pot.eval_continued(s, self.b2_ref)
        return q


def find_turning_points(
    pot: Potential,
    region: Rectangle,
    options: TraceOptions = TraceOptions(),
) -> list[TurningPoint]:
    """Roots of the potential in the region, classified by argument winding."""
    dedupe = options.dedupe_radius or 1e-6 * region.diagonal
    roots = numerics.find_roots(
        pot.eval,
        region,
        seed_density=options.seed_density,
        abs_tol=options.root_tol,
        dedupe_radius=dedupe,
    )
    poles = pot.poles()
    out = []
    for r in roots:
        if any(abs(r - z) < 10.0 * options.pole_radius for z, _ in poles):
            continue
        mult = _winding_multiplicity(pot, r, radius=max(20.0 * dedupe, 1e-5))
        source = "leading_potential" if pot.kind == "q_leading" else "full_potential"
        out.append(TurningPoint(r, mult, source))
    return out


def _winding_multiplicity(pot, root, radius, n=48):
    qp = _PotOnPath(pot)
    prev = None
    total = 0.0
    for k in range(n + 1):
        th = 2.0 * math.pi * k / n
        a = cmath.phase(qp(root + radius * cmath.exp(1j * th)))
        if prev is not None:
            d = a - prev
            while d > math.pi:
                d -= 2.0 * math.pi
            while d < -math.pi:
                d += 2.0 * math.pi
            total += d
        prev = a
    return max(1, int(round(total / (2.0 * math.pi))))


_GL2_NODES = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


def _w_step(qp: _PotOnPath, s0: complex, s1: complex, sq_ref: complex):
    """Integral of sqrt(q) over one straight step (2-point Gauss) with branch
    continuity; returns (dW, sqrt_q at s1)."""
    ds = s1 - s0
    w = sq_ref
    vals = []
    for t in _GL2_NODES:
        w = _sqrt_cont(qp(s0 + t * ds), w)
        vals.append(w)
    sq_end = _sqrt_cont(qp(s1), w)
    dw = 0.5 * ds * (vals[0] + vals[1])
    return dw, sq_end


def trace_stokes_line(
    pot: Potential,
    tp: TurningPoint,
    direction_index: int,
    kind: str = "stokes",
    options: TraceOptions = TraceOptions(),
    all_tps: list | None = None,
    region: Rectangle | None = None,
) -> StokesLine:
    """Trace one of the three lines emanating from a simple turning point.

    Terminates on pole proximity, collision with another turning point,
    region exit, or the arc budget.
    """
    if tp.multiplicity != 1:
        raise StallDetected(f"turning point {tp.location} is not simple")
    if kind not in ("stokes", "anti_stokes"):
        raise ValueError("kind must be 'stokes' or 'anti_stokes'")
    region = region or Rectangle(-10.0, 10.0, -10.0, 10.0)
    tps = all_tps if all_tps is not None else [tp]
    poles = pot.poles()
    qp = _PotOnPath(pot)

    a = pot.deriv(tp.location, 1)
    if abs(a) < 1e-12:
        raise StallDetected(f"q' vanishes at {tp.location}: higher-order root")
    theta = (2.0 * math.pi * direction_index - cmath.phase(a)) / 3.0
    if kind == "anti_stokes":
        theta += math.pi / 3.0

    r0 = options.start_offset
    s = tp.location + r0 * cmath.exp(1j * theta)
    sq = _sqrt_cont(qp(s), None)
    d_trial = sq * cmath.exp(1j * theta)
    if kind == "stokes":
        if abs(d_trial.imag) > 0.5 * abs(d_trial.real):
            raise BranchJumpDetected(f"index {direction_index} is not a Stokes direction")
        sign = 1.0 if d_trial.real > 0 else -1.0
    else:
        if abs(d_trial.real) > 0.5 * abs(d_trial.imag):
            raise BranchJumpDetected(f"index {direction_index} is not an anti-Stokes direction")
        sign = 1.0 if d_trial.imag > 0 else -1.0

    # W at the start point from the local linear model q ~ a (s - tp),
    # on the branch matching the sqrt(q) value actually in use
    w_loc = (2.0 / 3.0) * cmath.sqrt(a) * r0 ** 1.5 * cmath.exp(1.5j * theta)
    d_loc = 1.5 * w_loc / r0  # dW/dr of the local model
    d_use = sq * cmath.exp(1j * theta)
    w_cur = w_loc if abs(d_loc - d_use) <= abs(d_loc + d_use) else -w_loc

    def resid(wv):
        return wv.imag if kind == "stokes" else wv.real

    pts = [s]
    ws = [w_cur]
    sqs = [sq]
    arc = 0.0
    armed = False
    defect = abs(resid(w_cur))
    termination = Termination("max_length")

    for _ in range(options.max_steps):
        d_tp = min(
            (abs(s - t.location) for t in tps if t.location != tp.location),
            default=math.inf,
        )
        d_pole = min((abs(s - z) for z, _ in poles), default=math.inf)
        d_origin = abs(s - tp.location)
        h = min(options.step, 0.3 * d_tp + 1e-4, 0.3 * d_pole + 1e-4, 0.5 * d_origin + 1e-4)

        tangent = sign * (sq.conjugate() / abs(sq))
        if kind == "anti_stokes":
            tangent *= 1j
        sq_mid = _sqrt_cont(qp(s + 0.5 * h * tangent), sq)
        tangent = sign * (sq_mid.conjugate() / abs(sq_mid))
        if kind == "anti_stokes":
            tangent *= 1j
        s_new = s + h * tangent
        dw, sq_new = _w_step(qp, s, s_new, sq)
        w_new = w_cur + dw

        for _ in range(6):
            err = resid(w_new)
            if abs(err) <= 0.2 * options.trace_tol * (1.0 + abs(w_new)):
                break
            dw_corr = (-1j * err) if kind == "stokes" else complex(-err)
            s_try = s_new + dw_corr / sq_new
            dw2, sq_try = _w_step(qp, s_new, s_try, sq_new)
            s_new, sq_new, w_new = s_try, sq_try, w_new + dw2

        if abs(sq_new + sq) < 0.3 * abs(sq) and abs(sq) > 1e-8:
            raise BranchJumpDetected(f"sqrt(q) branch flip near s = {s_new}")

        arc += abs(s_new - s)
        s, w_cur, sq = s_new, w_new, sq_new
        pts.append(s)
        ws.append(w_cur)
        sqs.append(sq)
        defect = max(defect, abs(resid(w_cur)))

        if not armed and abs(s - tp.location) > 3.0 * options.collide_radius:
            armed = True

        hit = None
        for i, t in enumerate(tps):
            if t.location == tp.location and not armed:
                continue
            if abs(s - t.location) < options.collide_radius:
                hit = i
                break
        if hit is not None:
            pts[-1] = tps[hit].location
            termination = Termination("turning_point", hit)
            break
        p_hit = next(
            (z for z, _ in poles if abs(s - z) < max(options.pole_radius, 1.5 * h)),
            None,
        )
        if p_hit is not None:
            termination = Termination("pole", p_hit)
            break
        if not region.contains(s):
            termination = Termination("infinity", _exit_side(s, region))
            break
        if arc > options.max_arc:
            break

    return StokesLine(
        origin_index=-1,
        direction_index=direction_index,
        kind=kind,
        points=np.array(pts, dtype=complex),
        w_values=np.array(ws, dtype=complex),
        sqrt_q=np.array(sqs, dtype=complex),
        termination=termination,
        max_im_w_defect=defect,
    )


def _exit_side(s: complex, region: Rectangle) -> str:
    over = {
        "left": region.re_min - s.real,
        "right": s.real - region.re_max,
        "bottom": region.im_min - s.imag,
        "top": s.imag - region.im_max,
    }
    return max(over, key=over.get)


def build_stokes_graph(
    pot: Potential,
    region: Rectangle,
    options: TraceOptions = TraceOptions(),
) -> StokesGraph:
    """Locate turning points, trace all their lines, and assemble the graph."""
    tps = find_turning_points(pot, region, options)
    poles = [(z, o) for z, o in pot.poles() if region.contains(z, margin=0.5)]
    lines = []
    kinds = ("stokes", "anti_stokes") if options.trace_anti_stokes else ("stokes",)
    for i, tp in enumerate(tps):
        if tp.multiplicity != 1:
            continue
        for kind in kinds:
            for k in range(3):
                line = trace_stokes_line(pot, tp, k, kind, options, all_tps=tps, region=region)
                line.origin_index = i
                lines.append(line)
    graph = StokesGraph(
        potential=pot,
        region=region,
        turning_points=tps,
        poles=poles,
        lines=lines,
        options=options,
    )
    try:
        graph.closest_line = closest_stokes_line(graph)
    except NoLinkingLine:
        graph.closest_line = None
    _attach_strip_sectors(graph)
    return graph


def closest_stokes_line(graph: StokesGraph) -> StokesLine:
    """Assembled Stokes line linking the left and right infinities that comes
    nearest the real axis; its turning points are the complex level crossings."""
    edges = []
    for line in graph.lines:
        if line.kind != "stokes":
            continue
        a = ("tp", line.origin_index)
        t = line.termination
        if t.kind == "infinity":
            b = ("inf", t.data)
        elif t.kind == "turning_point":
            b = ("tp", t.data)
        elif t.kind == "pole":
            b = ("pole", str(t.data))
        else:
            b = ("dead", id(line))
        edges.append((a, b, line))

    adj = {}
    for a, b, line in edges:
        adj.setdefault(a, []).append((b, line, True))
        adj.setdefault(b, []).append((a, line, False))

    start, goal = ("inf", "left"), ("inf", "right")
    chains = []

    def dfs(node, visited_tps, acc):
        if node == goal and acc:
            chains.append(list(acc))
            return
        if node[0] != "tp" and acc:
            return
        used = {id(l) for l, _ in acc}
        for nxt, line, forward in adj.get(node, []):
            if id(line) in used:
                continue
            if nxt[0] == "tp" and nxt[1] in visited_tps:
                continue
            vis = visited_tps | ({nxt[1]} if nxt[0] == "tp" else set())
            acc.append((line, forward))
            dfs(nxt, vis, acc)
            acc.pop()

    dfs(start, set(), [])
    if not chains:
        raise NoLinkingLine("no Stokes line links the left and right infinities")

    best = None
    for chain in chains:
        pts, wvals, sqvals, crossings = _assemble_chain(chain)
        min_im = float(np.min(np.abs(pts.imag)))
        mean_im = float(np.mean(pts.imag))
        key = (round(min_im, 9), 0.0 if mean_im > 0 else 1.0)
        if best is None or key < best[0]:
            best = (key, pts, wvals, sqvals, crossings, chain)
    _, pts, wvals, sqvals, crossings, chain = best
    return StokesLine(
        origin_index=chain[0][0].origin_index,
        direction_index=-1,
        kind="stokes",
        points=pts,
        w_values=wvals,
        sqrt_q=sqvals,
        termination=Termination("infinity", "right"),
        max_im_w_defect=max(l.max_im_w_defect for l, _ in chain),
        crossings=tuple(crossings),
    )


def _assemble_chain(chain):
    """Concatenate traced segments into one polyline with stitched W.

    Each traced line's W starts near zero at its origin root, so continuity
    across a junction is restored with a per-segment offset.
    """
    pts: list[complex] = []
    wv: list[complex] = []
    sq: list[complex] = []
    crossings: list[int] = []
    offset = 0.0j
    for line, forward in chain:
        p = line.points if forward else line.points[::-1]
        w = line.w_values if forward else line.w_values[::-1]
        q = line.sqrt_q if forward else line.sqrt_q[::-1]
        seg_w = w - w[0] + offset
        root_idx = line.origin_index
        if forward:
            crossings.append(root_idx)
        start = 1 if pts and abs(p[0] - pts[-1]) < 1e-6 else 0
        pts.extend(p[start:].tolist())
        wv.extend(seg_w[start:].tolist())
        sq.extend(q[start:].tolist())
        if not forward:
            crossings.append(root_idx)
        offset = wv[-1]
    if pts[0].real > pts[-1].real:
        pts, wv, sq = pts[::-1], wv[::-1], sq[::-1]
        crossings = crossings[::-1]
    seen = set()
    ordered = [c for c in crossings if not (c in seen or seen.add(c))]
    return np.asarray(pts), np.asarray(wv), np.asarray(sq), ordered


# --- actions and the fundamental-solution series -----------------------------


def action_W(
    pot: Potential,
    frm: complex,
    to: complex,
    path: ComplexPath | None = None,
    branch_anchor: complex | None = None,
    n_min: int = 64,
    singularity_margin: float = 1e-6,
) -> complex:
    """Action integral of sqrt(q) from `frm` to `to` with continuous branch.

    The branch starts at `branch_anchor` (a sqrt(q) value near the start;
    principal by default) and is continued step by step.  Value depends only
    on the path's homotopy class in the punctured plane.
    """
    if path is None:
        path = ComplexPath([frm, to])
    qp = _PotOnPath(pot)
    total = 0.0j
    sq_ref = branch_anchor
    for a, b in path.segments():
        n = max(n_min, int(48.0 * abs(b - a)))
        # cosine grading clusters nodes at both ends, where sqrt(q) may have
        # a root-type cusp (turning-point endpoints)
        us = np.linspace(0.0, 1.0, n + 1)
        ts = 0.5 * (1.0 - np.cos(math.pi * us))
        prev_s = a
        prev_sq = _sqrt_cont(qp(a), sq_ref)
        if abs(prev_sq) ** 2 < singularity_margin ** 2 and abs(a - frm) > 1e-12:
            raise NearSingularity(f"|q| ~ 0 at path point {a}")
        for t in ts[1:]:
            s_here = a + t * (b - a)
            dw, sq_here = _w_step(qp, prev_s, s_here, prev_sq)
            if abs(sq_here + prev_sq) < 0.2 * abs(prev_sq) and abs(prev_sq) > 1e-7:
                raise BranchJumpDetected(f"branch flip near {s_here}")
            total += dw
            prev_s, prev_sq = s_here, sq_here
        sq_ref = prev_sq
    return total


def omega_correction(pot: Potential, s: complex, margin: float = 1e-4) -> complex:
    """Integrand Omega of the chi series:

        Omega = delta/sqrt(q) - q''/(4 q^(3/2)) + 5 q'^2 / (16 q^(5/2)).

    Langer poles make Omega vanish linearly at the corresponding second-order
    poles; near turning points it blows up and NearSingularity is raised.
    """
    q = pot.eval(s)
    if abs(q) < margin ** 2:
        raise NearSingularity(f"too close to a turning point at {s}")
    for z, order in pot.poles():
        if abs(s - z) < 1e-3 and not pot.with_langer:
            raise NearSingularity(f"too close to the pole at {z}")
    d1 = pot.deriv(s, 1)
    d2 = pot.deriv(s, 2)
    rq = cmath.sqrt(q)
    delta = langer_delta(pot.langer_poles if pot.with_langer else ())(s)
    return delta / rq - 0.25 * d2 / (q * rq) + (5.0 / 16.0) * d1 * d1 / (q * q * rq)


def chi_series(
    pot: Potential,
    sector: Sector,
    s: complex,
    T: float,
    order: int,
    path: ComplexPath,
    n_samples: int = 1600,
    canonical_tol: float = 1e-7,
    tp_margin: float = 5e-3,
) -> complex:
    """Truncated fundamental-solution series chi along a canonical path.

    The path runs from deep inside the sector toward s (the path's end must
    be s); order 0 returns 1, orders 1 and 2 add the iterated integrals with
    kernel Omega and the oscillatory (1 - exp(-2 i sigma T dW)) factors.
    Canonicality (sigma * Im W non-increasing toward the target) is verified
    pointwise and NonCanonicalPath reports the first violation.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    if abs(path.end - s) > 1e-9:
        raise ValueError("path must end at the evaluation point s")
    if order == 0:
        return 1.0 + 0.0j
    sigma = float(sector.sign_sigma)

    pts = path.sample(max(8, n_samples // max(1, len(path.segments()))))
    qp = _PotOnPath(pot)
    sq = np.empty(len(pts), dtype=complex)
    ref = None
    for i, z in enumerate(pts):
        q = qp(z)
        if abs(q) < tp_margin ** 2:
            raise NearTurningPoint(f"path passes within margin of a root near {z}")
        ref = _sqrt_cont(q, ref)
        sq[i] = ref

    # cumulative W by trapezoid on the samples (differences only are used)
    dz = np.diff(pts)
    w = np.concatenate(([0.0j], np.cumsum(0.5 * (sq[:-1] + sq[1:]) * dz)))

    dimw = sigma * np.diff(w.imag)
    slack = canonical_tol * (1.0 + np.abs(w.real[1:]))
    bad = np.where(dimw > slack)[0]
    if bad.size:
        i = int(bad[0])
        raise NonCanonicalPath(
            f"sigma*Im W increases by {dimw[i]:.3e} at sample {i}",
            violation=(i, float(dimw[i])),
        )

    om_vals = np.empty(len(pts), dtype=complex)
    for i, z in enumerate(pts):
        om_vals[i] = omega_correction(pot, z, margin=tp_margin)

    # trapezoid weights on the (generally nonuniform) samples
    wts = np.zeros(len(pts), dtype=complex)
    wts[:-1] += 0.5 * dz
    wts[1:] += 0.5 * dz

    pref = -sigma / (2j * T)
    w_end = w[-1]
    f_end = 1.0 - np.exp(-2j * sigma * T * (w_end - w))
    chi = 1.0 + pref * np.sum(wts * om_vals * f_end)
    if order == 2:
        # inner integral J(xi1) = int_{start}^{xi1} Omega (1 - e^{-2 i sigma T (W1-W2)})
        expw = np.exp(2j * sigma * T * w)
        g = wts * om_vals
        # sum_{j<=i} g_j (1 - e^{-2 i sigma T (w_i - w_j)})
        cum_g = np.cumsum(g)
        cum_ge = np.cumsum(g * expw)
        inner = cum_g - np.exp(-2j * sigma * T * w) * cum_ge
        chi += pref ** 2 * np.sum(wts * om_vals * f_end * inner)
    return complex(chi)


def canonical_path(
    graph: StokesGraph,
    from_sector: Sector,
    to: complex,
    step: float = 0.05,
    max_steps: int = 4000,
    canonical_tol: float = 1e-7,
) -> ComplexPath:
    """Polyline from the sector seed to `to` along which sigma*Im W never
    increases, built by blending anti-Stokes descent with progress toward
    the target."""
    pot = graph.potential
    sigma = float(from_sector.sign_sigma)
    qp = _PotOnPath(pot)
    s = from_sector.seed
    pts = [s]
    sq = _sqrt_cont(qp(s), None)
    for _ in range(max_steps):
        if abs(to - s) <= step:
            pts.append(to)
            break
        d_target = (to - s) / abs(to - s)
        # Im(sqrt(q) * d) is the rate of change of Im W in direction d
        rate = (sq * d_target).imag
        if sigma * rate <= canonical_tol * abs(sq):
            d = d_target
        else:
            # steepest descent of sigma*Im W: d = -i sigma conj(sq)/|sq|
            d_desc = -1j * sigma * sq.conjugate() / abs(sq)
            # blend toward target as long as monotone
            d = d_desc
            for lam in (0.8, 0.6, 0.4, 0.2):
                cand = lam * d_target + (1.0 - lam) * d_desc
                cand /= abs(cand)
                if sigma * (sq * cand).imag <= 0.0:
                    d = cand
                    break
        s_new = s + step * d
        sq = _sqrt_cont(qp(s_new), sq)
        s = s_new
        pts.append(s)
    else:
        raise NoCanonicalPathFound(f"did not reach {to} within {max_steps} steps")
    # thin out near-collinear points to keep the path light
    thin = [pts[0]]
    for p in pts[1:-1]:
        if abs(p - thin[-1]) > 4.0 * step:
            thin.append(p)
    if abs(pts[-1] - thin[-1]) > 1e-12:
        thin.append(pts[-1])
    if len(thin) < 2:
        raise NoCanonicalPathFound("degenerate path: target equals the seed")
    return ComplexPath(thin)


def sector_at(graph: StokesGraph, seed: complex, anchor=None) -> Sector:
    """Sector descriptor for the region containing `seed`.

    sigma = -sign(Im W(seed)) with W measured from the transition-controlling
    crossing of the closest line, so that exp(i sigma T W) is recessive deep
    in the sector.
    """
    if graph.closest_line is None:
        raise NoLinkingLine("graph has no linking line to anchor W")
    crossings = graph.crossing_points()
    tp = min(crossings, key=lambda z: abs(z.imag))
    w = action_W(graph.potential, tp, seed)
    sig = -1 if w.imag > 0 else 1
    return Sector(anchor=anchor, seed=seed, sign_sigma=sig)


def _attach_strip_sectors(graph: StokesGraph):
    """The four sectors used by the transition continuation: left/right of
    the strip, above/below the real axis."""
    if graph.closest_line is None:
        return
    r = graph.region
    x_l = r.re_min + 0.12 * (r.re_max - r.re_min)
    x_r = r.re_max - 0.12 * (r.re_max - r.re_min)
    min_im = graph.closest_line.min_abs_im()
    y = 0.25 * min_im if min_im > 0 else 0.0
    names = [("inf:left", complex(x_l, -y)), ("inf:left", complex(x_l, +y)),
             ("inf:right", complex(x_r, -y)), ("inf:right", complex(x_r, +y))]
    sectors = []
    for anchor, seed in names:
        try:
            sec = sector_at(graph, seed, anchor=anchor)
        except (NoLinkingLine, NearSingularity, BranchJumpDetected):
            continue
        sectors.append(sec)
    graph.sectors = sectors


# --- export ------------------------------------------------------------------


def graph_csv_rows(graph: StokesGraph):
    """One row per sampled point: line id, kind, Re s, Im s, Re W, Im W."""
    rows = []
    for li, line in enumerate(graph.lines):
        for p, w in zip(line.points, line.w_values):
            rows.append((li, line.kind, p.real, p.imag, w.real, w.imag))
    return rows


def graph_svg(graph: StokesGraph, width: int = 640, height: int = 480) -> str:
    """Standalone SVG: traced lines as polylines, roots as dots, poles as
    crosses, the closest line highlighted."""
    r = graph.region
    pad = 24.0

    def tx(s: complex):
        x = pad + (s.real - r.re_min) / (r.re_max - r.re_min) * (width - 2 * pad)
        y = height - pad - (s.imag - r.im_min) / (r.im_max - r.im_min) * (height - 2 * pad)
        return x, y

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    ax_y = tx(complex(r.re_min, 0.0))[1]
    parts.append(
        f'<line x1="{pad:.1f}" y1="{ax_y:.1f}" x2="{width - pad:.1f}" y2="{ax_y:.1f}" '
        'stroke="#bbbbbb" stroke-width="1"/>'
    )
    for line in graph.lines:
        color = "#1f77b4" if line.kind == "stokes" else "#2ca02c"
        pts = " ".join(f"{tx(p)[0]:.2f},{tx(p)[1]:.2f}" for p in line.points[:: max(1, len(line.points) // 400)])
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1"/>')
    if graph.closest_line is not None:
        pts = " ".join(
            f"{tx(p)[0]:.2f},{tx(p)[1]:.2f}"
            for p in graph.closest_line.points[:: max(1, len(graph.closest_line.points) // 600)]
        )
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#d62728" stroke-width="2"/>')
    for tp in graph.turning_points:
        x, y = tx(tp.location)
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="black"/>')
    for z, _ in graph.poles:
        x, y = tx(z)
        parts.append(
            f'<path d="M {x - 4:.2f} {y - 4:.2f} L {x + 4:.2f} {y + 4:.2f} '
            f'M {x - 4:.2f} {y + 4:.2f} L {x + 4:.2f} {y - 4:.2f}" stroke="#d62728" stroke-width="1.5"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
