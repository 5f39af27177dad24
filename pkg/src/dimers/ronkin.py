"""Ronkin function, surface tension and their derivative diagnostics.

All quantities derive from one path integral per point,

    h(P) = (1/pi) Im int_Q^P zeta_2 d zeta_1,

taken along a polyline from the base point Q (a large real number standing
in for infinity on the outer arc) to P inside the fundamental half-domain.
The imaginary part is path independent there, because y_1 is constant on
every oval, so h is a genuine function.  The Ronkin function and surface
tension are

    rho = -h + x2 y1 / pi,     sigma = h - x1 y2 / pi,

which makes Legendre duality in polygon coordinates exact by construction;
independent validation comes from finite-difference gradient, Hessian and
Euler-Lagrange checks.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import NumericError, QuadratureError, ValidationError
from .schottky import SchottkyData, disc_center, disc_radius, in_fundamental_half_domain
from .surface import HarnackData, dzeta_coords, zeta_coords

__all__ = [
    "IntegrationPath",
    "RonkinSample",
    "RonkinContext",
    "build_path",
    "h_value",
    "r_ratio",
    "ronkin_sample",
    "euler_lagrange_residual",
    "sigma_explicit",
]

DEFAULT_QUAD_TOL = 1e-9
DEFAULT_MARGIN = 1e-3


@dataclass(frozen=True)
class IntegrationPath:
    """Piecewise linear path from the base arc to a target point."""

    waypoints: tuple[complex, ...]

    def segments(self):
        return list(zip(self.waypoints, self.waypoints[1:]))


@dataclass(frozen=True)
class RonkinSample:
    z: complex
    x1: float
    x2: float
    y1: float
    y2: float
    s1: float
    s2: float
    h: float
    rho: float
    sigma: float
    r: complex
    hess: np.ndarray  # symmetric 2x2


class RonkinContext:
    """Caches geometry and zeta evaluations for one Harnack data set.

    The context is immutable after construction; per-sample evaluation is
    pure, so batches may be processed in parallel.
    ``amoeba_offset`` rigidly translates reported amoeba coordinates (the
    freedom of moving Q along the outer arc); h picks up the matching
    c2*y1/pi term so rho is unchanged.
    """

    def __init__(
        self,
        data: SchottkyData,
        harnack: HarnackData,
        max_letters: int = 8,
        quad_tol: float = DEFAULT_QUAD_TOL,
        margin: float = DEFAULT_MARGIN,
        base_q: float = 1e6,
        amoeba_offset: tuple[float, float] = (0.0, 0.0),
    ):
        harnack.require_valid(data)
        if base_q <= max(harnack.all_points()):
            raise ValidationError("base point must lie on the outer arc right of all marked points")
        self.data = data
        self.harnack = harnack
        self.max_letters = max_letters
        self.quad_tol = quad_tol
        self.margin = margin
        self.base_q = base_q
        self.amoeba_offset = amoeba_offset
        self.discs = [
            (disc_center(g), disc_radius(g)) for g in data.generators
        ]
        self.marked = sorted(harnack.all_points())
        self._h_cache: dict[complex, float] = {}
        self._seed_grid = self._build_seed_grid()

    # -- geometry ----------------------------------------------------------

    def in_domain(self, z: complex, slack: float = 0.0) -> bool:
        return in_fundamental_half_domain(self.data, z, self.margin - slack)

    def _clearance(self, a: complex, b: complex) -> float:
        """Distance from segment [a, b] to the nearest disc or marked point."""
        d = math.inf
        for c, r in self.discs:
            d = min(d, _seg_point_dist(a, b, c) - r)
        for p in self.marked:
            d = min(d, _seg_point_dist(a, b, complex(p)))
        return d

    def _build_seed_grid(self):
        lo, hi = self.marked[0] - 3.0, self.marked[-1] + 3.0
        top = max([c.imag + r for c, r in self.discs], default=1.0) + 1.0
        xs = np.linspace(lo, hi, 41)
        ys = np.geomspace(2e-3, max(2.0, 2 * top), 25)
        pts = [complex(x, y) for x in xs for y in ys if self.in_domain(complex(x, y))]
        zs = np.array(pts)
        z1, z2 = zeta_coords(self.data, self.harnack, zs, self.max_letters)
        return zs, np.stack([z1.real, z2.real], 1), np.stack([-z2.imag, z1.imag], 1) / math.pi

    # -- zeta shortcuts ------------------------------------------------------

    def zeta(self, z):
        return zeta_coords(self.data, self.harnack, z, self.max_letters)

    def dzeta(self, z):
        return dzeta_coords(self.data, self.harnack, z, self.max_letters)

    def amoeba_xy(self, z: complex):
        z1, z2 = self.zeta(complex(z))
        c1, c2 = self.amoeba_offset
        return (z1.real + c1, z2.real + c2, z1.imag, z2.imag)


def _seg_point_dist(a: complex, b: complex, p: complex) -> float:
    ab = b - a
    denom = abs(ab) ** 2
    if denom == 0.0:
        return abs(p - a)
    t = ((p - a).real * ab.real + (p - a).imag * ab.imag) / denom
    t = min(1.0, max(0.0, t))
    return abs(p - (a + t * ab))


def build_path(ctx: RonkinContext, z: complex) -> IntegrationPath:
    """Polyline from the base point to z clearing discs and marked points.

    A small visibility graph over ring points around each obstacle is
    searched with Dijkstra; straight shots are used whenever clear.
    """
    z = complex(z)
    if not self_in_domain(ctx, z):
        raise ValidationError(f"{z} is not inside the fundamental half-domain with margin")
    q = complex(ctx.base_q, 0.0)
    if abs(z - q) < 1e-12 or (z.imag == 0.0 and z.real > ctx.marked[-1] + ctx.margin):
        return IntegrationPath((q, z))
    if ctx._clearance(q, z) > ctx.margin:
        return IntegrationPath((q, z))

    nodes = [q, z]
    for c, r in ctx.discs:
        ring = r + max(6 * ctx.margin, 0.08 * r)
        for k in range(8):
            w = c + ring * np.exp(1j * (2 * np.pi * k / 8))
            if complex(w).imag > ctx.margin and ctx.in_domain(complex(w), slack=0.5 * ctx.margin):
                nodes.append(complex(w))
    for p in ctx.marked:
        for rad in (0.05, 0.25):
            for ang in (0.35 * np.pi, 0.5 * np.pi, 0.65 * np.pi):
                w = complex(p + rad * math.cos(ang), rad * math.sin(ang))
                if ctx.in_domain(w, slack=0.5 * ctx.margin):
                    nodes.append(w)
    # high road over everything
    top = max([c.imag + r for c, r in ctx.discs], default=0.0) + 1.0
    nodes.append(complex(ctx.marked[0] - 1.0, top))
    nodes.append(complex(ctx.marked[-1] + 1.0, top))
    nodes.append(complex(z.real, top))

    n = len(nodes)
    dist = [math.inf] * n
    prev = [-1] * n
    dist[0] = 0.0
    pq = [(0.0, 0)]
    seen = [False] * n
    while pq:
        d, i = heapq.heappop(pq)
        if seen[i]:
            continue
        seen[i] = True
        if i == 1:
            break
        for j in range(n):
            if seen[j]:
                continue
            a, b = nodes[i], nodes[j]
            if min(a.imag, b.imag) < 0:
                continue
            if ctx._clearance(a, b) <= ctx.margin * (1.0 - 1e-9):
                continue
            nd = d + abs(b - a)
            if nd < dist[j]:
                dist[j] = nd
                prev[j] = i
                heapq.heappush(pq, (nd, j))
    if not seen[1]:
        raise NumericError(f"no admissible integration path to {z} at margin {ctx.margin}")
    path = []
    i = 1
    while i != -1:
        path.append(nodes[i])
        i = prev[i]
    return IntegrationPath(tuple(reversed(path)))


def self_in_domain(ctx: RonkinContext, z: complex) -> bool:
    if z.imag < 0:
        return False
    for c, r in ctx.discs:
        if abs(z - c) < r + ctx.margin:
            return False
    if z.imag < ctx.margin:
        # close to the axis: keep clear of the marked points
        if min((abs(z - complex(p)) for p in ctx.marked), default=math.inf) < ctx.margin:
            return False
    return True


def _segment_h(ctx: RonkinContext, a: complex, b: complex, tol: float) -> float:
    """(1/pi) Im int_a^b zeta_2 dzeta_1 along the straight segment."""
    dz = b - a

    def integrand(t: float) -> float:
        z = a + dz * t
        z1, z2 = ctx.zeta(z)
        d1, _ = ctx.dzeta(z)
        return (z2 * d1 * dz).imag

    val, err = quad(integrand, 0.0, 1.0, epsabs=tol, epsrel=1e-12, limit=200)
    if err > 10 * max(tol, 1e-13) and err > 1e-10 * (1 + abs(val)):
        raise QuadratureError(f"segment quadrature error {err:g} exceeds tolerance {tol:g}")
    return val / math.pi


def h_value(ctx: RonkinContext, path: IntegrationPath, quad_tol: float | None = None) -> float:
    """h along an explicit path (adaptive quadrature per segment)."""
    tol = ctx.quad_tol if quad_tol is None else quad_tol
    segs = path.segments()
    if not segs:
        return 0.0
    total = 0.0
    for a, b in segs:
        if a == b:
            continue
        total += _segment_h(ctx, a, b, tol / max(1, len(segs)))
    c2 = ctx.amoeba_offset[1]
    if c2 != 0.0:
        # shifting zeta_2 by the real constant c2 adds c2*y1/pi to h, which
        # keeps rho = -h + x2*y1/pi invariant under moving Q along the arc
        total += c2 * ctx.amoeba_xy(path.waypoints[-1])[2] / math.pi
    return total


def h_at(ctx: RonkinContext, z: complex) -> float:
    """h(z) with caching and incremental short-segment updates."""
    z = complex(z)
    if z in ctx._h_cache:
        return ctx._h_cache[z]
    best = None
    for zc in ctx._h_cache:
        d = abs(zc - z)
        if d < 0.05 and (best is None or d < abs(best - z)):
            best = zc
    if best is not None and ctx._clearance(best, z) > ctx.margin:
        val = ctx._h_cache[best] + _segment_h(ctx, best, z, ctx.quad_tol) + _offset_delta(ctx, best, z)
        ctx._h_cache[z] = val
        return val
    val = h_value(ctx, build_path(ctx, z))
    ctx._h_cache[z] = val
    return val


def _offset_delta(ctx: RonkinContext, a: complex, b: complex) -> float:
    c1, c2 = ctx.amoeba_offset
    if c2 == 0.0:
        return 0.0
    ya = ctx.amoeba_xy(a)[2]
    yb = ctx.amoeba_xy(b)[2]
    return c2 * (yb - ya) / math.pi


def r_ratio(ctx: RonkinContext, z: complex, strict: bool = True) -> complex:
    """R = dzeta_1 / dzeta_2; positive imaginary part in the open interior."""
    d1, d2 = ctx.dzeta(complex(z))
    if d2 == 0:
        raise NumericError(f"dzeta_2 vanishes at {z}")
    r = d1 / d2
    if strict and complex(z).imag > 1e-9 and r.imag <= 0:
        raise NumericError(f"Im R = {r.imag:g} <= 0 at interior point {z}")
    return r


def ronkin_sample(ctx: RonkinContext, z: complex) -> RonkinSample:
    """All pointwise Ronkin data at z (one h integral)."""
    z = complex(z)
    x1, x2, y1, y2 = ctx.amoeba_xy(z)
    h = h_at(ctx, z)
    rho = -h + x2 * y1 / math.pi
    sigma = h - x1 * y2 / math.pi
    r = r_ratio(ctx, z, strict=False)
    if r.imag <= 0:
        raise NumericError(f"Hessian undefined: Im R = {r.imag:g} at {z}")
    hess = (1.0 / (math.pi * r.imag)) * np.array(
        [[1.0, -r.real], [-r.real, abs(r) ** 2]]
    )
    return RonkinSample(
        z=z,
        x1=x1,
        x2=x2,
        y1=y1,
        y2=y2,
        s1=-y2 / math.pi,
        s2=y1 / math.pi,
        h=h,
        rho=rho,
        sigma=sigma,
        r=r,
        hess=hess,
    )


# ---------------------------------------------------------------------------
# inverse maps (amoeba / polygon coordinates -> surface point)


def _newton(ctx: RonkinContext, target, rows: str, z0: complex) -> complex:
    """Damped 2d Newton for Re zeta = target ('x') or polygon coords ('s')."""
    z = complex(z0)
    tx = np.asarray(target, dtype=float)

    def fval(zz):
        z1, z2 = ctx.zeta(zz)
        if rows == "x":
            c1, c2 = ctx.amoeba_offset
            return np.array([z1.real + c1 - tx[0], z2.real + c2 - tx[1]])
        return np.array([-z2.imag / math.pi - tx[0], z1.imag / math.pi - tx[1]])

    f = fval(z)
    for _ in range(60):
        if np.abs(f).max() < 1e-12:
            return z
        d1, d2 = ctx.dzeta(z)
        if rows == "x":
            jac = np.array([[d1.real, -d1.imag], [d2.real, -d2.imag]])
        else:
            jac = np.array(
                [[-d2.imag / math.pi, -d2.real / math.pi], [d1.imag / math.pi, d1.real / math.pi]]
            )
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"singular Jacobian while inverting {rows}-coordinates") from exc
        lam = 1.0
        for _ in range(40):
            zn = z + lam * complex(step[0], step[1])
            if self_in_domain(ctx, zn):
                fn = fval(zn)
                if np.abs(fn).max() < np.abs(f).max() or lam < 1e-4:
                    z, f = zn, fn
                    break
            lam *= 0.5
        else:
            raise NumericError(f"Newton stalled while inverting {rows}-coordinates at {target}")
    raise NumericError(f"Newton did not converge inverting {rows}-coordinates at {target}")


def invert_amoeba(ctx: RonkinContext, x1: float, x2: float, z0: complex | None = None) -> complex:
    if z0 is None:
        zs, xs, _ = ctx._seed_grid
        c1, c2 = ctx.amoeba_offset
        k = int(np.argmin((xs[:, 0] + c1 - x1) ** 2 + (xs[:, 1] + c2 - x2) ** 2))
        z0 = zs[k]
    return _newton(ctx, (x1, x2), "x", z0)


def invert_polygon(ctx: RonkinContext, s1: float, s2: float, z0: complex | None = None) -> complex:
    if z0 is None:
        zs, _, ss = ctx._seed_grid
        k = int(np.argmin((ss[:, 0] - s1) ** 2 + (ss[:, 1] - s2) ** 2))
        z0 = zs[k]
    return _newton(ctx, (s1, s2), "s", z0)


def rho_at_amoeba(ctx: RonkinContext, x1: float, x2: float, z0: complex | None = None) -> float:
    z = invert_amoeba(ctx, x1, x2, z0)
    s = ronkin_sample(ctx, z)
    return s.rho


def sigma_at_polygon(ctx: RonkinContext, s1: float, s2: float, z0: complex | None = None) -> float:
    z = invert_polygon(ctx, s1, s2, z0)
    s = ronkin_sample(ctx, z)
    return s.sigma


def euler_lagrange_residual(ctx: RonkinContext, z: complex, fd_step: float = 3e-3) -> float:
    """|Div(grad sigma o grad rho) - 2| at the amoeba point of z.

    grad rho is evaluated through the analytic identity grad rho =
    (-y2, y1)/pi at the amoeba-inverted point (validated separately by
    finite differences); grad sigma is taken by central differences of
    sigma over polygon coordinates; the outer divergence is a central
    difference over amoeba coordinates.
    """
    z = complex(z)
    x1, x2, _, _ = ctx.amoeba_xy(z)
    hs = fd_step / 3.0

    def grad_sigma(s1, s2, zseed):
        g1 = (
            sigma_at_polygon(ctx, s1 + hs, s2, zseed) - sigma_at_polygon(ctx, s1 - hs, s2, zseed)
        ) / (2 * hs)
        g2 = (
            sigma_at_polygon(ctx, s1, s2 + hs, zseed) - sigma_at_polygon(ctx, s1, s2 - hs, zseed)
        ) / (2 * hs)
        return np.array([g1, g2])

    def fmap(xa, xb):
        zz = invert_amoeba(ctx, xa, xb, z)
        _, _, y1, y2 = ctx.amoeba_xy(zz)
        return grad_sigma(-y2 / math.pi, y1 / math.pi, zz)

    hh = fd_step
    div = (
        (fmap(x1 + hh, x2)[0] - fmap(x1 - hh, x2)[0]) / (2 * hh)
        + (fmap(x1, x2 + hh)[1] - fmap(x1, x2 - hh)[1]) / (2 * hh)
    )
    return abs(div - 2.0)


def sigma_explicit(ctx: RonkinContext, z: complex) -> float:
    """Surface tension from the per-pair explicit sum (independent quadrature).

    sigma = sum_ij [ (1/pi) Im int zeta^{beta_j} d zeta^{alpha_i}
                     - (1/pi) Re zeta^{alpha_i} Im zeta^{beta_j} ].
    """
    from .surface import dzeta_pair, zeta_pair

    z = complex(z)
    path = build_path(ctx, z)
    total = 0.0
    for pa in ctx.harnack.alphas:
        for pb in ctx.harnack.betas:

            def integrand(t, a, b, pa=pa, pb=pb):
                zz = a + (b - a) * t
                zb = zeta_pair(ctx.data, pb, zz, ctx.max_letters)
                da = dzeta_pair(ctx.data, pa, zz, ctx.max_letters)
                return (zb * da * (b - a)).imag

            acc = 0.0
            for a, b in path.segments():
                if a == b:
                    continue
                val, _ = quad(
                    lambda t: integrand(t, a, b), 0.0, 1.0, epsabs=ctx.quad_tol, epsrel=1e-12, limit=200
                )
                acc += val
            za = zeta_pair(ctx.data, pa, z, ctx.max_letters)
            zb = zeta_pair(ctx.data, pb, z, ctx.max_letters)
            total += acc / math.pi - za.real * zb.imag / math.pi
    return total
