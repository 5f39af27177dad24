"""Abelian differentials, period matrix, Abel map and amoeba/polygon maps.

Everything is a truncated Poincare series over reduced group words.  The
base integration point is infinity, which sits on the distinguished real
oval between the alpha-minus and beta-minus clusters; each series term is
then the principal logarithm of a two-point ratio.  For points of the
closed upper half-domain the per-term principal branches are continuous
(the two orbit points of a term always lie in one disc, so their ratio
never crosses the negative real axis), except on the real axis between a
pole pair, where the boundary value from the upper side is taken.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NumericError, PoleError, SeriesConvergenceError, ValidationError
from .schottky import (
    Circle,
    CosetFilter,
    SchottkyData,
    disc_center,
    disc_radius,
    enumerate_words,
    in_fundamental_half_domain,
    mobius_apply,
    oval_circle,
    require_valid_u2,
    upper_circle,
    word_mass,
)
from .theta import PeriodMatrix

__all__ = [
    "TrackPair",
    "HarnackData",
    "AmoebaPolygonSample",
    "BoundaryPolyline",
    "period_matrix",
    "holomorphic_differential",
    "abel_point",
    "abel_increment",
    "zeta_pair",
    "dzeta_pair",
    "zeta_coords",
    "dzeta_coords",
    "amoeba_map",
    "trace_amoeba_boundary",
    "polygon_vertices",
]

TWO_PI_I = 2j * math.pi

MARKED_POINT_MARGIN = 1e-6


@dataclass(frozen=True)
class TrackPair:
    """A positive/negative track point pair on the real oval X_0.

    The third-kind differential of the pair has residue +1 at p_minus and
    -1 at p_plus.
    """

    p_minus: float
    p_plus: float

    def __post_init__(self):
        if self.p_minus == self.p_plus:
            raise ValidationError("track pair needs two distinct points")


@dataclass(frozen=True)
class HarnackData:
    """Clustered marked points on X_0: beta- < alpha+ < beta+ < alpha-."""

    alphas: tuple[TrackPair, ...]
    betas: tuple[TrackPair, ...]

    @property
    def m(self) -> int:
        return len(self.alphas)

    @property
    def n(self) -> int:
        return len(self.betas)

    def all_points(self) -> list[float]:
        pts = []
        for p in self.alphas:
            pts.extend((p.p_minus, p.p_plus))
        for p in self.betas:
            pts.extend((p.p_minus, p.p_plus))
        return pts

    def clusters(self) -> dict[str, list[float]]:
        return {
            "beta_minus": [p.p_minus for p in self.betas],
            "alpha_plus": [p.p_plus for p in self.alphas],
            "beta_plus": [p.p_plus for p in self.betas],
            "alpha_minus": [p.p_minus for p in self.alphas],
        }

    def violations(self, data: SchottkyData | None = None) -> list[str]:
        out = []
        if self.m < 1 or self.n < 1:
            out.append("need at least one alpha pair and one beta pair")
            return out
        pts = self.all_points()
        if any(not math.isfinite(p) for p in pts):
            out.append("marked points must be finite reals")
            return out
        if len(set(pts)) != len(pts):
            out.append("marked points must be pairwise distinct")
        c = self.clusters()
        order = ["beta_minus", "alpha_plus", "beta_plus", "alpha_minus"]
        for lo, hi in zip(order, order[1:]):
            if max(c[lo]) >= min(c[hi]):
                out.append(f"cluster ordering violated: {lo} must lie left of {hi}")
        if data is not None:
            for gen_idx, gen in enumerate(data.generators, start=1):
                ctr, rad = disc_center(gen), disc_radius(gen)
                for p in pts:
                    if abs(p - ctr) < rad + MARKED_POINT_MARGIN:
                        out.append(
                            f"marked point {p} within margin of Schottky disc {gen_idx}"
                        )
        return out

    def require_valid(self, data: SchottkyData | None = None) -> None:
        bad = self.violations(data)
        if bad:
            raise ValidationError("; ".join(bad))


@dataclass(frozen=True)
class AmoebaPolygonSample:
    """Amoeba coordinates (x1, x2), imaginary parts (y1, y2), polygon (s1, s2)."""

    z: complex
    x1: float
    x2: float
    y1: float
    y2: float

    @property
    def s1(self) -> float:
        return -self.y2 / math.pi

    @property
    def s2(self) -> float:
        return self.y1 / math.pi


@dataclass(frozen=True)
class BoundaryPolyline:
    """Amoeba image of one boundary component (an X_0 arc or an oval)."""

    kind: str  # "arc" or "oval"
    index: int
    points: np.ndarray  # (k, 2) amoeba coordinates
    polygon_point: tuple[float, float]
    y_spread: float


# ---------------------------------------------------------------------------
# word/orbit caches


@lru_cache(maxsize=256)
def _coset_points(data: SchottkyData, n: int, max_letters: int):
    """Orbit arrays (sigma B_n, sigma A_n) over G/G_n, plus word masses."""
    words = enumerate_words(data, max_letters, CosetFilter(CosetFilter.RIGHT, n=n))
    gen = data.generator(n)
    a, b = gen.a, gen.a.conjugate()
    sb = np.array([mobius_apply(m, b) for _, m in words])
    sa = np.array([mobius_apply(m, a) for _, m in words])
    masses = np.array([word_mass(w) for w, _ in words])
    return sb, sa, masses


@lru_cache(maxsize=1024)
def _orbit(data: SchottkyData, p: float, max_letters: int) -> np.ndarray:
    """sigma(p) over the full group, identity first (enumeration order)."""
    words = enumerate_words(data, max_letters, CosetFilter())
    return np.array([mobius_apply(m, complex(p)) for _, m in words])


def _check_decay(increments: list[float], what: str) -> None:
    inc = [v for v in increments if v > 0]
    if len(inc) >= 3:
        tail = inc[-3:]
        ratios = [b / a for a, b in zip(tail, tail[1:]) if a > 0]
        if ratios and min(ratios) > 0.9:
            raise SeriesConvergenceError(
                f"{what}: series terms not decaying (increment ratios {ratios})"
            )


# ---------------------------------------------------------------------------
# period matrix and holomorphic differentials


def _cross_ratio(z1, z2, z3, z4) -> complex:
    return (z1 - z2) / (z2 - z3) * (z3 - z4) / (z4 - z1)


def period_matrix(data: SchottkyData, max_letters: int = 8) -> PeriodMatrix:
    """B_nm = (1/2 pi i) sum over double cosets of log cross-ratios.

    The result is coerced to exact symmetry by averaging; the removed
    asymmetry is stored on the returned matrix.  A decay diagnostic over
    word mass guards against non-converging series.
    """
    require_valid_u2(data)
    g = data.genus
    if g < 1:
        raise ValidationError("period matrix needs genus >= 1")
    b = np.zeros((g, g), dtype=complex)
    for n in range(1, g + 1):
        gn = data.generator(n)
        an, bn = gn.a, gn.a.conjugate()
        for m in range(n, g + 1):
            gm = data.generator(m)
            am, bm = gm.a, gm.a.conjugate()
            words = enumerate_words(
                data, max_letters, CosetFilter(CosetFilter.DOUBLE_NO_ID, m=m, n=n)
            )
            total = 0.0 + 0.0j
            by_mass: dict[int, complex] = {}
            for w, mat in words:
                term = np.log(
                    _cross_ratio(bm, mobius_apply(mat, bn), am, mobius_apply(mat, an))
                )
                total += term
                k = word_mass(w)
                by_mass[k] = by_mass.get(k, 0.0) + term
            _check_decay(
                [abs(by_mass[k]) for k in sorted(by_mass)], f"period matrix entry ({n},{m})"
            )
            val = total / TWO_PI_I
            if n == m:
                val = val + math.log(gn.mu) / TWO_PI_I
            b[n - 1, m - 1] = val
            b[m - 1, n - 1] = val
    asym = float(np.abs(b - b.T).max())
    return PeriodMatrix((b + b.T) / 2.0, asymmetry=asym)


def holomorphic_differential(
    data: SchottkyData, n: int, z: complex, max_letters: int = 8
) -> complex:
    """Value of omega_n / dz at z (normalized so a-periods are delta_nm)."""
    if not in_fundamental_half_domain(data, complex(z)) and not _on_lower_circles(data, z):
        raise PoleError(f"{z} lies inside a Schottky disc")
    sb, sa, _ = _coset_points(data, n, max_letters)
    return complex(np.sum(1.0 / (z - sb) - 1.0 / (z - sa)) / TWO_PI_I)


def _on_lower_circles(data: SchottkyData, z: complex) -> bool:
    # contour integration runs over the lower (oval) circles; allow their
    # closed exteriors in the lower half plane as well
    if z.imag > 0:
        return False
    for gen in data.generators:
        if abs(z - disc_center(gen).conjugate()) < disc_radius(gen) - 1e-12:
            return False
    return True


# ---------------------------------------------------------------------------
# Abel map


@lru_cache(maxsize=4096)
def abel_point(data: SchottkyData, p: float | complex, max_letters: int = 8) -> np.ndarray:
    """Abel map A(p) with base point infinity, one canonical representative.

    Component n is (1/2 pi i) sum over G/G_n of log((p - sigma B_n)/(p - sigma A_n))
    with per-term principal logs.  The returned vector is complex; for real
    p its imaginary part vanishes up to truncation error.
    """
    g = data.genus
    zp = complex(p)
    if not (math.isfinite(zp.real) and math.isfinite(zp.imag)):
        return np.zeros(g, dtype=complex)
    out = np.zeros(g, dtype=complex)
    for n in range(1, g + 1):
        sb, sa, _ = _coset_points(data, n, max_letters)
        out[n - 1] = np.sum(np.log((zp - sb) / (zp - sa))) / TWO_PI_I
    out.setflags(write=False)
    return out


def abel_point_real(data: SchottkyData, p: float, max_letters: int = 8) -> np.ndarray:
    """Real Abel vector of a marked point on X_0 (asserts small imaginary part)."""
    v = abel_point(data, float(p), max_letters)
    if v.size and np.abs(v.imag).max() > 1e-8:
        raise NumericError(f"Abel map of real point {p} has imaginary part {v.imag}")
    return v.real


def abel_increment(
    data: SchottkyData, p: float, q: float, n: int, max_letters: int = 8
) -> float:
    """int_q^p omega_n along X_0, reduced to [0, 1), from the log series."""
    require_valid_u2(data)
    zp, zq = complex(p), complex(q)
    p_inf = not (math.isfinite(zp.real) and math.isfinite(zp.imag))
    q_inf = not (math.isfinite(zq.real) and math.isfinite(zq.imag))
    sb, sa, _ = _coset_points(data, n, max_letters)
    for name, pt, is_inf in (("P", zp, p_inf), ("Q", zq, q_inf)):
        if not is_inf and (np.abs(pt - sb).min() < 1e-12 or np.abs(pt - sa).min() < 1e-12):
            raise PoleError(f"{name} coincides with an orbit point")
    if p_inf and q_inf:
        return 0.0
    if p_inf:
        ratio = (zq - sa) / (zq - sb)
    elif q_inf:
        ratio = (zp - sb) / (zp - sa)
    else:
        ratio = (zp - sb) / (zp - sa) * (zq - sa) / (zq - sb)
    val = np.sum(np.log(ratio)) / TWO_PI_I
    if abs(val.imag) > 1e-9:
        raise NumericError(f"Abel increment not real: imaginary part {val.imag:g}")
    return float(val.real % 1.0)


# ---------------------------------------------------------------------------
# third-kind integrals and the amoeba map


def _pair_terms(data: SchottkyData, pair: TrackPair, max_letters: int):
    om = _orbit(data, pair.p_minus, max_letters)
    op = _orbit(data, pair.p_plus, max_letters)
    return om, op


def zeta_pair(data: SchottkyData, pair: TrackPair, z, max_letters: int = 8):
    """zeta of one track pair: sum over G of log((z - s p-)/(z - s p+)).

    Base point is infinity (every term vanishes there).  Values on the real
    axis are the boundary values from the upper half-domain, so on the
    segment between the pair the imaginary part is -pi.
    """
    zz = np.asarray(z, dtype=complex)
    scalar = zz.ndim == 0
    zz = np.atleast_1d(zz)
    om, op = _pair_terms(data, pair, max_letters)
    out = np.zeros(zz.shape, dtype=complex)
    finite = np.isfinite(zz.real) & np.isfinite(zz.imag)
    zf = zz[finite]
    if zf.size:
        dmin = min(np.abs(zf[:, None] - om[None, :]).min(), np.abs(zf[:, None] - op[None, :]).min())
        if dmin < 1e-12:
            raise PoleError("evaluation point coincides with an orbit point of the pair")
        vals = np.sum(np.log((zf[:, None] - om[None, :]) / (zf[:, None] - op[None, :])), axis=1)
        # identity term: on the real segment between the pair take the limit
        # from the upper half plane (Im -> -pi), not the principal +pi
        ratio0 = (zf - om[0]) / (zf - op[0])
        flip = (zf.imag == 0.0) & (ratio0.imag == 0.0) & (ratio0.real < 0.0)
        vals = vals - np.where(flip, TWO_PI_I, 0.0)
        out[finite] = vals
    if scalar:
        return complex(out[0])
    return out


def dzeta_pair(data: SchottkyData, pair: TrackPair, z, max_letters: int = 8):
    """d zeta / dz of one track pair: sum over G of 1/(z - s p-) - 1/(z - s p+)."""
    zz = np.asarray(z, dtype=complex)
    scalar = zz.ndim == 0
    zz = np.atleast_1d(zz)
    om, op = _pair_terms(data, pair, max_letters)
    vals = np.sum(1.0 / (zz[:, None] - om[None, :]) - 1.0 / (zz[:, None] - op[None, :]), axis=1)
    if scalar:
        return complex(vals[0])
    return vals


def zeta_coords(data: SchottkyData, harnack: HarnackData, z, max_letters: int = 8):
    """(zeta_1, zeta_2) = (sum over alpha pairs, sum over beta pairs)."""
    z1 = sum(zeta_pair(data, p, z, max_letters) for p in harnack.alphas)
    z2 = sum(zeta_pair(data, p, z, max_letters) for p in harnack.betas)
    return z1, z2


def dzeta_coords(data: SchottkyData, harnack: HarnackData, z, max_letters: int = 8):
    d1 = sum(dzeta_pair(data, p, z, max_letters) for p in harnack.alphas)
    d2 = sum(dzeta_pair(data, p, z, max_letters) for p in harnack.betas)
    return d1, d2


def amoeba_map(
    data: SchottkyData, harnack: HarnackData, z: complex, max_letters: int = 8
) -> AmoebaPolygonSample:
    """Amoeba and polygon coordinates of a half-domain point."""
    z1, z2 = zeta_coords(data, harnack, complex(z), max_letters)
    return AmoebaPolygonSample(
        z=complex(z), x1=float(z1.real), x2=float(z2.real), y1=float(z1.imag), y2=float(z2.imag)
    )


def _arc_list(data: SchottkyData, harnack: HarnackData) -> list[tuple[float, float]]:
    """Finite arcs of X_0 between consecutive marked points (sorted)."""
    pts = sorted(harnack.all_points())
    return list(zip(pts, pts[1:]))


def trace_amoeba_boundary(
    data: SchottkyData,
    harnack: HarnackData,
    samples_per_component: int = 64,
    max_letters: int = 8,
    clip: float = 12.0,
) -> list[BoundaryPolyline]:
    """Amoeba images of all boundary components of the half-domain.

    Returns 2m + 2n polylines for the X_0 arcs (the through-infinity arc is
    one component) followed by one closed polyline per oval X_1..X_g.
    Points whose amoeba coordinates exceed ``clip`` in absolute value are
    dropped (tentacle ends diverge logarithmically).
    """
    if samples_per_component < 8:
        raise ValidationError("samples_per_component must be >= 8")
    harnack.require_valid(data)
    out: list[BoundaryPolyline] = []

    def emit(kind, index, zs):
        z1, z2 = zeta_coords(data, harnack, np.asarray(zs, dtype=complex), max_letters)
        xy = np.stack([z1.real, z2.real], axis=1)
        ys = np.stack([z1.imag, z2.imag], axis=1)
        keep = np.all(np.abs(xy) <= clip, axis=1)
        if not np.any(keep):
            return
        spread = float(ys[keep].max(axis=0).max() - ys[keep].min(axis=0).min()) if keep.sum() > 1 else 0.0
        ymean = ys[keep].mean(axis=0)
        out.append(
            BoundaryPolyline(
                kind=kind,
                index=index,
                points=xy[keep],
                polygon_point=(-ymean[1] / math.pi, ymean[0] / math.pi),
                y_spread=spread,
            )
        )

    k = samples_per_component
    # interior arcs, endpoint-clustered sampling
    tau = (np.arange(k) + 0.5) / k
    u = 0.5 * (1.0 - np.cos(np.pi * tau))
    for idx, (a, b) in enumerate(_arc_list(data, harnack)):
        emit("arc", idx, a + (b - a) * u)
    # the arc through infinity: geometric runs right of the largest and
    # left of the smallest marked point, joined at infinity
    pts = sorted(harnack.all_points())
    hi, lo = pts[-1], pts[0]
    t = np.geomspace(1e-6, 1.0, k // 2)
    right = hi + (1e6 - hi) * t[::-1]
    left = lo - (1e6 + lo) * t
    emit("arc", len(pts) - 1, np.concatenate([right, left]))
    # ovals, traced along the upper fundamental-domain circles
    for n in range(1, data.genus + 1):
        circ = upper_circle(data, n)
        phi = 2.0 * np.pi * (np.arange(k + 1)) / k
        emit("oval", n, circ.center + circ.radius * np.exp(1j * phi))
    return out


def polygon_vertices(
    data: SchottkyData, harnack: HarnackData, max_letters: int = 8
) -> np.ndarray:
    """Exterior vertices of the Newton polygon: polygon images of the arcs."""
    verts = []
    for a, b in _arc_list(data, harnack):
        s = amoeba_map(data, harnack, 0.5 * (a + b), max_letters)
        verts.append((s.s1, s.s2))
    verts.append((0.0, 0.0))  # the through-infinity arc contains the base point
    uniq: list[tuple[float, float]] = []
    for v in verts:
        if not any(abs(v[0] - u[0]) + abs(v[1] - u[1]) < 1e-9 for u in uniq):
            uniq.append(v)
    return np.array(uniq)
