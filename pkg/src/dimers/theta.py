"""Riemann theta functions with error-controlled box truncation.

The series is summed over the lattice box ``|m|_inf <= R`` where ``R`` is
chosen from the Gaussian tail bound governed by the smallest eigenvalue
of ``Im B`` and the imaginary part of the argument.  Terms are paired
``m, -m``, which makes the truncated sum exactly even and exactly real
for real arguments and purely imaginary ``B``.

Pure functions throughout; safe to call from many threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ValidationError

__all__ = [
    "PeriodMatrix",
    "Characteristic",
    "default_odd_characteristic",
    "truncation_radius",
    "theta",
    "theta_char",
]

DEFAULT_TOL = 1e-12

_MAX_RADIUS = 200


@dataclass(frozen=True)
class PeriodMatrix:
    """g x g period matrix; for M-curves it is purely imaginary.

    ``asymmetry`` records the max entrywise asymmetry removed when the
    matrix was coerced to exact symmetry (zero for hand-built matrices).
    """

    b: np.ndarray
    asymmetry: float = 0.0

    def __post_init__(self):
        b = np.asarray(self.b, dtype=complex)
        object.__setattr__(self, "b", b)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValidationError(f"period matrix must be square, got shape {b.shape}")

    @property
    def genus(self) -> int:
        return self.b.shape[0]

    def violations(self) -> list[str]:
        out = []
        b = self.b
        if b.size == 0:
            return out
        asym = np.abs(b - b.T).max()
        scale = 1.0 + np.abs(b).max()
        if asym > 1e-9 * scale:
            out.append(f"not symmetric (max asymmetry {asym:g})")
        remax = np.abs(b.real).max()
        if remax > 1e-9:
            out.append(f"not purely imaginary (max |Re| {remax:g})")
        ev = np.linalg.eigvalsh(b.imag)
        if ev.min() <= 0:
            out.append(f"Im B not positive definite (lambda_min {ev.min():g})")
        return out

    def require_valid(self) -> None:
        bad = self.violations()
        if bad:
            raise ValidationError("invalid period matrix: " + "; ".join(bad))

    def lambda_min(self) -> float:
        if self.genus == 0:
            return math.inf
        return float(np.linalg.eigvalsh(self.b.imag).min())


@dataclass(frozen=True)
class Characteristic:
    """Half-integer theta characteristic (delta1; delta2), entries in {0, 1/2}."""

    delta1: tuple[float, ...]
    delta2: tuple[float, ...]

    def __post_init__(self):
        for d in (self.delta1, self.delta2):
            if any(v not in (0.0, 0.5) for v in d):
                raise ValidationError("characteristic entries must be 0 or 1/2")
        if len(self.delta1) != len(self.delta2):
            raise ValidationError("characteristic halves must have equal length")

    @property
    def genus(self) -> int:
        return len(self.delta1)

    @property
    def parity(self) -> int:
        """0 for even, 1 for odd: 4 <delta1, delta2> mod 2."""
        return int(round(4.0 * sum(a * b for a, b in zip(self.delta1, self.delta2)))) % 2

    @property
    def is_odd(self) -> bool:
        return self.parity == 1


def default_odd_characteristic(genus: int, axis: int = 0) -> Characteristic:
    """delta1 = delta2 = e_axis / 2, the default odd characteristic."""
    if genus < 1:
        raise ValidationError("odd characteristics need genus >= 1")
    if not 0 <= axis < genus:
        raise IndexError(f"axis {axis} out of range for genus {genus}")
    e = tuple(0.5 if i == axis else 0.0 for i in range(genus))
    return Characteristic(e, e)


def truncation_radius(b: PeriodMatrix, im_z_bound: float, tol: float) -> int:
    """Smallest box radius R with Gaussian tail below tol.

    The tail over ``|m|_inf > R`` is bounded by
    ``sum_k N_k exp(-pi lam k^2 + 2 pi beta k)`` with ``lam`` the smallest
    eigenvalue of Im B, ``beta = |Im z|_2`` and ``N_k`` the number of
    lattice points on the box shell of radius ``k``.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    g = b.genus
    if g == 0:
        return 0
    b.require_valid()
    lam = b.lambda_min()
    beta = max(0.0, float(im_z_bound))

    def shell(k: int) -> float:
        return float((2 * k + 1) ** g - (2 * k - 1) ** g)

    def log_term(k: int) -> float:
        return -math.pi * lam * k * k + 2.0 * math.pi * beta * k + math.log(shell(k))

    # sum the bound far enough out that the remainder is negligible
    kmax = _MAX_RADIUS + 60
    logs = [log_term(k) for k in range(1, kmax + 1)]
    peak = max(logs)
    weights = [math.exp(v - peak) for v in logs]
    suffix = np.cumsum(weights[::-1])[::-1]
    for r in range(0, _MAX_RADIUS + 1):
        tail = suffix[r] * math.exp(peak)
        if tail < tol:
            return r
    raise NumericError(
        f"theta truncation radius exceeds {_MAX_RADIUS} (lambda_min={lam:g}, im_z_bound={beta:g})"
    )


def _half_lattice(g: int, r: int) -> np.ndarray:
    """Lattice points with first nonzero coordinate positive, |m|_inf <= r."""
    rng = np.arange(-r, r + 1)
    grids = np.meshgrid(*([rng] * g), indexing="ij")
    pts = np.stack([a.ravel() for a in grids], axis=-1)
    keep = np.zeros(len(pts), dtype=bool)
    undecided = np.ones(len(pts), dtype=bool)
    for j in range(g):
        col = pts[:, j]
        keep |= undecided & (col > 0)
        undecided &= col == 0
    return pts[keep]


_half_cache: dict[tuple[int, int], np.ndarray] = {}


def _half(g: int, r: int) -> np.ndarray:
    key = (g, r)
    if key not in _half_cache:
        _half_cache[key] = _half_lattice(g, r)
    return _half_cache[key]


def _as_batch(z, g: int) -> tuple[np.ndarray, bool]:
    zz = np.asarray(z, dtype=complex)
    if g == 0:
        if zz.ndim <= 1:
            return np.zeros((1, 0), dtype=complex), True
        return np.zeros((zz.shape[0], 0), dtype=complex), False
    if zz.ndim == 1:
        if zz.shape[0] != g:
            raise ValidationError(f"argument length {zz.shape[0]} != genus {g}")
        return zz[None, :], True
    if zz.ndim == 2 and zz.shape[1] == g:
        return zz, False
    raise ValidationError(f"argument shape {zz.shape} incompatible with genus {g}")


def theta(z, b: PeriodMatrix, tol: float = DEFAULT_TOL):
    """Riemann theta sum_{m} exp(pi i <Bm,m> + 2 pi i <z,m>), box truncated.

    Accepts a length-g vector or an (N, g) batch; genus 0 returns 1.
    The m/-m pairing makes the truncated sum exactly even in z and exactly
    real for real z with purely imaginary B.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    g = b.genus
    zz, scalar = _as_batch(z, g)
    if g == 0:
        out = np.ones(zz.shape[0], dtype=complex)
        return out[0] if scalar else out
    b.require_valid()
    imb = float(np.linalg.norm(zz.imag, axis=1).max()) if zz.size else 0.0
    r = truncation_radius(b, imb, tol)
    total = np.ones(zz.shape[0], dtype=complex)  # the m = 0 term
    if r > 0:
        m = _half(g, r)
        quad = np.exp(1j * math.pi * np.einsum("kg,gh,kh->k", m, b.b, m))
        total = total + 2.0 * (np.cos(2.0 * math.pi * (zz @ m.T)) @ quad)
    return total[0] if scalar else total


def theta_char(delta: Characteristic, z, b: PeriodMatrix, tol: float = DEFAULT_TOL):
    """Theta with half-integer characteristic, summed on the shifted lattice.

    Equals exp(pi i <B d1,d1> + 2 pi i <z+d2,d1>) * theta(z + d2 + B d1) but
    is computed directly over m + delta1 with m/-m pairing, so real
    arguments with purely imaginary B give exactly real values.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    g = b.genus
    if delta.genus != g:
        raise ValidationError(f"characteristic genus {delta.genus} != matrix genus {g}")
    zz, scalar = _as_batch(z, g)
    if g == 0:
        out = np.ones(zz.shape[0], dtype=complex)
        return out[0] if scalar else out
    b.require_valid()
    d1 = np.asarray(delta.delta1)
    d2 = np.asarray(delta.delta2)
    imb = float(np.linalg.norm(zz.imag, axis=1).max()) if zz.size else 0.0
    r = truncation_radius(b, imb, tol) + 1  # +1 covers the half-integer shift
    if np.any(d1 != 0.0):
        # half set of the shifted lattice delta1 + Z^g: first nonzero > 0
        full = np.stack(
            np.meshgrid(*([np.arange(-r, r + 1)] * g), indexing="ij"), axis=-1
        ).reshape(-1, g) + d1
        keep = np.zeros(len(full), dtype=bool)
        undecided = np.ones(len(full), dtype=bool)
        for j in range(g):
            col = full[:, j]
            keep |= undecided & (col > 0)
            undecided &= col == 0
        n = full[keep]
        has_zero = False
    else:
        n = _half(g, r).astype(float)
        has_zero = True
    quad = np.exp(1j * math.pi * np.einsum("kg,gh,kh->k", n, b.b, n))
    w = zz + d2
    total = 2.0 * (np.cos(2.0 * math.pi * (w @ n.T)) @ quad)
    if has_zero:
        total = total + 1.0
    return total[0] if scalar else total
