"""Classical Schottky groups in U2 normal form.

A genus-``g`` M-curve is uniformized by ``g`` Moebius generators whose
fixed points come in complex conjugate pairs ``A_n``, ``conj(A_n)`` with
real multipliers ``0 < mu_n < 1``.  The fundamental domain is the plane
minus ``2g`` round discs arranged symmetrically about the real axis; the
closed upper half plane minus the upper discs represents the half
surface.

Everything in this module is immutable and side-effect free, so all
functions may be called concurrently.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NumericError, ValidationError

INF = complex(math.inf, 0.0)

__all__ = [
    "INF",
    "Generator",
    "SchottkyData",
    "GroupWord",
    "MobiusMap",
    "CosetFilter",
    "Circle",
    "Violation",
    "validate_u2",
    "is_valid_u2",
    "require_valid_u2",
    "mobius_apply",
    "generator_map",
    "enumerate_words",
    "oval_circle",
    "disc_center",
    "disc_radius",
]


@dataclass(frozen=True)
class Generator:
    """One U2 generator: fixed point ``a`` (Im a > 0) and multiplier ``mu``.

    The second fixed point is implicitly ``conj(a)``; it is the attracting
    one (the derivative there equals ``mu``).
    """

    a: complex
    mu: float


@dataclass(frozen=True)
class SchottkyData:
    """Ordered tuple of U2 generators; the empty tuple is genus zero."""

    generators: tuple[Generator, ...] = ()

    @property
    def genus(self) -> int:
        return len(self.generators)

    def generator(self, n: int) -> Generator:
        if not 1 <= n <= self.genus:
            raise IndexError(f"generator index {n} out of range 1..{self.genus}")
        return self.generators[n - 1]


# A reduced word is a tuple of runs (generator index 1..g, nonzero exponent)
# with distinct adjacent indices; the empty tuple is the identity.
GroupWord = tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class MobiusMap:
    """Unnormalized 2x2 complex matrix acting as (az+b)/(cz+d)."""

    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        if self.a * self.d - self.b * self.c == 0:
            raise ValidationError("degenerate Moebius matrix (ad - bc = 0)")

    def compose(self, other: "MobiusMap") -> "MobiusMap":
        a = self.a * other.a + self.b * other.c
        b = self.a * other.b + self.b * other.d
        c = self.c * other.a + self.d * other.c
        d = self.c * other.b + self.d * other.d
        # renormalize after each composition so long words cannot overflow
        s = max(abs(a), abs(b), abs(c), abs(d))
        return MobiusMap(a / s, b / s, c / s, d / s)

    def __call__(self, z: complex) -> complex:
        return mobius_apply(self, z)


IDENTITY = MobiusMap(1.0, 0.0, 0.0, 1.0)


@dataclass(frozen=True)
class CosetFilter:
    """Word filter: full group, G/G_n, G_m\\G/G_n, or the latter minus id.

    ``mode`` is one of ``"full_group"``, ``"right_coset"``,
    ``"double_coset"``, ``"double_coset_excluding_identity"``.
    """

    mode: str = "full_group"
    m: int = 0
    n: int = 0

    FULL = "full_group"
    RIGHT = "right_coset"
    DOUBLE = "double_coset"
    DOUBLE_NO_ID = "double_coset_excluding_identity"

    def admits(self, word: GroupWord) -> bool:
        if self.mode == self.FULL:
            return True
        if self.mode == self.RIGHT:
            return not word or word[-1][0] != self.n
        if self.mode in (self.DOUBLE, self.DOUBLE_NO_ID):
            if not word:
                return self.mode == self.DOUBLE
            return word[0][0] != self.m and word[-1][0] != self.n
        raise ValidationError(f"unknown coset filter mode {self.mode!r}")

    def check_indices(self, genus: int) -> None:
        need = {self.RIGHT: ("n",), self.DOUBLE: ("m", "n"), self.DOUBLE_NO_ID: ("m", "n")}
        for attr in need.get(self.mode, ()):
            k = getattr(self, attr)
            if not 1 <= k <= genus:
                raise IndexError(f"coset index {attr}={k} out of range 1..{genus}")


@dataclass(frozen=True)
class Circle:
    center: complex
    radius: float

    def point(self, phi: float) -> complex:
        return self.center + self.radius * cmath.exp(1j * phi)

    def points(self, k: int) -> np.ndarray:
        phi = 2.0 * np.pi * np.arange(k) / k
        return self.center + self.radius * np.exp(1j * phi)


@dataclass(frozen=True)
class Violation:
    code: str
    generators: tuple[int, ...]
    message: str


def disc_center(gen: Generator) -> complex:
    """Center of the upper fundamental-domain circle of a generator."""
    return (gen.a - gen.mu * gen.a.conjugate()) / (1.0 - gen.mu)


def disc_radius(gen: Generator) -> float:
    """Radius of both fundamental-domain circles of a generator."""
    return 2.0 * math.sqrt(gen.mu) * gen.a.imag / (1.0 - gen.mu)


def validate_u2(data: SchottkyData) -> list[Violation]:
    """Check all U2 invariants; returns a report, empty iff valid.

    Disc disjointness is tested for the actual fundamental-domain circles
    (the fixed circles of z -> sigma(conj z), radius 2*sqrt(mu)*Im A/(1-mu)),
    both among the upper circles and against the conjugate family.
    """
    report: list[Violation] = []
    for i, gen in enumerate(data.generators, start=1):
        if not gen.a.imag > 0:
            report.append(Violation("im_positive", (i,), f"Im(A_{i}) = {gen.a.imag} must be > 0"))
        if not 0.0 < gen.mu < 1.0:
            report.append(Violation("mu_range", (i,), f"mu_{i} = {gen.mu} must lie in (0, 1)"))
    ok = {v.generators[0] for v in report}
    gens = [(i, g) for i, g in enumerate(data.generators, start=1) if i not in ok]
    cr = [(i, disc_center(g), disc_radius(g)) for i, g in gens]
    for ii in range(len(cr)):
        for jj in range(ii + 1, len(cr)):
            (i, ci, ri), (j, cj, rj) = cr[ii], cr[jj]
            if abs(ci - cj) <= ri + rj:
                report.append(
                    Violation("disc_overlap", (i, j), f"fundamental discs {i} and {j} are not disjoint")
                )
            if abs(ci - cj.conjugate()) <= ri + rj:
                report.append(
                    Violation(
                        "conjugate_disc_overlap",
                        (i, j),
                        f"disc {i} meets the conjugate disc of {j}",
                    )
                )
    return report


def is_valid_u2(data: SchottkyData) -> bool:
    return not validate_u2(data)


def require_valid_u2(data: SchottkyData) -> None:
    report = validate_u2(data)
    if report:
        raise ValidationError("; ".join(v.message for v in report))


def mobius_apply(m: MobiusMap, z: complex) -> complex:
    """Evaluate (az+b)/(cz+d) with the extended conventions at infinity."""
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        return m.a / m.c if m.c != 0 else INF
    if abs(z) > 1e8:
        # evaluate through 1/z to dodge overflow for huge arguments
        u = 1.0 / z
        den = m.c + m.d * u
        if den == 0:
            return INF
        return (m.a + m.b * u) / den
    den = m.c * z + m.d
    if den == 0:
        return INF
    return (m.a * z + m.b) / den


def generator_map(data: SchottkyData, n: int, exponent: int = 1) -> MobiusMap:
    """Matrix of sigma_n^exponent from the fixed-point normal form.

    (w - B)/(w - A) = mu^e (z - B)/(z - A) with A the upper fixed point and
    B = conj(A); exponent e just replaces mu by mu^e.
    """
    if exponent == 0:
        raise ValidationError("exponent must be nonzero")
    gen = data.generator(n)
    a, t = gen.a, gen.mu ** exponent
    b = a.conjugate()
    return MobiusMap(b - t * a, -a * b * (1.0 - t), 1.0 - t, -(a - t * b))


def _word_map(data: SchottkyData, word: GroupWord) -> MobiusMap:
    m = IDENTITY
    for idx, e in word:
        m = m.compose(generator_map(data, idx, e))
    return m


@lru_cache(maxsize=128)
def _enumerate_full(data: SchottkyData, max_letters: int) -> tuple[tuple[GroupWord, MobiusMap], ...]:
    """All reduced words of total exponent mass <= max_letters.

    Breadth-first by mass, then prefix-lexicographic with letters ordered
    (index asc, +1 before -1): the order is reproducible bit for bit.
    """
    g = data.genus
    out: list[tuple[GroupWord, MobiusMap]] = [((), IDENTITY)]
    level: list[tuple[GroupWord, MobiusMap]] = [((), IDENTITY)]
    letters = [(j, s) for j in range(1, g + 1) for s in (1, -1)]
    for _ in range(max_letters):
        nxt: list[tuple[GroupWord, MobiusMap]] = []
        for word, mat in level:
            for j, s in letters:
                if word and word[-1][0] == j:
                    li, le = word[-1]
                    if (le > 0) != (s > 0):
                        continue  # would cancel: not reduced
                    new_word = word[:-1] + ((li, le + s),)
                else:
                    new_word = word + ((j, s),)
                nxt.append((new_word, mat.compose(generator_map(data, j, s))))
        out.extend(nxt)
        level = nxt
    return tuple(out)


def enumerate_words(
    data: SchottkyData, max_letters: int, coset: CosetFilter = CosetFilter()
) -> list[tuple[GroupWord, MobiusMap]]:
    """Reduced group words with mass <= max_letters passing the filter."""
    if max_letters < 0:
        raise ValidationError("max_letters must be >= 0")
    coset.check_indices(data.genus)
    return [(w, m) for w, m in _enumerate_full(data, max_letters) if coset.admits(w)]


def word_mass(word: GroupWord) -> int:
    return sum(abs(e) for _, e in word)


def oval_circle(data: SchottkyData, n: int) -> Circle:
    """Lift of the real oval X_n: the fixed circle of z -> sigma_n(conj z).

    With sigma_n = (a, b, c, d) this is {z : c z conj(z) + d z - a conj(z) - b = 0},
    the circle around conj(A_n) with radius 2*sqrt(mu_n)*Im(A_n)/(1-mu_n).
    Positively oriented it is the homology cycle a_n.  (Its complex
    conjugate, the fixed circle of z -> sigma_n^{-1}(conj z), bounds the
    fundamental half-domain in the upper half plane.)
    """
    require_valid_u2(data)
    gen = data.generator(n)
    r = disc_radius(gen)
    if not r > 0:
        raise NumericError(f"oval circle {n} degenerates (fixed set empty or a point)")
    return Circle(disc_center(gen).conjugate(), r)


def upper_circle(data: SchottkyData, n: int) -> Circle:
    """Boundary circle C_n of the fundamental half-domain (upper half plane)."""
    c = oval_circle(data, n)
    return Circle(c.center.conjugate(), c.radius)


def upper_circles(data: SchottkyData) -> list[Circle]:
    return [upper_circle(data, n) for n in range(1, data.genus + 1)]


def in_fundamental_half_domain(data: SchottkyData, z: complex, margin: float = 0.0) -> bool:
    """True if z lies in the closed upper half plane outside every upper disc."""
    if z.imag < 0:
        return False
    for gen in data.generators:
        if abs(z - disc_center(gen)) < disc_radius(gen) + margin:
            return False
    return True
