"""Flip-chain sampling of dimer configurations on a rectangular patch.

A configuration on an H x W vertex patch (vertex (0,0) is black, color
alternates) is stored as 4-bit codes per face, bits (n, w, s, e) =
(1, 2, 4, 8).  A face with code 5 carries its north and south edges (the
"vertical pair"); code 10 carries east and west (the "horizontal pair");
both are flippable.  Heights are anchored outside the patch, so a single
flip changes exactly the flipped face's value by +-1; the sign is the flip
direction times the face parity (vertical-to-horizontal at a face whose
south-west vertex is black raises the height).

The chain itself runs in a numba kernel (one mutable configuration per
chain, sequential single-writer sweeps); chains with different seeds are
independent and may run in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ValidationError

__all__ = [
    "BIT_N",
    "BIT_W",
    "BIT_S",
    "BIT_E",
    "DimerConfig",
    "HeightField",
    "ChainSpec",
    "ChainResult",
    "init_config",
    "flippable",
    "flip",
    "flip_volume_sign",
    "height_field",
    "total_volume",
    "mh_step",
    "mh_step_volume",
    "brute_force_distribution",
    "partition_function",
    "kasteleyn_matrix",
    "kasteleyn_partition",
    "run_chain",
    "build_volume_config",
    "dumps_config",
    "loads_config",
]

BIT_N, BIT_W, BIT_S, BIT_E = 1, 2, 4, 8

RNG_ALGORITHM = "flip-mh/numba-mt19937/v1"


@dataclass
class DimerConfig:
    """Perfect matching of the H x W vertex patch as 4-bit face codes."""

    nf: np.ndarray  # (H-1, W-1) uint8
    height_vertices: int
    width_vertices: int

    @property
    def shape_faces(self) -> tuple[int, int]:
        return self.nf.shape

    def copy(self) -> "DimerConfig":
        return DimerConfig(self.nf.copy(), self.height_vertices, self.width_vertices)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """(hedges, vedges) boolean arrays; hedges[y, x] is (x,y)-(x+1,y)."""
        h, w = self.height_vertices, self.width_vertices
        he = np.zeros((h, w - 1), dtype=bool)
        ve = np.zeros((h - 1, w), dtype=bool)
        nf = self.nf
        he[:-1, :] = (nf & BIT_S) > 0
        he[-1, :] = (nf[-1, :] & BIT_N) > 0
        ve[:, :-1] = (nf & BIT_W) > 0
        ve[:, -1] = (nf[:, -1] & BIT_E) > 0
        return he, ve

    def violations(self) -> list[str]:
        out = []
        nf = self.nf
        fh, fw = nf.shape
        if fh != self.height_vertices - 1 or fw != self.width_vertices - 1:
            out.append("face grid shape does not match vertex dimensions")
            return out
        s_of_north = (nf[1:, :] & BIT_S) > 0
        n_of_south = (nf[:-1, :] & BIT_N) > 0
        if np.any(s_of_north != n_of_south):
            out.append("shared-edge bits inconsistent between vertical neighbors")
        w_of_east = (nf[:, 1:] & BIT_W) > 0
        e_of_west = (nf[:, :-1] & BIT_E) > 0
        if np.any(w_of_east != e_of_west):
            out.append("shared-edge bits inconsistent between horizontal neighbors")
        he, ve = self.edges()
        cover = np.zeros((self.height_vertices, self.width_vertices), dtype=int)
        cover[:, :-1] += he
        cover[:, 1:] += he
        cover[:-1, :] += ve
        cover[1:, :] += ve
        if np.any(cover != 1):
            out.append("not a perfect matching: some vertex not covered exactly once")
        return out

    def require_valid(self) -> None:
        bad = self.violations()
        if bad:
            raise ValidationError("; ".join(bad))


@dataclass(frozen=True)
class HeightField:
    """Real height per face, anchored at level 0 outside the patch."""

    values: np.ndarray


@dataclass(frozen=True)
class ChainSpec:
    sweeps: int
    seed: int = 0
    volume_target: float | None = None
    record_interval: int = 1  # sweeps between height records

    def __post_init__(self):
        if self.sweeps < 0:
            raise ValidationError("sweeps must be >= 0")
        if self.record_interval < 1:
            raise ValidationError("record_interval must be >= 1")


@dataclass(frozen=True)
class ChainResult:
    config: DimerConfig
    mean_height: np.ndarray
    acceptance_rate: float
    proposals: int
    seed: int
    algorithm: str = RNG_ALGORITHM
    stalled: bool = False


def _faces_from_edges(he: np.ndarray, ve: np.ndarray) -> np.ndarray:
    h, w = he.shape[0], ve.shape[1]
    nf = np.zeros((h - 1, w - 1), dtype=np.uint8)
    nf |= (he[1:, :] * BIT_N).astype(np.uint8)
    nf |= (he[:-1, :] * BIT_S).astype(np.uint8)
    nf |= (ve[:, :-1] * BIT_W).astype(np.uint8)
    nf |= (ve[:, 1:] * BIT_E).astype(np.uint8)
    return nf


def init_config(height: int, width: int, pattern: str = "brickwork_horizontal") -> DimerConfig:
    """Uniform brickwork matching of the H x W vertex patch."""
    if height < 1 or width < 1 or (height * width) % 2 != 0:
        raise ValidationError("patch admits no perfect matching (odd vertex count)")
    he = np.zeros((height, width - 1), dtype=bool)
    ve = np.zeros((height - 1, width), dtype=bool)
    if pattern == "brickwork_horizontal":
        if width % 2 != 0:
            raise ValidationError("brickwork_horizontal needs an even number of columns")
        he[:, 0::2] = True
    elif pattern == "brickwork_vertical":
        if height % 2 != 0:
            raise ValidationError("brickwork_vertical needs an even number of rows")
        ve[0::2, :] = True
    else:
        raise ValidationError(f"unknown pattern {pattern!r}")
    cfg = DimerConfig(_faces_from_edges(he, ve), height, width)
    cfg.require_valid()
    return cfg


def flippable(config: DimerConfig, face: tuple[int, int]) -> str | None:
    """None, 'vertical_to_horizontal' (code 5) or 'horizontal_to_vertical' (10)."""
    x, y = face
    code = int(config.nf[y, x])
    if code == 5:
        return "vertical_to_horizontal"
    if code == 10:
        return "horizontal_to_vertical"
    return None


def flip(config: DimerConfig, face: tuple[int, int]) -> DimerConfig:
    """Flip the parallel pair at a face in place (XOR updates); returns config."""
    x, y = face
    if flippable(config, face) is None:
        raise ValidationError(f"face {face} is not flippable (code {int(config.nf[y, x])})")
    nf = config.nf
    fh, fw = nf.shape
    nf[y, x] ^= 15
    if y + 1 < fh:
        nf[y + 1, x] ^= BIT_S
    if y - 1 >= 0:
        nf[y - 1, x] ^= BIT_N
    if x - 1 >= 0:
        nf[y, x - 1] ^= BIT_E
    if x + 1 < fw:
        nf[y, x + 1] ^= BIT_W
    return config


def flip_volume_sign(config: DimerConfig, face: tuple[int, int]) -> int:
    """Height change (+1 or -1) the flip at this face would cause."""
    x, y = face
    code = int(config.nf[y, x])
    if code not in (5, 10):
        raise ValidationError(f"face {face} is not flippable")
    parity = 1 if (x + y) % 2 == 0 else -1
    return parity if code == 5 else -parity


def height_field(config: DimerConfig, reference: str = "quarter") -> HeightField:
    """Integrate the dual of omega_D - omega_0 over the faces.

    reference 'quarter' is the standard 1/4-per-edge unit form; 'north' puts
    weight one on each black vertex's north edge (differences of two
    configurations do not depend on this choice).
    """
    config.require_valid()
    nf = config.nf
    fh, fw = nf.shape
    h = np.zeros((fh, fw))
    wbit = (nf & BIT_W) > 0
    nbit = (nf & BIT_N) > 0
    ebit = (nf & BIT_E) > 0

    def w0_v(x, y):  # omega_0 of the vertical edge (x, y)-(x, y+1)
        if reference == "quarter":
            return 0.25
        return 1.0 if (x + y) % 2 == 0 else 0.0

    def w0_h(x, y):  # omega_0 of the horizontal edge (x, y)-(x+1, y)
        if reference == "quarter":
            return 0.25
        return 0.0

    # anchor: enter face (0, 0) from outside across its west edge; the
    # entering step d_east(-1, 0) has face parity (-1 + 0) odd, sign +1
    h[0, 0] = float(wbit[0, 0]) - w0_v(0, 0)
    for x in range(1, fw):
        # d_east(x-1, 0): crossing the east edge of face (x-1, 0)
        s = 1.0 if (x - 1) % 2 == 1 else -1.0
        h[0, x] = h[0, x - 1] + (float(ebit[0, x - 1]) - w0_v(x, 0)) * s
    for y in range(1, fh):
        for x in range(fw):
            s = 1.0 if (x + y - 1) % 2 == 0 else -1.0
            h[y, x] = h[y - 1, x] + (float(nbit[y - 1, x]) - w0_h(x, y)) * s
    return HeightField(values=h)


def total_volume(config: DimerConfig) -> float:
    return float(height_field(config).values.sum())


def mh_step(config: DimerConfig, weights: np.ndarray, rng: np.random.Generator) -> DimerConfig:
    """One Metropolis proposal: uniform face; accept with min(1, W^+-1).

    W[y, x] is the face flip ratio nu(vertical pair)/nu(horizontal pair), so
    the acceptance ratio is 1/W for a 5 -> 10 flip and W for 10 -> 5.
    """
    fh, fw = config.nf.shape
    k = int(rng.integers(0, fh * fw))
    y, x = divmod(k, fw)
    code = int(config.nf[y, x])
    if code not in (5, 10):
        return config
    r = 1.0 / weights[y, x] if code == 5 else weights[y, x]
    if r >= 1.0 or rng.random() < r:
        flip(config, (x, y))
    return config


def _flippable_by_sign(config: DimerConfig) -> tuple[list, list]:
    plus, minus = [], []
    fh, fw = config.nf.shape
    for y in range(fh):
        for x in range(fw):
            code = int(config.nf[y, x])
            if code not in (5, 10):
                continue
            if flip_volume_sign(config, (x, y)) > 0:
                plus.append((x, y))
            else:
                minus.append((x, y))
    return plus, minus


def mh_step_volume(
    config: DimerConfig, weights: np.ndarray, rng: np.random.Generator
) -> DimerConfig:
    """One volume-preserving pair proposal with the Hastings count correction.

    An ordered pair (one +1 face, one -1 face) is drawn uniformly; the move
    is accepted with min(1, r_a r_b |P_X||M_X| / (|P_Y||M_Y|)), which makes
    the chain exactly reversible on the fixed-volume fiber.
    """
    plus, minus = _flippable_by_sign(config)
    if not plus or not minus:
        raise NumericError("volume chain stalled: no +1/-1 flip pair exists")
    a = plus[int(rng.integers(0, len(plus)))]
    b = minus[int(rng.integers(0, len(minus)))]
    q_fwd = len(plus) * len(minus)

    def ratio(face):
        code = int(config.nf[face[1], face[0]])
        w = float(weights[face[1], face[0]])
        return 1.0 / w if code == 5 else w

    ra = ratio(a)
    flip(config, a)
    if flippable(config, b) is None or flip_volume_sign(config, b) > 0:
        flip(config, a)  # proposal invalid after the first flip: reject
        return config
    rb = ratio(b)
    flip(config, b)
    plus2, minus2 = _flippable_by_sign(config)
    q_bwd = len(plus2) * len(minus2)
    acc = ra * rb * q_fwd / q_bwd
    if acc >= 1.0 or rng.random() < acc:
        return config
    flip(config, b)
    flip(config, a)
    return config


# ---------------------------------------------------------------------------
# exact oracles


def brute_force_distribution(
    hnu: np.ndarray, vnu: np.ndarray
) -> dict[bytes, float]:
    """Boltzmann distribution by exhaustive backtracking over matchings.

    ``hnu[y, x]`` weights edge (x,y)-(x+1,y), ``vnu[y, x]`` weights
    (x,y)-(x,y+1); keys are the face-code grids as bytes.
    """
    h, w = hnu.shape[0], vnu.shape[1]
    n_edges = hnu.size + vnu.size
    if n_edges > 30:
        raise ValidationError(f"{n_edges} edges: exhaustive enumeration guard is 30")
    he = np.zeros((h, w - 1), dtype=bool)
    ve = np.zeros((h - 1, w), dtype=bool)
    used = np.zeros((h, w), dtype=bool)
    out: dict[bytes, float] = {}

    def rec(k: int, weight: float):
        if k == h * w:
            nf = _faces_from_edges(he, ve)
            out[nf.tobytes()] = out.get(nf.tobytes(), 0.0) + weight
            return
        y, x = divmod(k, w)
        if used[y, x]:
            rec(k + 1, weight)
            return
        if x + 1 < w and not used[y, x + 1]:
            used[y, x] = used[y, x + 1] = True
            he[y, x] = True
            rec(k + 1, weight * hnu[y, x])
            he[y, x] = False
            used[y, x] = used[y, x + 1] = False
        if y + 1 < h and not used[y + 1, x]:
            used[y, x] = used[y + 1, x] = True
            ve[y, x] = True
            rec(k + 1, weight * vnu[y, x])
            ve[y, x] = False
            used[y, x] = used[y + 1, x] = False

    rec(0, 1.0)
    z = sum(out.values())
    if z == 0:
        raise NumericError("patch admits no perfect matching")
    return {k: v / z for k, v in out.items()}


def partition_function(hnu: np.ndarray, vnu: np.ndarray) -> float:
    """Z by enumeration (same guard as brute_force_distribution)."""
    h, w = hnu.shape[0], vnu.shape[1]
    total = 0.0
    n_edges = hnu.size + vnu.size
    if n_edges > 30:
        raise ValidationError(f"{n_edges} edges: exhaustive enumeration guard is 30")
    used = np.zeros((h, w), dtype=bool)

    def rec(k: int, weight: float):
        nonlocal total
        if k == h * w:
            total += weight
            return
        y, x = divmod(k, w)
        if used[y, x]:
            rec(k + 1, weight)
            return
        if x + 1 < w and not used[y, x + 1]:
            used[y, x] = used[y, x + 1] = True
            rec(k + 1, weight * hnu[y, x])
            used[y, x] = used[y, x + 1] = False
        if y + 1 < h and not used[y + 1, x]:
            used[y, x] = used[y + 1, x] = True
            rec(k + 1, weight * vnu[y, x])
            used[y, x] = used[y + 1, x] = False

    rec(0, 1.0)
    return total


def kasteleyn_matrix(hnu: np.ndarray, vnu: np.ndarray) -> np.ndarray:
    """Signed white-black adjacency: horizontal edges +, vertical (-1)^x.

    The alternating sign product around every square face is -1, the
    Kasteleyn condition for quadrilaterals.
    """
    h, w = hnu.shape[0], vnu.shape[1]
    whites = [(x, y) for y in range(h) for x in range(w) if (x + y) % 2 == 1]
    blacks = [(x, y) for y in range(h) for x in range(w) if (x + y) % 2 == 0]
    widx = {v: i for i, v in enumerate(whites)}
    bidx = {v: i for i, v in enumerate(blacks)}
    if len(whites) != len(blacks):
        raise ValidationError("patch has unequal color classes; Z = 0")
    k = np.zeros((len(whites), len(blacks)))

    def add(v1, v2, weight, sign):
        wv, bv = (v1, v2) if (v1[0] + v1[1]) % 2 == 1 else (v2, v1)
        k[widx[wv], bidx[bv]] = sign * weight

    for y in range(h):
        for x in range(w - 1):
            add((x, y), (x + 1, y), float(hnu[y, x]), 1.0)
    for y in range(h - 1):
        for x in range(w):
            add((x, y), (x, y + 1), float(vnu[y, x]), (-1.0) ** x)
    return k


def kasteleyn_partition(hnu: np.ndarray, vnu: np.ndarray) -> float:
    """Z = |det K| for the signed adjacency matrix."""
    return float(abs(np.linalg.det(kasteleyn_matrix(hnu, vnu))))


# ---------------------------------------------------------------------------
# chain driver (numba kernels)


def run_chain(
    chain: ChainSpec,
    weights: np.ndarray,
    init: DimerConfig,
    collect_histogram: bool = False,
) -> ChainResult | tuple[ChainResult, dict[int, int]]:
    """Run the flip chain; volume-preserving when a target volume is set.

    Reproducible bit for bit for a fixed (seed, algorithm) pair; the
    algorithm identifier is recorded on the result.  With
    ``collect_histogram`` (small patches only) the visited-state counts
    keyed by the packed face-code integer are returned as well.
    """
    from . import _kernels

    init.require_valid()
    cfg = init.copy()
    fh, fw = cfg.nf.shape
    if weights.shape != (fh, fw):
        raise ValidationError(f"weight grid shape {weights.shape} != faces {(fh, fw)}")
    if np.any(weights <= 0):
        raise ValidationError("face weights must be positive")
    proposals = chain.sweeps * fh * fw
    record_every = chain.record_interval * fh * fw
    mean_h = np.zeros((fh, fw))
    hist = None
    if collect_histogram:
        if fh * fw > 14:
            raise ValidationError("histogram collection only for <= 14 faces")
        hist = np.zeros(16 ** (fh * fw), dtype=np.int64)
    if chain.volume_target is not None:
        start = total_volume(cfg)
        if abs(start - chain.volume_target) > 1e-9:
            cfg = build_volume_config(cfg, chain.volume_target, seed=chain.seed ^ 0x9E3779B9)
        acc, nrec, stalled = _kernels.volume_chain(
            cfg.nf,
            np.asarray(weights, dtype=np.float64),
            proposals,
            chain.seed,
            record_every,
            mean_h,
            hist if hist is not None else np.zeros(0, dtype=np.int64),
            hist is not None,
        )
    else:
        acc, nrec, stalled = _kernels.plain_chain(
            cfg.nf,
            np.asarray(weights, dtype=np.float64),
            proposals,
            chain.seed,
            record_every,
            mean_h,
            hist if hist is not None else np.zeros(0, dtype=np.int64),
            hist is not None,
        )
    if nrec > 0:
        mean_h /= nrec
    else:
        mean_h = height_field(cfg).values
    result = ChainResult(
        config=cfg,
        mean_height=mean_h,
        acceptance_rate=acc / proposals if proposals else 0.0,
        proposals=proposals,
        seed=chain.seed,
        stalled=bool(stalled),
    )
    if collect_histogram:
        nz = {int(i): int(c) for i, c in enumerate(hist) if c}
        return result, nz
    return result


def build_volume_config(init: DimerConfig, target: float, seed: int = 0) -> DimerConfig:
    """Drive the volume to the target with greedy signed flips (seeded)."""
    cfg = init.copy()
    vol = total_volume(cfg)
    if abs(target - vol - round(target - vol)) > 1e-9:
        raise ValidationError("volume target unreachable: must differ by an integer")
    rng = np.random.default_rng(seed)
    steps = int(round(target - vol))
    want = 1 if steps > 0 else -1
    for _ in range(abs(steps)):
        plus, minus = _flippable_by_sign(cfg)
        pool = plus if want > 0 else minus
        if not pool:
            raise NumericError("cannot reach volume target: no flips of the needed sign")
        face = pool[int(rng.integers(0, len(pool)))]
        flip(cfg, face)
    return cfg


def local_polygon_slopes(mean_height: np.ndarray) -> np.ndarray:
    """Per-face local slopes in polygon coordinates, NaN on the border.

    One fundamental-domain step is the diamond diagonal of the grid:
    s1 tracks the height change per (-1, +1) step, s2 per (-1, -1) step,
    shifted by (+1/2, -1/2) into the polygon-map normalization (the four
    frozen staircase phases land exactly on the polygon corners, the flat
    brickwork at its center).
    """
    fh, fw = mean_height.shape
    out = np.full((fh, fw, 2), np.nan)
    h = mean_height
    out[1:-1, 1:-1, 0] = h[2:, :-2] - h[1:-1, 1:-1] + 0.5
    out[1:-1, 1:-1, 1] = h[:-2, :-2] - h[1:-1, 1:-1] - 0.5
    return out


def dumps_config(config: DimerConfig) -> str:
    """One line per face row, each face one lowercase hex digit."""
    return "\n".join("".join(format(int(v), "x") for v in row) for row in config.nf) + "\n"


def loads_config(text: str, height: int, width: int) -> DimerConfig:
    rows = [r for r in text.strip().splitlines() if r]
    nf = np.array([[int(ch, 16) for ch in row] for row in rows], dtype=np.uint8)
    cfg = DimerConfig(nf, height, width)
    cfg.require_valid()
    return cfg
