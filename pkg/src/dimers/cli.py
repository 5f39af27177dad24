"""Command line front end: validate | amoeba | ronkin | weights | sample | selftest.

Exit codes: 0 success, 2 validation failure, 3 numeric failure, 4 I/O.
Configs are JSON with an explicit schema version; all floating point
output uses 17 significant digits so runs reproduce byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._svg import heightmap_svg, polyline_svg
from .errors import DimersError, NumericError, ValidationError
from .ronkin import RonkinContext, ronkin_sample
from .sampler import (
    RNG_ALGORITHM,
    ChainSpec,
    dumps_config,
    height_field,
    init_config,
    local_polygon_slopes,
    run_chain,
    total_volume,
)
from .schottky import Generator, SchottkyData, validate_u2
from .surface import HarnackData, TrackPair, trace_amoeba_boundary, zeta_coords
from .weights import (
    SquareLatticeSpec,
    WeightOptions,
    build_weight_field,
    dirac_residual,
    fay_residual,
    kasteleyn_check,
    periodicity_residual,
    solve_periodic,
)

SCHEMA_VERSION = 1


def fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class RunConfig:
    schottky: list[list[float]] = field(default_factory=list)  # [Re A, Im A, mu]
    alpha_minus: list[float] = field(default_factory=lambda: [2.4])
    alpha_plus: list[float] = field(default_factory=lambda: [-0.4])
    beta_minus: list[float] = field(default_factory=lambda: [-2.4])
    beta_plus: list[float] = field(default_factory=lambda: [0.4])
    d: list[float] = field(default_factory=list)
    max_letters: int = 8
    theta_tol: float = 1e-12
    quad_tol: float = 1e-9
    lattice_m: int = 1
    lattice_n: int = 1
    lattice_height: int = 16
    lattice_width: int = 16
    sweeps: int = 100
    seed: int = 0
    volume_target: float | None = None
    record_interval: int = 1
    out_dir: str = "out"
    formats: list[str] = field(default_factory=lambda: ["csv", "json", "svg"])

    def to_json(self) -> str:
        d = {"schema_version": SCHEMA_VERSION}
        d.update(asdict(self))
        return json.dumps(d, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "RunConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config syntax error: {exc}") from exc
        if not isinstance(raw, dict):
            raise ValidationError("config: top level must be an object")
        version = raw.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ValidationError(f"config: unsupported schema_version {version}")
        cfg = RunConfig()
        for key, value in raw.items():
            if not hasattr(cfg, key):
                raise ValidationError(f"config: unknown field {key!r}")
            setattr(cfg, key, value)
        cfg.validate()
        return cfg

    # -- structured views -------------------------------------------------

    def schottky_data(self) -> SchottkyData:
        gens = []
        for i, triple in enumerate(self.schottky):
            if len(triple) != 3:
                raise ValidationError(f"config: schottky[{i}] must be [Re A, Im A, mu]")
            re, im, mu = triple
            gens.append(Generator(a=complex(re, im), mu=float(mu)))
        return SchottkyData(tuple(gens))

    def harnack_data(self) -> HarnackData:
        if len(self.alpha_minus) != len(self.alpha_plus):
            raise ValidationError("config: alpha_minus/alpha_plus length mismatch")
        if len(self.beta_minus) != len(self.beta_plus):
            raise ValidationError("config: beta_minus/beta_plus length mismatch")
        alphas = tuple(
            TrackPair(p_minus=float(a), p_plus=float(b))
            for a, b in zip(self.alpha_minus, self.alpha_plus)
        )
        betas = tuple(
            TrackPair(p_minus=float(a), p_plus=float(b))
            for a, b in zip(self.beta_minus, self.beta_plus)
        )
        return HarnackData(alphas=alphas, betas=betas)

    def lattice_spec(self) -> SquareLatticeSpec:
        return SquareLatticeSpec(
            schottky=self.schottky_data(),
            harnack=self.harnack_data(),
            height=self.lattice_height,
            width=self.lattice_width,
            d_vector=tuple(self.d),
            opts=WeightOptions(max_letters=self.max_letters, theta_tol=self.theta_tol),
        )

    def chain_spec(self) -> ChainSpec:
        return ChainSpec(
            sweeps=self.sweeps,
            seed=self.seed,
            volume_target=self.volume_target,
            record_interval=self.record_interval,
        )

    def validate(self) -> None:
        data = self.schottky_data()
        bad = validate_u2(data)
        if bad:
            raise ValidationError(
                "config.schottky: " + "; ".join(v.message for v in bad)
            )
        har = self.harnack_data()
        errs = har.violations(data)
        if errs:
            raise ValidationError("config.harnack: " + "; ".join(errs))
        if self.harnack_m() != self.lattice_m or self.harnack_n() != self.lattice_n:
            raise ValidationError(
                "config.lattice: m, n must equal the numbers of alpha and beta pairs"
            )
        if self.d and len(self.d) != data.genus:
            raise ValidationError("config.d: length must equal the genus")
        for name in ("max_letters", "lattice_height", "lattice_width", "sweeps", "record_interval"):
            if getattr(self, name) < 0:
                raise ValidationError(f"config.{name}: must be nonnegative")
        for name in ("theta_tol", "quad_tol"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"config.{name}: must be positive")

    def harnack_m(self) -> int:
        return len(self.alpha_minus)

    def harnack_n(self) -> int:
        return len(self.beta_minus)


def parse_config(text: str) -> RunConfig:
    return RunConfig.from_json(text)


# ---------------------------------------------------------------------------
# shared residual battery


def residual_report(cfg: RunConfig, spot_seed: int = 12345) -> dict:
    """Spot residuals used by every summary: periodicity, Kasteleyn, Fay, Dirac."""
    spec = cfg.lattice_spec()
    rng = np.random.default_rng(spot_seed)
    checks = kasteleyn_check(spec)
    kast_ok = all(c.passed for c in checks)
    res = periodicity_residual(spec)
    per_max = float(res.max()) if res.size else 0.0
    fay_max = 0.0
    data = spec.schottky
    for _ in range(10):
        pts = np.sort(rng.uniform(5.0, 50.0, size=3) * rng.choice([-1.0, 1.0], 3))
        if len(set(pts)) < 3:
            continue
        zp = complex(rng.uniform(-2, 2), rng.uniform(0.5, 2.0))
        fay_max = max(
            fay_max,
            fay_residual(data, zp, *map(float, pts), d_vector=tuple(cfg.d), opts=spec.opts),
        )
    dirac_max = 0.0
    for _ in range(10):
        white = (int(rng.integers(-2, 3)), int(rng.integers(-2, 3)))
        zp = complex(rng.uniform(-2, 2), rng.uniform(0.5, 2.0))
        dirac_max = max(dirac_max, dirac_residual(spec, white, zp))
    return {
        "periodicity_max": per_max,
        "kasteleyn_pass": bool(kast_ok),
        "fay_max": float(fay_max),
        "dirac_max": float(dirac_max),
    }


def make_summary(command: str, cfg: RunConfig, residuals: dict, t0: float, **extra) -> dict:
    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "rng_algorithm": RNG_ALGORITHM,
        "wall_time_s": time.time() - t0,
        "residuals": residuals,
        "acceptance_rate": None,
        "outputs": [],
    }
    summary.update(extra)
    return summary


def write_text(path: Path, text: str, summary: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    summary["outputs"].append(str(path))


def csv_lines(header: list[str], rows) -> str:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(fmt(v) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_validate(cfg: RunConfig, out: Path, require_periodic: bool) -> tuple[int, dict]:
    t0 = time.time()
    residuals = residual_report(cfg)
    ok = residuals["kasteleyn_pass"] and residuals["fay_max"] < 1e-6 and residuals["dirac_max"] < 1e-6
    if require_periodic and residuals["periodicity_max"] > 1e-8:
        ok = False
    summary = make_summary("validate", cfg, residuals, t0, passed=bool(ok))
    write_text(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True), summary)
    return (0 if ok else 2), summary


def _interior_grid(cfg: RunConfig, count: int = 120):
    data = cfg.schottky_data()
    har = cfg.harnack_data()
    pts = sorted(har.all_points())
    xs = np.linspace(pts[0] - 1.0, pts[-1] + 1.0, max(6, int(np.sqrt(count))))
    ys = np.geomspace(0.05, 3.0, max(6, int(np.sqrt(count))))
    from .schottky import in_fundamental_half_domain

    return [
        complex(x, y)
        for x in xs
        for y in ys
        if in_fundamental_half_domain(data, complex(x, y), margin=0.05)
    ]


def cmd_amoeba(cfg: RunConfig, out: Path) -> tuple[int, dict]:
    t0 = time.time()
    data, har = cfg.schottky_data(), cfg.harnack_data()
    polylines = trace_amoeba_boundary(data, har, 96, cfg.max_letters)
    rows = []
    curves, colors = [], []
    for pl in polylines:
        name = f"{pl.kind}{pl.index}"
        for p in pl.points:
            rows.append((name, float(p[0]), float(p[1]), pl.polygon_point[0], pl.polygon_point[1]))
        curves.append(pl.points)
        colors.append("#1f77b4" if pl.kind == "arc" else "#d62728")
    grid_rows = []
    for z in _interior_grid(cfg):
        z1, z2 = zeta_coords(data, har, z, cfg.max_letters)
        grid_rows.append(
            (
                float(z.real),
                float(z.imag),
                float(z1.real),
                float(z2.real),
                float(-z2.imag / np.pi),
                float(z1.imag / np.pi),
            )
        )
    residuals = residual_report(cfg)
    summary = make_summary("amoeba", cfg, residuals, t0)
    write_text(out / "amoeba_boundary.csv", csv_lines(["component", "x1", "x2", "s1", "s2"], rows), summary)
    write_text(
        out / "amoeba_grid.csv",
        csv_lines(["re_z", "im_z", "x1", "x2", "s1", "s2"], grid_rows),
        summary,
    )
    if "svg" in cfg.formats:
        write_text(out / "amoeba.svg", polyline_svg(curves, colors), summary)
    write_text(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True), summary)
    return 0, summary


def cmd_ronkin(cfg: RunConfig, out: Path) -> tuple[int, dict]:
    t0 = time.time()
    ctx = RonkinContext(
        cfg.schottky_data(), cfg.harnack_data(), cfg.max_letters, cfg.quad_tol
    )
    rows = []
    for z in _interior_grid(cfg, 60):
        s = ronkin_sample(ctx, z)
        rows.append(
            (
                s.x1,
                s.x2,
                s.y1,
                s.y2,
                s.s1,
                s.s2,
                s.rho,
                s.sigma,
                s.h,
                s.r.real,
                s.r.imag,
                float(s.hess[0, 0]),
                float(s.hess[0, 1]),
                float(s.hess[1, 1]),
            )
        )
    residuals = residual_report(cfg)
    summary = make_summary("ronkin", cfg, residuals, t0)
    write_text(
        out / "ronkin_samples.csv",
        csv_lines(
            ["x1", "x2", "y1", "y2", "s1", "s2", "rho", "sigma", "h", "re_r", "im_r", "hess11", "hess12", "hess22"],
            rows,
        ),
        summary,
    )
    if "svg" in cfg.formats:
        polylines = trace_amoeba_boundary(cfg.schottky_data(), cfg.harnack_data(), 96, cfg.max_letters)
        curves = [pl.points for pl in polylines]
        colors = ["#1f77b4" if pl.kind == "arc" else "#d62728" for pl in polylines]
        write_text(out / "ronkin_amoeba.svg", polyline_svg(curves, colors), summary)
    write_text(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True), summary)
    return 0, summary


def cmd_weights(cfg: RunConfig, out: Path) -> tuple[int, dict]:
    t0 = time.time()
    spec = cfg.lattice_spec()
    wf = build_weight_field(spec)
    lines = [",".join(fmt(v) for v in row) for row in wf.faces]
    residuals = residual_report(cfg)
    summary = make_summary("weights", cfg, residuals, t0)
    write_text(out / "face_weights.csv", "\n".join(lines) + "\n", summary)
    if "svg" in cfg.formats:
        lo, hi = wf.faces.min(), wf.faces.max()
        norm = (wf.faces - lo) / (hi - lo + 1e-300)
        fh, fw = norm.shape
        slopes = np.stack([norm, -norm], axis=-1)
        write_text(out / "face_weights.svg", heightmap_svg(slopes), summary)
    write_text(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True), summary)
    return 0, summary


def cmd_sample(cfg: RunConfig, out: Path) -> tuple[int, dict]:
    t0 = time.time()
    spec = cfg.lattice_spec()
    wf = build_weight_field(spec)
    init = init_config(cfg.lattice_height, cfg.lattice_width, "brickwork_horizontal")
    result = run_chain(cfg.chain_spec(), wf.faces, init)
    residuals = residual_report(cfg)
    summary = make_summary(
        "sample",
        cfg,
        residuals,
        t0,
        acceptance_rate=result.acceptance_rate,
        proposals=result.proposals,
        stalled=result.stalled,
        final_volume=total_volume(result.config),
    )
    write_text(out / "config.hex", dumps_config(result.config), summary)
    write_text(
        out / "mean_height.csv",
        "\n".join(",".join(fmt(v) for v in row) for row in result.mean_height) + "\n",
        summary,
    )
    if "svg" in cfg.formats:
        slopes = local_polygon_slopes(result.mean_height)
        slopes = np.nan_to_num(slopes, nan=0.5)
        write_text(out / "height_map.svg", heightmap_svg(slopes), summary)
    write_text(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True), summary)
    return 0, summary


def cmd_selftest(cfg: RunConfig, out: Path) -> tuple[int, dict]:
    t0 = time.time()
    from .theta import theta

    residuals = residual_report(cfg)
    spec = cfg.lattice_spec()
    ok = residuals["kasteleyn_pass"] and residuals["fay_max"] < 1e-6 and residuals["dirac_max"] < 1e-6
    theta_ok = True
    if spec.schottky.genus:
        from .surface import period_matrix

        b = period_matrix(spec.schottky, cfg.max_letters)
        rng = np.random.default_rng(7)
        vals = theta(rng.uniform(-3, 3, size=(200, b.genus)), b, cfg.theta_tol)
        theta_ok = bool(np.all(np.real(vals) > 0))
        ok = ok and theta_ok
    summary = make_summary("selftest", cfg, residuals, t0, passed=bool(ok), theta_positive=theta_ok)
    write_text(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True), summary)
    return (0 if ok else 3), summary


# ---------------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="dimers", description=__doc__)
    parser.add_argument("command", choices=["validate", "amoeba", "ronkin", "weights", "sample", "selftest"])
    parser.add_argument("config", help="path to a JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory (default: config outputs.directory)")
    parser.add_argument("--seed", type=int, default=None, help="override the chain seed")
    parser.add_argument("--require-periodic", action="store_true")
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 4
    try:
        cfg = parse_config(text)
        if args.seed is not None:
            cfg.seed = args.seed
        out = Path(args.out) if args.out else Path(cfg.out_dir)
        if args.command == "validate":
            code, summary = cmd_validate(cfg, out, args.require_periodic)
        elif args.command == "amoeba":
            code, summary = cmd_amoeba(cfg, out)
        elif args.command == "ronkin":
            code, summary = cmd_ronkin(cfg, out)
        elif args.command == "weights":
            code, summary = cmd_weights(cfg, out)
        elif args.command == "sample":
            code, summary = cmd_sample(cfg, out)
        else:
            code, summary = cmd_selftest(cfg, out)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except DimersError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    print(json.dumps({k: v for k, v in summary.items() if k != "outputs"}, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
