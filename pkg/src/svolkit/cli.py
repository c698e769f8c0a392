"""Command-line front end: density curves, option prices, validation suite
and golden-table generation.

JSON config in (``--config``), flags override, CSV or JSON out.  Exit codes
are a stable contract: 0 ok, 2 config error, 3 numerical failure,
4 martingale violation, 5 validation failure.  Floating-point output uses
``repr`` (shortest round-trip) so closed-form columns are byte-stable.
"""

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import bessel3, lognormal, pricing
from .model import ModelSpec, RngSpec, VolKind, default_steps, density_mc
from .numerics import (
    NonConvergence,
    NonFiniteIntegrand,
    QuadratureSpec,
    UnstableInversion,
    integrate_1d,
    norm_pdf,
)
from .pricing import MartingaleViolation, OptionSpec

__all__ = [
    "RunConfig",
    "GridSpec",
    "McSpec",
    "OutputSpec",
    "ValidationReport",
    "run_density",
    "run_price",
    "run_validate",
    "run_table",
    "main",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_NUMERICAL",
    "EXIT_MARTINGALE",
    "EXIT_VALIDATION",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_MARTINGALE = 4
EXIT_VALIDATION = 5


class ConfigError(ValueError):
    """Bad or inconsistent run configuration."""


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if not (0.0 < self.lo < self.hi):
            raise ConfigError("grid bounds must be positive and ordered")
        if self.n < 2:
            raise ConfigError("grid needs at least 2 points")

    def points(self):
        return np.linspace(self.lo, self.hi, self.n)


@dataclass(frozen=True)
class McSpec:
    n_paths: int = 200_000
    n_steps: int | None = None
    seed: int = 20259


@dataclass(frozen=True)
class OutputSpec:
    format: str = "csv"
    path: str | None = None

    def __post_init__(self):
        if self.format not in ("csv", "json"):
            raise ConfigError("output format must be csv or json")


@dataclass(frozen=True)
class RunConfig:
    """Complete description of one CLI run."""

    model: ModelSpec
    task: str
    t: float
    grid: GridSpec | None = None
    strike: float | None = None
    kind: str = "call"
    method: str = "auto"
    mc: McSpec = field(default_factory=McSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    threads: int = 1
    allow_local_martingale: bool = False

    def __post_init__(self):
        if self.task not in ("density", "price", "validate", "table"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.method not in ("auto", "closed_form", "mixing_mc", "payoff_mc"):
            raise ConfigError(f"unknown method {self.method!r}")
        if not self.t > 0.0:
            raise ConfigError("t must be positive")
        if self.kind not in ("call", "put"):
            raise ConfigError("kind must be call or put")

    def to_json(self) -> dict:
        return {
            "model": self.model.to_json(),
            "task": self.task,
            "t": self.t,
            "grid": None if self.grid is None else
                {"lo": self.grid.lo, "hi": self.grid.hi, "n": self.grid.n},
            "strike": self.strike,
            "kind": self.kind,
            "method": self.method,
            "mc": {"n_paths": self.mc.n_paths, "n_steps": self.mc.n_steps,
                   "seed": self.mc.seed},
            "output": {"format": self.output.format, "path": self.output.path},
            "threads": self.threads,
            "allow_local_martingale": self.allow_local_martingale,
        }

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        grid = data.get("grid")
        mc = data.get("mc") or {}
        out = data.get("output") or {}
        return cls(
            model=ModelSpec.from_json(data["model"]),
            task=data["task"],
            t=float(data["t"]),
            grid=None if grid is None else GridSpec(float(grid["lo"]),
                                                    float(grid["hi"]),
                                                    int(grid["n"])),
            strike=None if data.get("strike") is None else float(data["strike"]),
            kind=data.get("kind", "call"),
            method=data.get("method", "auto"),
            mc=McSpec(int(mc.get("n_paths", 200_000)),
                      None if mc.get("n_steps") is None else int(mc["n_steps"]),
                      int(mc.get("seed", 20259))),
            output=OutputSpec(out.get("format", "csv"), out.get("path")),
            threads=int(data.get("threads", 1)),
            allow_local_martingale=bool(data.get("allow_local_martingale", False)),
        )


@dataclass
class ValidationReport:
    checks: list

    @property
    def overall(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def to_json(self) -> dict:
        return {"checks": self.checks, "overall": self.overall}


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _resolve_method(cfg: RunConfig) -> str:
    if cfg.method != "auto":
        return cfg.method
    # closed forms are preferred wherever they exist
    if cfg.model.vol.kind in ("constant", "lognormal"):
        return "closed_form"
    return "mixing_mc"


def _steps(cfg: RunConfig) -> int:
    return cfg.mc.n_steps or default_steps(cfg.t)


def run_density(cfg: RunConfig):
    """Density rows (r, density, stderr); stderr empty for true closed forms."""
    if cfg.grid is None:
        raise ConfigError("density task requires an r-grid")
    method = _resolve_method(cfg)
    r = cfg.grid.points()
    rng = RngSpec(cfg.mc.seed)
    if method == "payoff_mc":
        raise ConfigError("payoff_mc is a pricing method; densities use "
                          "closed_form or mixing_mc")
    if method == "closed_form":
        kind = cfg.model.vol.kind
        if kind == "constant":
            sig = cfg.model.vol.sigma
            st = sig * math.sqrt(cfg.t)
            a = (np.log(r / cfg.model.x0) + 0.5 * st * st) / st
            dens = norm_pdf(a) / (r * st)
            rows = [(float(x), float(d), None) for x, d in zip(r, dens)]
        elif kind == "lognormal":
            params = lognormal.LNModelParams.from_model(cfg.model)
            dens = lognormal.density_curve(params, cfg.t, r)
            rows = [(float(x), float(d), None) for x, d in zip(r, dens)]
        else:
            dens, se = bessel3.bes3_asset_density(
                cfg.model, cfg.t, r, n_triples=cfg.mc.n_paths,
                n_steps=cfg.mc.n_steps, rng=rng)
            rows = [(float(x), float(d), float(s)) for x, d, s in zip(r, dens, se)]
    else:
        out = density_mc(cfg.model, cfg.t, r, cfg.mc.n_paths, _steps(cfg), rng,
                         threads=cfg.threads)
        rows = [(float(x), d, s) for x, (d, s) in zip(r, out)]
    return ("r", "density", "stderr"), rows


def run_price(cfg: RunConfig):
    """Price rows (strike, kind, value, stderr, method)."""
    if cfg.strike is not None:
        strikes = [cfg.strike]
    elif cfg.grid is not None:
        strikes = [float(k) for k in cfg.grid.points()]
    else:
        raise ConfigError("price task requires --strike or a strike grid")
    method = _resolve_method(cfg)
    rng = RngSpec(cfg.mc.seed)
    rows = []
    for k in strikes:
        if method == "closed_form":
            vkind = cfg.model.vol.kind
            if vkind == "constant":
                v = pricing.black_scholes_price(cfg.model.x0, k,
                                                cfg.model.vol.sigma, cfg.t,
                                                cfg.kind)
                rows.append((k, cfg.kind, v, None, "black_scholes"))
            elif vkind == "lognormal":
                params = lognormal.LNModelParams.from_model(cfg.model)
                v = lognormal.vanilla_closed_form(params, cfg.t, k, cfg.kind)
                rows.append((k, cfg.kind, v, None, "closed_form_lognormal"))
            else:
                raise ConfigError("no closed-form price ships for bessel3; "
                                  "use mixing_mc or payoff_mc")
        else:
            opt = OptionSpec(k, cfg.t, cfg.kind)
            fn = pricing.price_mixing_mc if method == "mixing_mc" else pricing.payoff_mc_price
            q = fn(cfg.model, opt, cfg.mc.n_paths, cfg.mc.n_steps, rng,
                   allow_local_martingale=cfg.allow_local_martingale,
                   threads=cfg.threads)
            rows.append((k, cfg.kind, q.value, q.stderr, q.method))
    return ("strike", "kind", "value", "stderr", "method"), rows


# --- validation suite -------------------------------------------------------

def _check(name, target, measured, tolerance):
    return {
        "name": name,
        "target": target,
        "measured": measured,
        "tolerance": tolerance,
        "pass": bool(abs(measured - target) <= tolerance),
    }


def _suite(cfg: RunConfig):
    seed = cfg.mc.seed
    bench = lognormal.LNModelParams(x0=1.0, y0=0.2, sigma=0.3, rho=-0.5)

    def bs_constant_density():
        m = ModelSpec.constant(0.2, x0=1.0, rho=0.0, horizon=1.0)
        (d, _), = density_mc(m, 1.0, [1.0], 4096, 64, RngSpec(seed))
        st = 0.2
        ref = float(norm_pdf(0.5 * st) / st)
        return _check("bs_constant_density", 0.0, d - ref, 1e-10)

    def bs_constant_price():
        m = ModelSpec.constant(0.2, x0=100.0, rho=0.0, horizon=1.0)
        q = pricing.price_mixing_mc(m, OptionSpec(100.0, 1.0, "call"), 4096,
                                    64, RngSpec(seed))
        ref = pricing.black_scholes_price(100.0, 100.0, 0.2, 1.0, "call")
        return _check("bs_constant_price", 0.0, q.value - ref, 1e-12)

    def g_normalization():
        p = lognormal.LNModelParams(x0=1.0, y0=0.2, sigma=1.0, rho=-0.5)
        mass = lognormal._plan(p, 1.0).mass
        return _check("lognormal_g_normalization", 1.0, mass, 1e-4)

    def kernel_identity():
        b, c, t, x = 1.0, 0.7, 1.0, 0.5
        val, _ = integrate_1d(
            lambda y: math.exp(-c * y * y)
            * bessel3.eq_a2(b, t, x, y)
            * math.exp(-((y - x) ** 2) / (2 * t))
            / math.sqrt(2 * math.pi * t),
            -math.inf, math.inf,
        )
        return _check("appendix_kernel_identity", bessel3.eq_a1(b, c, t, x),
                      val, 1e-8)

    def bes3_squared_norm():
        b, t = 0.8, 1.0
        v = bessel3.bes3_laplace(bessel3.Bes3LaplacePoint(1e-9, b, t))
        ref = bessel3.eq_a1(b, 0.0, t, 1.0) * bessel3.eq_a1(b, 0.0, t, 0.0) ** 2
        return _check("bes3_laplace_squared_norm_identity", ref, v, 1e-6)

    def joint_roundtrip():
        t, c, z = 1.0, 1.0, 0.0
        spec = QuadratureSpec(abs_tol=1e-8, rel_tol=1e-7, max_subdivisions=400)
        val = 0.0
        for a, b in ((1e-9, 0.05), (0.05, 0.5), (0.5, 3.0), (3.0, 30.0)):
            val += integrate_1d(
                lambda y: math.exp(-c * y) * bessel3.joint_bm_density(z, y, t),
                a, b, spec)[0]
        return _check("joint_density_roundtrip", bessel3.hstar(t, c, z), val, 1e-4)

    def closed_form_vs_mc():
        n = 50_000
        out = density_mc(bench.to_model(1.0), 1.0, [1.0], n, 512, RngSpec(seed))
        d_mc, se = out[0]
        d_cf = lognormal.density_closed_form(bench, 1.0, 1.0)
        return _check("lognormal_closed_form_vs_mc", 0.0, (d_cf - d_mc) / se, 3.0)

    def parity():
        c = lognormal.vanilla_closed_form(bench, 1.0, 1.0, "call")
        p = lognormal.vanilla_closed_form(bench, 1.0, 1.0, "put")
        return _check("parity_closed_form", 0.0, c - p, 2e-3)

    def martingale_negative_rho():
        mean, se, _ = pricing.martingale_check(bench.to_model(1.0), 1.0,
                                               50_000, 256, RngSpec(seed))
        return _check("martingale_lognormal", 0.0, (mean - 1.0) / se, 3.0)

    def positive_rho_refusal():
        m = ModelSpec.lognormal(0.3, 0.2, rho=0.5, horizon=1.0)
        try:
            pricing.price_mixing_mc(m, OptionSpec(1.0, 1.0, "call"), 1024, 64,
                                    RngSpec(seed))
            raised = 0.0
        except MartingaleViolation:
            raised = 1.0
        return _check("positive_rho_refusal", 1.0, raised, 0.0)

    def determinism():
        m = ModelSpec.bessel3(x0=1.0, rho=-0.3, horizon=1.0)
        a = density_mc(m, 0.5, [0.9, 1.1], 20_000, 128, RngSpec(seed), threads=1)
        b = density_mc(m, 0.5, [0.9, 1.1], 20_000, 128, RngSpec(seed), threads=2)
        diff = max(abs(x[0] - y[0]) for x, y in zip(a, b))
        return _check("density_mc_determinism", 0.0, diff, 0.0)

    return [
        ("bs_constant_density", bs_constant_density),
        ("bs_constant_price", bs_constant_price),
        ("lognormal_g_normalization", g_normalization),
        ("appendix_kernel_identity", kernel_identity),
        ("bes3_laplace_squared_norm_identity", bes3_squared_norm),
        ("joint_density_roundtrip", joint_roundtrip),
        ("lognormal_closed_form_vs_mc", closed_form_vs_mc),
        ("parity_closed_form", parity),
        ("martingale_lognormal", martingale_negative_rho),
        ("positive_rho_refusal", positive_rho_refusal),
        ("density_mc_determinism", determinism),
    ]


def run_validate(cfg: RunConfig, check_names=None) -> ValidationReport:
    """Run the validation suite (or the named subset) and report per-check
    pass/fail.  An empty subset yields a vacuous overall pass."""
    suite = _suite(cfg)
    if check_names is not None:
        wanted = set(check_names)
        suite = [(name, fn) for name, fn in suite if name in wanted]
    return ValidationReport([fn() for _, fn in suite])


def run_table(cfg: RunConfig):
    """Golden reference table: closed-form density and price ladders at the
    configured model and maturity."""
    rows = []
    if cfg.model.vol.kind != "lognormal":
        raise ConfigError("table task ships for the lognormal model")
    params = lognormal.LNModelParams.from_model(cfg.model)
    grid = cfg.grid or GridSpec(0.5, 2.0, 16)
    for r in grid.points():
        rows.append(("density", float(r),
                     lognormal.density_closed_form(params, cfg.t, float(r))))
    for k in np.linspace(0.8, 1.2, 5):
        rows.append(("call", float(k),
                     lognormal.vanilla_closed_form(params, cfg.t, float(k), "call")))
        rows.append(("put", float(k),
                     lognormal.vanilla_closed_form(params, cfg.t, float(k), "put")))
    return ("table", "x", "value"), rows


# ---------------------------------------------------------------------------
# output and argument plumbing
# ---------------------------------------------------------------------------

def render_csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def render_json(header, rows) -> str:
    return json.dumps([dict(zip(header, row)) for row in rows], indent=2) + "\n"


def _emit(cfg: RunConfig, text: str):
    if cfg.output.path:
        with open(cfg.output.path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_grid(text: str) -> GridSpec:
    try:
        lo, hi, n = text.split(":")
        return GridSpec(float(lo), float(hi), int(n))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad grid {text!r}, expected MIN:MAX:N") from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="svolkit",
        description="Densities and vanilla option prices in linear stochastic "
                    "volatility models",
    )
    sub = ap.add_subparsers(dest="task", required=True)
    for task in ("density", "price", "validate", "table"):
        p = sub.add_parser(task)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--model", choices=["constant", "lognormal", "bessel3"])
        p.add_argument("--x0", type=float)
        p.add_argument("--y0", type=float)
        p.add_argument("--sigma", type=float)
        p.add_argument("--rho", type=float)
        p.add_argument("--t", type=float)
        p.add_argument("--strike", type=float)
        p.add_argument("--kind", choices=["call", "put"])
        p.add_argument("--r-grid", dest="r_grid", help="MIN:MAX:N")
        p.add_argument("--method",
                       choices=["auto", "closed_form", "mixing_mc", "payoff_mc"])
        p.add_argument("--paths", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--out")
        p.add_argument("--format", choices=["csv", "json"])
        p.add_argument("--allow-local-martingale", action="store_true",
                       default=None)
    return ap


def _config_from_args(args) -> RunConfig:
    if args.config:
        with open(args.config) as fh:
            cfg = RunConfig.from_json(json.load(fh))
    else:
        cfg = RunConfig(
            model=ModelSpec.lognormal(0.3, 0.2, x0=1.0, rho=-0.5, horizon=1e9),
            task=args.task,
            t=1.0,
        )
    # flags win over the config file
    model = cfg.model
    kind = args.model or model.vol.kind
    x0 = args.x0 if args.x0 is not None else model.x0
    rho = args.rho if args.rho is not None else model.rho
    t = args.t if args.t is not None else cfg.t
    sigma = args.sigma if args.sigma is not None else model.vol.sigma
    y0 = args.y0 if args.y0 is not None else model.y0
    horizon = max(model.horizon, t)
    if kind == "constant":
        sigma = sigma if sigma is not None else 0.2
        model = ModelSpec(x0, sigma, rho, horizon, VolKind.constant(sigma))
    elif kind == "lognormal":
        sigma = sigma if sigma is not None else 0.3
        model = ModelSpec(x0, y0, rho, horizon, VolKind.lognormal(sigma))
    else:
        model = ModelSpec(x0, 1.0, rho, horizon, VolKind.bessel3())

    threads = args.threads
    if threads is None:
        env = os.environ.get("SVOLKIT_THREADS")
        threads = int(env) if env else cfg.threads

    return RunConfig(
        model=model,
        task=args.task,
        t=t,
        grid=_parse_grid(args.r_grid) if args.r_grid else cfg.grid,
        strike=args.strike if args.strike is not None else cfg.strike,
        kind=args.kind or cfg.kind,
        method=args.method or cfg.method,
        mc=McSpec(
            args.paths if args.paths is not None else cfg.mc.n_paths,
            args.steps if args.steps is not None else cfg.mc.n_steps,
            args.seed if args.seed is not None else cfg.mc.seed,
        ),
        output=OutputSpec(args.format or cfg.output.format,
                          args.out if args.out is not None else cfg.output.path),
        threads=threads,
        allow_local_martingale=(
            args.allow_local_martingale
            if args.allow_local_martingale is not None
            else cfg.allow_local_martingale
        ),
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
    except (ConfigError, OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if cfg.task == "density":
            header, rows = run_density(cfg)
        elif cfg.task == "price":
            header, rows = run_price(cfg)
        elif cfg.task == "table":
            header, rows = run_table(cfg)
        else:
            report = run_validate(cfg)
            _emit(cfg, json.dumps(report.to_json(), indent=2) + "\n")
            return EXIT_OK if report.overall else EXIT_VALIDATION
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MartingaleViolation as exc:
        print(f"martingale violation: {exc}", file=sys.stderr)
        return EXIT_MARTINGALE
    except (NonConvergence, NonFiniteIntegrand, UnstableInversion) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    text = render_csv(header, rows) if cfg.output.format == "csv" \
        else render_json(header, rows)
    _emit(cfg, text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
