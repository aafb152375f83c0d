"""Command-line front end.

Usage::

    robust-glrt generate --config run.ini --out-dir out/
    robust-glrt estimate --config run.ini --input out/dataset.csv
    robust-glrt theory   --config run.ini --gammas 2,3
    robust-glrt sweep    --config run.ini --input out/dataset.csv --grid 0.05:0.95:19
    robust-glrt validate --config run.ini --threads 4

Configuration is an INI file; command-line flags override it. Thread count
falls back to the ``ROBUST_GLRT_THREADS`` environment variable.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .detector import select_rho_star
from .errors import GlrtError, NonConvergence
from .estimators import SolverConfig, check_rho, robust_shrinkage_fit
from .model import TextureModel, build_toeplitz_ar, identity_model, sample_dataset, uniform_steering
from .montecarlo import (TrialPlan, convergence_probe, gnuplot_script, histogram_rows,
                         ks_distance_vs_rayleigh, rates_rows, run_far_sweep)
from .rmt import rayleigh_tail, theory_context

log = logging.getLogger("robust_glrt")

EXIT_OK, EXIT_FAILURE, EXIT_SCHEMA, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3, 4
THREADS_ENV = "ROBUST_GLRT_THREADS"


class SchemaError(ValueError):
    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _float_list(text: str) -> tuple:
    """``"0.1,0.2"`` or ``"start:stop:count"`` (inclusive linspace)."""
    text = text.strip()
    if ":" in text:
        a, b, k = text.split(":")
        return tuple(float(v) for v in np.round(np.linspace(float(a), float(b), int(k)), 12))
    return tuple(float(v) for v in text.split(",") if v.strip())


def _int_list(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise ValueError("must be >= 1")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise ValueError("must be >= 0")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise ValueError("must be > 0")
    return v


def _unit_interval(text):
    v = float(text)
    if not 0.0 < v <= 1.0:
        raise ValueError("must lie in (0, 1]")
    return v


def _open_unit(text):
    v = float(text)
    if not 0.0 < v < 1.0:
        raise ValueError("must lie in (0, 1)")
    return v


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    return parse


def _rho_list(text):
    vals = _float_list(text)
    if not vals or any(not 0.0 < v <= 1.0 for v in vals):
        raise ValueError("every rho must lie in (0, 1]")
    return vals


def _gamma_list(text):
    vals = _float_list(text)
    if any(v < 0 for v in vals):
        raise ValueError("thresholds must be non-negative")
    return vals


SCHEMA = {
    "run": {"seed": _nonneg_int, "threads": _positive_int, "out_dir": str, "verbosity": _nonneg_int},
    "model": {"N": _positive_int, "n": _positive_int, "covariance": _choice("toeplitz", "identity"),
              "ar_coefficient": _open_unit, "texture": _choice("unit", "inverse-gamma"),
              "texture_shape": _positive_float},
    "solver": {"tolerance": _positive_float, "max_iterations": _positive_int,
               "anderson_depth": _nonneg_int},
    "estimate": {"input": str, "rho": _unit_interval},
    "theory": {"rho": _rho_list, "gammas": _gamma_list},
    "sweep": {"input": str, "grid": _rho_list, "gammas": _gamma_list},
    "validate": {"rho_grid": _rho_list, "gammas": _gamma_list, "Gammas": _gamma_list,
                 "outer_trials": _positive_int, "inner_trials": _positive_int,
                 "block_size": _positive_int, "histogram_rho": _unit_interval,
                 "probe_sizes": _int_list, "probe_seeds": _positive_int, "probe_rho": _unit_interval},
}

DEFAULTS = {
    "run": {"seed": 0, "threads": 1, "out_dir": ".", "verbosity": 0},
    "model": {"N": 100, "n": 200, "covariance": "toeplitz", "ar_coefficient": 0.7,
              "texture": "unit", "texture_shape": 2.0},
    "solver": {"tolerance": 1e-9, "max_iterations": 1000, "anderson_depth": 0},
    "estimate": {"rho": 0.2},
    "theory": {"rho": _float_list("0.05:1.0:20"), "gammas": (2.0, 3.0)},
    "sweep": {"grid": _float_list("0.05:1.0:20"), "gammas": (2.0, 3.0)},
    "validate": {"rho_grid": (0.2,), "gammas": (2.0, 3.0), "Gammas": (), "outer_trials": 200,
                 "inner_trials": 500, "block_size": 16, "histogram_rho": 0.2,
                 "probe_sizes": (), "probe_seeds": 20, "probe_rho": 0.5},
}


@dataclass
class RunConfig:
    """Validated configuration: ``values[section][key]`` with defaults filled in."""

    values: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.values[section]

    @classmethod
    def from_mapping(cls, raw: dict) -> "RunConfig":
        values = {s: dict(d) for s, d in DEFAULTS.items()}
        for section, entries in raw.items():
            if section not in SCHEMA:
                raise SchemaError(section, "unknown section")
            for key, text in entries.items():
                if key not in SCHEMA[section]:
                    raise SchemaError(f"{section}.{key}", "unknown key")
                try:
                    values[section][key] = SCHEMA[section][key](str(text))
                except (ValueError, TypeError) as exc:
                    raise SchemaError(f"{section}.{key}", str(exc)) from None
        cfg = cls(values=values, raw=raw)
        cfg._cross_check()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_mapping(read_ini(path))

    def _cross_check(self):
        m = self.values["model"]
        c = m["N"] / m["n"]
        checks = [("theory.rho", self.values["theory"]["rho"]),
                  ("validate.rho_grid", self.values["validate"]["rho_grid"])]
        for name, rhos in checks:
            for r in rhos:
                try:
                    check_rho(r, c)
                except GlrtError as exc:
                    raise SchemaError(name, str(exc)) from None

    def as_dict(self) -> dict:
        return {s: {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
                for s, d in self.values.items()}

    def solver(self) -> SolverConfig:
        return SolverConfig(**self.values["solver"])

    def texture(self) -> TextureModel:
        m = self.values["model"]
        return TextureModel(law=m["texture"], shape=m["texture_shape"])

    def covariance(self, N=None):
        m = self.values["model"]
        N = N or m["N"]
        if m["covariance"] == "identity":
            return identity_model(N)
        return build_toeplitz_ar(m["ar_coefficient"], N)


def read_ini(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with path.open() as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise SchemaError(str(path), f"malformed config: {exc}") from None
    return {s: dict(parser[s]) for s in parser.sections()}


def load_config(args) -> RunConfig:
    """Merge the INI file (if any) with command-line flags; flags win."""
    raw = read_ini(args.config) if args.config else {}
    overrides = {
        ("run", "seed"): args.seed,
        ("run", "out_dir"): args.out_dir,
        ("run", "threads"): args.threads if args.threads is not None else os.environ.get(THREADS_ENV),
    }
    if getattr(args, "input", None):
        overrides[(args.command, "input")] = args.input
    if getattr(args, "rho", None) is not None:
        overrides[(args.command, "rho")] = args.rho
    if args.grid is not None:
        key = {"validate": "rho_grid", "theory": "rho"}.get(args.command, "grid")
        if args.command in ("sweep", "validate", "theory"):
            overrides[(args.command, key)] = args.grid
    if args.gammas is not None and args.command in ("theory", "sweep", "validate"):
        overrides[(args.command, "gammas")] = args.gammas
    for (section, key), value in overrides.items():
        if value is not None:
            raw.setdefault(section, {})[key] = str(value)
    return RunConfig.from_mapping(raw)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg["run"]["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _meta(cfg: RunConfig, **extra) -> dict:
    # where results go and how many threads compute them do not change them
    hashed = cfg.as_dict()
    hashed["run"] = {k: v for k, v in hashed["run"].items() if k not in ("out_dir", "threads", "verbosity")}
    meta = {"provenance": io.provenance(hashed, cfg["run"]["seed"])}
    meta.update(extra)
    return meta


def _require_input(cfg: RunConfig, section: str) -> Path:
    path = cfg[section].get("input")
    if not path:
        raise SchemaError(f"{section}.input", "an input dataset path is required")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    return path


def cmd_generate(cfg: RunConfig) -> list:
    m = cfg["model"]
    model = cfg.covariance()
    texture = cfg.texture()
    data = sample_dataset(model, m["n"], texture, seed=cfg["run"]["seed"])
    path = _out_dir(cfg) / "dataset.csv"
    io.write_dataset(path, data, _meta(cfg, N=m["N"], n=m["n"], covariance=model.label,
                                       texture=texture.describe(), seed=cfg["run"]["seed"]))
    return [path]


def cmd_estimate(cfg: RunConfig) -> list:
    data = io.read_dataset(_require_input(cfg, "estimate"))
    rho = cfg["estimate"]["rho"]
    try:
        check_rho(rho, data.c)
    except GlrtError as exc:
        raise SchemaError("estimate.rho", str(exc)) from None
    est = robust_shrinkage_fit(data, rho, cfg.solver())
    path = _out_dir(cfg) / "scatter.csv"
    io.write_scatter(path, est, _meta(cfg, input=str(cfg["estimate"]["input"])))
    return [path]


def theory_rows(cfg: RunConfig):
    m = cfg["model"]
    model = cfg.covariance()
    p = uniform_steering(m["N"])
    c = m["N"] / m["n"]
    gammas = cfg["theory"]["gammas"]
    header = ["rho", "rho_bar", "gamma", "m", "sigma2"] + [f"rayleigh_tail_{g:g}" for g in gammas]
    rows = []
    for rho in cfg["theory"]["rho"]:
        ctx = theory_context(model, p, rho, c)
        rows.append([ctx.rho, ctx.rho_bar, ctx.gamma, ctx.m, ctx.sigma2]
                    + [float(rayleigh_tail(g, ctx.sigma2)) for g in gammas])
    return header, rows


def cmd_theory(cfg: RunConfig) -> list:
    header, rows = theory_rows(cfg)
    path = _out_dir(cfg) / "theory.csv"
    io.write_table(path, header, rows, _meta(cfg))
    return [path]


def cmd_sweep(cfg: RunConfig) -> list:
    data = io.read_dataset(_require_input(cfg, "sweep"))
    grid = cfg["sweep"]["grid"]
    gammas = cfg["sweep"]["gammas"]
    for r in grid:
        try:
            check_rho(r, data.c)
        except GlrtError as exc:
            raise SchemaError("sweep.grid", str(exc)) from None
    res = select_rho_star(data, uniform_steering(data.N), grid, cfg.solver())
    far = res.predicted_far(gammas)
    header = ["rho", "rho_bar_hat", "sigma2_hat"] + [f"predicted_far_{g:g}" for g in gammas] + ["is_rho_star"]
    rows = [[float(r), float(res.rho_bar_hat[i]), float(res.sigma2_hat[i])]
            + [float(v) for v in far[i]] + [int(i == res.index)] for i, r in enumerate(res.grid)]
    path = _out_dir(cfg) / "sweep.csv"
    io.write_table(path, header, rows, _meta(cfg, rho_star=res.rho_star, failures=res.failures,
                                              input=str(cfg["sweep"]["input"])))
    return [path]


def cmd_validate(cfg: RunConfig) -> list:
    m, v = cfg["model"], cfg["validate"]
    plan = TrialPlan(N=m["N"], n=m["n"], covariance=m["covariance"], ar_coefficient=m["ar_coefficient"],
                     texture=cfg.texture(), rho_grid=v["rho_grid"], gammas=v["gammas"], Gammas=v["Gammas"],
                     outer_trials=v["outer_trials"], inner_trials=v["inner_trials"], seed=cfg["run"]["seed"],
                     solver=cfg.solver(), block_size=v["block_size"], histogram_rho=v["histogram_rho"])
    out = run_far_sweep(plan, threads=cfg["run"]["threads"])
    od = _out_dir(cfg)
    meta = _meta(cfg)
    written = []
    fc = out.far_curve()
    written.append(io.write_table(od / "far_curve.csv", fc.header, fc.rows(), meta))

    k = int(np.argmin(np.abs(out.grid - v["histogram_rho"])))
    diag = ks_distance_vs_rayleigh(out.scaled[:, k, :], np.sqrt(out.theory_sigma2[k]))
    written.append(io.write_table(od / "histogram.csv", ["bin_left", "density", "rayleigh_density"],
                                  histogram_rows(diag), dict(meta, rho=float(out.grid[k]), ks=diag.ks)))
    summary = {"rho_histogram": float(out.grid[k]), "ks": diag.ks, "failures": len(out.failures),
               "far": [dict(zip(fc.header, r)) for r in fc.rows()]}
    if v["Gammas"]:
        rs = out.rho_star_far()
        rows = zip(rs["threshold"], rs["empirical"], rs["stderr"], rs["approximation"])
        written.append(io.write_table(od / "far_rho_star.csv", ["Gamma", "empirical", "stderr", "approximation"],
                                      rows, meta))
    rates_name = None
    if v["probe_sizes"]:
        rep = convergence_probe(v["probe_sizes"], v["probe_rho"], range(v["probe_seeds"]),
                                c=m["N"] / m["n"], ar_coefficient=m["ar_coefficient"], solver=cfg.solver())
        header, rows = rates_rows(rep)
        written.append(io.write_table(od / "rates.csv", header, rows, meta))
        summary["norm_slope"] = rep.norm_slope
        summary["bilinear_slope"] = {str(k): s for k, s in rep.bilinear_slope.items()}
        rates_name = "rates.csv"
    script = od / "validate.gp"
    script.write_text(f"# provenance: {json.dumps(meta['provenance'], sort_keys=True)}\n"
                      + gnuplot_script(rates_csv=rates_name))
    written.append(script)
    summary_path = od / "summary.json"
    summary_path.write_text(json.dumps(dict(summary, provenance=meta["provenance"]), indent=2) + "\n")
    written.append(summary_path)
    return written


COMMANDS = {"generate": cmd_generate, "estimate": cmd_estimate, "theory": cmd_theory,
            "sweep": cmd_sweep, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-glrt", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--threads", type=int, help=f"worker threads (env {THREADS_ENV})")
        p.add_argument("--grid", help="rho values: comma list or start:stop:count")
        p.add_argument("--gammas", help="thresholds for sqrt(N) T_N, comma list")
        p.add_argument("-v", "--verbose", action="count", default=0)
        if name in ("estimate", "sweep"):
            p.add_argument("--input", help="dataset CSV written by 'generate'")
        if name == "estimate":
            p.add_argument("--rho", type=float)
    return parser


def _error(code: int, kind: str, message: str, **extra) -> int:
    print(json.dumps({"error": kind, "message": message, **extra}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        verbosity = max(args.verbose, cfg["run"]["verbosity"])
        logging.basicConfig(level=logging.WARNING - 10 * min(verbosity, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        written = COMMANDS[args.command](cfg)
    except SchemaError as exc:
        return _error(EXIT_SCHEMA, "schema", str(exc), field=exc.field)
    except NonConvergence as exc:
        return _error(EXIT_SOLVER, "non-convergence", str(exc))
    except OSError as exc:
        return _error(EXIT_IO, "io", str(exc))
    except (GlrtError, ValueError) as exc:
        return _error(EXIT_FAILURE, type(exc).__name__, str(exc))
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
