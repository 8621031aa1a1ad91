"""Command-line front end: ``gkdmd generate | fit | predict | bench``.

Parameter precedence: command-line flags, then the ``--config`` JSON file,
then built-in defaults. Machine-readable output (CSV, JSON) goes to stdout
or files; diagnostics go to stderr. Every command writes a
``<command>_manifest.json`` next to its outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    METHODS,
    SYSTEMS,
    compare,
    load_dataset,
    make_dataset,
    save_dataset,
    write_error_maps_csv,
    write_per_trajectory_csv,
    write_report_csv,
)
from .errors import GKDMDError, InputError
from .kernels import parse_kernel
from .model import EIG_ROUTES, fit, load, save
from .predict import PreimageConfig, predict, predict_path
from .svg import line_chart_svg

log = logging.getLogger("gkdmd")

_PREIMAGE_DEFAULTS = {"max_iters": 500, "grad_tol": 1e-8, "memory": 10, "restarts": 3}

DEFAULTS = {
    "generate": {
        "system": "koopman-quadratic", "n": 10, "t": 10, "seed": 0, "output": "data",
        "hypercube": None, "lam": 0.9, "mu": 0.5, "p": 64, "lorenz_sigma": 10.0,
        "rho": 28.0, "beta": 8.0 / 3.0, "dt": 0.01, "substeps": 1, "embed_seed": 0,
        "embed_scale": 0.1, "jobs": 1,
    },
    "fit": {
        "data": None, "kernel": "gaussian:sigma=10", "k": None, "tol": 1e-10,
        "eig_route": "compressed", "output": "model", "seed": 0, "jobs": 1,
    },
    "predict": {
        "model": None, "theta": None, "theta_row": 0, "t": 2, "path": False,
        "output": None, "seed": 0, "jobs": 1, **_PREIMAGE_DEFAULTS,
    },
    "bench": {
        "data": None, "methods": "gkdmd,kdmd", "kernels": ["gaussian:sigma=10"],
        "k_list": None, "error_maps": False, "omit_timings": False, "output": "bench",
        "seed": 0, "jobs": 1, **_PREIMAGE_DEFAULTS,
    },
}


def _shared(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="JSON file with parameters (flags take precedence)")
    sp.add_argument("--seed", type=int, help="random seed")
    sp.add_argument("--jobs", type=int, help="worker threads")
    sp.add_argument("-o", "--output", help="output directory")
    sp.add_argument("-v", "--verbose", action="store_true", default=None, help="debug logging")


def _preimage_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--max-iters", type=int, dest="max_iters")
    sp.add_argument("--grad-tol", type=float, dest="grad_tol")
    sp.add_argument("--memory", type=int)
    sp.add_argument("--restarts", type=int, help="number of preimage starting points")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gkdmd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gkdmd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a benchmark dataset")
    _shared(g)
    g.add_argument("--system", choices=sorted(SYSTEMS))
    g.add_argument("--n", type=int, help="number of trajectories N")
    g.add_argument("--t", type=int, help="states per training trajectory T'")
    g.add_argument("--hypercube", help="initial-condition box, e.g. '-1:1,-1:1'")
    g.add_argument("--lam", type=float, help="koopman-quadratic: first eigenvalue")
    g.add_argument("--mu", type=float, help="koopman-quadratic: second eigenvalue")
    g.add_argument("--p", type=int, help="lorenz-embedded: ambient dimension")
    g.add_argument("--lorenz-sigma", type=float, dest="lorenz_sigma")
    g.add_argument("--rho", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--dt", type=float)
    g.add_argument("--substeps", type=int, help="RK4 steps between snapshots")
    g.add_argument("--embed-seed", type=int, dest="embed_seed")
    g.add_argument("--embed-scale", type=float, dest="embed_scale")

    f = sub.add_parser("fit", help="fit a reduced model from a dataset")
    _shared(f)
    f.add_argument("--data", help="dataset directory")
    f.add_argument("--kernel", help="gaussian:sigma=10 | polynomial:degree=2,offset=1 | linear")
    f.add_argument("--k", type=int, help="requested rank")
    f.add_argument("--tol", type=float, help="relative tolerance for numerical rank")
    f.add_argument("--eig-route", dest="eig_route", choices=EIG_ROUTES)

    p = sub.add_parser("predict", help="predict a future state with a fitted model")
    _shared(p)
    p.add_argument("--model", help="model.json produced by fit")
    p.add_argument("--theta", help="initial state: CSV file or inline comma-separated values")
    p.add_argument("--theta-row", type=int, dest="theta_row", help="data row of the CSV file")
    p.add_argument("--t", type=int, help="horizon T >= 2 (T=2 is one step)")
    p.add_argument("--path", action="store_true", default=None, help="emit every horizon 2..T")
    _preimage_flags(p)

    b = sub.add_parser("bench", help="reconstruction error sweep over ranks")
    _shared(b)
    b.add_argument("--data", help="dataset directory")
    b.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    b.add_argument("--kernels", nargs="+", help="one or more kernel specs")
    b.add_argument("--k-list", dest="k_list", help="ranks, e.g. '1-10' or '2,4,8'")
    b.add_argument("--error-maps", dest="error_maps", action="store_true", default=None)
    b.add_argument("--omit-timings", dest="omit_timings", action="store_true", default=None,
                   help="leave timing columns empty so the report is reproducible byte for byte")
    _preimage_flags(b)
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    defaults = DEFAULTS[command]
    cfg = dict(defaults)
    if args.config:
        try:
            from_file = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config file {args.config}: {exc}") from None
        if not isinstance(from_file, dict):
            raise InputError("config file must hold a JSON object")
        unknown = sorted(set(from_file) - set(defaults))
        if unknown:
            raise InputError(f"unknown config keys for {command}: {unknown}")
        cfg.update(from_file)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _require(cfg: dict, *keys) -> None:
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise InputError(f"missing required parameter(s): {', '.join('--' + k.replace('_', '-') for k in missing)}")


def _positive(cfg: dict, *keys) -> None:
    for k in keys:
        if not isinstance(cfg[k], (int, float)) or cfg[k] <= 0:
            raise InputError(f"--{k.replace('_', '-')} must be positive, got {cfg[k]!r}")


def _write_manifest(out_dir: Path, command: str, cfg: dict) -> None:
    manifest = {"tool": "gkdmd", "version": __version__, "command": command,
                "config": cfg, "seed": cfg.get("seed")}
    (out_dir / f"{command}_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n"
    )


def _parse_k_list(text) -> list[int]:
    if isinstance(text, list):
        return [int(v) for v in text]
    out: list[int] = []
    for part in filter(None, (s.strip() for s in str(text).split(","))):
        lo, dash, hi = part.partition("-")
        try:
            out.extend(range(int(lo), int(hi) + 1) if dash else [int(part)])
        except ValueError:
            raise InputError(f"malformed rank list entry {part!r}") from None
    if not out:
        raise InputError("rank list is empty")
    return out


def _preimage_config(cfg: dict) -> PreimageConfig:
    return PreimageConfig(cfg["max_iters"], cfg["grad_tol"], cfg["memory"], cfg["restarts"])


# -- commands ------------------------------------------------------------------


def cmd_generate(cfg: dict) -> int:
    _positive(cfg, "n")
    if not isinstance(cfg["t"], int) or cfg["t"] < 2:
        raise InputError(f"--t must be an integer >= 2 (T' >= 2), got {cfg['t']!r}")
    if cfg["system"] == "koopman-quadratic":
        system = SYSTEMS["koopman-quadratic"](lam=cfg["lam"], mu=cfg["mu"])
    elif cfg["system"] == "lorenz-embedded":
        system = SYSTEMS["lorenz-embedded"](
            p=cfg["p"], sigma=cfg["lorenz_sigma"], rho=cfg["rho"], beta=cfg["beta"],
            dt=cfg["dt"], substeps=cfg["substeps"], embed_seed=cfg["embed_seed"],
            embed_scale=cfg["embed_scale"],
        )
    else:
        raise InputError(f"unknown system {cfg['system']!r}; expected one of {sorted(SYSTEMS)}")
    cube = cfg["hypercube"]
    if isinstance(cube, str):
        try:
            cube = [[float(v) for v in part.split(":")] for part in cube.split(",")]
        except ValueError:
            raise InputError(f"malformed hypercube {cfg['hypercube']!r}") from None
    ds = make_dataset(system, cfg["n"], cfg["t"], cube, seed=cfg["seed"])
    out = Path(cfg["output"])
    files = save_dataset(ds, out)
    _write_manifest(out, "generate", cfg)
    log.info("wrote %d files to %s", len(files), out)
    return 0


def cmd_fit(cfg: dict) -> int:
    _require(cfg, "data", "k")
    if not isinstance(cfg["k"], int) or cfg["k"] < 1:
        raise InputError(f"--k must be an integer >= 1, got {cfg['k']!r}")
    kernel = parse_kernel(cfg["kernel"])
    ds = load_dataset(cfg["data"])
    model = fit(ds.pairs, kernel, cfg["k"], tol_rel=cfg["tol"], eig_route=cfg["eig_route"])
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    save(model, out / "model.json")
    _write_manifest(out, "fit", cfg)
    top = model.lambdas[: min(10, model.k)]
    summary = {
        "model": str(out / "model.json"), "m": model.m, "p": model.p,
        "rank_A": model.rank_A, "rank_Z": model.rank_Z, "k_requested": cfg["k"],
        "k_effective": model.k, "top_abs_lambda": [float(abs(v)) for v in top],
    }
    print(json.dumps(summary))
    return 0


def _read_theta(cfg: dict, p: int) -> np.ndarray:
    src = str(cfg["theta"])
    path = Path(src)
    if path.is_file():
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        try:
            float(rows[0][0])
        except (ValueError, IndexError):
            rows = rows[1:]
        try:
            row = rows[cfg["theta_row"]]
        except IndexError:
            raise InputError(f"{src} has no data row {cfg['theta_row']}") from None
    else:
        row = src.split(",")
    try:
        theta = np.array([float(v) for v in row], dtype=float)
    except ValueError:
        raise InputError(f"theta {src!r} is neither a CSV file nor a list of numbers") from None
    if theta.size != p:
        raise InputError(f"theta has {theta.size} entries, model expects p={p}")
    return theta


def cmd_predict(cfg: dict) -> int:
    _require(cfg, "model", "theta")
    if not isinstance(cfg["t"], int) or cfg["t"] < 2:
        raise InputError(f"--t must be an integer >= 2, got {cfg['t']!r}")
    model = load(cfg["model"])
    theta = _read_theta(cfg, model.p)
    pcfg = _preimage_config(cfg)
    if cfg["path"]:
        states = predict_path(model, theta, cfg["t"], pcfg)
        horizons = list(range(2, cfg["t"] + 1))
    else:
        states = [predict(model, theta, cfg["t"], pcfg)]
        horizons = [cfg["t"]]
    header = ["T"] + [f"x{i}" for i in range(model.p)]
    lines = [",".join(header)] + [
        ",".join([str(T)] + [repr(float(v)) for v in x]) for T, x in zip(horizons, states)
    ]
    text = "\n".join(lines) + "\n"
    if cfg["output"]:
        out = Path(cfg["output"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "prediction.csv").write_text(text)
        _write_manifest(out, "predict", cfg)
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(cfg: dict) -> int:
    _require(cfg, "data", "k_list")
    _positive(cfg, "jobs")
    methods = [m.strip() for m in str(cfg["methods"]).split(",") if m.strip()]
    kernels_arg = cfg["kernels"] if isinstance(cfg["kernels"], list) else [cfg["kernels"]]
    kernels = [parse_kernel(s) for s in kernels_arg]
    k_list = _parse_k_list(cfg["k_list"])
    ds = load_dataset(cfg["data"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        report = compare(ds, methods, kernels, k_list, _preimage_config(cfg), jobs=cfg["jobs"])
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(report, out / "report.csv", timings=not cfg["omit_timings"])
    write_per_trajectory_csv(report, out / "per_trajectory.csv")
    if cfg["error_maps"]:
        write_error_maps_csv(report, out / "error_maps.csv")
    series: dict = {}
    for r in report.rows:
        series.setdefault(f"{r['method']} {r['kernel']}", []).append((r["k"], r["eps_rec"]))
    (out / "report.svg").write_text(
        line_chart_svg(series, title=f"one-step reconstruction error ({ds.meta['system_id']})")
    )
    _write_manifest(out, "bench", cfg)
    failed = [r for r in report.rows if "error" in r]
    for r in failed:
        log.error("cell %s/%s/k=%d failed: %s", r["method"], r["kernel"], r["k"], r["error"])
    return 0 if len(failed) < len(report.rows) else 1


COMMANDS = {"generate": cmd_generate, "fit": cmd_fit, "predict": cmd_predict, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve_config(args.command, args)
        return COMMANDS[args.command](cfg)
    except InputError as exc:
        print(f"gkdmd {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except GKDMDError as exc:
        print(f"gkdmd {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
