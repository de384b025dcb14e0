"""Command-line interface.

Every subcommand writes its outputs into ``--out`` (default ``.``) together
with a ``manifest.json`` recording the resolved configuration and seed.
Exit status: 0 on success, 1 on bad input or usage, 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, _kernels
from .bench import BenchConfig, run_benchmark
from .bootstrap import BootstrapConfig, bootstrap_uq
from .errors import InvalidInputError, NumericalFailure
from .fixtures import urban_points_csv
from .io import (
    LocalProjection,
    NormalisationTransform,
    PointDataset,
    ingest_csv,
    labels_csv,
    normalise,
    pad_background,
    parse_filter,
    points_csv,
)
from .metrics import MixtureSpec, gen_mixture_sample
from .mixture import Domain, MixtureState
from .modes import PruneMergeConfig, assign_clusters, elbow_scan, modes_csv, modes_json, resolve_modes
from .optimizer import FitConfig, fit
from .presets import TWO_BLOB_MEANS, Preset, get_preset

log = logging.getLogger("gerve")

MANIFEST_SCHEMA = "gerve/manifest/1"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# -- shared helpers --------------------------------------------------------------


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / name, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise InvalidInputError("config file must hold a JSON object")
    return cfg


def resolve_seed(config: dict, flag: Optional[int], env: Optional[str] = None) -> int:
    """Seed precedence: config file, then ``GERVE_SEED``, then ``--seed``, then 0."""
    if "seed" in config:
        return int(config["seed"])
    env = os.environ.get("GERVE_SEED") if env is None else env
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise InvalidInputError(f"GERVE_SEED must be an integer, got {env!r}") from None
    return int(flag) if flag is not None else 0


def _preset(args, config: dict, seed: int, n_points: Optional[int] = None) -> Preset:
    name = config.get("preset", getattr(args, "preset", None))
    kw = {"seed": seed}
    if name == "triangle-modes":
        # the covariance floor scales with the sample size
        kw["N"] = int(config.get("N", n_points or 4096))
    p = get_preset(name, **kw)
    fit_cfg = FitConfig.from_dict(config["fit"]) if "fit" in config else p.fit
    fit_cfg = replace(fit_cfg, seed=seed, ecfg=replace(fit_cfg.ecfg, seed=seed))
    pm = PruneMergeConfig.from_dict(config["prune_merge"]) if "prune_merge" in config else p.prune_merge
    bc = BootstrapConfig.from_dict(config["bootstrap"]) if "bootstrap" in config else p.bootstrap
    K = int(config.get("K", getattr(args, "k", None) or p.K))
    grid = tuple(config.get("omega_grid", p.omega_grid or ()))
    return Preset(p.name, K, fit_cfg, pm, bc, grid)


def _load_points(args, config: dict, preset_name: str, seed: int):
    """Read, filter and (for the hotspot workflow) normalise and pad the data."""
    filters = [parse_filter(f) for f in (args.filter or [])]
    ds = ingest_csv(args.data, args.x_col, args.y_col, filters)
    do_norm = args.normalise if args.normalise is not None else preset_name.startswith("hotspot")
    transform = None
    if do_norm:
        ds, transform = normalise(ds)
        pad = args.pad_ratio if args.pad_ratio is not None else (1e-3 if preset_name.startswith("hotspot") else 0.0)
        if pad > 0:
            half = np.abs(ds.points).max(axis=0)
            ds = pad_background(ds, Domain(-half, half), Domain.cube(2.0, 2), pad, seed)
    return ds, transform


def _manifest(command: str, seed: int, args, outputs: dict, extra: Optional[dict] = None) -> str:
    body = {
        "schema": MANIFEST_SCHEMA,
        "version": __version__,
        "command": command,
        "seed": seed,
        "backend": _kernels.BACKEND,
        "threads": args.threads,
        "outputs": outputs,
    }
    if extra:
        body.update(extra)
    return _dump_json(body)


# -- subcommands -------------------------------------------------------------------


def cmd_gen(args, config, seed, out):
    n = int(config.get("n", args.n))
    name = config.get("preset", args.preset)
    if name == "urban":
        _write(out, "points.csv", urban_points_csv(n=n, seed=seed))
    else:
        if name == "triangle":
            spec = MixtureSpec.triangle(args.sigma2 if args.sigma2 is not None else 0.25)
        elif name == "triangle-modes":
            spec = MixtureSpec.triangle(args.sigma2 if args.sigma2 is not None else 0.1)
        elif name == "two-blob":
            s2 = args.sigma2 if args.sigma2 is not None else 0.01
            spec = MixtureSpec([0.5, 0.5], TWO_BLOB_MEANS, [s2 * np.eye(2)] * 2)
        elif name == "single-gaussian":
            s2 = args.sigma2 if args.sigma2 is not None else 0.1
            spec = MixtureSpec([1.0], [[0.0, 0.0]], [s2 * np.eye(2)])
        else:
            raise InvalidInputError(f"unknown data preset {name!r}")
        _write(out, "points.csv", points_csv(gen_mixture_sample(spec, n, seed)))
    _write(out, "manifest.json", _manifest("gen", seed, args, {"points.csv": "csv:x,y"}, {"preset": name, "n": n}))


def cmd_fit(args, config, seed, out):
    name = config.get("preset", args.preset)
    ds, tr = _load_points(args, config, name, seed)
    p = _preset(args, config, seed, ds.n)
    cfg = p.fit
    if args.snapshot_every:
        cfg = replace(cfg, snapshot_every=args.snapshot_every)
    res = fit(ds.points, p.K, cfg)
    _write(out, "fit_result.json", _dump_json(res.to_dict()))
    _write(out, "state.json", _dump_json(res.final.to_dict()))
    _write(out, "trajectory.csv", res.trajectory_csv())
    extra = {"preset": p.name, "K": p.K, "fit_config": cfg.to_dict(), "data": ds.metadata.get("source"),
             "normalisation": None if tr is None else tr.to_dict()}
    outputs = {"fit_result.json": "gerve/fit-result/1", "state.json": "gerve/state/1", "trajectory.csv": "csv:trajectory/1"}
    _write(out, "manifest.json", _manifest("fit", seed, args, outputs, extra))


def _read_state(path) -> MixtureState:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    return MixtureState.from_dict(d["final"] if "final" in d else d)


def cmd_modes(args, config, seed, out):
    p = _preset(args, config, seed)
    state = _read_state(args.state)
    modes = resolve_modes(state, p.prune_merge, p.sigma2_init, p.fit.bounds)
    _write(out, "modes.csv", modes_csv(modes))
    _write(out, "modes.json", modes_json(modes) + "\n")
    extra = {"preset": p.name, "prune_merge": p.prune_merge.to_dict(), "n_modes": len(modes)}
    _write(out, "manifest.json", _manifest("modes", seed, args, {"modes.csv": "csv:modes/1", "modes.json": "gerve/modes/1"}, extra))


def cmd_cluster(args, config, seed, out):
    state = _read_state(args.state)
    filters = [parse_filter(f) for f in (args.filter or [])]
    ds = ingest_csv(args.data, args.x_col, args.y_col, filters)
    X = ds.points
    if args.normalisation:
        with open(args.normalisation, encoding="utf-8") as fh:
            X = NormalisationTransform.from_dict(json.load(fh)).forward(X)
    _write(out, "labels.csv", labels_csv(assign_clusters(state, X)))
    _write(out, "manifest.json", _manifest("cluster", seed, args, {"labels.csv": "csv:labels/1"}))


def cmd_elbow(args, config, seed, out):
    name = config.get("preset", args.preset)
    ds, tr = _load_points(args, config, name, seed)
    p = _preset(args, config, seed, ds.n)
    grid = [float(g) for g in args.grid.split(",")] if args.grid else list(p.omega_grid)
    res = elbow_scan(ds.points, grid, p.fit, p.K, p.prune_merge, p.sigma2_init, workers=args.threads)
    _write(out, "elbow.csv", res.to_csv())
    body = {"schema": "gerve/elbow/1", "omegas": res.omegas, "count_after_prune": res.count_after_prune,
            "count_after_merge": res.count_after_merge, "omega_star": res.omega_star}
    _write(out, "elbow.json", _dump_json(body))
    _write(out, "manifest.json", _manifest("elbow", seed, args, {"elbow.csv": "csv:elbow/1", "elbow.json": "gerve/elbow/1"},
                                           {"preset": p.name, "K": p.K}))


def cmd_bootstrap(args, config, seed, out):
    name = config.get("preset", args.preset)
    ds, tr = _load_points(args, config, name, seed)
    p = _preset(args, config, seed, ds.n)
    bc = p.bootstrap or BootstrapConfig(L=100, omega0=1.0)
    over = {"seed": seed}
    if args.l is not None:
        over["L"] = args.l
    if args.omega0 is not None:
        over["omega0"] = args.omega0
    if args.count_radius is not None:
        over["count_radius"] = args.count_radius
    bc = replace(bc, **over)
    rep = bootstrap_uq(ds.points, p.fit, p.prune_merge, bc, p.K, p.sigma2_init, workers=args.threads)
    transform = None
    if tr is not None:
        if args.metres:
            proj = LocalProjection.at_centroid(tr.inverse(ds.points[~ds.padded]))
            transform = lambda Z: proj.forward(tr.inverse(Z))  # noqa: E731
        else:
            transform = tr.inverse
    _write(out, "bootstrap.json", _dump_json(rep.to_dict()))
    _write(out, "bootstrap.csv", rep.to_csv(transform))
    extra = {"preset": p.name, "K": p.K, "bootstrap_config": bc.to_dict(),
             "normalisation": None if tr is None else tr.to_dict()}
    outputs = {"bootstrap.json": "gerve/bootstrap-report/1", "bootstrap.csv": "csv:bootstrap/1"}
    _write(out, "manifest.json", _manifest("bootstrap", seed, args, outputs, extra))


def cmd_bench(args, config, seed, out):
    if "bench" in config:
        bc = BenchConfig.from_dict(dict(config["bench"], seed=seed))
    else:
        bc = BenchConfig(
            MixtureSpec.triangle(0.1),
            tuple(args.n_grid),
            tuple(args.k_grid),
            args.n_rep,
            {"gerve": [{}], "mean-shift": [{"h": 0.05}]},
            eps=args.eps,
            seed=seed,
            T=args.iterations,
        )
    res = run_benchmark(bc)
    _write(out, "bench.csv", res.to_csv())
    _write(out, "bench.json", res.to_json() + "\n")
    _write(out, "manifest.json", _manifest("bench", seed, args, {"bench.csv": "csv:bench-long/1", "bench.json": "gerve/bench/1"},
                                           {"bench_config": bc.to_dict()}))


# -- parser ------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, top: bool) -> None:
    d = None if top else argparse.SUPPRESS
    p.add_argument("--config", default=d, help="JSON configuration file")
    p.add_argument("--seed", type=int, default=d, help="root seed (config and GERVE_SEED take precedence)")
    p.add_argument("--out", default=d, help="output directory")
    p.add_argument("--threads", type=int, default=d, help="worker processes for replicate loops")


def _data_args(p):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--x-col", default="x")
    p.add_argument("--y-col", default="y")
    p.add_argument("--filter", action="append", help="col:low:high or col=value (repeatable)")
    p.add_argument("--normalise", dest="normalise", action="store_true", default=None)
    p.add_argument("--no-normalise", dest="normalise", action="store_false")
    p.add_argument("--pad-ratio", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="gerve", description="Entropy-regularised Gaussian mixtures for modes and clusters.")
    _common(ap, True)
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen", help="simulate a data set")
    _common(g, False)
    g.add_argument("--preset", default="triangle", choices=["triangle", "triangle-modes", "two-blob", "single-gaussian", "urban"])
    g.add_argument("--n", type=int, default=6000)
    g.add_argument("--sigma2", type=float, default=None)

    f = sub.add_parser("fit", help="fit a mixture")
    _common(f, False)
    _data_args(f)
    f.add_argument("--preset", default="triangle-cluster")
    f.add_argument("--k", type=int, default=None)
    f.add_argument("--snapshot-every", type=int, default=0)

    m = sub.add_parser("modes", help="prune and merge a fitted state")
    _common(m, False)
    m.add_argument("--state", required=True)
    m.add_argument("--preset", default="triangle-cluster")

    c = sub.add_parser("cluster", help="label points by highest responsibility")
    _common(c, False)
    c.add_argument("--state", required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--x-col", default="x")
    c.add_argument("--y-col", default="y")
    c.add_argument("--filter", action="append")
    c.add_argument("--normalisation", default=None, help="JSON with scale/center used at fit time")

    e = sub.add_parser("elbow", help="resolved-mode counts over a temperature grid")
    _common(e, False)
    _data_args(e)
    e.add_argument("--preset", default="hotspot")
    e.add_argument("--k", type=int, default=None)
    e.add_argument("--grid", default=None, help="comma-separated descending temperatures")

    b = sub.add_parser("bootstrap", help="bootstrap stability scores and ellipses")
    _common(b, False)
    _data_args(b)
    b.add_argument("--preset", default="hotspot")
    b.add_argument("--k", type=int, default=None)
    b.add_argument("--l", type=int, default=None)
    b.add_argument("--omega0", type=float, default=None)
    b.add_argument("--count-radius", type=float, default=None)
    b.add_argument("--metres", action="store_true", help="report lon/lat data in local metres")

    be = sub.add_parser("bench", help="replicated mode-estimation benchmark")
    _common(be, False)
    be.add_argument("--n-grid", type=int, nargs="+", default=[1024, 4096])
    be.add_argument("--k-grid", type=int, nargs="+", default=[3])
    be.add_argument("--n-rep", type=int, default=5)
    be.add_argument("--eps", type=float, default=0.05)
    be.add_argument("--iterations", type=int, default=4000)
    return ap


COMMANDS = {
    "gen": cmd_gen,
    "fit": cmd_fit,
    "modes": cmd_modes,
    "cluster": cmd_cluster,
    "elbow": cmd_elbow,
    "bootstrap": cmd_bootstrap,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().rstrip())
        args.threads = 1 if args.threads is None else args.threads
        if args.threads < 1:
            raise InvalidInputError("--threads must be >= 1")
        config = _load_config(args.config)
        seed = resolve_seed(config, args.seed)
        out = Path(args.out or ".")
        COMMANDS[args.command](args, config, seed, out)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"gerve: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (InvalidInputError, OSError, KeyError, ValueError) as exc:
        print(f"gerve: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
