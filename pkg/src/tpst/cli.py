"""Command-line interface: ``tpst mesh-check | fit | predict | simulate``.

Exit codes: 0 success, 1 usage error, 2 data or mesh error, 3 numerical failure.
Errors are reported on standard error as one JSON object per line.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import AdaptiveConfig
from .fitio import coef_path_for, file_sha256, load_field, load_header, save_field
from .mesh import MeshError, load_mesh, shape_metrics, validate_partition
from .simharness import ScenarioError, SimConfig, run_experiment
from .solver import Dataset, FitConfig, NumericalError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("usage", message)
        raise SystemExit(EXIT_USAGE)


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


class _Log:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, msg: str) -> None:
        if not self.quiet:
            print(msg, file=sys.stderr)


# --- parsing helpers -------------------------------------------------------------------

_SPLIT = re.compile(r"[,\s]+")


def read_numeric_csv(path, ncols: int, names: str) -> np.ndarray:
    """Rows of ``ncols`` numbers; an optional header line and ``#`` comments are skipped."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    rows, seen = [], False
    for lineno, line in enumerate(io.StringIO(text), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = [f for f in _SPLIT.split(line) if f]
        try:
            vals = [float(f) for f in fields]
        except ValueError:
            if not seen:  # header
                seen = True
                continue
            raise DataError(f"{path}, line {lineno}: cannot parse {line!r}") from None
        seen = True
        if len(vals) != ncols:
            raise DataError(f"{path}, line {lineno}: expected {ncols} columns ({names}), "
                            f"got {len(vals)}")
        rows.append(vals)
    arr = np.array(rows, dtype=float).reshape(-1, ncols)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{path}: non-finite values")
    return arr


def parse_grid(spec: str, log: bool) -> tuple[float, ...]:
    """``lo:hi:count`` (log-spaced when ``log``) or a comma-separated list."""
    try:
        if ":" in spec:
            lo, hi, count = spec.split(":")
            lo, hi, count = float(lo), float(hi), int(count)
            if count < 1:
                raise ValueError
            if log:
                if lo <= 0 or hi <= 0:
                    raise ValueError
                vals = np.logspace(math.log10(lo), math.log10(hi), count)
            else:
                vals = np.linspace(lo, hi, count)
        else:
            vals = [float(v) for v in spec.split(",") if v.strip()]
            if not vals:
                raise ValueError
    except ValueError:
        raise UsageError(f"invalid grid {spec!r}: expected lo:hi:count or a comma list") from None
    return tuple(float(v) for v in vals)


def _load_mesh_args(nodes, elems, index_base):
    try:
        return load_mesh(nodes, elems, index_base=index_base)
    except OSError as exc:
        raise DataError(f"cannot read mesh: {exc}") from exc


def _input_record(path) -> dict:
    return {"path": str(Path(path).resolve()), "sha256": file_sha256(path)}


# --- subcommands --------------------------------------------------------------------------

def cmd_mesh_check(args, log) -> int:
    mesh = _load_mesh_args(args.nodes, args.elems, args.index_base)
    val = validate_partition(mesh)
    report = val.to_dict()
    report["quality"] = shape_metrics(mesh).to_dict()
    report["checksum"] = mesh.checksum
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if not val.valid:
        log(f"mesh is not a valid tetrahedral partition ({len(val.issues)} issues)")
        return EXIT_DATA
    return EXIT_OK


def _fit_config(args) -> FitConfig:
    lambdas = None
    select = args.select
    if args.lam is not None:
        if args.lambda_grid is not None:
            raise UsageError("give either --lambda or --lambda-grid, not both")
        lambdas, select = (args.lam,), "fixed"
    elif args.lambda_grid is not None:
        lambdas = parse_grid(args.lambda_grid, log=True)
    elif select == "fixed":
        raise UsageError("--select fixed needs --lambda")
    adaptive = None
    try:
        if args.adaptive:
            c_grid = parse_grid(args.c_grid, log=False)
            adaptive = AdaptiveConfig(tau=args.tau, c_grid=c_grid, quad_order=args.tv_quad_order)
        return FitConfig(degree=args.degree, smoothness=args.smoothness, lambdas=lambdas,
                         select=select, folds=args.folds, seed=args.seed,
                         rank_tol=args.rank_tol, adaptive=adaptive)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_fit(args, log) -> int:
    from . import fit as run_fit

    cfg = _fit_config(args)
    t0 = time.perf_counter()
    mesh = _load_mesh_args(args.nodes, args.elems, args.index_base)
    val = validate_partition(mesh)
    if not val.valid:
        raise MeshError(f"mesh is not a valid tetrahedral partition: {val.issues[0]}")
    raw = read_numeric_csv(args.data, 4, "x,y,z,value")
    data = Dataset.locate(mesh, raw[:, :3], raw[:, 3])
    if data.n == 0:
        raise DataError("no data point lies inside the mesh")
    if data.n_dropped:
        log(f"dropped {data.n_dropped} data points outside the mesh")
    t1 = time.perf_counter()
    res = run_fit(data, mesh, cfg)
    t2 = time.perf_counter()
    extra = {
        "tool": "tpst",
        "version": __version__,
        "mesh": {"nodes": _input_record(args.nodes), "elems": _input_record(args.elems),
                 "index_base": args.index_base},
        "data": {**_input_record(args.data), "n_used": data.n, "n_dropped": data.n_dropped},
        "config": cfg.to_dict(),
        "fit": {
            "method": "atpst" if cfg.adaptive is not None else "tpst",
            "lambda": res.lam, "select": res.select, "edf": res.edf, "rss": res.rss,
            "gcv": res.gcv, "n": res.n, "nullspace_dim": res.nullspace_dim,
            "constraint_residual": res.constraint_residual,
            "lambdas": res.lambdas, "scores": res.scores,
            "C": res.C, "c_grid": res.c_grid, "c_scores": res.c_scores,
            "weights": res.weights,
        },
        "manifest": {"seed": cfg.seed, "argv": args.argv,
                     "timings": {"load_seconds": t1 - t0, "fit_seconds": t2 - t1}},
    }
    save_field(res.field, args.out, cfg.smoothness, extra)
    log(f"fit: lambda={res.lam:.6g} edf={res.edf:.2f} rss={res.rss:.6g} n={res.n} "
        f"-> {args.out} (+ {coef_path_for(args.out).name})")
    return EXIT_OK


def cmd_predict(args, log) -> int:
    try:
        header = load_header(args.fit)
    except OSError as exc:
        raise DataError(f"cannot read {args.fit}: {exc.strerror}") from exc
    except (ValueError, KeyError) as exc:
        raise DataError(str(exc)) from exc
    mesh_info = header.get("mesh", {})
    nodes = args.nodes or mesh_info.get("nodes", {}).get("path")
    elems = args.elems or mesh_info.get("elems", {}).get("path")
    if not nodes or not elems:
        raise UsageError("fit file does not name its mesh; pass --nodes and --elems")
    index_base = args.index_base if args.index_base is not None else mesh_info.get("index_base", 1)
    mesh = _load_mesh_args(nodes, elems, index_base)
    if mesh.checksum != header.get("mesh_checksum"):
        raise DataError("mesh checksum does not match the one recorded in the fit file")
    try:
        field, _ = load_field(args.fit, mesh)
    except OSError as exc:
        raise DataError(f"cannot read coefficients: {exc}") from exc
    pts = read_numeric_csv(args.points, 3, "x,y,z")
    vals = field(pts)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "z", "prediction"])
    for p, v in zip(pts, vals):
        w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(p[2])),
                    "" if np.isnan(v) else repr(float(v))])
    Path(args.out).write_text(buf.getvalue())
    manifest = {"tool": "tpst", "version": __version__, "argv": args.argv,
                "inputs": {"fit": _input_record(args.fit), "points": _input_record(args.points),
                           "nodes": _input_record(nodes), "elems": _input_record(elems)},
                "mesh_checksum": mesh.checksum}
    out = Path(args.out)
    out.with_name(out.stem + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    n_out = int(np.isnan(vals).sum())
    log(f"predict: {len(pts)} points ({n_out} outside the mesh) -> {args.out}")
    return EXIT_OK


def cmd_simulate(args, log) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise DataError(f"cannot read {args.config}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.config}: invalid JSON ({exc.msg})") from exc
    if args.replications is not None:
        raw["replications"] = args.replications
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        cfg = SimConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise DataError(f"{args.config}: {exc}") from exc
    t0 = time.perf_counter()
    report = run_experiment(cfg, args.out, workers=args.threads or 1,
                            progress=None if args.quiet else log)
    manifest = {"tool": "tpst", "version": __version__, "config": cfg.to_dict(),
                "inputs": {"config": _input_record(args.config)}, "seed": cfg.seed,
                "timings": {"total_seconds": time.perf_counter() - t0}}
    (Path(args.out) / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    for r in report.summary()["results"]:
        log(f"{r['scenario']:>16} {r['method']:>6}: mean MISE {r['mean_mise']:.6g} "
            f"(se {r['se_mise']:.2g}, {r['replications']} reps)")
    return EXIT_OK


# --- entry point ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tpst", description="Penalized trivariate splines on tetrahedral meshes.")
    p.add_argument("--version", action="version", version=f"tpst {__version__}")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads for simulations (numerical kernels stay single-threaded "
                        "so results do not depend on this)")
    p.add_argument("--quiet", action="store_true", help="suppress progress messages")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    m = sub.add_parser("mesh-check", help="validate a tetrahedral mesh and report its quality")
    m.add_argument("nodes")
    m.add_argument("elems")
    m.add_argument("--index-base", type=int, choices=(0, 1), default=1)
    m.add_argument("--out", help="write the JSON report here instead of standard output")

    f = sub.add_parser("fit", help="fit a penalized spline to scattered data")
    f.add_argument("--nodes", required=True)
    f.add_argument("--elems", required=True)
    f.add_argument("--index-base", type=int, choices=(0, 1), default=1)
    f.add_argument("--data", required=True, help="CSV with columns x,y,z,value")
    f.add_argument("--degree", type=int, default=3)
    f.add_argument("--smoothness", type=int, default=1)
    f.add_argument("--select", choices=("gcv", "cv", "fixed"), default="gcv")
    f.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="fixed penalty parameter (implies --select fixed)")
    f.add_argument("--lambda-grid", default=None,
                   help="lo:hi:count log-spaced, or a comma list (default: data-scaled grid)")
    f.add_argument("--folds", type=int, default=5)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--rank-tol", type=float, default=1e-10)
    f.add_argument("--adaptive", action="store_true", help="adaptive (TV-weighted) refit")
    f.add_argument("--tau", type=float, default=2.0)
    f.add_argument("--c-grid", default="1.25:3:8", help="lo:hi:count linear, or a comma list")
    f.add_argument("--tv-quad-order", type=int, default=4)
    f.add_argument("--out", required=True, help="output JSON header (coefficients go to "
                                                "the sibling *.coef.csv)")

    q = sub.add_parser("predict", help="evaluate a saved fit at points")
    q.add_argument("--fit", required=True)
    q.add_argument("--points", required=True, help="CSV with columns x,y,z")
    q.add_argument("--out", required=True)
    q.add_argument("--nodes", help="override the mesh recorded in the fit file")
    q.add_argument("--elems")
    q.add_argument("--index-base", type=int, choices=(0, 1), default=None)

    s = sub.add_parser("simulate", help="run a seeded simulation study")
    s.add_argument("--config", required=True, help="simulation config JSON")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--replications", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    return p


COMMANDS = {"mesh-check": cmd_mesh_check, "fit": cmd_fit, "predict": cmd_predict,
            "simulate": cmd_simulate}


def _root_cause(exc: BaseException) -> BaseException:
    while isinstance(exc, ScenarioError) and exc.__cause__ is not None:
        exc = exc.__cause__
    return exc


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        _emit_error("usage", "a subcommand is required")
        return EXIT_USAGE
    if args.threads is not None and args.threads < 1:
        _emit_error("usage", "--threads must be at least 1")
        return EXIT_USAGE
    args.argv = list(sys.argv[1:] if argv is None else argv)
    log = _Log(args.quiet)
    try:
        from threadpoolctl import threadpool_limits
        limiter = threadpool_limits(1)
    except ImportError:  # pragma: no cover - threadpoolctl ships with scipy stacks
        limiter = None
    try:
        return COMMANDS[args.command](args, log)
    except UsageError as exc:
        _emit_error("usage", str(exc))
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        cause = _root_cause(exc)
        if isinstance(cause, (NumericalError, np.linalg.LinAlgError)):
            _emit_error("numerical", str(exc))
            return EXIT_NUMERIC
        if isinstance(cause, (DataError, MeshError, ValueError, OSError, KeyError)):
            _emit_error("data", str(exc))
            return EXIT_DATA
        raise
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


def main_exit() -> None:
    """Console-script entry point."""
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_exit()
