"""Seeded simulation experiments: truths, designs, noise, missing data, MISE.

Randomness layout: replication ``j`` draws from ``SeedSequence(seed, spawn_key=(j,))``,
split into independent child streams for the design, the noise, the missing-data
mask and the CV folds. The same replication therefore sees the same underlying
draws in every scenario (common random numbers), so scenario comparisons are
not blurred by unrelated sampling noise. Evaluation points come from a separate
stream shared by all replications.
"""

from __future__ import annotations

import ast
import csv
import io
import json
import math
import operator
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .adaptive import AdaptiveConfig, fit_atpst
from .mesh import TetMesh, generate_box_mesh
from .solver import Dataset, FitConfig, SplineSpace, _Problem

__all__ = [
    "Scenario",
    "SimConfig",
    "SimReport",
    "TRUTHS",
    "truth_function",
    "expression_truth",
    "random_design",
    "fixed_design",
    "noise_sigma",
    "psnr_of",
    "apply_missing",
    "mise",
    "run_experiment",
    "ScenarioError",
]

MISSING_SCHEMES = ("none", "random", "block", "block+random")
METHODS = ("tpst", "atpst")

DEFAULT_BOUNDS = ((0.0, 0.0, 0.0), (3.0, 1.0, 1.0))
DEFAULT_RESOLUTION = (6, 3, 3)
DEFAULT_HOLES = (((1.0, 1 / 3, 1 / 3), (2.0, 2 / 3, 2 / 3)),)
# about 12% of the default domain's volume
DEFAULT_BLOCK = ((0.0, 0.0, 0.0), (0.75, 0.5, 0.925))


# --- truths ---------------------------------------------------------------------------

def _smooth(p):
    return np.sin(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1]) * p[:, 2]


def _linear(p):
    return 1.0 + p[:, 0] + 2.0 * p[:, 1] - p[:, 2]


def _wavy_factory(midpoint: float):
    def wavy(p):
        bump = 0.8 * np.sin(4 * np.pi * p[:, 0]) * np.sin(4 * np.pi * p[:, 1])
        return _smooth(p) + bump * (p[:, 0] > midpoint)
    return wavy


TRUTHS = ("smooth", "wavy", "linear")

_FUNCS = {name: getattr(np, name) for name in
          ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "arctan", "sinh", "cosh")}
_FUNCS["atan"] = np.arctan
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_CMPOPS = {ast.Gt: operator.gt, ast.GtE: operator.ge, ast.Lt: operator.lt, ast.LtE: operator.le}


def expression_truth(expr: str) -> Callable[[np.ndarray], np.ndarray]:
    """Compile an arithmetic expression in ``x, y, z`` (numpy functions, no names else)."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"invalid truth expression {expr!r}: {exc.msg}") from None

    def check(node):
        if isinstance(node, ast.Expression):
            return check(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return
        if isinstance(node, ast.Name) and (node.id in "xyz" and len(node.id) == 1
                                           or node.id in _CONSTS):
            return
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return check(node.left), check(node.right)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            return check(node.operand)
        if isinstance(node, ast.Compare) and len(node.ops) == 1 and type(node.ops[0]) in _CMPOPS:
            return check(node.left), check(node.comparators[0])
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and not node.keywords):
            for a in node.args:
                check(a)
            return
        raise ValueError(f"unsupported element in truth expression {expr!r}: "
                         f"{ast.dump(node)[:60]}")

    check(tree)

    def ev(node, env):
        if isinstance(node, ast.Expression):
            return ev(node.body, env)
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else _CONSTS[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](ev(node.left, env), ev(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = ev(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Compare):
            return _CMPOPS[type(node.ops[0])](ev(node.left, env),
                                               ev(node.comparators[0], env)).astype(float)
        return _FUNCS[node.func.id](*(ev(a, env) for a in node.args))

    def f(p):
        p = np.asarray(p, dtype=float).reshape(-1, 3)
        env = {"x": p[:, 0], "y": p[:, 1], "z": p[:, 2]}
        with np.errstate(all="ignore"):
            out = np.broadcast_to(ev(tree, env), (len(p),)).astype(float)
        return out

    return f


def truth_function(name: str, bounds=DEFAULT_BOUNDS) -> Callable[[np.ndarray], np.ndarray]:
    """Built-in truth by name, or a custom ``x, y, z`` expression."""
    if name == "smooth":
        return _smooth
    if name == "linear":
        return _linear
    if name == "wavy":
        return _wavy_factory(0.5 * (bounds[0][0] + bounds[1][0]))
    return expression_truth(name)


# --- designs, noise, missingness --------------------------------------------------------

def _sample_inside(mesh: TetMesh, n: int, rng: np.random.Generator, bounds) -> np.ndarray:
    lo, hi = np.asarray(bounds[0], float), np.asarray(bounds[1], float)
    out, have = [], 0
    while have < n:
        cand = rng.uniform(lo, hi, size=(max(2 * (n - have), 64), 3))
        cand = cand[mesh.locate(cand)[0] >= 0]
        out.append(cand)
        have += len(cand)
    return np.concatenate(out)[:n]


def random_design(mesh: TetMesh, n: int, rng: np.random.Generator, bounds=None) -> np.ndarray:
    """``n`` points uniform over the meshed domain (rejection from its bounding box)."""
    if n < 1:
        raise ValueError("design size must be positive")
    if bounds is None:
        bounds = (mesh.nodes.min(0), mesh.nodes.max(0))
    return _sample_inside(mesh, n, rng, bounds)


def fixed_design(mesh: TetMesh, resolution, bounds=None) -> np.ndarray:
    """Voxel centers of a regular grid over the bounding box, kept if inside the domain."""
    if bounds is None:
        bounds = (mesh.nodes.min(0), mesh.nodes.max(0))
    lo, hi = np.asarray(bounds[0], float), np.asarray(bounds[1], float)
    res = np.asarray(resolution, dtype=int)
    if res.shape != (3,) or np.any(res < 1):
        raise ValueError("grid resolution must be three positive integers")
    axes = [lo[i] + (np.arange(res[i]) + 0.5) * (hi[i] - lo[i]) / res[i] for i in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    return pts[mesh.locate(pts)[0] >= 0]


def noise_sigma(values, psnr: float) -> float:
    """Noise level giving peak signal-to-noise ratio ``psnr`` (dB) for these values."""
    peak = float(np.max(np.asarray(values, dtype=float)))
    if peak == 0.0:
        raise ValueError("PSNR is undefined for a truth whose maximum is 0")
    return abs(peak) * 10.0 ** (-psnr / 20.0)


def psnr_of(values, sigma: float) -> float:
    peak = float(np.max(np.asarray(values, dtype=float)))
    return 10.0 * math.log10(peak ** 2 / sigma ** 2)


def _in_box(points, box) -> np.ndarray:
    lo, hi = np.asarray(box[0], float), np.asarray(box[1], float)
    return np.all((points >= lo) & (points <= hi), axis=1)


def apply_missing(points, scheme: str = "none", rate: float = 0.0,
                  rng: np.random.Generator | int | None = None, block=DEFAULT_BLOCK) -> np.ndarray:
    """Boolean mask of retained points.

    ``random`` drops each point independently with probability ``rate``;
    ``block`` drops the points inside ``block``; ``block+random`` drops the block
    and then drops survivors at random so the expected total loss is ``rate``
    (nothing more is dropped when the block alone already exceeds it). A rate of
    0 keeps everything for the random schemes.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if scheme not in MISSING_SCHEMES:
        raise ValueError(f"unknown missing scheme {scheme!r}; choose from {MISSING_SCHEMES}")
    if not 0.0 <= rate < 1.0:
        raise ValueError("missing rate must lie in [0, 1)")
    rng = np.random.default_rng(rng)
    keep = np.ones(len(pts), dtype=bool)
    if scheme == "none" or (scheme in ("random", "block+random") and rate == 0.0):
        return keep
    u = rng.random(len(pts))  # always drawn, so masks nest across rates
    if scheme in ("block", "block+random"):
        lo, hi = np.asarray(block[0], float), np.asarray(block[1], float)
        if np.any(hi <= lo) or np.any(hi < pts.min(0)) or np.any(lo > pts.max(0)):
            raise ValueError("missing-data block does not intersect the design")
        keep &= ~_in_box(pts, block)
    if scheme == "random":
        keep &= u >= rate
    elif scheme == "block+random":
        lost = 1.0 - keep.mean()
        if rate > lost:
            keep &= u >= (rate - lost) / (1.0 - lost)
    if not keep.any():
        raise ValueError("missing-data scheme removed every point")
    return keep


def mise(fit, truth: Callable, points, return_count: bool = False):
    """Mean squared difference between fit and truth over ``points`` inside the mesh."""
    f = fit.field if hasattr(fit, "field") else fit
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    pred = f(pts)
    ok = ~np.isnan(pred)
    if not ok.any():
        raise ValueError("no evaluation point lies inside the mesh")
    val = float(np.mean((pred[ok] - truth(pts[ok])) ** 2))
    return (val, int((~ok).sum())) if return_count else val


# --- configuration ----------------------------------------------------------------------

@dataclass
class Scenario:
    name: str = "default"
    truth: str = "smooth"
    design: str = "random"
    n: int = 2000
    grid: tuple = (30, 10, 10)
    psnr: float = 10.0
    missing: str = "none"
    rate: float = 0.0
    block: tuple = DEFAULT_BLOCK

    def __post_init__(self):
        if self.design not in ("random", "fixed"):
            raise ValueError("design must be 'random' or 'fixed'")
        if self.missing not in MISSING_SCHEMES:
            raise ValueError(f"missing scheme must be one of {MISSING_SCHEMES}")
        if not 0.0 <= self.rate <= 0.5:
            raise ValueError("missing rate must lie in [0, 0.5]")
        if not math.isfinite(self.psnr):
            raise ValueError("PSNR must be finite")
        if self.n < 1:
            raise ValueError("n must be positive")
        self.grid = tuple(int(g) for g in self.grid)
        self.block = tuple(tuple(float(v) for v in c) for c in self.block)
        if self.truth not in TRUTHS:
            expression_truth(self.truth)  # validate early


_SCENARIO_KEYS = {f.name for f in fields(Scenario)}


@dataclass
class SimConfig:
    scenarios: list = field(default_factory=lambda: [Scenario()])
    bounds: tuple = DEFAULT_BOUNDS
    resolution: tuple = DEFAULT_RESOLUTION
    holes: tuple = DEFAULT_HOLES
    replications: int = 20
    seed: int = 0
    methods: tuple = ("tpst",)
    fit: FitConfig = field(default_factory=FitConfig)
    adaptive: AdaptiveConfig = field(default_factory=AdaptiveConfig)
    eval_points: int = 2000

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.eval_points < 1:
            raise ValueError("eval_points must be positive")
        self.methods = tuple(self.methods)
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ValueError(f"methods must be a nonempty subset of {METHODS}")
        names = [s.name for s in self.scenarios]
        if not names or len(set(names)) != len(names):
            raise ValueError("scenario names must be present and unique")
        self.bounds = tuple(tuple(float(v) for v in c) for c in self.bounds)
        self.resolution = tuple(int(r) for r in self.resolution)
        self.holes = tuple(tuple(tuple(float(v) for v in c) for c in h) for h in self.holes)

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        """Build from JSON-style data.

        Scenario fields given at the top level act as defaults for every entry of
        ``scenarios``; without a ``scenarios`` list they define a single scenario.
        """
        data = dict(data)
        known = {f.name for f in fields(cls)} | _SCENARIO_KEYS
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown simulation config keys: {sorted(unknown)}")
        base = {k: data.pop(k) for k in list(data) if k in _SCENARIO_KEYS and k != "name"}
        scen = data.pop("scenarios", None) or [{"name": data.pop("name", "default")}]
        data.pop("name", None)
        scenarios = []
        for s in scen:
            extra = set(s) - _SCENARIO_KEYS
            if extra:
                raise ValueError(f"unknown scenario keys: {sorted(extra)}")
            scenarios.append(Scenario(**{**base, **s}))
        fit = data.pop("fit", None) or {}
        fit = dict(fit)
        fit.pop("adaptive", None)
        adaptive = data.pop("adaptive", None) or {}
        return cls(scenarios=scenarios, fit=FitConfig(**fit),
                   adaptive=AdaptiveConfig(**adaptive), **data)

    def to_dict(self) -> dict:
        return {
            "scenarios": [asdict(s) for s in self.scenarios],
            "bounds": self.bounds, "resolution": self.resolution, "holes": self.holes,
            "replications": self.replications, "seed": self.seed,
            "methods": list(self.methods), "fit": self.fit.to_dict(),
            "adaptive": self.adaptive.to_dict(), "eval_points": self.eval_points,
        }

    def mesh(self) -> TetMesh:
        return generate_box_mesh(self.bounds, self.resolution, self.holes)


# --- report -------------------------------------------------------------------------------

REPORT_COLUMNS = ("scenario", "method", "replication", "n", "sigma", "rss", "edf", "mise",
                  "lambda", "C")


@dataclass
class SimReport:
    rows: list
    timings: list
    config: SimConfig

    def table(self, scenario: str | None = None, method: str | None = None) -> list:
        return [r for r in self.rows if (scenario is None or r["scenario"] == scenario)
                and (method is None or r["method"] == method)]

    def mises(self, scenario: str, method: str = "tpst") -> np.ndarray:
        return np.array([r["mise"] for r in self.table(scenario, method)])

    def summary(self) -> dict:
        out = []
        for s in self.config.scenarios:
            for m in self.config.methods:
                v = self.mises(s.name, m)
                lam = np.array([r["lambda"] for r in self.table(s.name, m)])
                se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else float("nan")
                out.append({"scenario": s.name, "method": m, "replications": int(len(v)),
                            "mean_mise": float(v.mean()), "se_mise": se,
                            "median_lambda": float(np.median(lam))})
        return {"config": self.config.to_dict(), "results": out}

    def report_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in REPORT_COLUMNS])
        return buf.getvalue()

    def timings_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("scenario", "method", "replication", "seconds"))
        for r in self.timings:
            w.writerow([r["scenario"], r["method"], r["replication"], f"{r['seconds']:.6f}"])
        return buf.getvalue()

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"report": out / "report.csv", "summary": out / "summary.json",
                 "timings": out / "timings.csv"}
        paths["report"].write_text(self.report_csv())
        paths["summary"].write_text(json.dumps(_jsonable(self.summary()), indent=2,
                                               sort_keys=True) + "\n")
        paths["timings"].write_text(self.timings_csv())
        return paths


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


class ScenarioError(RuntimeError):
    """A replication failed; the original exception is attached as ``__cause__``."""


# --- running ------------------------------------------------------------------------------

def _streams(seed: int, rep: int):
    ss = np.random.SeedSequence(seed, spawn_key=(rep,))
    design, noise, missing, folds = ss.spawn(4)
    return (np.random.default_rng(design), np.random.default_rng(noise),
            np.random.default_rng(missing), int(folds.generate_state(1)[0]))


def _run_one(cfg: SimConfig, mesh: TetMesh, space: SplineSpace, scen: Scenario, rep: int,
             eval_pts: np.ndarray) -> tuple[list, list]:
    truth = truth_function(scen.truth, cfg.bounds)
    rng_design, rng_noise, rng_missing, fold_seed = _streams(cfg.seed, rep)
    if scen.design == "random":
        pts = random_design(mesh, scen.n, rng_design, cfg.bounds)
    else:
        pts = fixed_design(mesh, scen.grid, cfg.bounds)
    m = truth(pts)
    sigma = noise_sigma(m, scen.psnr)
    y = m + sigma * rng_noise.standard_normal(len(pts))
    keep = apply_missing(pts, scen.missing, scen.rate, rng_missing, scen.block)
    data = Dataset.locate(mesh, pts[keep], y[keep])
    fcfg = replace(cfg.fit, seed=fold_seed, adaptive=None)
    prob = _Problem(space, data)
    rows, timings = [], []
    tpst = None
    for method in cfg.methods:
        t0 = time.perf_counter()
        if method == "tpst":
            fit = tpst = prob.fit(fcfg)
        else:
            if tpst is None:
                tpst = prob.fit(fcfg)
            fit = fit_atpst(data, mesh, replace(fcfg, adaptive=cfg.adaptive), space=space,
                            initial=tpst)
        secs = time.perf_counter() - t0
        rows.append({"scenario": scen.name, "method": method, "replication": rep,
                     "n": data.n, "sigma": sigma, "rss": fit.rss, "edf": fit.edf,
                     "mise": mise(fit, truth, eval_pts), "lambda": fit.lam,
                     "C": fit.C})
        timings.append({"scenario": scen.name, "method": method, "replication": rep,
                        "seconds": secs})
    return rows, timings


def run_experiment(config: SimConfig, out_dir=None, workers: int = 1,
                   progress: Optional[Callable[[str], None]] = None) -> SimReport:
    """Run every (scenario, replication) pair; optionally write report files to ``out_dir``."""
    mesh = config.mesh()
    space = SplineSpace.get(mesh, config.fit.degree, config.fit.smoothness, config.fit.rank_tol)
    eval_rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(2**32 - 1,)))
    eval_pts = random_design(mesh, config.eval_points, eval_rng, config.bounds)
    jobs = [(s, r) for s in config.scenarios for r in range(config.replications)]

    def job(item):
        scen, rep = item
        try:
            out = _run_one(config, mesh, space, scen, rep, eval_pts)
        except Exception as exc:
            raise ScenarioError(f"scenario {scen.name!r}, replication {rep}: {exc}") from exc
        if progress:
            progress(f"{scen.name} rep {rep} done")
        return out

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(job, jobs))
    else:
        results = [job(j) for j in jobs]
    rows = [r for res in results for r in res[0]]
    timings = [t for res in results for t in res[1]]
    report = SimReport(rows, timings, config)
    if out_dir is not None:
        report.write(out_dir)
    return report
