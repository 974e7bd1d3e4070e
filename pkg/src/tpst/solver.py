"""Constrained penalized least squares for trivariate splines.

The estimator minimizes ``||Y - B gamma||^2 + (lambda / n) gamma^T P gamma``
subject to ``H gamma = 0``. Writing ``gamma = Q2 theta`` with ``Q2`` an
orthonormal basis of ker(H) turns this into an unconstrained ridge-type problem

    (Q2^T B^T B Q2 + (lambda / n) Q2^T P Q2) theta = Q2^T B^T Y.

Penalty selection reuses one generalized symmetric eigendecomposition for the
whole lambda grid, so scoring a grid costs little more than a single solve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sl
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .bernstein import BasisLayout, SplineField, eval_basis, layout
from .mesh import TetMesh
from .penalty import PenaltyBlocks, assemble_P
from .smoothness import ConstraintMatrix, assemble_H

__all__ = [
    "NumericalError",
    "SingularSystemError",
    "Dataset",
    "FitConfig",
    "FitResult",
    "SolveResult",
    "CVResult",
    "SplineSpace",
    "LambdaPath",
    "design_matrix",
    "nullspace_basis",
    "reduce_penalty",
    "solve_for_lambda",
    "gcv_score",
    "default_lambdas",
    "fold_assignment",
    "block_cv",
    "fit_tpst",
    "predict",
]

SELECTORS = ("gcv", "cv", "fixed")


class NumericalError(RuntimeError):
    """A linear-algebra step failed (singular system, non-finite scores, ...)."""


class SingularSystemError(NumericalError):
    pass


# --- data -----------------------------------------------------------------------

@dataclass
class Dataset:
    """Observations ``(v_i, Y_i)`` located in a mesh; points outside are dropped."""

    points: np.ndarray
    values: np.ndarray
    tets: np.ndarray
    bary: np.ndarray
    n_dropped: int = 0

    @classmethod
    def locate(cls, mesh: TetMesh, points, values) -> "Dataset":
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        y = np.asarray(values, dtype=float).reshape(-1)
        if len(pts) != len(y):
            raise ValueError(f"{len(pts)} points but {len(y)} values")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(y)):
            raise ValueError("points and values must be finite")
        tet, bary = mesh.locate(pts)
        ok = tet >= 0
        return cls(pts[ok], y[ok], tet[ok], bary[ok], int((~ok).sum()))

    @property
    def n(self) -> int:
        return len(self.values)

    def subset(self, mask) -> "Dataset":
        mask = np.asarray(mask)
        return Dataset(self.points[mask], self.values[mask], self.tets[mask],
                       self.bary[mask], self.n_dropped)


def design_matrix(mesh: TetMesh, lay: BasisLayout | int, dataset: Dataset) -> sp.csr_matrix:
    """Sparse n x (N * dim) matrix of basis values; one tet block per row."""
    lay = layout(lay) if isinstance(lay, (int, np.integer)) else lay
    if np.any(dataset.tets < 0):
        raise ValueError("dataset contains unlocated points")
    dim, n = lay.dim, dataset.n
    vals = eval_basis(lay, dataset.bary)
    cols = dataset.tets[:, None] * dim + np.arange(dim)
    indptr = np.arange(n + 1) * dim
    return sp.csr_matrix((vals.ravel(), cols.ravel(), indptr), shape=(n, mesh.n_tets * dim))


# --- constraint null space --------------------------------------------------------

def _equality_rows(H: sp.csr_matrix) -> np.ndarray:
    """Rows of the form ``x_i - x_j = 0`` (exactly two entries, +1 and -1)."""
    counts = np.diff(H.indptr)
    rows = np.flatnonzero(counts == 2)
    start = H.indptr[rows]
    a, b = H.data[start], H.data[start + 1]
    return rows[(np.abs(a) == 1.0) & (a + b == 0.0)]


def nullspace_basis(H: ConstraintMatrix | sp.spmatrix | np.ndarray, rank_tol: float = 1e-10,
                    method: str = "auto") -> np.ndarray:
    """Orthonormal basis Q2 of ker(H), from a column-pivoted QR factorization of H^T.

    ``method="qr"`` factors the full H^T. ``method="auto"`` first merges the
    coefficients tied by plain equality rows (the C^0 conditions), which gives an
    orthonormal basis of their kernel at no cost, and then applies the same QR to
    the remaining rows restricted to that subspace. Both yield an orthonormal
    basis of the same space. The numerical rank counts the R diagonal entries
    above ``rank_tol`` times the largest one.
    """
    if method not in ("auto", "qr"):
        raise ValueError(f"unknown null-space method {method!r}")
    if isinstance(H, ConstraintMatrix):
        H = H.H
    H = sp.csr_matrix(H, dtype=float)
    H.sum_duplicates()
    H.eliminate_zeros()
    ncol = H.shape[1]
    if method == "auto":
        eq = _equality_rows(H)
        ends = H.indices[np.add.outer(H.indptr[eq], [0, 1])].reshape(-1, 2)
        graph = sp.coo_matrix((np.ones(len(ends)), (ends[:, 0], ends[:, 1])), shape=(ncol, ncol))
        ngroup, label = connected_components(graph, directed=False)
        size = np.bincount(label, minlength=ngroup)
        G = sp.csr_matrix((1.0 / np.sqrt(size[label]), (np.arange(ncol), label)),
                          shape=(ncol, ngroup))
        rest = np.setdiff1d(np.arange(H.shape[0]), eq)
        A = (H[rest] @ G).toarray()
    else:
        G = None
        A = H.toarray()
    Z = _dense_nullspace(A, rank_tol)
    return Z if G is None else np.asarray(G @ Z)


def _dense_nullspace(A: np.ndarray, rank_tol: float) -> np.ndarray:
    m, k = A.shape
    if m == 0 or not np.any(A):
        return np.eye(k)
    Q, R, _ = sl.qr(A.T, pivoting=True, mode="full")
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rank_tol * diag[0]))
    return Q[:, rank:]


def reduce_penalty(Q2: np.ndarray, P: PenaltyBlocks | np.ndarray | sp.spmatrix) -> np.ndarray:
    """``Q2^T P Q2`` for a block-diagonal or explicit penalty."""
    if isinstance(P, PenaltyBlocks):
        n, dim = P.blocks.shape[:2]
        Qt = Q2.reshape(n, dim, -1)
        PQ = np.matmul(P.weighted(), Qt).reshape(n * dim, -1)
        out = Q2.T @ PQ
    else:
        out = Q2.T @ (P @ Q2)
    return 0.5 * (out + out.T)


# --- solving ------------------------------------------------------------------------

@dataclass
class SolveResult:
    theta: np.ndarray
    gamma: np.ndarray
    edf: float
    rss: float


def _cho(A: np.ndarray, what: str):
    msg = (f"{what} is singular: some spline directions are neither observed by the data "
           f"nor penalized (null space dim {A.shape[0]})")
    try:
        fac = sl.cho_factor(A, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(msg) from exc
    piv = np.abs(np.diag(fac[0]))
    if piv.size and piv.min() ** 2 <= 1e-13 * piv.max() ** 2:
        raise SingularSystemError(msg)
    return fac


def _solve_reduced(M, c, Pr, lam_eff, y, BQ, what):
    fac = _cho(M + lam_eff * Pr, what)
    theta = sl.cho_solve(fac, c)
    edf = float(np.trace(sl.cho_solve(fac, M)))
    resid = y - BQ @ theta
    return theta, edf, float(resid @ resid)


def solve_for_lambda(B, Y, Q2: np.ndarray, P, lam: float) -> SolveResult:
    """Penalized fit at a single ``lam`` (effective penalty ``lam / n``)."""
    if lam < 0 or not np.isfinite(lam):
        raise ValueError("lambda must be finite and nonnegative")
    y = np.asarray(Y, dtype=float)
    BQ = np.asarray(B @ Q2)
    if BQ.shape[0] != len(y):
        raise ValueError("B and Y have inconsistent lengths")
    Pr = reduce_penalty(Q2, P)
    theta, edf, rss = _solve_reduced(BQ.T @ BQ, BQ.T @ y, Pr, lam / len(y), y, BQ,
                                     f"reduced system at lambda={lam:g}")
    return SolveResult(theta, Q2 @ theta, edf, rss)


def gcv_score(rss: float, n: int, tr_s: float) -> float:
    """``n * RSS / (n - tr S)^2``; ``inf`` once the fit uses all degrees of freedom."""
    if tr_s >= n:
        return float("inf")
    return float(n * rss / (n - tr_s) ** 2)


class LambdaPath:
    """All penalized fits of one reduced problem, via ``Pr v = mu (M + s Pr) v``.

    With ``V^T (M + s Pr) V = I`` and ``V^T Pr V = diag(mu)`` the solution at an
    effective penalty ``l`` is ``theta = V diag(1 / (1 + (l - s) mu)) V^T c`` and
    ``tr S = sum (1 - s mu) / (1 + (l - s) mu)``.
    """

    def __init__(self, BQ: np.ndarray, y: np.ndarray, Pr: np.ndarray, M: np.ndarray | None = None):
        self.BQ = BQ
        self.y = y
        M = BQ.T @ BQ if M is None else M
        tp, tm = np.trace(Pr), np.trace(M)
        self.s = tm / tp if tp > 0 and tm > 0 else 1.0
        try:
            mu, V = sl.eigh(Pr, M + self.s * Pr)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(
                "reduced system is singular for every lambda: some spline directions are "
                "neither observed by the data nor penalized") from exc
        self.mu = np.clip(mu, 0.0, 1.0 / self.s)
        self.V = V
        self.F = BQ @ V
        self.ct = V.T @ (BQ.T @ y)

    @property
    def n(self) -> int:
        return len(self.y)

    def _den(self, lam_eff: float) -> np.ndarray:
        den = 1.0 + (lam_eff - self.s) * self.mu
        if np.min(den) <= 1e-12:
            raise SingularSystemError(f"reduced system is singular at effective lambda={lam_eff:g}")
        return den

    def theta(self, lam: float) -> np.ndarray:
        return self.V @ (self.ct / self._den(lam / self.n))

    def evaluate(self, lam: float) -> tuple[float, float]:
        """``(RSS, tr S)`` at ``lam``."""
        den = self._den(lam / self.n)
        resid = self.y - self.F @ (self.ct / den)
        edf = float(np.sum((1.0 - self.s * self.mu) / den))
        return float(resid @ resid), edf

    def predict_reduced(self, BQ_new: np.ndarray, lam: float) -> np.ndarray:
        return BQ_new @ self.theta(lam)


def default_lambdas(B, P: PenaltyBlocks, count: int = 20, lo: float = 1e-6, hi: float = 1e4):
    """Log-spaced grid ``rho * n * tr(B^T B) / tr(P)`` for rho in [lo, hi].

    The factor ``n`` cancels the ``1 / n`` of the effective penalty so the grid
    spans the same balance of fit and roughness whatever the sample size.
    """
    n = B.shape[0]
    tb = float(B.multiply(B).sum()) if sp.issparse(B) else float(np.sum(B * B))
    tp = float(np.einsum("t,tii->", P.weights, P.blocks))
    scale = n * tb / tp if tp > 0 and tb > 0 else 1.0
    return np.logspace(np.log10(lo), np.log10(hi), count) * scale


# --- configuration and results -----------------------------------------------------

@dataclass
class FitConfig:
    degree: int = 3
    smoothness: int = 1
    lambdas: Optional[Sequence[float]] = None
    select: str = "gcv"
    folds: int = 5
    seed: int = 0
    rank_tol: float = 1e-10
    adaptive: Optional[object] = None  # an adaptive.AdaptiveConfig when enabled

    def __post_init__(self):
        if not isinstance(self.degree, (int, np.integer)) or self.degree < 1:
            raise ValueError("degree must be a positive integer")
        if not 0 <= self.smoothness < self.degree:
            raise ValueError(f"smoothness must satisfy 0 <= r < d (got r={self.smoothness}, "
                             f"d={self.degree})")
        if self.degree < 2:
            raise ValueError("the second-derivative penalty needs degree >= 2")
        if self.select not in SELECTORS:
            raise ValueError(f"select must be one of {SELECTORS}")
        if self.lambdas is not None:
            lam = np.asarray(self.lambdas, dtype=float).reshape(-1)
            if len(lam) == 0 or np.any(lam < 0) or not np.all(np.isfinite(lam)):
                raise ValueError("lambda grid must be nonempty, finite and nonnegative")
            self.lambdas = tuple(float(x) for x in lam)
        if self.select == "fixed" and (self.lambdas is None or len(self.lambdas) != 1):
            raise ValueError("select='fixed' needs exactly one lambda")
        if self.folds < 2:
            raise ValueError("block cross-validation needs at least 2 folds")
        if not self.rank_tol > 0:
            raise ValueError("rank_tol must be positive")

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in
               ("degree", "smoothness", "select", "folds", "seed", "rank_tol")}
        out["lambdas"] = None if self.lambdas is None else list(self.lambdas)
        out["adaptive"] = None if self.adaptive is None else self.adaptive.to_dict()
        return out


@dataclass
class FitResult:
    field: SplineField
    lam: float
    lambdas: np.ndarray
    scores: np.ndarray
    edf: float
    rss: float
    n: int
    nullspace_dim: int
    select: str
    config: FitConfig
    gcv: float = float("nan")
    C: Optional[float] = None
    weights: Optional[np.ndarray] = None
    c_grid: Optional[np.ndarray] = None
    c_scores: Optional[np.ndarray] = None
    constraint_residual: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def gamma(self) -> np.ndarray:
        return self.field.flat

    def __call__(self, points) -> np.ndarray:
        return self.field(points)


# --- spline space cache --------------------------------------------------------------

class SplineSpace:
    """Everything about S^r_d on a mesh that does not depend on the data."""

    def __init__(self, mesh: TetMesh, degree: int, smoothness: int, rank_tol: float = 1e-10):
        self.mesh = mesh
        self.layout = layout(degree)
        self.smoothness = smoothness
        self.rank_tol = rank_tol
        self.H = assemble_H(mesh, self.layout, smoothness)
        self.Q2 = nullspace_basis(self.H, rank_tol)
        self.P = assemble_P(mesh, self.layout)
        self._Pr = reduce_penalty(self.Q2, self.P)

    _cache: dict = {}

    @classmethod
    def get(cls, mesh: TetMesh, degree: int, smoothness: int, rank_tol: float = 1e-10):
        key = (mesh.checksum, degree, smoothness, rank_tol)
        if key not in cls._cache:
            if len(cls._cache) >= 8:
                cls._cache.pop(next(iter(cls._cache)))
            cls._cache[key] = cls(mesh, degree, smoothness, rank_tol)
        return cls._cache[key]

    @property
    def degree(self) -> int:
        return self.layout.degree

    @property
    def dim(self) -> int:
        return self.Q2.shape[1]

    def penalty(self, weights=None) -> PenaltyBlocks:
        return self.P if weights is None else self.P.with_weights(weights)

    def reduced_penalty(self, weights=None) -> np.ndarray:
        return self._Pr if weights is None else reduce_penalty(self.Q2, self.penalty(weights))


class _Problem:
    """Data-dependent pieces shared by every lambda (and every adaptive weight set)."""

    def __init__(self, space: SplineSpace, dataset: Dataset):
        if dataset.n == 0:
            raise ValueError("no data points inside the mesh")
        self.space = space
        self.data = dataset
        self.B = design_matrix(space.mesh, space.layout, dataset)
        self.BQ = np.asarray(self.B @ space.Q2)
        self.M = self.BQ.T @ self.BQ
        self.y = dataset.values
        self.c = self.BQ.T @ self.y

    @property
    def n(self) -> int:
        return self.data.n

    def grid(self, cfg: FitConfig, weights=None, base=None) -> np.ndarray:
        if cfg.lambdas is not None:
            lam = np.asarray(cfg.lambdas, dtype=float)
            if weights is not None:
                # keep the grid anchored to the penalty's overall size
                P0, P1 = self.space.penalty(), self.space.penalty(weights)
                t0 = np.einsum("t,tii->", P0.weights, P0.blocks)
                t1 = np.einsum("t,tii->", P1.weights, P1.blocks)
                lam = lam * (t0 / t1 if t1 > 0 else 1.0)
            return lam
        return default_lambdas(self.B, self.space.penalty(weights))

    def select(self, cfg: FitConfig, Pr: np.ndarray, lambdas: np.ndarray):
        if cfg.select == "fixed":
            return float(lambdas[0]), np.full(1, np.nan)
        if cfg.select == "cv":
            res = _block_cv_reduced(self.BQ, self.y, self.data.tets, self.space.mesh.n_tets,
                                    Pr, cfg.folds, cfg.seed, lambdas)
            return res.best_lambda, res.errors
        path = LambdaPath(self.BQ, self.y, Pr, self.M)
        scores = np.array([_safe_gcv(path, lam) for lam in lambdas])
        return _argmin_lambda(lambdas, scores), scores

    def solve(self, Pr: np.ndarray, lam: float):
        return _solve_reduced(self.M, self.c, Pr, lam / self.n, self.y, self.BQ,
                              f"reduced system at lambda={lam:g}")

    def fit(self, cfg: FitConfig, weights=None) -> FitResult:
        Pr = self.space.reduced_penalty(weights)
        lambdas = self.grid(cfg, weights)
        lam, scores = self.select(cfg, Pr, lambdas)
        theta, edf, rss = self.solve(Pr, lam)
        gamma = self.space.Q2 @ theta
        field_ = SplineField(self.space.mesh, self.space.layout, gamma)
        resid = float(np.max(np.abs(self.space.H.H @ gamma), initial=0.0))
        return FitResult(field_, lam, lambdas, np.asarray(scores), edf, rss, self.n,
                         self.space.dim, cfg.select, cfg, gcv=gcv_score(rss, self.n, edf),
                         weights=None if weights is None else np.asarray(weights, dtype=float),
                         constraint_residual=resid)


def _safe_gcv(path: LambdaPath, lam: float) -> float:
    try:
        rss, edf = path.evaluate(lam)
    except SingularSystemError:
        warnings.warn(f"skipping lambda={lam:g}: singular reduced system", RuntimeWarning,
                      stacklevel=3)
        return float("inf")
    return gcv_score(rss, path.n, edf)


def _argmin_lambda(lambdas, scores) -> float:
    lambdas = np.asarray(lambdas, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if not np.any(np.isfinite(scores)):
        raise NumericalError("no lambda in the grid gave a finite selection score")
    best = np.min(scores[np.isfinite(scores)])
    # ties go to the smaller lambda
    return float(np.min(lambdas[scores == best]))


# --- block cross-validation -----------------------------------------------------------

@dataclass
class CVResult:
    best_lambda: float
    lambdas: np.ndarray
    errors: np.ndarray
    folds: np.ndarray  # fold id per tet
    skipped: list


def fold_assignment(n_tets: int, folds: int, seed: int) -> np.ndarray:
    """Tets shuffled by a seeded generator and dealt round-robin into ``folds`` folds."""
    if folds < 2:
        raise ValueError("block cross-validation needs at least 2 folds")
    if folds > n_tets:
        raise ValueError(f"cannot split {n_tets} tets into {folds} folds")
    perm = np.random.default_rng(seed).permutation(n_tets)
    out = np.empty(n_tets, dtype=np.int64)
    out[perm] = np.arange(n_tets) % folds
    return out


def _block_cv_reduced(BQ, y, point_tets, n_tets, Pr, folds, seed, lambdas) -> CVResult:
    lambdas = np.asarray(lambdas, dtype=float)
    assign = fold_assignment(n_tets, folds, seed)
    pfold = assign[point_tets]
    sse = np.zeros(len(lambdas))
    count = np.zeros(len(lambdas))
    skipped = []
    for f in range(folds):
        hold = pfold == f
        if not hold.any():
            continue
        train = ~hold
        if not train.any():
            raise ValueError(f"fold {f} leaves no training data")
        try:
            path = LambdaPath(BQ[train], y[train], Pr)
        except SingularSystemError:
            warnings.warn(f"block CV: fold {f} training system is singular; fold skipped",
                          RuntimeWarning, stacklevel=2)
            skipped.extend((f, float(lam)) for lam in lambdas)
            continue
        for j, lam in enumerate(lambdas):
            try:
                theta = path.V @ (path.ct / path._den(lam / path.n))
            except SingularSystemError:
                warnings.warn(f"block CV: fold {f} singular at lambda={lam:g}; skipped",
                              RuntimeWarning, stacklevel=2)
                skipped.append((f, float(lam)))
                continue
            err = y[hold] - BQ[hold] @ theta
            sse[j] += err @ err
            count[j] += hold.sum()
    with np.errstate(invalid="ignore", divide="ignore"):
        errors = np.where(count > 0, sse / np.maximum(count, 1), np.inf)
    return CVResult(_argmin_lambda(lambdas, errors), lambdas, errors, assign, skipped)


def block_cv(dataset: Dataset, mesh: TetMesh, lay: BasisLayout | int, H: ConstraintMatrix,
             P: PenaltyBlocks, folds: int = 5, seed: int = 0, lambdas=None,
             rank_tol: float = 1e-10) -> CVResult:
    """Select lambda by K-fold cross-validation whose folds are whole tetrahedra.

    Held-out points are predicted by the fit on the remaining folds; the score of
    a lambda is the mean squared prediction error over all held-out points.
    """
    lay = layout(lay) if isinstance(lay, (int, np.integer)) else lay
    Q2 = nullspace_basis(H, rank_tol)
    B = design_matrix(mesh, lay, dataset)
    BQ = np.asarray(B @ Q2)
    if lambdas is None:
        lambdas = default_lambdas(B, P)
    return _block_cv_reduced(BQ, dataset.values, dataset.tets, mesh.n_tets,
                             reduce_penalty(Q2, P), folds, seed, lambdas)


# --- entry points -----------------------------------------------------------------------

def fit_tpst(dataset: Dataset, mesh: TetMesh, config: FitConfig | None = None,
             space: SplineSpace | None = None) -> FitResult:
    """Fit the penalized spline (TPST) with lambda chosen per ``config.select``."""
    config = config or FitConfig()
    space = space or SplineSpace.get(mesh, config.degree, config.smoothness, config.rank_tol)
    return _Problem(space, dataset).fit(config)


def predict(fit: FitResult | SplineField, points) -> list[Optional[float]]:
    """Fitted values at ``points``; ``None`` for points outside the mesh."""
    fld = fit.field if isinstance(fit, FitResult) else fit
    vals = fld(points)
    return [None if np.isnan(v) else float(v) for v in vals]
