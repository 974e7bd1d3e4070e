"""Trivariate Bernstein polynomials on tetrahedra and spline fields built from them.

Multi-indices ``(i, j, k, l)`` with ``i + j + k + l = d`` are kept in
lexicographic order, ``(d,0,0,0), (d-1,1,0,0), (d-1,0,1,0), ..., (0,0,0,d)``.
A spline field stores one block of ``basis_dim(d)`` coefficients per tet, in
tet order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .mesh import TetMesh

__all__ = [
    "basis_dim",
    "degree_of_dim",
    "BasisLayout",
    "layout",
    "lex_index",
    "multinomial",
    "eval_basis",
    "eval_bform",
    "domain_point",
    "domain_points",
    "eval_polynomial",
    "bform_of_polynomial",
    "diff_matrix_first",
    "diff_matrix",
    "mass_matrix",
    "SplineField",
    "eval_spline",
]


def basis_dim(d: int) -> int:
    """Number of Bernstein polynomials of degree ``d``: ``binom(d + 3, 3)``."""
    if d < 0:
        raise ValueError("degree must be nonnegative")
    return math.comb(d + 3, 3)


def degree_of_dim(n: int) -> int:
    d = 0
    while basis_dim(d) < n:
        d += 1
    if basis_dim(d) != n:
        raise ValueError(f"{n} is not a Bernstein block size")
    return d


def _log_comb(n, k):
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def multinomial(idx: Sequence[int]) -> float:
    """``d! / (i! j! k! l!)``; exact below degree 11, log-gamma above."""
    d = sum(idx)
    if d <= 10:
        out = math.factorial(d)
        for i in idx:
            out //= math.factorial(i)
        return float(out)
    return math.exp(math.lgamma(d + 1) - sum(math.lgamma(i + 1) for i in idx))


def _comb(n, k):
    return float(math.comb(n, k)) if n <= 20 else math.exp(_log_comb(n, k))


@dataclass(frozen=True)
class BasisLayout:
    """Lexicographic ordering of the degree-``d`` multi-indices.

    Attributes
    ----------
    degree : int
    indices : ndarray of int, shape (dim, 4)
    coef : ndarray, shape (dim,)
        Multinomial coefficients ``d!/(i!j!k!l!)`` in layout order.
    """

    degree: int
    indices: np.ndarray
    coef: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.indices)

    def position(self, mi: Sequence[int]) -> int:
        """Zero-based position of a multi-index."""
        return lex_index(self.degree, mi) - 1

    @property
    def lookup(self) -> dict[tuple[int, int, int, int], int]:
        return _lookup(self.degree)


@lru_cache(maxsize=None)
def layout(d: int) -> BasisLayout:
    """Cached :class:`BasisLayout` for degree ``d``."""
    if d < 0:
        raise ValueError("degree must be nonnegative")
    rows = [(i, j, k, d - i - j - k)
            for i in range(d, -1, -1)
            for j in range(d - i, -1, -1)
            for k in range(d - i - j, -1, -1)]
    idx = np.array(rows, dtype=np.int64).reshape(-1, 4)
    coef = np.array([multinomial(r) for r in rows])
    idx.setflags(write=False)
    coef.setflags(write=False)
    return BasisLayout(d, idx, coef)


@lru_cache(maxsize=None)
def _lookup(d):
    return {tuple(int(x) for x in r): n for n, r in enumerate(layout(d).indices)}


def lex_index(d: int, mi: Sequence[int]) -> int:
    """One-based position of ``mi`` in the lexicographic list, by the closed form.

    >>> lex_index(3, (2, 1, 0, 0))
    2
    """
    i, j, k, l = (int(x) for x in mi)
    if min(i, j, k, l) < 0 or i + j + k + l != d:
        raise ValueError(f"{tuple(mi)} is not a multi-index of degree {d}")
    return (sum((m + 1) * m // 2 for m in range(d - i + 1))
            + sum(n + 1 for n in range(d - i - j + 1)) - k)


def eval_basis(lay: BasisLayout | int, b) -> np.ndarray:
    """All degree-``d`` Bernstein polynomials at barycentric points ``b`` (..., 4)."""
    lay = layout(lay) if isinstance(lay, (int, np.integer)) else lay
    b = np.asarray(b, dtype=float)
    pw = b[..., None, :] ** lay.indices  # (..., dim, 4)
    return lay.coef * np.prod(pw, axis=-1)


@lru_cache(maxsize=None)
def _up_index(m: int) -> np.ndarray:
    """For each degree-(m-1) multi-index, positions of its four degree-m successors."""
    lo, look = layout(m - 1).indices, _lookup(m)
    out = np.empty((len(lo), 4), dtype=np.int64)
    for r, a in enumerate(lo):
        for s in range(4):
            e = list(a)
            e[s] += 1
            out[r, s] = look[tuple(e)]
    out.setflags(write=False)
    return out


def eval_bform(coeffs, b) -> np.ndarray | float:
    """Evaluate B-forms by de Casteljau's algorithm.

    Parameters
    ----------
    coeffs : array_like, shape (dim,) or (n, dim)
        B-coefficients in lexicographic order.
    b : array_like, shape (4,) or (n, 4)
        Barycentric coordinates (may lie outside the tet).
    """
    c = np.asarray(coeffs, dtype=float)
    b = np.asarray(b, dtype=float)
    scalar = c.ndim == 1 and b.ndim == 1
    d = degree_of_dim(c.shape[-1])
    c = np.atleast_2d(c)
    b = np.atleast_2d(b)
    for m in range(d, 0, -1):
        up = _up_index(m)
        c = (c[:, up] * b[:, None, :]).sum(-1)
    out = c[:, 0]
    return float(out[0]) if scalar else out


def domain_point(mesh: TetMesh, tet: int, mi: Sequence[int]) -> np.ndarray:
    mi = np.asarray(mi, dtype=float)
    return mi @ mesh.vertices[tet] / mi.sum()


def domain_points(mesh: TetMesh, d: int) -> np.ndarray:
    """Domain points of every tet, shape (n_tets, dim, 3)."""
    w = layout(d).indices / max(d, 1)
    return np.einsum("ms,tsx->tmx", w, mesh.vertices)


def eval_polynomial(poly: Mapping[tuple[int, int, int], float], pts) -> np.ndarray:
    """Evaluate ``sum c * x**a * y**b * z**c`` given as ``{(a, b, c): coef}``."""
    pts = np.asarray(pts, dtype=float)
    out = np.zeros(pts.shape[:-1])
    for (a, b, c), coef in poly.items():
        out = out + coef * pts[..., 0] ** a * pts[..., 1] ** b * pts[..., 2] ** c
    return out


def poly_degree(poly: Mapping[tuple[int, int, int], float]) -> int:
    return max((sum(k) for k, v in poly.items() if v != 0), default=0)


def bform_of_polynomial(mesh: TetMesh, lay: BasisLayout | int,
                        poly: Mapping[tuple[int, int, int], float]) -> "SplineField":
    """Exact B-form of a global polynomial, by interpolation at the domain points."""
    lay = layout(lay) if isinstance(lay, (int, np.integer)) else lay
    d = lay.degree
    if poly_degree(poly) > d:
        raise ValueError(f"polynomial degree {poly_degree(poly)} exceeds spline degree {d}")
    vals = eval_polynomial(poly, domain_points(mesh, d))  # (N, dim)
    if d == 0:
        vals = eval_polynomial(poly, mesh.vertices.mean(1))[:, None]
    vand = eval_basis(lay, lay.indices / max(d, 1))
    if np.linalg.cond(vand) > 1e12:
        raise np.linalg.LinAlgError("singular domain-point interpolation system")
    coeffs = np.linalg.solve(vand, vals.T).T
    return SplineField(mesh, lay, coeffs)


# --- derivatives ---------------------------------------------------------------

def _check_direction(a):
    a = np.asarray(a, dtype=float)
    if a.shape != (4,):
        raise ValueError("directional coordinates need 4 entries")
    if abs(a.sum()) > 1e-12 * max(1.0, np.abs(a).max()):
        raise ValueError(f"directional coordinates must sum to zero, got {a.sum():.3e}")
    return a


@lru_cache(maxsize=None)
def _shift_mats(d: int) -> np.ndarray:
    """``E[s]`` with ``C1_d(a) = sum_s a_s E[s]``, shape (4, dim_d, dim_{d-1})."""
    hi, look = layout(d).indices, _lookup(d - 1)
    out = np.zeros((4, len(hi), basis_dim(d - 1)))
    for r, a in enumerate(hi):
        for s in range(4):
            if a[s] > 0:
                e = list(a)
                e[s] -= 1
                out[s, r, look[tuple(e)]] = d
    out.setflags(write=False)
    return out


def diff_matrix_first(d: int, a) -> np.ndarray:
    """First-derivative matrix: ``D_u B_d = C @ B_{d-1}`` for direction coordinates ``a``."""
    if d < 1:
        raise ValueError("derivatives need degree >= 1")
    a = _check_direction(a)
    return np.tensordot(a, _shift_mats(d), axes=1)


def diff_matrix(d: int, dirs) -> np.ndarray:
    """Order-m derivative matrix ``C1_d(u1) @ C1_{d-1}(u2) @ ... @ C1_{d-m+1}(um)``."""
    dirs = [np.asarray(u, dtype=float) for u in dirs]
    if len(dirs) > d:
        raise ValueError(f"cannot take {len(dirs)} derivatives of a degree-{d} basis")
    out = np.eye(basis_dim(d))
    for step, a in enumerate(dirs):
        out = out @ diff_matrix_first(d - step, a)
    return out


# --- integrals -----------------------------------------------------------------

@lru_cache(maxsize=None)
def _unit_mass(d: int) -> np.ndarray:
    idx = layout(d).indices
    num = np.ones((len(idx), len(idx)))
    for s in range(4):
        for p, a in enumerate(idx[:, s]):
            for q, b in enumerate(idx[:, s]):
                num[p, q] *= _comb(int(a + b), int(a))
    out = num / (_comb(2 * d, d) * _comb(2 * d + 3, 3))
    out.setflags(write=False)
    return out


def mass_matrix(d_reduced: int, volume: float) -> np.ndarray:
    """Gram matrix ``int_T B_i B_j`` of the degree-``d_reduced`` basis on a tet of given volume."""
    if d_reduced < 0:
        raise ValueError("degree must be nonnegative")
    return _unit_mass(d_reduced) * float(volume)


# --- spline fields -------------------------------------------------------------

@dataclass
class SplineField:
    """Piecewise polynomial given by one block of B-coefficients per tet."""

    mesh: TetMesh
    layout: BasisLayout
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        want = (self.mesh.n_tets, self.layout.dim)
        if c.size != want[0] * want[1]:
            raise ValueError(f"expected {want[0] * want[1]} coefficients, got {c.size}")
        self.coeffs = c.reshape(want)

    @property
    def degree(self) -> int:
        return self.layout.degree

    @property
    def flat(self) -> np.ndarray:
        return self.coeffs.ravel()

    def __call__(self, points) -> np.ndarray:
        """Values at ``points`` (NaN outside the mesh)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        tet, bary = self.mesh.locate(pts)
        out = np.full(len(pts), np.nan)
        ok = tet >= 0
        if ok.any():
            out[ok] = eval_bform(self.coeffs[tet[ok]], bary[ok])
        return out

    def eval_in(self, tet, points) -> np.ndarray:
        """Evaluate the polynomial piece of tet(s) ``tet`` at ``points``, inside or not."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        tet = np.broadcast_to(np.asarray(tet), (len(pts),))
        hom = np.concatenate([np.ones((len(pts), 1)), pts], axis=1)
        b = np.einsum("kij,kj->ki", self.mesh.bary_maps[tet], hom)
        return eval_bform(self.coeffs[tet], b)

    def derivative_in(self, tet, points, u) -> np.ndarray:
        """Directional derivative along the Cartesian vector ``u`` of the tet(s) ``tet`` pieces."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        tet = np.broadcast_to(np.asarray(tet), (len(pts),))
        maps = self.mesh.bary_maps[tet]
        a = maps @ np.r_[0.0, np.asarray(u, dtype=float)]
        b = np.einsum("kij,kj->ki", maps, np.concatenate([np.ones((len(pts), 1)), pts], 1))
        E = _shift_mats(self.degree)
        c1 = np.einsum("ks,srm,kr->km", a, E, self.coeffs[tet])
        return eval_bform(c1, b)


def eval_spline(field: SplineField, p) -> float | None:
    """Value of the field at a single point, or None outside the mesh."""
    v = field(np.asarray(p, dtype=float)[None, :])[0]
    return None if np.isnan(v) else float(v)
