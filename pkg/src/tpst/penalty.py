"""Second-derivative roughness penalty, one dense block per tetrahedron.

For each tet the Cartesian axes are converted to directional coordinates and

    P_T = sum over ordered pairs (g, g') in {x, y, z}^2 of C(g, g') L C(g, g')^T

with ``C(g, g')`` the second-derivative matrix and ``L`` the degree ``d - 2``
mass matrix. Summing ordered pairs counts every mixed derivative twice, which
is exactly the weighting 1, 2, 2, 1, 2, 1 of the six distinct second
derivatives in the thin-plate energy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bernstein import BasisLayout, SplineField, _shift_mats, layout, mass_matrix
from .mesh import TetMesh

__all__ = ["PenaltyBlocks", "penalty_block", "assemble_P", "energy", "axis_directions"]


@dataclass
class PenaltyBlocks:
    """Block-diagonal penalty: ``blocks[t]`` is P_T, ``weights[t]`` its multiplier."""

    blocks: np.ndarray
    weights: np.ndarray

    @property
    def n_tets(self) -> int:
        return len(self.blocks)

    def weighted(self) -> np.ndarray:
        return self.blocks * self.weights[:, None, None]

    def with_weights(self, weights) -> "PenaltyBlocks":
        return PenaltyBlocks(self.blocks, _check_weights(weights, self.n_tets))

    def quad(self, coeffs) -> float:
        c = np.asarray(coeffs, dtype=float).reshape(self.n_tets, -1)
        return float(np.einsum("t,ti,tij,tj->", self.weights, c, self.blocks, c))


def _check_weights(weights, n):
    if weights is None:
        return np.ones(n)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if len(w) != n:
        raise ValueError(f"expected {n} weights, got {len(w)}")
    if (w < 0).any() or not np.all(np.isfinite(w)):
        raise ValueError("penalty weights must be finite and nonnegative")
    return w


def axis_directions(mesh: TetMesh, tets=None) -> np.ndarray:
    """Directional coordinates of the x, y, z unit vectors per tet, shape (n, 3, 4)."""
    maps = mesh.bary_maps if tets is None else mesh.bary_maps[np.asarray(tets)]
    return np.transpose(maps[:, :, 1:], (0, 2, 1))


def _blocks(mesh: TetMesh, lay: BasisLayout, tets) -> np.ndarray:
    d = lay.degree
    if d < 2:
        raise ValueError("the second-derivative penalty needs degree >= 2")
    E1, E2 = _shift_mats(d), _shift_mats(d - 1)
    G = np.einsum("sij,tjk->stik", E1, E2)  # C2(a, a') = sum a_s a'_t G[s, t]
    A = axis_directions(mesh, tets)         # (n, 3, 4)
    C = np.einsum("ngs,nht,stik->nghik", A, A, G)
    L = mass_matrix(d - 2, 1.0)
    P = np.einsum("nghik,kl,nghjl->nij", C, L, C)
    P *= mesh.volumes[np.asarray(tets)][:, None, None]
    return 0.5 * (P + np.transpose(P, (0, 2, 1)))


def penalty_block(mesh: TetMesh, lay: BasisLayout | int, tet: int) -> np.ndarray:
    lay = layout(lay) if isinstance(lay, (int, np.integer)) else lay
    mesh.check_tet(tet)
    return _blocks(mesh, lay, [tet])[0]


def assemble_P(mesh: TetMesh, lay: BasisLayout | int, weights=None) -> PenaltyBlocks:
    lay = layout(lay) if isinstance(lay, (int, np.integer)) else lay
    if mesh.degenerate.any():
        mesh.check_tet(int(np.flatnonzero(mesh.degenerate)[0]))
    return PenaltyBlocks(_blocks(mesh, lay, np.arange(mesh.n_tets)),
                         _check_weights(weights, mesh.n_tets))


def energy(field: SplineField, blocks: PenaltyBlocks) -> float:
    """Roughness ``sum_T w_T c_T^T P_T c_T`` of a spline field."""
    if field.coeffs.shape != blocks.blocks.shape[:2]:
        raise ValueError("field and penalty blocks do not match")
    return blocks.quad(field.coeffs)
