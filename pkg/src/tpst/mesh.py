"""Tetrahedral partitions: storage, validation, geometry and point location.

A mesh is stored the usual way, as an ``(n_nodes, 3)`` array of coordinates
and an ``(n_tets, 4)`` array of node indices. Everything else (face registry,
inverse barycentric maps, volumes, the spatial hash used by :meth:`TetMesh.locate`)
is derived lazily and cached; the arrays themselves are never mutated.
"""

from __future__ import annotations

import hashlib
import io
import itertools
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from os import PathLike
from typing import Iterable, Sequence, TextIO

import numpy as np

__all__ = [
    "MeshError",
    "MeshFormatError",
    "DegenerateTetError",
    "TetMesh",
    "ValidationReport",
    "MeshQualityReport",
    "load_mesh",
    "read_table",
    "validate_partition",
    "tet_volume",
    "barycentric",
    "directional_coords",
    "locate",
    "shape_metrics",
    "generate_box_mesh",
    "BARY_TOL",
]

BARY_TOL = 1e-9

# local faces: face f is opposite local vertex f
_FACE_SLOTS = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
_EDGE_SLOTS = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])


class MeshError(ValueError):
    """Raised for structurally invalid meshes (bad indices, duplicates, empty domains)."""


class MeshFormatError(MeshError):
    """Raised when a node or element table cannot be parsed."""


class DegenerateTetError(MeshError):
    """Raised when a geometric query hits a tetrahedron with (numerically) zero volume."""


def _frozen(a: np.ndarray) -> np.ndarray:
    """Mark a cached array read-only so callers cannot corrupt the mesh through a view."""
    a.setflags(write=False)
    return a


class TetMesh:
    """Immutable tetrahedral mesh.

    Parameters
    ----------
    nodes : array_like, shape (n_nodes, 3)
        Node coordinates.
    tets : array_like of int, shape (n_tets, 4)
        Zero-based node indices of each tetrahedron. The local vertex order is
        kept as given; it defines the barycentric coordinate order of each tet.
    """

    def __init__(self, nodes, tets):
        nodes = np.array(nodes, dtype=float, ndmin=2).reshape(-1, 3)
        tets = np.array(tets, dtype=np.int64, ndmin=2).reshape(-1, 4)
        if not np.all(np.isfinite(nodes)):
            raise MeshError("node coordinates must be finite")
        if tets.size and (tets.min() < 0 or tets.max() >= len(nodes)):
            bad = np.flatnonzero((tets < 0).any(1) | (tets >= len(nodes)).any(1))[0]
            raise MeshError(f"tetrahedron {bad} references a node index out of range")
        srt = np.sort(tets, axis=1)
        if tets.size and (np.diff(srt, axis=1) == 0).any():
            bad = np.flatnonzero((np.diff(srt, axis=1) == 0).any(1))[0]
            raise MeshError(f"tetrahedron {bad} repeats a node index")
        if len(tets):
            _, first, counts = np.unique(srt, axis=0, return_index=True, return_counts=True)
            if (counts > 1).any():
                dup = np.sort(first[counts > 1])[0]
                raise MeshError(f"duplicate tetrahedron (first copy is tet {dup})")
        nodes.setflags(write=False)
        tets.setflags(write=False)
        self.nodes = nodes
        self.tets = tets

    def __repr__(self):
        return f"TetMesh(n_nodes={self.n_nodes}, n_tets={self.n_tets})"

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    # --- geometry -------------------------------------------------------------

    @cached_property
    def vertices(self) -> np.ndarray:
        """Tet vertex coordinates, shape (n_tets, 4, 3)."""
        return _frozen(self.nodes[self.tets])

    @cached_property
    def diameter(self) -> float:
        """Length of the bounding-box diagonal (1.0 for an empty mesh)."""
        if not self.n_nodes:
            return 1.0
        return float(np.linalg.norm(self.nodes.max(0) - self.nodes.min(0))) or 1.0

    @cached_property
    def vol_tol(self) -> float:
        return 1e-12 * self.diameter**3

    @cached_property
    def _det(self) -> np.ndarray:
        v = self.vertices
        return _frozen(np.linalg.det(v[:, 1:] - v[:, :1]) if self.n_tets else np.zeros(0))

    @cached_property
    def volumes(self) -> np.ndarray:
        """Unsigned tet volumes ``|det M| / 6``."""
        return _frozen(np.abs(self._det) / 6.0)

    @cached_property
    def degenerate(self) -> np.ndarray:
        """Boolean mask of tets with ``|det M| <= vol_tol``."""
        return _frozen(np.abs(self._det) <= self.vol_tol)

    @cached_property
    def bary_maps(self) -> np.ndarray:
        """Inverses of ``M = [[1,1,1,1],[x],[y],[z]]`` per tet, shape (n_tets, 4, 4).

        ``bary_maps[t] @ (1, x, y, z)`` gives barycentric coordinates of a point,
        ``bary_maps[t] @ (0, ux, uy, uz)`` the directional coordinates of a vector.
        Degenerate tets get NaN rows.
        """
        m = np.ones((self.n_tets, 4, 4))
        m[:, 1:, :] = np.transpose(self.vertices, (0, 2, 1))
        out = np.full_like(m, np.nan)
        ok = ~self.degenerate
        if ok.any():
            out[ok] = np.linalg.inv(m[ok])
        return _frozen(out)

    def check_tet(self, tet: int) -> None:
        if not 0 <= tet < self.n_tets:
            raise IndexError(f"tet {tet} out of range [0, {self.n_tets})")
        if self.degenerate[tet]:
            raise DegenerateTetError(f"tet {tet} is degenerate (volume {self.volumes[tet]:.3e})")

    # --- faces ----------------------------------------------------------------

    @cached_property
    def _face_table(self):
        n = self.n_tets
        tri = self.tets[:, _FACE_SLOTS].reshape(-1, 3)
        key = np.sort(tri, axis=1)
        owner = np.repeat(np.arange(n), 4)
        slot = np.tile(np.arange(4), n)
        if not len(key):
            empty = np.zeros((0, 3), dtype=np.int64)
            return empty, np.zeros(0, dtype=np.int64), owner, slot
        uniq, inverse = np.unique(key, axis=0, return_inverse=True)
        return _frozen(uniq), inverse.ravel(), owner, slot

    @cached_property
    def faces(self) -> np.ndarray:
        """Unique triangular faces as sorted node triples, shape (n_faces, 3)."""
        return self._face_table[0]

    @cached_property
    def face_incidence(self) -> list[list[tuple[int, int]]]:
        """For each face, the list of ``(tet, opposite local slot)`` pairs, by tet id."""
        uniq, inverse, owner, slot = self._face_table
        inc: list[list[tuple[int, int]]] = [[] for _ in range(len(uniq))]
        for f, t, s in zip(inverse.tolist(), owner.tolist(), slot.tolist()):
            inc[f].append((t, s))
        return inc

    @cached_property
    def interior_faces(self) -> np.ndarray:
        """Faces shared by exactly two tets: rows ``(tet_a, slot_a, tet_b, slot_b)``, tet_a < tet_b."""
        rows = [(*inc[0], *inc[1]) for inc in self.face_incidence if len(inc) == 2]
        return _frozen(np.array(rows, dtype=np.int64).reshape(-1, 4))

    @cached_property
    def interior_face_nodes(self) -> np.ndarray:
        keep = [i for i, inc in enumerate(self.face_incidence) if len(inc) == 2]
        return _frozen(self.faces[keep])

    @cached_property
    def boundary_faces(self) -> np.ndarray:
        """Faces owned by a single tet: rows ``(tet, opposite slot)``."""
        rows = [inc[0] for inc in self.face_incidence if len(inc) == 1]
        return _frozen(np.array(rows, dtype=np.int64).reshape(-1, 2))

    @cached_property
    def checksum(self) -> str:
        """SHA-256 over the canonical (float64 nodes, int64 zero-based tets) bytes."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.nodes, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.tets, dtype="<i8").tobytes())
        return h.hexdigest()

    # --- point location -------------------------------------------------------

    @cached_property
    def _hash(self):
        lo = self.nodes.min(0) if self.n_nodes else np.zeros(3)
        hi = self.nodes.max(0) if self.n_nodes else np.ones(3)
        span = np.maximum(hi - lo, 1e-12 * self.diameter)
        ncell = max(1, round(max(self.n_tets, 1) ** (1 / 3)))
        shape = np.full(3, ncell)
        size = span / shape
        v = self.vertices
        pad = 1e-9 * self.diameter
        cmin = np.clip(np.floor((v.min(1) - pad - lo) / size).astype(int), 0, shape - 1)
        cmax = np.clip(np.floor((v.max(1) + pad - lo) / size).astype(int), 0, shape - 1)
        cells, owners = [], []
        for t in range(self.n_tets):
            rng = [np.arange(cmin[t, a], cmax[t, a] + 1) for a in range(3)]
            ii, jj, kk = np.meshgrid(*rng, indexing="ij")
            flat = np.ravel_multi_index((ii.ravel(), jj.ravel(), kk.ravel()), tuple(shape))
            cells.append(flat)
            owners.append(np.full(flat.size, t))
        cells = np.concatenate(cells) if cells else np.zeros(0, dtype=int)
        owners = np.concatenate(owners) if owners else np.zeros(0, dtype=int)
        order = np.lexsort((owners, cells))
        cells, owners = cells[order], owners[order]
        ptr = np.searchsorted(cells, np.arange(int(np.prod(shape)) + 1))
        return lo, size, shape, ptr, owners

    def _candidates(self, points: np.ndarray):
        """Flattened ``(point index, tet id)`` candidate pairs, tet ids ascending per point."""
        lo, size, shape, ptr, owners = self._hash
        c = np.floor((points - lo) / size).astype(int)
        inside = np.all((c >= -1) & (c <= shape), axis=1)
        c = np.clip(c, 0, shape - 1)
        flat = np.ravel_multi_index(tuple(c.T), tuple(shape))
        start, stop = ptr[flat], ptr[flat + 1]
        counts = np.where(inside, stop - start, 0)
        pidx = np.repeat(np.arange(len(points)), counts)
        offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        tidx = owners[np.repeat(start, counts) + offs]
        return pidx, tidx

    def locate(self, points, tol: float = BARY_TOL):
        """Locate many points at once.

        Returns
        -------
        tet : ndarray of int, shape (n,)
            Containing tet (lowest id on ties) or -1 for points outside the mesh.
        bary : ndarray, shape (n, 4)
            Barycentric coordinates relative to ``tet`` (NaN where ``tet == -1``).
        """
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        tet = np.full(len(pts), -1, dtype=np.int64)
        bary = np.full((len(pts), 4), np.nan)
        if not self.n_tets or not len(pts):
            return tet, bary
        pidx, tidx = self._candidates(pts)
        hom = np.concatenate([np.ones((len(pidx), 1)), pts[pidx]], axis=1)
        b = np.einsum("kij,kj->ki", self.bary_maps[tidx], hom)
        ok = np.all(b >= -tol, axis=1)
        pidx, tidx, b = pidx[ok], tidx[ok], b[ok]
        uniq, first = np.unique(pidx, return_index=True)
        tet[uniq] = tidx[first]
        bary[uniq] = b[first]
        return tet, bary


@dataclass
class ValidationReport:
    """Findings of :func:`validate_partition`; ``valid`` is true when every list is empty."""

    n_tets: int
    degenerate: list[int] = field(default_factory=list)
    overshared_faces: list[tuple[int, int, int]] = field(default_factory=list)
    improper: list[tuple[int, int, str]] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not (self.degenerate or self.overshared_faces or self.improper)

    @property
    def issues(self) -> list[str]:
        """One readable line per finding."""
        return ([f"tet {t} is degenerate" for t in self.degenerate]
                + [f"face {tuple(f)} is shared by more than two tets"
                   for f in self.overshared_faces]
                + [f"tets {a} and {b}: {r}" for a, b, r in self.improper])

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "n_tets": self.n_tets,
            "degenerate": list(self.degenerate),
            "overshared_faces": [list(f) for f in self.overshared_faces],
            "improper": [{"tets": [a, b], "reason": r} for a, b, r in self.improper],
        }


@dataclass
class MeshQualityReport:
    """Per-tet size and shape measures plus the global quasi-uniformity constant."""

    longest_edge: np.ndarray
    inradius: np.ndarray
    shape: np.ndarray
    volume: np.ndarray
    size: float
    beta: float

    def to_dict(self) -> dict:
        return {
            "n_tets": int(len(self.volume)),
            "size": self.size,
            "beta": self.beta,
            "shape_min": float(self.shape.min()) if len(self.shape) else None,
            "shape_max": float(self.shape.max()) if len(self.shape) else None,
            "volume_total": float(self.volume.sum()),
            "volume_min": float(self.volume.min()) if len(self.volume) else None,
        }


# --- I/O ------------------------------------------------------------------------

_SPLIT = re.compile(r"[,\s]+")


def read_table(source, ncols: int, kind: type = float) -> np.ndarray:
    """Parse a comma/whitespace separated table with ``#`` comments.

    ``source`` may be a path, an open text stream, or a string holding the table.
    """
    if isinstance(source, (str, PathLike)) and "\n" not in str(source):
        with open(source) as fh:
            text = fh.read()
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
    rows = []
    for lineno, line in enumerate(io.StringIO(text), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = [f for f in _SPLIT.split(line) if f]
        if len(fields) != ncols:
            raise MeshFormatError(f"line {lineno}: expected {ncols} fields, got {len(fields)}")
        try:
            if kind is int:
                vals = []
                for f in fields:
                    x = float(f)
                    if x != int(x):
                        raise ValueError(f)
                    vals.append(int(x))
            else:
                vals = [float(f) for f in fields]
        except ValueError as exc:
            raise MeshFormatError(f"line {lineno}: cannot parse {line!r}") from exc
        rows.append(vals)
    dtype = np.int64 if kind is int else float
    return np.array(rows, dtype=dtype).reshape(-1, ncols)


def load_mesh(nodes_source: str | PathLike | TextIO, elems_source: str | PathLike | TextIO,
              index_base: int = 1) -> TetMesh:
    """Read a mesh stored as a node table (x, y, z) and an element table (4 indices).

    Examples
    --------
    >>> nodes = "0 0 0\\n1 0 0\\n0 1 0\\n0 0 1\\n-1 0 0\\n"
    >>> mesh = load_mesh(nodes, "2 1 3 4\\n5 1 4 3\\n", index_base=1)
    >>> len(mesh.interior_faces)
    1
    """
    if index_base not in (0, 1):
        raise ValueError("index_base must be 0 or 1")
    nodes = read_table(nodes_source, 3, float)
    elems = read_table(elems_source, 4, int) - index_base
    if elems.size and (elems.min() < 0 or elems.max() >= len(nodes)):
        row = int(np.flatnonzero((elems < 0).any(1) | (elems >= len(nodes)).any(1))[0])
        raise MeshError(f"element row {row + 1} references a node outside 1..{len(nodes)}"
                        if index_base else
                        f"element row {row + 1} references a node outside 0..{len(nodes) - 1}")
    return TetMesh(nodes, elems)


def write_mesh(mesh: TetMesh, nodes_path, elems_path, index_base: int = 1) -> None:
    np.savetxt(nodes_path, mesh.nodes, fmt="%.17g")
    np.savetxt(elems_path, mesh.tets + index_base, fmt="%d")


# --- queries --------------------------------------------------------------------

def tet_volume(mesh: TetMesh, tet: int) -> float:
    mesh.check_tet(tet)
    return float(mesh.volumes[tet])


def barycentric(mesh: TetMesh, tet: int, p: Sequence[float]) -> np.ndarray:
    """Barycentric coordinates of ``p`` relative to tet ``tet`` (may be negative outside)."""
    mesh.check_tet(tet)
    return mesh.bary_maps[tet] @ np.r_[1.0, np.asarray(p, dtype=float)]


def directional_coords(mesh: TetMesh, tet: int, u: Sequence[float]) -> np.ndarray:
    """Directional (barycentric) coordinates of the vector ``u``; they sum to zero."""
    mesh.check_tet(tet)
    return mesh.bary_maps[tet] @ np.r_[0.0, np.asarray(u, dtype=float)]


def locate(mesh: TetMesh, p: Sequence[float], tol: float = BARY_TOL):
    """Return ``(tet, bary)`` for the lowest-id tet containing ``p``, or None."""
    tet, bary = mesh.locate(np.asarray(p, dtype=float)[None, :], tol)
    if tet[0] < 0:
        return None
    return int(tet[0]), bary[0]


def _triangle_area(a, b, c):
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=-1)


def shape_metrics(mesh: TetMesh) -> MeshQualityReport:
    if mesh.degenerate.any():
        raise DegenerateTetError(f"tet {int(np.flatnonzero(mesh.degenerate)[0])} is degenerate")
    v = mesh.vertices
    edges = v[:, _EDGE_SLOTS[:, 1]] - v[:, _EDGE_SLOTS[:, 0]]
    longest = np.linalg.norm(edges, axis=2).max(1) if len(v) else np.zeros(0)
    fv = v[:, _FACE_SLOTS]
    area = _triangle_area(fv[:, :, 0], fv[:, :, 1], fv[:, :, 2]).sum(1)
    vol = mesh.volumes
    rho = 3.0 * vol / area if len(v) else np.zeros(0)
    size = float(longest.max()) if len(v) else 0.0
    beta = size / float(rho.min()) if len(v) else 0.0
    return MeshQualityReport(longest, rho, longest / rho if len(v) else rho, vol.copy(), size, beta)


# --- validation -----------------------------------------------------------------

def _orient(a, b, c, d):
    """Signed 6x volume of (a, b, c, d), vectorised over leading axes."""
    return np.einsum("...i,...i->...", np.cross(b - a, c - a), d - a)


def _bbox_pairs(mesh: TetMesh, chunk: int = 2048):
    v = mesh.vertices
    pad = 1e-9 * mesh.diameter
    lo, hi = v.min(1) - pad, v.max(1) + pad
    out = []
    for s in range(0, mesh.n_tets, chunk):
        a = np.arange(s, min(s + chunk, mesh.n_tets))
        hit = np.all((lo[a, None, :] <= hi[None, :, :]) & (lo[None, :, :] <= hi[a, None, :]), axis=2)
        i, j = np.nonzero(hit)
        i = a[i]
        keep = i < j
        out.append(np.stack([i[keep], j[keep]], 1))
    return np.concatenate(out) if out else np.zeros((0, 2), dtype=int)


def validate_partition(mesh: TetMesh, tol: float = BARY_TOL) -> ValidationReport:
    """Check that the tets form a proper partition.

    Detected problems: degenerate tets, faces shared by more than two tets,
    face-adjacent tets lying on the same side of their common face, mesh nodes
    lying inside or on the boundary of a tet they are not a vertex of, and edges
    of one tet piercing a face of another.
    """
    rep = ValidationReport(mesh.n_tets)
    if not mesh.n_tets:
        return rep
    rep.degenerate = np.flatnonzero(mesh.degenerate).tolist()
    for f, inc in enumerate(mesh.face_incidence):
        if len(inc) > 2:
            rep.overshared_faces.append(tuple(int(x) for x in mesh.faces[f]))
    bad = set(rep.degenerate)
    improper: dict[tuple[int, int], str] = {}

    for ta, sa, tb, sb in mesh.interior_faces.tolist():
        if ta in bad or tb in bad:
            continue
        tri = mesh.nodes[mesh.tets[ta, _FACE_SLOTS[sa]]]
        oa = _orient(*tri, mesh.nodes[mesh.tets[ta, sa]])
        ob = _orient(*tri, mesh.nodes[mesh.tets[tb, sb]])
        if oa * ob >= 0:
            improper[(ta, tb)] = "tets overlap across their shared face"

    # nodes inside / on another tet
    good = np.flatnonzero(~mesh.degenerate)
    used = np.unique(mesh.tets)
    pts = mesh.nodes[used]
    pidx, tidx = mesh._candidates(pts)
    keep = np.isin(tidx, good) & ~np.any(mesh.tets[tidx] == used[pidx][:, None], axis=1)
    pidx, tidx = pidx[keep], tidx[keep]
    hom = np.concatenate([np.ones((len(pidx), 1)), pts[pidx]], axis=1)
    b = np.einsum("kij,kj->ki", mesh.bary_maps[tidx], hom)
    hit = np.all(b >= -tol, axis=1)
    node_owner: dict[int, list[int]] = {}
    for t, s in enumerate(mesh.tets.tolist()):
        for n in s:
            node_owner.setdefault(n, []).append(t)
    for p, t, bmin in zip(pidx[hit].tolist(), tidx[hit].tolist(), b[hit].min(1).tolist()):
        node = int(used[p])
        where = "inside" if bmin > tol else "on the boundary of"
        for owner in node_owner[node][:1]:
            key = (min(owner, t), max(owner, t))
            improper.setdefault(key, f"node {node} lies {where} tet {t} without being its vertex")

    # edge / face piercing between bbox-overlapping tets sharing no face
    pairs = _bbox_pairs(mesh)
    if len(pairs):
        pairs = pairs[~np.isin(pairs, list(bad)).any(1)] if bad else pairs
    for a, c in ((0, 1), (1, 0)):
        if not len(pairs):
            break
        ta, tb = pairs[:, a], pairs[:, c]
        e = mesh.tets[ta][:, _EDGE_SLOTS]            # (P, 6, 2)
        f = mesh.tets[tb][:, _FACE_SLOTS]            # (P, 4, 3)
        e_ = np.repeat(e[:, :, None, :], 4, axis=2)  # (P, 6, 4, 2)
        f_ = np.repeat(f[:, None, :, :], 6, axis=1)  # (P, 6, 4, 3)
        shares = (e_[..., :, None] == f_[..., None, :]).any((-1, -2))
        p0, p1 = mesh.nodes[e_[..., 0]], mesh.nodes[e_[..., 1]]
        q0, q1, q2 = (mesh.nodes[f_[..., k]] for k in range(3))
        s0, s1 = _orient(q0, q1, q2, p0), _orient(q0, q1, q2, p1)
        scale = mesh.vol_tol
        crosses = (s0 * s1 < 0) & (np.abs(s0) > scale) & (np.abs(s1) > scale)
        w0, w1, w2 = _orient(p0, p1, q1, q2), _orient(p0, p1, q2, q0), _orient(p0, p1, q0, q1)
        same = ((w0 >= -scale) & (w1 >= -scale) & (w2 >= -scale)) | (
            (w0 <= scale) & (w1 <= scale) & (w2 <= scale))
        pierce = crosses & same & ~shares
        for k in np.flatnonzero(pierce.any((1, 2))):
            key = (int(min(ta[k], tb[k])), int(max(ta[k], tb[k])))
            improper.setdefault(key, f"an edge of tet {ta[k]} pierces a face of tet {tb[k]}")

    rep.improper = [(a, b, r) for (a, b), r in sorted(improper.items())]
    return rep


# --- structured generator -------------------------------------------------------

_KUHN = [np.array(p) for p in itertools.permutations(range(3))]


def generate_box_mesh(bounds, resolution, holes: Iterable = ()) -> TetMesh:
    """Kuhn-subdivided grid mesh of a box, optionally with box-shaped holes.

    Parameters
    ----------
    bounds : ((x0, y0, z0), (x1, y1, z1))
        Opposite corners of the box.
    resolution : (nx, ny, nz)
        Number of grid cells per axis; each cell becomes 6 tetrahedra.
    holes : iterable of ((x0, y0, z0), (x1, y1, z1))
        Boxes removed from the domain. Their faces must lie on grid planes.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in bounds)
    res = np.asarray(resolution, dtype=int)
    if res.shape != (3,) or (res < 1).any():
        raise ValueError("resolution needs three positive integers")
    if (hi <= lo).any():
        raise ValueError("bounds must satisfy lo < hi on every axis")
    h = (hi - lo) / res
    keep = np.ones(tuple(res), dtype=bool)
    for hole in holes:
        hlo, hhi = (np.asarray(b, dtype=float) for b in hole)
        ilo, ihi = (hlo - lo) / h, (hhi - lo) / h
        for x in np.r_[ilo, ihi]:
            if abs(x - round(x)) > 1e-9:
                raise MeshError(f"hole {hole} is not aligned with the grid")
        ilo = np.clip(np.round(ilo).astype(int), 0, res)
        ihi = np.clip(np.round(ihi).astype(int), 0, res)
        keep[ilo[0]:ihi[0], ilo[1]:ihi[1], ilo[2]:ihi[2]] = False
    cells = np.argwhere(keep)
    if not len(cells):
        raise MeshError("every grid cell falls inside a hole: empty domain")
    dims = res + 1

    def node_id(ijk):
        return np.ravel_multi_index(tuple(np.moveaxis(ijk, -1, 0)), tuple(dims))

    tets = []
    for perm in _KUHN:
        steps = np.eye(3, dtype=int)[perm]
        corners = [np.zeros(3, dtype=int)]
        for s in steps:
            corners.append(corners[-1] + s)
        tets.append(np.stack([node_id(cells + c) for c in corners], axis=1))
    tets = np.stack(tets, axis=1).reshape(-1, 4)
    used, inverse = np.unique(tets, return_inverse=True)
    grid = np.stack(np.unravel_index(used, tuple(dims)), axis=1)
    nodes = lo + grid * h
    return TetMesh(nodes, inverse.reshape(-1, 4))
