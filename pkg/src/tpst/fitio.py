"""Saving and loading fitted splines: a JSON header plus a CSV of coefficients.

The coefficient file holds one row per tet (``tet, c_0, ..., c_{dim-1}``) in the
lexicographic Bernstein order, so reading it row by row gives the coefficient
vector in tet-block order. Floats are written with ``repr`` and round-trip
exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bernstein import SplineField, basis_dim, degree_of_dim, layout
from .mesh import TetMesh

__all__ = ["FORMAT", "coef_path_for", "save_field", "load_header", "load_field",
           "coefficients_csv", "file_sha256"]

FORMAT = "tpst-fit/1"


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def coef_path_for(json_path) -> Path:
    p = Path(json_path)
    return p.with_name(p.stem + ".coef.csv")


def coefficients_csv(coeffs: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tet"] + [f"c{i}" for i in range(coeffs.shape[1])])
    for t, row in enumerate(coeffs):
        w.writerow([t] + [repr(float(v)) for v in row])
    return buf.getvalue()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def save_field(field: SplineField, path, smoothness: int, extra: dict | None = None) -> dict:
    """Write ``path`` (JSON header) and its sibling ``*.coef.csv``; return the header."""
    path = Path(path)
    cpath = coef_path_for(path)
    text = coefficients_csv(field.coeffs)
    cpath.write_text(text)
    header = {
        "format": FORMAT,
        "degree": field.degree,
        "smoothness": int(smoothness),
        "n_tets": field.mesh.n_tets,
        "block_size": field.layout.dim,
        "mesh_checksum": field.mesh.checksum,
        "coefficients": cpath.name,
        "coefficients_sha256": hashlib.sha256(text.encode()).hexdigest(),
    }
    header.update(extra or {})
    path.write_text(json.dumps(_clean(header), indent=2) + "\n")
    return header


def load_header(path) -> dict:
    try:
        header = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not a valid JSON fit file ({exc.msg})") from exc
    if header.get("format") != FORMAT:
        raise ValueError(f"{path}: unsupported fit format {header.get('format')!r}")
    return header


def load_field(path, mesh: TetMesh, check_mesh: bool = True) -> tuple[SplineField, dict]:
    """Read a saved fit onto ``mesh`` (verified against the stored checksum)."""
    path = Path(path)
    header = load_header(path)
    if check_mesh and header["mesh_checksum"] != mesh.checksum:
        raise ValueError("mesh checksum does not match the one recorded in the fit file")
    cpath = path.with_name(header["coefficients"])
    text = cpath.read_text()
    if hashlib.sha256(text.encode()).hexdigest() != header["coefficients_sha256"]:
        raise ValueError(f"{cpath}: coefficient file checksum mismatch")
    rows = list(csv.reader(io.StringIO(text)))[1:]
    coeffs = np.array([[float(v) for v in r[1:]] for r in rows], dtype=float)
    d = header["degree"]
    if coeffs.shape != (header["n_tets"], basis_dim(d)) or degree_of_dim(coeffs.shape[1]) != d:
        raise ValueError(f"{cpath}: expected {header['n_tets']} rows of {basis_dim(d)} coefficients")
    return SplineField(mesh, layout(d), coeffs), header
