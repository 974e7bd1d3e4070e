"""Penalized trivariate spline smoothing over tetrahedral partitions.

Typical use::

    from tpst import generate_box_mesh, Dataset, FitConfig, fit

    mesh = generate_box_mesh(((0, 0, 0), (1, 1, 1)), (3, 3, 3))
    data = Dataset.locate(mesh, points, values)
    result = fit(data, mesh, FitConfig(degree=3, smoothness=1))
    result.field(new_points)
"""

from .adaptive import AdaptiveConfig, adaptive_weights, fit_atpst, total_variation
from .bernstein import (BasisLayout, SplineField, basis_dim, bform_of_polynomial, diff_matrix,
                        diff_matrix_first, domain_points, eval_basis, eval_bform, eval_spline,
                        layout, lex_index, mass_matrix)
from .mesh import (DegenerateTetError, MeshError, MeshFormatError, TetMesh, barycentric,
                   generate_box_mesh, load_mesh, shape_metrics, validate_partition, write_mesh)
from .penalty import PenaltyBlocks, assemble_P, energy, penalty_block
from .smoothness import ConstraintMatrix, assemble_H, face_correspondence
from .solver import (Dataset, FitConfig, FitResult, NumericalError, SingularSystemError,
                     SplineSpace, block_cv, design_matrix, fit_tpst, gcv_score, nullspace_basis,
                     predict, solve_for_lambda)

__version__ = "0.1.0"


def fit(dataset: Dataset, mesh: TetMesh, config: FitConfig | None = None,
        space: SplineSpace | None = None) -> FitResult:
    """TPST fit, or ATPST when ``config.adaptive`` is set."""
    config = config or FitConfig()
    if config.adaptive is not None:
        return fit_atpst(dataset, mesh, config, space=space)
    return fit_tpst(dataset, mesh, config, space=space)


__all__ = [
    "AdaptiveConfig", "BasisLayout", "ConstraintMatrix", "Dataset", "DegenerateTetError",
    "FitConfig", "FitResult", "MeshError", "MeshFormatError", "NumericalError", "PenaltyBlocks",
    "SingularSystemError", "SplineField", "SplineSpace", "TetMesh", "adaptive_weights",
    "assemble_H", "assemble_P", "barycentric", "basis_dim", "bform_of_polynomial", "block_cv",
    "design_matrix", "diff_matrix", "diff_matrix_first", "domain_points", "energy", "eval_basis",
    "eval_bform", "eval_spline", "face_correspondence", "fit", "fit_atpst", "fit_tpst",
    "gcv_score", "generate_box_mesh", "layout", "lex_index", "load_mesh", "mass_matrix",
    "nullspace_basis", "penalty_block", "predict", "shape_metrics", "solve_for_lambda",
    "total_variation", "validate_partition", "write_mesh", "__version__",
]
