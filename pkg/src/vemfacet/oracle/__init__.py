"""Fine-scale finite element reconstruction of virtual functions."""

from .core import (
    GramMatrix,
    SubmeshField,
    accuracy_matrix,
    clear_cache,
    geometry_key,
    gram_matrix,
    l2_distance,
    reconstruct,
    workspace,
)
from .solvers import OracleError

__all__ = [
    "GramMatrix",
    "OracleError",
    "SubmeshField",
    "accuracy_matrix",
    "clear_cache",
    "geometry_key",
    "gram_matrix",
    "l2_distance",
    "reconstruct",
    "workspace",
]
