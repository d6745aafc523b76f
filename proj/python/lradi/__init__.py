"""Inexact low-rank ADI for sparse generalized Sylvester equations."""

from ._lradi import *  # noqa: F401,F403
from ._lradi import SparseMatrix

__all__ = [name for name in dir() if not name.startswith("_")]


def from_scipy(matrix):
    """Convert a scipy sparse matrix to a real SparseMatrix."""
    csr = matrix.tocsr()
    csr.sort_indices()
    csr.sum_duplicates()
    return SparseMatrix(csr.shape[0], csr.shape[1], csr.indptr.tolist(), csr.indices.tolist(),
                        csr.data.astype(float).tolist())
