"""Tensor and matrix butterfly factorizations of oscillatory integral operators."""

from .id_compress import ProxyStrategy, column_id, hybrid_id, row_id, tucker_id
from .kernels import KERNEL_NAMES, dense_contract, dense_oracle, make_kernel
from .matrix_butterfly import MatrixButterfly, mbf_apply, mbf_construct
from .tensor_butterfly import (
    TensorButterfly,
    tbf_construct,
    tbf_contract,
    tbf_error_estimate,
    tbf_memory,
)

__all__ = [
    "KERNEL_NAMES",
    "MatrixButterfly",
    "ProxyStrategy",
    "TensorButterfly",
    "column_id",
    "dense_contract",
    "dense_oracle",
    "hybrid_id",
    "make_kernel",
    "mbf_apply",
    "mbf_construct",
    "row_id",
    "tbf_construct",
    "tbf_contract",
    "tbf_error_estimate",
    "tbf_memory",
    "tucker_id",
]

__version__ = "0.1.0"
