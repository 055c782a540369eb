"""A from-scratch convolutional network engine for four-class brain MRI classification."""

__version__ = "0.1.0"

from .tensor import Tensor, identity, map_elementwise, matmul, reshape, zeros  # noqa: E402

__all__ = ["Tensor", "identity", "map_elementwise", "matmul", "reshape", "zeros", "__version__"]
