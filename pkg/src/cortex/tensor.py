"""Dense row-major tensors and the elementary kernels the layers are built on.

A :class:`Tensor` wraps a C-contiguous numpy buffer that is frozen once the
tensor is published. All functions here are pure.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError

__all__ = [
    "Tensor",
    "SINGLE",
    "DOUBLE",
    "validate_shape",
    "zeros",
    "identity",
    "matmul",
    "map_elementwise",
    "reshape",
]

SINGLE = np.dtype(np.float32)
DOUBLE = np.dtype(np.float64)
_DTYPES = {"single": SINGLE, "double": DOUBLE, "float32": SINGLE, "float64": DOUBLE}
MAX_RANK = 4


def _resolve_dtype(dtype) -> np.dtype:
    if isinstance(dtype, str):
        try:
            return _DTYPES[dtype]
        except KeyError:
            raise ValueError(f"unsupported dtype {dtype!r}") from None
    dt = np.dtype(dtype)
    if dt not in (SINGLE, DOUBLE):
        raise ValueError(f"unsupported dtype {dt}")
    return dt


def validate_shape(shape: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in shape)
    if not 1 <= len(dims) <= MAX_RANK:
        raise ShapeError(f"rank must be between 1 and {MAX_RANK}, got {len(dims)}")
    if any(d < 1 for d in dims):
        raise ShapeError(f"every extent must be >= 1, got {list(dims)}")
    return dims


class Tensor:
    """Immutable N-dimensional array of single or double precision reals."""

    __slots__ = ("_array",)

    def __init__(self, data, dtype=None):
        if isinstance(data, Tensor):
            data = data._array
        dt = _resolve_dtype(dtype) if dtype is not None else None
        if dt is None:
            src = np.asarray(data)
            dt = src.dtype if src.dtype in (SINGLE, DOUBLE) else SINGLE
        arr = np.array(data, dtype=dt, order="C", copy=True)
        validate_shape(arr.shape)
        arr.flags.writeable = False
        self._array = arr

    @classmethod
    def wrap(cls, array: np.ndarray) -> "Tensor":
        """Adopt ``array`` without copying when it is already C-contiguous.

        The caller gives up the right to mutate ``array`` afterwards.
        """
        if array.dtype not in (SINGLE, DOUBLE):
            array = array.astype(SINGLE)
        array = np.ascontiguousarray(array)
        validate_shape(array.shape)
        array.flags.writeable = False
        t = cls.__new__(cls)
        t._array = array
        return t

    @property
    def array(self) -> np.ndarray:
        return self._array

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the elements."""
        return self._array.reshape(-1)

    @property
    def shape(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def dtype(self) -> np.dtype:
        return self._array.dtype

    @property
    def size(self) -> int:
        return self._array.size

    @property
    def ndim(self) -> int:
        return self._array.ndim

    def numpy(self) -> np.ndarray:
        return self._array.copy()

    def tolist(self):
        return self._array.tolist()

    def astype(self, dtype) -> "Tensor":
        return Tensor(self._array, dtype=dtype)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._array
        return self._array.astype(dtype)

    def __len__(self):
        return self._array.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.dtype == other.dtype
            and self._array.tobytes() == other._array.tobytes()
        )

    __hash__ = None

    def __repr__(self):
        return f"Tensor(shape={list(self.shape)}, dtype={self.dtype.name})"


def zeros(shape: Sequence[int], dtype="single") -> Tensor:
    return Tensor.wrap(np.zeros(validate_shape(shape), dtype=_resolve_dtype(dtype)))


def identity(n: int, dtype="single") -> Tensor:
    return Tensor.wrap(np.eye(validate_shape([n])[0], dtype=_resolve_dtype(dtype)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    dt = np.result_type(a.dtype, b.dtype)
    return Tensor.wrap(np.matmul(a.array.astype(dt, copy=False), b.array.astype(dt, copy=False)))


def map_elementwise(t: Tensor, f: Callable[[float], float]) -> Tensor:
    """Apply scalar function ``f`` to every element; numpy ufuncs are applied in bulk."""
    src = t.array
    if isinstance(f, np.ufunc):
        out = f(src)
    else:
        flat = src.reshape(-1)
        out = np.fromiter((f(v) for v in flat), dtype=src.dtype, count=flat.size)
    return Tensor.wrap(np.asarray(out, dtype=src.dtype).reshape(src.shape))


def reshape(t: Tensor, new_shape: Sequence[int]) -> Tensor:
    dims = validate_shape(new_shape)
    if int(np.prod(dims)) != t.size:
        raise ShapeError(f"cannot reshape {list(t.shape)} ({t.size} elements) to {list(dims)}")
    return Tensor.wrap(t.array.reshape(dims))
