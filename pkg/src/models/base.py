"""Base model configuration and array coercion shared by all domain types."""

from typing import Any, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict


class DomainModel(BaseModel):
    """Immutable pydantic model that may carry numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


def as_array(
    value: Any,
    shape: Optional[Tuple[Optional[int], ...]] = None,
    dtype: Any = np.float64,
    name: str = "array",
    finite: bool = True,
) -> np.ndarray:
    """Copy `value` into a read-only array, checking shape and finiteness.

    A `None` entry in `shape` matches any extent along that axis.
    """
    arr = np.array(value, dtype=dtype)
    if shape is not None:
        if arr.ndim != len(shape) or any(
            want is not None and got != want for got, want in zip(arr.shape, shape)
        ):
            raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if finite and arr.dtype.kind == "f" and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must contain only finite values")
    arr.setflags(write=False)
    return arr
