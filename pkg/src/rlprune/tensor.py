"""Dense tensor wrapper: float32 values up to rank 4, optional gradient."""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError


def as_f32(values) -> np.ndarray:
    a = np.asarray(values, dtype=np.float32)
    if a.ndim > 4:
        raise ShapeError(f"tensor rank {a.ndim} > 4")
    return a


@dataclass
class Tensor:
    """Row-major float32 array with an optional same-shape gradient buffer."""

    data: np.ndarray
    grad: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.data = as_f32(self.data)
        if self.grad is not None:
            self.grad = as_f32(self.grad)
            if self.grad.shape != self.data.shape:
                raise ShapeError("grad shape differs from data shape")
        if not np.isfinite(self.data).all():
            raise NumericError("non-finite values in tensor")

    @property
    def shape(self):
        return tuple(self.data.shape)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])


def check_finite(a: np.ndarray, where: str):
    if not np.isfinite(a).all():
        raise NumericError(f"non-finite output at {where}")
    return a
