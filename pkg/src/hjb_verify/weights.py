"""
Growth weights of order |x|^p with closed-form derivatives.

Two shapes are used throughout:
    smooth:  scale * (1 + |x|^2)^(p/2)
    literal: scale * (1 + |x|^p)
The literal one has a second derivative at the origin only for p >= 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DerivativeUnavailable


def as_points(x: np.ndarray) -> np.ndarray:
    """Promote a single point (N,) or a batch (n, N) to shape (n, N)"""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr[None, :]
    return arr


@dataclass(frozen=True)
class PowerWeight:
    p: float
    scale: float = 1.0
    smooth: bool = True

    def __post_init__(self):
        if self.p <= 1.0:
            raise ValueError(f"weight exponent must exceed 1, got {self.p}")
        if self.scale <= 0.0:
            raise ValueError(f"weight scale must be positive, got {self.scale}")

    def value(self, x: np.ndarray) -> np.ndarray:
        x = as_points(x)
        r2 = np.sum(x * x, axis=-1)
        if self.smooth:
            return self.scale * (1.0 + r2) ** (self.p / 2.0)
        return self.scale * (1.0 + r2 ** (self.p / 2.0))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = as_points(x)
        r2 = np.sum(x * x, axis=-1)
        if self.smooth:
            factor = self.p * (1.0 + r2) ** (self.p / 2.0 - 1.0)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                factor = np.where(r2 > 0.0, self.p * r2 ** (self.p / 2.0 - 1.0), 0.0)
        return self.scale * factor[:, None] * x

    def hessian(self, x: np.ndarray) -> np.ndarray:
        x = as_points(x)
        n, dim = x.shape
        r2 = np.sum(x * x, axis=-1)
        outer = x[:, :, None] * x[:, None, :]
        eye = np.eye(dim)[None, :, :]
        p = self.p
        if self.smooth:
            base = 1.0 + r2
            a = p * base ** (p / 2.0 - 1.0)
            c = p * (p - 2.0) * base ** (p / 2.0 - 2.0)
            return self.scale * (a[:, None, None] * eye + c[:, None, None] * outer)
        if p < 2.0 and np.any(r2 == 0.0):
            raise DerivativeUnavailable("literal weight has no Hessian at the origin for p < 2")
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(r2 > 0.0, p * r2 ** (p / 2.0 - 1.0), 2.0 if p == 2.0 else 0.0)
            c = np.where(r2 > 0.0, p * (p - 2.0) * r2 ** (p / 2.0 - 2.0), 0.0)
        return self.scale * (a[:, None, None] * eye + c[:, None, None] * outer)

    def laplacian(self, x: np.ndarray) -> np.ndarray:
        return np.trace(self.hessian(x), axis1=1, axis2=2)
