"""Direct spatial-domain 2D convolution with an explicit boundary policy.

The image is padded by the kernel radius according to the boundary
policy and then correlated in "valid" mode by one of the kernels in
:mod:`mfarestore._kernels`.  Because padding is itself a linear map,
:func:`convolve2d_adjoint` can return the exact transpose of
:func:`convolve2d` for every policy, not only for zero padding.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .image import ImageGrid, as_array


class BoundaryPolicy(str, enum.Enum):
    REFLECT = "reflect"      # mirror about the edge pixel, edge not repeated
    REPLICATE = "replicate"  # repeat the edge pixel
    ZERO = "zero"


_NP_PAD_MODE = {
    BoundaryPolicy.REFLECT: "reflect",
    BoundaryPolicy.REPLICATE: "edge",
    BoundaryPolicy.ZERO: "constant",
}


@dataclass(frozen=True, eq=False)
class Kernel:
    """Square, odd-sided, center-indexed convolution kernel."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, copy=True)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2 != 1:
            raise ValueError(f"kernel must be square with odd side, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("kernel weights must be finite")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def radius(self) -> int:
        return self.weights.shape[0] // 2

    @property
    def side(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def delta(cls, radius: int = 1) -> "Kernel":
        w = np.zeros((2 * radius + 1, 2 * radius + 1))
        w[radius, radius] = 1.0
        return cls(w)

    def __eq__(self, other):
        if not isinstance(other, Kernel):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())


def _policy(boundary) -> BoundaryPolicy:
    return BoundaryPolicy(boundary)


def _kernel(k) -> Kernel:
    # Psf and anything else carrying a .kernel attribute is accepted
    k = getattr(k, "kernel", k)
    return k if isinstance(k, Kernel) else Kernel(k)


def flip(k) -> Kernel:
    """Rotate the kernel weights by 180 degrees."""
    k = _kernel(k)
    return Kernel(k.weights[::-1, ::-1])


def pad(arr: np.ndarray, radius: int, boundary=BoundaryPolicy.REFLECT) -> np.ndarray:
    """Extend ``arr`` by ``radius`` pixels on every side."""
    arr = np.asarray(arr, dtype=np.float64)
    if radius == 0:
        return arr.copy()
    return np.pad(arr, radius, mode=_NP_PAD_MODE[_policy(boundary)])


def _pad_index(n: int, radius: int, boundary: BoundaryPolicy) -> np.ndarray:
    if boundary is BoundaryPolicy.ZERO:
        return np.pad(np.arange(n), radius, mode="constant", constant_values=-1)
    return np.pad(np.arange(n), radius, mode=_NP_PAD_MODE[boundary])


def pad_adjoint(padded: np.ndarray, radius: int, shape, boundary=BoundaryPolicy.REFLECT) -> np.ndarray:
    """Transpose of :func:`pad`: fold padded pixels back onto their sources."""
    boundary = _policy(boundary)
    h, w = shape
    rows = _pad_index(h, radius, boundary)
    cols = _pad_index(w, radius, boundary)
    rkeep = rows >= 0
    ckeep = cols >= 0
    tmp = np.zeros((h, padded.shape[1]))
    np.add.at(tmp, rows[rkeep], padded[rkeep])
    out = np.zeros((h, w))
    np.add.at(out.T, cols[ckeep], tmp[:, ckeep].T)
    return out


def correlate_array(arr: np.ndarray, k, boundary=BoundaryPolicy.REFLECT) -> np.ndarray:
    k = _kernel(k)
    padded = pad(arr, k.radius, boundary)
    return _kernels.correlate_valid(padded, k.weights)


def convolve_array(arr: np.ndarray, k, boundary=BoundaryPolicy.REFLECT) -> np.ndarray:
    """Array-level convolution used by the iterative code paths."""
    return correlate_array(arr, flip(k), boundary)


def convolve_adjoint_array(arr: np.ndarray, k, boundary=BoundaryPolicy.REFLECT) -> np.ndarray:
    """Exact transpose of ``x -> convolve_array(x, k, boundary)`` applied to ``arr``."""
    k = _kernel(k)
    r = k.radius
    if r == 0:
        return pad_adjoint(arr * k.weights[0, 0], 0, arr.shape, boundary)
    zp = np.pad(np.asarray(arr, dtype=np.float64), 2 * r, mode="constant")
    full = _kernels.correlate_valid(zp, k.weights)
    return pad_adjoint(full, r, arr.shape, boundary)


def correlate_adjoint_array(arr: np.ndarray, k, boundary=BoundaryPolicy.REFLECT) -> np.ndarray:
    return convolve_adjoint_array(arr, flip(k), boundary)


def convolve2d(img, k, boundary=BoundaryPolicy.REFLECT) -> ImageGrid:
    """``(img * k)[i, j] = sum_{u,v} k[u, v] img[i - u, j - v]`` (offsets from center).

    The output has the same shape as ``img``; pixels outside the image are
    supplied by ``boundary``.
    """
    return ImageGrid(convolve_array(as_array(img), k, boundary))


def correlate2d(img, k, boundary=BoundaryPolicy.REFLECT) -> ImageGrid:
    """``out[i, j] = sum_{u,v} k[u, v] img[i + u, j + v]`` (offsets from center)."""
    return ImageGrid(correlate_array(as_array(img), k, boundary))
