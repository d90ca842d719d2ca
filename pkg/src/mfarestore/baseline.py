"""Comparison and post-processing filters: Wiener, sharpening, Sobel."""

from __future__ import annotations

import numpy as np

from .convolve import BoundaryPolicy, Kernel, correlate_array, convolve_array
from .errors import DomainError
from .image import ImageGrid, as_array

# Printed values are used verbatim; the kernel sums to 0.982, not 1.
SHARPEN_KERNEL = Kernel(np.array([
    [-0.167, -0.67, -0.167],
    [-0.67, 4.33, -0.67],
    [-0.167, -0.67, -0.167],
]))

SOBEL_X = Kernel(np.array([
    [-1.0, 0.0, 1.0],
    [-2.0, 0.0, 2.0],
    [-1.0, 0.0, 1.0],
]))
SOBEL_Y = Kernel(SOBEL_X.weights.T)


def sharpen(img, passes: int = 1) -> ImageGrid:
    """Convolve ``passes`` times with the 3x3 sharpening kernel (reflect borders)."""
    if passes < 1:
        raise DomainError(f"passes must be >= 1, got {passes}")
    out = as_array(img)
    for _ in range(passes):
        out = convolve_array(out, SHARPEN_KERNEL, BoundaryPolicy.REFLECT)
    return ImageGrid(out)


def sharpen_noise_gain() -> float:
    """Standard-deviation gain of one pass on white noise: the kernel's L2 norm."""
    return float(np.sqrt(np.sum(SHARPEN_KERNEL.weights ** 2)))


def flat_variance_ratio(img, reference, region, passes):
    """Flat-region variance of ``sharpen^passes(img)`` over that of ``reference``."""
    r0, c0, h, w = region
    sl = (slice(r0, r0 + h), slice(c0, c0 + w))
    base = float(np.var(as_array(reference)[sl]))
    x = as_array(img) if passes == 0 else sharpen(img, passes).data
    return float(np.var(x[sl])) / base


def sharpen_headroom(img, reference, region, factor, max_passes=10):
    """Number of sharpening passes before flat-region variance growth exceeds ``factor``.

    Growth is measured against the variance of ``reference`` (the acquired
    image) over the same region.
    """
    n = 0
    for k in range(1, max_passes + 1):
        if flat_variance_ratio(img, reference, region, k) > factor:
            break
        n = k
    return n


def sobel(img) -> ImageGrid:
    """Sobel gradient magnitude ``sqrt(Gx^2 + Gy^2)`` with reflect borders."""
    f = as_array(img)
    if f.shape[0] < 3 or f.shape[1] < 3:
        raise DomainError(f"Sobel needs an image of at least 3x3, got {f.shape}")
    gx = correlate_array(f, SOBEL_X, BoundaryPolicy.REFLECT)
    gy = correlate_array(f, SOBEL_Y, BoundaryPolicy.REFLECT)
    return ImageGrid(np.hypot(gx, gy))


def _next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def _transfer(kernel: Kernel, shape) -> np.ndarray:
    """DFT of the kernel placed with its center at the origin (wrap-around)."""
    r = kernel.radius
    buf = np.zeros(shape)
    buf[:2 * r + 1, :2 * r + 1] = kernel.weights
    buf = np.roll(buf, (-r, -r), axis=(0, 1))
    return np.fft.fft2(buf)


def wiener(g, psf, noise, signal_power="estimate") -> ImageGrid:
    """Frequency-domain Wiener deconvolution.

    ``F = conj(H) G / (|H|^2 + s2 / S)`` where ``s2`` is the noise variance
    (a NoiseModel or a bare float).  With ``signal_power="estimate"`` the
    per-frequency power ``S`` is ``|G|^2 / N`` floored at ``s2``; a float
    gives a constant ``S``.

    The image is reflect-padded by the PSF radius and then up to the next
    power of two before the FFT, and cropped back afterwards.
    """
    f = as_array(g)
    var = float(getattr(noise, "variance", noise))
    if var < 0:
        raise DomainError("noise variance must be >= 0")
    kernel = psf.kernel if hasattr(psf, "kernel") else Kernel(psf)
    h, w = f.shape
    r = kernel.radius
    ph = _next_pow2(h + 2 * r)
    pw = _next_pow2(w + 2 * r)
    top, left = (ph - h) // 2, (pw - w) // 2
    padded = np.pad(f, ((top, ph - h - top), (left, pw - w - left)), mode="reflect")

    G = np.fft.fft2(padded)
    H = _transfer(kernel, padded.shape)
    if isinstance(signal_power, str):
        if signal_power != "estimate":
            raise ValueError(f"signal_power must be 'estimate' or a number, got {signal_power!r}")
        S = np.maximum(np.abs(G) ** 2 / padded.size, var)
    else:
        S = float(signal_power)
        if not S > 0:
            raise DomainError("explicit signal power must be > 0")
    nsr = np.divide(var, S, out=np.zeros(np.shape(S)), where=np.asarray(S) > 0)
    denom = np.abs(H) ** 2 + nsr
    F = np.divide(np.conj(H) * G, denom, out=np.zeros_like(G), where=denom > 0)
    out = np.real(np.fft.ifft2(F))
    return ImageGrid(out[top:top + h, left:left + w])
