"""Gaussian point spread functions: construction, fitting and validation.

The measurement pipeline is: fit an isotropic Gaussian to an imaged
point source, check the fitted PSF against an imaged line source, and
regress the fitted widths against source distance so that a PSF can be
predicted for any plane of interest.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .convolve import BoundaryPolicy, Kernel, convolve_array
from .errors import DomainError, FitError, VerificationError
from .image import as_array


class PsfWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Psf:
    """Unit-sum, nonnegative Gaussian kernel together with its generating sigma."""

    kernel: Kernel
    sigma: float

    @property
    def radius(self) -> int:
        return self.kernel.radius

    @property
    def weights(self) -> np.ndarray:
        return self.kernel.weights


def default_radius(sigma: float) -> int:
    return max(1, math.ceil(4.0 * sigma))


def gaussian_psf(sigma: float, radius: int | None = None) -> Psf:
    """Sampled isotropic Gaussian, normalized to sum to one.

    ``radius`` defaults to ``ceil(4 * sigma)``; anything below
    ``ceil(3 * sigma)`` truncates the tails noticeably and warns.
    """
    sigma = float(sigma)
    if not sigma > 0 or not math.isfinite(sigma):
        raise DomainError(f"PSF sigma must be positive and finite, got {sigma}")
    if radius is None:
        radius = default_radius(sigma)
    radius = int(radius)
    if radius < 1:
        raise DomainError(f"PSF radius must be >= 1, got {radius}")
    if radius < math.ceil(3.0 * sigma):
        warnings.warn(
            f"PSF radius {radius} < ceil(3*sigma) = {math.ceil(3.0 * sigma)}; tails truncated",
            PsfWarning, stacklevel=2)
    off = np.arange(-radius, radius + 1, dtype=np.float64)
    r2 = off[:, None] ** 2 + off[None, :] ** 2
    w = np.exp(-r2 / (2.0 * sigma * sigma))
    w /= w.sum()
    return Psf(Kernel(w), sigma)


# -- point-source fit ------------------------------------------------------

class PointFit(NamedTuple):
    sigma: float
    center: tuple[float, float]  # (row, col)
    fit_rmse: float
    amplitude: float


def _gauss_model(params, rr, cc):
    amp, cy, cx, s = params
    dy = rr - cy
    dx = cc - cx
    d2 = dy * dy + dx * dx
    e = np.exp(-d2 / (2.0 * s * s))
    model = amp * e
    jac = np.stack([
        e,
        model * dy / (s * s),
        model * dx / (s * s),
        model * d2 / (s ** 3),
    ], axis=-1)
    return model, jac


def _initial_guess(data, rr, cc):
    base = float(np.median(data))
    peak = float(data.max())
    half = base + 0.5 * (peak - base)
    mask = data >= half
    w = (data - base) * mask
    total = w.sum()
    cy = float((w * rr).sum() / total)
    cx = float((w * cc).sum() / total)
    area = float(mask.sum())
    s = math.sqrt(area / (2.0 * math.pi * math.log(2.0)))
    return np.array([peak, cy, cx, max(s, 0.3)])


def fit_sigma_to_point_source(img, max_iter: int = 100, tol: float = 1e-8) -> PointFit:
    """Least-squares isotropic Gaussian fit to a single bright blob.

    The model is ``A * exp(-((r - cy)^2 + (c - cx)^2) / (2 sigma^2))`` with
    free amplitude, center and width.  It is initialized from half-maximum
    moments and refined by Gauss-Newton with step halving.  ``fit_rmse`` is
    the residual RMS divided by the fitted amplitude.

    Raises
    ------
    FitError
        If the image has no dominant blob (max <= 5 * median), or the
        iteration does not converge within ``max_iter`` steps.
    """
    data = as_array(img)
    peak = float(data.max())
    med = float(np.median(data))
    if not peak > 5.0 * med or peak <= 0.0:
        raise FitError("no dominant blob (max pixel must exceed 5x the median)")
    rgrid, cgrid = np.indices(data.shape, dtype=np.float64)
    p = _initial_guess(data, rgrid, cgrid)
    y = data.ravel()
    rr = rgrid.ravel()
    cc = cgrid.ravel()
    model, jac = _gauss_model(p, rr, cc)
    sse = float(np.sum((y - model) ** 2))
    converged = False
    for _ in range(max_iter):
        step, *_ = np.linalg.lstsq(jac, y - model, rcond=None)
        t = 1.0
        accepted = False
        for _half in range(40):
            trial = p + t * step
            if trial[3] > 0 and trial[0] > 0:
                m_t, j_t = _gauss_model(trial, rr, cc)
                sse_t = float(np.sum((y - m_t) ** 2))
                if sse_t <= sse:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            # no decrease along the Gauss-Newton direction: at a minimum to rounding
            converged = True
            break
        delta = t * step
        p, model, jac, sse = trial, m_t, j_t, sse_t
        if np.all(np.abs(delta) <= tol * np.maximum(1.0, np.abs(p))):
            converged = True
            break
    amp, cy, cx, s = (float(v) for v in p)
    result = PointFit(s, (cy, cx), math.sqrt(sse / y.size) / amp, amp)
    if not converged:
        raise FitError(f"Gaussian fit did not converge in {max_iter} iterations", best=result)
    return result


# -- line-source verification ----------------------------------------------

def _line_extent(profile):
    """Longest run of ``profile`` above half its (3-tap smoothed) maximum."""
    sm = np.convolve(profile, np.ones(3) / 3.0, mode="same")
    above = sm >= 0.5 * sm.max()
    best = (0, -1)
    start = None
    for i, flag in enumerate(np.append(above, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - 1 - start > best[1] - best[0]:
                best = (start, i - 1)
            start = None
    return best


def _dominant_axis(data):
    w = np.clip(data - np.median(data), 0.0, None)
    total = w.sum()
    if total <= 0:
        raise VerificationError("acquired line image has no signal above its median")
    rr, cc = np.indices(data.shape, dtype=np.float64)
    var_r = float((w * (rr - (w * rr).sum() / total) ** 2).sum() / total)
    var_c = float((w * (cc - (w * cc).sum() / total) ** 2).sum() / total)
    return "horizontal" if var_c >= var_r else "vertical"


def verify_line_source(psf: Psf, acquired_line, orientation: str = "horizontal",
                       end_margin: float = 0.1) -> float:
    """Compare an imaged line source against an ideal line blurred by ``psf``.

    The line position and extent are located in ``acquired_line``; a unit
    line over the same extent is convolved with the PSF, scaled by least
    squares onto the acquired data and compared over a band of half-width
    ``psf.radius`` around the line, excluding ``end_margin`` of the line
    length at each end.  Returns the RMSE as a percentage of the fitted
    model peak.
    """
    orientation = orientation.lower()
    if orientation not in ("horizontal", "vertical"):
        raise ValueError(f"orientation must be 'horizontal' or 'vertical', got {orientation!r}")
    if not 0.0 <= end_margin < 0.5:
        raise ValueError("end_margin must lie in [0, 0.5)")
    data = as_array(acquired_line)
    found = _dominant_axis(data)
    if found != orientation:
        raise VerificationError(f"expected a {orientation} line but the image looks {found}")
    kernel = psf.kernel
    if orientation == "vertical":
        data = data.T
        kernel = Kernel(kernel.weights.T)

    row = int(np.argmax(data.sum(axis=1)))
    c0, c1 = _line_extent(data[row])
    ideal = np.zeros_like(data)
    ideal[row, c0:c1 + 1] = 1.0
    model = convolve_array(ideal, kernel, BoundaryPolicy.REFLECT)

    length = c1 - c0 + 1
    m = int(round(end_margin * length))
    band = kernel.radius
    rows = slice(max(0, row - band), min(data.shape[0], row + band + 1))
    cols = slice(c0 + m, c1 - m + 1)
    mod = model[rows, cols]
    acq = data[rows, cols]
    if mod.size == 0:
        raise VerificationError("line too short for the requested end margin")
    denom = float(np.sum(mod * mod))
    scale = float(np.sum(mod * acq)) / denom
    resid = scale * mod - acq
    rmse = math.sqrt(float(np.mean(resid * resid)))
    peak = abs(scale) * float(mod.max())
    return 100.0 * rmse / peak


# -- depth trend -----------------------------------------------------------

@dataclass(frozen=True)
class DepthTrend:
    """Linear model ``sigma = slope * distance_cm + intercept``."""

    slope: float
    intercept: float
    fit_residual: float = 0.0

    def predict(self, distance_cm: float, sigma_min: float = 0.1) -> float:
        return predict_sigma(self, distance_cm, sigma_min)


def fit_depth_trend(points) -> DepthTrend:
    """Ordinary least-squares line through ``(distance_cm, sigma)`` pairs."""
    pts = np.asarray([(float(p[0]), float(p[1])) for p in points], dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise DomainError("depth trend needs at least two points")
    d, s = pts[:, 0], pts[:, 1]
    dc = d - d.mean()
    sxx = float(np.dot(dc, dc))
    if sxx == 0.0:
        raise DomainError("degenerate depth trend: all distances are identical")
    slope = float(np.dot(dc, s - s.mean())) / sxx
    intercept = float(s.mean() - slope * d.mean())
    resid = s - (slope * d + intercept)
    return DepthTrend(slope, intercept, math.sqrt(float(np.mean(resid * resid))))


def predict_sigma(trend: DepthTrend, distance_cm: float, sigma_min: float = 0.1) -> float:
    """Evaluate the trend at ``distance_cm``, clamped below at ``sigma_min``.

    A raw prediction <= 0 is clamped too, but also emits a PsfWarning since
    the trend is being used outside its valid range.
    """
    if not sigma_min > 0:
        raise DomainError("sigma_min must be positive")
    raw = trend.slope * float(distance_cm) + trend.intercept
    if raw <= 0.0:
        warnings.warn(
            f"predicted sigma {raw:.6g} <= 0 at {distance_cm} cm; clamped to {sigma_min}",
            PsfWarning, stacklevel=2)
    return max(raw, sigma_min)


# -- CSV -------------------------------------------------------------------

CSV_FIELDS = ("distance_cm", "sigma", "fit_rmse")


def write_points_csv(path, rows) -> None:
    """Write ``(distance_cm, sigma, fit_rmse)`` rows with a header line."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for d, s, r in rows:
            w.writerow([repr(float(d)), repr(float(s)), repr(float(r))])


def read_points_csv(path) -> list[tuple[float, float, float]]:
    """Read a points CSV; ``fit_rmse`` is optional and defaults to 0."""
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append((float(rec["distance_cm"]), float(rec["sigma"]),
                        float(rec.get("fit_rmse") or 0.0)))
    return out
