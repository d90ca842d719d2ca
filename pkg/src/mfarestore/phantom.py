"""Error metrics, flood-source noise estimation and synthetic phantoms."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .convolve import BoundaryPolicy, convolve_array
from .errors import DimensionError, DomainError, ParseError
from .image import ImageGrid, as_array
from .mfa import NoiseModel


def _pair(a, b):
    a = as_array(a)
    b = as_array(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def rmse(a, b) -> float:
    a, b = _pair(a, b)
    d = a - b
    return math.sqrt(float(np.mean(d * d)))


def psnr(a, ref, peak: float | None = None) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images.

    ``peak`` defaults to the maximum of ``ref``.
    """
    a, ref = _pair(a, ref)
    if peak is None:
        peak = float(ref.max())
    if not peak > 0:
        raise DomainError("PSNR peak must be > 0")
    err = rmse(a, ref)
    if err == 0.0:
        return math.inf
    return 20.0 * math.log10(peak / err)


def estimate_noise_variance(flood, region=None) -> NoiseModel:
    """Noise variance of a flood image inside ``region``.

    ``region`` is ``(row, col, height, width)`` and defaults to the whole
    image.  A least-squares plane is removed first so that a smooth flood
    non-uniformity does not count as noise; the residual variance uses
    three degrees of freedom for the plane.  ``measured_at_scale`` is the
    region mean (1.0 if the mean is not positive).
    """
    data = as_array(flood)
    if region is None:
        region = (0, 0, data.shape[0], data.shape[1])
    r0, c0, rh, rw = (int(v) for v in region)
    if r0 < 0 or c0 < 0 or rh < 1 or rw < 1 or r0 + rh > data.shape[0] or c0 + rw > data.shape[1]:
        raise DomainError(f"region {region} is outside the {data.shape} image")
    if rh * rw < 16:
        raise DomainError(f"region has {rh * rw} pixels; at least 16 are needed")
    patch = data[r0:r0 + rh, c0:c0 + rw]
    rr, cc = np.indices(patch.shape, dtype=np.float64)
    design = np.column_stack([np.ones(patch.size), rr.ravel(), cc.ravel()])
    coef, *_ = np.linalg.lstsq(design, patch.ravel(), rcond=None)
    resid = patch.ravel() - design @ coef
    var = float(np.dot(resid, resid)) / (patch.size - 3)
    mean = float(patch.mean())
    return NoiseModel(var, mean if mean > 0 else 1.0)


# -- phantoms --------------------------------------------------------------

@dataclass(frozen=True)
class Disk:
    center: tuple[float, float]  # (row, col)
    radius: float
    intensity: float


@dataclass(frozen=True)
class Rectangle:
    origin: tuple[int, int]  # top-left (row, col)
    size: tuple[int, int]    # (height, width)
    intensity: float


@dataclass(frozen=True)
class PhantomSpec:
    width: int
    height: int
    shapes: tuple = field(default_factory=tuple)
    background: float = 0.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DomainError("phantom dimensions must be >= 1")
        if not (math.isfinite(self.background) and self.background >= 0):
            raise DomainError("background must be finite and >= 0")
        for s in self.shapes:
            if not (math.isfinite(s.intensity) and s.intensity >= 0):
                raise DomainError(f"shape intensity must be finite and >= 0: {s}")
            if isinstance(s, Disk):
                (cy, cx), r = s.center, s.radius
                if r < 0 or cy - r < 0 or cx - r < 0 or cy + r > self.height - 1 or cx + r > self.width - 1:
                    raise DomainError(f"disk {s} does not fit in {self.width}x{self.height}")
            elif isinstance(s, Rectangle):
                (r0, c0), (h, w) = s.origin, s.size
                if h < 1 or w < 1 or r0 < 0 or c0 < 0 or r0 + h > self.height or c0 + w > self.width:
                    raise DomainError(f"rectangle {s} does not fit in {self.width}x{self.height}")
            else:
                raise DomainError(f"unknown shape {s!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        shapes = []
        for i, s in enumerate(d.get("shapes", [])):
            kind = s.get("kind")
            try:
                if kind == "disk":
                    shapes.append(Disk(tuple(map(float, s["center"])), float(s["radius"]),
                                       float(s["intensity"])))
                elif kind == "rectangle":
                    shapes.append(Rectangle(tuple(map(int, s["origin"])), tuple(map(int, s["size"])),
                                            float(s["intensity"])))
                else:
                    raise ParseError(f"shape {i}: unknown kind {kind!r}")
            except (KeyError, TypeError, ValueError) as exc:
                if isinstance(exc, ParseError):
                    raise
                raise ParseError(f"shape {i}: {exc}") from exc
        try:
            return cls(int(d["width"]), int(d["height"]), tuple(shapes),
                       float(d.get("background", 0.0)))
        except KeyError as exc:
            raise ParseError(f"phantom spec is missing {exc}") from exc

    def to_dict(self) -> dict:
        shapes = []
        for s in self.shapes:
            if isinstance(s, Disk):
                shapes.append({"kind": "disk", "center": list(s.center), "radius": s.radius,
                               "intensity": s.intensity})
            else:
                shapes.append({"kind": "rectangle", "origin": list(s.origin), "size": list(s.size),
                               "intensity": s.intensity})
        return {"width": self.width, "height": self.height, "background": self.background,
                "shapes": shapes}


def load_phantom_spec(path) -> PhantomSpec:
    """Read a JSON phantom description (schema in the README)."""
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(d, dict):
        raise ParseError("phantom spec must be a JSON object")
    return PhantomSpec.from_dict(d)


def render_phantom(spec: PhantomSpec) -> ImageGrid:
    """Paint the shapes over the background in list order (later shapes win)."""
    img = np.full((spec.height, spec.width), float(spec.background))
    rr, cc = np.indices(img.shape)
    for s in spec.shapes:
        if isinstance(s, Disk):
            cy, cx = s.center
            mask = (rr - cy) ** 2 + (cc - cx) ** 2 <= s.radius ** 2
            img[mask] = s.intensity
        else:
            (r0, c0), (h, w) = s.origin, s.size
            img[r0:r0 + h, c0:c0 + w] = s.intensity
    return ImageGrid(img)


def degrade(ideal, psf, noise: NoiseModel, seed: int, poisson: bool = False) -> ImageGrid:
    """Blur ``ideal`` with ``psf`` (reflect borders) and add seeded noise.

    The default noise is i.i.d. Gaussian with the model's variance.  With
    ``poisson=True`` the blurred counts (clipped at zero) are replaced by
    Poisson draws and the variance is ignored; this is a realism option
    outside the Gaussian likelihood the restoration assumes.
    """
    rng = np.random.default_rng(seed)
    blurred = convolve_array(as_array(ideal), psf.kernel, BoundaryPolicy.REFLECT)
    if poisson:
        return ImageGrid(rng.poisson(np.clip(blurred, 0.0, None)).astype(np.float64))
    if noise.variance == 0.0:
        return ImageGrid(blurred)
    return ImageGrid(blurred + rng.normal(0.0, math.sqrt(noise.variance), blurred.shape))
