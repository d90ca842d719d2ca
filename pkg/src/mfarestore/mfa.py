"""Mean field annealing restoration.

The restored image minimizes the Hamiltonian

    H(f) = sum (1 / 2 s2) ((f * h) - g)^2  +  beta * sum -(1/T) exp(-L2 / 2 T^2)

where ``s2`` is the noise variance, ``h`` the PSF and ``L2`` the
per-pixel quadratic variation ``fxx^2 + 2 fxy^2 + fyy^2``.  The first sum
is the noise (data) Hamiltonian, the second the prior Hamiltonian, an
inverted Gaussian penalty that deepens and narrows as T is lowered.
Minimization is plain gradient descent while T follows a geometric
schedule.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import _kernels
from .convolve import BoundaryPolicy, convolve_adjoint_array, convolve_array, pad, pad_adjoint
from .errors import DimensionError, DivergenceError, DomainError
from .image import ImageGrid, as_array, save

CONTINUE = "continue"
STOP = "stop"

# h_total above this multiple of (|H0| + pixel count) counts as divergence
BLOWUP_FACTOR = 1e6


@dataclass(frozen=True)
class NoiseModel:
    """Additive noise variance and the intensity scale it was measured at."""

    variance: float
    measured_at_scale: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.variance) and self.variance >= 0):
            raise DomainError(f"noise variance must be finite and >= 0, got {self.variance}")
        if not (math.isfinite(self.measured_at_scale) and self.measured_at_scale > 0):
            raise DomainError("measured_at_scale must be finite and > 0")

    def scaled(self, k: float) -> "NoiseModel":
        """Noise model for an image whose intensities were multiplied by ``k``."""
        k = float(k)
        return NoiseModel(self.variance * (k * k), self.measured_at_scale * abs(k))

    def at_scale(self, scale: float) -> "NoiseModel":
        """Noise model re-expressed at intensity scale ``scale``."""
        return self.scaled(float(scale) / self.measured_at_scale)


@dataclass(frozen=True)
class AnnealingSchedule:
    """Geometric temperature schedule ``T_{k+1} = decay * T_k``."""

    t_initial: float
    t_final: float
    decay: float = 0.9
    steps_per_temperature: int = 2

    def __post_init__(self):
        if not (self.t_initial > 0 and self.t_final > 0):
            raise DomainError("temperatures must be positive")
        if self.t_final > self.t_initial:
            raise DomainError("t_final must not exceed t_initial")
        if not 0 < self.decay < 1:
            raise DomainError("decay must lie in (0, 1)")
        if self.steps_per_temperature < 1:
            raise DomainError("steps_per_temperature must be >= 1")

    @classmethod
    def default(cls, t_initial: float) -> "AnnealingSchedule":
        return cls(t_initial, 0.05 * t_initial)

    def temperatures(self):
        t = self.t_initial
        floor = self.t_final * (1.0 - 1e-12)
        while t >= floor:
            yield t
            t *= self.decay

    def __len__(self):
        return sum(1 for _ in self.temperatures())


@dataclass(frozen=True)
class MfaParams:
    """Restoration parameters.

    ``alpha=None`` means ``0.5 * noise variance`` and ``schedule=None``
    means :meth:`AnnealingSchedule.default` at :func:`default_t_initial`;
    both are resolved against the data by :func:`resolve_params`.
    ``stop_window=0`` disables the early-stopping indicator.
    """

    alpha: float | None = None
    beta: float = 1.0
    schedule: AnnealingSchedule | None = None
    max_iterations: int = 20
    snapshot_every: int = 0
    backtrack: bool = False
    max_backtracks: int = 30
    armijo: float = 0.5
    stop_window: int = 0
    stop_epsilon: float = 1e-4

    def __post_init__(self):
        if self.alpha is not None and not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise DomainError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise DomainError(f"beta must be finite and >= 0, got {self.beta}")
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be >= 1")
        if self.snapshot_every < 0:
            raise DomainError("snapshot_every must be >= 0")


class TraceRecord(NamedTuple):
    iteration: int
    temperature: float
    h_noise: float
    h_prior: float
    h_total: float
    step: float = float("nan")


@dataclass
class RestorationTrace:
    beta: float
    records: list[TraceRecord] = field(default_factory=list)
    snapshots: list[tuple[int, ImageGrid]] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)

    def write_csv(self, path) -> None:
        """Write ``iteration,temperature,h_noise,h_prior,h_total`` rows."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("iteration", "temperature", "h_noise", "h_prior", "h_total"))
            for r in self.records:
                w.writerow((r.iteration, repr(r.temperature), repr(r.h_noise),
                            repr(r.h_prior), repr(r.h_total)))

    def write_frames(self, directory, format: str = "f64") -> list[str]:
        """Write snapshots as ``frame_%06d.<ext>``; returns the paths written."""
        os.makedirs(directory, exist_ok=True)
        ext = "pgm" if format == "pgm" else "f64"
        paths = []
        for it, img in self.snapshots:
            p = os.path.join(directory, f"frame_{it:06d}.{ext}")
            save(img, p, format=ext)
            paths.append(p)
        return paths


class Energy(NamedTuple):
    h_noise: float
    h_prior: float
    h_total: float


# -- quadratic variation ---------------------------------------------------

def _check_qv_shape(shape):
    if shape[0] < 3 or shape[1] < 3:
        raise DomainError(f"quadratic variation needs an image of at least 3x3, got {shape}")


def _qv_terms(f):
    return _kernels.qv_terms(pad(f, 1, BoundaryPolicy.REFLECT))


def quadratic_variation(img) -> ImageGrid:
    """Per-pixel ``fxx^2 + 2 fxy^2 + fyy^2`` from central second differences.

    ``fxx`` differences along columns, ``fyy`` along rows and ``fxy`` is
    the four-point cross difference divided by 4; borders are reflected.
    """
    f = as_array(img)
    _check_qv_shape(f.shape)
    fxx, fxy, fyy = _qv_terms(f)
    return ImageGrid(fxx * fxx + 2.0 * fxy * fxy + fyy * fyy)


def default_t_initial(g) -> float:
    """``max(1, 1.4826 * MAD(sqrt(L2(g))))``."""
    lam = np.sqrt(quadratic_variation(g).data)
    mad = float(np.median(np.abs(lam - np.median(lam))))
    return max(1.0, 1.4826 * mad)


def resolve_params(params: MfaParams, g, noise: NoiseModel) -> MfaParams:
    """Fill in data-dependent defaults (alpha, schedule)."""
    alpha = params.alpha if params.alpha is not None else 0.5 * noise.variance
    schedule = params.schedule
    if schedule is None:
        schedule = AnnealingSchedule.default(default_t_initial(g))
    return replace(params, alpha=alpha, schedule=schedule)


# -- objective and gradient ------------------------------------------------

def _validate(f, g, noise, temperature):
    if f.shape != g.shape:
        raise DimensionError(f"estimate {f.shape} and measurement {g.shape} differ in shape")
    _check_qv_shape(f.shape)
    if not temperature > 0:
        raise DomainError(f"temperature must be > 0, got {temperature}")
    if not noise.variance > 0:
        raise DomainError("the Hamiltonian needs a strictly positive noise variance")


def _energy(f, g, kernel, var, beta, temperature):
    resid = convolve_array(f, kernel) - g
    fxx, fxy, fyy = _qv_terms(f)
    lam2 = fxx * fxx + 2.0 * fxy * fxy + fyy * fyy
    expo = np.exp(-lam2 / (2.0 * temperature * temperature))
    h_noise = float(np.sum(resid * resid)) / (2.0 * var)
    h_prior = -float(np.sum(expo)) / temperature
    return Energy(h_noise, h_prior, h_noise + beta * h_prior)


def _gradient(f, g, kernel, var, beta, temperature):
    resid = convolve_array(f, kernel) - g
    grad = convolve_adjoint_array(resid, kernel) / var
    if beta != 0.0:
        fxx, fxy, fyy = _qv_terms(f)
        lam2 = fxx * fxx + 2.0 * fxy * fxy + fyy * fyy
        w = np.exp(-lam2 / (2.0 * temperature * temperature)) / temperature ** 3
        padded = _kernels.qv_adjoint(w * fxx, 2.0 * w * fxy, w * fyy)
        grad = grad + beta * pad_adjoint(padded, 1, f.shape, BoundaryPolicy.REFLECT)
    return grad


def hamiltonian(f_est, g, psf, noise: NoiseModel, beta: float, temperature: float) -> Energy:
    """Return ``(h_noise, h_prior, h_total)`` with ``h_total = h_noise + beta * h_prior``."""
    f = as_array(f_est)
    gg = as_array(g)
    _validate(f, gg, noise, temperature)
    return _energy(f, gg, psf.kernel, noise.variance, beta, temperature)


def gradient(f_est, g, psf, noise: NoiseModel, beta: float, temperature: float) -> ImageGrid:
    """Analytic derivative of :func:`hamiltonian` with respect to every pixel of ``f_est``.

    The data part is the exact transpose of the blur (reflect borders
    included) applied to the residual, over the variance.  The prior part
    chains ``exp(-L2 / 2T^2) / T^3`` through the transposed second-difference
    stencils.
    """
    f = as_array(f_est)
    gg = as_array(g)
    _validate(f, gg, noise, temperature)
    return ImageGrid(_gradient(f, gg, psf.kernel, noise.variance, beta, temperature))


def mfa_step(f_est, g, psf, noise: NoiseModel, params: MfaParams, temperature: float,
             iteration: int = 0) -> ImageGrid:
    """One gradient-descent update ``f - alpha * dH/df``."""
    params = resolve_params(params, g, noise) if params.alpha is None else params
    f = as_array(f_est)
    gg = as_array(g)
    _validate(f, gg, noise, temperature)
    new = f - params.alpha * _gradient(f, gg, psf.kernel, noise.variance, params.beta, temperature)
    if not np.all(np.isfinite(new)):
        raise DivergenceError(iteration)
    return ImageGrid(new)


# -- annealing -------------------------------------------------------------

def stopping_indicator(trace: RestorationTrace, window: int = 3, epsilon: float = 1e-4) -> str:
    """Decide whether annealing has stopped paying off.

    Over the trailing ``window`` records: stop on a plateau, i.e. the
    relative decrease of h_total is below ``epsilon``.  Also stop at the
    onset of over-smoothing, where h_noise rises at every record while
    h_prior falls, provided h_total has slowed to under ``10 * epsilon``.
    """
    recs = trace.records
    if window < 2 or len(recs) < window:
        return CONTINUE
    tail = recs[-window:]
    first, last = tail[0].h_total, tail[-1].h_total
    rel_drop = (first - last) / max(abs(first), 1e-300)
    if rel_drop < epsilon:
        return STOP
    noise_up = all(b.h_noise > a.h_noise for a, b in zip(tail, tail[1:]))
    prior_down = all(b.h_prior < a.h_prior for a, b in zip(tail, tail[1:]))
    if noise_up and prior_down and rel_drop < 10.0 * epsilon:
        return STOP
    return CONTINUE


def anneal(g, psf, noise: NoiseModel, params: MfaParams | None = None):
    """Restore ``g`` by gradient descent under a falling temperature.

    Starts from ``f = g``.  At each temperature ``steps_per_temperature``
    updates are made until ``max_iterations`` is reached, the schedule runs
    out, or the stopping indicator fires (when ``stop_window > 0``).  With
    ``backtrack`` on, a step that raises h_total is retried at half the step
    size; if no tried step lowers it, the iterate is kept.

    Returns ``(f_star, trace)``.  Raises DivergenceError, carrying the
    trace so far, if a pixel or the energy becomes non-finite or blows up.
    """
    gg = as_array(g)
    params = resolve_params(params or MfaParams(), gg, noise)
    _validate(gg, gg, noise, params.schedule.t_initial)
    kernel = psf.kernel
    var = noise.variance
    beta = params.beta
    trace = RestorationTrace(beta=beta)

    f = gg.copy()
    k = 0
    limit = None
    for temp in params.schedule.temperatures():
        if k >= params.max_iterations:
            break
        energy = _energy(f, gg, kernel, var, beta, temp)
        if limit is None:
            limit = BLOWUP_FACTOR * (abs(energy.h_total) + f.size)
        for _ in range(params.schedule.steps_per_temperature):
            if k >= params.max_iterations:
                break
            k += 1
            grad = _gradient(f, gg, kernel, var, beta, temp)
            alpha = params.alpha
            trial = f - alpha * grad
            if not np.all(np.isfinite(trial)):
                raise DivergenceError(k, trace)
            new_energy = _energy(trial, gg, kernel, var, beta, temp)
            if params.backtrack:
                gnorm2 = float(np.sum(grad * grad))
                tries = 0
                while (new_energy.h_total > energy.h_total - params.armijo * alpha * gnorm2
                       and tries < params.max_backtracks):
                    alpha *= 0.5
                    trial = f - alpha * grad
                    new_energy = _energy(trial, gg, kernel, var, beta, temp)
                    tries += 1
                if new_energy.h_total > energy.h_total:
                    trial, new_energy, alpha = f, energy, 0.0
            if not math.isfinite(new_energy.h_total):
                raise DivergenceError(k, trace, "non-finite Hamiltonian")
            if abs(new_energy.h_total) > limit:
                raise DivergenceError(k, trace, "Hamiltonian blow-up")
            f, energy = trial, new_energy
            trace.records.append(TraceRecord(k, temp, *energy, step=alpha))
            if params.snapshot_every and k % params.snapshot_every == 0:
                trace.snapshots.append((k, ImageGrid(f)))
            if params.stop_window and stopping_indicator(
                    trace, params.stop_window, params.stop_epsilon) == STOP:
                return ImageGrid(f), trace
    return ImageGrid(f), trace
