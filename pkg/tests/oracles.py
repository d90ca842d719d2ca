"""Slow, obviously-correct reference implementations used only by tests."""

import math

import numpy as np


def reflect_index(i, n):
    # mirror about the edge pixel without repeating it
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = abs(i) % period
    return i if i < n else period - i


def fetch(x, i, j, mode):
    h, w = x.shape
    if mode == "zero":
        return x[i, j] if 0 <= i < h and 0 <= j < w else 0.0
    if mode == "replicate":
        return x[min(max(i, 0), h - 1), min(max(j, 0), w - 1)]
    return x[reflect_index(i, h), reflect_index(j, w)]


def brute_convolve(x, w, mode="reflect"):
    r = w.shape[0] // 2
    out = np.zeros_like(x, dtype=float)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            acc = 0.0
            for u in range(-r, r + 1):
                for v in range(-r, r + 1):
                    acc += w[u + r, v + r] * fetch(x, i - u, j - v, mode)
            out[i, j] = acc
    return out


def brute_correlate(x, w, mode="reflect"):
    r = w.shape[0] // 2
    out = np.zeros_like(x, dtype=float)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            acc = 0.0
            for u in range(-r, r + 1):
                for v in range(-r, r + 1):
                    acc += w[u + r, v + r] * fetch(x, i + u, j + v, mode)
            out[i, j] = acc
    return out


def dense_matrix(linear_map, shape):
    """Matrix of a linear image->image map, one basis image per column."""
    n = shape[0] * shape[1]
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        cols.append(np.asarray(linear_map(e.reshape(shape)), dtype=float).ravel())
    return np.column_stack(cols)


def finite_difference_gradient(fun, x, step=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += step
        xm[idx] -= step
        g[idx] = (fun(xp) - fun(xm)) / (2.0 * step)
    return g


def gaussian_blob(shape, center, sigma, amplitude=1.0):
    rr, cc = np.indices(shape, dtype=float)
    d2 = (rr - center[0]) ** 2 + (cc - center[1]) ** 2
    return amplitude * np.exp(-d2 / (2.0 * sigma * sigma))


def gaussian_normalizer(sigma, radius):
    z = 0.0
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            z += math.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))
    return z


def noise_std_for_snr(clean, snr_db):
    """Noise std giving ``snr_db`` = 10 log10(mean(clean^2) / noise variance)."""
    return math.sqrt(float(np.mean(clean * clean)) / 10.0 ** (snr_db / 10.0))
