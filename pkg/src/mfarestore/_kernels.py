"""Inner loops: valid-mode 2D correlation and the quadratic-variation stencils
with their transpose.

Each kernel exists twice, a numba ``@njit`` version and a numpy version.
Both accumulate every output pixel in the same fixed order (kernel rows
outer, kernel columns inner), so the two backends agree to rounding and
each is bit-reproducible run to run.
"""

import numpy as np

from ._accel import HAVE_NUMBA, USE_NUMBA


def correlate_valid_numpy(padded, weights):
    kh, kw = weights.shape
    oh = padded.shape[0] - kh + 1
    ow = padded.shape[1] - kw + 1
    out = np.zeros((oh, ow))
    for u in range(kh):
        for v in range(kw):
            w = weights[u, v]
            if w != 0.0:
                out += w * padded[u:u + oh, v:v + ow]
    return out


def qv_terms_numpy(padded):
    c = padded[1:-1, 1:-1]
    fxx = padded[1:-1, :-2] - 2.0 * c + padded[1:-1, 2:]
    fyy = padded[:-2, 1:-1] - 2.0 * c + padded[2:, 1:-1]
    fxy = (padded[2:, 2:] - padded[2:, :-2] - padded[:-2, 2:] + padded[:-2, :-2]) * 0.25
    return fxx, fxy, fyy


def qv_adjoint_numpy(a, b, c):
    """Transpose of :func:`qv_terms` applied to ``(a, b, c)``.

    Returns ``Dxx^T a + Dxy^T b + Dyy^T c`` on the padded grid.
    """
    h, w = a.shape
    out = np.zeros((h + 2, w + 2))
    out[1:-1, :-2] += a
    out[1:-1, 1:-1] += -2.0 * a
    out[1:-1, 2:] += a
    out[:-2, 1:-1] += c
    out[1:-1, 1:-1] += -2.0 * c
    out[2:, 1:-1] += c
    q = 0.25 * b
    out[2:, 2:] += q
    out[2:, :-2] -= q
    out[:-2, 2:] -= q
    out[:-2, :-2] += q
    return out


if HAVE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def correlate_valid_numba(padded, weights):
        kh, kw = weights.shape
        oh = padded.shape[0] - kh + 1
        ow = padded.shape[1] - kw + 1
        out = np.zeros((oh, ow))
        for i in range(oh):
            for j in range(ow):
                acc = 0.0
                for u in range(kh):
                    for v in range(kw):
                        w = weights[u, v]
                        if w != 0.0:
                            acc += w * padded[i + u, j + v]
                out[i, j] = acc
        return out

    @njit(cache=True)
    def qv_terms_numba(padded):
        h = padded.shape[0] - 2
        w = padded.shape[1] - 2
        fxx = np.empty((h, w))
        fxy = np.empty((h, w))
        fyy = np.empty((h, w))
        for i in range(h):
            for j in range(w):
                c = padded[i + 1, j + 1]
                fxx[i, j] = padded[i + 1, j] - 2.0 * c + padded[i + 1, j + 2]
                fyy[i, j] = padded[i, j + 1] - 2.0 * c + padded[i + 2, j + 1]
                fxy[i, j] = (padded[i + 2, j + 2] - padded[i + 2, j]
                             - padded[i, j + 2] + padded[i, j]) * 0.25
        return fxx, fxy, fyy

    @njit(cache=True)
    def qv_adjoint_numba(a, b, c):
        h, w = a.shape
        out = np.zeros((h + 2, w + 2))
        # term order matches qv_adjoint_numpy so both backends round identically
        for i in range(h):
            for j in range(w):
                out[i + 1, j] += a[i, j]
        for i in range(h):
            for j in range(w):
                out[i + 1, j + 1] += -2.0 * a[i, j]
        for i in range(h):
            for j in range(w):
                out[i + 1, j + 2] += a[i, j]
        for i in range(h):
            for j in range(w):
                out[i, j + 1] += c[i, j]
        for i in range(h):
            for j in range(w):
                out[i + 1, j + 1] += -2.0 * c[i, j]
        for i in range(h):
            for j in range(w):
                out[i + 2, j + 1] += c[i, j]
        for i in range(h):
            for j in range(w):
                out[i + 2, j + 2] += 0.25 * b[i, j]
        for i in range(h):
            for j in range(w):
                out[i + 2, j] -= 0.25 * b[i, j]
        for i in range(h):
            for j in range(w):
                out[i, j + 2] -= 0.25 * b[i, j]
        for i in range(h):
            for j in range(w):
                out[i, j] += 0.25 * b[i, j]
        return out

else:  # pragma: no cover
    correlate_valid_numba = None
    qv_terms_numba = None
    qv_adjoint_numba = None


if USE_NUMBA:
    correlate_valid = correlate_valid_numba
    qv_terms = qv_terms_numba
    qv_adjoint = qv_adjoint_numba
else:
    correlate_valid = correlate_valid_numpy
    qv_terms = qv_terms_numpy
    qv_adjoint = qv_adjoint_numpy
