"""Hot stencil kernels with a numba fast path and a pure-numpy fallback.

The divergence-form operator application is the innermost loop of every
conjugate-gradient iteration, which in turn sits inside semismooth Newton
inside the fixed-point outer loop, so it dominates runtime.  Both
implementations compute the identical expression; selection happens once at
import time:

  * ``QUADGRAD_NUMBA=0`` (or ``false``/``off``) forces the numpy path,
  * otherwise numba is used when importable, numpy when not.

``benchmarks/benchmark_kernels.py`` times the two paths against each other.
"""

from __future__ import annotations

import os

import numpy as np


def apply_diffusion_1d_numpy(v, coef, inv_h2):
    """3-point divergence-form stencil; coef holds one value per cell."""
    n = v.shape[0]
    ext = np.zeros(n + 2)
    ext[1:-1] = v
    flux = coef * np.diff(ext)
    return (flux[:-1] - flux[1:]) * inv_h2


def apply_diffusion_2d_numpy(v, coefx, coefy, inv_hx2, inv_hy2):
    """5-point divergence-form stencil; coefx/coefy live on axis edges."""
    nx, ny = v.shape
    ext = np.zeros((nx + 2, ny + 2))
    ext[1:-1, 1:-1] = v
    fx = coefx * np.diff(ext[:, 1:-1], axis=0)
    fy = coefy * np.diff(ext[1:-1, :], axis=1)
    return (fx[:-1, :] - fx[1:, :]) * inv_hx2 + (fy[:, :-1] - fy[:, 1:]) * inv_hy2


def _want_numba():
    flag = os.environ.get("QUADGRAD_NUMBA", "").strip().lower()
    return flag not in ("0", "false", "off")


USING_NUMBA = False
apply_diffusion_1d = apply_diffusion_1d_numpy
apply_diffusion_2d = apply_diffusion_2d_numpy

if _want_numba():
    try:
        from numba import njit

        @njit(cache=True)
        def apply_diffusion_1d_numba(v, coef, inv_h2):
            n = v.shape[0]
            out = np.empty(n)
            for i in range(n):
                left = v[i] - (v[i - 1] if i > 0 else 0.0)
                right = (v[i + 1] if i < n - 1 else 0.0) - v[i]
                out[i] = (coef[i] * left - coef[i + 1] * right) * inv_h2
            return out

        @njit(cache=True)
        def apply_diffusion_2d_numba(v, coefx, coefy, inv_hx2, inv_hy2):
            nx, ny = v.shape
            out = np.empty((nx, ny))
            for i in range(nx):
                for j in range(ny):
                    c = v[i, j]
                    lx = c - (v[i - 1, j] if i > 0 else 0.0)
                    rx = (v[i + 1, j] if i < nx - 1 else 0.0) - c
                    ly = c - (v[i, j - 1] if j > 0 else 0.0)
                    ry = (v[i, j + 1] if j < ny - 1 else 0.0) - c
                    out[i, j] = (coefx[i, j] * lx - coefx[i + 1, j] * rx) * inv_hx2 \
                        + (coefy[i, j] * ly - coefy[i, j + 1] * ry) * inv_hy2
            return out

        apply_diffusion_1d = apply_diffusion_1d_numba
        apply_diffusion_2d = apply_diffusion_2d_numba
        USING_NUMBA = True
    except ImportError:
        pass
