"""Expectations of piecewise-linear functions under a continuous law.

A tabulated function ``g`` on nodes ``x_0 < ... < x_N`` is interpolated
linearly. Integrating by parts against the CDF ``F`` gives

    E[g(X); x_0 <= X <= x_N] = g_N F(x_N) - g_0 F(x_0) - sum_j s_j I_j

with ``s_j`` the slope on interval ``j`` and ``I_j`` the integral of ``F``
over it. Only ``F`` is ever evaluated, so no density singularity near zero
enters and monotone ``F`` orderings carry over to the result.
"""

from __future__ import annotations

import numpy as np

_GL_T, _GL_W = np.polynomial.legendre.leggauss(3)
_GL_T = 0.5 * (_GL_T + 1.0)
_GL_W = 0.5 * _GL_W


def gl_points(x: np.ndarray) -> np.ndarray:
    """Gauss-Legendre abscissae inside each interval, shape ``(N, 3)``."""
    x = np.asarray(x, dtype=float)
    return x[:-1, None] + np.diff(x)[:, None] * _GL_T[None, :]


class CdfIntegrals:
    """CDF values at the nodes and per-interval means of the CDF.

    ``F`` holds the CDF at ``x``; ``F_at_gl`` holds it at ``gl_points(x)``.
    """

    def __init__(self, x: np.ndarray, F: np.ndarray, F_at_gl: np.ndarray):
        self.x = x
        self.F = np.asarray(F, dtype=float)
        self.Fbar = np.asarray(F_at_gl, dtype=float) @ _GL_W

    @classmethod
    def from_cdf(cls, x, cdf) -> "CdfIntegrals":
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0):
            raise ValueError("quadrature nodes must be strictly increasing")
        return cls(x, cdf(x), cdf(gl_points(x)))

    @property
    def above(self) -> float:
        return float(1.0 - self.F[-1])

    def node_weights(self) -> np.ndarray:
        """Weights ``c`` with ``E[g(X); X <= x_N] = c @ g`` (mass below x_0 goes to node 0)."""
        left = self.Fbar - self.F[:-1]
        right = self.F[1:] - self.Fbar
        c = np.empty_like(self.F)
        c[0] = self.F[0] + left[0]
        c[1:-1] = right[:-1] + left[1:]
        c[-1] = right[-1]
        return np.clip(c, 0.0, None)

    def expect(self, g: np.ndarray) -> float:
        """By-parts form of ``node_weights() @ g`` for a single column."""
        g = np.asarray(g, dtype=float)
        slopes = -np.diff(g)
        return float(g[-1] * self.F[-1] + slopes @ self.Fbar)
