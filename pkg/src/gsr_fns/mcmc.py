"""Adaptive random-walk Metropolis and convergence diagnostics."""

from __future__ import annotations

import math

import numpy as np
from scipy import special

TARGET_ACCEPT = 0.234


def adaptive_metropolis(logp, x0, n_iter, n_warmup, rng, scale0=None):
    """Random-walk Metropolis whose proposal adapts during warmup only.

    The proposal covariance follows the running covariance of the warmup
    draws (scaled by 2.38^2/d); a global step factor is tuned toward an
    acceptance rate of 0.234. Returns post-warmup draws, their log
    densities and the post-warmup acceptance rate.
    """
    x = np.array(x0, dtype=float)
    d = x.size
    lp = logp(x)
    if not np.isfinite(lp):
        raise ValueError("starting point has zero posterior density")
    cov = np.diag(np.square(scale0 if scale0 is not None else np.full(d, 0.1)))
    log_lam = 0.0
    chol = np.linalg.cholesky(cov)
    total = n_warmup + n_iter
    draws = np.empty((n_iter, d))
    lps = np.empty(n_iter)
    mean = x.copy()
    m2 = np.zeros((d, d))
    accepted = 0
    for t in range(total):
        prop = x + math.exp(log_lam) * (chol @ rng.standard_normal(d))
        lp_prop = logp(prop)
        alpha = math.exp(min(0.0, lp_prop - lp)) if np.isfinite(lp_prop) else 0.0
        if rng.random() < alpha:
            x, lp = prop, lp_prop
            if t >= n_warmup:
                accepted += 1
        if t < n_warmup:
            log_lam += (alpha - TARGET_ACCEPT) / math.sqrt(t + 1.0)
            # Welford update of the warmup covariance
            k = t + 1
            delta = x - mean
            mean += delta / k
            m2 += np.outer(delta, x - mean)
            if k >= 100 and k % 50 == 0:
                emp = m2 / (k - 1) * (2.38**2 / d) + 1e-8 * np.eye(d)
                try:
                    chol = np.linalg.cholesky(emp)
                except np.linalg.LinAlgError:
                    pass
        else:
            draws[t - n_warmup] = x
            lps[t - n_warmup] = lp
    rate = accepted / n_iter if n_iter else float("nan")
    return draws, lps, rate


def _z_scale(x):
    """Rank-normalise pooled draws (Vehtari et al. style)."""
    flat = x.ravel()
    ranks = np.empty(flat.size)
    ranks[np.argsort(flat, kind="stable")] = np.arange(1, flat.size + 1)
    return special.ndtri((ranks - 0.375) / (flat.size + 0.25)).reshape(x.shape)


def _split(x):
    n = x.shape[1] // 2
    return np.concatenate([x[:, :n], x[:, -n:]], axis=0)


def _rhat_raw(x):
    m, n = x.shape
    if n < 2:
        return float("inf")
    w = x.var(axis=1, ddof=1).mean()
    b = n * x.mean(axis=1).var(ddof=1)
    if w == 0:
        return 1.0 if b == 0 else float("inf")
    var = (n - 1) / n * w + b / n
    return float(math.sqrt(var / w))


def split_rhat(x) -> float:
    """Rank-normalised split potential scale reduction for ``(chains, draws)``."""
    x = np.asarray(x, dtype=float)
    s = _split(x)
    bulk = _rhat_raw(_z_scale(s))
    folded = _rhat_raw(_z_scale(np.abs(s - np.median(s))))
    return max(bulk, folded)


def ess(x) -> float:
    """Bulk effective sample size from pooled autocorrelations (Geyer pairs)."""
    z = _z_scale(_split(np.asarray(x, dtype=float)))
    m, n = z.shape
    if n < 4:
        return float(m * n)
    centered = z - z.mean(axis=1, keepdims=True)
    size = 2 ** int(math.ceil(math.log2(2 * n)))
    f = np.fft.rfft(centered, size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n] / n
    w = acov[:, 0].mean() * n / (n - 1)
    b = n * z.mean(axis=1).var(ddof=1) if m > 1 else 0.0
    var = (n - 1) / n * w + b / n
    if var <= 0:
        return float(m * n)
    rho = 1 - (w - acov.mean(axis=0)) / var
    rho[0] = 1.0
    tau = -1.0
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        tau += 2 * pair
    return float(m * n / max(tau, 1.0 / math.log10(m * n)))
