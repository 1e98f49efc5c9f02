"""Probability that every characteristic particle in a sample goes undetected.

With ``q(px) = P(B = 0 | px)`` the chance that one particle drawn from the
size law is missed, a sample carrying ``n`` particles is a false negative
with probability ``q ** n``; averaging over the per-sample count law gives
``P(FNS | px) = sum_n q(px) ** n P(n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _random
from .grid_model import HIT_THRESHOLD, register_many
from .inference import CoverageError, PosteriorDraws
from .likelihood import LikelihoodTable
from .quadrature import gl_points, _GL_W
from .sizedist import LogTParams, std_cdf

BAND = (0.05, 0.95)


@dataclass(frozen=True)
class CountDistribution:
    """Law of the number of characteristic particles in a positive sample."""

    pmf: dict

    def __post_init__(self):
        if not self.pmf:
            raise ValueError("count distribution is empty")
        clean = {}
        for n, p in self.pmf.items():
            if int(n) != n or n < 1:
                raise ValueError(f"counts must be integers >= 1, got {n!r}")
            if p < 0:
                raise ValueError(f"negative probability for n={n}")
            clean[int(n)] = float(p)
        total = sum(clean.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"count probabilities sum to {total}, not 1")
        object.__setattr__(self, "pmf", dict(sorted(clean.items())))

    @property
    def n_max(self) -> int:
        return max(self.pmf)

    @property
    def mean(self) -> float:
        return sum(n * p for n, p in self.pmf.items())

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.fromiter(self.pmf, dtype=float), np.fromiter(self.pmf.values(), dtype=float)

    @classmethod
    def from_counts(cls, counts) -> "CountDistribution":
        """Empirical law of per-sample counts; samples with zero particles are ignored."""
        counts = np.asarray(list(counts), dtype=np.int64)
        counts = counts[counts >= 1]
        if counts.size == 0:
            raise ValueError("no sample carries a particle")
        values, freq = np.unique(counts, return_counts=True)
        return cls({int(n): f / counts.size for n, f in zip(values, freq)})

    @classmethod
    def parse(cls, text: str) -> "CountDistribution":
        """Read ``"1:0.5,2:0.25,3:0.25"``; weights are normalised."""
        pairs = [item.split(":") for item in text.replace(" ", "").split(",") if item]
        try:
            raw = {int(n): float(w) for n, w in pairs}
        except ValueError as exc:
            raise ValueError(f"bad count distribution {text!r}") from exc
        total = sum(raw.values())
        if total <= 0:
            raise ValueError(f"bad count distribution {text!r}")
        return cls({n: w / total for n, w in raw.items()})

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        n, p = self.arrays()
        return rng.choice(n.astype(np.int64), size=size, p=p / p.sum())


def fns_probability(q, counts: CountDistribution):
    """``sum_n q**n P(n)`` over the finite support of ``counts``; ``q`` may be an array."""
    q_arr = np.asarray(q, dtype=float)
    if np.any((q_arr < 0) | (q_arr > 1)):
        raise ValueError("q must lie in [0, 1]")
    n, p = counts.arrays()
    out = np.power(q_arr[..., None], n) @ p
    return float(out) if out.ndim == 0 else out


def _as_param_arrays(draws) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(draws, PosteriorDraws):
        flat = draws.flat()
        return flat[:, 0], flat[:, 1], flat[:, 2]
    if isinstance(draws, LogTParams):
        draws = [draws]
    rows = np.array([(d.mu, d.sigma, d.nu) for d in draws], dtype=float)
    return rows[:, 0], rows[:, 1], rows[:, 2]


class _MissIntegrator:
    """``q = E[P(B=0 | A)]`` for many size laws at once.

    Uses the by-parts form ``q = sum_j slope_j * int F`` over the nodes where
    the miss column changes; a larger pixel shifts every CDF up, so ``q`` is
    monotone in pixel area draw by draw.
    """

    def __init__(self, table: LikelihoodTable):
        if table.a_max < HIT_THRESHOLD:
            raise CoverageError("table must extend past the guaranteed-detection area 2*pi px")
        col = table.column(0)
        # last node still carrying miss probability, plus one
        last = int(np.flatnonzero(col > 0)[-1]) + 2 if np.any(col > 0) else 1
        last = min(max(last, 2), col.size)
        self.x = table.a_grid[:last]
        self.g = col[:last]
        with np.errstate(divide="ignore"):
            self.log_x = np.log(self.x)
            self.log_gl = np.log(gl_points(self.x))
        self.drop = -np.diff(self.g)

    def __call__(self, mu, sigma, nu) -> np.ndarray:
        mu, sigma, nu = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (mu, sigma, nu))
        out = np.empty(mu.size)
        for i in range(mu.size):
            F = std_cdf((self.log_x - mu[i]) / sigma[i], nu[i])
            Fgl = std_cdf((self.log_gl - mu[i]) / sigma[i], nu[i])
            out[i] = self.g[-1] * F[-1] + self.drop @ (Fgl @ _GL_W)
        return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class MissProbability:
    mean: float
    lower: float
    upper: float
    per_draw: np.ndarray


def p_b0_marginal(draws, table: LikelihoodTable) -> MissProbability:
    """Posterior mean and central 90% band of ``P(B = 0)`` at the table's pixel size."""
    mu, sigma, nu = _as_param_arrays(draws)
    q = _MissIntegrator(table)(mu - math.log(table.grid.pixel_area), sigma, nu)
    lo, hi = np.quantile(q, BAND)
    return MissProbability(float(q.mean()), float(lo), float(hi), q)


@dataclass(frozen=True)
class FnsCurve:
    px_values: np.ndarray
    p_b0: np.ndarray
    p_fns: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    p_b0_point: np.ndarray
    p_fns_point: np.ndarray

    def rows(self):
        for k in range(self.px_values.size):
            yield (self.px_values[k], self.p_b0[k], self.p_fns[k], self.lower[k], self.upper[k],
                   self.p_fns_point[k])


CURVE_COLUMNS = ("px_um2", "p_b0_mean", "p_fns_mean", "p_fns_lo90", "p_fns_hi90", "p_fns_point")


def fns_curve(draws, counts: CountDistribution, px_list, table: LikelihoodTable,
              max_draws: int = 1000) -> FnsCurve:
    """False-negative-sample probability over pixel sizes.

    ``table`` is used in pixel units for every pixel size (registration only
    depends on ``A / px``). Bands integrate parameter uncertainty; the
    ``point`` columns plug in the posterior-mean parameters instead.
    """
    px = np.asarray(px_list, dtype=float)
    if px.size == 0 or np.any(px <= 0):
        raise ValueError("pixel sizes must be positive and non-empty")
    if isinstance(draws, PosteriorDraws):
        params = draws.thinned(max_draws)
        point = draws.mean_params()
    else:
        params = [draws] if isinstance(draws, LogTParams) else list(draws)
        point = LogTParams(
            float(np.mean([p.mu for p in params])),
            float(np.mean([p.sigma for p in params])),
            float(np.mean([p.nu for p in params])),
        )
    mu, sigma, nu = _as_param_arrays(params)
    miss = _MissIntegrator(table)
    cols = {k: np.empty(px.size) for k in ("b0", "fns", "lo", "hi", "b0p", "fnsp")}
    for k, p in enumerate(px):
        q = miss(mu - math.log(p), sigma, nu)
        f = fns_probability(q, counts)
        cols["b0"][k] = q.mean()
        cols["fns"][k] = f.mean()
        cols["lo"][k], cols["hi"][k] = np.quantile(f, BAND)
        qp = miss(point.mu - math.log(p), point.sigma, point.nu)[0]
        cols["b0p"][k] = qp
        cols["fnsp"][k] = fns_probability(qp, counts)
    return FnsCurve(px, cols["b0"], cols["fns"], cols["lo"], cols["hi"], cols["b0p"], cols["fnsp"])


@dataclass(frozen=True)
class ValidationResult:
    px_target: float
    b_hat: np.ndarray
    bin_edges: np.ndarray
    predicted: np.ndarray
    observed: np.ndarray | None
    chi2: float | None
    dof: int | None


def pixel_bins(b_max: int, n_bins: int = 30) -> np.ndarray:
    """Integer-aligned, roughly log-spaced bin edges in pixel units from 1.

    Small counts keep their own bins, so unreachable counts show as gaps;
    scaling the edges by the pixel area gives comparable area bins across
    resolutions.
    """
    edges = np.unique(np.round(np.geomspace(1, max(b_max, 1) + 1, n_bins + 1)).astype(np.int64))
    return edges


def histogram(b: np.ndarray, edges: np.ndarray) -> np.ndarray:
    return np.histogram(np.asarray(b), bins=edges)[0].astype(float)


def chi2_distance(h1: np.ndarray, h2: np.ndarray) -> tuple[float, int]:
    """Two-sample chi-square statistic for binned counts with unequal totals."""
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    n1, n2 = h1.sum(), h2.sum()
    if n1 == 0 or n2 == 0:
        raise ValueError("cannot compare an empty histogram")
    k1, k2 = math.sqrt(n2 / n1), math.sqrt(n1 / n2)
    used = (h1 + h2) > 0
    stat = float(np.sum((k1 * h1[used] - k2 * h2[used]) ** 2 / (h1[used] + h2[used])))
    return stat, int(used.sum()) - 1


def push_to_resolution(areas, px_target: float, rng: np.random.Generator) -> np.ndarray:
    """Register each area (um^2) at a random position on a ``px_target`` grid."""
    a = np.asarray(areas, dtype=float) / px_target
    return register_many(a, rng.random(a.size), rng.random(a.size))


def validate_multiresolution(base_areas, px_min: float, px_targets, seed: int,
                             observed: dict | None = None, n_bins: int = 30) -> list[ValidationResult]:
    """Predict registered counts at coarser pixels from fine-resolution areas.

    Base-resolution areas are taken as true areas and re-registered at each
    target pixel size. ``observed`` optionally maps a target pixel size to
    measured areas (um^2) at that size; a chi-square distance on
    pixel-scaled bins is reported for those targets. Counts of zero are
    excluded from the histograms because undetected particles are never
    measured.
    """
    base = np.asarray(base_areas, dtype=float)
    if base.size == 0:
        raise ValueError("base measurements are empty")
    if np.any(base <= 0):
        raise ValueError("base areas must be positive")
    observed = observed or {}
    results = []
    for k, px in enumerate(px_targets):
        if px < px_min:
            raise ValueError(f"target pixel {px} finer than base pixel {px_min}")
        rng = _random.stream(seed, _random.VALIDATE, k)
        b_hat = push_to_resolution(base, px, rng)
        obs_b = None
        for key, vals in observed.items():
            if math.isclose(key, px, rel_tol=1e-9):
                obs_b = np.rint(np.asarray(vals, dtype=float) / px).astype(np.int64)
        top = int(max(b_hat.max(), obs_b.max() if obs_b is not None and obs_b.size else 0))
        edges = pixel_bins(top, n_bins)
        pred = histogram(b_hat[b_hat > 0], edges)
        obs_h = chi2 = dof = None
        if obs_b is not None:
            obs_h = histogram(obs_b[obs_b > 0], edges)
            if pred.sum() > 0 and obs_h.sum() > 0:
                chi2, dof = chi2_distance(pred, obs_h)
        results.append(ValidationResult(float(px), b_hat, edges, pred, obs_h, chi2, dof))
    return results
