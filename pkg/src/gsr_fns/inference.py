"""Fitting the log-t size law to registered areas.

The observation model pushes a log-t law for the true area through the
detection likelihood: ``P(b | theta) = int P(b | A) lt(A | theta) dA``.
Casework data never contain ``b = 0`` particles, so by default each record
contributes ``P(b | theta) / (1 - P(0 | theta))``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _random, mcmc
from .grid_model import GridSpec, min_covered
from .likelihood import LikelihoodTable, build_table_on
from .quadrature import CdfIntegrals, gl_points
from .sizedist import LogTParams, std_cdf

RHAT_LIMIT = 1.05

# weakly informative priors on (mu, log sigma, log nu); nu truncated above 1
PRIOR_MU = (0.0, 10.0)
PRIOR_LOG_SIGMA = (0.0, 1.5)
PRIOR_LOG_NU = (math.log(30.0), 1.0)


class DataError(ValueError):
    """Observed data violate the dataset contract."""


class CoverageError(DataError):
    """A likelihood table does not cover the areas a computation needs."""


@dataclass(frozen=True)
class ObservedDataset:
    sample_ids: tuple[str, ...]
    b_area: np.ndarray
    pixel_area: float
    b_pixels: np.ndarray = field(init=False)
    allow_zero: bool = False

    def __post_init__(self):
        b_area = np.asarray(self.b_area, dtype=float)
        if b_area.ndim != 1 or len(self.sample_ids) != b_area.size:
            raise DataError("sample_ids and b_area must be parallel 1-d sequences")
        if not self.pixel_area > 0:
            raise DataError("pixel area must be positive")
        b = np.rint(b_area / self.pixel_area).astype(np.int64)
        if np.any(np.abs(b_area - b * self.pixel_area) > 0.5 * self.pixel_area + 1e-12):
            raise DataError("recorded areas are not on the pixel lattice")
        if not self.allow_zero and np.any(b < 1):
            raise DataError("registered areas must cover at least one pixel")
        if np.any(b < 0):
            raise DataError("registered areas must be non-negative")
        object.__setattr__(self, "b_area", b_area)
        object.__setattr__(self, "b_pixels", b)

    @classmethod
    def from_pixels(cls, b_pixels, pixel_area, sample_ids=None, allow_zero=False):
        b_pixels = np.asarray(b_pixels, dtype=np.int64)
        ids = tuple(sample_ids) if sample_ids is not None else tuple(str(i) for i in range(b_pixels.size))
        return cls(ids, b_pixels * float(pixel_area), float(pixel_area), allow_zero=allow_zero)

    def __len__(self):
        return int(self.b_pixels.size)


def fit_grid(b_max: int, uniform_max: float = 12.0, uniform_steps: int = 600) -> np.ndarray:
    """Area nodes (pixel units) for fitting data whose largest count is ``b_max``.

    Uniform up to ``uniform_max``; beyond that the spacing grows like
    ``sqrt(A) / 20``, which keeps several nodes inside the spread of areas
    that register any given count; coarser spacing aliases the per-count
    pmf. The grid ends where every offset is guaranteed to cover more than
    ``b_max`` pixels.
    """
    a_end = math.pi * (math.sqrt((b_max + 2) / math.pi) + math.sqrt(2)) ** 2
    nodes = list(np.linspace(0.0, uniform_max, uniform_steps))
    a = uniform_max
    while min_covered(a) - 1 < b_max or a < a_end:
        a += 0.05 * math.sqrt(a)
        nodes.append(a)
    return np.asarray(nodes)


def fit_table(pixel_area: float, b_max: int, offsets_per_a: int = 4096, seed: int = 0,
              workers: int | None = None) -> LikelihoodTable:
    """Likelihood table covering every count up to ``b_max``."""
    return build_table_on(GridSpec(pixel_area), fit_grid(b_max), offsets_per_a, seed, workers=workers)


def _check_coverage(table: LikelihoodTable, b_max: int):
    if table.reliable_max_b < b_max:
        raise CoverageError(
            f"table reaches A={table.a_max:.1f} px and is complete only up to b={table.reliable_max_b}; "
            f"data need b={b_max}"
        )


class _LogGrid:
    """Log-t CDF on a fixed node grid, in pixel units."""

    def __init__(self, x: np.ndarray):
        self.x = x
        with np.errstate(divide="ignore"):
            self.log_x = np.log(x)
            self.log_gl = np.log(gl_points(x))

    def integrals(self, params: LogTParams) -> CdfIntegrals:
        f = (self.log_x - params.mu) / params.sigma
        g = (self.log_gl - params.mu) / params.sigma
        return CdfIntegrals(self.x, std_cdf(f, params.nu), std_cdf(g, params.nu))


@dataclass(frozen=True)
class MarginalPmf:
    """``P(b | theta)`` for ``b = 0..len(probs)-1``; ``tail`` is the mass above."""

    probs: np.ndarray
    tail: float

    def truncated(self) -> np.ndarray:
        """Pmf conditional on detection (``b >= 1``); entry 0 is zero."""
        out = self.probs.copy()
        out[0] = 0.0
        return out / (1.0 - self.probs[0])


def marginal_b_pmf(params: LogTParams, table: LikelihoodTable) -> MarginalPmf:
    """Distribution of registered pixel counts for areas drawn from ``params``.

    ``params`` is in physical units (log um^2); the table's pixel area
    converts it. Counts above ``table.reliable_max_b`` could also come from
    areas beyond the table and are lumped into ``tail``.
    """
    local = params.rescaled(table.grid.pixel_area)
    if table.a_max < math.pi * 2:
        raise CoverageError("table must extend past the guaranteed-detection area 2*pi px")
    q = _LogGrid(table.a_grid).integrals(local)
    full = np.asarray(table.probs.T @ q.node_weights()).ravel()
    keep = max(table.reliable_max_b, 0) + 1
    probs = full[:keep]
    return MarginalPmf(probs, float(max(0.0, 1.0 - probs.sum())))


class LogPosterior:
    """Unnormalised log posterior over ``(mu, log sigma, log nu)``."""

    def __init__(self, data: ObservedDataset, table: LikelihoodTable, truncated: bool = True):
        if len(data) == 0:
            raise DataError("no observations to fit")
        if not math.isclose(data.pixel_area, table.grid.pixel_area, rel_tol=1e-9):
            raise DataError(
                f"data pixel area {data.pixel_area} does not match table pixel area {table.grid.pixel_area}"
            )
        values, counts = np.unique(data.b_pixels, return_counts=True)
        _check_coverage(table, int(values[-1]))
        if truncated and values[0] == 0:
            raise DataError("truncated fit cannot use b = 0 records")
        self.truncated = truncated
        self.values = values
        self.counts = counts.astype(float)
        self.n = float(counts.sum())
        self.log_px = math.log(table.grid.pixel_area)
        cols = self.values.tolist()
        if truncated:
            cols = [0] + cols
        self._kernel = table.probs[:, cols].T.tocsr()
        self._grid = _LogGrid(table.a_grid)

    def params(self, theta) -> LogTParams:
        return LogTParams(float(theta[0]), math.exp(theta[1]), math.exp(theta[2]))

    def log_prior(self, theta) -> float:
        mu, ls, ln = theta
        if ln <= 0:
            return -math.inf
        return (
            -0.5 * ((mu - PRIOR_MU[0]) / PRIOR_MU[1]) ** 2
            - 0.5 * ((ls - PRIOR_LOG_SIGMA[0]) / PRIOR_LOG_SIGMA[1]) ** 2
            - 0.5 * ((ln - PRIOR_LOG_NU[0]) / PRIOR_LOG_NU[1]) ** 2
        )

    def log_likelihood(self, theta) -> float:
        local = LogTParams(float(theta[0]) - self.log_px, math.exp(theta[1]), math.exp(theta[2]))
        c = self._grid.integrals(local).node_weights()
        p = self._kernel @ c
        if self.truncated:
            detect = 1.0 - p[0]
            if detect <= 0:
                return -math.inf
            p = p[1:]
        with np.errstate(divide="ignore"):
            ll = float(self.counts @ np.log(p))
        if self.truncated:
            ll -= self.n * math.log(detect)
        return ll if math.isfinite(ll) else -math.inf

    def __call__(self, theta) -> float:
        lp = self.log_prior(theta)
        if not math.isfinite(lp):
            return lp
        if not (abs(theta[0]) < 50 and abs(theta[1]) < 5 and theta[2] < 12):
            return -math.inf
        return lp + self.log_likelihood(theta)


@dataclass
class PosteriorDraws:
    """Post-warmup draws, shape ``(chains, iterations)`` per parameter."""

    mu: np.ndarray
    sigma: np.ndarray
    nu: np.ndarray
    acceptance: np.ndarray
    pixel_area: float
    seed: int
    truncated: bool = True
    rhat: dict = field(init=False)
    ess: dict = field(init=False)

    def __post_init__(self):
        self.rhat = {k: mcmc.split_rhat(getattr(self, k)) for k in ("mu", "sigma", "nu")}
        self.ess = {k: mcmc.ess(getattr(self, k)) for k in ("mu", "sigma", "nu")}

    @property
    def n_chains(self) -> int:
        return self.mu.shape[0]

    @property
    def n_iter(self) -> int:
        return self.mu.shape[1]

    @property
    def chain_id(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_chains), self.n_iter)

    @property
    def converged(self) -> bool:
        return all(v < RHAT_LIMIT for v in self.rhat.values())

    @property
    def max_rhat(self) -> float:
        return max(self.rhat.values())

    @property
    def draws(self) -> list[LogTParams]:
        return [LogTParams(m, s, n) for m, s, n in zip(self.mu.ravel(), self.sigma.ravel(), self.nu.ravel())]

    def flat(self) -> np.ndarray:
        """``(n_draws, 3)`` array of ``(mu, sigma, nu)`` in chain-major order."""
        return np.column_stack([self.mu.ravel(), self.sigma.ravel(), self.nu.ravel()])

    def thinned(self, max_draws: int) -> list[LogTParams]:
        flat = self.flat()
        step = max(1, math.ceil(len(flat) / max_draws))
        return [LogTParams(*row) for row in flat[::step]]

    def mean_params(self) -> LogTParams:
        return LogTParams(float(self.mu.mean()), float(self.sigma.mean()), float(self.nu.mean()))


def _starting_point(data: ObservedDataset, rng) -> np.ndarray:
    logs = np.log(np.maximum(data.b_pixels, 1) * data.pixel_area)
    mu0 = float(np.mean(logs))
    ls0 = math.log(max(float(np.std(logs)), 0.1))
    return np.array([
        mu0 + 0.3 * rng.standard_normal(),
        ls0 + 0.2 * rng.standard_normal(),
        max(0.2, PRIOR_LOG_NU[0] + rng.standard_normal()),
    ])


def _run_chain(logp, data, chain, iterations, warmup, seed):
    rng = _random.stream(seed, _random.CHAIN, chain)
    x0 = _starting_point(data, rng)
    while not math.isfinite(logp(x0)):
        x0 = _starting_point(data, rng)
    draws, _, rate = mcmc.adaptive_metropolis(
        logp, x0, iterations, warmup, rng, scale0=np.array([0.03, 0.03, 0.3])
    )
    return draws, rate


def fit(
    data: ObservedDataset,
    table: LikelihoodTable | None = None,
    chains: int = 4,
    iterations: int = 2000,
    warmup: int = 1000,
    seed: int = 0,
    truncated: bool = True,
    workers: int | None = None,
) -> PosteriorDraws:
    """Sample the posterior of the size law given registered counts.

    When ``table`` is omitted a fitting table covering the data is built with
    the same seed. Non-convergence is reported through ``converged`` and
    ``rhat`` on the result rather than raised.
    """
    if len(data) == 0:
        raise DataError("no observations to fit")
    if chains < 1 or iterations < 1 or warmup < 0:
        raise ValueError("need chains >= 1, iterations >= 1, warmup >= 0")
    if table is None:
        table = fit_table(data.pixel_area, int(data.b_pixels.max()), seed=seed, workers=workers)
    logp = LogPosterior(data, table, truncated)
    n_workers = min(chains, _random.worker_count(workers))
    run = lambda k: _run_chain(logp, data, k, iterations, warmup, seed)  # noqa: E731
    if n_workers == 1:
        results = [run(k) for k in range(chains)]
    else:
        with ThreadPoolExecutor(n_workers) as pool:
            results = list(pool.map(run, range(chains)))
    samples = np.stack([r[0] for r in results])
    return PosteriorDraws(
        mu=samples[:, :, 0],
        sigma=np.exp(samples[:, :, 1]),
        nu=np.exp(samples[:, :, 2]),
        acceptance=np.array([r[1] for r in results]),
        pixel_area=data.pixel_area,
        seed=int(seed),
        truncated=truncated,
    )


@dataclass(frozen=True)
class FitSummary:
    mean: dict
    sd: dict
    r_squared: float
    rhat: dict
    ess: dict
    n_obs: int
    bin_edges: np.ndarray
    observed: np.ndarray
    predicted: np.ndarray

    def as_text(self) -> str:
        lines = []
        for k in ("mu", "sigma", "nu"):
            lines.append(f"{k}_mean = {float(self.mean[k])!r}")
            lines.append(f"{k}_sd = {float(self.sd[k])!r}")
        for k in ("mu", "sigma", "nu"):
            lines.append(f"{k}_rhat = {float(self.rhat[k])!r}")
            lines.append(f"{k}_ess = {float(self.ess[k])!r}")
        lines.append(f"r_squared = {float(self.r_squared)!r}")
        lines.append(f"n_obs = {self.n_obs}")
        return "\n".join(lines) + "\n"


def log_bins(b_pixels, n_bins: int = 25) -> np.ndarray:
    lo, hi = float(np.min(b_pixels)), float(np.max(b_pixels)) + 1.0
    return np.geomspace(lo, hi, n_bins + 1)


def binned(pmf_or_counts: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Sum a vector indexed by integer ``b`` over ``[edge_k, edge_k+1)``."""
    b = np.arange(pmf_or_counts.size)
    idx = np.searchsorted(edges, b, side="right") - 1
    ok = (idx >= 0) & (idx < edges.size - 1)
    return np.bincount(idx[ok], weights=pmf_or_counts[ok], minlength=edges.size - 1)


def r_squared(observed: np.ndarray, predicted: np.ndarray) -> float:
    ss_res = float(np.sum((observed - predicted) ** 2))
    ss_tot = float(np.sum((observed - observed.mean()) ** 2))
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else -math.inf
    return 1.0 - ss_res / ss_tot


def predictive_pmf(draws, table: LikelihoodTable, truncated: bool = True, max_draws: int = 200) -> np.ndarray:
    """Posterior-mean pmf of registered counts."""
    params = draws.thinned(max_draws) if isinstance(draws, PosteriorDraws) else list(draws)
    acc = None
    for p in params:
        m = marginal_b_pmf(p, table)
        pmf = m.truncated() if truncated else m.probs
        acc = pmf if acc is None else acc + pmf
    return acc / len(params)


def goodness_of_fit(draws: PosteriorDraws, data: ObservedDataset, table: LikelihoodTable | None = None,
                    n_bins: int = 25) -> FitSummary:
    """Explained variance of the binned count histogram under the posterior-mean pmf."""
    b_max = int(data.b_pixels.max())
    if table is None:
        table = fit_table(data.pixel_area, b_max, seed=draws.seed)
    _check_coverage(table, b_max)
    pmf = predictive_pmf(draws, table, truncated=draws.truncated)
    edges = log_bins(data.b_pixels, n_bins)
    obs = binned(np.bincount(data.b_pixels).astype(float), edges)
    pred = len(data) * binned(pmf, edges)
    flat = draws.flat()
    names = ("mu", "sigma", "nu")
    return FitSummary(
        mean={k: float(flat[:, i].mean()) for i, k in enumerate(names)},
        sd={k: float(flat[:, i].std(ddof=1)) for i, k in enumerate(names)},
        r_squared=r_squared(obs, pred),
        rhat=dict(draws.rhat),
        ess=dict(draws.ess),
        n_obs=len(data),
        bin_edges=edges,
        observed=obs,
        predicted=pred,
    )


POSTERIOR_COLUMNS = ("chain", "iteration", "mu", "sigma", "nu")


def write_posterior(draws: PosteriorDraws, fh, metadata: list[str] | None = None) -> None:
    for line in metadata or ():
        fh.write(f"# {line}\n")
    fh.write(",".join(POSTERIOR_COLUMNS) + "\n")
    for c in range(draws.n_chains):
        for i in range(draws.n_iter):
            fh.write(f"{c},{i},{float(draws.mu[c, i])!r},{float(draws.sigma[c, i])!r},{float(draws.nu[c, i])!r}\n")


def read_posterior(fh, pixel_area: float = float("nan"), seed: int = 0) -> PosteriorDraws:
    rows = [ln.strip().split(",") for ln in fh if ln.strip() and not ln.startswith("#")]
    if not rows or tuple(rows[0]) != POSTERIOR_COLUMNS:
        raise DataError(f"posterior file must start with header {','.join(POSTERIOR_COLUMNS)}")
    try:
        body = np.array([[float(x) for x in r] for r in rows[1:]])
    except ValueError as exc:
        raise DataError(f"malformed posterior row: {exc}") from exc
    if body.size == 0:
        raise DataError("posterior file has no draws")
    chains = np.unique(body[:, 0])
    per = [body[body[:, 0] == c] for c in chains]
    n = min(len(p) for p in per)
    stack = np.stack([p[np.argsort(p[:, 1], kind="stable")][:n] for p in per])
    return PosteriorDraws(stack[:, :, 2], stack[:, :, 3], stack[:, :, 4],
                          acceptance=np.full(len(chains), np.nan), pixel_area=pixel_area, seed=seed)
