"""Monte-Carlo detection likelihood ``P(B = b | A)`` on an area grid.

Areas in this module are in pixel units (``A / px``), so one table serves
every pixel size; the attached ``GridSpec`` only records which pixel size a
table was built for. Offsets are shared across all area bins (common random
numbers), which makes every row a deterministic function of the seed and
keeps ``P(B=0 | A)`` and the mean of ``B`` exactly monotone in ``A``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import sparse

from . import _random
from .grid_model import HIT_THRESHOLD, GridSpec, min_covered, register_many

SCHEMES = ("quasi-lattice", "pseudo-random")


@dataclass(frozen=True)
class LikelihoodTable:
    grid: GridSpec
    a_grid: np.ndarray
    probs: sparse.csr_array
    offsets_per_a: int
    seed: int
    offset_scheme: str = "quasi-lattice"

    @property
    def max_b(self) -> int:
        return self.probs.shape[1] - 1

    @property
    def a_max(self) -> float:
        return float(self.a_grid[-1])

    @property
    def a_steps(self) -> int:
        return int(self.a_grid.size)

    @property
    def reliable_max_b(self) -> int:
        """Largest ``b`` whose column is complete.

        Particles above ``a_max`` always register more than this many pixels,
        so truncating the area range loses no mass in columns up to here.
        """
        return min(self.max_b, min_covered(self.a_max) - 1)

    def dense(self) -> np.ndarray:
        return self.probs.toarray()

    def column(self, b: int) -> np.ndarray:
        if not 0 <= b <= self.max_b:
            raise IndexError(f"b={b} outside 0..{self.max_b}")
        return self.probs[:, [b]].toarray().ravel()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.probs.sum(axis=1)).ravel()


def draw_offsets(n: int, seed: int, scheme: str = "quasi-lattice") -> tuple[np.ndarray, np.ndarray]:
    """Offsets in ``[0, 1)^2``.

    ``quasi-lattice`` jitters one point inside each cell of the largest
    square lattice that fits in ``n`` and fills the remainder uniformly.
    """
    if n < 1:
        raise ValueError("offsets_per_a must be at least 1")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown offset scheme {scheme!r}; expected one of {SCHEMES}")
    rng = _random.stream(seed, _random.OFFSETS)
    if scheme == "pseudo-random":
        return rng.random(n), rng.random(n)
    k = math.isqrt(n)
    i, j = np.divmod(np.arange(k * k), k)
    u = np.concatenate([(i + rng.random(k * k)) / k, rng.random(n - k * k)])
    v = np.concatenate([(j + rng.random(k * k)) / k, rng.random(n - k * k)])
    # guard against (k-1 + 1-ulp)/k rounding up to 1.0
    return np.minimum(u, np.nextafter(1.0, 0.0)), np.minimum(v, np.nextafter(1.0, 0.0))


def _row(a: float, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    if a <= 0:
        return np.array([u.size], dtype=np.int64)
    return np.bincount(register_many(np.full(u.size, a), u, v))


def build_table_on(
    grid: GridSpec,
    a_grid,
    offsets_per_a: int,
    seed: int,
    scheme: str = "quasi-lattice",
    workers: int | None = None,
) -> LikelihoodTable:
    """Tabulate ``P(B = b | A)`` for every area in ``a_grid`` (pixel units)."""
    a_grid = np.asarray(a_grid, dtype=float)
    if a_grid.ndim != 1 or a_grid.size < 2:
        raise ValueError("a_grid needs at least two areas")
    if a_grid[0] < 0 or np.any(np.diff(a_grid) <= 0) or not np.all(np.isfinite(a_grid)):
        raise ValueError("a_grid must be finite, non-negative and strictly increasing")
    u, v = draw_offsets(offsets_per_a, seed, scheme)
    n_workers = _random.worker_count(workers)
    if n_workers == 1:
        counts = [_row(a, u, v) for a in a_grid]
    else:
        with ThreadPoolExecutor(n_workers) as pool:
            counts = list(pool.map(lambda a: _row(a, u, v), a_grid))
    width = max(c.size for c in counts)
    indptr = np.zeros(len(counts) + 1, dtype=np.int64)
    cols, vals = [], []
    for i, c in enumerate(counts):
        nz = np.flatnonzero(c)
        cols.append(nz)
        vals.append(c[nz] / offsets_per_a)
        indptr[i + 1] = indptr[i] + nz.size
    probs = sparse.csr_array(
        (np.concatenate(vals), np.concatenate(cols), indptr), shape=(len(counts), width)
    )
    return LikelihoodTable(grid, a_grid, probs, offsets_per_a, int(seed), scheme)


def build_table(
    grid: GridSpec,
    a_max: float = 12.0,
    a_steps: int = 600,
    offsets_per_a: int = 65536,
    seed: int = 0,
    scheme: str = "quasi-lattice",
    workers: int | None = None,
) -> LikelihoodTable:
    """Table on a uniform grid from 0 to ``a_max`` pixels."""
    if not (a_max > 0 and math.isfinite(a_max)):
        raise ValueError(f"a_max must be positive, got {a_max!r}")
    if a_steps < 2:
        raise ValueError("a_steps must be at least 2")
    a_grid = np.linspace(0.0, a_max, a_steps)
    return build_table_on(grid, a_grid, offsets_per_a, seed, scheme, workers)


def dense_threshold_grid(a_max: float = 12.0, a_steps: int = 600, refine: int = 4) -> np.ndarray:
    """Uniform grid with ``refine``-fold density between the two detection thresholds."""
    base = np.linspace(0.0, a_max, a_steps)
    lo, hi = math.pi / 2, min(HIT_THRESHOLD, a_max)
    step = a_max / (a_steps - 1) / refine
    fine = np.arange(lo, hi, step)
    return np.unique(np.concatenate([base, fine]))


def p_b0(table: LikelihoodTable, a) -> np.ndarray | float:
    """Interpolated ``P(B = 0 | A = a)``, ``a`` in pixel units.

    Linear interpolation between monotone nodes keeps the result monotone;
    areas beyond the table return 0.
    """
    a_arr = np.asarray(a, dtype=float)
    if np.any(a_arr < 0):
        raise ValueError("area must be non-negative")
    col = table.column(0)
    out = np.interp(a_arr, table.a_grid, col, right=0.0)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def likelihood_slice(table: LikelihoodTable, b: int):
    """``L(A | b)`` as a callable of ``A`` (pixel units); not normalised over ``A``."""
    if not 0 <= b <= table.max_b:
        raise ValueError(f"b={b} outside 0..{table.max_b}")
    col = table.column(b)
    a_grid = table.a_grid

    def slice_(a):
        out = np.interp(np.asarray(a, dtype=float), a_grid, col, right=0.0)
        return float(out) if out.ndim == 0 else out

    return slice_


@dataclass(frozen=True)
class MeanCurve:
    a_values: np.ndarray
    mean_b: np.ndarray
    mean_b_over_a: np.ndarray


def mean_curve(table: LikelihoodTable) -> MeanCurve:
    b = np.arange(table.max_b + 1, dtype=float)
    mean_b = np.asarray(table.probs @ b).ravel()
    a = table.a_grid
    ratio = np.divide(mean_b, a, out=np.zeros_like(mean_b), where=a > 0)
    return MeanCurve(a.copy(), mean_b, ratio)


class PosteriorSlice:
    """Normalised ``L(A | b) * prior(A)`` over ``[0, a_max]`` (pixel units)."""

    _nodes, _weights = leggauss(8)

    def __init__(self, table: LikelihoodTable, b: int, prior=None):
        self.b = b
        self._like = likelihood_slice(table, b)
        self._prior = prior if prior is not None else (lambda a: np.ones_like(np.asarray(a, dtype=float)))
        self.a_max = table.a_max
        lo, hi = table.a_grid[:-1], table.a_grid[1:]
        t = 0.5 * (self._nodes + 1.0)
        pts = lo[:, None] + (hi - lo)[:, None] * t[None, :]
        w = 0.5 * (hi - lo)[:, None] * self._weights[None, :]
        vals = self._like(pts) * self._prior(pts)
        if np.any(vals < 0):
            raise ValueError("prior must be non-negative")
        self.normalizer = float(np.sum(vals * w))
        if not self.normalizer > 0:
            raise ValueError(f"b={b} has zero posterior mass; it is unreachable on this table")
        self._pts, self._w = pts.ravel(), w.ravel()

    def __call__(self, a):
        a = np.asarray(a, dtype=float)
        inside = (a >= 0) & (a <= self.a_max)
        out = np.where(inside, self._like(np.clip(a, 0, self.a_max)) * self._prior(a), 0.0) / self.normalizer
        return float(out) if out.ndim == 0 else out

    def mean(self) -> float:
        return float(np.sum(self._pts * self(self._pts) * self._w))


def posterior_slice(table: LikelihoodTable, b: int, prior=None) -> PosteriorSlice:
    """``P(A | b)`` under ``prior`` (uniform on ``[0, a_max]`` when omitted)."""
    return PosteriorSlice(table, b, prior)


HEADER = ("pixel_area", "a_max", "a_steps", "offsets_per_a", "seed", "scheme")


def write_table(table: LikelihoodTable, fh, metadata: list[str] | None = None) -> None:
    for line in metadata or ():
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(HEADER)
    w.writerow([repr(table.grid.pixel_area), repr(table.a_max), table.a_steps,
                table.offsets_per_a, table.seed, table.offset_scheme])
    w.writerow(["a_value"] + [f"p_b{b}" for b in range(table.max_b + 1)])
    dense = table.dense()
    for a, row in zip(table.a_grid, dense):
        w.writerow([repr(float(a))] + [repr(float(p)) for p in row])


def read_table(fh) -> LikelihoodTable:
    lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(io.StringIO("".join(lines))))
    if len(rows) < 4 or tuple(rows[0]) != HEADER:
        raise ValueError("not a likelihood table file")
    px, _, _, n_off, seed, scheme = rows[1]
    body = np.array([[float(x) for x in r] for r in rows[3:] if r], dtype=float)
    return LikelihoodTable(
        GridSpec(float(px)), body[:, 0], sparse.csr_array(body[:, 1:]), int(n_off), int(seed), scheme
    )
