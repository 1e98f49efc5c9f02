"""Registration of a circular particle on a square pixel grid.

A pixel is registered only when it lies entirely inside the particle disk, so
the instrument reports an eroded area ``B = covered_pixels * pixel_area``
that is never larger than the true area ``A``.

Everything is computed in pixel units internally: the center offset is
divided by the pixel side and the radius becomes ``sqrt(A / (pi * px))``.
Registration therefore depends only on ``A / px`` and the scaled offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# absolute slack on corner distances, in units of the pixel side
CORNER_SLACK = 1e-12

#: below this area ratio no offset can cover a pixel (disk of diameter sqrt(2))
MISS_THRESHOLD = math.pi / 2
#: above this area ratio every offset covers at least one pixel
HIT_THRESHOLD = 2 * math.pi


@dataclass(frozen=True)
class GridSpec:
    """Square pixel grid with pixel area ``pixel_area`` (um^2)."""

    pixel_area: float

    def __post_init__(self):
        if not (self.pixel_area > 0 and math.isfinite(self.pixel_area)):
            raise ValueError(f"pixel_area must be positive, got {self.pixel_area!r}")

    @property
    def pixel_side(self) -> float:
        return math.sqrt(self.pixel_area)


@dataclass(frozen=True)
class Particle:
    """Circular particle of true area ``area`` (um^2)."""

    area: float

    def __post_init__(self):
        if not (self.area > 0 and math.isfinite(self.area)):
            raise ValueError(f"particle area must be positive, got {self.area!r}")

    @property
    def radius(self) -> float:
        return math.sqrt(self.area / math.pi)


@dataclass(frozen=True)
class Offset:
    """Particle center position inside one grid period, in um."""

    u: float
    v: float

    def check(self, grid: GridSpec) -> None:
        side = grid.pixel_side
        if not (0 <= self.u < side and 0 <= self.v < side):
            raise ValueError(
                f"offset ({self.u}, {self.v}) outside [0, {side}) for pixel area {grid.pixel_area}"
            )


@dataclass(frozen=True)
class Registration:
    covered_pixels: int
    pixel_area: float

    @property
    def area_b(self) -> float:
        return self.covered_pixels * self.pixel_area


def covered_counts(radius, u, v) -> np.ndarray:
    """Count fully covered unit pixels for disks centred at ``(u, v)``.

    Works on a unit grid whose pixels are ``[i, i+1] x [j, j+1]``. ``radius``,
    ``u`` and ``v`` broadcast against each other. Within a pixel column the
    corners farthest from the centre line decide containment, so each column
    contributes the number of whole rows inside the chord of half-height
    ``sqrt(r^2 - dx^2)``, where ``dx`` is the larger horizontal corner distance.
    """
    radius, u, v = np.broadcast_arrays(
        np.asarray(radius, dtype=float), np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    )
    out = np.zeros(radius.shape, dtype=np.int64)
    if radius.size == 0:
        return out
    # the grid repeats every pixel, so only the position within one pixel matters
    u = u - np.floor(u)
    v = v - np.floor(v)
    reach = radius + CORNER_SLACK
    reach2 = reach * reach
    span = int(math.ceil(float(reach.max()))) + 1
    for i in range(-span, span + 1):
        dx = np.maximum(np.abs(i - u), np.abs(i + 1 - u))
        h2 = reach2 - dx * dx
        ok = h2 >= 0
        if not ok.any():
            continue
        h = np.sqrt(np.where(ok, h2, 0.0))
        rows = np.floor(v + h) - np.ceil(v - h)
        out += np.where(ok & (rows > 0), rows, 0).astype(np.int64)
    return out


def register_many(area_ratio, u, v, chunk: int = 1 << 16) -> np.ndarray:
    """Vectorised registration on a unit grid.

    ``area_ratio`` is ``A / px`` and ``u, v`` are offsets in pixel units. Work
    is done in chunks sorted by radius so a few huge particles do not force
    every element through the widest column sweep.
    """
    area_ratio = np.asarray(area_ratio, dtype=float)
    u = np.broadcast_to(np.asarray(u, dtype=float), area_ratio.shape).ravel()
    v = np.broadcast_to(np.asarray(v, dtype=float), area_ratio.shape).ravel()
    flat = area_ratio.ravel()
    if np.any(flat < 0) or not np.all(np.isfinite(flat)):
        raise ValueError("area ratios must be finite and non-negative")
    radius = np.sqrt(flat / math.pi)
    order = np.argsort(radius, kind="stable")
    out = np.empty(flat.shape, dtype=np.int64)
    for start in range(0, flat.size, chunk):
        idx = order[start:start + chunk]
        out[idx] = covered_counts(radius[idx], u[idx], v[idx])
    return out.reshape(area_ratio.shape)


def register(particle: Particle, grid: GridSpec, offset: Offset) -> Registration:
    """Registered (eroded) area of one particle at one grid position."""
    offset.check(grid)
    side = grid.pixel_side
    n = covered_counts(particle.radius / side, offset.u / side, offset.v / side)
    return Registration(int(n), grid.pixel_area)


def register_dimensionless(area_ratio: float, offset: tuple[float, float] = (0.0, 0.0)) -> int:
    """Covered pixel count on a unit grid for a particle of area ``area_ratio`` pixels."""
    if not area_ratio > 0:
        raise ValueError(f"area_ratio must be positive, got {area_ratio!r}")
    u, v = offset
    return register(Particle(area_ratio), GridSpec(1.0), Offset(u, v)).covered_pixels


def min_covered(area_ratio: float) -> int:
    """Lower bound on covered pixels valid for every offset.

    Any pixel meeting the disk of radius ``r - sqrt(2)`` lies inside the disk
    of radius ``r``; those pixels cover the smaller disk, hence the bound.
    """
    hit = 1 if area_ratio >= HIT_THRESHOLD else 0
    r = math.sqrt(area_ratio / math.pi) - math.sqrt(2)
    if r <= 0:
        return hit
    return max(hit, int(math.floor(math.pi * r * r)))
