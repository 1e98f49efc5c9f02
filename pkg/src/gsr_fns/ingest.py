"""Particle record files: loading casework exports and writing synthetic ones.

The dialect is comma-separated UTF-8 with a mandatory header and columns
``sample_id, class, area_um2, pixel_area_um2``. Only rows of class
``characteristic`` are used; other columns are ignored. Lines starting
with ``#`` are metadata.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _random
from .fns import CountDistribution
from .grid_model import register_many
from .inference import DataError, ObservedDataset
from .sizedist import LogTParams, sample_with

COLUMNS = ("sample_id", "class", "area_um2", "pixel_area_um2")
CHARACTERISTIC = "characteristic"
SIDECAR_COLUMNS = ("sample_id", "true_area_um2", "registered_b_pixels")


class IngestError(DataError):
    """A particle record file cannot be turned into a dataset."""


@dataclass
class IngestReport:
    rows_in: int = 0
    rows_parsed: int = 0
    rows_bad: int = 0
    rows_other_class: int = 0
    n_samples: int = 0
    n_positive_samples: int = 0
    n_particles: int = 0
    bad_rows: list = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [
            f"rows_in = {self.rows_in}",
            f"rows_parsed = {self.rows_parsed}",
            f"rows_bad = {self.rows_bad}",
            f"rows_other_class = {self.rows_other_class}",
            f"n_samples = {self.n_samples}",
            f"n_positive_samples = {self.n_positive_samples}",
            f"n_particles = {self.n_particles}",
        ]
        out += [f"bad_row data_line={line}: {reason}" for line, reason in self.bad_rows]
        return out


@dataclass
class LoadResult:
    datasets: dict
    counts: CountDistribution | None
    report: IngestReport

    @property
    def dataset(self) -> ObservedDataset:
        if len(self.datasets) != 1:
            raise IngestError(f"file mixes {len(self.datasets)} pixel sizes")
        return next(iter(self.datasets.values()))


def _data_lines(fh):
    for line in fh:
        if not line.startswith("#"):
            yield line


def load(source, allow_mixed_pixels: bool = False, strict: bool = True) -> LoadResult:
    """Parse a particle record file into datasets, a count law and a report.

    ``source`` is a path or an open text stream. Rows that fail numeric
    parsing are always listed in the report; with ``strict`` they also abort
    the load. Files mixing pixel sizes are rejected unless
    ``allow_mixed_pixels``, in which case one dataset per pixel size is
    returned.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return _load(fh, allow_mixed_pixels, strict)
    return _load(source, allow_mixed_pixels, strict)


def _load(fh, allow_mixed_pixels, strict) -> LoadResult:
    reader = csv.DictReader(_data_lines(fh))
    if reader.fieldnames is None:
        raise IngestError("file is empty; a header row is required")
    missing = [c for c in COLUMNS if c not in reader.fieldnames]
    if missing:
        raise IngestError(f"missing columns: {', '.join(missing)}")
    report = IngestReport()
    samples: dict[str, int] = {}
    by_px: dict[float, tuple[list, list]] = {}
    for row in reader:
        report.rows_in += 1
        line = reader.line_num
        sid = (row.get("sample_id") or "").strip()
        try:
            if not sid:
                raise ValueError("empty sample_id")
            area = float(row["area_um2"])
            px = float(row["pixel_area_um2"])
            if not (math.isfinite(area) and math.isfinite(px)) or area < 0 or px <= 0:
                raise ValueError(f"area={row['area_um2']!r} pixel_area={row['pixel_area_um2']!r}")
        except (TypeError, ValueError) as exc:
            report.rows_bad += 1
            report.bad_rows.append((line, str(exc)))
            continue
        report.rows_parsed += 1
        samples.setdefault(sid, 0)
        if (row.get("class") or "").strip().lower() != CHARACTERISTIC:
            report.rows_other_class += 1
            continue
        samples[sid] += 1
        ids, areas = by_px.setdefault(px, ([], []))
        ids.append(sid)
        areas.append(area)
    if strict and report.rows_bad:
        first = "; ".join(f"data line {ln}: {why}" for ln, why in report.bad_rows[:5])
        raise IngestError(f"{report.rows_bad} malformed rows ({first})")
    if len(by_px) > 1 and not allow_mixed_pixels:
        raise IngestError(f"mixed pixel sizes {sorted(by_px)}; per-record pixel areas not permitted")
    datasets = {}
    for px, (ids, areas) in by_px.items():
        try:
            datasets[px] = ObservedDataset(tuple(ids), np.asarray(areas), px)
        except DataError as exc:
            raise IngestError(str(exc)) from exc
    counts = [c for c in samples.values() if c > 0]
    report.n_samples = len(samples)
    report.n_positive_samples = len(counts)
    report.n_particles = sum(counts)
    return LoadResult(datasets, CountDistribution.from_counts(counts) if counts else None, report)


@dataclass
class SyntheticExport:
    """Detected records plus the ground truth they came from."""

    pixel_area: float
    sample_ids: list
    true_area: np.ndarray
    b_pixels: np.ndarray
    n_samples: int

    @property
    def detected(self) -> np.ndarray:
        return self.b_pixels >= 1

    @property
    def dropped(self) -> int:
        return int((~self.detected).sum())

    @property
    def vanished_samples(self) -> int:
        """Samples whose every particle registered nothing (false negative samples)."""
        hit = {s for s, d in zip(self.sample_ids, self.detected) if d}
        return self.n_samples - len(hit)

    def records_text(self, metadata: list[str] | None = None) -> str:
        buf = io.StringIO()
        for line in metadata or ():
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for sid, b in zip(self.sample_ids, self.b_pixels):
            if b >= 1:
                w.writerow([sid, CHARACTERISTIC, repr(float(b * self.pixel_area)), repr(self.pixel_area)])
        return buf.getvalue()

    def sidecar_text(self, metadata: list[str] | None = None) -> str:
        buf = io.StringIO()
        for line in metadata or ():
            buf.write(f"# {line}\n")
        buf.write(f"# particles = {self.b_pixels.size}\n")
        buf.write(f"# dropped_particles = {self.dropped}\n")
        buf.write(f"# samples = {self.n_samples}\n")
        buf.write(f"# vanished_samples = {self.vanished_samples}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SIDECAR_COLUMNS)
        for sid, a, b in zip(self.sample_ids, self.true_area, self.b_pixels):
            w.writerow([sid, repr(float(a)), int(b)])
        return buf.getvalue()


def generate_synthetic(params: LogTParams, counts: CountDistribution, n_samples: int, px: float,
                       seed: int) -> SyntheticExport:
    """Simulate ``n_samples`` casework samples registered at pixel area ``px``."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if not px > 0:
        raise ValueError("pixel area must be positive")
    rng = _random.stream(seed, _random.SYNTHETIC)
    per_sample = counts.sample(rng, n_samples)
    total = int(per_sample.sum())
    areas = sample_with(rng, params, total)
    b = register_many(areas / px, rng.random(total), rng.random(total))
    width = len(str(n_samples))
    ids = [f"S{k:0{width}d}" for k, n in enumerate(per_sample, start=1) for _ in range(n)]
    return SyntheticExport(float(px), ids, areas, b, n_samples)


def detected_sample(params: LogTParams, px: float, n_detected: int, seed: int) -> np.ndarray:
    """Registered pixel counts of the first ``n_detected`` particles that register at all."""
    rng = _random.stream(seed, _random.SYNTHETIC, 1)
    out = []
    have = 0
    batch = max(1024, 2 * n_detected)
    while have < n_detected:
        a = sample_with(rng, params, batch)
        b = register_many(a / px, rng.random(batch), rng.random(batch))
        b = b[b >= 1]
        out.append(b)
        have += b.size
    return np.concatenate(out)[:n_detected]
