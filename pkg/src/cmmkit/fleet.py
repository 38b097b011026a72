"""Fleet-scale spatial accuracy evaluation.

Ingests trip records (or synthesizes them on a road network), estimates
a space-time vehicle density with per-cell heading histograms, and maps
each grid cell to the root-mean-square common-error estimate achievable
by the vehicles within communication range.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .error_models import NoiseModel
from .estimators import expected_sq_error_linear, linearize, scenario_from_angles
from .geometry import GeometryError, TWO_PI, Vec2, canonical_angle
from .seeding import STREAM_IDS, substream

EARTH_RADIUS_M = 6378137.0
HEADING_BINS = 16

XY_HEADER = ["device_id", "timestamp_utc", "x_m", "y_m", "heading_rad"]
LATLON_HEADER = ["device_id", "timestamp_utc", "lat", "lon", "heading_deg"]


class IngestError(Exception):
    """Unreadable source or too many malformed rows."""


@dataclass(frozen=True)
class TripRecord:
    device_id: str
    timestamp: float
    position: Vec2
    heading: float

    def __post_init__(self):
        if not (
            math.isfinite(self.timestamp)
            and math.isfinite(self.position.x)
            and math.isfinite(self.position.y)
            and math.isfinite(self.heading)
        ):
            raise ValueError("trip record fields must be finite")


@dataclass(frozen=True)
class IngestStats:
    rows_total: int
    rows_valid: int
    malformed_rows: int
    normalized_headings: int
    origin_latlon: tuple[float, float] | None


def _latlon_to_local(lat: float, lon: float, lat0: float, lon0: float) -> Vec2:
    x = EARTH_RADIUS_M * math.cos(math.radians(lat0)) * math.radians(lon - lon0)
    y = EARTH_RADIUS_M * math.radians(lat - lat0)
    return Vec2(x, y)


def ingest_trips(source: str | Path, origin: tuple[float, float] | None = None):
    """Parse a trip CSV into records plus ingestion statistics.

    Two header schemas are auto-detected: local meters with radian
    headings, or lat/lon with degree headings (projected onto a local
    tangent plane anchored at `origin`, defaulting to the first valid
    row). Headings outside [0, 2 pi) are normalized and counted.
    Malformed rows are skipped; more than 10% of them is a hard failure.
    """
    path = Path(source)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return [], IngestStats(0, 0, 0, 0, None)
        if header == XY_HEADER:
            latlon = False
        elif header == LATLON_HEADER:
            latlon = True
        else:
            raise IngestError(f"unrecognized header {header!r}")
        records: list[TripRecord] = []
        total = 0
        malformed = 0
        normalized = 0
        origin_used = origin
        for row in reader:
            total += 1
            try:
                if len(row) != 5:
                    raise ValueError("wrong column count")
                device = row[0]
                ts = float(row[1])
                a, b, h = float(row[2]), float(row[3]), float(row[4])
                if latlon:
                    if origin_used is None:
                        origin_used = (a, b)
                    pos = _latlon_to_local(a, b, origin_used[0], origin_used[1])
                    heading = math.radians(h)
                else:
                    pos = Vec2(a, b)
                    heading = h
                wrapped = canonical_angle(heading)
                if not (0.0 <= heading < TWO_PI):
                    normalized += 1
                records.append(TripRecord(device, ts, pos, wrapped))
            except (ValueError, TypeError):
                malformed += 1
    if total > 0 and malformed / total > 0.10:
        raise IngestError(f"{malformed}/{total} rows malformed")
    stats = IngestStats(total, len(records), malformed, normalized, origin_used if latlon else None)
    return records, stats


def export_trips(path: str | Path, records: Iterable[TripRecord]) -> None:
    """Write records in the local-meters schema with round-trip-exact floats."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(XY_HEADER)
        for r in records:
            writer.writerow(
                [
                    r.device_id,
                    repr(float(r.timestamp)),
                    repr(float(r.position.x)),
                    repr(float(r.position.y)),
                    repr(float(r.heading)),
                ]
            )


@dataclass(frozen=True)
class RoadSegment:
    start: Vec2
    end: Vec2
    heading: float

    def __post_init__(self):
        object.__setattr__(self, "heading", canonical_angle(self.heading))

    def length(self) -> float:
        return (self.end - self.start).norm()


def synth_fleet(
    network: Sequence[RoadSegment],
    intensity: float | Sequence[float],
    hours: int,
    seed: int,
    reversal_prob: float = 0.5,
    hour_profile: Sequence[float] | None = None,
) -> list[TripRecord]:
    """Poisson-sprinkle vehicles along road segments.

    intensity is the expected vehicle count per segment and hour (scalar
    or per segment); hour_profile optionally modulates it per hour of
    day. Headings follow the segment, reversed with reversal_prob.
    """
    if len(network) == 0:
        raise ValueError("network needs at least one segment")
    lam = np.broadcast_to(np.asarray(intensity, dtype=float), (len(network),))
    records: list[TripRecord] = []
    counter = 0
    for h in range(hours):
        factor = 1.0 if hour_profile is None else float(hour_profile[h % len(hour_profile)])
        for si, seg in enumerate(network):
            rng = substream(seed, STREAM_IDS["synth"], h, si)
            count = rng.poisson(lam[si] * factor)
            if count == 0:
                continue
            t = rng.uniform(0.0, 1.0, count)
            ts = h * 3600.0 + rng.uniform(0.0, 3600.0, count)
            reverse = rng.uniform(0.0, 1.0, count) < reversal_prob
            for k in range(count):
                pos = Vec2(
                    float(seg.start.x + t[k] * (seg.end.x - seg.start.x)),
                    float(seg.start.y + t[k] * (seg.end.y - seg.start.y)),
                )
                heading = canonical_angle(seg.heading + (math.pi if reverse[k] else 0.0))
                records.append(TripRecord(f"veh{counter:07d}", float(ts[k]), pos, heading))
                counter += 1
    return records


def grid_city_network(
    nx: int, ny: int, spacing: float, origin: Vec2 = Vec2(0.0, 0.0)
) -> list[RoadSegment]:
    """Orthogonal street grid: nx vertical and ny horizontal roads."""
    segs: list[RoadSegment] = []
    width = (nx - 1) * spacing
    height = (ny - 1) * spacing
    for i in range(nx):
        x = origin.x + i * spacing
        segs.append(RoadSegment(Vec2(x, origin.y), Vec2(x, origin.y + height), math.pi / 2))
    for j in range(ny):
        y = origin.y + j * spacing
        segs.append(RoadSegment(Vec2(origin.x, y), Vec2(origin.x + width, y), 0.0))
    return segs


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    y_min: float
    cell_size: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.cell_size <= 0 or self.nx < 1 or self.ny < 1:
            raise ValueError("invalid grid layout")

    def cell_of(self, p: Vec2):
        ix = int(math.floor((p.x - self.x_min) / self.cell_size))
        iy = int(math.floor((p.y - self.y_min) / self.cell_size))
        if 0 <= ix < self.nx and 0 <= iy < self.ny:
            return ix, iy
        return None

    def center(self, ix: int, iy: int) -> Vec2:
        return Vec2(
            self.x_min + (ix + 0.5) * self.cell_size,
            self.y_min + (iy + 0.5) * self.cell_size,
        )

    @classmethod
    def covering(cls, records: Sequence[TripRecord], cell_size: float) -> "GridSpec":
        xs = [r.position.x for r in records]
        ys = [r.position.y for r in records]
        x0, y0 = min(xs), min(ys)
        nx = max(1, int(math.ceil((max(xs) - x0) / cell_size + 1e-9)))
        ny = max(1, int(math.ceil((max(ys) - y0) / cell_size + 1e-9)))
        return cls(x0, y0, cell_size, nx, ny)


@dataclass(frozen=True)
class TimeFilter:
    """Select records by hour of day, weekday, or month (UTC)."""

    kind: str = "all"
    value: int = 0

    def __post_init__(self):
        if self.kind not in ("all", "hour", "weekday", "month"):
            raise ValueError(f"unknown time filter {self.kind!r}")

    def matches(self, ts: float) -> bool:
        if self.kind == "all":
            return True
        dt = datetime.fromtimestamp(ts, tz=timezone.utc)
        if self.kind == "hour":
            return dt.hour == self.value
        if self.kind == "weekday":
            return dt.weekday() == self.value
        return dt.month == self.value


@dataclass(frozen=True)
class DensityGrid:
    spec: GridSpec
    counts: np.ndarray  # (nx, ny) expected vehicles per window
    heading_hist: np.ndarray  # (nx, ny, HEADING_BINS), normalized where counts > 0
    windows: int

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=float).copy()
        h = np.asarray(self.heading_hist, dtype=float).copy()
        if c.shape != (self.spec.nx, self.spec.ny) or h.shape != (self.spec.nx, self.spec.ny, HEADING_BINS):
            raise ValueError("grid array shapes do not match the layout")
        c.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "heading_hist", h)


def estimate_density(
    records: Sequence[TripRecord],
    grid: GridSpec,
    time_filter: TimeFilter = TimeFilter(),
    scale_factor: float = 1.0 / 0.03,
) -> DensityGrid:
    """Expected per-cell vehicle counts with pooled heading histograms.

    Matching records are averaged over the distinct UTC dates present in
    the full record set, then multiplied by scale_factor (the inverse of
    the fleet's share of the total vehicle population).
    """
    if len(records) == 0:
        raise ValueError("no records")
    dates = {datetime.fromtimestamp(r.timestamp, tz=timezone.utc).date() for r in records}
    windows = max(1, len(dates))
    counts = np.zeros((grid.nx, grid.ny))
    hist = np.zeros((grid.nx, grid.ny, HEADING_BINS))
    matched = 0
    for r in records:
        if not time_filter.matches(r.timestamp):
            continue
        cell = grid.cell_of(r.position)
        if cell is None:
            continue
        matched += 1
        b = min(int(r.heading / TWO_PI * HEADING_BINS), HEADING_BINS - 1)
        counts[cell] += 1.0
        hist[cell + (b,)] += 1.0
    if matched == 0:
        raise ValueError("no records match the time filter")
    totals = hist.sum(axis=2, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        hist = np.where(totals > 0, hist / totals, 0.0)
    counts = counts * (scale_factor / windows)
    return DensityGrid(grid, counts, hist, windows)


@dataclass(frozen=True)
class AccuracyGrid:
    spec: GridSpec
    j_mean: np.ndarray  # meters, NaN where flagged
    j_std: np.ndarray
    flags: np.ndarray  # True where data was insufficient

    def __post_init__(self):
        for name in ("j_mean", "j_std", "flags"):
            a = np.asarray(getattr(self, name)).copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)


def _draw_headings(rng: np.random.Generator, hist: np.ndarray, count: int) -> np.ndarray:
    bins = rng.choice(HEADING_BINS, size=count, p=hist)
    width = TWO_PI / HEADING_BINS
    return (bins + rng.uniform(0.0, 1.0, count)) * width


def evaluate_accuracy(
    density: DensityGrid,
    comm_radius: float,
    noise_variance: float,
    realizations: int,
    w: float,
    seed: int,
) -> AccuracyGrid:
    """Per-cell RMS error of the centroid estimator over fleet draws.

    For each cell, every realization draws Poisson vehicle counts from
    the neighboring cells within comm_radius, samples their headings
    from the cell histograms, and evaluates the linearized expected
    squared error. Cells where more than half the realizations yield an
    unbounded or degenerate constraint set are flagged.
    """
    if realizations < 1:
        raise ValueError("need at least one realization")
    spec = density.spec
    sigma = math.sqrt(noise_variance)
    j_mean = np.full((spec.nx, spec.ny), math.nan)
    j_std = np.full((spec.nx, spec.ny), math.nan)
    flags = np.zeros((spec.nx, spec.ny), dtype=bool)
    centers_x = spec.x_min + (np.arange(spec.nx) + 0.5) * spec.cell_size
    centers_y = spec.y_min + (np.arange(spec.ny) + 0.5) * spec.cell_size
    occupied = np.argwhere(density.counts > 0)
    for ix in range(spec.nx):
        for iy in range(spec.ny):
            cx, cy = centers_x[ix], centers_y[iy]
            near = [
                (int(ox), int(oy))
                for ox, oy in occupied
                if math.hypot(centers_x[ox] - cx, centers_y[oy] - cy) <= comm_radius
            ]
            if not near:
                flags[ix, iy] = True
                continue
            js = []
            bad = 0
            for r in range(realizations):
                rng = substream(seed, STREAM_IDS["fleet"], ix, iy, r)
                headings: list[np.ndarray] = []
                for ox, oy in near:
                    n_veh = rng.poisson(density.counts[ox, oy])
                    if n_veh > 0:
                        headings.append(_draw_headings(rng, density.heading_hist[ox, oy], n_veh))
                total = int(sum(len(h) for h in headings))
                if total < 3:
                    bad += 1
                    continue
                angles = np.concatenate(headings)
                scenario = scenario_from_angles(angles, w, sigma)
                try:
                    model = linearize(scenario, method="analytic")
                except GeometryError:
                    bad += 1
                    continue
                e2 = expected_sq_error_linear(model, NoiseModel.constant(sigma, total))
                js.append(math.sqrt(e2))
            if bad > realizations // 2 or not js:
                flags[ix, iy] = True
                continue
            arr = np.array(js)
            j_mean[ix, iy] = float(arr.mean())
            j_std[ix, iy] = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return AccuracyGrid(spec, j_mean, j_std, flags)


# ---------------------------------------------------------------------------
# Exporters


def accuracy_csv_lines(grid: AccuracyGrid) -> list[str]:
    lines = ["cell_x,cell_y,j_mean_m,j_std_m,flag"]
    spec = grid.spec
    for ix in range(spec.nx):
        for iy in range(spec.ny):
            c = spec.center(ix, iy)
            flag = int(bool(grid.flags[ix, iy]))
            jm = grid.j_mean[ix, iy]
            js = grid.j_std[ix, iy]
            jm_s = "" if math.isnan(jm) else repr(float(jm))
            js_s = "" if math.isnan(js) else repr(float(js))
            lines.append(f"{c.x!r},{c.y!r},{jm_s},{js_s},{flag}")
    return lines


def _color_for(value: float, lo: float, hi: float) -> str:
    """Blue (small) to red (large)."""
    if hi <= lo:
        t = 0.0
    else:
        t = (value - lo) / (hi - lo)
    t = min(max(t, 0.0), 1.0)
    r = int(round(255 * t))
    b = int(round(255 * (1.0 - t)))
    return f"#{r:02x}40{b:02x}"


def accuracy_svg(grid: AccuracyGrid, pixel_per_cell: int = 12) -> str:
    spec = grid.spec
    valid = grid.j_mean[~np.isnan(grid.j_mean)]
    lo = float(valid.min()) if valid.size else 0.0
    hi = float(valid.max()) if valid.size else 1.0
    width = spec.nx * pixel_per_cell
    height = spec.ny * pixel_per_cell
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    ]
    for ix in range(spec.nx):
        for iy in range(spec.ny):
            if grid.flags[ix, iy]:
                color = "#000000"
            else:
                color = _color_for(float(grid.j_mean[ix, iy]), lo, hi)
            px = ix * pixel_per_cell
            py = (spec.ny - 1 - iy) * pixel_per_cell
            parts.append(
                f'<rect x="{px}" y="{py}" width="{pixel_per_cell}" '
                f'height="{pixel_per_cell}" fill="{color}"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts)


def accuracy_summary(grid: AccuracyGrid) -> dict:
    valid = ~np.isnan(grid.j_mean)
    return {
        "j_mean_m": float(grid.j_mean[valid].mean()) if valid.any() else None,
        "j_std_m": float(grid.j_std[valid].mean()) if valid.any() else None,
        "flagged_cells": int(grid.flags.sum()),
        "total_cells": int(grid.spec.nx * grid.spec.ny),
    }


def export_accuracy(grid: AccuracyGrid, fmt: str, path: str | Path) -> Path:
    """Write the grid as 'csv', 'svg-heatmap', or 'json-summary'."""
    path = Path(path)
    if fmt == "csv":
        path.write_text("\n".join(accuracy_csv_lines(grid)) + "\n")
    elif fmt == "svg-heatmap":
        path.write_text(accuracy_svg(grid) + "\n")
    elif fmt == "json-summary":
        path.write_text(json.dumps(accuracy_summary(grid), indent=2, sort_keys=True) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def read_accuracy_summary(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def read_accuracy_csv(path: str | Path, cell_size: float) -> AccuracyGrid:
    """Rebuild an AccuracyGrid from its CSV export."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["cell_x", "cell_y", "j_mean_m", "j_std_m", "flag"]:
            raise ValueError(f"unexpected header {header!r}")
        for row in reader:
            rows.append(row)
    xs = sorted({float(r[0]) for r in rows})
    ys = sorted({float(r[1]) for r in rows})
    spec = GridSpec(xs[0] - cell_size / 2, ys[0] - cell_size / 2, cell_size, len(xs), len(ys))
    j_mean = np.full((spec.nx, spec.ny), math.nan)
    j_std = np.full((spec.nx, spec.ny), math.nan)
    flags = np.zeros((spec.nx, spec.ny), dtype=bool)
    x_idx = {x: i for i, x in enumerate(xs)}
    y_idx = {y: i for i, y in enumerate(ys)}
    for r in rows:
        ix, iy = x_idx[float(r[0])], y_idx[float(r[1])]
        if r[2]:
            j_mean[ix, iy] = float(r[2])
        if r[3]:
            j_std[ix, iy] = float(r[3])
        flags[ix, iy] = bool(int(r[4]))
    return AccuracyGrid(spec, j_mean, j_std, flags)
