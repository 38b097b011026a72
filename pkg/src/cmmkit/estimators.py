"""Common-error estimators and their local error models.

The hard estimator averages over the polygon cut out by all road
constraints; the Monte Carlo variant integrates the same centroid by
acceptance sampling; the orthogonal closed form specializes to
axis-aligned roads; the linearized model propagates per-vehicle noise
through the polygon's shape derivative; the weighted estimator scores a
hypothesis grid by probabilistic constraint compatibility and never goes
infeasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import log_ndtr

from .error_models import NoiseModel
from .geometry import (
    EMPTY,
    UNBOUNDED,
    ConvexRegion,
    EmptyRegionError,
    HalfPlane,
    RoadConstraint,
    UnboundedRegionError,
    Vec2,
    edge_lengths_midpoints,
    halfplane_intersection,
    intersect_normal_offsets,
    region_area,
    region_centroid,
)
from .seeding import substream

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is normally present
    _HAVE_NUMBA = False


class DegenerateRegionError(Exception):
    """The feasible region collapsed below usable size."""


class NumericallyDegenerateError(Exception):
    """All hypothesis weights underflowed to zero."""


@dataclass(frozen=True)
class FleetScenario:
    """N road constraints, their noise scales, and the true common error."""

    constraints: tuple[RoadConstraint, ...]
    noise: NoiseModel
    common_error: Vec2 = Vec2(0.0, 0.0)
    two_sided: bool = False

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if len(self.constraints) < 1:
            raise ValueError("a scenario needs at least one constraint")
        if len(self.constraints) != len(self.noise):
            raise ValueError("one noise sigma per constraint is required")

    def __len__(self) -> int:
        return len(self.constraints)

    def plane_table(self):
        """Per-plane (normal angle, owning vehicle, projection sign).

        A vehicle's scalar noise projection X_i is taken on its own
        normal n_i; a plane with normal -n_i sees the projection with
        opposite sign, so its perturbed offset is w + X_i.
        """
        angles: list[float] = []
        owner: list[int] = []
        sign: list[float] = []
        for i, c in enumerate(self.constraints):
            normals = c.normal_angles()
            if self.two_sided and len(normals) == 1:
                normals = (normals[0], (normals[0] + math.pi) % (2 * math.pi))
            for k, phi in enumerate(normals):
                angles.append(phi)
                owner.append(i)
                sign.append(1.0 if k == 0 else -1.0)
        return np.array(angles), np.array(owner, dtype=int), np.array(sign)

    def half_widths(self) -> np.ndarray:
        return np.array([c.half_width for c in self.constraints], dtype=float)


@dataclass(frozen=True)
class LinearizedModel:
    """First-order response of the estimator error to noise projections.

    error ~= e0 + C X / S0, with C built column-per-vehicle.
    validity_ratio compares the expected worst-case projection to the
    mean angular allowance 2 pi w / N; the linear model degrades once it
    approaches one.
    """

    e0: Vec2
    S0: float
    C: np.ndarray
    validity_ratio: float

    def __post_init__(self):
        if self.S0 <= 0:
            raise ValueError("S0 must be positive")
        c = np.asarray(self.C, dtype=float).copy()
        if not np.all(np.isfinite(c)):
            raise ValueError("C must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "C", c)


@dataclass(frozen=True)
class EstimateResult:
    estimate: Vec2
    error: Vec2
    squared_error: float
    feasible: bool

    @classmethod
    def from_error(cls, estimate: Vec2, error: Vec2) -> "EstimateResult":
        return cls(estimate, error, error.norm_sq(), True)

    @classmethod
    def infeasible(cls) -> "EstimateResult":
        nan = float("nan")
        return cls(Vec2(nan, nan), Vec2(nan, nan), nan, False)


def _scenario_arrays(
    scenario: FleetScenario, noncommon_draws: np.ndarray, include_common: bool
):
    """(normal angles, offsets, owner) of the hypothesis polygon.

    In hypothesis space the constraint normals flip sign; offsets carry
    the projections of (common error + composite noise).
    """
    angles, owner, sign = scenario.plane_table()
    w = scenario.half_widths()[owner]
    shift = np.asarray(noncommon_draws, dtype=float)
    if include_common:
        shift = shift + np.array(scenario.common_error)
    nx, ny = np.cos(angles), np.sin(angles)
    proj = shift[owner, 0] * nx + shift[owner, 1] * ny
    offsets = w - proj
    flipped = np.mod(angles + math.pi, 2.0 * math.pi)
    return flipped, offsets, owner


def estimate_hard(scenario: FleetScenario, noncommon_draws: np.ndarray) -> EstimateResult:
    """Centroid of the feasible polygon as the common-error estimate.

    Returns an infeasible result when the constraints admit no area;
    raises UnboundedRegionError when they admit no bounded one.
    """
    draws = np.asarray(noncommon_draws, dtype=float)
    if draws.shape != (len(scenario), 2):
        raise ValueError("noncommon_draws must be (N, 2)")
    angles, offsets, _ = _scenario_arrays(scenario, draws, include_common=True)
    result = intersect_normal_offsets(angles, offsets)
    if result is EMPTY:
        return EstimateResult.infeasible()
    if result is UNBOUNDED:
        raise UnboundedRegionError("hypothesis polygon is unbounded")
    estimate = region_centroid(result)
    error = scenario.common_error - estimate
    return EstimateResult.from_error(estimate, error)


def centroid_mc(planes: Sequence[HalfPlane], n_samples: int, seed: int, *path: int) -> Vec2:
    """Monte Carlo centroid: mean of uniform proposals over the region's
    bounding box that land inside every half-plane."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    result = halfplane_intersection(planes)
    if result is EMPTY:
        raise DegenerateRegionError("region is empty")
    if result is UNBOUNDED:
        raise UnboundedRegionError("region is unbounded")
    v = result.vertices
    lo = v.min(axis=0)
    hi = v.max(axis=0)
    rng = substream(seed, *path)
    pts = rng.uniform(lo, hi, size=(n_samples, 2))
    angles = np.array([p.normal_angle for p in planes])
    offsets = np.array([p.offset for p in planes])
    normals = np.column_stack([np.cos(angles), np.sin(angles)])
    inside = (pts @ normals.T <= offsets[None, :]).all(axis=1)
    if not inside.any():
        raise DegenerateRegionError("no proposal landed inside the region")
    mean = pts[inside].mean(axis=0)
    return Vec2(float(mean[0]), float(mean[1]))


def orthogonal_error_closed_form(projections_by_direction: Sequence[Sequence[float]]) -> float:
    """Squared estimator error for four axis-aligned road directions.

    X_j is the largest noise projection on direction j; the feasible
    rectangle's centroid gives
    e^2 = (X1^2 + X2^2 + X3^2 + X4^2 - 2 X1 X3 - 2 X2 X4) / 4.
    """
    if len(projections_by_direction) != 4:
        raise ValueError("exactly four direction groups are required")
    maxes = []
    for j, group in enumerate(projections_by_direction):
        arr = np.asarray(group, dtype=float)
        if arr.size == 0:
            raise UnboundedRegionError(f"direction {j} has no vehicles")
        maxes.append(float(arr.max()))
    x1, x2, x3, x4 = maxes
    return (x1 * x1 + x2 * x2 + x3 * x3 + x4 * x4 - 2 * x1 * x3 - 2 * x2 * x4) / 4.0


# Central finite-difference step for the sensitivity columns, as a
# fraction of the half width.
FD_STEP_SCALE = 1e-4


def _unperturbed_region(scenario: FleetScenario) -> ConvexRegion:
    angles, owner, _ = scenario.plane_table()
    w = scenario.half_widths()[owner]
    result = intersect_normal_offsets(angles, w)
    if result is EMPTY:
        raise EmptyRegionError("unperturbed constraint polygon is empty")
    if result is UNBOUNDED:
        raise UnboundedRegionError("unperturbed constraint polygon is unbounded")
    return result


def _error_at_projections(scenario: FleetScenario, x_proj: np.ndarray) -> Vec2:
    """Exact polygon-centroid error at given scalar projections."""
    angles, owner, sign = scenario.plane_table()
    w = scenario.half_widths()[owner]
    offsets = w - sign * x_proj[owner]
    result = intersect_normal_offsets(angles, offsets)
    if result is EMPTY:
        raise EmptyRegionError("perturbed constraint polygon is empty")
    if result is UNBOUNDED:
        raise UnboundedRegionError("perturbed constraint polygon is unbounded")
    return region_centroid(result)


def expected_sup_projection(noise: NoiseModel) -> float:
    """Leading-order estimate of E[max_i |X_i|] for Gaussian projections."""
    n = len(noise)
    smax = max(noise.sigmas)
    if smax == 0.0:
        return 0.0
    return smax * math.sqrt(2.0 * math.log(max(2 * n, 2)))


def linearize(scenario: FleetScenario, method: str = "fd", h: float | None = None) -> LinearizedModel:
    """Linear error model at the unperturbed polygon.

    method 'fd' differentiates the exact centroid by central differences
    (step h, default 1e-4 x half width); 'analytic' uses the polygon
    shape derivative (edge length times lever arm). The two agree to
    O(h^2) and the analytic path is used where thousands of models are
    needed per second.
    """
    region = _unperturbed_region(scenario)
    s0 = region_area(region)
    e0 = region_centroid(region)
    n = len(scenario)
    cols = np.zeros((2, n))
    if method == "fd":
        w_ref = float(np.mean(scenario.half_widths()))
        step = FD_STEP_SCALE * w_ref if h is None else float(h)
        for i in range(n):
            x = np.zeros(n)
            x[i] = step
            ep = _error_at_projections(scenario, x)
            em = _error_at_projections(scenario, -x)
            cols[0, i] = s0 * (ep.x - em.x) / (2.0 * step)
            cols[1, i] = s0 * (ep.y - em.y) / (2.0 * step)
    elif method == "analytic":
        angles, owner, sign = scenario.plane_table()
        lengths, mids = edge_lengths_midpoints(region)
        eidx = region.edge_plane_indices
        lever = mids - np.array([e0.x, e0.y])[None, :]
        for j in range(len(lengths)):
            k = int(eidx[j])
            i = int(owner[k])
            cols[:, i] -= sign[k] * lengths[j] * lever[j]
    else:
        raise ValueError(f"unknown method {method!r}")
    ratio_scale = 2.0 * math.pi * float(np.mean(scenario.half_widths())) / n
    validity = expected_sup_projection(scenario.noise) / ratio_scale
    return LinearizedModel(e0, s0, cols, validity)


def expected_sq_error_linear(model: LinearizedModel, noise: NoiseModel) -> float:
    """e0^2 plus the propagated noise trace tr(L^T C^T C L) / S0^2."""
    sig = np.asarray(noise.sigmas, dtype=float)
    if len(sig) != model.C.shape[1]:
        raise ValueError("noise size must match the sensitivity matrix")
    trace = float(((model.C**2).sum(axis=0) * sig**2).sum())
    return model.e0.norm_sq() + trace / (model.S0 * model.S0)


# ---------------------------------------------------------------------------
# Weighted hypothesis-grid estimator


@dataclass(frozen=True)
class WeightedGrid:
    """Square hypothesis grid: [-half_extent, half_extent]^2, cells^2 points."""

    half_extent: float
    cells: int = 201

    def __post_init__(self):
        if self.half_extent <= 0 or self.cells < 2:
            raise ValueError("grid needs positive extent and >= 2 cells")

    @property
    def cell_size(self) -> float:
        return 2.0 * self.half_extent / (self.cells - 1)

    @classmethod
    def default_for(cls, scenario: FleetScenario) -> "WeightedGrid":
        r = 4.0 * max(scenario.noise.sigmas) + float(np.max(scenario.half_widths()))
        return cls(r)


_TAB_LO, _TAB_HI, _TAB_N = -12.0, 12.0, 8193
_TAB_Y = log_ndtr(np.linspace(_TAB_LO, _TAB_HI, _TAB_N))
_TAB_STEP = (_TAB_HI - _TAB_LO) / (_TAB_N - 1)


def _logphi_accumulate_numpy(lw, px, py, nx, ny, d, inv_sigma):
    z = (d - (px * nx + py * ny)) * inv_sigma
    z = np.clip(z, _TAB_LO, _TAB_HI)
    t = (z - _TAB_LO) / _TAB_STEP
    i0 = np.minimum(t.astype(np.int64), _TAB_N - 2)
    frac = t - i0
    lw += _TAB_Y[i0] * (1.0 - frac) + _TAB_Y[i0 + 1] * frac


if _HAVE_NUMBA:

    @njit(cache=True)
    def _logphi_accumulate_numba(lw, px, py, nx, ny, d, inv_sigma, tab, lo, hi, step, ntab):  # pragma: no cover - jit
        for g in range(lw.shape[0]):
            z = (d - (px[g] * nx + py[g] * ny)) * inv_sigma
            if z < lo:
                z = lo
            elif z > hi:
                z = hi
            t = (z - lo) / step
            i0 = int(t)
            if i0 > ntab - 2:
                i0 = ntab - 2
            frac = t - i0
            lw[g] += tab[i0] * (1.0 - frac) + tab[i0 + 1] * frac


_GRID_CACHE: dict[tuple[float, int], tuple[np.ndarray, np.ndarray]] = {}


def _grid_points(grid: WeightedGrid):
    key = (grid.half_extent, grid.cells)
    if key not in _GRID_CACHE:
        g = np.linspace(-grid.half_extent, grid.half_extent, grid.cells)
        gx, gy = np.meshgrid(g, g, indexing="ij")
        _GRID_CACHE[key] = (np.ascontiguousarray(gx.ravel()), np.ascontiguousarray(gy.ravel()))
    return _GRID_CACHE[key]


def estimate_weighted(
    scenario: FleetScenario,
    noncommon_draws: np.ndarray,
    grid: WeightedGrid | None = None,
) -> EstimateResult:
    """Soft estimator: compatibility-weighted mean over hypothesis grid.

    Each hypothesis tau is scored by the product over vehicles of
    Phi(margin_i / sigma_i), where margin_i is the signed slack of
    constraint i at tau. Log-weights with max subtraction keep the
    product alive for large fleets. The caller's grid must cover the
    true common error.
    """
    if grid is None:
        grid = WeightedGrid.default_for(scenario)
    draws = np.asarray(noncommon_draws, dtype=float)
    if draws.shape != (len(scenario), 2):
        raise ValueError("noncommon_draws must be (N, 2)")
    angles, offsets, owner = _scenario_arrays(scenario, draws, include_common=True)
    sigmas = np.asarray(scenario.noise.sigmas, dtype=float)[owner]
    px, py = _grid_points(grid)
    lw = np.zeros_like(px)
    for phi, d, sigma in zip(angles, offsets, sigmas):
        nx, ny = math.cos(phi), math.sin(phi)
        if sigma == 0.0:
            margin = d - (px * nx + py * ny)
            lw = lw + np.where(margin >= 0.0, 0.0, -np.inf)
            continue
        if _HAVE_NUMBA:
            _logphi_accumulate_numba(
                lw, px, py, nx, ny, d, 1.0 / sigma,
                _TAB_Y, _TAB_LO, _TAB_HI, _TAB_STEP, _TAB_N,
            )
        else:
            _logphi_accumulate_numpy(lw, px, py, nx, ny, d, 1.0 / sigma)
    peak = lw.max()
    if not math.isfinite(peak):
        raise NumericallyDegenerateError("every hypothesis weight underflowed")
    weights = np.exp(lw - peak)
    total = float(weights.sum())
    estimate = Vec2(float((weights * px).sum() / total), float((weights * py).sum() / total))
    error = scenario.common_error - estimate
    return EstimateResult.from_error(estimate, error)


def scenario_from_angles(
    driving_angles: Sequence[float],
    w: float,
    sigmas: Sequence[float] | float,
    common_error: Vec2 = Vec2(0.0, 0.0),
    two_sided: bool = False,
    side: str = "left",
) -> FleetScenario:
    """Scenario with all lane centers at the origin (they cancel out)."""
    angles = list(driving_angles)
    if np.isscalar(sigmas):
        noise = NoiseModel.constant(float(sigmas), len(angles))
    else:
        noise = NoiseModel(tuple(float(s) for s in sigmas))
    constraints = tuple(
        RoadConstraint(Vec2(0.0, 0.0), float(a), float(w), side) for a in angles
    )
    return FleetScenario(constraints, noise, common_error, two_sided)
