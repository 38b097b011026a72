"""Planar geometry of road constraints.

A road constraint confines a common-error hypothesis to a half-plane
{tau : tau . n(phi) <= d} with unit normal n(phi) = (cos phi, sin phi).
This module intersects such half-planes into a convex polygon, measures
its area and centroid, and provides the closed-form quantities of the
polygon tangent to a circle of radius w (the unperturbed feasible set).

All types are immutable after construction and all operations are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is normally present
    _HAVE_NUMBA = False

TWO_PI = 2.0 * math.pi

# Side of the bounding box used to seed the incremental clipping, as a
# multiple of the offset scale. A surviving box edge means the true
# intersection is unbounded.
_BOX_SIDE_SCALE = 1e6

# Vertices closer than this (times the offset scale) are merged.
_MERGE_TOL_SCALE = 1e-9


class Vec2(NamedTuple):
    """Planar point/vector in meters."""

    x: float
    y: float

    def __add__(self, other):  # type: ignore[override]
        return Vec2(self.x + other[0], self.y + other[1])

    def __sub__(self, other):
        return Vec2(self.x - other[0], self.y - other[1])

    def dot(self, other) -> float:
        return self.x * other[0] + self.y * other[1]

    def norm_sq(self) -> float:
        return self.x * self.x + self.y * self.y

    def norm(self) -> float:
        return math.hypot(self.x, self.y)


def canonical_angle(phi: float) -> float:
    """Map an angle to [0, 2*pi)."""
    a = math.fmod(phi, TWO_PI)
    if a < 0.0:
        a += TWO_PI
    if a >= TWO_PI:  # fmod round-up edge
        a -= TWO_PI
    return a


def unit_normal(phi: float) -> Vec2:
    return Vec2(math.cos(phi), math.sin(phi))


class RegionEmpty:
    """Sentinel: the half-planes have no common area."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Empty"


class RegionUnbounded:
    """Sentinel: the intersection has no bounded component."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Unbounded"


EMPTY = RegionEmpty()
UNBOUNDED = RegionUnbounded()


class GeometryError(Exception):
    """Base class for geometry failures."""


class EmptyRegionError(GeometryError):
    """Raised when an operation requires a nonempty bounded region."""


class UnboundedRegionError(GeometryError):
    """Raised when the constraint set does not bound a polygon."""


@dataclass(frozen=True)
class HalfPlane:
    """Half-plane {tau : tau . n(normal_angle) <= offset}.

    normal_angle is canonicalized to [0, 2*pi); offset is in meters and
    may be negative after perturbation.
    """

    normal_angle: float
    offset: float

    def __post_init__(self):
        if not (math.isfinite(self.normal_angle) and math.isfinite(self.offset)):
            raise ValueError("half-plane parameters must be finite")
        object.__setattr__(self, "normal_angle", canonical_angle(self.normal_angle))

    @property
    def normal(self) -> Vec2:
        return unit_normal(self.normal_angle)

    def signed_margin(self, p: Sequence[float]) -> float:
        """offset - p . n; nonnegative inside."""
        n = self.normal
        return self.offset - (p[0] * n.x + p[1] * n.y)


@dataclass(frozen=True)
class RoadConstraint:
    """One vehicle's lane geometry.

    side selects which lane boundary constrains the common error:
    'left' uses normal driving_angle + pi/2, 'right' uses
    driving_angle - pi/2, and 'both' emits the full strip.
    """

    lane_center_point: Vec2
    driving_angle: float
    half_width: float
    side: str = "left"

    def __post_init__(self):
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.side not in ("left", "right", "both"):
            raise ValueError(f"unknown side {self.side!r}")
        object.__setattr__(self, "driving_angle", canonical_angle(self.driving_angle))

    def normal_angles(self) -> tuple[float, ...]:
        if self.side == "left":
            return (canonical_angle(self.driving_angle + math.pi / 2),)
        if self.side == "right":
            return (canonical_angle(self.driving_angle - math.pi / 2),)
        return (
            canonical_angle(self.driving_angle + math.pi / 2),
            canonical_angle(self.driving_angle - math.pi / 2),
        )


@dataclass(frozen=True)
class ConvexRegion:
    """Bounded convex polygon, counter-clockwise vertex order."""

    vertices: np.ndarray
    edge_plane_indices: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("a convex region needs >= 3 planar vertices")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertices must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        if self.edge_plane_indices is not None:
            e = np.asarray(self.edge_plane_indices, dtype=int).copy()
            e.setflags(write=False)
            object.__setattr__(self, "edge_plane_indices", e)

    def __len__(self) -> int:
        return len(self.vertices)


def _shoelace_terms(v: np.ndarray):
    x, y = v[:, 0], v[:, 1]
    x1, y1 = np.roll(x, -1), np.roll(y, -1)
    return x, y, x1, y1, x * y1 - x1 * y


def region_area(region: ConvexRegion) -> float:
    """Polygon area by the shoelace formula (positive for CCW order)."""
    _, _, _, _, cross = _shoelace_terms(region.vertices)
    return 0.5 * float(cross.sum())


def region_centroid(region: ConvexRegion) -> Vec2:
    """Area-weighted centroid of the polygon."""
    x, y, x1, y1, cross = _shoelace_terms(region.vertices)
    a = 0.5 * cross.sum()
    cx = float(((x + x1) * cross).sum() / (6.0 * a))
    cy = float(((y + y1) * cross).sum() / (6.0 * a))
    return Vec2(cx, cy)


def _clip(verts: np.ndarray, eids: np.ndarray, n: np.ndarray, d: float, idx: int):
    """Clip a convex CCW polygon with {p . n <= d}.

    eids[i] labels the line carrying edge (i, i+1). Returns the clipped
    (verts, eids) or None when nothing survives. Redundant planes leave
    the arrays untouched (idempotence).
    """
    f = verts @ n - d
    inside = f <= 0.0
    if inside.all():
        return verts, eids
    if not inside.any():
        return None
    m = len(verts)
    nxt = np.roll(inside, -1)
    exits = np.where(inside & ~nxt)[0]
    entries = np.where(~inside & nxt)[0]
    if len(exits) != 1 or len(entries) != 1:
        # Numerically tangent contact; treat near-zero margins as inside.
        scale = max(1.0, float(np.abs(f).max()))
        inside = f <= 1e-12 * scale
        if inside.all():
            return verts, eids
        if not inside.any():
            return None
        nxt = np.roll(inside, -1)
        exits = np.where(inside & ~nxt)[0]
        entries = np.where(~inside & nxt)[0]
        if len(exits) != 1 or len(entries) != 1:
            return None
    a = int(exits[0])  # edge a -> a+1 leaves the half-plane
    b = int(entries[0])  # edge b -> b+1 re-enters

    def cut(i: int) -> np.ndarray:
        j = (i + 1) % m
        t = f[i] / (f[i] - f[j])
        return verts[i] + t * (verts[j] - verts[i])

    x_exit = cut(a)
    x_entry = cut(b)
    if b < a:
        keep = np.arange(b + 1, a + 1)
    else:
        keep = np.concatenate([np.arange(b + 1, m), np.arange(0, a + 1)])
    # edges: x_entry->v_{b+1} on line eids[b], then the kept run, with the
    # closing edge x_exit->x_entry on the clip line itself
    new_verts = np.vstack([x_entry[None, :], verts[keep], x_exit[None, :]])
    new_eids = np.concatenate([[eids[b]], eids[keep], [idx]])
    return new_verts, new_eids


def _refine_vertices(verts: np.ndarray, eids: np.ndarray, normals: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Recompute each vertex as the exact meet of its two defining lines.

    Clipping chains intersections through box-scale coordinates; solving
    the 2x2 system per vertex removes that accumulated error.
    """
    m = len(verts)
    out = verts.copy()
    prev = np.roll(eids, 1)  # edge arriving at vertex i is eids[i-1]
    for i in range(m):
        ia, ib = int(prev[i]), int(eids[i])
        if ia < 0 or ib < 0 or ia == ib:
            continue
        na, nb = normals[ia], normals[ib]
        det = na[0] * nb[1] - na[1] * nb[0]
        if abs(det) < 1e-12:
            continue
        da, db = offsets[ia], offsets[ib]
        out[i, 0] = (da * nb[1] - db * na[1]) / det
        out[i, 1] = (na[0] * db - nb[0] * da) / det
    return out


def _merge_close(verts: np.ndarray, eids: np.ndarray, tol: float):
    m = len(verts)
    d = verts - np.roll(verts, 1, axis=0)
    keep = np.hypot(d[:, 0], d[:, 1]) > tol
    if keep.all():
        return verts, eids
    return verts[keep], eids[keep]


def circular_gaps(sorted_angles: np.ndarray) -> np.ndarray:
    """Increments between consecutive sorted angles, wrapping at 2*pi."""
    a = np.asarray(sorted_angles, dtype=float)
    if len(a) == 1:
        return np.array([TWO_PI])
    g = np.diff(a)
    return np.append(g, a[0] - a[-1] + TWO_PI)


if _HAVE_NUMBA:

    @njit(cache=True)
    def _clip_loop_jit(nx, ny, offs, half):  # pragma: no cover - jit
        """Sequential half-plane clipping of the bounding box.

        Returns (status, vertex array, edge-id array, count); status 0 is a
        polygon, 1 empty. Mirrors the numpy path operation-for-operation so
        both produce identical floats.
        """
        k_planes = nx.shape[0]
        cap = k_planes + 8
        vx = np.empty(cap)
        vy = np.empty(cap)
        ve = np.empty(cap, dtype=np.int64)
        wx = np.empty(cap)
        wy = np.empty(cap)
        we = np.empty(cap, dtype=np.int64)
        f = np.empty(cap)
        vx[0], vy[0] = -half, -half
        vx[1], vy[1] = half, -half
        vx[2], vy[2] = half, half
        vx[3], vy[3] = -half, half
        ve[0], ve[1], ve[2], ve[3] = -1, -2, -3, -4
        m = 4
        for k in range(k_planes):
            a_n = nx[k]
            b_n = ny[k]
            d = offs[k]
            all_in = True
            any_in = False
            fmax = 0.0
            for i in range(m):
                fi = vx[i] * a_n + vy[i] * b_n - d
                f[i] = fi
                if fi <= 0.0:
                    any_in = True
                else:
                    all_in = False
                af = abs(fi)
                if af > fmax:
                    fmax = af
            if all_in:
                continue
            if not any_in:
                return 1, vx[:0], vy[:0], ve[:0]
            thresh = 0.0
            for attempt in range(2):
                a_idx = -1
                b_idx = -1
                n_exit = 0
                n_entry = 0
                for i in range(m):
                    j = i + 1
                    if j == m:
                        j = 0
                    in_i = f[i] <= thresh
                    in_j = f[j] <= thresh
                    if in_i and not in_j:
                        a_idx = i
                        n_exit += 1
                    elif in_j and not in_i:
                        b_idx = i
                        n_entry += 1
                if n_exit == 1 and n_entry == 1:
                    break
                if attempt == 0:
                    scale = fmax if fmax > 1.0 else 1.0
                    thresh = 1e-12 * scale
                    all_in2 = True
                    any_in2 = False
                    for i in range(m):
                        if f[i] <= thresh:
                            any_in2 = True
                        else:
                            all_in2 = False
                    if all_in2:
                        a_idx = -2  # marker: keep polygon unchanged
                        break
                    if not any_in2:
                        return 1, vx[:0], vy[:0], ve[:0]
                else:
                    return 1, vx[:0], vy[:0], ve[:0]
            if a_idx == -2:
                continue
            # entry cut on edge b_idx
            i = b_idx
            j = i + 1
            if j == m:
                j = 0
            t = f[i] / (f[i] - f[j])
            ex_x = vx[i] + t * (vx[j] - vx[i])
            ex_y = vy[i] + t * (vy[j] - vy[i])
            wx[0] = ex_x
            wy[0] = ex_y
            we[0] = ve[b_idx]
            cnt = 1
            # kept run b+1 .. a (cyclic), then exit cut on edge a_idx
            i = b_idx + 1
            if i == m:
                i = 0
            while True:
                wx[cnt] = vx[i]
                wy[cnt] = vy[i]
                we[cnt] = ve[i]  # a kept vertex keeps its outgoing edge line
                cnt += 1
                if i == a_idx:
                    break
                i += 1
                if i == m:
                    i = 0
            j = a_idx + 1
            if j == m:
                j = 0
            t = f[a_idx] / (f[a_idx] - f[j])
            wx[cnt] = vx[a_idx] + t * (vx[j] - vx[a_idx])
            wy[cnt] = vy[a_idx] + t * (vy[j] - vy[a_idx])
            we[cnt] = k  # closing edge runs along the clip line
            cnt += 1
            for i in range(cnt):
                vx[i] = wx[i]
                vy[i] = wy[i]
                ve[i] = we[i]
            m = cnt
        return 0, vx[:m].copy(), vy[:m].copy(), ve[:m].copy()


def intersect_normal_offsets(angles: np.ndarray, offsets: np.ndarray):
    """Array-level half-plane intersection (angles canonical [0, 2*pi)).

    Unboundedness is decided exactly from the normals: the intersection
    is bounded iff every circular gap between sorted normal angles is
    below pi. A bounding box of side 1e6 x the offset scale backstops
    the check inside the clipping itself.
    """
    angles = np.asarray(angles, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    if len(angles) == 0:
        raise ValueError("at least one half-plane is required")
    order = np.argsort(angles, kind="stable")
    gaps = circular_gaps(angles[order])
    top = gaps.max()
    if top > math.pi:
        # normals fit in an open half-circle: nonempty and unbounded
        return UNBOUNDED
    if top == math.pi:
        # closed half-circle with an antiparallel boundary pair; the set is
        # a strip-like region that conflicting opposite offsets can empty
        k = int(gaps.argmax())
        a_lo = angles[order][k]
        a_hi = angles[order][(k + 1) % len(order)]
        d_lo = offsets[angles == a_lo].min()
        d_hi = offsets[angles == a_hi].min()
        return EMPTY if d_lo + d_hi < 0 else UNBOUNDED

    scale = max(1.0, float(np.abs(offsets).max()))
    half = 0.5 * _BOX_SIDE_SCALE * scale
    nx = np.cos(angles)
    ny = np.sin(angles)

    if _HAVE_NUMBA:
        status, vx, vy, eids = _clip_loop_jit(nx, ny, offsets, half)
        if status == 1:
            return EMPTY
        verts = np.column_stack([vx, vy])
    else:
        verts = np.array([(-half, -half), (half, -half), (half, half), (-half, half)])
        eids = np.array([-1, -2, -3, -4])
        normals = np.column_stack([nx, ny])
        for i in range(len(angles)):
            res = _clip(verts, eids, normals[i], offsets[i], i)
            if res is None:
                return EMPTY
            verts, eids = res

    if (eids < 0).any():
        return UNBOUNDED
    normals = np.column_stack([nx, ny])
    verts = _refine_vertices(verts, eids, normals, offsets)
    verts, eids = _merge_close(verts, eids, _MERGE_TOL_SCALE * scale)
    if len(verts) < 3:
        return EMPTY
    _, _, _, _, cross = _shoelace_terms(verts)
    if cross.sum() <= 0.0:
        return EMPTY
    return ConvexRegion(verts, eids)


def halfplane_intersection(planes: Sequence[HalfPlane]):
    """Intersect half-planes into a ConvexRegion, EMPTY, or UNBOUNDED."""
    if len(planes) == 0:
        raise ValueError("at least one half-plane is required")
    angles = np.array([p.normal_angle for p in planes], dtype=float)
    offsets = np.array([p.offset for p in planes], dtype=float)
    return intersect_normal_offsets(angles, offsets)


def require_region(result) -> ConvexRegion:
    """Unwrap an intersection result, raising on the sentinel outcomes."""
    if result is EMPTY:
        raise EmptyRegionError("constraint intersection is empty")
    if result is UNBOUNDED:
        raise UnboundedRegionError("constraint intersection is unbounded")
    return result


def cmm_error_geometric(constraints: Sequence[HalfPlane], perturb_projections: Sequence[float]) -> Vec2:
    """Centroid of the constraint polygon perturbed by noise projections.

    Each half-plane's offset w becomes w - q_i, where q_i is the
    projection of vehicle i's composite positioning noise on its normal.
    The returned centroid is the map-matching error vector.
    """
    if len(constraints) != len(perturb_projections):
        raise ValueError("one projection per constraint is required")
    perturbed = [
        HalfPlane(p.normal_angle, p.offset - q)
        for p, q in zip(constraints, perturb_projections)
    ]
    region = require_region(halfplane_intersection(perturbed))
    return region_centroid(region)


def _sorted_gap_tangents(sorted_normal_angles: Sequence[float]):
    a = np.asarray(sorted_normal_angles, dtype=float)
    if len(a) < 1:
        raise ValueError("at least one angle is required")
    if np.any(np.diff(a) < 0):
        raise ValueError("angles must be sorted ascending")
    gaps = circular_gaps(a)
    if gaps.max() >= math.pi:
        raise UnboundedRegionError("a normal-angle gap of pi or more leaves the polygon open")
    return a, gaps


def tangent_polygon_area(sorted_normal_angles: Sequence[float], w: float) -> float:
    """Exact area of the polygon tangent to the circle of radius w.

    Each edge lies at distance w from the origin; the polygon splits into
    per-gap kites of area w^2 tan(gap / 2).
    """
    _, gaps = _sorted_gap_tangents(sorted_normal_angles)
    return float(w * w * np.tan(gaps / 2.0).sum())


def e0_squared_formula(sorted_normal_angles: Sequence[float], w: float) -> float:
    """Leading-order squared centroid offset of the tangent polygon.

    First-moment components are approximated by (2/3) w^3 tan(gap/2)
    along each normal direction and divided by the circle-limit area
    pi w^2. Zero for symmetric angle sets. This is a surrogate, not the
    centroid itself: the exact reference is region_centroid of the
    corresponding intersection, which it can overshoot badly because the
    per-gap moments actually point along gap bisectors and their
    gap-weighted sum largely cancels.
    """
    a, gaps = _sorted_gap_tangents(sorted_normal_angles)
    t = np.tan(gaps / 2.0)
    coef = (2.0 / 3.0) * w**3
    mx = float((coef * t * np.cos(a)).sum())
    my = float((coef * t * np.sin(a)).sum())
    s0 = math.pi * w * w
    return (mx * mx + my * my) / (s0 * s0)


def regular_polygon_planes(n: int, w: float, phase: float = 0.0) -> list[HalfPlane]:
    """n half-planes with equally spaced normals, all at offset w."""
    return [HalfPlane(phase + TWO_PI * k / n, w) for k in range(n)]


def edge_lengths_midpoints(region: ConvexRegion):
    """Per-edge lengths and midpoints, aligned with edge_plane_indices."""
    v = region.vertices
    nxt = np.roll(v, -1, axis=0)
    d = nxt - v
    return np.hypot(d[:, 0], d[:, 1]), 0.5 * (v + nxt)
