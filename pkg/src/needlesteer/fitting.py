"""Motion-circle estimation from sampled tip positions.

The measured positions of a short probe push are fitted with a plane,
projected, and fitted with an algebraic (Kasa) least-squares circle.
The result carries the circle frame needed to continue planning: centre,
radius, oriented plane normal and the travel tangent at the last sample.
Also hosts the trace-deviation metric used for trace matching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Vec3, cross, dot, normalize, vsub


class DegenerateGeometry(ValueError):
    """Input points do not determine the requested geometry."""


class InsufficientData(ValueError):
    """Not enough samples (or arc span) to attempt a fit."""


@dataclass(frozen=True)
class TraceSample:
    t_s: float
    pos: Vec3


@dataclass(frozen=True)
class FittedCircle:
    center: Vec3
    radius_mm: float
    plane_normal: Vec3  # oriented: travel direction = plane_normal x radial
    tangent_at_end: Vec3
    rms_residual_mm: float


def fit_plane(points: Sequence[Vec3]) -> tuple[Vec3, Vec3]:
    """Least-squares plane through the centroid (unit normal).

    Degenerate when the points are (near-)collinear: the second scatter
    eigenvalue below 1e-9 of the largest.
    """
    if len(points) < 3:
        raise InsufficientData(f"plane fit needs >= 3 points, got {len(points)}")
    arr = np.asarray(points, dtype=float)
    centroid = arr.mean(axis=0)
    centered = arr - centroid
    # eigenvalues ascending; eigenvectors of the 3x3 scatter matrix
    evals, evecs = np.linalg.eigh(centered.T @ centered)
    if evals[2] <= 0.0 or evals[1] / evals[2] < 1e-9:
        raise DegenerateGeometry("points are collinear; no unique plane")
    n = evecs[:, 0]
    return tuple(centroid), tuple(n / np.linalg.norm(n))


def fit_circle(points2d: Sequence[tuple[float, float]]) -> tuple[tuple[float, float], float]:
    """Kasa algebraic circle fit in the plane; exact on noiseless circles."""
    if len(points2d) < 3:
        raise InsufficientData(f"circle fit needs >= 3 points, got {len(points2d)}")
    arr = np.asarray(points2d, dtype=float)
    centered = arr - arr.mean(axis=0)
    evals = np.linalg.eigvalsh(centered.T @ centered)
    if evals[1] <= 0.0 or evals[0] / evals[1] < 1e-9:
        raise DegenerateGeometry("points are collinear; treat as straight motion")
    a = np.column_stack([2.0 * arr[:, 0], 2.0 * arr[:, 1], np.ones(len(arr))])
    b = arr[:, 0] ** 2 + arr[:, 1] ** 2
    (cx, cy, c), *_ = np.linalg.lstsq(a, b, rcond=None)[0].reshape(1, 3).tolist()
    r2 = c + cx * cx + cy * cy
    if r2 <= 0.0:
        raise DegenerateGeometry("circle fit collapsed to a non-positive radius")
    return (cx, cy), math.sqrt(r2)


def polyline_length(points: Sequence[Vec3]) -> float:
    total = 0.0
    for a, b in zip(points, points[1:]):
        total += math.dist(a, b)
    return total


def fit_motion_circle(
    samples: Sequence[TraceSample],
    min_samples: int = 8,
    min_span_mm: float = 3.0,
    r_min_mm: float = 10.0,
    r_max_mm: float = 500.0,
) -> FittedCircle:
    """Fit the motion circle to a sampled trace.

    Raises InsufficientData when the trace is too short and
    DegenerateGeometry when the points do not pin down a circle (straight
    or ambiguous motion); callers fall back to the a-priori radius then.
    The radius is clamped to [r_min_mm, r_max_mm] to keep absurd fits
    from short noisy probes out of the planner.
    """
    if len(samples) < min_samples:
        raise InsufficientData(
            f"need >= {min_samples} samples, got {len(samples)}"
        )
    pts = [s.pos for s in samples]
    if polyline_length(pts) < min_span_mm:
        raise InsufficientData(f"trace spans less than {min_span_mm} mm")

    centroid, plane_n = fit_plane(pts)
    # in-plane orthonormal basis
    seed = (1.0, 0.0, 0.0) if abs(plane_n[0]) < 0.9 else (0.0, 1.0, 0.0)
    u = normalize(cross(plane_n, seed))
    v = cross(plane_n, u)
    flat = [(dot(vsub(p, centroid), u), dot(vsub(p, centroid), v)) for p in pts]
    (cx, cy), radius = fit_circle(flat)
    radius = min(max(radius, r_min_mm), r_max_mm)
    center = (
        centroid[0] + cx * u[0] + cy * v[0],
        centroid[1] + cx * u[1] + cy * v[1],
        centroid[2] + cx * u[2] + cy * v[2],
    )

    end = pts[-1]
    travel = vsub(end, pts[-2])
    if math.dist(end, pts[-2]) <= 1e-12:
        raise DegenerateGeometry("no displacement at trace end; tangent sign unknown")
    radial = vsub(end, center)
    # orient the axis so that axis x radial points along the travel direction
    axis = plane_n if dot(cross(plane_n, radial), travel) >= 0.0 else (
        -plane_n[0],
        -plane_n[1],
        -plane_n[2],
    )
    tangent = normalize(cross(axis, radial))

    total = 0.0
    for px, py in flat:
        rho = math.hypot(px - cx, py - cy)
        h = 0.0  # in-plane coordinates already dropped the normal offset
        total += (rho - radius) ** 2 + h * h
    # out-of-plane residuals
    for p in pts:
        total += dot(vsub(p, centroid), plane_n) ** 2
    rms = math.sqrt(total / len(pts))
    return FittedCircle(center, radius, axis, tangent, rms)


def _point_segment_dist(p: Vec3, a: Vec3, b: Vec3) -> float:
    ab = vsub(b, a)
    denom = dot(ab, ab)
    if denom <= 0.0:
        return math.dist(p, a)
    t = dot(vsub(p, a), ab) / denom
    t = min(max(t, 0.0), 1.0)
    q = (a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2])
    return math.dist(p, q)


def trace_deviation(
    reference: Sequence[TraceSample], candidate: Sequence[TraceSample]
) -> tuple[float, float, float]:
    """(min, avg, max) distance from each reference point to the candidate
    polyline."""
    if not reference or not candidate:
        raise InsufficientData("both traces must be non-empty")
    cand = [s.pos for s in candidate]
    devs = []
    for s in reference:
        if len(cand) == 1:
            devs.append(math.dist(s.pos, cand[0]))
            continue
        devs.append(
            min(_point_segment_dist(s.pos, a, b) for a, b in zip(cand, cand[1:]))
        )
    return min(devs), sum(devs) / len(devs), max(devs)


TRACE_HEADER = "t_s,x_mm,y_mm,z_mm"


def trace_to_csv(samples: Sequence[TraceSample]) -> str:
    lines = [TRACE_HEADER]
    for s in samples:
        lines.append(f"{s.t_s:.6f},{s.pos[0]:.6f},{s.pos[1]:.6f},{s.pos[2]:.6f}")
    return "\n".join(lines) + "\n"


def trace_from_csv(text: str) -> list[TraceSample]:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != TRACE_HEADER:
        raise ValueError(f"trace file must start with header {TRACE_HEADER!r}")
    samples: list[TraceSample] = []
    prev_t = -math.inf
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 4:
            raise ValueError(f"line {lineno}: expected 4 comma-separated values")
        try:
            t, x, y, z = (float(p) for p in parts)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: non-numeric value") from exc
        if t <= prev_t:
            raise ValueError(f"line {lineno}: timestamps must strictly increase")
        prev_t = t
        samples.append(TraceSample(t, (x, y, z)))
    return samples
