"""The controlled system behind the planning loop.

`Plant` is the minimal device interface the replanning loop drives:
measure, push, rotate, pull. `VirtualNeedle` implements it with the same
circular-arc motion model the planner uses, plus configurable bounded
measurement noise, per-step tangent deflection and an attraction toward
previously cut paths. Ground-truth regions live here and nowhere else:
the force flag reports true-position proximity to a critical region
(detection shell), and the plant records whether the true tip ever
entered one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .environment import Region, Scenario, contains
from .geometry import (
    Vec3,
    cross,
    dot,
    normalize,
    orthonormal_frame,
    rotate_about_axis,
    unquantize,
    vsub,
)
from .kinematics import (
    NeedleParams,
    NeedlePose,
    advance_along_circle,
    rotate_bevel,
)


class Plant(Protocol):
    """Device-side operations available to the replanning loop."""

    def measure(self) -> tuple[Vec3, bool]:
        """Measured tip position (mm) and the force flag."""
        ...

    def push(self) -> None:
        """Advance one time step dt."""
        ...

    def rotate(self, deg: int) -> None:
        """Axial bevel rotation by 90/180/270 degrees."""
        ...

    def pull(self, distance_mm: float) -> int:
        """Retract along the already-cut path; returns steps retraced."""
        ...


@dataclass(frozen=True)
class DisturbanceConfig:
    noise_mm: float = 0.0  # bounded, uniform per axis in [-noise, +noise]
    deflection_rad: float = 0.0  # max per-step tangent perturbation
    path_attraction: float = 0.3  # tangent blend when near an old path
    attraction_range_mm: float = 1.0


class VirtualNeedle:
    """Virtual plant sharing the planner's motion model.

    With zero noise and zero deflection the measured positions equal the
    true positions exactly, and push runs stay on the exact motion
    circle (anchored arc arithmetic, no per-step drift).
    """

    def __init__(
        self,
        params: NeedleParams,
        start: NeedlePose,
        actual_crs: Sequence[Region],
        detection_radii_mm: Sequence[float],
        disturbance: DisturbanceConfig = DisturbanceConfig(),
        seed: int = 0,
    ) -> None:
        if len(actual_crs) != len(detection_radii_mm):
            raise ValueError("one detection radius per critical region required")
        self.params = params
        self.disturbance = disturbance
        self._crs = tuple(actual_crs)
        self._drs = tuple(detection_radii_mm)
        self._rng = np.random.default_rng(seed)
        self._pose = start
        self._anchor = start
        self._run = 0
        self._history: list[NeedlePose] = [start]
        self.critical_hit = False
        self.steps_taken = 0
        self._check_true_state()

    @property
    def true_pose(self) -> NeedlePose:
        """Ground truth; for plant-side monitors and tests only."""
        return self._pose

    def _check_true_state(self) -> None:
        if not self.critical_hit:
            for region in self._crs:
                if contains(region, self._pose.pos, self.params.scale):
                    self.critical_hit = True
                    break

    def _force_flag(self) -> bool:
        p = self._pose.pos
        scale = self.params.scale
        for region, dr in zip(self._crs, self._drs):
            c = region.center
            dx = (p[0] - c[0]) / scale
            dy = (p[1] - c[1]) / scale
            dz = (p[2] - c[2]) / scale
            if dx * dx + dy * dy + dz * dz <= dr * dr:
                return True
        return False

    def measure(self) -> tuple[Vec3, bool]:
        pos = unquantize(self._pose.pos, self.params.scale)
        sigma = self.disturbance.noise_mm
        if sigma > 0.0:
            noise = self._rng.uniform(-sigma, sigma, size=3)
            pos = (pos[0] + noise[0], pos[1] + noise[1], pos[2] + noise[2])
        return pos, self._force_flag()

    def _deflect(self) -> bool:
        """Perturb the true tangent; returns True if the frame changed."""
        d = self.disturbance
        changed = False
        tangent = self._pose.tangent
        if d.deflection_rad > 0.0:
            angle = float(self._rng.uniform(0.0, d.deflection_rad))
            phase = float(self._rng.uniform(0.0, 2.0 * np.pi))
            # random axis perpendicular to the tangent
            ref = (1.0, 0.0, 0.0) if abs(tangent[0]) < 0.9 else (0.0, 1.0, 0.0)
            e1 = normalize(cross(tangent, ref))
            e2 = cross(tangent, e1)
            axis = (
                e1[0] * np.cos(phase) + e2[0] * np.sin(phase),
                e1[1] * np.cos(phase) + e2[1] * np.sin(phase),
                e1[2] * np.cos(phase) + e2[2] * np.sin(phase),
            )
            tangent = rotate_about_axis(tangent, normalize(axis), angle)
            changed = True
        if d.deflection_rad > 0.0 and d.path_attraction > 0.0 and len(self._history) > 4:
            # steer toward a formerly cut path when the tip is close to one
            p = unquantize(self._pose.pos, self.params.scale)
            best = None
            best_d = d.attraction_range_mm
            recent = 4  # skip the segments the tip is currently extending
            pts = [unquantize(h.pos, self.params.scale) for h in self._history[:-recent]]
            for a, b in zip(pts, pts[1:]):
                ab = vsub(b, a)
                denom = dot(ab, ab)
                if denom <= 0.0:
                    continue
                t = min(max(dot(vsub(p, a), ab) / denom, 0.0), 1.0)
                q = (a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2])
                dd = ((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 + (p[2] - q[2]) ** 2) ** 0.5
                if dd < best_d:
                    best_d = dd
                    best = normalize(ab) if denom > 1e-12 else None
            if best is not None:
                w = d.path_attraction
                tangent = normalize(
                    (
                        (1.0 - w) * tangent[0] + w * best[0],
                        (1.0 - w) * tangent[1] + w * best[1],
                        (1.0 - w) * tangent[2] + w * best[2],
                    )
                )
                changed = True
        if changed:
            from .geometry import orthonormal_frame

            t, n = orthonormal_frame(tangent, self._pose.normal)
            self._pose = NeedlePose(self._pose.pos, t, n)
        return changed

    def push(self) -> None:
        if self._deflect():
            self._anchor = self._pose
            self._run = 0
        self._run += 1
        self._pose = advance_along_circle(self._anchor, self._run, self.params)
        self._history.append(self._pose)
        self.steps_taken += 1
        self._check_true_state()

    def rotate(self, deg: int) -> None:
        self._pose = rotate_bevel(self._pose, deg)
        self._anchor = self._pose
        self._run = 0
        self._history[-1] = self._pose

    def pull(self, distance_mm: float) -> int:
        """Retrace the recorded path backwards (no deflection, no checks:
        the needle follows the channel it already cut)."""
        steps = int(round(distance_mm / self.params.step_mm))
        steps = min(steps, len(self._history) - 1)
        for _ in range(steps):
            self._history.pop()
        self._pose = self._history[-1]
        self._anchor = self._pose
        self._run = 0
        self.steps_taken += steps
        return steps


def plant_for_scenario(
    scenario: Scenario,
    disturbance: DisturbanceConfig = DisturbanceConfig(),
    seed: int = 0,
    radius_mm: float | None = None,
) -> VirtualNeedle:
    """Virtual needle carrying the scenario's ground-truth regions."""
    crs = scenario.critical_regions()
    drs = [scenario.detection_radius_mm(cr) for cr in crs]
    params = scenario.params()
    if radius_mm is not None:
        params = NeedleParams(radius_mm, params.speed_mm_s, params.dt_s, params.scale)
    return VirtualNeedle(params, scenario.start_pose(), crs, drs, disturbance, seed)
