"""Circular-arc needle motion.

A bevel-tip needle under pure insertion travels along its motion circle:
the circle of the configured radius whose centre sits along the current
curvature normal. An axial bevel rotation (90/180/270 degrees) re-orients
that normal about the tangent without moving the tip.

Within an uninterrupted run of pushes, poses are computed from the pose
at the start of the run (accumulated arc angle), not by chaining single
steps, so grid quantization never accumulates: every pose of a push run
stays within one grid cell of the run's exact motion circle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .geometry import (
    IVec3,
    Vec3,
    cross,
    dot,
    norm,
    orthonormal_frame,
    quantize,
    rotate_about_axis,
    unquantize,
    vadd,
    vmul,
    vsub,
)

ROTATION_DEGREES = (90, 180, 270)


@dataclass(frozen=True)
class Action:
    """One controllable step: a push over dt, or a bevel rotation."""

    kind: str  # "push" | "rotate"
    deg: int = 0

    def __str__(self) -> str:
        return "PUSH" if self.kind == "push" else f"ROT {self.deg}"


PUSH = Action("push")
ROTATIONS = {d: Action("rotate", d) for d in ROTATION_DEGREES}


def rotate_action(deg: int) -> Action:
    if deg not in ROTATION_DEGREES:
        raise ValueError(f"rotation must be one of {ROTATION_DEGREES}, got {deg}")
    return ROTATIONS[deg]


@dataclass(frozen=True)
class NeedleParams:
    """Motion-circle radius, insertion speed, time step and grid scale."""

    radius_mm: float
    speed_mm_s: float
    dt_s: float
    scale: int = 100

    def __post_init__(self) -> None:
        if self.radius_mm <= 0.0:
            raise ValueError("radius_mm must be positive")
        if self.speed_mm_s <= 0.0:
            raise ValueError("speed_mm_s must be positive")
        if self.dt_s <= 0.0:
            raise ValueError("dt_s must be positive")
        if self.scale < 1:
            raise ValueError("scale must be a positive integer")
        theta = self.speed_mm_s * self.dt_s / self.radius_mm
        if not 0.0 < theta <= math.pi / 2.0:
            raise ValueError(
                f"arc angle per step v*dt/r = {theta:.4f} rad outside (0, pi/2]"
            )

    @property
    def step_mm(self) -> float:
        return self.speed_mm_s * self.dt_s

    @property
    def theta_rad(self) -> float:
        return self.speed_mm_s * self.dt_s / self.radius_mm


@dataclass(frozen=True)
class NeedlePose:
    """Tip position on the integer grid plus the unit tangent/normal frame.

    The normal points from the tip toward the centre of the current
    motion circle.
    """

    pos: IVec3
    tangent: Vec3
    normal: Vec3

    def pos_mm(self, scale: int) -> Vec3:
        return unquantize(self.pos, scale)


def make_pose(pos_mm: Vec3, tangent: Vec3, normal: Vec3, scale: int) -> NeedlePose:
    """Build a pose from millimetre data, re-orthonormalizing the frame."""
    t, n = orthonormal_frame(tangent, normal)
    return NeedlePose(quantize(pos_mm, scale), t, n)


def validate_pose(pose: NeedlePose, tol: float = 1e-6) -> None:
    if abs(norm(pose.tangent) - 1.0) > tol:
        raise ValueError("pose tangent is not unit length")
    if abs(norm(pose.normal) - 1.0) > tol:
        raise ValueError("pose normal is not unit length")
    if abs(dot(pose.tangent, pose.normal)) > tol:
        raise ValueError("pose tangent and normal are not orthogonal")


@dataclass(frozen=True)
class MotionCircle:
    center: Vec3
    axis: Vec3
    radius: float


def motion_circle(pose: NeedlePose, radius_mm: float, scale: int) -> MotionCircle:
    """Circle the tip follows under pure insertion from this pose.

    centre = pos + r * normal; axis = tangent x normal, oriented so that
    travel from the pose follows the right-handed arc with initial
    velocity along the tangent.
    """
    p = unquantize(pose.pos, scale)
    center = vadd(p, vmul(pose.normal, radius_mm))
    axis = cross(pose.tangent, pose.normal)
    return MotionCircle(center, axis, radius_mm)


def advance_along_circle(anchor: NeedlePose, steps: int, params: NeedleParams) -> NeedlePose:
    """Pose after `steps` pushes from `anchor`, all on the anchor's circle.

    Computing from the run anchor (rather than chaining single steps)
    keeps every intermediate pose within one quantization cell of the
    exact circle, regardless of run length.
    """
    if steps == 0:
        return anchor
    r = params.radius_mm
    phi = params.theta_rad * steps
    p0 = unquantize(anchor.pos, params.scale)
    center = vadd(p0, vmul(anchor.normal, r))
    axis = cross(anchor.tangent, anchor.normal)
    rad = vsub(p0, center)  # = -r * normal, length r
    c = math.cos(phi)
    s = math.sin(phi)
    swing = cross(axis, rad)
    pos = (
        center[0] + rad[0] * c + swing[0] * s,
        center[1] + rad[1] * c + swing[1] * s,
        center[2] + rad[2] * c + swing[2] * s,
    )
    tangent = rotate_about_axis(anchor.tangent, axis, phi)
    normal = vmul(vsub(center, pos), 1.0 / r)
    t, n = orthonormal_frame(tangent, normal)
    return NeedlePose(quantize(pos, params.scale), t, n)


def step(pose: NeedlePose, params: NeedleParams) -> NeedlePose:
    """One push of duration dt: arc length v*dt along the motion circle."""
    return advance_along_circle(pose, 1, params)


def rotate_bevel(pose: NeedlePose, deg: int) -> NeedlePose:
    """Instantaneous axial rotation: position and tangent unchanged,
    normal rotated right-handed about the tangent."""
    if deg not in ROTATION_DEGREES:
        raise ValueError(f"rotation must be one of {ROTATION_DEGREES}, got {deg}")
    n = rotate_about_axis(pose.normal, pose.tangent, math.radians(deg))
    t, n = orthonormal_frame(pose.tangent, n)
    return NeedlePose(pose.pos, t, n)


Reaction = Callable[[NeedlePose], NeedlePose]


def apply_plan(
    pose: NeedlePose,
    params: NeedleParams,
    plan: Sequence[Action],
    substeps: int = 1,
    reaction: Reaction | None = None,
) -> list[NeedlePose]:
    """Forward-simulate a plan; returns the pose sequence including the
    initial pose. Each push advances `substeps` micro steps of dt.

    A non-None reaction is applied after every action and re-anchors the
    current push run (the environment may have moved the needle).
    """
    poses = [pose]
    anchor = pose
    run = 0
    cur = pose
    for action in plan:
        if action.kind == "push":
            run += substeps
            cur = advance_along_circle(anchor, run, params)
        else:
            cur = rotate_bevel(cur, action.deg)
            anchor = cur
            run = 0
        if reaction is not None:
            cur = reaction(cur)
            anchor = cur
            run = 0
        poses.append(cur)
    return poses


def micro_push_poses(
    pose: NeedlePose,
    params: NeedleParams,
    plan: Sequence[Action],
    substeps: int = 1,
) -> list[NeedlePose]:
    """Pose after every micro push of the plan, in execution order.

    Rotations contribute no entry (the tip does not move); the list
    length is substeps times the number of pushes.
    """
    out: list[NeedlePose] = []
    anchor = pose
    run = 0
    cur = pose
    for action in plan:
        if action.kind == "push":
            for _ in range(substeps):
                run += 1
                cur = advance_along_circle(anchor, run, params)
                out.append(cur)
        else:
            cur = rotate_bevel(cur, action.deg)
            anchor = cur
            run = 0
    return out


def plan_arc_length_mm(plan: Iterable[Action], params: NeedleParams, substeps: int = 1) -> float:
    return sum(1 for a in plan if a.kind == "push") * substeps * params.step_mm


def plan_rotation_count(plan: Iterable[Action]) -> int:
    return sum(1 for a in plan if a.kind == "rotate")
