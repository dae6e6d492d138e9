"""Ordered state classification for needle paths.

After every action the model state is classified by four checks, in this
fixed order with short-circuit: path validity, current-target reached
(advancing to the next target in the order, terminal on the final one),
current-target still reachable, critical region reached. The first check
that fires decides the outcome; otherwise the path continues.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

from .environment import Limits, Region, contains
from .geometry import unquantize
from .kinematics import NeedleParams, NeedlePose


class CheckOutcome(Enum):
    CONTINUE = "continue"
    PATH_INVALID = "path_invalid"
    FINAL_TR_REACHED = "final_tr_reached"
    TR_UNREACHABLE = "tr_unreachable"
    CR_REACHED = "cr_reached"


#: outcomes that end a trace; no successors are expanded past them
TERMINAL_OUTCOMES = frozenset(
    {
        CheckOutcome.PATH_INVALID,
        CheckOutcome.FINAL_TR_REACHED,
        CheckOutcome.TR_UNREACHABLE,
        CheckOutcome.CR_REACHED,
    }
)


@dataclass(frozen=True)
class CheckerState:
    tr_index: int = 0
    rotations_used: int = 0
    push_since_rotation_mm: float = math.inf  # no rotation yet
    insertion_depth_mm: float = 0.0
    spacing_violated: bool = False


def after_push(state: CheckerState, push_mm: float) -> CheckerState:
    since = state.push_since_rotation_mm
    if since is not math.inf:
        since = since + push_mm
    return replace(
        state,
        push_since_rotation_mm=since,
        insertion_depth_mm=state.insertion_depth_mm + push_mm,
    )


def after_rotation(state: CheckerState, min_push_mm: float) -> CheckerState:
    violated = state.spacing_violated or (
        state.push_since_rotation_mm is not math.inf
        and state.push_since_rotation_mm < min_push_mm
    )
    return replace(
        state,
        rotations_used=state.rotations_used + 1,
        push_since_rotation_mm=0.0,
        spacing_violated=violated,
    )


@dataclass(frozen=True)
class CheckContext:
    """The region view and limits a checker evaluation runs against.

    `crs` is whichever critical-region set the caller is entitled to:
    planner-known regions inside synthesis, ground truth inside the
    plant and monitors. `cr_inflation_mm` widens CRs by the planning
    clearance (and optionally a needle tip radius).
    """

    workspace_min: tuple[float, float, float]
    workspace_max: tuple[float, float, float]
    targets: tuple[Region, ...]
    crs: tuple[Region, ...]
    limits: Limits
    params: NeedleParams
    cr_inflation_mm: float = 0.0


def check_path_valid(pose: NeedlePose, state: CheckerState, ctx: CheckContext) -> bool:
    if state.spacing_violated:
        return False
    if state.rotations_used > ctx.limits.max_rotations:
        return False
    if state.insertion_depth_mm > ctx.limits.max_insertion_mm + 1e-9:
        return False
    p = unquantize(pose.pos, ctx.params.scale)
    for i in range(3):
        if not ctx.workspace_min[i] <= p[i] <= ctx.workspace_max[i]:
            return False
    return True


def check_tr_reached(pose: NeedlePose, ctx: CheckContext, tr_index: int) -> bool:
    return contains(ctx.targets[tr_index], pose.pos, ctx.params.scale)


def check_tr_reachable(pose: NeedlePose, state: CheckerState, ctx: CheckContext) -> bool:
    """False only when the target is provably out of reach.

    The needle always curves at radius r and only moves forward, so over
    a remaining arc budget B:

    - it cannot reach anything farther away than B (straight-line bound);
    - while B < pi*r the along-tangent progress r*sin(s/r) stays
      positive, so a target entirely behind the tip is lost;
    - lateral offset from the tangent line grows at most as the maximal
      single turn, r*(1-cos(s/r)) for s <= pi*r/2 and r + (s - pi*r/2)
      beyond, so a target sphere entirely inside the minimum-turn torus
      is lost whenever B cannot buy the required lateral offset.

    Each test is gated by its validity condition; anything not provably
    lost counts as reachable (pruning stays conservative).
    """
    tr = ctx.targets[state.tr_index]
    rho = tr.radius_mm
    r = ctx.params.radius_mm
    budget = ctx.limits.max_insertion_mm - state.insertion_depth_mm
    p = unquantize(pose.pos, ctx.params.scale)
    q = unquantize(tr.center, ctx.params.scale)
    d = (q[0] - p[0], q[1] - p[1], q[2] - p[2])
    dist2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
    distance = math.sqrt(dist2)

    # insertion budget vs straight-line distance (an arc-length underestimate)
    if distance - rho > budget + 1e-9:
        return False

    t = pose.tangent
    along = d[0] * t[0] + d[1] * t[1] + d[2] * t[2]

    # target sphere entirely behind the tip plane
    if along <= -rho and budget < math.pi * r:
        return False

    # target sphere entirely inside the minimum-turn solid torus
    # |q-p|^2 < 2 r b(q), tested with the sphere-radius margin
    lateral = math.sqrt(max(dist2 - along * along, 0.0))
    if dist2 + 2.0 * rho * distance + rho * rho < 2.0 * r * (lateral - rho):
        need = lateral - rho
        if need <= r:
            s_lat = r * math.acos(1.0 - need / r)
        else:
            s_lat = math.pi * r / 2.0 + (need - r)
        if budget < s_lat - 1e-9:
            return False

    return True


def check_cr_reached(pose: NeedlePose, ctx: CheckContext) -> bool:
    for region in ctx.crs:
        if contains(region, pose.pos, ctx.params.scale, ctx.cr_inflation_mm):
            return True
    return False


def run_checker(
    pose: NeedlePose, state: CheckerState, ctx: CheckContext
) -> tuple[CheckOutcome, CheckerState]:
    """Evaluate the four checks in order with short-circuit semantics."""
    if not check_path_valid(pose, state, ctx):
        return CheckOutcome.PATH_INVALID, state
    if check_tr_reached(pose, ctx, state.tr_index):
        nxt = state.tr_index + 1
        state = replace(state, tr_index=nxt)
        if nxt == len(ctx.targets):
            return CheckOutcome.FINAL_TR_REACHED, state
        # fall through: remaining checks run against the next target
    if not check_tr_reachable(pose, state, ctx):
        return CheckOutcome.TR_UNREACHABLE, state
    if check_cr_reached(pose, ctx):
        return CheckOutcome.CR_REACHED, state
    return CheckOutcome.CONTINUE, state
