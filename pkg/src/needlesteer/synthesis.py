"""Bounded search for winning motion plans.

Replaces the offline model checker's two queries natively: an existence
check for a path into the final target, and synthesis of a concrete
push/rotate plan whose forward simulation reaches it without entering a
known critical region.

The action space is finite: pushes of one fixed step and bevel rotations
of 90/180/270 degrees, capped per synthesis and spaced by a minimum push
distance. Search runs iterative deepening on rotation count (rotations
are the branching multiplier, and fewer rotations is the preferred
tie-break), and inside each deepening level best-first on the admissible
remaining-distance heuristic |target - tip| - target_radius. Expansion
order Push < Rot90 < Rot180 < Rot270 is fixed, so results are
deterministic bit for bit.

Pushes are checked against the workspace and critical regions at micro
resolution (each plan push covers `substeps` micro steps), matching the
granularity at which the plant is monitored. When `cr_inflation_mm` is
positive, plans are additionally required to *end* clear of inflated
critical regions: target-before-critical check ordering would otherwise
let a plan terminate inside a region that only the execution monitors
could catch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from heapq import heappop, heappush
from typing import Sequence

from .checker import (
    CheckContext,
    CheckOutcome,
    CheckerState,
    after_push,
    after_rotation,
    check_cr_reached,
    run_checker,
)
from .environment import KnowledgeBase, Scenario
from .geometry import quantize, unquantize
from .kinematics import (
    PUSH,
    ROTATION_DEGREES,
    ROTATIONS,
    Action,
    NeedleParams,
    NeedlePose,
    Reaction,
    advance_along_circle,
    apply_plan,
    plan_arc_length_mm,
    plan_rotation_count,
    rotate_bevel,
)


class SynthesisStatus(Enum):
    PLAN = "plan"
    INFEASIBLE = "infeasible"
    BUDGET_EXCEEDED = "budget_exceeded"


@dataclass(frozen=True)
class SearchConfig:
    max_rotations: int = 3
    min_push_mm: float = 3.0
    substeps: int = 4
    node_budget: int = 300_000
    cr_inflation_mm: float = 0.0
    require_clear_terminal: bool = True
    cost_per_node_s: float = 2e-5  # deterministic synthesis-time model


@dataclass(frozen=True)
class MotionPlan:
    actions: tuple[Action, ...]
    terminal_pose: NeedlePose
    arc_length_mm: float
    rotation_count: int


@dataclass(frozen=True)
class SynthesisResult:
    status: SynthesisStatus
    plan: MotionPlan | None
    states_expanded: int
    elapsed_s: float

    @property
    def feasible(self) -> bool:
        return self.status is SynthesisStatus.PLAN


def make_context(
    scenario: Scenario,
    kb: KnowledgeBase,
    params: NeedleParams,
    config: SearchConfig,
) -> CheckContext:
    return CheckContext(
        workspace_min=scenario.workspace_min,
        workspace_max=scenario.workspace_max,
        targets=scenario.targets(),
        crs=kb.planning_crs(),
        limits=scenario.limits,
        params=params,
        cr_inflation_mm=config.cr_inflation_mm,
    )


def _heuristic(pose: NeedlePose, ctx: CheckContext, tr_index: int) -> float:
    tr = ctx.targets[min(tr_index, len(ctx.targets) - 1)]
    p = unquantize(pose.pos, ctx.params.scale)
    q = unquantize(tr.center, ctx.params.scale)
    d = math.sqrt(
        (q[0] - p[0]) ** 2 + (q[1] - p[1]) ** 2 + (q[2] - p[2]) ** 2
    )
    return max(d - tr.radius_mm, 0.0)


def _micro_positions_clear(
    anchor: NeedlePose,
    start_run: int,
    end_run: int,
    ctx: CheckContext,
) -> bool:
    """Workspace and critical-region checks for the micro poses strictly
    inside a push (the push's final pose goes through the full checker)."""
    params = ctx.params
    scale = params.scale
    r = params.radius_mm
    theta = params.theta_rad
    p0 = unquantize(anchor.pos, scale)
    n0 = anchor.normal
    t0 = anchor.tangent
    cx = p0[0] + r * n0[0]
    cy = p0[1] + r * n0[1]
    cz = p0[2] + r * n0[2]
    ax = t0[1] * n0[2] - t0[2] * n0[1]
    ay = t0[2] * n0[0] - t0[0] * n0[2]
    az = t0[0] * n0[1] - t0[1] * n0[0]
    rx, ry, rz = p0[0] - cx, p0[1] - cy, p0[2] - cz
    sx = ay * rz - az * ry
    sy = az * rx - ax * rz
    sz = ax * ry - ay * rx
    lo = ctx.workspace_min
    hi = ctx.workspace_max
    spheres = [
        (
            reg.center[0] / scale,
            reg.center[1] / scale,
            reg.center[2] / scale,
            (reg.radius_mm + ctx.cr_inflation_mm) ** 2,
        )
        for reg in ctx.crs
    ]
    for j in range(start_run + 1, end_run):
        phi = theta * j
        c = math.cos(phi)
        s = math.sin(phi)
        px = cx + rx * c + sx * s
        py = cy + ry * c + sy * s
        pz = cz + rz * c + sz * s
        # containment and bounds operate on the quantized model state
        q = unquantize(quantize((px, py, pz), scale), scale)
        if not (lo[0] <= q[0] <= hi[0] and lo[1] <= q[1] <= hi[1] and lo[2] <= q[2] <= hi[2]):
            return False
        for bx, by, bz, r2 in spheres:
            dx = q[0] - bx
            dy = q[1] - by
            dz = q[2] - bz
            if dx * dx + dy * dy + dz * dz <= r2:
                return False
    return True


def advance_push(
    anchor: NeedlePose,
    run: int,
    cstate: CheckerState,
    ctx: CheckContext,
    substeps: int,
) -> tuple[NeedlePose, CheckOutcome, CheckerState]:
    """Shared push semantics for search, replay and verification: advance
    `substeps` micro steps on the anchor circle, fail on any intermediate
    collision, then classify the resulting pose."""
    end_run = run + substeps
    pose = advance_along_circle(anchor, end_run, ctx.params)
    cstate = after_push(cstate, substeps * ctx.params.step_mm)
    if not _micro_positions_clear(anchor, run, end_run, ctx):
        return pose, CheckOutcome.PATH_INVALID, cstate
    outcome, cstate = run_checker(pose, cstate, ctx)
    return pose, outcome, cstate


def _reconstruct(nodes: list, idx: int) -> tuple[Action, ...]:
    actions: list[Action] = []
    while idx >= 0:
        pose, anchor, run, cstate, parent, action = nodes[idx]
        if action is not None:
            actions.append(action)
        idx = parent
    actions.reverse()
    return tuple(actions)


def synthesize(
    scenario: Scenario,
    kb: KnowledgeBase,
    pose: NeedlePose,
    cstate: CheckerState,
    params: NeedleParams,
    config: SearchConfig,
    reaction: Reaction | None = None,
) -> SynthesisResult:
    """Search for a plan reaching the final target from the given state.

    Deterministic for fixed inputs. Returns INFEASIBLE only once the
    bounded action space is exhausted; hitting the node budget instead
    reports BUDGET_EXCEEDED (an honest "unknown").
    """
    ctx = make_context(scenario, kb, params, config)
    expanded = 0

    def result(status: SynthesisStatus, plan: MotionPlan | None) -> SynthesisResult:
        return SynthesisResult(status, plan, expanded, expanded * config.cost_per_node_s)

    outcome, cstate0 = run_checker(pose, cstate, ctx)
    if outcome is CheckOutcome.FINAL_TR_REACHED:
        plan = MotionPlan((), pose, 0.0, 0)
        return result(SynthesisStatus.PLAN, plan)
    if outcome is not CheckOutcome.CONTINUE:
        return result(SynthesisStatus.INFEASIBLE, None)

    min_push = config.min_push_mm
    push_mm = config.substeps * params.step_mm
    for rot_cap in range(config.max_rotations + 1):
        # node: (pose, anchor, run, cstate, parent_index, action)
        nodes: list[tuple] = [(pose, pose, 0, cstate0, -1, None)]
        heap: list[tuple[float, int, int]] = [(_heuristic(pose, ctx, cstate0.tr_index), 0, 0)]
        counter = 1
        while heap:
            _, _, idx = heappop(heap)
            expanded += 1
            if expanded > config.node_budget:
                return result(SynthesisStatus.BUDGET_EXCEEDED, None)
            cur_pose, anchor, run, cur_state, _, _ = nodes[idx]

            # push
            new_pose, outcome, new_state = advance_push(
                anchor, run, cur_state, ctx, config.substeps
            )
            if reaction is not None and outcome in (CheckOutcome.CONTINUE, CheckOutcome.FINAL_TR_REACHED):
                new_pose = reaction(new_pose)
                outcome, new_state = run_checker(new_pose, new_state, ctx)
            if outcome is CheckOutcome.FINAL_TR_REACHED and not (
                config.require_clear_terminal
                and config.cr_inflation_mm > 0.0
                and check_cr_reached(new_pose, ctx)
            ):
                actions = _reconstruct(nodes, idx) + (PUSH,)
                plan = MotionPlan(
                    actions,
                    new_pose,
                    plan_arc_length_mm(actions, params, config.substeps),
                    plan_rotation_count(actions),
                )
                return result(SynthesisStatus.PLAN, plan)
            if outcome is CheckOutcome.CONTINUE:
                child_anchor = new_pose if reaction is not None else anchor
                child_run = 0 if reaction is not None else run + config.substeps
                nodes.append((new_pose, child_anchor, child_run, new_state, idx, PUSH))
                heappush(heap, (_heuristic(new_pose, ctx, new_state.tr_index), counter, len(nodes) - 1))
                counter += 1

            # rotations
            if cur_state.rotations_used < rot_cap and (
                cur_state.push_since_rotation_mm is math.inf
                or cur_state.push_since_rotation_mm >= min_push - 1e-9
            ):
                for deg in ROTATION_DEGREES:
                    rot_pose = rotate_bevel(cur_pose, deg)
                    rot_state = after_rotation(cur_state, min_push)
                    if reaction is not None:
                        rot_pose = reaction(rot_pose)
                    outcome, rot_state = run_checker(rot_pose, rot_state, ctx)
                    if outcome is CheckOutcome.FINAL_TR_REACHED and not (
                        config.require_clear_terminal
                        and config.cr_inflation_mm > 0.0
                        and check_cr_reached(rot_pose, ctx)
                    ):
                        actions = _reconstruct(nodes, idx) + (ROTATIONS[deg],)
                        plan = MotionPlan(
                            actions,
                            rot_pose,
                            plan_arc_length_mm(actions, params, config.substeps),
                            plan_rotation_count(actions),
                        )
                        return result(SynthesisStatus.PLAN, plan)
                    if outcome is CheckOutcome.CONTINUE:
                        nodes.append((rot_pose, rot_pose, 0, rot_state, idx, ROTATIONS[deg]))
                        heappush(
                            heap,
                            (_heuristic(rot_pose, ctx, rot_state.tr_index), counter, len(nodes) - 1),
                        )
                        counter += 1

    return result(SynthesisStatus.INFEASIBLE, None)


def exists_path(
    scenario: Scenario,
    kb: KnowledgeBase,
    config: SearchConfig,
    params: NeedleParams | None = None,
    reaction: Reaction | None = None,
) -> tuple[bool | None, list[NeedlePose], SynthesisResult]:
    """Existence query from the scenario start state.

    Returns (feasible, witness, result); feasible is None when the node
    budget ran out before the space was decided. The witness is the pose
    trace of the found plan (a replayable review trace), empty when the
    start already satisfies the target.
    """
    params = params or scenario.params()
    res = synthesize(
        scenario, kb, scenario.start_pose(), CheckerState(), params, config, reaction
    )
    if res.status is SynthesisStatus.PLAN:
        assert res.plan is not None
        witness = apply_plan(
            scenario.start_pose(), params, res.plan.actions, config.substeps, reaction
        )
        return True, witness, res
    if res.status is SynthesisStatus.INFEASIBLE:
        return False, [], res
    return None, [], res


def verify_plan_safe(
    scenario: Scenario,
    crs: Sequence,
    pose: NeedlePose,
    cstate: CheckerState,
    params: NeedleParams,
    plan: Sequence[Action],
    substeps: int = 4,
    cr_inflation_mm: float = 0.0,
    reaction: Reaction | None = None,
) -> tuple[bool, int | None]:
    """Replay a plan through the checker against an arbitrary region set.

    Returns (True, None) when the replay reaches the final target without
    a path violation or critical-region hit; otherwise (False, index of
    the first violating action). Verifying against ground-truth regions
    rather than known ones is how hidden obstacles on a planned path show
    up before execution ever starts.
    """
    ctx = CheckContext(
        workspace_min=scenario.workspace_min,
        workspace_max=scenario.workspace_max,
        targets=scenario.targets(),
        crs=tuple(crs),
        limits=scenario.limits,
        params=params,
        cr_inflation_mm=cr_inflation_mm,
    )
    outcome, cstate = run_checker(pose, cstate, ctx)
    if outcome is CheckOutcome.FINAL_TR_REACHED:
        return True, None
    if outcome is not CheckOutcome.CONTINUE:
        return False, 0
    anchor, run, cur = pose, 0, pose
    for i, action in enumerate(plan):
        if action.kind == "push":
            cur, outcome, cstate = advance_push(anchor, run, cstate, ctx, substeps)
            run += substeps
        else:
            cur = rotate_bevel(cur, action.deg)
            anchor, run = cur, 0
            cstate = after_rotation(cstate, ctx.limits.min_push_mm)
            outcome, cstate = run_checker(cur, cstate, ctx)
        if reaction is not None and outcome in (CheckOutcome.CONTINUE, CheckOutcome.FINAL_TR_REACHED):
            cur = reaction(cur)
            anchor, run = cur, 0
            outcome, cstate = run_checker(cur, cstate, ctx)
        if outcome is CheckOutcome.FINAL_TR_REACHED:
            return True, None
        if outcome is not CheckOutcome.CONTINUE:
            return False, i
    return False, len(plan)


def plan_to_text(plan: Sequence[Action], params: NeedleParams, substeps: int = 4) -> str:
    """Line-oriented plan file: one action per line, parameters in the header."""
    dt_macro = params.dt_s * substeps
    lines = [f"# r_mm={params.radius_mm:g} v={params.speed_mm_s:g} dt={dt_macro:g}"]
    for action in plan:
        lines.append("PUSH" if action.kind == "push" else f"ROT {action.deg}")
    return "\n".join(lines) + "\n"


def plan_from_text(text: str) -> tuple[list[Action], dict[str, float]]:
    header: dict[str, float] = {}
    actions: list[Action] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for token in line[1:].split():
                if "=" in token:
                    key, _, value = token.partition("=")
                    try:
                        header[key] = float(value)
                    except ValueError:
                        pass
            continue
        parts = line.split()
        if parts[0] == "PUSH" and len(parts) == 1:
            actions.append(PUSH)
        elif parts[0] == "ROT" and len(parts) == 2 and parts[1].isdigit() and int(parts[1]) in ROTATION_DEGREES:
            actions.append(ROTATIONS[int(parts[1])])
        else:
            raise ValueError(f"line {lineno}: unrecognized plan line {raw!r}")
    return actions, header
