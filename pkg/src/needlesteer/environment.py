"""Region semantics and scenario handling.

Regions are spheres tagged TR (target), CR (critical, never enter) or
DR (detection shell around a CR, where approach is noticeable). A
scenario bundles the workspace box, the needle start pose and motion
parameters, search limits, the region list and the ordered targets.

Knowledge is split: the planner only ever sees *known* regions (a-priori
known plus dynamically learned CRs); ground truth stays with the plant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import yaml

from .geometry import DEFAULT_SCALE, IVec3, Vec3, dist, quantize, unquantize
from .kinematics import NeedleParams, NeedlePose, make_pose

REGION_KINDS = ("TR", "CR", "DR")

#: default detection-shell width around a CR when no explicit DR is given
DEFAULT_DR_MARGIN_MM = 4.0


class ScenarioError(ValueError):
    """A scenario document is malformed or violates an invariant."""


@dataclass(frozen=True)
class Region:
    kind: str
    center: IVec3
    radius_mm: float
    known: bool = True

    def center_mm(self, scale: int) -> Vec3:
        return unquantize(self.center, scale)


def contains(region: Region, p: IVec3, scale: int, inflate_mm: float = 0.0) -> bool:
    """Boundary-inclusive sphere membership on unquantized coordinates."""
    c = region.center
    dx = (p[0] - c[0]) / scale
    dy = (p[1] - c[1]) / scale
    dz = (p[2] - c[2]) / scale
    r = region.radius_mm + inflate_mm
    return dx * dx + dy * dy + dz * dz <= r * r


@dataclass(frozen=True)
class Limits:
    max_rotations: int
    min_push_mm: float
    max_insertion_mm: float


@dataclass(frozen=True)
class Scenario:
    name: str
    scale: int
    workspace_min: Vec3
    workspace_max: Vec3
    start_pos: Vec3
    start_tangent: Vec3
    start_normal: Vec3
    radius_mm: float  # a-priori motion-circle radius
    speed_mm_s: float
    dt_s: float
    limits: Limits
    regions: tuple[Region, ...]
    tr_order: tuple[int, ...]

    def params(self) -> NeedleParams:
        return NeedleParams(self.radius_mm, self.speed_mm_s, self.dt_s, self.scale)

    def start_pose(self) -> NeedlePose:
        return make_pose(self.start_pos, self.start_tangent, self.start_normal, self.scale)

    def targets(self) -> tuple[Region, ...]:
        return tuple(self.regions[i] for i in self.tr_order)

    def critical_regions(self) -> tuple[Region, ...]:
        return tuple(r for r in self.regions if r.kind == "CR")

    def detection_radius_mm(self, cr: Region) -> float:
        """Explicit DR radius for this CR if present, else the default shell."""
        for r in self.regions:
            if r.kind == "DR" and r.center == cr.center:
                return r.radius_mm
        return cr.radius_mm + DEFAULT_DR_MARGIN_MM


def validate_scenario(sc: Scenario) -> None:
    for lo, hi in zip(sc.workspace_min, sc.workspace_max):
        if lo >= hi:
            raise ScenarioError("workspace min must be strictly below max per axis")
    for i, c in enumerate(sc.start_pos):
        if not sc.workspace_min[i] <= c <= sc.workspace_max[i]:
            raise ScenarioError("start pose lies outside the workspace")
    trs = [r for r in sc.regions if r.kind == "TR"]
    if not trs:
        raise ScenarioError("at least one TR region is required")
    if not sc.tr_order:
        raise ScenarioError("tr_order must name at least one TR")
    for idx in sc.tr_order:
        if not 0 <= idx < len(sc.regions):
            raise ScenarioError(f"tr_order index {idx} out of range")
        if sc.regions[idx].kind != "TR":
            raise ScenarioError(f"tr_order index {idx} does not reference a TR")
    for r in sc.regions:
        if r.kind not in REGION_KINDS:
            raise ScenarioError(f"unknown region kind {r.kind!r}")
        if r.radius_mm <= 0.0:
            raise ScenarioError("region radius_mm must be positive")
        if r.kind == "DR":
            parents = [
                c for c in sc.regions if c.kind == "CR" and c.center == r.center
            ]
            if not parents:
                raise ScenarioError("DR region has no CR with the same center")
            if any(r.radius_mm <= c.radius_mm for c in parents):
                raise ScenarioError("DR radius must strictly exceed its CR radius")
    if sc.limits.max_rotations < 0:
        raise ScenarioError("max_rotations must be non-negative")
    if sc.limits.min_push_mm < 0.0:
        raise ScenarioError("min_push_mm must be non-negative")
    if sc.limits.max_insertion_mm <= 0.0:
        raise ScenarioError("max_insertion_mm must be positive")
    sc.params()  # validates radius/speed/dt/theta
    sc.start_pose()  # validates the frame


def _vec(node: object, what: str) -> Vec3:
    if not isinstance(node, (list, tuple)) or len(node) != 3:
        raise ScenarioError(f"{what} must be a 3-element array")
    try:
        return (float(node[0]), float(node[1]), float(node[2]))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{what} has a non-numeric component") from exc


def _get(mapping: dict, key: str, what: str) -> object:
    if key not in mapping:
        raise ScenarioError(f"missing field {what}.{key}" if what else f"missing field {key}")
    return mapping[key]


def load_scenario(text: str) -> Scenario:
    """Parse a scenario document (YAML key/value tree, exact field names)."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario parse error: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a key/value mapping")
    return scenario_from_dict(doc)


def scenario_from_dict(doc: dict) -> Scenario:
    scale = int(_get(doc, "scale", ""))
    ws = _get(doc, "workspace", "")
    needle = _get(doc, "needle", "")
    limits = _get(doc, "limits", "")
    regions_node = _get(doc, "regions", "")
    if not isinstance(regions_node, list):
        raise ScenarioError("regions must be a list")
    regions = []
    for i, rn in enumerate(regions_node):
        if not isinstance(rn, dict):
            raise ScenarioError(f"regions[{i}] must be a mapping")
        regions.append(
            Region(
                kind=str(_get(rn, "kind", f"regions[{i}]")),
                center=quantize(_vec(_get(rn, "center", f"regions[{i}]"), f"regions[{i}].center"), scale),
                radius_mm=float(_get(rn, "radius_mm", f"regions[{i}]")),
                known=bool(rn.get("known", True)),
            )
        )
    sc = Scenario(
        name=str(_get(doc, "name", "")),
        scale=scale,
        workspace_min=_vec(_get(ws, "min", "workspace"), "workspace.min"),
        workspace_max=_vec(_get(ws, "max", "workspace"), "workspace.max"),
        start_pos=_vec(_get(needle, "start_pos", "needle"), "needle.start_pos"),
        start_tangent=_vec(_get(needle, "start_tangent", "needle"), "needle.start_tangent"),
        start_normal=_vec(_get(needle, "start_normal", "needle"), "needle.start_normal"),
        radius_mm=float(_get(needle, "radius_mm", "needle")),
        speed_mm_s=float(_get(needle, "speed_mm_s", "needle")),
        dt_s=float(_get(needle, "dt_s", "needle")),
        limits=Limits(
            max_rotations=int(_get(limits, "max_rotations", "limits")),
            min_push_mm=float(_get(limits, "min_push_mm", "limits")),
            max_insertion_mm=float(_get(limits, "max_insertion_mm", "limits")),
        ),
        regions=tuple(regions),
        tr_order=tuple(int(i) for i in _get(doc, "tr_order", "")),
    )
    validate_scenario(sc)
    return sc


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "name": sc.name,
        "scale": sc.scale,
        "workspace": {"min": list(sc.workspace_min), "max": list(sc.workspace_max)},
        "needle": {
            "start_pos": list(sc.start_pos),
            "start_tangent": list(sc.start_tangent),
            "start_normal": list(sc.start_normal),
            "radius_mm": sc.radius_mm,
            "speed_mm_s": sc.speed_mm_s,
            "dt_s": sc.dt_s,
        },
        "limits": {
            "max_rotations": sc.limits.max_rotations,
            "min_push_mm": sc.limits.min_push_mm,
            "max_insertion_mm": sc.limits.max_insertion_mm,
        },
        "regions": [
            {
                "kind": r.kind,
                "center": list(r.center_mm(sc.scale)),
                "radius_mm": r.radius_mm,
                "known": r.known,
            }
            for r in sc.regions
        ],
        "tr_order": list(sc.tr_order),
    }


def save_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=False)


@dataclass
class KnowledgeBase:
    """Planner-visible knowledge: a-priori known CRs plus learned CRs.

    `actual` carries ground truth for the plant and monitors only; the
    synthesizer must never read it (enforced by tests that pass a
    knowledge base whose actual set raises on access).
    """

    known_crs: list[Region] = field(default_factory=list)
    learned_crs: list[Region] = field(default_factory=list)
    actual: tuple[Region, ...] = ()

    def planning_crs(self) -> tuple[Region, ...]:
        return tuple(self.known_crs) + tuple(self.learned_crs)

    def add_learned(self, region: Region) -> None:
        self.learned_crs.append(region)

    def grow_learned(self, index: int, delta_mm: float) -> None:
        r = self.learned_crs[index]
        self.learned_crs[index] = replace(r, radius_mm=r.radius_mm + delta_mm)


def knowledge_for(scenario: Scenario, mode: str = "flags") -> KnowledgeBase:
    """Build the planner's a-priori knowledge for a run.

    mode: "all" marks every CR known, "none" hides all CRs, "flags"
    honours the per-region known flags. Ground truth always carries the
    full CR set.
    """
    crs = scenario.critical_regions()
    if mode == "all":
        known = list(crs)
    elif mode == "none":
        known = []
    elif mode == "flags":
        known = [r for r in crs if r.known]
    else:
        raise ValueError(f"unknown knowledge mode {mode!r}")
    return KnowledgeBase(known_crs=known, learned_crs=[], actual=crs)


def _ring(count: int, ring_radius: float, z: float, phase_deg: float = 0.0) -> list[Vec3]:
    pts = []
    for k in range(count):
        a = math.radians(phase_deg + 360.0 * k / count)
        pts.append((ring_radius * math.cos(a), ring_radius * math.sin(a), z))
    return pts


def _base_scenario(name: str, regions: list[Region], tr_order: tuple[int, ...]) -> Scenario:
    sc = Scenario(
        name=name,
        scale=DEFAULT_SCALE,
        workspace_min=(-60.0, -60.0, 0.0),
        workspace_max=(60.0, 60.0, 120.0),
        start_pos=(0.0, 0.0, 0.0),
        start_tangent=(0.0, 0.0, 1.0),
        start_normal=(1.0, 0.0, 0.0),
        radius_mm=50.0,
        speed_mm_s=5.0,
        dt_s=0.1,
        limits=Limits(max_rotations=3, min_push_mm=3.0, max_insertion_mm=140.0),
        regions=tuple(regions),
        tr_order=tr_order,
    )
    validate_scenario(sc)
    return sc


def _tr(center: Vec3, radius: float = 5.0) -> Region:
    return Region("TR", quantize(center, DEFAULT_SCALE), radius, known=True)


def _cr(center: Vec3, radius: float, known: bool = True) -> Region:
    return Region("CR", quantize(center, DEFAULT_SCALE), radius, known=known)


def _dr(center: Vec3, radius: float) -> Region:
    return Region("DR", quantize(center, DEFAULT_SCALE), radius, known=True)


def builtin_scenarios() -> dict[str, Scenario]:
    """The five benchmark environments: one TR at (0,0,90), start at the
    origin pushing along +z, varying critical-region layouts."""
    tr = (0.0, 0.0, 90.0)

    no_cr = _base_scenario("no_cr", [_tr(tr)], (0,))

    small = _base_scenario(
        "small_mid_cr", [_tr(tr), _cr((0.0, 0.0, 45.0), 6.0)], (0,)
    )

    large = _base_scenario(
        "large_mid_cr", [_tr(tr), _cr((0.0, 0.0, 45.0), 35.0)], (0,)
    )

    # six CRs on the TR sphere surface, clustered toward +z so the
    # approach side keeps one angular gap; thin explicit DR shells keep
    # the gap detectable but still traversable
    polar = math.radians(45.0)
    ring = _ring(5, 5.0 * math.sin(polar), tr[2] + 5.0 * math.cos(polar))
    surface_centers = [(0.0, 0.0, tr[2] + 5.0)] + ring
    surface_regions = [_tr(tr)]
    surface_regions += [_cr(c, 6.0) for c in surface_centers]
    surface_regions += [_dr(c, 8.0) for c in surface_centers]
    surface = _base_scenario("surface_crs", surface_regions, (0,))

    # eight CRs forming a collar around the approach axis, inner
    # clearance 10 mm (ring radius = clearance + CR radius)
    tunnel_regions = [_tr(tr)] + [_cr(c, 8.0) for c in _ring(8, 18.0, 45.0)]
    tunnel = _base_scenario("tunnel_crs", tunnel_regions, (0,))

    return {
        "no_cr": no_cr,
        "small_mid_cr": small,
        "large_mid_cr": large,
        "surface_crs": surface,
        "tunnel_crs": tunnel,
    }


def get_scenario(name_or_path: str) -> Scenario:
    """Resolve a builtin name or load a scenario file from disk."""
    builtins = builtin_scenarios()
    key = name_or_path.lower()
    if key in builtins:
        return builtins[key]
    try:
        with open(name_or_path, "r", encoding="utf-8") as fh:
            return load_scenario(fh.read())
    except FileNotFoundError:
        raise ScenarioError(
            f"{name_or_path!r} is neither a builtin scenario "
            f"({', '.join(sorted(builtins))}) nor a readable file"
        ) from None
