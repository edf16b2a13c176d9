"""Task catalogue: data-driven scene manifests, instructions, and geometric
success predicates. New tasks can be added by dropping a JSON file into
`taskdata/` (or pointing the loader at an external file) without code changes,
as long as the predicate id already exists."""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from . import geometry as geo
from .world import ManifestEntry, ObjectBox, WorldState, spawn_scene, DEFAULT_TABLE

PALETTE = ("red", "blue", "yellow", "purple", "orange", "cyan", "magenta", "teal")

STACK_GAP_TOL = 0.005       # vertical contiguity tolerance for "stacked"
AREA_REST_TOL = 0.005       # how far above an area marker an item may sit
LID_CONTACT_TOL = 0.005


class UnknownTask(Exception):
    """Requested task is not in the catalogue."""


@dataclass(frozen=True)
class TaskSpec:
    name: str
    instruction: str
    manifest: tuple[ManifestEntry, ...]
    predicate: dict
    table: tuple[float, float, float, float] = DEFAULT_TABLE
    k: int | None = None


@dataclass(frozen=True)
class SuccessReport:
    success: bool
    details: tuple[str, ...] = ()


_STACK_VARIANT = re.compile(r"^stack_blocks([234])?$")


def _load_raw(name: str) -> dict:
    external = Path(name)
    if name.endswith(".json") and external.is_file():
        return json.loads(external.read_text(encoding="utf-8"))
    path = resources.files("tabletop_agents.taskdata").joinpath(f"{name}.json")
    if not path.is_file():
        raise UnknownTask(name)
    return json.loads(path.read_text(encoding="utf-8"))


def catalogue() -> list[str]:
    """Canonical task names (stack_blocks defaults to 4 blocks; stack_blocks2/3/4
    select a horizon explicitly)."""
    files = resources.files("tabletop_agents.taskdata")
    names = sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))
    return names


def resolve_name(name: str) -> tuple[str, int | None]:
    """Map a user-facing task name to (data file, stack count)."""
    m = _STACK_VARIANT.match(name)
    if m:
        k = int(m.group(1)) if m.group(1) else None
        return "stack_blocks", k
    return name, None


def instantiate(name: str, seed: int) -> tuple[TaskSpec, WorldState]:
    """Build the task spec and a seeded initial scene. Deterministic in
    (name, seed); raises UnknownTask for names outside the catalogue."""
    base_name, k = resolve_name(name)
    raw = _load_raw(base_name)
    if k is None:
        k = raw.get("k_default")

    rng = random.Random(seed)
    fixed_colors = {item["color"] for item in raw["objects"] if item["color"] != "@palette"}
    pool = [c for c in PALETTE if c not in fixed_colors]
    rng.shuffle(pool)
    palette = iter(pool)

    entries: list[ManifestEntry] = []
    color_by_name: dict[str, str] = {}
    for item in raw["objects"]:
        repeat = item.get("repeat", 1)
        if repeat == "@k":
            repeat = k
        for _ in range(int(repeat)):
            color = item["color"]
            if color == "@palette":
                color = next(palette)
            color_by_name.setdefault(item["name"], color)
            entries.append(ManifestEntry(
                name=item["name"],
                color=color,
                dims=tuple(item["dims"]),
                hole=tuple(item["hole"]) if "hole" in item else None,
                place=tuple(item["place"]) if "place" in item else None,
            ))

    instruction = raw["instruction"]
    if k is not None:
        instruction = instruction.replace("[K]", str(k))
    for match in re.findall(r"\[COLOR:([^\]]+)\]", instruction):
        instruction = instruction.replace(f"[COLOR:{match}]", color_by_name[match])

    predicate = dict(raw["predicate"])
    for key, value in predicate.items():
        if value == "@k":
            predicate[key] = k

    table = tuple(raw.get("table", DEFAULT_TABLE))
    spec = TaskSpec(name=name, instruction=instruction, manifest=tuple(entries),
                    predicate=predicate, table=table, k=k)
    state = spawn_scene(entries, table, seed)
    return spec, state


# ---------------------------------------------------------------------------
# success predicates (pure geometry over a WorldState)

def check_success(task: TaskSpec, state: WorldState) -> SuccessReport:
    pred = task.predicate
    checker = _PREDICATES[pred["id"]]
    return checker(pred, state)


def _by_name(state: WorldState, name: str) -> list[ObjectBox]:
    return [o for o in state.objects if o.name == name]


def _one(state: WorldState, name: str) -> ObjectBox:
    matches = _by_name(state, name)
    if len(matches) != 1:
        raise ValueError(f"expected exactly one {name!r}, found {len(matches)}")
    return matches[0]


def _center_over(obj: ObjectBox, area: ObjectBox) -> bool:
    return geo.point_in_footprint(obj.pose.x, obj.pose.y, area.pose.x, area.pose.y,
                                  area.dims[0], area.dims[1], area.pose.yaw)


def _check_on_area(pred: dict, state: WorldState) -> SuccessReport:
    item = _one(state, pred["item"])
    area = _one(state, pred["area"])
    details = []
    ok = True
    if item.held:
        details.append(f"{item.id} is still held by the gripper")
        ok = False
    if not _center_over(item, area):
        details.append(f"{item.id} center is not over {area.id}")
        ok = False
    if item.bottom > area.top + AREA_REST_TOL:
        details.append(f"{item.id} is not resting on {area.id}")
        ok = False
    if ok:
        details.append(f"{item.id} rests on {area.id}")
    return SuccessReport(ok, tuple(details))


def _check_stacked(pred: dict, state: WorldState) -> SuccessReport:
    area = _one(state, pred["area"])
    k = int(pred["k"])
    blocks = [b for b in _by_name(state, pred["block"]) if not b.held]
    base_candidates = [b for b in blocks
                       if _center_over(b, area) and b.bottom <= area.top + AREA_REST_TOL]
    if not base_candidates:
        return SuccessReport(False, ("no block rests on the target area",))
    base = min(base_candidates, key=lambda b: (b.bottom, b.id))
    half_width = base.dims[0] / 2.0
    chain = [base]
    current = base
    while True:
        above = [b for b in blocks if b.id not in {c.id for c in chain}
                 and math.hypot(b.pose.x - base.pose.x, b.pose.y - base.pose.y) <= half_width
                 and -1e-6 <= b.bottom - current.top < STACK_GAP_TOL]
        if not above:
            break
        current = min(above, key=lambda b: (b.bottom, b.id))
        chain.append(current)
    detail = f"{len(chain)}/{k} blocks stacked on {area.id}"
    return SuccessReport(len(chain) >= k, (detail,))


def _box_inside(item: ObjectBox, container: ObjectBox) -> bool:
    if container.hole is None:
        return False
    if item.bottom < container.hole_floor - 1e-6 or item.top > container.top + 1e-6:
        return False
    return geo.footprint_contains(container.hole_footprint(), item.footprint())


def _check_inside(pred: dict, state: WorldState) -> SuccessReport:
    item = _one(state, pred["item"])
    container = _one(state, pred["container"])
    if item.held:
        return SuccessReport(False, (f"{item.id} is still held by the gripper",))
    if _box_inside(item, container):
        return SuccessReport(True, (f"{item.id} is inside {container.id}",))
    return SuccessReport(False, (f"{item.id} is not fully inside {container.id}",))


def _check_all_inside(pred: dict, state: WorldState) -> SuccessReport:
    container = _one(state, pred["container"])
    items = _by_name(state, pred["item"])
    details = []
    ok = True
    for item in items:
        if item.held:
            details.append(f"{item.id} is still held by the gripper")
            ok = False
        elif _box_inside(item, container):
            details.append(f"{item.id} is inside {container.id}")
        else:
            details.append(f"{item.id} is not fully inside {container.id}")
            ok = False
    return SuccessReport(ok, tuple(details))


def _check_lid_on(pred: dict, state: WorldState) -> SuccessReport:
    lid = _one(state, pred["lid"])
    jar = _one(state, pred["jar"])
    details = []
    ok = True
    if lid.held:
        details.append(f"{lid.id} is still held by the gripper")
        ok = False
    if not _center_over(lid, jar):
        details.append(f"{lid.id} center is not over {jar.id}")
        ok = False
    if abs(lid.bottom - jar.top) > LID_CONTACT_TOL:
        details.append(f"{lid.id} is not resting on top of {jar.id}")
        ok = False
    if ok:
        details.append(f"{lid.id} closes {jar.id}")
    return SuccessReport(ok, tuple(details))


def _check_ring_on_peg(pred: dict, state: WorldState) -> SuccessReport:
    ring = _one(state, pred["ring"])
    peg = _one(state, pred["peg"])
    details = []
    ok = True
    if ring.held:
        details.append(f"{ring.id} is still held by the gripper")
        ok = False
    hole_fp = ring.hole_footprint()
    if hole_fp is None or not geo.point_in_footprint(
            peg.pose.x, peg.pose.y, ring.pose.x, ring.pose.y,
            ring.hole[0], ring.hole[1], ring.pose.yaw):
        details.append(f"{peg.id} is not through {ring.id}")
        ok = False
    if ring.bottom >= peg.top - 1e-9:
        details.append(f"{ring.id} sits above {peg.id} instead of around it")
        ok = False
    if ok:
        details.append(f"{ring.id} is on {peg.id}")
    return SuccessReport(ok, tuple(details))


def _check_cap_off(pred: dict, state: WorldState) -> SuccessReport:
    cap = _one(state, pred["cap"])
    bottle = _one(state, pred["bottle"])
    details = []
    ok = True
    if cap.held:
        details.append(f"{cap.id} is still held by the gripper")
        ok = False
    if _center_over(cap, bottle):
        details.append(f"{cap.id} is still over {bottle.id}")
        ok = False
    if cap.bottom > 0.05:
        details.append(f"{cap.id} did not come to rest low on the table")
        ok = False
    if ok:
        details.append(f"{cap.id} has been removed from {bottle.id}")
    return SuccessReport(ok, tuple(details))


_PREDICATES = {
    "on_area": _check_on_area,
    "stacked": _check_stacked,
    "inside": _check_inside,
    "all_inside": _check_all_inside,
    "lid_on": _check_lid_on,
    "ring_on_peg": _check_ring_on_peg,
    "cap_off": _check_cap_off,
}
