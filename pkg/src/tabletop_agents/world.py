"""Deterministic tabletop simulator: yawed boxes on a table and a point gripper.

States are immutable values; every operation returns a fresh state, so equal
inputs always produce bit-equal outputs and episodes can run concurrently
without sharing anything.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, replace

from . import geometry as geo

WORKSPACE_ZMAX = 0.6
TRANSLATION_STEP = 0.001   # interpolation resolution, meters
YAW_STEP = 0.01            # interpolation resolution, radians
GRASP_HORIZONTAL_TOL = 0.01
GRASP_VERTICAL_TOL = 0.02
PLACEMENT_ATTEMPTS = 10_000
SPAWN_CLEARANCE = 0.03     # free-placement gap between footprints
GRIPPER_HOME = (0.0, 0.0, 0.3)

DEFAULT_TABLE = (-0.5, -0.5, 0.5, 0.5)


class WorldError(Exception):
    """Base for simulator errors."""


class PlacementExhausted(WorldError):
    """Rejection sampling failed to place the scene."""


class OutOfWorkspace(WorldError):
    """Move target violates table bounds or the height cap."""


class NoHeldObject(WorldError):
    """A fault that needs a held object fired while the gripper was empty."""


class InvalidFault(WorldError):
    """Fault parameters do not apply to the current state."""


def wrap_yaw(yaw: float) -> float:
    """Normalize an angle to [-pi, pi)."""
    wrapped = math.fmod(yaw + math.pi, 2.0 * math.pi)
    if wrapped < 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    z: float
    yaw: float = 0.0

    def __post_init__(self) -> None:
        for v in (self.x, self.y, self.z, self.yaw):
            if not math.isfinite(v):
                raise ValueError(f"non-finite pose component: {v!r}")
        object.__setattr__(self, "yaw", wrap_yaw(self.yaw))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class ObjectBox:
    """A yaw-oriented box. `hole` is an optional interior cavity opening at the
    top face, given as (hole_dx, hole_dy, depth); depth == dz makes it a
    through-hole (rings), smaller depths make open containers (bins, jars)."""

    id: str
    name: str
    color: str
    dims: tuple[float, float, float]
    pose: Pose
    held: bool = False
    hole: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        if any(d <= 0 for d in self.dims):
            raise ValueError(f"dims must be strictly positive: {self.dims}")
        if self.hole is not None:
            hdx, hdy, depth = self.hole
            if hdx >= self.dims[0] or hdy >= self.dims[1] or depth > self.dims[2] + 1e-12:
                raise ValueError(f"hole {self.hole} does not fit inside dims {self.dims}")

    @property
    def bottom(self) -> float:
        return self.pose.z - self.dims[2] / 2.0

    @property
    def top(self) -> float:
        return self.pose.z + self.dims[2] / 2.0

    @property
    def top_center(self) -> tuple[float, float, float]:
        return (self.pose.x, self.pose.y, self.top)

    def footprint(self) -> list[geo.Vec2]:
        return geo.footprint_corners(self.pose.x, self.pose.y, self.dims[0], self.dims[1], self.pose.yaw)

    def hole_footprint(self) -> list[geo.Vec2] | None:
        if self.hole is None:
            return None
        return geo.footprint_corners(self.pose.x, self.pose.y, self.hole[0], self.hole[1], self.pose.yaw)

    @property
    def hole_floor(self) -> float | None:
        if self.hole is None:
            return None
        return self.top - self.hole[2]

    @property
    def has_through_hole(self) -> bool:
        return self.hole is not None and self.hole[2] >= self.dims[2] - 1e-9


@dataclass(frozen=True)
class GripperState:
    pose: Pose
    open: bool = True
    held_object: str | None = None


@dataclass(frozen=True)
class WorldState:
    table: tuple[float, float, float, float]   # (x_min, y_min, x_max, y_max)
    objects: tuple[ObjectBox, ...]
    gripper: GripperState
    step: int = 0
    seed: int = 0

    def object_by_id(self, object_id: str) -> ObjectBox:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(object_id)

    def held_box(self) -> ObjectBox | None:
        if self.gripper.held_object is None:
            return None
        return self.object_by_id(self.gripper.held_object)


@dataclass(frozen=True)
class FaultSpec:
    kind: str                  # grasp_slip | drop_in_transit | displace_object
    trigger_step: int
    object_id: str | None = None
    displacement: tuple[float, float, float] = (0.0, 0.0, 0.0)

    KINDS = ("grasp_slip", "drop_in_transit", "displace_object")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown fault kind {self.kind!r}")
        if self.trigger_step < 0:
            raise ValueError("trigger_step must be >= 0")


@dataclass(frozen=True)
class MoveReport:
    requested: Pose
    reached: Pose
    completed: bool
    contacts: tuple[tuple[str, float], ...] = ()   # (object id, contact parameter t)


@dataclass(frozen=True)
class GraspReport:
    grasped: bool
    object_id: str | None = None
    message: str = ""


@dataclass
class ManifestEntry:
    """One object to place. `place` is None (free on the table), ("on", name)
    to stack centered on another entry, or ("in", name) to sample inside that
    entry's cavity."""

    name: str
    color: str
    dims: tuple[float, float, float]
    hole: tuple[float, float, float] | None = None
    place: tuple[str, str] | None = None


# ---------------------------------------------------------------------------
# solid-region overlap

def _box_prism(obj: ObjectBox) -> tuple[list[geo.Vec2], float, float]:
    return obj.footprint(), obj.bottom, obj.top


def _hole_prism(obj: ObjectBox) -> tuple[list[geo.Vec2], float, float] | None:
    fp = obj.hole_footprint()
    if fp is None:
        return None
    return fp, obj.top - obj.hole[2], obj.top


def _prism_overlap(a: tuple[list[geo.Vec2], float, float],
                   b: tuple[list[geo.Vec2], float, float]) -> float:
    dz = geo.interval_overlap(a[1], a[2], b[1], b[2])
    if dz <= 0.0:
        return 0.0
    if geo.footprints_disjoint(a[0], b[0]):
        return 0.0
    return geo.footprint_overlap_area(a[0], b[0]) * dz


def solid_overlap_volume(a: ObjectBox, b: ObjectBox) -> float:
    """Exact overlap volume of two solid regions (outer box minus cavity)."""
    vol = _prism_overlap(_box_prism(a), _box_prism(b))
    if vol <= geo.OVERLAP_TOL:
        return max(vol, 0.0)
    hole_a, hole_b = _hole_prism(a), _hole_prism(b)
    if hole_b is not None:
        vol -= _prism_overlap(_box_prism(a), hole_b)
    if hole_a is not None:
        vol -= _prism_overlap(hole_a, _box_prism(b))
    if hole_a is not None and hole_b is not None:
        vol += _prism_overlap(hole_a, hole_b)
    return max(vol, 0.0)


def point_in_solid(px: float, py: float, pz: float, obj: ObjectBox) -> bool:
    """Strict interior test against the solid region of a box."""
    if not (obj.bottom < pz < obj.top):
        return False
    if not geo.point_in_footprint(px, py, obj.pose.x, obj.pose.y,
                                  obj.dims[0], obj.dims[1], obj.pose.yaw, strict=True):
        return False
    if obj.hole is not None:
        in_hole_z = pz > obj.hole_floor - 1e-12
        fp = obj.hole
        if in_hole_z and geo.point_in_footprint(px, py, obj.pose.x, obj.pose.y,
                                                fp[0], fp[1], obj.pose.yaw):
            return False
    return True


# ---------------------------------------------------------------------------
# scene construction

def _slug(color: str, name: str) -> str:
    return f"{color}_{name}".replace(" ", "_")


def _normalize_manifest(manifest) -> list[ManifestEntry]:
    entries = []
    for item in manifest:
        if isinstance(item, ManifestEntry):
            entries.append(item)
        else:
            name, color, dims = item
            entries.append(ManifestEntry(name=name, color=color, dims=tuple(dims)))
    if not entries:
        raise ValueError("manifest must be non-empty")
    return entries


def spawn_scene(manifest, table: tuple[float, float, float, float] = DEFAULT_TABLE,
                seed: int = 0) -> WorldState:
    """Place every manifest entry without overlap; identical inputs give
    identical states. Raises PlacementExhausted after 10,000 rejected samples."""
    entries = _normalize_manifest(manifest)
    rng = random.Random(seed)
    placed: list[ObjectBox] = []
    by_name: dict[str, ObjectBox] = {}
    used_ids: set[str] = set()

    for entry in entries:
        dz = entry.dims[2]
        obj_id = _slug(entry.color, entry.name)
        serial = 2
        while obj_id in used_ids:
            obj_id = f"{_slug(entry.color, entry.name)}_{serial}"
            serial += 1

        if entry.place is not None and entry.place[0] == "on":
            base = by_name[entry.place[1]]
            pose = Pose(base.pose.x, base.pose.y, base.top + dz / 2.0, rng.uniform(-math.pi, math.pi))
            box = ObjectBox(obj_id, entry.name, entry.color, entry.dims, pose, hole=entry.hole)
        elif entry.place is not None and entry.place[0] == "in":
            base = by_name[entry.place[1]]
            if base.hole is None:
                raise ValueError(f"cannot place inside {base.id}: no cavity")
            box = _sample_inside(rng, base, entry, obj_id, placed)
            if box is None:
                raise PlacementExhausted(f"could not place {obj_id} inside {base.id}")
        else:
            box = _sample_free(rng, table, entry, obj_id, placed)
            if box is None:
                raise PlacementExhausted(f"could not place {obj_id} on the table")

        used_ids.add(obj_id)
        placed.append(box)
        by_name[entry.name] = box

    gripper = GripperState(pose=Pose(*GRIPPER_HOME, 0.0), open=True, held_object=None)
    return WorldState(table=tuple(table), objects=tuple(placed), gripper=gripper, step=0, seed=seed)


def _sample_free(rng: random.Random, table, entry: ManifestEntry, obj_id: str,
                 placed: list[ObjectBox]) -> ObjectBox | None:
    x_min, y_min, x_max, y_max = table
    dx, dy, dz = entry.dims
    half_diag = math.hypot(dx, dy) / 2.0
    for _ in range(PLACEMENT_ATTEMPTS):
        x = rng.uniform(x_min + half_diag, x_max - half_diag)
        y = rng.uniform(y_min + half_diag, y_max - half_diag)
        yaw = rng.uniform(-math.pi, math.pi)
        box = ObjectBox(obj_id, entry.name, entry.color, entry.dims,
                        Pose(x, y, dz / 2.0, yaw), hole=entry.hole)
        if _clear_of(box, placed, SPAWN_CLEARANCE):
            return box
    return None


def _sample_inside(rng: random.Random, base: ObjectBox, entry: ManifestEntry, obj_id: str,
                   placed: list[ObjectBox]) -> ObjectBox | None:
    hdx, hdy, depth = base.hole
    dx, dy, dz = entry.dims
    half_diag = math.hypot(dx, dy) / 2.0
    span_x = hdx / 2.0 - half_diag
    span_y = hdy / 2.0 - half_diag
    if span_x < 0 or span_y < 0 or dz > depth:
        raise ValueError(f"{obj_id} does not fit inside {base.id}")
    cos_b, sin_b = math.cos(base.pose.yaw), math.sin(base.pose.yaw)
    siblings = [p for p in placed if p.id != base.id]
    for _ in range(PLACEMENT_ATTEMPTS):
        lx = rng.uniform(-span_x, span_x)
        ly = rng.uniform(-span_y, span_y)
        x = base.pose.x + lx * cos_b - ly * sin_b
        y = base.pose.y + lx * sin_b + ly * cos_b
        yaw = rng.uniform(-math.pi, math.pi)
        box = ObjectBox(obj_id, entry.name, entry.color, entry.dims,
                        Pose(x, y, base.hole_floor + dz / 2.0, yaw), hole=entry.hole)
        if _clear_of(box, siblings, 0.01):
            return box
    return None


def _clear_of(box: ObjectBox, others: list[ObjectBox], clearance: float) -> bool:
    inflated = geo.footprint_corners(box.pose.x, box.pose.y,
                                     box.dims[0] + 2 * clearance, box.dims[1] + 2 * clearance,
                                     box.pose.yaw)
    for other in others:
        if solid_overlap_volume(box, other) > geo.OVERLAP_TOL:
            return False
        if clearance > 0 and geo.interval_overlap(box.bottom, box.top, other.bottom, other.top) > 0:
            if not geo.footprints_disjoint(inflated, other.footprint()):
                return False
    return True


# ---------------------------------------------------------------------------
# gripper motion

def _held_offset(state: WorldState) -> tuple[float, float, float, float] | None:
    """Held object's pose relative to the gripper, expressed in the gripper frame."""
    held = state.held_box()
    if held is None:
        return None
    g = state.gripper.pose
    c, s = math.cos(-g.yaw), math.sin(-g.yaw)
    rx = held.pose.x - g.x
    ry = held.pose.y - g.y
    return (rx * c - ry * s, rx * s + ry * c, held.pose.z - g.z, wrap_yaw(held.pose.yaw - g.yaw))


def _held_pose_at(gripper: Pose, offset: tuple[float, float, float, float]) -> Pose:
    ox, oy, oz, oyaw = offset
    c, s = math.cos(gripper.yaw), math.sin(gripper.yaw)
    return Pose(gripper.x + ox * c - oy * s,
                gripper.y + ox * s + oy * c,
                gripper.z + oz,
                wrap_yaw(gripper.yaw + oyaw))


def _in_table(x: float, y: float, table) -> bool:
    x_min, y_min, x_max, y_max = table
    return x_min <= x <= x_max and y_min <= y <= y_max


def move_gripper(state: WorldState, target: Pose) -> tuple[WorldState, MoveReport]:
    """Straight-line move sampled at 1 mm; stops at first contact and reports it."""
    if not _in_table(target.x, target.y, state.table) or not (0.0 <= target.z <= WORKSPACE_ZMAX):
        raise OutOfWorkspace(f"target ({target.x:.3f}, {target.y:.3f}, {target.z:.3f}) "
                             f"outside the workspace")

    start = state.gripper.pose
    offset = _held_offset(state)
    held_id = state.gripper.held_object
    held_template = state.held_box()
    obstacles = [o for o in state.objects if not o.held]

    dist = math.dist((start.x, start.y, start.z), (target.x, target.y, target.z))
    dyaw = wrap_yaw(target.yaw - start.yaw)
    steps = max(math.ceil(dist / TRANSLATION_STEP), math.ceil(abs(dyaw) / YAW_STEP), 1)

    if dist == 0.0 and dyaw == 0.0:
        new_state = replace(state, step=state.step + 1)
        return new_state, MoveReport(requested=target, reached=start, completed=True)

    reached = start
    contacts: list[tuple[str, float]] = []
    completed = True
    for i in range(1, steps + 1):
        t = i / steps
        sample = Pose(start.x + (target.x - start.x) * t,
                      start.y + (target.y - start.y) * t,
                      start.z + (target.z - start.z) * t,
                      wrap_yaw(start.yaw + dyaw * t))
        hit = _contacts_at(sample, offset, held_template, obstacles)
        if hit:
            contacts = [(obj_id, t) for obj_id in hit]
            completed = False
            break
        reached = sample

    gripper = GripperState(pose=reached, open=state.gripper.open, held_object=held_id)
    objects = state.objects
    if offset is not None:
        held_pose = _held_pose_at(reached, offset)
        objects = tuple(replace(o, pose=held_pose) if o.id == held_id else o for o in objects)
    new_state = replace(state, objects=objects, gripper=gripper, step=state.step + 1)
    return new_state, MoveReport(requested=target, reached=reached,
                                 completed=completed, contacts=tuple(contacts))


def _contacts_at(gripper: Pose, offset, held_template: ObjectBox | None,
                 obstacles: list[ObjectBox]) -> list[str]:
    hit = []
    held_box = None
    if held_template is not None and offset is not None:
        held_box = replace(held_template, pose=_held_pose_at(gripper, offset))
        if held_box.bottom < -1e-9:
            hit.append("table")
    for obj in obstacles:
        if point_in_solid(gripper.x, gripper.y, gripper.z, obj):
            hit.append(obj.id)
        elif held_box is not None and solid_overlap_volume(held_box, obj) > geo.OVERLAP_TOL:
            hit.append(obj.id)
    return hit


def settle(state: WorldState) -> WorldState:
    """Drop every unsupported, non-held object straight down onto the highest
    surface whose top-face region covers the object's center. Idempotent."""
    boxes = {o.id: o for o in state.objects}
    order = sorted((o for o in state.objects if not o.held), key=lambda o: (o.bottom, o.id))
    for obj in order:
        current = boxes[obj.id]
        rest_bottom = 0.0
        for other in boxes.values():
            if other.id == current.id or other.held:
                continue
            cand = _support_height(current, other)
            if cand is None:
                continue
            if cand <= current.bottom + 1e-9 and cand > rest_bottom:
                rest_bottom = cand
        if rest_bottom < current.bottom - 1e-12:
            moved = replace(current, pose=replace(current.pose, z=rest_bottom + current.dims[2] / 2.0))
            boxes[current.id] = moved
    objects = tuple(boxes[o.id] for o in state.objects)
    return replace(state, objects=objects)


def _support_height(falling: ObjectBox, support: ObjectBox) -> float | None:
    """Resting bottom height `falling` would get from `support`, or None.
    Cover tests are strict: a center exactly on the support's edge does not
    count as supported (the box slides off and falls past)."""
    # a holed object threads over a support that fits inside its cavity
    if falling.hole is not None:
        if geo.footprint_contains(falling.hole_footprint(), support.footprint()):
            return None
    cx, cy = falling.pose.x, falling.pose.y
    if not geo.point_in_footprint(cx, cy, support.pose.x, support.pose.y,
                                  support.dims[0], support.dims[1], support.pose.yaw,
                                  strict=True):
        return None
    if support.hole is not None and geo.point_in_footprint(
            cx, cy, support.pose.x, support.pose.y,
            support.hole[0], support.hole[1], support.pose.yaw, strict=True):
        if geo.footprint_contains(support.hole_footprint(), falling.footprint()):
            if support.has_through_hole:
                return None          # falls straight through
            return support.hole_floor
        return support.top           # too wide for the opening: rim catch
    return support.top


def set_gripper(state: WorldState, open: bool) -> tuple[WorldState, GraspReport]:
    """Open or close the gripper; closing attaches the object whose top-face
    center lies within the grasp tolerance, opening releases and settles."""
    step = state.step + 1
    g = state.gripper

    if open:
        if g.open:
            return replace(state, step=step), GraspReport(False, None, "gripper already open")
        held_id = g.held_object
        objects = tuple(replace(o, held=False) if o.id == held_id else o for o in state.objects)
        gripper = GripperState(pose=g.pose, open=True, held_object=None)
        new_state = replace(state, objects=objects, gripper=gripper, step=step)
        new_state = settle(new_state)
        if held_id is None:
            return new_state, GraspReport(False, None, "gripper opened, nothing released")
        return new_state, GraspReport(False, held_id, f"released {held_id}")

    if not g.open:
        if g.held_object is not None:
            return replace(state, step=step), GraspReport(True, g.held_object,
                                                          f"already holding {g.held_object}")
        return replace(state, step=step), GraspReport(False, None, "gripper already closed")

    best = None
    best_key = None
    for obj in state.objects:
        tx, ty, tz = obj.top_center
        horizontal = math.hypot(g.pose.x - tx, g.pose.y - ty)
        vertical = abs(g.pose.z - tz)
        if horizontal <= GRASP_HORIZONTAL_TOL and vertical <= GRASP_VERTICAL_TOL:
            key = (horizontal * horizontal + vertical * vertical, obj.id)
            if best_key is None or key < best_key:
                best, best_key = obj, key
    if best is None:
        gripper = GripperState(pose=g.pose, open=False, held_object=None)
        return replace(state, gripper=gripper, step=step), GraspReport(False, None, "no object grasped")

    objects = tuple(replace(o, held=True) if o.id == best.id else o for o in state.objects)
    gripper = GripperState(pose=g.pose, open=False, held_object=best.id)
    return (replace(state, objects=objects, gripper=gripper, step=step),
            GraspReport(True, best.id, f"grasped {best.id}"))


def inject_fault(state: WorldState, fault: FaultSpec) -> WorldState:
    """Apply a deterministic perturbation; the result is settled afterwards."""
    if fault.kind in ("grasp_slip", "drop_in_transit"):
        held = state.held_box()
        if held is None:
            raise NoHeldObject(f"{fault.kind} fired with nothing held")
        dx, dy, dz = fault.displacement
        dropped_pose = Pose(held.pose.x + dx, held.pose.y + dy, held.pose.z + dz, held.pose.yaw)
        objects = tuple(replace(o, held=False, pose=dropped_pose) if o.id == held.id else o
                        for o in state.objects)
        gripper = replace(state.gripper, held_object=None)
        return settle(replace(state, objects=objects, gripper=gripper))

    target_id = fault.object_id
    if target_id is None:
        free = sorted(o.id for o in state.objects if not o.held)
        if not free:
            raise InvalidFault("displace_object: no free object in scene")
        target_id = free[0]
    try:
        target = state.object_by_id(target_id)
    except KeyError:
        raise InvalidFault(f"displace_object: unknown object {target_id!r}") from None
    if target.held:
        raise InvalidFault(f"displace_object: {target_id} is held")
    dx, dy, dz = fault.displacement
    moved_pose = Pose(target.pose.x + dx, target.pose.y + dy,
                      max(target.pose.z + dz, target.dims[2] / 2.0), target.pose.yaw)
    objects = tuple(replace(o, pose=moved_pose) if o.id == target_id else o for o in state.objects)
    return settle(replace(state, objects=objects))


def fault_applicable(state: WorldState, fault: FaultSpec) -> bool:
    """True when inject_fault would succeed on this state."""
    if fault.kind in ("grasp_slip", "drop_in_transit"):
        return state.gripper.held_object is not None
    if fault.object_id is not None:
        try:
            return not state.object_by_id(fault.object_id).held
        except KeyError:
            return False
    return any(not o.held for o in state.objects)


# ---------------------------------------------------------------------------
# validation

def validate_state(state: WorldState) -> list[str]:
    """Return human-readable invariant violations (empty list when valid)."""
    problems: list[str] = []
    x_min, y_min, x_max, y_max = state.table

    held_ids = [o.id for o in state.objects if o.held]
    if len(held_ids) > 1:
        problems.append(f"multiple held objects: {held_ids}")
    if state.gripper.held_object is not None:
        if state.gripper.open:
            problems.append("gripper open while holding an object")
        if state.gripper.held_object not in held_ids:
            problems.append("gripper.held_object does not match any held box")
    elif held_ids:
        problems.append(f"{held_ids[0]} marked held but gripper holds nothing")

    if not _in_table(state.gripper.pose.x, state.gripper.pose.y, state.table):
        problems.append("gripper outside table bounds")
    if not (0.0 <= state.gripper.pose.z <= WORKSPACE_ZMAX + 1e-9):
        problems.append("gripper outside workspace height")

    free = [o for o in state.objects if not o.held]
    for obj in free:
        if not (x_min <= obj.pose.x <= x_max and y_min <= obj.pose.y <= y_max):
            problems.append(f"{obj.id} center outside table bounds")
        if obj.bottom < -1e-6:
            problems.append(f"{obj.id} penetrates the table (bottom {obj.bottom:.6f})")
        elif abs(obj.bottom) > 1e-6 and not _is_supported(obj, free):
            problems.append(f"{obj.id} is unsupported at bottom {obj.bottom:.6f}")
    for i, a in enumerate(free):
        for b in free[i + 1:]:
            vol = solid_overlap_volume(a, b)
            if vol > geo.OVERLAP_TOL:
                problems.append(f"{a.id} and {b.id} interpenetrate (volume {vol:.3e})")

    if state.step < 0:
        problems.append("negative step counter")
    return problems


def _is_supported(obj: ObjectBox, others: list[ObjectBox]) -> bool:
    for other in others:
        if other.id == obj.id:
            continue
        cand = _support_height(obj, other)
        if cand is not None and abs(cand - obj.bottom) <= 1e-6:
            return True
    return False


# ---------------------------------------------------------------------------
# serialization (documented schema shared by tasks, traces and golden tests)

def pose_to_dict(pose: Pose) -> dict:
    return {"x": pose.x, "y": pose.y, "z": pose.z, "yaw": pose.yaw}


def snapshot_to_dict(state: WorldState) -> dict:
    return {
        "version": 1,
        "table": list(state.table),
        "objects": [
            {
                "id": o.id,
                "name": o.name,
                "color": o.color,
                "dims": list(o.dims),
                "pose": pose_to_dict(o.pose),
                "held": o.held,
                **({"hole": list(o.hole)} if o.hole is not None else {}),
            }
            for o in state.objects
        ],
        "gripper": {
            "pose": pose_to_dict(state.gripper.pose),
            "open": state.gripper.open,
            "held_object": state.gripper.held_object,
        },
        "step": state.step,
        "seed": state.seed,
    }


def snapshot_from_dict(data: dict) -> WorldState:
    objects = tuple(
        ObjectBox(
            id=item["id"],
            name=item["name"],
            color=item["color"],
            dims=tuple(item["dims"]),
            pose=Pose(**item["pose"]),
            held=item["held"],
            hole=tuple(item["hole"]) if "hole" in item else None,
        )
        for item in data["objects"]
    )
    gripper = GripperState(
        pose=Pose(**data["gripper"]["pose"]),
        open=data["gripper"]["open"],
        held_object=data["gripper"]["held_object"],
    )
    return WorldState(table=tuple(data["table"]), objects=objects, gripper=gripper,
                      step=data["step"], seed=data["seed"])


def snapshot_to_json(state: WorldState) -> str:
    return json.dumps(snapshot_to_dict(state), separators=(",", ":"))


def snapshot_from_json(text: str) -> WorldState:
    return snapshot_from_dict(json.loads(text))


def manifest_to_dicts(entries: list[ManifestEntry]) -> list[dict]:
    out = []
    for e in entries:
        item = {"name": e.name, "color": e.color, "dims": list(e.dims)}
        if e.hole is not None:
            item["hole"] = list(e.hole)
        if e.place is not None:
            item["place"] = list(e.place)
        out.append(item)
    return out


def manifest_from_dicts(items: list[dict]) -> list[ManifestEntry]:
    return [ManifestEntry(name=i["name"], color=i["color"], dims=tuple(i["dims"]),
                          hole=tuple(i["hole"]) if "hole" in i else None,
                          place=tuple(i["place"]) if "place" in i else None)
            for i in items]
