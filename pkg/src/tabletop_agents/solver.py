"""Observation-driven task solver.

Plans one manipulation phase at a time (pick, place, or completion check) from
the parsed text observation alone, so scripted policies operate through the
same protocol a remote model would. Also used to generate the golden solution
programs for the solvability tests.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from . import geometry as geo
from .observation import StateObservation

CRUISE_Z = 0.25
GRASP_CLEAR = 0.005     # gripper height above the top face when closing
PLACE_GAP = 0.003       # released bottom clearance when stacking/placing
DROP_CLEAR = 0.01       # released bottom clearance when dropping into containers
HOLD_XY_TOL = 0.02
HOLD_Z_TOL = 0.03

Step = tuple  # ("move", x, y, z) | ("close",) | ("open",) | ("check",)


@dataclass
class Phase:
    kind: str                 # pick | place | check
    description: str
    steps: tuple[Step, ...]
    expected: tuple           # ("hold", color, name) | ("at", color, name, x, y) | ("done",)
    meta: dict = field(default_factory=dict)


class Belief:
    """Mutable world view reconstructed from one observation; full-program
    solving advances it by assuming each phase succeeds."""

    def __init__(self, obs: StateObservation):
        self.records = [
            {"color": r.color, "name": r.name, "dims": list(r.dims),
             "center": list(r.center), "yaw": r.yaw}
            for r in obs.objects
        ]
        self.gripper = {"pos": list(obs.gripper.position), "yaw": obs.gripper.yaw,
                        "open": obs.gripper.open}
        self.held: tuple[str, str] | None = self._detect_held()

    def _detect_held(self) -> tuple[str, str] | None:
        if self.gripper["open"]:
            return None
        gx, gy, gz = self.gripper["pos"]
        for rec in self.records:
            top = rec["center"][2] + rec["dims"][2] / 2.0
            horizontal = math.hypot(rec["center"][0] - gx, rec["center"][1] - gy)
            if horizontal <= HOLD_XY_TOL and abs(top + GRASP_CLEAR - gz) <= HOLD_Z_TOL:
                return (rec["color"], rec["name"])
        return None

    def find_all(self, name: str) -> list[dict]:
        return [r for r in self.records if r["name"] == name]

    def find(self, name: str, color: str | None = None) -> dict:
        for r in self.records:
            if r["name"] == name and (color is None or r["color"] == color):
                return r
        raise KeyError(f"{color or ''} {name}".strip())

    def label(self, rec: dict) -> tuple[str, str]:
        return (rec["color"], rec["name"])

    def top(self, rec: dict) -> float:
        return rec["center"][2] + rec["dims"][2] / 2.0

    def bottom(self, rec: dict) -> float:
        return rec["center"][2] - rec["dims"][2] / 2.0

    def center_over(self, rec: dict, base: dict) -> bool:
        return geo.point_in_footprint(rec["center"][0], rec["center"][1],
                                      base["center"][0], base["center"][1],
                                      base["dims"][0], base["dims"][1], base["yaw"])

    def apply(self, phase: Phase) -> None:
        """Assume the phase succeeded (used only for blind full-program solves)."""
        for step in phase.steps:
            if step[0] == "move":
                self.gripper["pos"] = [step[1], step[2], step[3]]
            elif step[0] == "close":
                self.gripper["open"] = False
            elif step[0] == "open":
                self.gripper["open"] = True
        if phase.kind == "pick":
            self.held = (phase.meta["color"], phase.meta["name"])
        elif phase.kind == "place":
            rec = self.find(phase.meta["name"], phase.meta["color"])
            rec["center"] = list(phase.meta["rest_center"])
            self.held = None


# ---------------------------------------------------------------------------
# phase construction helpers

def _pick_phase(belief: Belief, rec: dict) -> Phase:
    color, name = belief.label(rec)
    x, y = rec["center"][0], rec["center"][1]
    grasp_z = belief.top(rec) + GRASP_CLEAR
    steps: list[Step] = []
    if not belief.gripper["open"]:
        steps.append(("open",))
    steps += [("move", x, y, CRUISE_Z), ("move", x, y, grasp_z),
              ("close",), ("move", x, y, CRUISE_Z)]
    return Phase(kind="pick",
                 description=f"pick up the {color} {name}",
                 steps=tuple(steps),
                 expected=("hold", color, name),
                 meta={"color": color, "name": name})


def _place_phase(belief: Belief, rec: dict, x: float, y: float, bottom: float,
                 description: str, rest_z: float | None = None) -> Phase:
    color, name = belief.label(rec)
    dz = rec["dims"][2]
    release_z = bottom + dz + GRASP_CLEAR
    rest_center = (x, y, (rest_z if rest_z is not None else bottom + dz / 2.0))
    steps = (("move", x, y, CRUISE_Z), ("move", x, y, release_z),
             ("open",), ("move", x, y, CRUISE_Z))
    return Phase(kind="place",
                 description=description,
                 steps=steps,
                 expected=("at", color, name, x, y),
                 meta={"color": color, "name": name, "rest_center": rest_center})


def _check_phase() -> Phase:
    return Phase(kind="check", description="verify the task is complete",
                 steps=(("check",),), expected=("done",))


# ---------------------------------------------------------------------------
# per-task planners

def _stack_chain(belief: Belief, area: dict, blocks: list[dict]) -> list[dict]:
    grounded = [b for b in blocks
                if belief.center_over(b, area) and belief.bottom(b) <= area["center"][2]
                + area["dims"][2] / 2.0 + 0.005 and belief.label(b) != belief.held]
    if not grounded:
        return []
    base = min(grounded, key=lambda b: belief.bottom(b))
    chain = [base]
    current = base
    candidates = [b for b in blocks if belief.label(b) != belief.held]
    while True:
        nxt = None
        for b in candidates:
            if any(b is c for c in chain):
                continue
            aligned = math.hypot(b["center"][0] - base["center"][0],
                                 b["center"][1] - base["center"][1]) <= base["dims"][0] / 2.0
            gap = belief.bottom(b) - belief.top(current)
            if aligned and abs(gap) <= 0.004:
                nxt = b
                break
        if nxt is None:
            return chain
        chain.append(nxt)
        current = nxt


def _solve_stack(belief: Belief, k: int) -> Phase:
    area = belief.find("target area")
    blocks = belief.find_all("block")
    chain = _stack_chain(belief, area, blocks)
    if belief.held is not None and belief.held[1] == "block":
        rec = belief.find("block", belief.held[0])
        if chain:
            x, y = chain[0]["center"][0], chain[0]["center"][1]
            bottom = belief.top(chain[-1]) + PLACE_GAP
            rest_z = belief.top(chain[-1]) + rec["dims"][2] / 2.0
            goal = f"place the held block on top of the stack ({len(chain)} so far)"
        else:
            x, y = area["center"][0], area["center"][1]
            bottom = area["center"][2] + area["dims"][2] / 2.0 + PLACE_GAP
            rest_z = area["center"][2] + area["dims"][2] / 2.0 + rec["dims"][2] / 2.0
            goal = "place the held block on the target area"
        return _place_phase(belief, rec, x, y, bottom, goal, rest_z=rest_z)
    if len(chain) >= k:
        return _check_phase()
    in_chain = {id(b) for b in chain}
    for b in blocks:
        if id(b) not in in_chain and belief.label(b) != belief.held:
            return _pick_phase(belief, b)
    return _check_phase()


def _solve_drop_in(belief: Belief, item_name: str, container_name: str,
                   container_color: str | None = None) -> Phase:
    container = belief.find(container_name, container_color)
    items = belief.find_all(item_name)

    def inside(rec: dict) -> bool:
        return (belief.center_over(rec, container)
                and belief.top(rec) <= belief.top(container) + 1e-6)

    if belief.held is not None and belief.held[1] == item_name:
        rec = belief.find(item_name, belief.held[0])
        slot = len([r for r in items if inside(r) and r is not rec])
        offsets = ((0.0, 0.0),) if len(items) == 1 else ((-0.03, -0.03), (0.03, -0.03), (0.0, 0.03))
        ox, oy = offsets[slot % len(offsets)]
        c, s = math.cos(container["yaw"]), math.sin(container["yaw"])
        x = container["center"][0] + ox * c - oy * s
        y = container["center"][1] + ox * s + oy * c
        bottom = belief.top(container) + DROP_CLEAR
        phase = _place_phase(belief, rec, x, y, bottom,
                             f"drop the held {item_name} into the {container['color']} "
                             f"{container_name}")
        # it falls inside; assume it rests on the container floor for planning
        phase.meta["rest_center"] = (x, y, belief.bottom(container) + 0.01 + rec["dims"][2] / 2.0)
        return phase
    for rec in items:
        if not inside(rec) and belief.label(rec) != belief.held:
            return _pick_phase(belief, rec)
    return _check_phase()


def _solve_close_jar(belief: Belief, jar_color: str) -> Phase:
    jar = belief.find("jar", jar_color)
    lid = belief.find("lid")
    if belief.held is not None and belief.held[1] == "lid":
        bottom = belief.top(jar) + DROP_CLEAR
        phase = _place_phase(belief, lid, jar["center"][0], jar["center"][1], bottom,
                             f"place the lid on the {jar_color} jar")
        phase.meta["rest_center"] = (jar["center"][0], jar["center"][1],
                                     belief.top(jar) + lid["dims"][2] / 2.0)
        return phase
    on_jar = (belief.center_over(lid, jar)
              and abs(belief.bottom(lid) - belief.top(jar)) <= 0.005)
    if on_jar:
        return _check_phase()
    return _pick_phase(belief, lid)


def _solve_peg(belief: Belief, peg_color: str) -> Phase:
    peg = belief.find("peg", peg_color)
    ring = belief.find("ring")
    if belief.held is not None and belief.held[1] == "ring":
        bottom = belief.top(peg) + DROP_CLEAR
        phase = _place_phase(belief, ring, peg["center"][0], peg["center"][1], bottom,
                             f"drop the ring over the {peg_color} peg")
        phase.meta["rest_center"] = (peg["center"][0], peg["center"][1], ring["dims"][2] / 2.0)
        return phase
    threaded = (math.hypot(ring["center"][0] - peg["center"][0],
                           ring["center"][1] - peg["center"][1]) <= 0.02
                and belief.bottom(ring) < belief.top(peg))
    if threaded:
        return _check_phase()
    return _pick_phase(belief, ring)


def _solve_meat(belief: Belief) -> Phase:
    meat = belief.find("meat")
    area = belief.find("designated area")
    if belief.held is not None and belief.held[1] == "meat":
        bottom = belief.top(area) + PLACE_GAP
        return _place_phase(belief, meat, area["center"][0], area["center"][1], bottom,
                            "place the meat on the designated area")
    if belief.center_over(meat, area) and belief.bottom(meat) <= belief.top(area) + 0.005:
        return _check_phase()
    return _pick_phase(belief, meat)


def _solve_bottle(belief: Belief, table=( -0.5, -0.5, 0.5, 0.5)) -> Phase:
    bottle = belief.find("bottle")
    cap = belief.find("cap")
    if belief.held is not None and belief.held[1] == "cap":
        x, y = _free_spot(belief, cap, bottle, table)
        return _place_phase(belief, cap, x, y, PLACE_GAP,
                            "set the cap down on a clear patch of the table")
    off_bottle = not belief.center_over(cap, bottle)
    if off_bottle and belief.bottom(cap) <= 0.05:
        return _check_phase()
    return _pick_phase(belief, cap)


def _free_spot(belief: Belief, moving: dict, anchor: dict, table) -> tuple[float, float]:
    """First deterministic candidate position clear of every known footprint."""
    x_min, y_min, x_max, y_max = table
    margin = math.hypot(moving["dims"][0], moving["dims"][1]) / 2.0 + 0.02
    for radius in (0.12, 0.16, 0.20, 0.24):
        for i in range(8):
            angle = i * math.pi / 4.0
            x = anchor["center"][0] + radius * math.cos(angle)
            y = anchor["center"][1] + radius * math.sin(angle)
            if not (x_min + margin <= x <= x_max - margin
                    and y_min + margin <= y <= y_max - margin):
                continue
            clear = True
            for rec in belief.records:
                if rec is moving:
                    continue
                half = math.hypot(rec["dims"][0], rec["dims"][1]) / 2.0
                if math.hypot(rec["center"][0] - x, rec["center"][1] - y) < half + margin:
                    clear = False
                    break
            if clear:
                return (x, y)
    return (anchor["center"][0], anchor["center"][1] + 0.2)


# ---------------------------------------------------------------------------
# dispatch

_STACK_RE = re.compile(r"^Stack (\d+) blocks at the green target area$")
_PUT_IN_RE = re.compile(r"^Put the (\w+) in the (\w+)$")
_EMPTY_RE = re.compile(r"^Pick all the objects from the large container and put them "
                       r"into the (\w+) container$")
_JAR_RE = re.compile(r"^Close the (\w+) jar with the lid$")
_PEG_RE = re.compile(r"^Insert the square ring into the (\w+) peg$")


def next_phase(instruction: str, belief: Belief) -> Phase:
    """One phase of work toward the instruction, from the current belief."""
    m = _STACK_RE.match(instruction)
    if m:
        return _solve_stack(belief, int(m.group(1)))
    if instruction == "Put the block in the target area":
        return _solve_stack(belief, 1)
    m = _PUT_IN_RE.match(instruction)
    if m:
        return _solve_drop_in(belief, m.group(1), m.group(2))
    m = _EMPTY_RE.match(instruction)
    if m:
        return _solve_drop_in(belief, "item", "container", m.group(1))
    m = _JAR_RE.match(instruction)
    if m:
        return _solve_close_jar(belief, m.group(1))
    m = _PEG_RE.match(instruction)
    if m:
        return _solve_peg(belief, m.group(1))
    if instruction == "Pick the meat from the grill and place it into the designated area":
        return _solve_meat(belief)
    if instruction == "Remove the cap of the wine bottle":
        return _solve_bottle(belief)
    raise ValueError(f"no solver for instruction {instruction!r}")


def full_phases(instruction: str, obs: StateObservation, limit: int = 40) -> list[Phase]:
    """Solve the whole task blind from one observation, assuming every phase
    succeeds (used by the no-feedback single-shot agent)."""
    belief = Belief(obs)
    phases: list[Phase] = []
    for _ in range(limit):
        phase = next_phase(instruction, belief)
        phases.append(phase)
        if phase.kind == "check":
            return phases
        belief.apply(phase)
    raise RuntimeError(f"solver did not converge for {instruction!r}")


# ---------------------------------------------------------------------------
# rendering to and from plan text (the planner/coder wire format)

def render_steps(steps: tuple[Step, ...]) -> list[str]:
    lines = []
    for step in steps:
        if step[0] == "move":
            lines.append(f"Move the gripper to ({step[1]:.3f}, {step[2]:.3f}, {step[3]:.3f}).")
        elif step[0] == "close":
            lines.append("Close the gripper.")
        elif step[0] == "open":
            lines.append("Open the gripper.")
        else:
            lines.append("Check task completion.")
    return lines


def render_expected(expected: tuple) -> str:
    if expected[0] == "hold":
        return f"holding the {expected[1]} {expected[2]}"
    if expected[0] == "at":
        return f"the {expected[1]} {expected[2]} placed near ({expected[3]:.3f}, {expected[4]:.3f})"
    return "task complete"


def render_plan(phase: Phase) -> str:
    lines = [f"Plan for the next step: {phase.description}."]
    for i, line in enumerate(render_steps(phase.steps), start=1):
        lines.append(f"{i}. {line}")
    lines.append(f"Expected result: {render_expected(phase.expected)}.")
    return "\n".join(lines)


_MOVE_LINE = re.compile(r"^\d+\. Move the gripper to \((-?\d+\.\d+), (-?\d+\.\d+), (-?\d+\.\d+)\)\.$")
_CLOSE_LINE = re.compile(r"^\d+\. Close the gripper\.$")
_OPEN_LINE = re.compile(r"^\d+\. Open the gripper\.$")
_CHECK_LINE = re.compile(r"^\d+\. Check task completion\.$")
_EXPECT_LINE = re.compile(r"^Expected result: (.+)\.$")
_EXPECT_HOLD = re.compile(r"^holding the (\S+) (.+)$")
_EXPECT_AT = re.compile(r"^the (\S+) (.+) placed near \((-?\d+\.\d+), (-?\d+\.\d+)\)$")


def parse_plan_steps(text: str) -> list[Step]:
    """Recover executable steps from a rendered plan (the coder's job)."""
    steps: list[Step] = []
    for line in text.splitlines():
        line = line.strip()
        m = _MOVE_LINE.match(line)
        if m:
            steps.append(("move", float(m.group(1)), float(m.group(2)), float(m.group(3))))
        elif _CLOSE_LINE.match(line):
            steps.append(("close",))
        elif _OPEN_LINE.match(line):
            steps.append(("open",))
        elif _CHECK_LINE.match(line):
            steps.append(("check",))
    return steps


def parse_expected(text: str) -> tuple | None:
    """Recover the expectation tuple from a previously rendered plan."""
    for line in text.splitlines():
        m = _EXPECT_LINE.match(line.strip())
        if not m:
            continue
        body = m.group(1)
        if body == "task complete":
            return ("done",)
        hold = _EXPECT_HOLD.match(body)
        if hold:
            return ("hold", hold.group(1), hold.group(2))
        at = _EXPECT_AT.match(body)
        if at:
            return ("at", at.group(1), at.group(2), float(at.group(3)), float(at.group(4)))
    return None


def expectation_met(expected: tuple | None, belief: Belief) -> bool:
    if expected is None:
        return True
    if expected[0] == "hold":
        return belief.held == (expected[1], expected[2])
    if expected[0] == "at":
        try:
            rec = belief.find(expected[2], expected[1])
        except KeyError:
            return False
        if belief.held == (expected[1], expected[2]):
            return False
        return math.hypot(rec["center"][0] - expected[3],
                          rec["center"][1] - expected[4]) <= 0.02
    return False   # ("done",): being asked again means the task is not done


def steps_to_program_source(steps: list[Step]) -> str:
    """Translate plan steps into DSL source, merging consecutive moves into one
    trajectory call."""
    lines: list[str] = []
    pending: list[tuple[float, float, float]] = []

    def flush() -> None:
        if pending:
            points = ", ".join(f"({x:.3f}, {y:.3f}, {z:.3f})" for x, y, z in pending)
            lines.append(f"execute_trajectory([{points}])")
            pending.clear()

    for step in steps:
        if step[0] == "move":
            pending.append((step[1], step[2], step[3]))
        elif step[0] == "close":
            flush()
            lines.append("close_gripper()")
        elif step[0] == "open":
            flush()
            lines.append("open_gripper()")
        else:
            flush()
            lines.append("check_task_completion()")
    flush()
    return "\n".join(lines)
