"""The four-primitive action DSL: code extraction from chat, a strict parser,
a printer, and the executor that dispatches parsed programs to the simulator.

Grammar (docs/dsl_grammar.ebnf, embedded verbatim in the coder prompt): one
call per statement, literal numeric arguments only, no variables, loops,
conditionals, or arithmetic. Parse errors carry line/column and a reason
meant to be fed straight back to the emitting agent.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field

from . import tasks as tasks_mod
from .world import (FaultSpec, OutOfWorkspace, Pose, WorldState,
                    fault_applicable, inject_fault, move_gripper, set_gripper)

PRIMITIVES = ("execute_trajectory", "open_gripper", "close_gripper", "check_task_completion")

STATUS_OK = "ok"
STATUS_COLLISION = "collision"
STATUS_NO_GRASP = "no_grasp"
STATUS_REJECTED = "rejected"
STATUS_TASK_COMPLETE = "task_complete"
STATUS_TASK_INCOMPLETE = "task_incomplete"
STATUS_ABORTED = "aborted"

FATAL_STATUSES = (STATUS_COLLISION, STATUS_NO_GRASP, STATUS_REJECTED)


class NoCode(Exception):
    """Message contained no fenced code block."""


class ParseError(Exception):
    def __init__(self, line: int, column: int, reason: str):
        super().__init__(f"line {line}, column {column}: {reason}")
        self.line = line
        self.column = column
        self.reason = reason


@dataclass(frozen=True)
class PrimitiveCall:
    name: str
    waypoints: tuple[tuple[float, ...], ...] | None = None   # only for execute_trajectory
    line: int = field(default=0, compare=False)              # source position, metadata

    def __post_init__(self) -> None:
        if self.name not in PRIMITIVES:
            raise ValueError(f"unknown primitive {self.name!r}")
        if self.name == "execute_trajectory":
            if not self.waypoints:
                raise ValueError("execute_trajectory needs at least one waypoint")
        elif self.waypoints is not None:
            raise ValueError(f"{self.name} takes no arguments")


@dataclass(frozen=True)
class Program:
    calls: tuple[PrimitiveCall, ...]

    def __post_init__(self) -> None:
        if not self.calls:
            raise ValueError("program must contain at least one call")


@dataclass(frozen=True)
class CallResult:
    index: int
    name: str
    status: str
    narrative: str


@dataclass
class ExecOutcome:
    results: list[CallResult] = field(default_factory=list)
    fired_faults: list[FaultSpec] = field(default_factory=list)
    observation: str = ""

    @property
    def fatal(self) -> bool:
        return any(r.status in FATAL_STATUSES for r in self.results)

    @property
    def task_complete(self) -> bool:
        return any(r.status == STATUS_TASK_COMPLETE for r in self.results)

    @property
    def statuses(self) -> list[str]:
        return [r.status for r in self.results]


_FENCE_RE = re.compile(r"```(?:[A-Za-z0-9_+-]*)\n(.*?)```", re.DOTALL)


def extract_code(message: str) -> str:
    """Return the last fenced code block in a chat message."""
    blocks = _FENCE_RE.findall(message)
    if not blocks:
        raise NoCode("no fenced code block found in the message")
    return blocks[-1].strip("\n")


def _literal_number(node: ast.expr) -> float:
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        inner = _literal_number(node.operand)
        return -inner
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return float(node.value)
    raise ParseError(node.lineno, node.col_offset,
                     "waypoint coordinates must be literal numbers")


def _parse_waypoint(node: ast.expr) -> tuple[float, ...]:
    if not isinstance(node, (ast.Tuple, ast.List)):
        raise ParseError(node.lineno, node.col_offset,
                         "each waypoint must be a tuple like (x, y, z) or (x, y, z, yaw)")
    values = tuple(_literal_number(el) for el in node.elts)
    if len(values) not in (3, 4):
        raise ParseError(node.lineno, node.col_offset,
                         f"waypoints take 3 or 4 coordinates, got {len(values)}")
    return values


def parse_program(source: str) -> Program:
    """Parse DSL source into a Program; raises ParseError with a position and a
    human-readable reason on the first violation."""
    try:
        tree = ast.parse(source)
    except SyntaxError as exc:
        raise ParseError(exc.lineno or 1, exc.offset or 0,
                         f"syntax error: {exc.msg}") from None

    calls: list[PrimitiveCall] = []
    for stmt in tree.body:
        if not isinstance(stmt, ast.Expr) or not isinstance(stmt.value, ast.Call):
            raise ParseError(stmt.lineno, stmt.col_offset,
                             "only direct primitive calls are allowed "
                             "(no variables, loops, or conditionals)")
        call = stmt.value
        if not isinstance(call.func, ast.Name):
            raise ParseError(call.lineno, call.col_offset, "call target must be a plain name")
        name = call.func.id
        if name not in PRIMITIVES:
            raise ParseError(call.lineno, call.col_offset,
                             f"unknown function {name!r}; available functions are "
                             + ", ".join(PRIMITIVES))
        if call.keywords:
            raise ParseError(call.lineno, call.col_offset,
                             f"{name} does not accept keyword arguments")
        if name == "execute_trajectory":
            if len(call.args) != 1:
                raise ParseError(call.lineno, call.col_offset,
                                 "execute_trajectory takes exactly one argument: "
                                 "a list of waypoints")
            arg = call.args[0]
            if not isinstance(arg, (ast.List, ast.Tuple)) or not arg.elts:
                raise ParseError(arg.lineno, arg.col_offset,
                                 "execute_trajectory needs a non-empty list of waypoints")
            waypoints = tuple(_parse_waypoint(el) for el in arg.elts)
            calls.append(PrimitiveCall(name, waypoints, line=stmt.lineno))
        else:
            if call.args:
                raise ParseError(call.lineno, call.col_offset,
                                 f"{name} takes no arguments, got {len(call.args)}")
            calls.append(PrimitiveCall(name, line=stmt.lineno))
    if not calls:
        raise ParseError(1, 0, "program is empty")
    return Program(tuple(calls))


def print_program(program: Program) -> str:
    """Canonical source for a program; parse_program inverts it exactly."""
    lines = []
    for call in program.calls:
        if call.name == "execute_trajectory":
            points = ", ".join("(" + ", ".join(repr(v) for v in wp) + ")"
                               for wp in call.waypoints)
            lines.append(f"execute_trajectory([{points}])")
        else:
            lines.append(f"{call.name}()")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# execution

def execute(program: Program, world: WorldState, task: tasks_mod.TaskSpec,
            faults: list[FaultSpec] | None = None) -> tuple[WorldState, ExecOutcome]:
    """Run the program against the world. Collisions, empty grasps, and
    out-of-workspace waypoints become statuses, never exceptions; remaining
    calls after a fatal status are marked aborted and do not touch the world.
    Scheduled faults fire at the first actuated step >= their trigger."""
    from . import observation as obs

    outcome = ExecOutcome()
    state = world
    pending = sorted(faults or [], key=lambda f: f.trigger_step)
    fired: set[int] = set()
    halted = False
    terminal = False

    def maybe_fire_faults() -> list[str]:
        nonlocal state
        notes = []
        for i, fault in enumerate(pending):
            if i in fired or state.step < fault.trigger_step:
                continue
            if not fault_applicable(state, fault):
                continue
            state = inject_fault(state, fault)
            fired.add(i)
            outcome.fired_faults.append(fault)
            notes.append(f"fault {fault.kind} fired at step {state.step}")
        return notes

    for index, call in enumerate(program.calls):
        if halted or terminal:
            outcome.results.append(CallResult(index, call.name, STATUS_ABORTED,
                                              "not executed: a previous call failed"
                                              if halted else
                                              "not executed: the task already completed"))
            continue

        if call.name == "open_gripper":
            state, report = set_gripper(state, open=True)
            notes = maybe_fire_faults()
            outcome.results.append(CallResult(index, call.name, STATUS_OK,
                                              "; ".join([report.message] + notes)))
        elif call.name == "close_gripper":
            state, report = set_gripper(state, open=False)
            notes = maybe_fire_faults()
            if report.grasped:
                outcome.results.append(CallResult(index, call.name, STATUS_OK,
                                                  "; ".join([report.message] + notes)))
            else:
                halted = True
                outcome.results.append(CallResult(index, call.name, STATUS_NO_GRASP,
                                                  "; ".join([report.message] + notes)))
        elif call.name == "check_task_completion":
            report = tasks_mod.check_success(task, state)
            if report.success:
                terminal = True
                outcome.results.append(CallResult(index, call.name, STATUS_TASK_COMPLETE,
                                                  "; ".join(report.details)))
            else:
                outcome.results.append(CallResult(index, call.name, STATUS_TASK_INCOMPLETE,
                                                  "; ".join(report.details)))
        else:  # execute_trajectory
            status = STATUS_OK
            notes = []
            for wp in call.waypoints:
                yaw = wp[3] if len(wp) == 4 else state.gripper.pose.yaw
                try:
                    target = Pose(wp[0], wp[1], wp[2], yaw)
                except ValueError as exc:
                    status = STATUS_REJECTED
                    notes.append(f"waypoint {wp!r} rejected: {exc}")
                    break
                try:
                    state, report = move_gripper(state, target)
                except OutOfWorkspace as exc:
                    status = STATUS_REJECTED
                    notes.append(str(exc))
                    break
                notes.extend(maybe_fire_faults())
                if not report.completed:
                    status = STATUS_COLLISION
                    contact_desc = ", ".join(f"{cid} at t={t:.3f}" for cid, t in report.contacts)
                    notes.append(
                        f"collision with {contact_desc}; motion truncated at "
                        f"({report.reached.x:.3f}, {report.reached.y:.3f}, {report.reached.z:.3f})"
                    )
                    break
            if status != STATUS_OK:
                halted = True
                outcome.results.append(CallResult(index, call.name, status, "; ".join(notes)))
            else:
                pose = state.gripper.pose
                notes.append(f"gripper at ({pose.x:.3f}, {pose.y:.3f}, {pose.z:.3f})")
                outcome.results.append(CallResult(index, call.name, STATUS_OK, "; ".join(notes)))

    outcome.observation = obs.encode_state(state)
    return state, outcome
