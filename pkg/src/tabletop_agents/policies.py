"""Deterministic scripted policies standing in for LLM agents.

Replies are pure functions of (policy, visible transcript, seed). The noisy
variants inject the error classes long-context models exhibit in this setting:
malformed calls (wrong arity, unknown or argument-less functions), skipped
grasp/release steps, and shifted coordinates. The probability of a defect
grows with the visible context length and with emission size, so architectures
with shorter role-specific contexts degrade more slowly by construction.
"""

from __future__ import annotations

import math
import random
import re

from . import solver
from .agents import BackendConfig, ChatMessage, Transcript
from .observation import HEADER, parse_state

CTX_BASE = 2800.0       # visible-context chars covered by short role-specific views
CTX_SCALE = 4000.0      # every further CTX_SCALE chars adds one unit to the defect exponent
CALLS_REF = 6.0         # emission size (in primitive calls) considered "one unit"

ROLE_SALT = {"planner": 11, "coder": 23, "supervisor": 37,
             "single_agent": 53, "single_agent_full": 67}
# the single agent mixes planning and coding in one context, so its emissions
# carry both roles' failure modes; the dedicated roles split them
NOISE_FACTOR = {"planner": 0.5, "coder": 1.0, "supervisor": 0.5,
                "single_agent": 1.3, "single_agent_full": 1.3}

PARSE_TROUBLE_MARKERS = ("could not be parsed", "No fenced code block", "no new program")


def reply_dispatch(config: BackendConfig):
    """Bind a config to a reply function: (role, system_prompt, transcript) -> text."""

    def dispatch(role: str, system_prompt: str, transcript: Transcript) -> str:
        if config.policy == "silent":
            return "I am not sure what to do next."
        if role == "supervisor" and config.policy == "fixed_cycle":
            return _fixed_cycle_reply(transcript)
        if role == "planner":
            return _planner_reply(config, transcript)
        if role == "coder":
            return _coder_reply(config, transcript)
        if role == "supervisor":
            return _supervisor_reply(config, transcript)
        if role == "single_agent":
            return _single_reply(config, transcript)
        if role == "single_agent_full":
            return _single_full_reply(config, transcript)
        raise ValueError(f"scripted backend has no policy for role {role!r}")

    return dispatch


# ---------------------------------------------------------------------------
# transcript digging

def _instruction(messages: list[ChatMessage]) -> str:
    for msg in messages:
        if msg.author == "user" and msg.content.startswith("Task: "):
            return msg.content.splitlines()[0][len("Task: "):]
    raise ValueError("no task instruction in transcript")


def _latest_observation(messages: list[ChatMessage]) -> str:
    for msg in reversed(messages):
        if HEADER in msg.content:
            lines = msg.content.splitlines()
            start = lines.index(HEADER)
            end = next(i for i in range(start, len(lines)) if lines[i].startswith("step: "))
            return "\n".join(lines[start:end + 1])
    raise ValueError("no observation in transcript")


def _rng(config: BackendConfig, role: str, transcript: Transcript) -> random.Random:
    mix = (config.seed * 2_654_435_761 + len(transcript.messages) * 40_503
           + ROLE_SALT[role]) % (2 ** 63)
    return random.Random(mix)


def _defect_fires(config: BackendConfig, role: str, rng: random.Random,
                  ctx_chars: int, n_calls: int) -> bool:
    if config.error_rate <= 0.0:
        return False
    if config.error_rate >= 1.0:
        return True
    exponent = ((1.0 + max(0.0, ctx_chars - CTX_BASE) / CTX_SCALE)
                * max(1.0, n_calls / CALLS_REF)
                * NOISE_FACTOR[role])
    p = 1.0 - (1.0 - config.error_rate) ** exponent
    return rng.random() < p


def _ctx_chars(view: list[ChatMessage]) -> int:
    return sum(len(m.content) for m in view)


# ---------------------------------------------------------------------------
# defect injection

def _corrupt_steps(steps: list[solver.Step], rng: random.Random) -> tuple[list[solver.Step], str]:
    moves = [i for i, s in enumerate(steps) if s[0] == "move"]
    toggles = [i for i, s in enumerate(steps) if s[0] in ("close", "open")]
    if rng.random() < 0.6 and moves:
        idx = rng.choice(moves)
        axis = rng.choice((1, 2))
        delta = rng.choice((-0.06, 0.06))
        step = list(steps[idx])
        step[axis] += delta
        out = list(steps)
        out[idx] = tuple(step)
        return out, "shifted a waypoint"
    if toggles:
        idx = rng.choice(toggles)
        return steps[:idx] + steps[idx + 1:], "dropped a gripper action"
    if moves:
        return steps[:-1], "dropped the final waypoint"
    return steps, "no defect applied"


def _corrupt_code(src: str, rng: random.Random) -> str:
    lines = src.splitlines()
    kind = rng.choice(("bad_arity", "unknown_fn", "no_args"))
    if kind == "bad_arity":
        for i, line in enumerate(lines):
            if line in ("close_gripper()", "open_gripper()"):
                lines[i] = line.replace("()", "(0.5)")
                return "\n".join(lines)
        lines.append("close_gripper(0.5)")
        return "\n".join(lines)
    if kind == "unknown_fn":
        idx = rng.randrange(len(lines))
        lines[idx] = "grab_object()"
        return "\n".join(lines)
    for i, line in enumerate(lines):
        if line.startswith("execute_trajectory("):
            lines[i] = "execute_trajectory()"
            return "\n".join(lines)
    lines.append("execute_trajectory()")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# role policies

def _planner_reply(config: BackendConfig, transcript: Transcript) -> str:
    view = transcript.view_for("planner")
    instruction = _instruction(view)
    belief = solver.Belief(parse_state(_latest_observation(view)))

    replan = False
    own_last = transcript.last_by("planner")
    if own_last is not None:
        executed_since = any(m.author == "executor" and m.content.startswith("Execution report")
                             and m.timestamp > own_last.timestamp for m in view)
        if executed_since:
            expected = solver.parse_expected(own_last.content)
            replan = not solver.expectation_met(expected, belief)

    phase = solver.next_phase(instruction, belief)
    steps = list(phase.steps)
    rng = _rng(config, "planner", transcript)
    if _defect_fires(config, "planner", rng, _ctx_chars(view), len(steps)):
        steps, _ = _corrupt_steps(steps, rng)
    rendered = solver.render_plan(
        solver.Phase(phase.kind, phase.description, tuple(steps), phase.expected, phase.meta))
    if replan:
        rendered = ("Replanning: the previous step did not produce the expected result; "
                    "starting from the latest environment state.\n" + rendered)
    return rendered


def _coder_reply(config: BackendConfig, transcript: Transcript) -> str:
    view = transcript.view_for("coder")
    plan = transcript.last_by("planner")
    if plan is None:
        return "I need a plan from the planner before I can write the program."
    steps = solver.parse_plan_steps(plan.content)
    if not steps:
        return "The latest plan contains no executable steps; please restate it."
    rng = _rng(config, "coder", transcript)
    src = solver.steps_to_program_source(steps)
    if _defect_fires(config, "coder", rng, _ctx_chars(view), len(steps)):
        if rng.random() < 0.4:
            steps, _ = _corrupt_steps(steps, rng)
            src = solver.steps_to_program_source(steps)
        else:
            src = _corrupt_code(src, rng)
    return f"Here is the program for this step:\n```python\n{src}\n```"


_CODE_LINE_RES = (
    re.compile(r"^execute_trajectory\(\[\(.+\)\]\)$"),
    re.compile(r"^open_gripper\(\)$"),
    re.compile(r"^close_gripper\(\)$"),
    re.compile(r"^check_task_completion\(\)$"),
)


def _code_looks_valid(message: str) -> bool:
    """Lexical inspection of the coder's output: the supervisor's pre-execution
    check that reroutes obviously broken programs back to the coder."""
    from .dsl import extract_code, NoCode
    try:
        source = extract_code(message)
    except NoCode:
        return False
    lines = [ln.strip() for ln in source.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        return False
    return all(any(rx.match(ln) for rx in _CODE_LINE_RES) for ln in lines)


def _supervisor_reply(config: BackendConfig, transcript: Transcript) -> str:
    rng = _rng(config, "supervisor", transcript)
    view = transcript.view_for("supervisor")
    # routing is a short, structured emission: its defect rate does not grow
    # with context, and the orchestrator's fallback ladder masks most garbles
    if _defect_fires(config, "supervisor", rng, 0, 1):
        return "Let me consider the situation before deciding."
    last = next((m for m in reversed(view) if m.author != "supervisor"), None)
    if last is None or last.author == "user":
        return "Start with a plan.\nNEXT: PLANNER"
    if last.author == "executor":
        if any(marker in last.content for marker in PARSE_TROUBLE_MARKERS):
            return "The program needs fixing, not the plan.\nNEXT: CODER"
        if "task_complete" in last.content:
            return "The completion check passed.\nNEXT: TERMINATE"
        return "Review the new state and plan the next step.\nNEXT: PLANNER"
    if last.author == "planner":
        return "Turn the plan into a program.\nNEXT: CODER"
    if not _code_looks_valid(last.content):
        return "That program violates the function signatures; fix it.\nNEXT: CODER"
    return "Run the program.\nNEXT: EXECUTOR"


def _fixed_cycle_reply(transcript: Transcript) -> str:
    last = next((m for m in reversed(transcript.messages) if m.author != "supervisor"), None)
    if last is None or last.author in ("user", "executor"):
        return "NEXT: PLANNER"
    if last.author == "planner":
        return "NEXT: CODER"
    return "NEXT: EXECUTOR"


def _single_reply(config: BackendConfig, transcript: Transcript) -> str:
    view = transcript.view_for("single_agent")
    instruction = _instruction(view)
    belief = solver.Belief(parse_state(_latest_observation(view)))

    replan = False
    own_last = transcript.last_by("single_agent")
    if own_last is not None:
        executed_since = any(m.author == "executor" and m.content.startswith("Execution report")
                             and m.timestamp > own_last.timestamp for m in view)
        if executed_since:
            expected = solver.parse_expected(own_last.content)
            replan = not solver.expectation_met(expected, belief)

    phase = solver.next_phase(instruction, belief)
    steps = list(phase.steps)
    rng = _rng(config, "single_agent", transcript)
    corrupt_code_after = False
    if _defect_fires(config, "single_agent", rng, _ctx_chars(view), len(steps)):
        if rng.random() < 0.5:
            steps, _ = _corrupt_steps(steps, rng)
        else:
            corrupt_code_after = True
    plan_text = solver.render_plan(
        solver.Phase(phase.kind, phase.description, tuple(steps), phase.expected, phase.meta))
    src = solver.steps_to_program_source(steps)
    if corrupt_code_after:
        src = _corrupt_code(src, rng)
    prefix = ("Replanning: the previous step did not produce the expected result; "
              "starting from the latest environment state.\n") if replan else ""
    return f"{prefix}{plan_text}\n\n```python\n{src}\n```"


def _single_full_reply(config: BackendConfig, transcript: Transcript) -> str:
    view = transcript.view_for("single_agent")
    instruction = _instruction(view)
    obs = parse_state(_latest_observation(view))
    phases = solver.full_phases(instruction, obs)
    steps = [s for ph in phases for s in ph.steps]
    rng = _rng(config, "single_agent_full", transcript)
    src = solver.steps_to_program_source(steps)
    if _defect_fires(config, "single_agent_full", rng, _ctx_chars(view), len(steps)):
        if rng.random() < 0.5:
            steps, _ = _corrupt_steps(steps, rng)
            src = solver.steps_to_program_source(steps)
        else:
            src = _corrupt_code(src, rng)
    summary = "; ".join(ph.description for ph in phases)
    return (f"Full plan: {summary}.\nHere is the complete program:\n"
            f"```python\n{src}\n```")


# ---------------------------------------------------------------------------
# helpers used by tests

_NEXT_TOKEN_RE = re.compile(r"\bNEXT:\s*(PLANNER|CODER|EXECUTOR|TERMINATE)\b")


def routing_tokens(text: str) -> list[str]:
    return _NEXT_TOKEN_RE.findall(text)
