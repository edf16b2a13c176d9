"""Episode control loops for the four architectures: a one-shot blind single
agent, a single agent with feedback, a fixed planner/coder cycle, and the
supervisor-routed variant. Produces replayable line-delimited JSON traces."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from . import dsl, tasks as tasks_mod
from .agents import (BackendConfig, BackendUnavailable, ResponseTooLong, Transcript,
                     load_prompt, make_backend, render)
from .dsl import NoCode, ParseError
from .observation import encode_state
from .policies import routing_tokens
from .world import FaultSpec, WorldState

ARCHITECTURES = ("SA_NOFEEDBACK", "SA", "MA", "MALMM")
TRACE_VERSION = 1
STALL_LIMIT = 12        # agent activations allowed between executor attempts
ACTIVATION_FACTOR = 40  # absolute safety cap = max_rounds * this


class ConfigurationError(Exception):
    """Architecture and backend set do not match."""


@dataclass(frozen=True)
class ArchitectureConfig:
    kind: str
    max_rounds: int = 25
    max_consecutive_parse_failures: int = 3
    per_call_timeout: float = 120.0

    def __post_init__(self) -> None:
        if self.kind not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.kind!r}")
        if self.max_rounds <= 0 or self.max_consecutive_parse_failures <= 0:
            raise ValueError("limits must be positive")


@dataclass(frozen=True)
class RoutingDecision:
    next: str            # planner | coder | executor | terminate
    reason: str
    fallback: bool = False


@dataclass
class EpisodeTrace:
    task: str
    seed: int
    arch: str
    backend: dict
    faults: list[dict] = field(default_factory=list)
    limits: dict = field(default_factory=dict)
    events: list[dict] = field(default_factory=list)
    success: bool = False
    success_details: list[str] = field(default_factory=list)
    rounds: int = 0

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "header", "version": TRACE_VERSION, "task": self.task,
                             "seed": self.seed, "arch": self.arch, "backend": self.backend,
                             "faults": self.faults, "limits": self.limits},
                            separators=(",", ":"))]
        lines += [json.dumps(event, separators=(",", ":")) for event in self.events]
        lines.append(json.dumps({"type": "result", "success": self.success,
                                 "details": self.success_details, "rounds": self.rounds},
                                separators=(",", ":")))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_jsonl(text: str) -> "EpisodeTrace":
        lines = [json.loads(line) for line in text.splitlines() if line.strip()]
        header = lines[0]
        result = lines[-1]
        if header.get("type") != "header" or result.get("type") != "result":
            raise ValueError("malformed trace: missing header or result line")
        return EpisodeTrace(
            task=header["task"], seed=header["seed"], arch=header["arch"],
            backend=header["backend"], faults=header["faults"],
            limits=header.get("limits", {}), events=lines[1:-1],
            success=result["success"], success_details=list(result["details"]),
            rounds=result["rounds"])


def fault_to_dict(fault: FaultSpec) -> dict:
    return {"kind": fault.kind, "trigger_step": fault.trigger_step,
            "object_id": fault.object_id, "displacement": list(fault.displacement)}


def fault_from_dict(data: dict) -> FaultSpec:
    return FaultSpec(kind=data["kind"], trigger_step=data["trigger_step"],
                     object_id=data.get("object_id"),
                     displacement=tuple(data.get("displacement", (0.0, 0.0, 0.0))))


# ---------------------------------------------------------------------------
# routing

_LADDER = {
    "start": "planner",
    "after_planner": "coder",
    "after_coder_with_code": "executor",
    "after_coder_without_code": "coder",
    "parse_failure": "coder",
    "exec_failure": "planner",
    "exec_ok": "planner",
    "task_complete": "terminate",
}


def route(message_text: str, context: str, fresh_program: bool) -> RoutingDecision:
    """Extract the supervisor's declared target; apply the fallback ladder when
    the message is missing or ambiguous. An explicit decision always wins,
    except that the executor is never re-run without a fresh program."""
    tokens = list(dict.fromkeys(routing_tokens(message_text)))
    if len(tokens) == 1:
        target = tokens[0].lower()
        if target == "executor" and not fresh_program:
            return RoutingDecision(next=_LADDER[context], fallback=True,
                                   reason="supervisor chose the executor but no new program "
                                          "exists; fallback applied")
        return RoutingDecision(next=target, fallback=False, reason="supervisor decision")
    reason = "no routing token found" if not tokens else "ambiguous routing tokens"
    return RoutingDecision(next=_LADDER[context], fallback=True, reason=reason)


def feedback(outcome: dsl.ExecOutcome, observation: str) -> str:
    """Render the executor's report: per-call statuses and narratives followed
    by the fresh environment state."""
    lines = ["Execution report:"]
    for result in outcome.results:
        line = f"{result.index + 1}. {result.name}: {result.status}"
        if result.narrative:
            line += f" ({result.narrative})"
        lines.append(line)
    return "\n".join(lines) + "\n\n" + observation


# ---------------------------------------------------------------------------
# episode runner

class _Runner:
    def __init__(self, arch: ArchitectureConfig, task: tasks_mod.TaskSpec,
                 world: WorldState, backends: dict, faults: list[FaultSpec],
                 backend_config: dict, seed: int):
        self.arch = arch
        self.task = task
        self.world = world
        self.backends = backends
        self.faults = list(faults)
        self.transcript = Transcript()
        self.trace = EpisodeTrace(
            task=task.name, seed=seed, arch=arch.kind, backend=backend_config,
            faults=[fault_to_dict(f) for f in self.faults],
            limits={"max_rounds": arch.max_rounds,
                    "max_consecutive_parse_failures": arch.max_consecutive_parse_failures})
        self.t = 0
        self.rounds = 0
        self.consecutive_parse_failures = 0
        self.activations_since_round = 0
        self.context = "start"
        self.last_program_ts = -1
        self.replan_pending = False
        self.terminated = None   # reason string once set
        self.prompts = self._render_prompts()

    # -- setup -------------------------------------------------------------

    def _required_roles(self) -> tuple[str, ...]:
        if self.arch.kind in ("SA", "SA_NOFEEDBACK"):
            return ("single_agent",)
        if self.arch.kind == "MA":
            return ("planner", "coder")
        return ("planner", "coder", "supervisor")

    def _render_prompts(self) -> dict[str, str]:
        for role in self._required_roles():
            if role not in self.backends:
                raise ConfigurationError(
                    f"{self.arch.kind} requires a {role!r} backend")
        g = self.world.gripper.pose
        bindings = {
            "INSERT TASK": self.task.instruction,
            "INSERT EE POSITION": f"({g.x:.3f}, {g.y:.3f}, {g.z:.3f})",
            "INSERT EE ORIENTATION": f"{g.yaw:.2f}",
            "STATE": encode_state(self.world),
        }
        return {role: render(load_prompt(role), bindings) for role in self._required_roles()}

    # -- event plumbing ----------------------------------------------------

    def _event(self, **kwargs) -> None:
        self.trace.events.append(kwargs)

    def _append_message(self, author: str, content: str) -> None:
        self.transcript.append(author, content, self.t)
        self._event(type="message", t=self.t, author=author, content=content)
        self.t += 1

    def _observe(self) -> str:
        text = encode_state(self.world)
        self._event(type="observation", t=self.t, step=self.world.step, text=text)
        return text

    def _inject_initial(self) -> None:
        obs = self._observe()
        self._append_message("user", f"Task: {self.task.instruction}\n\n{obs}")

    def _terminate(self, reason: str) -> None:
        if self.terminated is None:
            self.terminated = reason

    def _activate(self, author: str, role_key: str | None = None) -> str | None:
        """Run one backend completion; backend failures end the episode."""
        role_key = role_key or author
        prompt = self.prompts[author]
        backend = self.backends[author]
        try:
            msg = backend.complete(prompt, self.transcript, role_key, self.t)
        except (BackendUnavailable, ResponseTooLong) as exc:
            self._event(type="termination_cause", t=self.t,
                        detail=f"backend failure for {author}: {exc}")
            self._terminate("backend_failure")
            return None
        self.activations_since_round += 1
        self._append_message(author, msg.content)
        if author in ("planner", "single_agent"):
            if self.replan_pending or msg.content.startswith("Replanning:"):
                self._event(type="replanning", t=self.t - 1, author=author)
                self.replan_pending = False
        return msg.content

    # -- executor ----------------------------------------------------------

    def _latest_program_message(self):
        for msg in reversed(self.transcript.messages):
            if msg.author in ("coder", "single_agent"):
                return msg
        return None

    def _executor_turn(self, feedback_enabled: bool = True) -> None:
        self.rounds += 1
        self.activations_since_round = 0
        source_msg = self._latest_program_message()
        if source_msg is None or source_msg.timestamp <= self.last_program_ts:
            self._event(type="execution", round=self.rounds, parsed=False,
                        error="no new program to execute")
            self.context = "parse_failure"
            if feedback_enabled:
                self._append_message("executor", "There is no new program to execute; "
                                                 "please provide one.")
            return
        self.last_program_ts = source_msg.timestamp

        try:
            source = dsl.extract_code(source_msg.content)
            program = dsl.parse_program(source)
        except NoCode:
            self.consecutive_parse_failures += 1
            self._event(type="execution", round=self.rounds, parsed=False,
                        error="no fenced code block")
            self.context = "parse_failure"
            if feedback_enabled:
                self._append_message("executor",
                                     "No fenced code block was found in the previous message; "
                                     "please resend the program in a fenced code block.")
            return
        except ParseError as exc:
            self.consecutive_parse_failures += 1
            self._event(type="execution", round=self.rounds, parsed=False, error=str(exc))
            self.context = "parse_failure"
            if feedback_enabled:
                self._append_message("executor",
                                     f"The program could not be parsed: {exc}. "
                                     f"Please resend a corrected program.")
            return

        self.consecutive_parse_failures = 0
        self.world, outcome = dsl.execute(program, self.world, self.task, self.faults)
        for fault in outcome.fired_faults:
            self._event(type="fault", round=self.rounds, kind=fault.kind,
                        trigger_step=fault.trigger_step)
            self.faults = [f for f in self.faults if f is not fault]
        self._event(type="execution", round=self.rounds, parsed=True,
                    statuses=outcome.statuses,
                    narratives=[r.narrative for r in outcome.results])
        if outcome.fired_faults or outcome.fatal:
            self.replan_pending = True

        if outcome.task_complete:
            self.context = "task_complete"
            self._terminate("task_complete")
        elif outcome.fatal:
            self.context = "exec_failure"
        else:
            self.context = "exec_ok"

        if feedback_enabled and self.terminated is None:
            obs = self._observe()
            self._append_message("executor", feedback(outcome, obs))

    # -- limit checks --------------------------------------------------------

    def _limits_hit(self) -> bool:
        if self.terminated is not None:
            return True
        if self.rounds >= self.arch.max_rounds:
            self._terminate("round_limit")
            return True
        if self.consecutive_parse_failures >= self.arch.max_consecutive_parse_failures:
            self._terminate("parse_failures")
            return True
        if self.activations_since_round > STALL_LIMIT:
            self._terminate("stalled")
            return True
        if self.t >= self.arch.max_rounds * ACTIVATION_FACTOR:
            self._terminate("activation_limit")
            return True
        return False

    # -- architecture loops --------------------------------------------------

    def run(self) -> EpisodeTrace:
        self._inject_initial()
        if self.arch.kind == "SA_NOFEEDBACK":
            self._run_sa_nofeedback()
        elif self.arch.kind == "SA":
            self._run_sa()
        elif self.arch.kind == "MA":
            self._run_ma()
        else:
            self._run_malmm()

        report = tasks_mod.check_success(self.task, self.world)
        self.trace.success = report.success
        self.trace.success_details = list(report.details)
        self.trace.rounds = self.rounds
        self._event(type="termination", t=self.t, reason=self.terminated or "loop_exit",
                    rounds=self.rounds, success=report.success)
        return self.trace

    def _run_sa_nofeedback(self) -> None:
        if self._activate("single_agent", role_key="single_agent_full") is None:
            return
        self._executor_turn(feedback_enabled=False)
        self._terminate("single_shot_done")

    def _run_sa(self) -> None:
        while not self._limits_hit():
            if self._activate("single_agent") is None:
                return
            if self._limits_hit():
                return
            self._executor_turn()

    def _run_ma(self) -> None:
        while not self._limits_hit():
            if self._activate("planner") is None:
                return
            if self._limits_hit():
                return
            if self._activate("coder") is None:
                return
            if self._limits_hit():
                return
            self._executor_turn()

    def _run_malmm(self) -> None:
        while not self._limits_hit():
            content = self._activate("supervisor")
            if content is None:
                return
            fresh = (self._latest_program_message() is not None
                     and self._latest_program_message().timestamp > self.last_program_ts)
            decision = route(content, self.context, fresh)
            self._event(type="routing", t=self.t, next=decision.next,
                        reason=decision.reason, fallback=decision.fallback)
            if decision.next == "terminate":
                self._terminate("supervisor_terminate")
                return
            if decision.next == "executor":
                self._executor_turn()
            else:
                content = self._activate(decision.next)
                if content is None:
                    return
                if decision.next == "planner":
                    self.context = "after_planner"
                else:
                    self.context = ("after_coder_with_code" if "```" in content
                                    else "after_coder_without_code")


def run_episode(arch: ArchitectureConfig | str, task: tasks_mod.TaskSpec,
                world: WorldState, backends: dict, faults: list[FaultSpec] | None = None,
                backend_config: BackendConfig | None = None,
                seed: int | None = None) -> EpisodeTrace:
    """Run one episode and return its replayable trace. `backends` maps role
    names to backend instances; backend failures terminate the episode with a
    recorded cause rather than raising."""
    if isinstance(arch, str):
        arch = ArchitectureConfig(kind=arch)
    config_dict = backend_config.to_dict() if backend_config is not None else {}
    runner = _Runner(arch, task, world, backends, faults or [], config_dict,
                     seed if seed is not None else world.seed)
    return runner.run()


def run_seeded_episode(arch: ArchitectureConfig | str, task_name: str, seed: int,
                       backend_config: BackendConfig,
                       faults: list[FaultSpec] | None = None) -> EpisodeTrace:
    """Instantiate the task at `seed`, derive per-episode backends, and run.
    This is the reproducible entry point the bench and the replay check use."""
    from .agents import derive_backend
    if isinstance(arch, str):
        arch = ArchitectureConfig(kind=arch)
    spec, world = tasks_mod.instantiate(task_name, seed)
    episode_cfg = derive_backend(backend_config, seed)
    roles = (("single_agent",) if arch.kind in ("SA", "SA_NOFEEDBACK")
             else ("planner", "coder") if arch.kind == "MA"
             else ("planner", "coder", "supervisor"))
    backends = {role: make_backend(episode_cfg) for role in roles}
    return run_episode(arch, spec, world, backends, faults, episode_cfg, seed)


def replay_episode(trace: EpisodeTrace) -> EpisodeTrace:
    """Re-run a scripted-backend episode from its header; byte-identical traces
    certify determinism."""
    backend_cfg = BackendConfig.from_dict(trace.backend)
    if backend_cfg.kind != "scripted":
        raise ValueError("only scripted-backend traces replay deterministically")
    arch = ArchitectureConfig(kind=trace.arch, **{
        "max_rounds": trace.limits.get("max_rounds", 25),
        "max_consecutive_parse_failures": trace.limits.get("max_consecutive_parse_failures", 3),
    })
    spec, world = tasks_mod.instantiate(trace.task, trace.seed)
    roles = (("single_agent",) if trace.arch in ("SA", "SA_NOFEEDBACK")
             else ("planner", "coder") if trace.arch == "MA"
             else ("planner", "coder", "supervisor"))
    backends = {role: make_backend(backend_cfg) for role in roles}
    faults = [fault_from_dict(f) for f in trace.faults]
    return run_episode(arch, spec, world, backends, faults, backend_cfg, trace.seed)


def render_trace(trace: EpisodeTrace) -> str:
    """Human-readable episode log (the replay subcommand's output)."""
    lines = [f"=== {trace.arch} on {trace.task} (seed {trace.seed}) ==="]
    for event in trace.events:
        kind = event.get("type")
        if kind == "observation":
            lines.append(f"--- observation (world step {event['step']}) ---")
            lines.append(event["text"])
        elif kind == "message":
            lines.append(f"[{event['author']} @ t={event['t']}]")
            lines.append(event["content"])
            lines.append("")
        elif kind == "routing":
            flag = " (fallback)" if event.get("fallback") else ""
            lines.append(f">>> route -> {event['next']}{flag}: {event['reason']}")
        elif kind == "execution":
            if event.get("parsed"):
                lines.append(f">>> execution round {event['round']}: "
                             + ", ".join(event["statuses"]))
            else:
                lines.append(f">>> execution round {event['round']}: "
                             f"parse failure ({event['error']})")
        elif kind == "fault":
            lines.append(f"!!! fault injected: {event['kind']} "
                         f"(trigger step {event['trigger_step']})")
        elif kind == "replanning":
            lines.append("!!! replanning")
        elif kind == "termination":
            lines.append(f"=== terminated: {event['reason']} after {event['rounds']} rounds; "
                         f"success={event['success']} ===")
        elif kind == "termination_cause":
            lines.append(f"!!! {event['detail']}")
    return "\n".join(lines)
