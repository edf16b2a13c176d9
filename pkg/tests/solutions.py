"""Golden solution scripts: hand-written solver output turned into DSL source.

The golden program for a task ends at its last consequential primitive (the
final release), so truncating one primitive always removes the action that
makes the success predicate true."""

from __future__ import annotations

from tabletop_agents import solver
from tabletop_agents.observation import observe
from tabletop_agents.tasks import TaskSpec
from tabletop_agents.world import WorldState


def golden_program_source(spec: TaskSpec, state: WorldState) -> str:
    phases = solver.full_phases(spec.instruction, observe(state))
    steps = [s for ph in phases if ph.kind != "check" for s in ph.steps]
    while steps and steps[-1][0] == "move":
        steps.pop()
    assert steps and steps[-1][0] == "open"
    return solver.steps_to_program_source(steps)


def truncated_program_source(spec: TaskSpec, state: WorldState) -> str:
    source = golden_program_source(spec, state)
    lines = source.splitlines()
    return "\n".join(lines[:-1])
