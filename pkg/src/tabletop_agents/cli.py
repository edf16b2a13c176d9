"""Command-line interface.

Subcommands:
  tasks    list the task catalogue
  episode  run a single episode and write/print its trace
  run      run an evaluation suite from a config file and/or flags
  replay   render a stored trace as a human-readable log

Backend specs: "scripted", "scripted:error=0.3,policy=expert", or
"remote:url=http://host/v1/chat/completions,model=name,temperature=0".
Fault specs: "kind@step", e.g. "grasp_slip@3", "displace_object@2:dx=0.05".
Suite config files use `key = value` lines, `#` comments, commas for lists.
The remote API key is read from TABLETOP_API_KEY or OPENAI_API_KEY only.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import tasks as tasks_mod
from .agents import BackendConfig
from .bench import SuiteConfig, run_suite
from .orchestrator import (ARCHITECTURES, ArchitectureConfig, EpisodeTrace,
                           fault_to_dict, render_trace, run_seeded_episode)
from .world import FaultSpec


def parse_backend_spec(spec: str) -> BackendConfig:
    kind, _, rest = spec.partition(":")
    options: dict[str, str] = {}
    if rest:
        for pair in rest.split(","):
            key, _, value = pair.partition("=")
            if not value:
                raise ValueError(f"bad backend option {pair!r}")
            options[key.strip()] = value.strip()
    if kind == "scripted":
        return BackendConfig(kind="scripted",
                             policy=options.get("policy", "expert"),
                             error_rate=float(options.get("error", 0.0)),
                             seed=int(options.get("seed", 0)))
    if kind == "remote":
        return BackendConfig(kind="remote_chat",
                             endpoint=options["url"],
                             model=options.get("model", ""),
                             temperature=float(options.get("temperature", 0.0)),
                             max_tokens=int(options.get("max_tokens", 1024)),
                             timeout=float(options.get("timeout", 120.0)),
                             retries=int(options.get("retries", 2)))
    raise ValueError(f"unknown backend kind {kind!r} (use scripted or remote)")


def parse_fault_spec(spec: str) -> FaultSpec:
    head, _, rest = spec.partition(":")
    kind, _, step = head.partition("@")
    if not step:
        raise ValueError(f"fault spec needs a trigger step: {spec!r}")
    params: dict[str, str] = {}
    if rest:
        for pair in rest.split(","):
            key, _, value = pair.partition("=")
            params[key.strip()] = value.strip()
    displacement = (float(params.get("dx", 0.0)), float(params.get("dy", 0.0)),
                    float(params.get("dz", 0.0)))
    return FaultSpec(kind=kind, trigger_step=int(step),
                     object_id=params.get("object"), displacement=displacement)


def load_config_file(path: Path) -> dict[str, str]:
    values: dict[str, str] = {}
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise SystemExit(f"{path}:{line_no}: expected `key = value`, got {raw!r}")
        values[key.strip()] = value.strip()
    return values


def _cmd_tasks(_args: argparse.Namespace) -> int:
    for name in tasks_mod.catalogue():
        spec, _state = tasks_mod.instantiate(name, seed=0)
        print(f"{name:22s} {spec.instruction}")
    print("\nstack_blocks accepts explicit horizons: stack_blocks2, stack_blocks3, stack_blocks4")
    return 0


def _cmd_episode(args: argparse.Namespace) -> int:
    backend = parse_backend_spec(args.backend)
    faults = [parse_fault_spec(s) for s in args.fault]
    arch = ArchitectureConfig(kind=args.arch, max_rounds=args.max_rounds)
    trace = run_seeded_episode(arch, args.task, args.seed, backend, faults=faults)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(trace.to_jsonl(), encoding="utf-8")
        print(f"trace written to {out}")
    if args.render or not args.out:
        print(render_trace(trace))
    print(f"success={trace.success} rounds={trace.rounds}")
    return 0 if trace.success else 1


def _cmd_run(args: argparse.Namespace) -> int:
    values: dict[str, str] = {}
    if args.config:
        values = load_config_file(Path(args.config))

    def pick(flag, key, default):
        if flag is not None:
            return flag
        if key in values:
            return values[key]
        return default

    tasks_csv = pick(args.tasks, "tasks", ",".join(tasks_mod.catalogue()))
    arch_csv = pick(args.architectures, "architectures", ",".join(ARCHITECTURES))
    backend_spec = pick(args.backend, "backend", "scripted")
    fault_specs = pick(args.fault and ",".join(args.fault), "faults", "")

    config = SuiteConfig(
        tasks=[t.strip() for t in str(tasks_csv).split(",") if t.strip()],
        architectures=[a.strip() for a in str(arch_csv).split(",") if a.strip()],
        episodes=int(pick(args.episodes, "episodes", 5)),
        base_seed=int(pick(args.base_seed, "base_seed", 0)),
        backend=parse_backend_spec(str(backend_spec)),
        output_dir=Path(pick(args.out, "output_dir", "bench_out")),
        parallelism=int(pick(args.parallelism, "parallelism", 1)),
        max_rounds=int(pick(args.max_rounds, "max_rounds", 25)),
        faults=[fault_to_dict(parse_fault_spec(s))
                for s in str(fault_specs).split(",") if s.strip()],
        figures=not args.no_figures,
    )
    run_suite(config)
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    trace = EpisodeTrace.from_jsonl(Path(args.trace).read_text(encoding="utf-8"))
    print(render_trace(trace))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="tabletop-agents",
                                     description="Desk-scale multi-agent manipulation lab")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("tasks", help="list the task catalogue")

    ep = sub.add_parser("episode", help="run a single episode")
    ep.add_argument("--task", required=True)
    ep.add_argument("--arch", required=True, choices=ARCHITECTURES)
    ep.add_argument("--seed", type=int, default=0)
    ep.add_argument("--backend", default="scripted")
    ep.add_argument("--fault", action="append", default=[],
                    help="fault spec kind@step[:dx=..,dy=..,dz=..,object=..]; repeatable")
    ep.add_argument("--max-rounds", type=int, default=25)
    ep.add_argument("--out", help="write the trace to this file")
    ep.add_argument("--render", action="store_true", help="also print the readable log")

    run = sub.add_parser("run", help="run an evaluation suite")
    run.add_argument("--config", help="suite config file (key = value lines)")
    run.add_argument("--tasks", help="comma-separated task names")
    run.add_argument("--architectures", help="comma-separated architecture names")
    run.add_argument("--episodes", type=int)
    run.add_argument("--base-seed", type=int, dest="base_seed")
    run.add_argument("--backend")
    run.add_argument("--fault", action="append", default=None)
    run.add_argument("--out")
    run.add_argument("--parallelism", type=int)
    run.add_argument("--max-rounds", type=int, dest="max_rounds")
    run.add_argument("--no-figures", action="store_true")

    rp = sub.add_parser("replay", help="render a stored trace")
    rp.add_argument("trace")

    args = parser.parse_args(argv)
    handlers = {"tasks": _cmd_tasks, "episode": _cmd_episode,
                "run": _cmd_run, "replay": _cmd_replay}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
