"""Suite runner: seeded multi-episode evaluation across tasks and
architectures, success-rate tables (text + CSV), figures, and trace files.

Episode seeds derive as base_seed + episode_index, where episode_index
enumerates (task, repetition) pairs in listing order; every architecture sees
the same seed for a given (task, repetition), so comparisons are paired.
Scripted-backend suites are bit-reproducible at any parallelism degree."""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .agents import BackendConfig
from .orchestrator import (ARCHITECTURES, ArchitectureConfig, EpisodeTrace,
                           fault_from_dict, run_seeded_episode)

ARCH_ORDER = {arch: i for i, arch in enumerate(ARCHITECTURES)}


@dataclass
class SuiteConfig:
    tasks: list[str]
    architectures: list[str]
    episodes: int = 5
    base_seed: int = 0
    backend: BackendConfig = field(default_factory=BackendConfig)
    output_dir: Path = Path("bench_out")
    parallelism: int = 1
    max_rounds: int = 25
    faults: list[dict] = field(default_factory=list)
    figures: bool = True

    def __post_init__(self) -> None:
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        self.output_dir = Path(self.output_dir)


@dataclass
class ResultsTable:
    tasks: list[str]
    architectures: list[str]
    cells: dict   # (task, arch) -> (successes, episodes)

    def rate(self, task: str, arch: str) -> float:
        successes, episodes = self.cells[(task, arch)]
        return successes / episodes

    def average(self, arch: str) -> float:
        return sum(self.rate(task, arch) for task in self.tasks) / len(self.tasks)


def episode_seed(base_seed: int, task_index: int, episodes: int, repetition: int) -> int:
    return base_seed + task_index * episodes + repetition


def _trace_path(out_dir: Path, task: str, arch: str, seed: int) -> Path:
    return out_dir / "traces" / f"{task}__{arch}__seed{seed}.jsonl"


def _run_one(job: tuple) -> tuple[str, str, int, bool]:
    task, arch, seed, config = job
    path = _trace_path(config.output_dir, task, arch, seed)
    if path.exists():
        trace = EpisodeTrace.from_jsonl(path.read_text(encoding="utf-8"))
        return (task, arch, seed, trace.success)
    arch_cfg = ArchitectureConfig(kind=arch, max_rounds=config.max_rounds)
    faults = [fault_from_dict(f) for f in config.faults]
    trace = run_seeded_episode(arch_cfg, task, seed, config.backend, faults=faults)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(trace.to_jsonl(), encoding="utf-8")
    tmp.replace(path)
    return (task, arch, seed, trace.success)


def run_suite(config: SuiteConfig) -> ResultsTable:
    """Run (or resume) the full grid and return the results table; every
    episode's trace is persisted under output_dir/traces/."""
    out = config.output_dir
    try:
        (out / "traces").mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise SystemExit(f"output directory {out} is not writable: {exc}")

    jobs = []
    for task_index, task in enumerate(config.tasks):
        for repetition in range(config.episodes):
            seed = episode_seed(config.base_seed, task_index, config.episodes, repetition)
            for arch in config.architectures:
                jobs.append((task, arch, seed, config))

    outcomes: dict[tuple[str, str, int], bool] = {}
    if config.parallelism == 1:
        for job in jobs:
            task, arch, seed, success = _run_one(job)
            outcomes[(task, arch, seed)] = success
    else:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            for task, arch, seed, success in pool.map(_run_one, jobs):
                outcomes[(task, arch, seed)] = success

    cells: dict[tuple[str, str], tuple[int, int]] = {}
    for (task, arch, _seed), success in sorted(outcomes.items()):
        successes, episodes = cells.get((task, arch), (0, 0))
        cells[(task, arch)] = (successes + int(success), episodes + 1)

    table = ResultsTable(
        tasks=sorted(set(config.tasks)),
        architectures=sorted(set(config.architectures), key=lambda a: ARCH_ORDER[a]),
        cells=cells,
    )
    _write_outputs(table, config)
    return table


def _write_outputs(table: ResultsTable, config: SuiteConfig) -> None:
    text, csv_text = render_table(table)
    out = config.output_dir
    (out / "results.txt").write_text(text, encoding="utf-8")
    (out / "results.csv").write_text(csv_text, encoding="utf-8")
    meta = {
        "tasks": config.tasks,
        "architectures": config.architectures,
        "episodes": config.episodes,
        "base_seed": config.base_seed,
        "backend": config.backend.to_dict(),
        "deterministic": config.backend.kind == "scripted",
        "seed_rule": "base_seed + task_index * episodes + repetition",
    }
    (out / "suite_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")
    sys.stdout.write(text)
    if config.figures:
        save_figures(table, out)


def render_table(table: ResultsTable) -> tuple[str, str]:
    """Deterministic text and CSV renderings: tasks alphabetical, architectures
    in ablation order, unweighted average column appended. Architectures with
    no episodes at all are omitted with a warning."""
    architectures = []
    for arch in table.architectures:
        if any((task, arch) in table.cells for task in table.tasks):
            architectures.append(arch)
        else:
            sys.stderr.write(f"warning: no episodes for architecture {arch}; row omitted\n")

    width = max([len(t) for t in table.tasks] + [len("task")])
    header = ["task".ljust(width)] + [a.rjust(13) for a in architectures]
    lines = ["  ".join(header)]
    for task in table.tasks:
        row = [task.ljust(width)]
        for arch in architectures:
            successes, episodes = table.cells[(task, arch)]
            row.append(f"{successes / episodes:4.2f} ({successes:>2}/{episodes:<2})".rjust(13))
        lines.append("  ".join(row))
    avg_row = ["Avg".ljust(width)]
    for arch in architectures:
        avg_row.append(f"{table.average(arch):4.2f}".rjust(13))
    lines.append("  ".join(avg_row))
    text = "\n".join(lines) + "\n"

    csv_lines = ["task," + ",".join(architectures)]
    for task in table.tasks:
        cells = [f"{table.rate(task, arch):.4f}" for arch in architectures]
        csv_lines.append(task + "," + ",".join(cells))
    csv_lines.append("Avg," + ",".join(f"{table.average(arch):.4f}" for arch in architectures))
    csv_text = "\n".join(csv_lines) + "\n"
    return text, csv_text


def save_figures(table: ResultsTable, out_dir: Path) -> list[Path]:
    """Render the report figures next to the delimited output: a grouped bar
    chart of success rates, and a horizon plot when stack variants are present."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written: list[Path] = []
    architectures = [a for a in table.architectures
                     if any((t, a) in table.cells for t in table.tasks)]
    if not architectures:
        return written

    fig, ax = plt.subplots(figsize=(max(6.0, 1.6 * len(table.tasks)), 4.0))
    group_width = 0.8
    bar_width = group_width / len(architectures)
    for i, arch in enumerate(architectures):
        xs = [t_idx - group_width / 2 + (i + 0.5) * bar_width
              for t_idx in range(len(table.tasks))]
        ys = [table.rate(task, arch) for task in table.tasks]
        ax.bar(xs, ys, width=bar_width, label=arch)
    ax.set_xticks(range(len(table.tasks)))
    ax.set_xticklabels(table.tasks, rotation=30, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("success rate")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / "success_rates.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    stack_tasks = sorted(t for t in table.tasks if t.startswith("stack_blocks")
                         and t != "stack_blocks")
    if len(stack_tasks) >= 2 and {"SA", "MALMM"} <= set(architectures):
        ks = [int(t[-1]) for t in stack_tasks]
        fig, ax = plt.subplots(figsize=(5.0, 4.0))
        for arch in ("SA", "MALMM"):
            ax.plot(ks, [table.rate(t, arch) for t in stack_tasks], marker="o", label=arch)
        gaps = [table.rate(t, "MALMM") - table.rate(t, "SA") for t in stack_tasks]
        ax.plot(ks, gaps, marker="s", linestyle="--", label="gap (MALMM - SA)")
        ax.set_xticks(ks)
        ax.set_xlabel("blocks to stack")
        ax.set_ylabel("success rate")
        ax.set_ylim(-0.05, 1.05)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / "horizon_scaling.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
