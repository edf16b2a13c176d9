"""Text observations for the agents plus the geometric visual-state pipeline
(top-down filtering, density clustering, history-aware smoothing) run over
synthetic grasp proposals.

The observation grammar is part of the prompt contract; see
docs/observation_grammar.ebnf and the golden files under tests/golden/.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass

from .world import ObjectBox, WorldState

HEADER = "CURRENT ENVIRONMENT STATE:"

SMOOTH_TRANSLATION_M = 0.01
SMOOTH_ROTATION_DEG = 30.0


class MalformedObservation(Exception):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class EmptyProposalSet(Exception):
    """cluster_central called with no proposals."""


@dataclass(frozen=True)
class ObjectRecord:
    name: str
    color: str
    dims: tuple[float, float, float]
    center: tuple[float, float, float]
    yaw: float


@dataclass(frozen=True)
class GripperRecord:
    position: tuple[float, float, float]
    yaw: float
    open: bool


@dataclass(frozen=True)
class StateObservation:
    objects: tuple[ObjectRecord, ...]
    gripper: GripperRecord
    step: int


@dataclass(frozen=True)
class GraspProposal:
    pose: tuple[float, float, float]
    yaw: float
    approach: tuple[float, float, float]
    score: float

    def __post_init__(self) -> None:
        norm = math.sqrt(sum(a * a for a in self.approach))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"approach direction must be unit length, got |v|={norm}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class VisualState:
    grasp: GraspProposal
    target: ObjectBox


# ---------------------------------------------------------------------------
# text encoding

def _fmt3(values) -> str:
    return "(" + ", ".join(f"{v:.3f}" for v in values) + ")"


def observe(state: WorldState) -> StateObservation:
    """The structured observation of a world state."""
    records = tuple(
        ObjectRecord(
            name=o.name,
            color=o.color,
            dims=(round(o.dims[0], 3), round(o.dims[1], 3), round(o.dims[2], 3)),
            center=(round(o.pose.x, 3), round(o.pose.y, 3), round(o.pose.z, 3)),
            yaw=round(o.pose.yaw, 2),
        )
        for o in state.objects
    )
    g = state.gripper
    gripper = GripperRecord(
        position=(round(g.pose.x, 3), round(g.pose.y, 3), round(g.pose.z, 3)),
        yaw=round(g.pose.yaw, 2),
        open=g.open,
    )
    return StateObservation(objects=records, gripper=gripper, step=state.step)


def encode_state(state: WorldState) -> str:
    """Render the observation text block. Deterministic: equal states produce
    identical text (fixed 3-decimal meters, 2-decimal radians)."""
    lines = [HEADER]
    for o in state.objects:
        lines.append(
            f"{o.color} {o.name}: dims={_fmt3(o.dims)}, "
            f"center={_fmt3((o.pose.x, o.pose.y, o.pose.z))}, yaw={o.pose.yaw:.2f}"
        )
    g = state.gripper
    lines.append(
        f"gripper: position={_fmt3((g.pose.x, g.pose.y, g.pose.z))}, "
        f"yaw={g.pose.yaw:.2f}, state={'open' if g.open else 'closed'}"
    )
    lines.append(f"step: {state.step}")
    return "\n".join(lines)


_OBJECT_RE = re.compile(
    r"^(?P<color>\S+) (?P<name>.+): "
    r"dims=\((?P<dims>[^)]*)\), center=\((?P<center>[^)]*)\), yaw=(?P<yaw>-?\d+\.\d+)$"
)
_GRIPPER_RE = re.compile(
    r"^gripper: position=\((?P<pos>[^)]*)\), yaw=(?P<yaw>-?\d+\.\d+), state=(?P<state>open|closed)$"
)
_STEP_RE = re.compile(r"^step: (?P<step>\d+)$")


def _parse_triple(text: str, line_no: int) -> tuple[float, float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise MalformedObservation(line_no, f"expected three numbers, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise MalformedObservation(line_no, f"bad number in {text!r}") from None


def parse_state(text: str) -> StateObservation:
    """Inverse of encode_state; raises MalformedObservation with the offending
    line number on any grammar violation."""
    lines = text.splitlines()
    if not lines or lines[0] != HEADER:
        raise MalformedObservation(1, f"expected header {HEADER!r}")
    objects: list[ObjectRecord] = []
    gripper: GripperRecord | None = None
    step: int | None = None
    for idx, line in enumerate(lines[1:], start=2):
        if gripper is None:
            m = _GRIPPER_RE.match(line)
            if m:
                gripper = GripperRecord(
                    position=_parse_triple(m.group("pos"), idx),
                    yaw=float(m.group("yaw")),
                    open=m.group("state") == "open",
                )
                continue
            m = _OBJECT_RE.match(line)
            if not m:
                raise MalformedObservation(idx, f"unrecognized object line {line!r}")
            objects.append(ObjectRecord(
                name=m.group("name"),
                color=m.group("color"),
                dims=_parse_triple(m.group("dims"), idx),
                center=_parse_triple(m.group("center"), idx),
                yaw=float(m.group("yaw")),
            ))
        elif step is None:
            m = _STEP_RE.match(line)
            if not m:
                raise MalformedObservation(idx, f"expected step line, got {line!r}")
            step = int(m.group("step"))
        else:
            raise MalformedObservation(idx, f"unexpected trailing line {line!r}")
    if gripper is None:
        raise MalformedObservation(len(lines), "missing gripper line")
    if step is None:
        raise MalformedObservation(len(lines), "missing step line")
    return StateObservation(objects=tuple(objects), gripper=gripper, step=step)


# ---------------------------------------------------------------------------
# grasp-proposal pipeline

def filter_topdown(proposals: list[GraspProposal], tolerance_deg: float) -> list[GraspProposal]:
    """Keep proposals whose approach direction is within tolerance of straight
    down (0, 0, -1); input order preserved."""
    if not 0.0 < tolerance_deg < 90.0:
        raise ValueError(f"tolerance_deg must lie in (0, 90), got {tolerance_deg}")
    cos_tol = math.cos(math.radians(tolerance_deg))
    return [p for p in proposals if -p.approach[2] >= cos_tol - 1e-12]


def _dbscan_labels(points: list[tuple[float, float, float]], eps: float, min_pts: int) -> list[int]:
    """Classic DBSCAN over 3D points; cluster ids from 0, noise is -1.
    Neighborhoods use <= eps and include the point itself."""
    n = len(points)
    labels = [None] * n
    cluster = -1

    def neighbors(i: int) -> list[int]:
        xi, yi, zi = points[i]
        out = []
        for j, (xj, yj, zj) in enumerate(points):
            if (xi - xj) ** 2 + (yi - yj) ** 2 + (zi - zj) ** 2 <= eps * eps:
                out.append(j)
        return out

    for i in range(n):
        if labels[i] is not None:
            continue
        seed_neighbors = neighbors(i)
        if len(seed_neighbors) < min_pts:
            labels[i] = -1
            continue
        cluster += 1
        labels[i] = cluster
        queue = [j for j in seed_neighbors if j != i]
        while queue:
            j = queue.pop(0)
            if labels[j] == -1:
                labels[j] = cluster
            if labels[j] is not None:
                continue
            labels[j] = cluster
            j_neighbors = neighbors(j)
            if len(j_neighbors) >= min_pts:
                # noise points stay eligible: they become border members on contact
                queue.extend(k for k in j_neighbors if labels[k] is None or labels[k] == -1)
    return labels


def cluster_central(proposals: list[GraspProposal], eps: float, min_pts: int) -> GraspProposal:
    """Cluster proposal positions with DBSCAN and return the member of the
    largest cluster closest to that cluster's centroid. Ties break to the
    lowest index; if every point is noise, the highest-score proposal wins."""
    if not proposals:
        raise EmptyProposalSet("no grasp proposals to cluster")
    points = [p.pose for p in proposals]
    labels = _dbscan_labels(points, eps, min_pts)

    members: dict[int, list[int]] = {}
    for idx, label in enumerate(labels):
        if label >= 0:
            members.setdefault(label, []).append(idx)
    if not members:
        best = max(range(len(proposals)), key=lambda i: (proposals[i].score, -i))
        return proposals[best]

    largest = max(members.values(), key=lambda idxs: (len(idxs), -min(idxs)))
    cx = sum(points[i][0] for i in largest) / len(largest)
    cy = sum(points[i][1] for i in largest) / len(largest)
    cz = sum(points[i][2] for i in largest) / len(largest)
    central = min(largest, key=lambda i: ((points[i][0] - cx) ** 2
                                          + (points[i][1] - cy) ** 2
                                          + (points[i][2] - cz) ** 2, i))
    return proposals[central]


def smooth_state(prev: VisualState, cur: VisualState) -> VisualState:
    """History-aware smoothing: keep the previous visual state while the grasp
    translation is under 0.01 m OR the yaw change is under 30 degrees (strict
    thresholds, OR-combined)."""
    translation = math.dist(prev.grasp.pose, cur.grasp.pose)
    dyaw = abs(cur.grasp.yaw - prev.grasp.yaw) % (2.0 * math.pi)
    if dyaw > math.pi:
        dyaw = 2.0 * math.pi - dyaw
    rotation_deg = math.degrees(dyaw)
    if translation < SMOOTH_TRANSLATION_M or rotation_deg < SMOOTH_ROTATION_DEG:
        return prev
    return cur


def synth_proposals(obj: ObjectBox, n: int, seed: int) -> list[GraspProposal]:
    """Deterministic synthetic grasp proposals for an object: the first is the
    exact top-face center with a straight-down approach; the rest jitter around
    it with mixed approach directions, plus a fraction of far outliers."""
    if n < 1:
        raise ValueError("n must be >= 1")
    tx, ty, tz = obj.top_center
    proposals = [GraspProposal(pose=(tx, ty, tz), yaw=obj.pose.yaw,
                               approach=(0.0, 0.0, -1.0), score=1.0)]
    rng = random.Random(seed)
    for _ in range(n - 1):
        outlier = rng.random() < 0.25
        if outlier:
            radius = rng.uniform(0.05, 0.15)
            angle = rng.uniform(-math.pi, math.pi)
            pos = (tx + radius * math.cos(angle), ty + radius * math.sin(angle),
                   tz + rng.uniform(0.0, 0.05))
            tilt = math.radians(rng.uniform(0.0, 90.0))
        else:
            pos = (tx + rng.gauss(0.0, 0.004), ty + rng.gauss(0.0, 0.004),
                   tz + rng.gauss(0.0, 0.002))
            tilt = math.radians(rng.uniform(0.0, 20.0))
        azimuth = rng.uniform(-math.pi, math.pi)
        approach = (math.sin(tilt) * math.cos(azimuth),
                    math.sin(tilt) * math.sin(azimuth),
                    -math.cos(tilt))
        norm = math.sqrt(sum(a * a for a in approach))
        approach = tuple(a / norm for a in approach)
        dist = math.dist(pos, (tx, ty, tz))
        score = max(0.0, min(1.0, 1.0 - dist / 0.2 - tilt / math.pi))
        proposals.append(GraspProposal(pose=pos, yaw=obj.pose.yaw,
                                       approach=approach, score=score))
    return proposals
