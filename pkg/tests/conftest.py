from __future__ import annotations

import math
import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tabletop_agents.world import (GripperState, ObjectBox, Pose, WorldState,
                                   spawn_scene)

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN_DIR


def random_scene(seed: int) -> WorldState:
    """A seeded scene of 2-5 boxes with varied dims for oracle equivalence runs."""
    rng = random.Random(seed)
    n = rng.randint(2, 5)
    manifest = []
    colors = ["red", "blue", "yellow", "purple", "orange"]
    for i in range(n):
        dims = (rng.uniform(0.03, 0.08), rng.uniform(0.03, 0.08), rng.uniform(0.02, 0.08))
        manifest.append(("box", colors[i], dims))
    return spawn_scene(manifest, seed=seed)


def lift_gripper_to(state: WorldState, pose: Pose) -> WorldState:
    """Teleport the gripper (test setup only, not a world operation)."""
    from dataclasses import replace
    return replace(state, gripper=GripperState(pose=pose, open=state.gripper.open,
                                               held_object=state.gripper.held_object))


def boxes_world(boxes: list[ObjectBox], gripper: Pose = Pose(0, 0, 0.3),
                open: bool = True, held: str | None = None) -> WorldState:
    return WorldState(table=(-0.5, -0.5, 0.5, 0.5), objects=tuple(boxes),
                      gripper=GripperState(pose=gripper, open=open, held_object=held))


def random_free_pose(rng: random.Random) -> Pose:
    return Pose(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                rng.uniform(0.0, 0.55), rng.uniform(-math.pi, math.pi))
