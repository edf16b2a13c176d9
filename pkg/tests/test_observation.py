from __future__ import annotations

import math
import random

import pytest

import oracles
from conftest import boxes_world, random_scene
from tabletop_agents.observation import (EmptyProposalSet, GraspProposal,
                                         MalformedObservation, VisualState, cluster_central,
                                         encode_state, filter_topdown, observe, parse_state,
                                         smooth_state, synth_proposals)
from tabletop_agents.world import ObjectBox, Pose, spawn_scene


def _prop(x, y, z, approach=(0.0, 0.0, -1.0), score=0.5, yaw=0.0):
    return GraspProposal(pose=(x, y, z), yaw=yaw, approach=approach, score=score)


def _tilted(deg: float):
    rad = math.radians(deg)
    return (math.sin(rad), 0.0, -math.cos(rad))


# ---------------------------------------------------------------------------
# text encoding

def test_empty_table_encodes_header_gripper_and_step():
    state = boxes_world([], gripper=Pose(0, 0, 0.3))
    assert encode_state(state) == (
        "CURRENT ENVIRONMENT STATE:\n"
        "gripper: position=(0.000, 0.000, 0.300), yaw=0.00, state=open\n"
        "step: 0"
    )


def test_object_line_format():
    state = boxes_world([ObjectBox("red_block", "block", "red", (0.04, 0.04, 0.04),
                                   Pose(0, 0, 0.02))])
    assert ("red block: dims=(0.040, 0.040, 0.040), center=(0.000, 0.000, 0.020), yaw=0.00"
            in encode_state(state).splitlines())


def test_encode_deterministic_across_copies():
    state = random_scene(17)
    import copy
    assert encode_state(state) == encode_state(copy.deepcopy(state))


def test_round_trip_equality_over_random_scenes():
    for seed in range(40):
        state = random_scene(seed)
        assert parse_state(encode_state(state)) == observe(state)


def test_misspelled_header_rejected_at_line_one():
    with pytest.raises(MalformedObservation) as err:
        parse_state("CURRENT ENVIRONMENT STATE\ngripper: ...")
    assert err.value.line_no == 1


def test_truncated_object_line_reports_its_line():
    state = boxes_world([ObjectBox("red_block", "block", "red", (0.04, 0.04, 0.04),
                                   Pose(0, 0, 0.02))])
    lines = encode_state(state).splitlines()
    lines[1] = lines[1][:25]
    with pytest.raises(MalformedObservation) as err:
        parse_state("\n".join(lines))
    assert err.value.line_no == 2


def test_missing_step_line_rejected():
    state = boxes_world([])
    text = "\n".join(encode_state(state).splitlines()[:-1])
    with pytest.raises(MalformedObservation):
        parse_state(text)


def test_observation_golden_bytes(golden_dir):
    state = spawn_scene([("block", "red", (0.04, 0.04, 0.04)),
                         ("bin", "black", (0.13, 0.13, 0.12))], seed=3)
    expected = (golden_dir / "observation_two_objects_seed3.txt").read_text(encoding="utf-8")
    assert encode_state(state) + "\n" == expected


# ---------------------------------------------------------------------------
# top-down filter

def test_exact_topdown_kept():
    props = [_prop(0, 0, 0.1)]
    assert filter_topdown(props, 30.0) == props


def test_sideways_approach_removed():
    props = [_prop(0, 0, 0.1, approach=(1.0, 0.0, 0.0))]
    assert filter_topdown(props, 30.0) == []


def test_filter_boundary_29_in_31_out():
    inside = _prop(0, 0, 0.1, approach=_tilted(29.0))
    outside = _prop(0, 0, 0.1, approach=_tilted(31.0))
    kept = filter_topdown([inside, outside], 30.0)
    assert kept == [inside]
    # dot-product oracle: angle from straight down
    for prop, expected in ((inside, True), (outside, False)):
        angle = math.degrees(math.acos(-prop.approach[2]))
        assert (angle <= 30.0) == expected


def test_filter_preserves_order_and_validates_tolerance():
    props = [_prop(0, 0, 0.1, approach=_tilted(d)) for d in (5, 25, 10)]
    assert filter_topdown(props, 30.0) == props
    with pytest.raises(ValueError):
        filter_topdown(props, 0.0)
    with pytest.raises(ValueError):
        filter_topdown(props, 90.0)


def test_approach_must_be_unit():
    with pytest.raises(ValueError):
        GraspProposal(pose=(0, 0, 0), yaw=0.0, approach=(0, 0, -2.0), score=0.5)


# ---------------------------------------------------------------------------
# clustering

def test_cluster_central_spec_example():
    props = [_prop(0, 0, 0.1), _prop(0.001, 0, 0.1), _prop(0.3, 0, 0.1, score=0.9)]
    assert cluster_central(props, eps=0.05, min_pts=2) is props[0]


def test_singleton_cluster_min_pts_one():
    props = [_prop(0.2, 0.1, 0.3)]
    assert cluster_central(props, eps=0.01, min_pts=1) is props[0]


def test_all_noise_falls_back_to_best_score():
    props = [_prop(0, 0, 0, score=0.2), _prop(1, 0, 0, score=0.9), _prop(2, 0, 0, score=0.4)]
    assert cluster_central(props, eps=0.05, min_pts=2) is props[1]


def test_empty_proposals_rejected():
    with pytest.raises(EmptyProposalSet):
        cluster_central([], eps=0.1, min_pts=1)


def test_cluster_central_matches_reference_on_random_sets():
    rng = random.Random(0)
    for trial in range(120):
        n = rng.randint(1, 50)
        props = []
        for _ in range(n):
            cluster_at = rng.choice(((0.0, 0.0), (0.2, 0.1), (-0.15, 0.25)))
            props.append(_prop(cluster_at[0] + rng.gauss(0, 0.01),
                               cluster_at[1] + rng.gauss(0, 0.01),
                               0.1 + rng.gauss(0, 0.01),
                               score=rng.random()))
        eps = rng.choice((0.02, 0.05, 0.1))
        min_pts = rng.randint(1, 4)
        assert cluster_central(props, eps, min_pts) is oracles.central_reference(
            props, eps, min_pts)


def test_membership_matches_reference_dbscan():
    from tabletop_agents.observation import _dbscan_labels
    rng = random.Random(42)
    for trial in range(60):
        n = rng.randint(1, 50)
        pts = [(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 0.2)) for _ in range(n)]
        eps = rng.choice((0.05, 0.15, 0.3))
        min_pts = rng.randint(1, 5)
        assert _dbscan_labels(pts, eps, min_pts) == oracles.dbscan_reference(pts, eps, min_pts)


# ---------------------------------------------------------------------------
# history-aware smoothing

def _vs(x, y, z, yaw):
    target = ObjectBox("t", "jar", "red", (0.08, 0.08, 0.08), Pose(0.2, 0.2, 0.04))
    return VisualState(grasp=_prop(x, y, z, yaw=yaw), target=target)


def test_small_translation_large_rotation_keeps_previous():
    prev, cur = _vs(0, 0, 0.1, 0.0), _vs(0.005, 0, 0.1, math.radians(90))
    assert smooth_state(prev, cur) is prev


def test_large_translation_small_rotation_keeps_previous():
    prev, cur = _vs(0, 0, 0.1, 0.0), _vs(0.5, 0, 0.1, math.radians(10))
    assert smooth_state(prev, cur) is prev


def test_both_thresholds_exceeded_adopts_current():
    prev, cur = _vs(0, 0, 0.1, 0.0), _vs(0.5, 0, 0.1, math.radians(90))
    assert smooth_state(prev, cur) is cur


def test_smoothing_boundary_truth_table():
    # strict thresholds, OR semantics: prev is kept unless BOTH are at/above.
    # rotation cases sit 1e-7 deg off the boundary to survive radian conversion
    cases = [
        (0.0090, 29.0000000, "prev"), (0.0090, 31.0000000, "prev"),
        (0.0110, 29.0000000, "prev"), (0.0110, 31.0000000, "cur"),
        (0.0100, 30.0000001, "cur"),  (0.0100, 29.9999999, "prev"),
        (0.0099, 30.0000001, "prev"), (0.5000, 30.0000001, "cur"),
    ]
    for translation, rot_deg, expect in cases:
        prev = _vs(0, 0, 0.1, 0.0)
        cur = _vs(translation, 0, 0.1, math.radians(rot_deg))
        kept = smooth_state(prev, cur)
        assert kept is (prev if expect == "prev" else cur), (translation, rot_deg)


# ---------------------------------------------------------------------------
# synthetic proposals

def _target_block():
    return ObjectBox("red_block", "block", "red", (0.04, 0.04, 0.04), Pose(0.1, -0.2, 0.02))


def test_single_proposal_is_exact_top_center():
    block = _target_block()
    (prop,) = synth_proposals(block, 1, seed=0)
    assert prop.pose == block.top_center
    assert prop.approach == (0.0, 0.0, -1.0)
    assert prop.score == 1.0


def test_synth_deterministic():
    block = _target_block()
    assert synth_proposals(block, 50, 9) == synth_proposals(block, 50, 9)


def test_pipeline_selects_grasp_near_top_center():
    block = _target_block()
    props = synth_proposals(block, 50, 9)
    kept = filter_topdown(props, 30.0)
    assert set(kept) <= set(props)
    chosen = cluster_central(kept, eps=0.02, min_pts=3)
    assert chosen in props
    assert math.dist(chosen.pose, block.top_center) <= 0.02
