from __future__ import annotations

import random

import pytest

from tabletop_agents import dsl
from tabletop_agents.dsl import (NoCode, ParseError, PrimitiveCall, Program, execute,
                                 extract_code, parse_program, print_program)
from tabletop_agents.observation import parse_state
from tabletop_agents.tasks import check_success, instantiate
from tabletop_agents.world import FaultSpec, Pose, move_gripper, set_gripper


def random_program(rng: random.Random) -> Program:
    calls = []
    for _ in range(rng.randint(1, 8)):
        kind = rng.choice(dsl.PRIMITIVES)
        if kind == "execute_trajectory":
            waypoints = tuple(
                tuple(round(rng.uniform(-0.5, 0.6), rng.randint(0, 4))
                      for _ in range(rng.choice((3, 4))))
                for _ in range(rng.randint(1, 5)))
            calls.append(PrimitiveCall("execute_trajectory", waypoints))
        else:
            calls.append(PrimitiveCall(kind))
    return Program(tuple(calls))


# ---------------------------------------------------------------------------
# extract_code

def test_single_fenced_block_extracted():
    message = "Sure.\n```python\nopen_gripper()\n```\nDone."
    assert extract_code(message) == "open_gripper()"


def test_last_of_two_fenced_blocks_wins():
    message = "```\nclose_gripper()\n```\ntext\n```python\nopen_gripper()\n```"
    assert extract_code(message) == "open_gripper()"


def test_prose_only_raises_no_code():
    with pytest.raises(NoCode):
        extract_code("I will move the gripper above the block and grasp it.")


# ---------------------------------------------------------------------------
# parse_program

def test_minimal_trajectory_parses():
    program = parse_program("execute_trajectory([(0.0, 0.0, 0.3)])")
    assert len(program.calls) == 1
    assert program.calls[0].waypoints == ((0.0, 0.0, 0.3),)


def test_waypoint_with_yaw_and_negatives():
    program = parse_program("execute_trajectory([(-0.1, 0.2, 0.3, -1.5)])")
    assert program.calls[0].waypoints == ((-0.1, 0.2, 0.3, -1.5),)


def test_comments_and_blank_lines_allowed():
    src = "# approach\nexecute_trajectory([(0.0, 0.0, 0.3)])\n\nclose_gripper()  # grab\n"
    assert [c.name for c in parse_program(src).calls] == ["execute_trajectory", "close_gripper"]


def test_bad_arity_rejected():
    with pytest.raises(ParseError) as err:
        parse_program("close_gripper(0.5)")
    assert "takes no arguments" in err.value.reason
    assert err.value.line == 1


def test_unknown_function_rejected_with_position():
    with pytest.raises(ParseError) as err:
        parse_program("open_gripper()\ngrab_object()")
    assert "unknown function" in err.value.reason
    assert err.value.line == 2


def test_variables_and_loops_rejected():
    with pytest.raises(ParseError):
        parse_program("x = 0.1\nexecute_trajectory([(x, 0, 0.3)])")
    with pytest.raises(ParseError):
        parse_program("for i in range(3):\n    open_gripper()")


def test_arithmetic_rejected():
    with pytest.raises(ParseError) as err:
        parse_program("execute_trajectory([(0.1 + 0.2, 0.0, 0.3)])")
    assert "literal numbers" in err.value.reason


def test_empty_waypoint_list_rejected():
    with pytest.raises(ParseError):
        parse_program("execute_trajectory([])")
    with pytest.raises(ParseError):
        parse_program("execute_trajectory()")


def test_keyword_arguments_rejected():
    with pytest.raises(ParseError):
        parse_program("execute_trajectory(waypoints=[(0, 0, 0.3)])")


def test_wrong_waypoint_width_rejected():
    with pytest.raises(ParseError):
        parse_program("execute_trajectory([(0.1, 0.2)])")


def test_syntax_error_carries_position():
    with pytest.raises(ParseError) as err:
        parse_program("open_gripper(")
    assert err.value.line >= 1


def test_print_parse_round_trip():
    rng = random.Random(7)
    for _ in range(60):
        program = random_program(rng)
        assert parse_program(print_program(program)) == program


# ---------------------------------------------------------------------------
# execute

def _put_block_setup():
    spec, state = instantiate("put_block", 2)
    block = next(o for o in state.objects if o.name == "block")
    return spec, state, block


def test_pick_sequence_statuses_before_placement():
    spec, state, block = _put_block_setup()
    src = (f"open_gripper()\n"
           f"execute_trajectory([({block.pose.x:.3f}, {block.pose.y:.3f}, 0.25)])\n"
           f"execute_trajectory([({block.pose.x:.3f}, {block.pose.y:.3f}, "
           f"{block.top + 0.005:.3f})])\n"
           f"close_gripper()\n"
           f"check_task_completion()")
    final, outcome = execute(parse_program(src), state, spec)
    assert outcome.statuses == ["ok", "ok", "ok", "ok", "task_incomplete"]
    assert final.gripper.held_object == block.id


def test_collision_aborts_remaining_calls():
    from conftest import boxes_world
    from tabletop_agents.world import ObjectBox
    spec, _state, _block = _put_block_setup()
    block = ObjectBox("red_block", "block", "red", (0.04, 0.04, 0.04), Pose(0.1, 0, 0.02))
    state = boxes_world([block], gripper=Pose(0, 0, 0.3))
    # descend beside the block, then sweep straight through it
    src = ("execute_trajectory([(0.0, 0.0, 0.02), (0.3, 0.0, 0.02)])\n"
           "close_gripper()\n"
           "open_gripper()")
    final, outcome = execute(parse_program(src), state, spec)
    assert outcome.statuses == ["collision", "aborted", "aborted"]
    assert "red_block" in outcome.results[0].narrative
    assert "truncated" in outcome.results[0].narrative
    obs = parse_state(outcome.observation)
    assert obs.gripper.open                       # the aborted calls never ran
    assert final.gripper.pose.x < 0.081           # stopped at the box face


def test_no_mutation_after_fatal_status():
    spec, state, block = _put_block_setup()
    fatal_src = "close_gripper()"                 # far from anything: no_grasp
    suffix_src = fatal_src + "\nexecute_trajectory([(0.2, 0.2, 0.4)])\nopen_gripper()"
    state_a, outcome_a = execute(parse_program(fatal_src), state, spec)
    state_b, outcome_b = execute(parse_program(suffix_src), state, spec)
    assert outcome_a.statuses == ["no_grasp"]
    assert outcome_b.statuses == ["no_grasp", "aborted", "aborted"]
    assert state_a == state_b


def test_check_on_solved_state_reports_complete():
    spec, state, block = _put_block_setup()
    area = next(o for o in state.objects if o.name == "target area")
    from solutions import golden_program_source
    solved, _ = execute(parse_program(golden_program_source(spec, state)), state, spec)
    assert check_success(spec, solved).success
    final, outcome = execute(parse_program("check_task_completion()"), solved, spec)
    assert outcome.statuses == ["task_complete"]


def test_out_of_workspace_waypoint_rejected_not_raised():
    spec, state, _ = _put_block_setup()
    final, outcome = execute(parse_program("execute_trajectory([(0.9, 0.0, 0.3)])\n"
                                           "close_gripper()"), state, spec)
    assert outcome.statuses == ["rejected", "aborted"]
    assert "workspace" in outcome.results[0].narrative


def test_executor_equivalent_to_direct_world_ops():
    spec, state, block = _put_block_setup()
    src = (f"open_gripper()\n"
           f"execute_trajectory([({block.pose.x:.3f}, {block.pose.y:.3f}, 0.25), "
           f"({block.pose.x:.3f}, {block.pose.y:.3f}, {block.top + 0.005:.3f})])\n"
           f"close_gripper()")
    via_dsl, outcome = execute(parse_program(src), state, spec)

    direct, _ = set_gripper(state, open=True)
    direct, _ = move_gripper(direct, Pose(round(block.pose.x, 3), round(block.pose.y, 3), 0.25))
    direct, _ = move_gripper(direct, Pose(round(block.pose.x, 3), round(block.pose.y, 3),
                                          round(block.top + 0.005, 3)))
    direct, _ = set_gripper(direct, open=False)
    assert via_dsl == direct


def test_waypoint_yaw_defaults_to_current_gripper_yaw():
    spec, state, block = _put_block_setup()
    turned, _ = execute(parse_program("execute_trajectory([(0.0, 0.0, 0.3, 1.25)])"),
                        state, spec)
    assert turned.gripper.pose.yaw == pytest.approx(1.25)
    after, _ = execute(parse_program("execute_trajectory([(0.1, 0.1, 0.3)])"), turned, spec)
    assert after.gripper.pose.yaw == pytest.approx(1.25)


def test_fault_fires_at_first_applicable_step():
    spec, state, block = _put_block_setup()
    fault = FaultSpec(kind="grasp_slip", trigger_step=1)
    src = (f"execute_trajectory([({block.pose.x:.3f}, {block.pose.y:.3f}, 0.25), "
           f"({block.pose.x:.3f}, {block.pose.y:.3f}, {block.top + 0.005:.3f})])\n"
           f"close_gripper()\n"
           f"execute_trajectory([({block.pose.x:.3f}, {block.pose.y:.3f}, 0.25)])")
    final, outcome = execute(parse_program(src), state, spec, faults=[fault])
    # trigger step 1 precedes the grasp; the slip defers until something is held
    assert outcome.fired_faults == [fault]
    assert final.gripper.held_object is None
    assert not final.object_by_id(block.id).held


def test_execute_deterministic():
    spec, state, block = _put_block_setup()
    from solutions import golden_program_source
    program = parse_program(golden_program_source(spec, state))
    a = execute(program, state, spec)
    b = execute(program, state, spec)
    assert a[0] == b[0] and a[1].statuses == b[1].statuses
