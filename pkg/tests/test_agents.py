from __future__ import annotations

import re

import pytest

from stub_server import StubServer
from tabletop_agents.agents import (BackendConfig, BackendUnavailable, ChatMessage,
                                    PromptTemplate, RemoteBackend, ResponseTooLong,
                                    Transcript, UnboundPlaceholder, load_prompt,
                                    make_backend, render)
from tabletop_agents.dsl import PRIMITIVES
from tabletop_agents.observation import encode_state
from tabletop_agents.tasks import instantiate

GRAMMAR = (__import__("pathlib").Path(__file__).parent.parent
           / "docs" / "dsl_grammar.ebnf").read_text(encoding="utf-8")


# ---------------------------------------------------------------------------
# templates

def test_render_substitutes_task():
    template = PromptTemplate(role="planner", body="Task: [INSERT TASK]")
    assert render(template, {"INSERT TASK": "Stack 4 blocks"}) == "Task: Stack 4 blocks"


def test_render_without_placeholders_is_identity():
    template = PromptTemplate(role="planner", body="No placeholders here.")
    assert render(template, {}) == "No placeholders here."


def test_render_missing_binding_raises():
    template = PromptTemplate(role="planner", body="State:\n[STATE]")
    with pytest.raises(UnboundPlaceholder) as err:
        render(template, {"INSERT TASK": "x"})
    assert err.value.key == "STATE"


def test_render_idempotent_on_own_output():
    template = PromptTemplate(role="planner", body="[INSERT TASK] then [STATE]")
    bindings = {"INSERT TASK": "Close the jar", "STATE": "CURRENT..."}
    once = render(template, bindings)
    again = render(PromptTemplate(role="planner", body=once), bindings)
    assert once == again


def test_unknown_placeholder_rejected():
    with pytest.raises(ValueError):
        PromptTemplate(role="planner", body="[MYSTERY TOKEN]")


# ---------------------------------------------------------------------------
# shipped prompt lint

ALL_ROLES = ("single_agent", "planner", "coder", "supervisor")


@pytest.mark.parametrize("role", ALL_ROLES)
def test_prompts_state_the_coordinate_frame(role):
    body = load_prompt(role).body
    assert "z = 0" in body
    assert "0.6" in body            # workspace height cap
    assert "[INSERT TASK]" in body
    assert "[INSERT EE POSITION]" in body and "[INSERT EE ORIENTATION]" in body
    assert "[STATE]" in body


def test_planner_prompt_has_collision_rules_and_replanning():
    body = load_prompt("planner").body.lower()
    assert "collision" in body
    assert "replan" in body


def test_coder_prompt_lists_all_four_signatures_and_grammar():
    body = load_prompt("coder").body
    for name in PRIMITIVES:
        assert name in body
    assert GRAMMAR.strip() in body   # the grammar is embedded verbatim


def test_supervisor_prompt_lists_routable_parties():
    body = load_prompt("supervisor").body
    for token in ("PLANNER", "CODER", "EXECUTOR", "TERMINATE"):
        assert token in body


@pytest.mark.parametrize("role", ALL_ROLES)
def test_prompts_are_zero_shot(role):
    body = load_prompt(role).body
    assert "```" not in body         # no fenced example blocks
    # no demo invocation with literal numeric arguments
    assert not re.search(r"(execute_trajectory|open_gripper|close_gripper|"
                         r"check_task_completion)\(\s*[\[\(]?\s*-?\d", body)


@pytest.mark.parametrize("role", ALL_ROLES)
def test_prompts_render_cleanly_for_a_real_task(role):
    spec, state = instantiate("stack_blocks", 0)
    bindings = {"INSERT TASK": spec.instruction,
                "INSERT EE POSITION": "(0.000, 0.000, 0.300)",
                "INSERT EE ORIENTATION": "0.00",
                "STATE": encode_state(state)}
    text = render(load_prompt(role), bindings)
    assert "[INSERT" not in text and "[STATE]" not in text
    assert spec.instruction in text


# ---------------------------------------------------------------------------
# transcript views

def _filled_transcript() -> Transcript:
    t = Transcript()
    lines = [("user", "Task: stack"), ("supervisor", "NEXT: PLANNER"),
             ("planner", "plan 1"), ("supervisor", "NEXT: CODER"),
             ("coder", "code 1"), ("executor", "report 1"),
             ("planner", "plan 2"), ("coder", "code 2"),
             ("executor", "report 2"), ("planner", "plan 3"),
             ("coder", "code 3"), ("executor", "report 3")]
    for i, (author, content) in enumerate(lines):
        t.append(author, content, i)
    return t


def test_message_content_must_be_non_empty():
    with pytest.raises(ValueError):
        ChatMessage(author="planner", content="", timestamp=0)


def test_supervisor_sees_everything():
    t = _filled_transcript()
    assert t.view_for("supervisor") == t.messages


def test_planner_view_excludes_code_and_keeps_recent_window():
    t = _filled_transcript()
    view = t.view_for("planner")
    authors = [m.author for m in view]
    assert "coder" not in authors and "supervisor" not in authors
    assert [m.content for m in view if m.author == "planner"] == ["plan 2", "plan 3"]
    assert [m.content for m in view if m.author == "executor"] == ["report 2", "report 3"]
    assert view == sorted(view, key=lambda m: m.timestamp)


def test_coder_view_keeps_latest_plan_only():
    t = _filled_transcript()
    view = t.view_for("coder")
    assert [m.content for m in view if m.author == "planner"] == ["plan 3"]
    assert [m.content for m in view if m.author == "executor"] == ["report 3"]
    assert "supervisor" not in [m.author for m in view]


# ---------------------------------------------------------------------------
# backend config

def test_backend_config_validation():
    with pytest.raises(ValueError):
        BackendConfig(kind="telepathy")
    with pytest.raises(ValueError):
        BackendConfig(temperature=-0.1)
    with pytest.raises(ValueError):
        BackendConfig(retries=-1)
    with pytest.raises(ValueError):
        BackendConfig(error_rate=1.5)


def test_backend_config_round_trips_via_dict():
    cfg = BackendConfig(kind="scripted", policy="expert", error_rate=0.25, seed=42)
    assert BackendConfig.from_dict(cfg.to_dict()) == cfg


# ---------------------------------------------------------------------------
# remote backend wire protocol

def _transcript_with(*pairs) -> Transcript:
    t = Transcript()
    for i, (author, content) in enumerate(pairs):
        t.append(author, content, i)
    return t


def test_remote_backend_posts_expected_body_and_returns_reply(monkeypatch):
    monkeypatch.setenv("TABLETOP_API_KEY", "sk-test-not-logged")
    with StubServer() as server:
        server.state.fixed_reply = "NEXT: PLANNER"
        cfg = BackendConfig(kind="remote_chat", endpoint=server.url, model="test-model",
                            temperature=0.0, max_tokens=512, timeout=5.0, retries=0)
        backend = RemoteBackend(cfg)
        transcript = _transcript_with(("user", "Task: test"), ("planner", "plan"),
                                      ("supervisor", "prior decision"))
        msg = backend.complete("You are the supervisor", transcript, "supervisor", 3)
        assert msg.content == "NEXT: PLANNER" and msg.author == "supervisor"

        (request,) = server.state.requests
        body = request["body"]
        assert body["model"] == "test-model"
        assert body["temperature"] == 0.0 and body["max_tokens"] == 512
        assert body["messages"][0] == {"role": "system", "content": "You are the supervisor"}
        assert body["messages"][1] == {"role": "user", "content": "[user] Task: test"}
        assert body["messages"][2] == {"role": "user", "content": "[planner] plan"}
        # the supervisor's own prior message maps to the assistant role
        assert body["messages"][3] == {"role": "assistant", "content": "prior decision"}
        assert request["auth"] == "Bearer sk-test-not-logged"


def test_remote_backend_retries_transient_errors():
    with StubServer() as server:
        server.state.fail_next = 2
        server.state.fixed_reply = "recovered"
        cfg = BackendConfig(kind="remote_chat", endpoint=server.url, model="m",
                            timeout=5.0, retries=2)
        msg = RemoteBackend(cfg).complete("sys", _transcript_with(("user", "hi")), "planner", 0)
        assert msg.content == "recovered"
        assert len(server.state.requests) == 3


def test_unreachable_endpoint_fails_after_configured_attempts():
    cfg = BackendConfig(kind="remote_chat", endpoint="http://127.0.0.1:9/v1/chat",
                        model="m", timeout=0.2, retries=2)
    with pytest.raises(BackendUnavailable) as err:
        RemoteBackend(cfg).complete("sys", _transcript_with(("user", "hi")), "planner", 0)
    assert err.value.attempts == 3


def test_truncated_completion_raises_response_too_long():
    with StubServer() as server:
        server.state.truncate_next = 1
        cfg = BackendConfig(kind="remote_chat", endpoint=server.url, model="m",
                            timeout=5.0, retries=0)
        with pytest.raises(ResponseTooLong):
            RemoteBackend(cfg).complete("sys", _transcript_with(("user", "hi")), "planner", 0)


# ---------------------------------------------------------------------------
# scripted policies

def _put_block_transcript() -> Transcript:
    spec, state = instantiate("put_block", 0)
    t = Transcript()
    t.append("user", f"Task: {spec.instruction}\n\n{encode_state(state)}", 0)
    return t


def test_scripted_planner_golden(golden_dir):
    backend = make_backend(BackendConfig(kind="scripted", policy="expert", seed=0))
    transcript = _put_block_transcript()
    msg = backend.complete("sys", transcript, "planner", 1)
    expected = (golden_dir / "planner_put_block_seed0.txt").read_text(encoding="utf-8")
    assert msg.content + "\n" == expected
    assert msg.content.splitlines()[-1].startswith("Expected result:")


def test_scripted_coder_golden(golden_dir):
    backend = make_backend(BackendConfig(kind="scripted", policy="expert", seed=0))
    transcript = _put_block_transcript()
    plan = backend.complete("sys", transcript, "planner", 1)
    transcript.append("planner", plan.content, 1)
    code = backend.complete("sys", transcript, "coder", 2)
    expected = (golden_dir / "coder_put_block_seed0.txt").read_text(encoding="utf-8")
    assert code.content + "\n" == expected
    assert "```python" in code.content


def test_scripted_policies_deterministic():
    a = make_backend(BackendConfig(kind="scripted", policy="expert", seed=3, error_rate=0.4))
    b = make_backend(BackendConfig(kind="scripted", policy="expert", seed=3, error_rate=0.4))
    ta, tb = _put_block_transcript(), _put_block_transcript()
    assert a.complete("s", ta, "planner", 1).content == b.complete("s", tb, "planner", 1).content


def test_noisy_coder_at_rate_one_always_defective():
    clean = make_backend(BackendConfig(kind="scripted", policy="expert", seed=5))
    noisy = make_backend(BackendConfig(kind="scripted", policy="expert", seed=5,
                                       error_rate=1.0))
    for seed in range(6):
        spec, state = instantiate("put_block", seed)
        t = Transcript()
        t.append("user", f"Task: {spec.instruction}\n\n{encode_state(state)}", 0)
        plan = clean.complete("s", t, "planner", 1)
        t.append("planner", plan.content, 1)
        good = clean.complete("s", t, "coder", 2).content
        bad = noisy.complete("s", t, "coder", 2).content
        assert good != bad


def test_noisy_defect_classes_match_observed_error_kinds():
    seen = set()
    for seed in range(30):
        noisy = make_backend(BackendConfig(kind="scripted", policy="expert", seed=seed,
                                           error_rate=1.0))
        clean = make_backend(BackendConfig(kind="scripted", policy="expert", seed=seed))
        spec, state = instantiate("stack_blocks", seed)
        t = Transcript()
        t.append("user", f"Task: {spec.instruction}\n\n{encode_state(state)}", 0)
        plan = clean.complete("s", t, "planner", 1)
        t.append("planner", plan.content, 1)
        bad = noisy.complete("s", t, "coder", 2).content
        if "grab_object()" in bad:
            seen.add("unknown_fn")
        if re.search(r"(close|open)_gripper\(0\.5\)", bad):
            seen.add("bad_arity")
        if "execute_trajectory()" in bad:
            seen.add("no_args")
        good = clean.complete("s", t, "coder", 2).content
        if bad.count("close_gripper()") < good.count("close_gripper()"):
            seen.add("skipped_grasp")
    assert {"unknown_fn", "bad_arity", "no_args", "skipped_grasp"} <= seen


def test_error_rate_zero_emissions_are_clean():
    clean = make_backend(BackendConfig(kind="scripted", policy="expert", seed=9))
    zero = make_backend(BackendConfig(kind="scripted", policy="expert", seed=9,
                                      error_rate=0.0))
    t = _put_block_transcript()
    assert (clean.complete("s", t, "planner", 1).content
            == zero.complete("s", t, "planner", 1).content)
