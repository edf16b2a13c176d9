"""Agent roles: prompt templates with placeholder substitution, conversation
transcripts with per-role visible windows, and the completion backends
(a chat-completions-compatible remote endpoint or deterministic scripted
policies)."""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass, field, replace
from importlib import resources

import requests

PLACEHOLDERS = ("INSERT TASK", "INSERT EE POSITION", "INSERT EE ORIENTATION", "STATE")
ROLES = ("single_agent", "planner", "coder", "supervisor")

API_KEY_ENV_VARS = ("TABLETOP_API_KEY", "OPENAI_API_KEY")

_PLACEHOLDER_RE = re.compile(r"\[([A-Z][A-Z ]+)\]")


class UnboundPlaceholder(Exception):
    def __init__(self, key: str):
        super().__init__(f"no binding for placeholder [{key}]")
        self.key = key


class BackendUnavailable(Exception):
    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class ResponseTooLong(Exception):
    """The endpoint truncated the completion and it cannot be used safely."""


@dataclass(frozen=True)
class PromptTemplate:
    role: str
    body: str

    def __post_init__(self) -> None:
        for token in _PLACEHOLDER_RE.findall(self.body):
            if token not in PLACEHOLDERS:
                raise ValueError(f"template for {self.role} uses unknown placeholder [{token}]")

    def placeholders(self) -> list[str]:
        return [t for t in _PLACEHOLDER_RE.findall(self.body)]


def load_prompt(role: str) -> PromptTemplate:
    path = resources.files("tabletop_agents.prompts").joinpath(f"{role}.txt")
    return PromptTemplate(role=role, body=path.read_text(encoding="utf-8"))


def render(template: PromptTemplate, bindings: dict[str, str]) -> str:
    """Substitute every placeholder; raises UnboundPlaceholder when the body
    uses a key the bindings do not cover."""
    text = template.body
    for token in template.placeholders():
        if token not in bindings:
            raise UnboundPlaceholder(token)
    for token, value in bindings.items():
        text = text.replace(f"[{token}]", value)
    return text


@dataclass(frozen=True)
class ChatMessage:
    author: str          # role name, "executor", or "user"
    content: str
    timestamp: int       # activation counter, not wall clock

    def __post_init__(self) -> None:
        if not self.content:
            raise ValueError("message content must be non-empty")


@dataclass
class Transcript:
    """Append-only conversation. Role views realize the shorter role-specific
    contexts: the planner never sees code, the coder sees only the latest plan
    and feedback, the supervisor and the single agent see everything."""

    messages: list[ChatMessage] = field(default_factory=list)

    def append(self, author: str, content: str, timestamp: int) -> ChatMessage:
        msg = ChatMessage(author=author, content=content, timestamp=timestamp)
        self.messages.append(msg)
        return msg

    def view_for(self, role: str) -> list[ChatMessage]:
        if role in ("supervisor", "single_agent"):
            return list(self.messages)
        if role == "planner":
            return self._windowed({"user": None, "planner": 2, "executor": 2})
        if role == "coder":
            return self._windowed({"user": None, "planner": 1, "coder": 2, "executor": 1})
        return list(self.messages)

    def _windowed(self, keep: dict[str, int | None]) -> list[ChatMessage]:
        chosen: list[ChatMessage] = []
        budget = dict(keep)
        for msg in reversed(self.messages):
            if msg.author not in budget:
                continue
            limit = budget[msg.author]
            if limit is None:
                chosen.append(msg)
            elif limit > 0:
                chosen.append(msg)
                budget[msg.author] = limit - 1
        chosen.reverse()
        return chosen

    def last_by(self, author: str) -> ChatMessage | None:
        for msg in reversed(self.messages):
            if msg.author == author:
                return msg
        return None


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "scripted"              # "scripted" | "remote_chat"
    # remote fields
    endpoint: str = ""
    model: str = ""
    temperature: float = 0.0
    max_tokens: int = 1024
    timeout: float = 120.0
    retries: int = 2
    # scripted fields
    policy: str = "expert"              # "expert" | "fixed_cycle" | "silent"
    error_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("scripted", "remote_chat"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if not 0.0 <= self.error_rate <= 1.0:
            raise ValueError("error_rate must lie in [0, 1]")

    def to_dict(self) -> dict:
        if self.kind == "remote_chat":
            return {"kind": self.kind, "endpoint": self.endpoint, "model": self.model,
                    "temperature": self.temperature, "max_tokens": self.max_tokens,
                    "timeout": self.timeout, "retries": self.retries}
        return {"kind": self.kind, "policy": self.policy,
                "error_rate": self.error_rate, "seed": self.seed}

    @staticmethod
    def from_dict(data: dict) -> "BackendConfig":
        return BackendConfig(**data)


class RemoteBackend:
    """Chat-completions wire protocol: POST {model, messages, temperature,
    max_tokens}; the first choice's message is the reply. The API key comes
    from the environment and is never logged or recorded."""

    def __init__(self, config: BackendConfig):
        self.config = config

    def complete(self, system_prompt: str, transcript: Transcript, role: str,
                 timestamp: int) -> ChatMessage:
        cfg = self.config
        messages = [{"role": "system", "content": system_prompt}]
        for msg in transcript.view_for(role):
            if msg.author == role:
                messages.append({"role": "assistant", "content": msg.content})
            else:
                messages.append({"role": "user", "content": f"[{msg.author}] {msg.content}"})
        body = {"model": cfg.model, "messages": messages,
                "temperature": cfg.temperature, "max_tokens": cfg.max_tokens}
        headers = {"Content-Type": "application/json"}
        api_key = next((os.environ[v] for v in API_KEY_ENV_VARS if os.environ.get(v)), None)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        attempts = cfg.retries + 1
        last_error = "no attempt made"
        for attempt in range(attempts):
            try:
                response = requests.post(cfg.endpoint, json=body, headers=headers,
                                         timeout=cfg.timeout)
                if response.status_code >= 500:
                    last_error = f"server error {response.status_code}"
                elif response.status_code >= 400:
                    raise BackendUnavailable(
                        f"endpoint rejected the request: {response.status_code}", attempt + 1)
                else:
                    data = response.json()
                    choice = data["choices"][0]
                    if choice.get("finish_reason") == "length":
                        raise ResponseTooLong("completion hit the max_tokens limit")
                    content = choice["message"]["content"]
                    return ChatMessage(author=role, content=content, timestamp=timestamp)
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = str(exc) or type(exc).__name__
            if attempt < attempts - 1:
                time.sleep(min(0.1 * 2 ** attempt, 2.0))
        raise BackendUnavailable(f"backend unreachable after {attempts} attempts: {last_error}",
                                 attempts)


class ScriptedBackend:
    """Deterministic policies standing in for an LLM; replies are a pure
    function of (policy, visible transcript, seed). Never touches the clock
    or the network."""

    def __init__(self, config: BackendConfig):
        from . import policies
        self.config = config
        self._dispatch = policies.reply_dispatch(config)

    def complete(self, system_prompt: str, transcript: Transcript, role: str,
                 timestamp: int) -> ChatMessage:
        content = self._dispatch(role, system_prompt, transcript)
        return ChatMessage(author=role.removesuffix("_full"), content=content,
                           timestamp=timestamp)


def make_backend(config: BackendConfig):
    if config.kind == "remote_chat":
        return RemoteBackend(config)
    return ScriptedBackend(config)


def derive_backend(config: BackendConfig, episode_seed: int) -> BackendConfig:
    """Per-episode backend config: scripted policies get a seed mixed from the
    episode seed so parallel episodes never share RNG state."""
    if config.kind != "scripted":
        return config
    return replace(config, seed=episode_seed * 1_000_003 + config.seed)
