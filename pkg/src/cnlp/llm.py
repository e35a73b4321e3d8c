"""Optional LLM client: NL to CNL-P transformation and an LLM worker-parsing strategy.

Nothing here runs in the default pipeline. Tests inject ``httpx.MockTransport``
so no request ever leaves the process.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field
from functools import partial
from importlib import resources
from typing import Any, Callable

import httpx

from .diagnostics import Diagnostic
from .frontend import Section, parse_worker
from .model import FormatError, WorkerNode, worker_from_obj

__all__ = [
    "LlmTransport",
    "TransportError",
    "InvalidInputError",
    "load_prompt",
    "transform_nl_to_cnlp",
    "llm_parse_worker",
    "llm_worker_strategy",
]

log = logging.getLogger(__name__)

PROMPT_VERSION = "v1"


class TransportError(RuntimeError):
    """The model endpoint could not be reached or answered with an error."""


class InvalidInputError(ValueError):
    pass


@dataclass
class LlmTransport:
    """Chat-completion endpoint settings. The key is read from the environment at call time."""

    endpoint: str
    model: str
    timeout: float = 30.0
    retries: int = 0
    key_env: str = "CNLP_LLM_KEY"
    http_transport: httpx.BaseTransport | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")

    @classmethod
    def from_env(cls, **overrides: Any) -> LlmTransport:
        endpoint = os.environ.get("CNLP_LLM_ENDPOINT")
        model = os.environ.get("CNLP_LLM_MODEL")
        if not endpoint or not model:
            raise TransportError("CNLP_LLM_ENDPOINT and CNLP_LLM_MODEL must be set")
        return cls(endpoint, model, **overrides)

    def _headers(self) -> dict[str, str]:
        key = os.environ.get(self.key_env)
        return {"Authorization": f"Bearer {key}"} if key else {}

    def chat(self, messages: list[dict[str, str]]) -> str:
        """Send one chat request and return the first message's content."""
        payload = {"model": self.model, "messages": messages, "temperature": 0}
        last: Exception | None = None
        with httpx.Client(timeout=self.timeout, transport=self.http_transport) as client:
            for attempt in range(self.retries + 1):
                try:
                    resp = client.post(self.endpoint, json=payload, headers=self._headers())
                    resp.raise_for_status()
                    return resp.json()["choices"][0]["message"]["content"]
                except httpx.HTTPError as exc:
                    last = exc
                    log.debug("LLM request attempt %d failed: %s", attempt + 1, type(exc).__name__)
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise TransportError(f"unexpected response shape: {exc}") from exc
        raise TransportError(f"request to {self.endpoint} failed: {type(last).__name__}: {last}") from last


def load_prompt(name: str, version: str = PROMPT_VERSION) -> str:
    return (resources.files("cnlp") / "data" / "prompts" / f"{name}_{version}.txt").read_text(encoding="utf-8")


_FENCE_RE = re.compile(r"^\s*```[A-Za-z0-9_-]*\s*\n(.*?)\n\s*```\s*$", re.S)


def _strip_fences(text: str) -> str:
    m = _FENCE_RE.match(text)
    return m.group(1) if m else text.strip()


def transform_nl_to_cnlp(nl_text: str, transport: LlmTransport) -> str:
    """Ask the model for CNL-P source. The caller is expected to lint the result."""
    if not nl_text or not nl_text.strip():
        raise InvalidInputError("natural-language text is empty")
    out = transport.chat([
        {"role": "system", "content": load_prompt("transform")},
        {"role": "user", "content": nl_text},
    ])
    return _strip_fences(out) + "\n"


def _request_worker_json(section: Section, transport: LlmTransport) -> Any:
    header = f"DEFINE_WORKER {section.label}".rstrip()
    messages = [
        {"role": "system", "content": load_prompt("worker")},
        {"role": "user", "content": f"{header}\n{section.body}\nEND_WORKER"},
    ]
    reply = transport.chat(messages)
    try:
        return json.loads(_strip_fences(reply))
    except json.JSONDecodeError as first:
        messages += [
            {"role": "assistant", "content": reply},
            {"role": "user", "content": f"That was not valid JSON ({first.msg}). Reply with the JSON object only."},
        ]
        reply = transport.chat(messages)
        try:
            return json.loads(_strip_fences(reply))
        except json.JSONDecodeError as exc:
            raise FormatError(f"model output is not JSON after one repair attempt: {exc.msg}", "worker") from exc


def llm_parse_worker(section: Section, transport: LlmTransport) -> tuple[WorkerNode, list[Diagnostic]]:
    """Worker strategy backed by a model; falls back to marker parsing when its JSON is invalid."""
    if not section.body.strip():
        return parse_worker(section)
    obj = _request_worker_json(section, transport)
    try:
        worker = worker_from_obj(obj, default_span=section.span)
    except FormatError as exc:
        log.warning("LLM worker output rejected at %s (%s); using marker parser", exc.path, exc.message)
        return parse_worker(section)
    return worker, []


def llm_worker_strategy(transport: LlmTransport) -> Callable[[Section], tuple[WorkerNode, list[Diagnostic]]]:
    """Adapter for ``parse_document(..., worker_parser=...)``."""
    return partial(llm_parse_worker, transport=transport)
