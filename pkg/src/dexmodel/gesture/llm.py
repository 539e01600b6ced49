"""Chat-completions client that turns a gesture request into a DSL cost program.

The model sees a short grammar description plus hand-written exemplar programs
and is asked to answer with one fenced ``dsl`` block. The first fenced block of
the reply is parsed; on a parse error the request is resent once with the
error appended. Offline mode never builds an HTTP client and serves canned
replies instead, either from ``canned_dir/<key>.txt`` or the built-in set.
"""

from __future__ import annotations

import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import httpx

from . import builtins
from .dsl import DslError, parse_cost


class LlmError(RuntimeError):
    pass


class LlmNetworkError(LlmError):
    pass


class LlmTimeoutError(LlmError):
    pass


class LlmUnparseableError(LlmError):
    pass


@dataclass(frozen=True)
class LlmClientConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4"
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    offline: bool = True
    canned_dir: Optional[str] = None

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


GRAMMAR = """\
expr := number | tip(i) | tip(i).x | tip(i).y | tip(i).z
      | expr + expr | expr - expr | expr * number | neg(expr)
      | norm(vec - vec) | dot(vec, [a, b, c]) | mean(expr, ...)
tip(i) is the 3-D fingertip position of finger i; .x .y .z select one axis.
Fingers flex towards -z, so a high tip z means the finger is straight and a low
one means it is curled towards the palm. The planner minimizes the expression."""


def _finger_table(config):
    names = {v: k for k, v in config.finger_roles.items()}
    return "\n".join(f"  {i}: {names.get(i, 'finger')}" for i in range(config.num_fingers))


def build_messages(request, exemplars, config):
    """System + user messages; ``exemplars`` is ``[(name, description, source)]``."""
    if len(exemplars) < 2:
        raise ValueError("at least two exemplar programs are required")
    shots = "\n\n".join(f"# {name}: {desc}\n```dsl\n{src}\n```" for name, desc, src in exemplars)
    system = (
        "You write cost functions for a robot hand in a small expression language.\n"
        f"{GRAMMAR}\n\nFinger indices for the {config.name} hand:\n{_finger_table(config)}\n\n"
        f"Refer to the examples and generate gestures.\n\n{shots}\n\n"
        "Answer with exactly one ```dsl fenced block."
    )
    return [{"role": "system", "content": system},
            {"role": "user", "content": f"Gesture: {request}"}]


_BLOCK = re.compile(r"```[ \t]*([A-Za-z0-9_-]*)[ \t]*\n(.*?)```", re.S)


def extract_block(reply):
    """Body of the first fenced block, or ``None``."""
    m = _BLOCK.search(reply)
    return None if m is None else m.group(2).strip()


def _content(data):
    try:
        return data["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as e:
        raise LlmNetworkError(f"malformed response body: {e}") from e


class LlmClient:
    """One request in flight at a time; ``transport`` is injectable for tests."""

    def __init__(self, config, transport=None):
        self.config = config
        self._transport = transport
        self._http = None
        self._lock = threading.Lock()
        self.requests = 0

    def _client(self):
        if self._http is None:
            key = os.environ.get(self.config.api_key_env, "")
            headers = {"Authorization": f"Bearer {key}"} if key else {}
            self._http = httpx.Client(timeout=self.config.timeout, headers=headers,
                                      transport=self._transport)
        return self._http

    def _canned(self, request, hand):
        key = builtins.request_key(request)
        if self.config.canned_dir is not None:
            path = Path(self.config.canned_dir) / f"{key}.txt"
            if path.exists():
                return path.read_text()
        reply = builtins.canned_reply(hand, request)
        if reply is None:
            raise LlmUnparseableError(f"no canned reply for request {request!r}")
        return reply

    def complete(self, messages, request, hand):
        with self._lock:
            self.requests += 1
            if self.config.offline:
                return self._canned(request, hand)
            body = {"model": self.config.model, "messages": messages}
            try:
                r = self._client().post(self.config.endpoint, json=body)
                r.raise_for_status()
                return _content(r.json())
            except httpx.TimeoutException as e:
                raise LlmTimeoutError(str(e)) from e
            except (httpx.HTTPError, ValueError) as e:
                raise LlmNetworkError(str(e)) from e

    def close(self):
        if self._http is not None:
            self._http.close()
            self._http = None


def llm_generate_cost(request, exemplars, client, hand):
    """Ask ``client`` for a program; one retry with the parse error appended."""
    if isinstance(client, LlmClientConfig):
        client = LlmClient(client)
    messages = build_messages(request, exemplars, hand)
    error = None
    for _ in range(2):
        reply = client.complete(messages, request, hand)
        src = extract_block(reply)
        try:
            if src is None:
                raise DslError("reply contains no fenced block", 0)
            return parse_cost(src, hand.num_fingers)
        except DslError as e:
            error = e
            messages = messages + [
                {"role": "assistant", "content": reply},
                {"role": "user", "content": f"That program failed to parse: {e}. Reply with a corrected ```dsl block."},
            ]
    raise LlmUnparseableError(f"reply unparseable after retry: {error}")
