"""Chat-completion transport plus scripted and recording backends."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import httpx

log = logging.getLogger(__name__)

API_KEY_ENV = "CHAINQA_API_KEY"
BASE_URL_ENV = "CHAINQA_BASE_URL"
BACKEND_KINDS = ("gateway", "mock", "oracle", "template")


class GatewayError(RuntimeError):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message if status is None else f"{message} (HTTP {status})")
        self.status = status


class MockMissError(KeyError):
    """The scripted mock has no reply for a request: a bug in the test script."""


def instruction_hash(instruction: str) -> str:
    return hashlib.sha256(instruction.encode("utf-8")).hexdigest()


@dataclass
class BackendSpec:
    kind: str = "template"
    endpoint: str | None = None
    model: str | None = None
    temperature: float = 0.0
    max_tokens: int = 1024
    timeout: float = 60.0
    retries: int = 2
    backoff: float = 0.5
    max_in_flight: int = 4
    # response/request field names, for chat servers with a different shape
    messages_field: str = "messages"
    model_field: str = "model"
    response_path: str = "choices.0.message.content"
    path: str | None = None

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ValueError(f"backend kind must be one of {BACKEND_KINDS}, got {self.kind!r}")
        if self.kind == "gateway":
            self.endpoint = self.endpoint or os.environ.get(BASE_URL_ENV)
            if not self.endpoint or not self.model:
                raise ValueError("gateway backends need an endpoint and a model name")


_inflight: dict[str, threading.BoundedSemaphore] = {}
_inflight_lock = threading.Lock()


def _endpoint_slot(endpoint: str, cap: int) -> threading.BoundedSemaphore:
    with _inflight_lock:
        sem = _inflight.get(endpoint)
        if sem is None:
            sem = _inflight[endpoint] = threading.BoundedSemaphore(cap)
        return sem


def _dig(obj: Any, path: str) -> Any:
    for part in path.split("."):
        obj = obj[int(part)] if isinstance(obj, list) else obj[part]
    return obj


class GatewayBackend:
    """POSTs a two-message chat request and returns the first completion's text.

    Transport errors and 5xx/429 responses are retried ``spec.retries`` times with
    exponential backoff. The API key comes from ``CHAINQA_API_KEY`` only.
    """

    def __init__(self, spec: BackendSpec, client: httpx.Client | None = None):
        if spec.kind != "gateway":
            raise ValueError("GatewayBackend needs a gateway spec")
        self.spec = spec
        self.name = f"gateway:{spec.model}"
        self._client = client or httpx.Client(timeout=spec.timeout)
        self._slot = _endpoint_slot(spec.endpoint, spec.max_in_flight)

    def _headers(self) -> dict[str, str]:
        key = os.environ.get(API_KEY_ENV)
        return {"Authorization": f"Bearer {key}"} if key else {}

    def payload(self, instruction: str, input: str) -> dict[str, Any]:
        s = self.spec
        return {
            s.model_field: s.model,
            s.messages_field: [
                {"role": "system", "content": instruction},
                {"role": "user", "content": input},
            ],
            "temperature": s.temperature,
            "max_tokens": s.max_tokens,
        }

    def complete(self, instruction: str, input: str) -> str:
        s = self.spec
        body = self.payload(instruction, input)
        last: GatewayError | None = None
        for attempt in range(s.retries + 1):
            if attempt:
                time.sleep(s.backoff * 2 ** (attempt - 1))
            try:
                with self._slot:
                    resp = self._client.post(s.endpoint, json=body, headers=self._headers(), timeout=s.timeout)
            except httpx.HTTPError as exc:
                last = GatewayError(f"transport error: {exc}")
                log.warning("gateway attempt %d failed: %s", attempt + 1, exc)
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last = GatewayError("server error", resp.status_code)
                log.warning("gateway attempt %d got HTTP %d", attempt + 1, resp.status_code)
                continue
            if resp.status_code >= 400:
                raise GatewayError("request rejected", resp.status_code)
            try:
                text = _dig(resp.json(), s.response_path)
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise GatewayError(f"unexpected response shape: {exc}", resp.status_code) from None
            log.debug("gateway request=%s response=%r", json.dumps(body)[:2000], text[:2000])
            return text
        assert last is not None
        raise last


@dataclass
class ScriptEntry:
    reply: str
    instruction_sha256: str | None = None
    input: str | None = None


class MockBackend:
    """Replays scripted replies keyed by (instruction hash, input).

    Entries may leave either key as ``None`` to act as a wildcard; exact matches
    win over instruction-only matches, which win over input-only matches.
    """

    def __init__(self, entries: list[ScriptEntry] | None = None, name: str = "mock"):
        self.name = name
        self._exact: dict[tuple[str, str], str] = {}
        self._by_instruction: dict[str, str] = {}
        self._by_input: dict[str, str] = {}
        for e in entries or []:
            self.add(e)

    def add(self, entry: ScriptEntry) -> None:
        if entry.instruction_sha256 and entry.input is not None:
            self._exact[(entry.instruction_sha256, entry.input)] = entry.reply
        elif entry.instruction_sha256:
            self._by_instruction[entry.instruction_sha256] = entry.reply
        elif entry.input is not None:
            self._by_input[entry.input] = entry.reply
        else:
            raise ValueError("script entry needs an instruction hash or an input")

    def script(self, instruction: str, input: str | None, reply: str) -> None:
        self.add(ScriptEntry(reply, instruction_hash(instruction), input))

    def complete(self, instruction: str, input: str) -> str:
        h = instruction_hash(instruction)
        for table, key in ((self._exact, (h, input)), (self._by_instruction, h), (self._by_input, input)):
            if key in table:
                return table[key]
        raise MockMissError(f"no scripted reply for instruction {h[:12]} / input {input[:80]!r}")

    @classmethod
    def load(cls, path: str | Path) -> "MockBackend":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        entries = [
            ScriptEntry(e["reply"], e.get("instruction_sha256"), e.get("input"))
            for e in data["entries"]
        ]
        return cls(entries, name=f"mock:{Path(path).name}")


@dataclass
class RecordingBackend:
    """Wraps a backend and records every exchange for later replay through MockBackend."""

    inner: Any
    entries: list[ScriptEntry] = field(default_factory=list)

    @property
    def name(self) -> str:
        return f"recording:{getattr(self.inner, 'name', type(self.inner).__name__)}"

    def complete(self, instruction: str, input: str) -> str:
        reply = self.inner.complete(instruction, input)
        self.entries.append(ScriptEntry(reply, instruction_hash(instruction), input))
        return reply

    def to_mock(self) -> MockBackend:
        return MockBackend(list(self.entries), name="replay")

    def save(self, path: str | Path) -> None:
        data = {
            "entries": [
                {"instruction_sha256": e.instruction_sha256, "input": e.input, "reply": e.reply}
                for e in self.entries
            ]
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh, ensure_ascii=False, indent=1)
            fh.write("\n")
