"""Chat-completion client with live, record, and replay backends.

Every test path uses the deterministic replay backend: responses are keyed
by (entry_id, ordinal-of-user-turn) in a line-delimited JSON script. Record
mode wraps the live backend and writes that same script format, so a
recorded session replays byte-identically.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .errors import BackendUnavailableError, ConfigError, OversizeError, ReplayMissError

log = logging.getLogger(__name__)


@dataclass
class GenerationConfig:
    temperature: float = 0.3
    max_response_chars: int = 20_000
    model_name: str = "default"
    request_timeout_s: int = 120
    max_retries: int = 3

    def __post_init__(self):
        if not 0 <= self.temperature <= 2:
            raise ConfigError(f"temperature out of range: {self.temperature}")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")


@dataclass
class Transcript:
    entry_id: str
    turns: list[tuple[str, str]] = field(default_factory=list)  # (role, text)

    def user_turns(self) -> int:
        return sum(1 for role, _ in self.turns if role == "user")

    def validate_alternation(self) -> bool:
        roles = [role for role, _ in self.turns]
        while roles and roles[0] == "system":
            roles.pop(0)
        return all(role == ("user" if i % 2 == 0 else "assistant") for i, role in enumerate(roles))


def request_hash(entry_id: str, ordinal: int, message: str) -> str:
    payload = f"{entry_id}\n{ordinal}\n{message}".encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


class ReplayClient:
    """Deterministic backend fed from a recorded (or hand-written) script.

    Script lines are JSON objects {entry_id, ordinal, request_hash, response};
    an empty request_hash skips the hash check (hand-written fixtures).
    """

    def __init__(self, script_path: Path | str):
        self.script_path = Path(script_path)
        self._responses: dict[tuple[str, int], dict] = {}
        for line in self.script_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            record = json.loads(line)
            self._responses[(record["entry_id"], int(record["ordinal"]))] = record

    def send(self, transcript: Transcript, message: str, cfg: GenerationConfig) -> str:
        if not message:
            raise ValueError("message must be non-empty")
        ordinal = transcript.user_turns()
        record = self._responses.get((transcript.entry_id, ordinal))
        if record is None:
            raise ReplayMissError(f"no scripted response for ({transcript.entry_id}, {ordinal})")
        expected_hash = record.get("request_hash") or ""
        if expected_hash and expected_hash != request_hash(transcript.entry_id, ordinal, message):
            raise ReplayMissError(
                f"request hash mismatch for ({transcript.entry_id}, {ordinal})"
            )
        response = record["response"]
        transcript.turns.append(("user", message))
        transcript.turns.append(("assistant", response))
        return response


class LiveClient:
    """JSON-over-HTTPS chat-completion backend (OpenAI-compatible shape)."""

    def __init__(self, endpoint: str, api_key: str | None = None):
        if not endpoint:
            raise ConfigError("llm.endpoint is required for live mode")
        self.endpoint = endpoint
        self.api_key = api_key

    def _post(self, payload: dict, cfg: GenerationConfig) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(cfg.max_retries + 1):
            try:
                resp = requests.post(
                    self.endpoint, json=payload, headers=headers, timeout=cfg.request_timeout_s
                )
                if resp.status_code == 400 and "context" in resp.text.lower():
                    raise OversizeError("oversize-dialogue")
                if resp.status_code in (429,) or resp.status_code >= 500:
                    raise requests.RequestException(f"status {resp.status_code}")
                resp.raise_for_status()
                data = resp.json()
                choice = (data.get("choices") or [{}])[0]
                text = choice.get("message", {}).get("content") or choice.get("text")
                if text is None:
                    raise BackendUnavailableError(f"unexpected response shape: {data!r:.200}")
                return text
            except (requests.RequestException, ValueError) as exc:
                last_error = exc
                if attempt < cfg.max_retries:
                    time.sleep(0.5 * 2**attempt)
        raise BackendUnavailableError(str(last_error))

    def send(self, transcript: Transcript, message: str, cfg: GenerationConfig) -> str:
        if not message:
            raise ValueError("message must be non-empty")
        history = [{"role": role, "content": text} for role, text in transcript.turns]
        history.append({"role": "user", "content": message})
        payload = {
            "model": cfg.model_name,
            "temperature": cfg.temperature,
            "messages": history,
        }
        response = self._post(payload, cfg)
        if len(response) > cfg.max_response_chars:
            log.warning(
                "response for %s truncated to %d chars", transcript.entry_id, cfg.max_response_chars
            )
            response = response[: cfg.max_response_chars]
        transcript.turns.append(("user", message))
        transcript.turns.append(("assistant", response))
        return response


class RecordingClient:
    """Wraps another client and appends each exchange to a replay script."""

    def __init__(self, inner, script_path: Path | str):
        self.inner = inner
        self.script_path = Path(script_path)

    def send(self, transcript: Transcript, message: str, cfg: GenerationConfig) -> str:
        ordinal = transcript.user_turns()
        response = self.inner.send(transcript, message, cfg)
        record = {
            "entry_id": transcript.entry_id,
            "ordinal": ordinal,
            "request_hash": request_hash(transcript.entry_id, ordinal, message),
            "response": response,
        }
        with self.script_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        return response


def make_client(
    mode: str,
    endpoint: str = "",
    api_key: str | None = None,
    replay_path: Path | str | None = None,
):
    if mode == "replay":
        if not replay_path:
            raise ConfigError("replay mode requires llm.replay_path")
        return ReplayClient(replay_path)
    if mode == "live":
        return LiveClient(endpoint, api_key)
    if mode == "record":
        if not replay_path:
            raise ConfigError("record mode requires llm.replay_path")
        return RecordingClient(LiveClient(endpoint, api_key), replay_path)
    raise ConfigError(f"unknown llm mode: {mode}")
