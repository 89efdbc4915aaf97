"""Batch evaluation client for chat-completion-style model endpoints.

Responses append to a JSON-lines file as they arrive, one record per sample,
so an interrupted run resumes by skipping already-recorded sample ids. A
half-written trailing line (crash artifact) is detected and truncated away
before appending resumes; records never duplicate.
"""

from __future__ import annotations

import base64
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import requests

from eventbench.domain import Sample

logger = logging.getLogger(__name__)

# Duration hint prepended for image-sequence inputs; models that only see
# sampled frames otherwise have no way to anchor timestamps.
DEFAULT_DURATION_HINT = "The video lasts {duration} seconds in total. "


class ConfigError(RuntimeError):
    pass


@dataclass
class EndpointConfig:
    base_url: str
    model: str
    auth_env: str = "MODEL_API_KEY"
    temperature: float = 0.0
    max_tokens: int = 1024
    timeout_s: float = 120.0
    max_in_flight: int = 4
    max_retries: int = 2
    backoff_base: float = 0.5
    duration_hint: str | None = DEFAULT_DURATION_HINT

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ConfigError(f"max_in_flight must be >= 1, got {self.max_in_flight}")
        if self.timeout_s <= 0:
            raise ConfigError(f"timeout_s must be positive, got {self.timeout_s}")
        if self.max_retries < 0:
            raise ConfigError(f"max_retries must be >= 0, got {self.max_retries}")

    @classmethod
    def from_json(cls, path: str | Path) -> "EndpointConfig":
        with open(path, encoding="utf-8") as handle:
            return cls(**json.load(handle))

    def auth_token(self) -> str | None:
        return os.environ.get(self.auth_env)


@dataclass(frozen=True)
class ResponseRecord:
    sample_id: str
    raw_text: str
    model: str
    latency_ms: float
    attempts: int
    error: str | None = None

    def to_json(self) -> dict:
        out = {
            "sample_id": self.sample_id,
            "raw_text": self.raw_text,
            "model": self.model,
            "latency_ms": self.latency_ms,
            "attempts": self.attempts,
        }
        if self.error is not None:
            out["error"] = self.error
        return out

    @classmethod
    def from_json(cls, data: dict) -> "ResponseRecord":
        return cls(
            sample_id=data["sample_id"],
            raw_text=data.get("raw_text", ""),
            model=data.get("model", ""),
            latency_ms=float(data.get("latency_ms", 0.0)),
            attempts=int(data.get("attempts", 1)),
            error=data.get("error"),
        )


@dataclass(frozen=True)
class RunSummary:
    completed: int = 0
    failed: int = 0
    skipped: int = 0


def select_frame_indices(n_available: int, n_wanted: int = 8) -> list[int]:
    """Center-of-bin uniform sampling of frame indices.

    When fewer frames exist than wanted, duplicates collapse (order kept).
    """
    if n_available < 1 or n_wanted < 1:
        raise ValueError("n_available and n_wanted must be >= 1")
    indices = []
    for i in range(n_wanted):
        index = int((i + 0.5) * n_available / n_wanted)
        if index not in indices:
            indices.append(index)
    return indices


def _frame_files(media_dir: Path, sample_id: str, n_frames: int) -> list[Path]:
    sample_dir = media_dir / sample_id
    if not sample_dir.is_dir():
        return []
    frames = sorted(sample_dir.glob("frame_*.jpg"))
    if not frames:
        return []
    picked = select_frame_indices(len(frames), n_frames)
    return [frames[i] for i in picked]


def _build_messages(instruction: str, frames: Sequence[Path], sample: Sample, cfg: EndpointConfig) -> list[dict]:
    if not frames:
        return [{"role": "user", "content": instruction}]
    if cfg.duration_hint:
        instruction = cfg.duration_hint.format(duration=f"{sample.duration:.1f}") + instruction
    content: list[dict] = [{"type": "text", "text": instruction}]
    for path in frames:
        encoded = base64.b64encode(path.read_bytes()).decode("ascii")
        content.append({"type": "image_url", "image_url": {"url": f"data:image/jpeg;base64,{encoded}"}})
    return [{"role": "user", "content": content}]


def _request_once(cfg: EndpointConfig, messages: list[dict]) -> str:
    headers = {"Content-Type": "application/json"}
    token = cfg.auth_token()
    if token:
        headers["Authorization"] = f"Bearer {token}"
    body = {
        "model": cfg.model,
        "messages": messages,
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
    }
    response = requests.post(
        f"{cfg.base_url.rstrip('/')}/chat/completions", json=body, headers=headers, timeout=cfg.timeout_s
    )
    response.raise_for_status()
    payload = response.json()
    return payload["choices"][0]["message"]["content"]


def _query_sample(sample: Sample, cfg: EndpointConfig, media_dir: Path | None, n_frames: int) -> ResponseRecord:
    frames = _frame_files(media_dir, sample.id, n_frames) if media_dir else []
    messages = _build_messages(sample.instruction, frames, sample, cfg)
    started = time.monotonic()
    error: str | None = None
    for attempt in range(1, cfg.max_retries + 2):
        try:
            text = _request_once(cfg, messages)
            latency = (time.monotonic() - started) * 1000.0
            return ResponseRecord(sample.id, text, cfg.model, latency, attempt)
        except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
            error = f"{type(exc).__name__}: {exc}"
            if attempt <= cfg.max_retries:
                time.sleep(cfg.backoff_base * 2 ** (attempt - 1))
    latency = (time.monotonic() - started) * 1000.0
    return ResponseRecord(sample.id, "", cfg.model, latency, cfg.max_retries + 1, error=error)


def read_responses(path: str | Path) -> list[ResponseRecord]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(ResponseRecord.from_json(json.loads(line)))
    return records


def _recover_existing(out_path: Path) -> set[str]:
    """Collect completed sample ids; repair a half-written trailing line."""
    if not out_path.exists():
        return set()
    raw = out_path.read_bytes()
    done: set[str] = set()
    pos = 0
    truncate_at: int | None = None
    needs_newline = False
    while pos < len(raw):
        newline = raw.find(b"\n", pos)
        if newline == -1:
            chunk, end, complete = raw[pos:], len(raw), False
        else:
            chunk, end, complete = raw[pos:newline], newline + 1, True
        stripped = chunk.strip()
        if stripped:
            try:
                record = ResponseRecord.from_json(json.loads(stripped.decode("utf-8")))
            except (json.JSONDecodeError, UnicodeDecodeError, KeyError, ValueError):
                if complete:
                    raise ConfigError(f"{out_path} is corrupt mid-file; refusing to resume")
                logger.warning("truncating half-written trailing line in %s", out_path)
                truncate_at = pos
                break
            if record.sample_id in done:
                raise ConfigError(f"{out_path} already contains duplicate id {record.sample_id!r}")
            done.add(record.sample_id)
            needs_newline = not complete
        pos = end
    if truncate_at is not None:
        with open(out_path, "r+b") as handle:
            handle.truncate(truncate_at)
    elif needs_newline:
        with open(out_path, "ab") as handle:
            handle.write(b"\n")
    return done


def _preflight(cfg: EndpointConfig) -> None:
    try:
        requests.get(cfg.base_url, timeout=min(cfg.timeout_s, 10.0))
    except requests.RequestException as exc:
        raise ConfigError(f"endpoint {cfg.base_url} unreachable: {exc}") from exc


def run_batch(
    manifest: Iterable[Sample],
    endpoint: EndpointConfig,
    out_path: str | Path,
    media_dir: str | Path | None = None,
    n_frames: int = 8,
) -> RunSummary:
    """Query the endpoint once per sample not already recorded in out_path.

    Per-sample failures are recorded (``error`` field) and never abort the
    batch; in-flight requests stay within ``endpoint.max_in_flight``. Records
    may complete out of manifest order.
    """
    out_path = Path(out_path)
    media = Path(media_dir) if media_dir else None
    samples = list(manifest)
    done = _recover_existing(out_path)
    todo = [s for s in samples if s.id not in done]
    skipped = len(samples) - len(todo)
    if not todo:
        return RunSummary(0, 0, skipped)

    _preflight(endpoint)

    completed = 0
    failed = 0
    with open(out_path, "a", encoding="utf-8") as sink:
        with ThreadPoolExecutor(max_workers=endpoint.max_in_flight) as pool:
            futures = {pool.submit(_query_sample, s, endpoint, media, n_frames): s.id for s in todo}
            for future in as_completed(futures):
                record = future.result()
                sink.write(json.dumps(record.to_json(), ensure_ascii=False) + "\n")
                sink.flush()
                if record.error is None:
                    completed += 1
                else:
                    failed += 1
                    logger.warning("sample %s failed: %s", record.sample_id, record.error)
    return RunSummary(completed, failed, skipped)
