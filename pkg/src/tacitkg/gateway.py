"""Uniform access to model backends: prompt assembly, completion, replay.

Two backend kinds sit behind one `complete()` call: live HTTP
chat-completion services, and a deterministic replay backend that answers
from fixture files keyed by a digest of (model id, stage, source digest).
Replay makes the whole pipeline runnable and testable without network
access or credentials, and makes repeated runs bit-identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from importlib import resources as importlib_resources
from pathlib import Path
from typing import Mapping, Optional, Union

import requests

logger = logging.getLogger(__name__)

STAGE_EXTRACTION = "extraction"
STAGE_ENRICHMENT = "enrichment"
STAGES = (STAGE_EXTRACTION, STAGE_ENRICHMENT)

MODALITY_TRANSCRIPT = "transcript"
MODALITY_VISION = "vision"

_ONTOLOGY_SLOT = "[[ONTOLOGY]]"
_BASE_GRAPH_SLOT = "[[BASE_GRAPH]]"

_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)
_PREFIX_RE = re.compile(r"@prefix\s|\bPREFIX\s")


class GatewayError(Exception):
    """Base class for backend access failures."""


class AuthenticationError(GatewayError):
    """Credential missing or rejected."""


class TransportError(GatewayError):
    """Network-level failure that persisted through all retries."""


class ReplayFixtureMissing(GatewayError):
    """The replay backend has no fixture for the requested key."""

    def __init__(self, key: str, model_id: str, stage: str) -> None:
        super().__init__(
            f"no replay fixture for key {key} (model_id={model_id}, stage={stage})"
        )
        self.key = key


@dataclass(frozen=True)
class TranscriptSource:
    """A text source (ASR transcript or written instructions)."""

    source_id: str
    text: str

    def digest(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class VideoSource:
    """An opaque video attachment descriptor; never decoded here."""

    source_id: str
    ref: str
    media_type: str = "video/mp4"

    def digest(self) -> str:
        return hashlib.sha256(f"{self.ref}\n{self.media_type}".encode("utf-8")).hexdigest()


Source = Union[TranscriptSource, VideoSource]


@dataclass(frozen=True)
class PromptBundle:
    """Everything one completion call needs, stage-specific text included."""

    system_text: str
    ontology_text: str
    source: Source
    stage: str

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage: {self.stage!r}")
        if self.stage == STAGE_ENRICHMENT and not isinstance(self.source, TranscriptSource):
            raise ValueError("enrichment always works from a transcript source")


@dataclass(frozen=True)
class ModelResponse:
    text: str
    input_tokens: int
    output_tokens: int
    model_id: str
    latency_ms: int = 0

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")
        if self.latency_ms < 0:
            raise ValueError("latency must be non-negative")


@dataclass(frozen=True)
class BackendConfig:
    """How to reach one model backend.

    `temperature` defaults to None, i.e. provider default (the sampling
    parameters of the original experiments are unspecified).
    """

    model_id: str
    modality: str = MODALITY_TRANSCRIPT
    endpoint: str = ""
    auth_env_var: str = ""
    max_retries: int = 3
    timeout_s: float = 60.0
    kind: str = "replay"
    fixtures_dir: Optional[str] = None
    supports_video: bool = False
    temperature: Optional[float] = None
    backoff_base_s: float = 0.5

    def __post_init__(self) -> None:
        if self.modality not in (MODALITY_TRANSCRIPT, MODALITY_VISION):
            raise ValueError(f"unknown modality: {self.modality!r}")
        if self.kind not in ("live", "replay"):
            raise ValueError(f"unknown backend kind: {self.kind!r}")
        if self.modality == MODALITY_VISION and not self.supports_video:
            raise ValueError("vision modality requires a backend that declares video support")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class RateLimiter:
    """Serializes bursts: callers proceed at most once per `min_interval_s`."""

    def __init__(self, min_interval_s: float) -> None:
        self.min_interval_s = min_interval_s
        self._lock = threading.Lock()
        self._last = 0.0

    def acquire(self) -> None:
        with self._lock:
            now = time.monotonic()
            wait = self._last + self.min_interval_s - now
            if wait > 0:
                time.sleep(wait)
                now = time.monotonic()
            self._last = now


def _load_template(stage: str) -> str:
    name = f"{stage}.txt"
    return (
        importlib_resources.files("tacitkg") / "resources" / "prompts" / name
    ).read_text(encoding="utf-8")


def assemble_prompt(
    ontology_text: str,
    source: Source,
    stage: str,
    base_graph_text: Optional[str] = None,
    templates: Optional[Mapping[str, str]] = None,
) -> PromptBundle:
    """Build the stage-specific prompt around the ontology and the source.

    Extraction embeds the ontology and the generation constraint; enrichment
    additionally embeds the serialized base graph whose gaps are to be
    filled.  Prompt wording lives in versioned template files, not code.
    """
    if stage not in STAGES:
        raise ValueError(f"unknown stage: {stage!r}")
    if isinstance(source, TranscriptSource):
        if not source.text.strip():
            raise ValueError("source transcript is empty")
    elif not source.ref.strip():
        raise ValueError("video source has an empty reference")

    if stage == STAGE_ENRICHMENT:
        if not isinstance(source, TranscriptSource):
            raise ValueError("enrichment always works from a transcript source")
        if base_graph_text is None:
            raise ValueError("enrichment needs the serialized base graph")

    template = (templates or {}).get(stage) or _load_template(stage)
    system_text = template.replace(_ONTOLOGY_SLOT, ontology_text)
    if stage == STAGE_ENRICHMENT:
        system_text = system_text.replace(_BASE_GRAPH_SLOT, base_graph_text or "")
    return PromptBundle(
        system_text=system_text, ontology_text=ontology_text, source=source, stage=stage
    )


def fixture_key(model_id: str, stage: str, source: Source) -> str:
    """Stable replay key: digest of model id, stage, and source content."""
    material = f"{model_id}\n{stage}\n{source.digest()}"
    return hashlib.sha256(material.encode("utf-8")).hexdigest()[:16]


def _default_fixtures_dir() -> Path:
    return Path(str(importlib_resources.files("tacitkg") / "resources" / "fixtures" / "replay"))


def _replay_complete(config: BackendConfig, bundle: PromptBundle) -> ModelResponse:
    key = fixture_key(config.model_id, bundle.stage, bundle.source)
    fixtures_dir = Path(config.fixtures_dir) if config.fixtures_dir else _default_fixtures_dir()
    path = fixtures_dir / f"{key}.json"
    if not path.exists():
        raise ReplayFixtureMissing(key, config.model_id, bundle.stage)
    record = json.loads(path.read_text(encoding="utf-8"))
    return ModelResponse(
        text=record["text"],
        input_tokens=int(record["input_tokens"]),
        output_tokens=int(record["output_tokens"]),
        model_id=record.get("model_id", config.model_id),
        latency_ms=int(record.get("latency_ms", 0)),
    )


def _user_content(source: Source) -> object:
    if isinstance(source, TranscriptSource):
        return source.text
    return [
        {"type": "text", "text": "Analyze the attached instructional video."},
        {"type": "video_url", "video_url": {"url": source.ref, "media_type": source.media_type}},
    ]


def _live_complete(config: BackendConfig, bundle: PromptBundle) -> ModelResponse:
    credential = os.environ.get(config.auth_env_var or "")
    if not credential:
        raise AuthenticationError(
            f"credential environment variable {config.auth_env_var!r} is not set"
        )

    payload: dict = {
        "model": config.model_id,
        "messages": [
            {"role": "system", "content": bundle.system_text},
            {"role": "user", "content": _user_content(bundle.source)},
        ],
    }
    if config.temperature is not None:
        payload["temperature"] = config.temperature

    headers = {"Authorization": f"Bearer {credential}", "Content-Type": "application/json"}
    last_error: Optional[Exception] = None
    for attempt in range(config.max_retries + 1):
        if attempt:
            delay = config.backoff_base_s * (2 ** (attempt - 1))
            logger.warning("retrying %s after %.1fs (attempt %d)", config.model_id, delay, attempt)
            time.sleep(delay)
        started = time.monotonic()
        try:
            resp = requests.post(
                config.endpoint, json=payload, headers=headers, timeout=config.timeout_s
            )
        except requests.RequestException as exc:
            last_error = exc
            continue
        if resp.status_code in (401, 403):
            raise AuthenticationError(f"backend rejected credential: HTTP {resp.status_code}")
        if resp.status_code == 429 or resp.status_code >= 500:
            last_error = TransportError(f"HTTP {resp.status_code} from {config.endpoint}")
            continue
        if resp.status_code != 200:
            raise GatewayError(f"HTTP {resp.status_code} from {config.endpoint}: {resp.text[:200]}")
        body = resp.json()
        usage = body.get("usage", {})
        return ModelResponse(
            text=body["choices"][0]["message"]["content"],
            input_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
            model_id=body.get("model", config.model_id),
            latency_ms=int((time.monotonic() - started) * 1000),
        )
    raise TransportError(
        f"request to {config.endpoint} failed after {config.max_retries + 1} attempts: {last_error}"
    )


def complete(
    config: BackendConfig,
    bundle: PromptBundle,
    limiter: Optional[RateLimiter] = None,
) -> ModelResponse:
    """Run one completion against the configured backend.

    Replay answers from fixtures (bit-identical across calls); live backends
    check the credential before touching the network and retry transient
    transport failures with exponential backoff.
    """
    if isinstance(bundle.source, VideoSource) and config.modality != MODALITY_VISION:
        raise GatewayError(
            f"backend {config.model_id} has modality {config.modality!r} "
            "and cannot accept a video source"
        )
    if limiter is not None:
        limiter.acquire()
    if config.kind == "replay":
        return _replay_complete(config, bundle)
    return _live_complete(config, bundle)


def extract_turtle_block(response_text: str) -> str:
    """Pull the Turtle payload out of a chatty model response.

    Preference order: first fenced code block; else the suffix starting at
    the first prefix directive; else the whole text unchanged.
    """
    fenced = _FENCE_RE.search(response_text)
    if fenced:
        return fenced.group(1)
    directive = _PREFIX_RE.search(response_text)
    if directive:
        return response_text[directive.start():]
    return response_text
