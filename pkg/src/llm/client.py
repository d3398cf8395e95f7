"""Chat-completion client.

The http backend POSTs {endpoint}/chat/completions with the system and user
messages and retries connection errors, timeouts, 429 and 5xx with exponential
backoff. The stub backends never touch the network:

  scripted      canned text keyed by instance id (stub file)
  echo          the reference ranking of the instance
  reverse       the reference ranking, reversed
  context       Borda vote over the rankings shown in the prompt's shots
  alphabetical  feature names in alphabetical order, ignoring the prompt
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Sequence

import requests
import yaml
from loguru import logger
from tenacity import RetryCallState, Retrying, retry_if_exception, stop_after_attempt, wait_exponential

from src.errors import (
    ConfigError,
    CorruptFile,
    EndpointUnreachable,
    HttpStatus,
    LlmTimeout,
    MissingFile,
    StubKeyMissing,
)
from src.llm.prompt import PromptBundle, narrative_for, render_answer, signed_ranking


RETRY_STATUS = frozenset({429, 500, 502, 503, 504})


class Backend(str, Enum):
    HTTP = "http"
    STUB = "stub"


class StubMode(str, Enum):
    SCRIPTED = "scripted"
    ECHO = "echo"
    REVERSE = "reverse"
    CONTEXT = "context"
    ALPHABETICAL = "alphabetical"


@dataclass(frozen=True)
class LlmConfig:
    model_name: str = "stub"
    endpoint_url: str = "http://localhost:8000/v1"
    backend: Backend = Backend.STUB
    stub_mode: StubMode = StubMode.ECHO
    temperature: float = 0.0
    max_tokens: int = 512
    timeout: float = 30.0
    max_retries: int = 3
    backoff: float = 0.5
    backoff_max: float = 30.0
    concurrency: int = 4
    api_key_env: str = "LLM_API_KEY"

    def __post_init__(self):
        object.__setattr__(self, "backend", Backend(self.backend))
        object.__setattr__(self, "stub_mode", StubMode(self.stub_mode))
        if self.temperature < 0:
            raise ConfigError(f"temperature must be >= 0, got {self.temperature}")
        if self.backoff < 0 or self.backoff_max < 0:
            raise ConfigError(f"backoff must be >= 0, got {self.backoff} (max {self.backoff_max})")
        if self.max_retries < 0:
            raise ConfigError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.timeout <= 0 or self.concurrency < 1:
            raise ConfigError("timeout must be > 0 and concurrency >= 1")

    @property
    def url(self) -> str:
        return f"{self.endpoint_url.rstrip('/')}/chat/completions"

    @classmethod
    def from_dict(cls, d: Optional[Mapping]) -> "LlmConfig":
        d = dict(d or {})
        if "model" in d and "model_name" not in d:
            d["model_name"] = d.pop("model")
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class Completion:
    text: str
    model: str
    backend: str
    attempts: int = 1
    latency: float = 0.0
    usage: dict = field(default_factory=dict)

    @property
    def retries(self) -> int:
        return self.attempts - 1

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "backend": self.backend,
            "attempts": self.attempts,
            "retries": self.retries,
            "latency": round(self.latency, 4),
            "usage": dict(self.usage),
        }


def load_stub_script(path: str | Path) -> dict[str, str]:
    """Map of instance id to canned response text, from a JSON or YAML (.yaml/.yml) file."""
    p = Path(path)
    if not p.exists():
        raise MissingFile(f"Stub script not found: {p}")
    text = p.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text) if p.suffix.lower() in (".yaml", ".yml") else json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise CorruptFile(f"Stub script cannot be parsed: {p} ({e})") from e
    if not isinstance(data, dict) or not all(isinstance(v, str) for v in data.values()):
        raise CorruptFile(f"Stub script must map instance ids to strings: {p}")
    return {str(k): v for k, v in data.items()}


# --- stubs -----------------------------------------------------------------

def _reference_ranking(bundle: PromptBundle) -> list[tuple[str, str]]:
    if bundle.reference is None:
        raise StubKeyMissing(f"No reference explanation attached to the prompt for {bundle.instance_id}")
    return list(signed_ranking(bundle.reference))


def _borda(bundle: PromptBundle) -> list[tuple[str, str]]:
    if not bundle.shots:
        return [(name, "+") for name in sorted(bundle.feature_names)]
    points: dict[str, float] = {}
    votes: dict[str, int] = {}
    for shot in bundle.shots:
        n = len(shot.ranking)
        for pos, (name, sign) in enumerate(shot.ranking):
            points[name] = points.get(name, 0.0) + (n - pos)
            votes[name] = votes.get(name, 0) + (1 if sign == "+" else -1)
    ranked = sorted((n for n in bundle.feature_names if n in points), key=lambda n: (-points[n], n))
    ranked += sorted(n for n in bundle.feature_names if n not in points)
    return [(n, "-" if votes.get(n, 0) < 0 else "+") for n in ranked]


def _stub_text(cfg: LlmConfig, bundle: PromptBundle, script: Optional[Mapping[str, str]]) -> str:
    mode = cfg.stub_mode
    if mode == StubMode.SCRIPTED:
        if script is None or bundle.instance_id not in script:
            raise StubKeyMissing(f"Stub script has no response for instance {bundle.instance_id!r}")
        return script[bundle.instance_id]
    if mode == StubMode.ECHO:
        ranking = _reference_ranking(bundle)
    elif mode == StubMode.REVERSE:
        ranking = _reference_ranking(bundle)[::-1]
    elif mode == StubMode.CONTEXT:
        ranking = _borda(bundle)
    else:
        ranking = [(name, "+") for name in sorted(bundle.feature_names)]
    return render_answer(ranking, narrative_for(ranking, bundle.cluster_label, {}))


# --- http ------------------------------------------------------------------

def _headers(cfg: LlmConfig) -> dict:
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(cfg.api_key_env, "").strip()
    if key:
        headers["Authorization"] = f"Bearer {key}"
    return headers


def _retryable(error: BaseException) -> bool:
    if isinstance(error, (LlmTimeout, EndpointUnreachable)):
        return True
    return isinstance(error, HttpStatus) and error.code in RETRY_STATUS


def _post_once(cfg: LlmConfig, body: dict, headers: dict) -> tuple[str, dict]:
    try:
        response = requests.post(cfg.url, json=body, headers=headers, timeout=cfg.timeout)
    except requests.Timeout as e:
        raise LlmTimeout(f"No response from {cfg.url} within {cfg.timeout}s") from e
    except requests.ConnectionError as e:
        raise EndpointUnreachable(f"Cannot reach {cfg.url}: {e}") from e
    if response.status_code != 200:
        raise HttpStatus(response.status_code, response.text[:200])
    try:
        payload = response.json()
        text = payload["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as e:
        raise HttpStatus(200, f"malformed completion body ({type(e).__name__})") from e
    return str(text), dict(payload.get("usage") or {})


def _http_text(cfg: LlmConfig, bundle: PromptBundle) -> tuple[str, int, dict]:
    body = {
        "model": cfg.model_name,
        "messages": bundle.messages(),
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
    }
    headers = _headers(cfg)

    def log_retry(state: RetryCallState) -> None:
        error = state.outcome.exception()
        logger.warning(
            f"LLM request failed, retrying: instance={bundle.instance_id} attempt={state.attempt_number} "
            f"error={type(error).__name__} delay={state.next_action.sleep:.2f}s"
        )

    retryer = Retrying(
        stop=stop_after_attempt(cfg.max_retries + 1),
        wait=wait_exponential(multiplier=cfg.backoff, max=cfg.backoff_max),
        retry=retry_if_exception(_retryable),
        before_sleep=log_retry,
        reraise=True,
    )
    try:
        for attempt in retryer:
            with attempt:
                text, usage = _post_once(cfg, body, headers)
    except (LlmTimeout, EndpointUnreachable, HttpStatus) as e:
        logger.error(f"LLM request gave up: instance={bundle.instance_id} error={type(e).__name__}: {e}")
        raise
    return text, attempt.retry_state.attempt_number, usage


def complete(cfg: LlmConfig, bundle: PromptBundle, script: Optional[Mapping[str, str]] = None) -> Completion:
    start = time.perf_counter()
    if cfg.backend == Backend.STUB:
        text = _stub_text(cfg, bundle, script)
        return Completion(
            text=text,
            model=cfg.model_name,
            backend=f"stub:{cfg.stub_mode.value}",
            usage={"prompt_tokens_estimate": bundle.token_estimate},
        )

    text, attempts, usage = _http_text(cfg, bundle)
    latency = time.perf_counter() - start
    logger.info(
        f"LLM completion: model={cfg.model_name} instance={bundle.instance_id} attempts={attempts} latency={latency:.2f}s"
    )
    return Completion(text=text, model=cfg.model_name, backend="http", attempts=attempts, latency=latency, usage=usage)


def complete_many(
    cfg: LlmConfig,
    bundles: Sequence[PromptBundle],
    script: Optional[Mapping[str, str]] = None,
) -> list[Completion]:
    """At most `cfg.concurrency` requests in flight; results keep the input order."""
    if not bundles:
        return []
    with ThreadPoolExecutor(max_workers=min(cfg.concurrency, len(bundles))) as pool:
        return list(pool.map(lambda b: complete(cfg, b, script), bundles))
