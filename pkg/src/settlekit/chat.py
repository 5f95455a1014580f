"""Chat-completion clients: a generic HTTP endpoint and a deterministic mock.

Both implement the same contract: ``send(system, messages, temperature,
seed) -> text`` where messages is a sequence of (role, content) pairs.
The HTTP client speaks the de-facto chat-completions wire format and
enforces a bounded retry policy plus a configurable in-flight cap.  The
mock expands a hash of its inputs into pseudo-text, so every downstream
run is reproducible offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import requests

log = logging.getLogger(__name__)

Message = tuple[str, str]

# Literal marker a discussion participant emits to end a multi-turn run.
STOP_MARKER = "<END_OF_DISCUSSION>"


class ChatClientError(RuntimeError):
    """Raised when a client cannot produce a response (after retries)."""


@dataclass
class EndpointConfig:
    base_url: str
    model: str
    api_key_env: str = "CHAT_API_KEY"
    timeout_s: float = 30.0
    max_in_flight: int = 4
    max_retries: int = 3

    @classmethod
    def from_dict(cls, raw: dict) -> "EndpointConfig":
        return cls(**raw)


class ChatClient(ABC):
    """Abstract chat-completion interface used by synthesis and judging."""

    max_in_flight: int = 4

    @abstractmethod
    def send(
        self,
        system: str,
        messages: list[Message],
        temperature: float = 0.7,
        seed: int | None = None,
    ) -> str:
        raise NotImplementedError


@dataclass
class _Call:
    system: str
    messages: list[Message]
    temperature: float
    seed: int | None


def derive_seed(base: int, *parts) -> int:
    """Stable per-item seed derived from a base seed and context parts."""
    material = json.dumps([base, *parts], ensure_ascii=False)
    return int.from_bytes(hashlib.sha256(material.encode("utf-8")).digest()[:8], "big")


_DIMENSION_WORDS = ("relevance", "comprehensiveness", "utility", "expertise", "originality", "depth")

_FILLER_PHRASES = (
    "应结合场地的水文与生态条件统筹布局",
    "可通过绿色基础设施提升空间品质",
    "需要兼顾居民日常使用与长期维护成本",
    "建议参考相关设计规范确定技术指标",
    "功能分区宜与慢行系统衔接",
    "景观结构应呼应城市肌理与历史文脉",
    "材料选择上优先考虑本地与低碳方案",
    "公共空间的尺度应适应多类人群活动",
    "雨水组织可采用滞蓄与渗透相结合的方式",
    "后期运营机制需要在方案阶段预留接口",
)


class MockChatClient(ChatClient):
    """Offline stand-in keyed on (system, messages, seed); bit-deterministic.

    Responses weave a fragment of the last user message into fixed domain
    phrases chosen by a hash-seeded RNG.  Prompts that ask for the six
    evaluation dimensions get labeled numeric scores instead, so the
    judging path also runs offline.  Never emits the stop marker.
    """

    def __init__(self, seed: int = 0, max_in_flight: int = 4) -> None:
        self.seed = seed
        self.max_in_flight = max_in_flight
        self.calls: list[_Call] = []
        self._lock = threading.Lock()

    def send(
        self,
        system: str,
        messages: list[Message],
        temperature: float = 0.7,
        seed: int | None = None,
    ) -> str:
        messages = [(r, c) for r, c in messages]
        with self._lock:
            self.calls.append(_Call(system, messages, temperature, seed))
        effective = self.seed if seed is None else seed
        material = json.dumps(
            {"system": system, "messages": messages, "seed": effective, "t": temperature},
            ensure_ascii=False,
        )
        rng = random.Random(int.from_bytes(hashlib.sha256(material.encode("utf-8")).digest(), "big"))
        prompt_text = (system + "\n" + "\n".join(c for _, c in messages)).lower()
        if sum(w in prompt_text for w in _DIMENSION_WORDS) >= 4:
            return self._score_lines(rng)
        last_user = next((c for r, c in reversed(messages) if r == "user"), "")
        return self._prose(rng, last_user)

    @staticmethod
    def _score_lines(rng: random.Random) -> str:
        lines = []
        for name in ("Relevance", "Comprehensiveness", "Utility", "Expertise", "Originality", "Depth"):
            lines.append(f"{name}: {round(rng.uniform(6.0, 10.0), 1)}")
        return "\n".join(lines)

    @staticmethod
    def _prose(rng: random.Random, last_user: str) -> str:
        topic = " ".join(last_user.split())[:60]
        phrases = rng.sample(_FILLER_PHRASES, k=rng.randint(3, 5))
        body = "。".join(phrases)
        if topic:
            return f"针对「{topic}」：{body}。"
        return body + "。"


class HttpChatClient(ChatClient):
    """Chat-completions client over HTTP with retries and an in-flight cap.

    POSTs ``{base_url}/chat/completions`` with a messages array of
    ``{role, content}`` objects; the API key is read from the environment
    variable named in the endpoint config.
    """

    RETRYABLE_STATUS = (429, 500, 502, 503, 504)

    def __init__(self, config: EndpointConfig, session: requests.Session | None = None) -> None:
        self.config = config
        self.max_in_flight = config.max_in_flight
        self._session = session or requests.Session()
        self._slots = threading.BoundedSemaphore(max(1, config.max_in_flight))

    def send(
        self,
        system: str,
        messages: list[Message],
        temperature: float = 0.7,
        seed: int | None = None,
    ) -> str:
        payload: dict = {
            "model": self.config.model,
            "messages": [{"role": "system", "content": system}]
            + [{"role": role, "content": content} for role, content in messages],
            "temperature": temperature,
        }
        if seed is not None:
            payload["seed"] = seed
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.config.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        url = self.config.base_url.rstrip("/") + "/chat/completions"

        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(min(2.0**attempt, 10.0))
            try:
                with self._slots:
                    resp = self._session.post(
                        url, json=payload, headers=headers, timeout=self.config.timeout_s
                    )
            except requests.RequestException as exc:
                last_error = exc
                log.warning("chat request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code in self.RETRYABLE_STATUS:
                last_error = ChatClientError(f"HTTP {resp.status_code}")
                log.warning("chat request got HTTP %d (attempt %d)", resp.status_code, attempt + 1)
                continue
            if resp.status_code != 200:
                raise ChatClientError(f"HTTP {resp.status_code}: {resp.text[:500]}")
            try:
                body = resp.json()
                return body["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise ChatClientError(f"malformed chat response: {exc}") from exc
        raise ChatClientError(f"request failed after {self.config.max_retries + 1} attempts: {last_error}")


@dataclass
class ScriptedChatClient(ChatClient):
    """Replays canned responses in order; raises when exhausted.

    Test/bench helper for exercising orchestration paths (empty answers,
    stop markers, failures) that the deterministic mock never produces.
    """

    responses: list[str] = field(default_factory=list)
    max_in_flight: int = 1

    def __post_init__(self) -> None:
        self.calls: list[_Call] = []
        self._cursor = 0

    def send(
        self,
        system: str,
        messages: list[Message],
        temperature: float = 0.7,
        seed: int | None = None,
    ) -> str:
        self.calls.append(_Call(system, list(messages), temperature, seed))
        if self._cursor >= len(self.responses):
            raise ChatClientError("scripted client exhausted")
        response = self.responses[self._cursor]
        self._cursor += 1
        if isinstance(response, Exception):
            raise response
        return response


def strip_stop_marker(text: str) -> tuple[str, bool]:
    """Remove the stop marker; returns (cleaned text, marker seen)."""
    if STOP_MARKER not in text:
        return text, False
    cleaned = re.sub(re.escape(STOP_MARKER), "", text).strip()
    return cleaned, True
