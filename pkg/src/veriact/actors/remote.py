"""Remote actors backed by a chat-completion HTTP endpoint.

Request schema (POST {base_url}/chat/completions, JSON body, sorted keys):

    {"max_tokens": int, "messages": [{"content": str, "role": str}, ...],
     "model": str, "n": 1, "temperature": float}

Response schema: {"choices": [{"message": {"content": str}}, ...]}.

Candidates are sampled with independent calls (n=1 each), multiplexed over a
thread pool up to ``parallel_width`` in-flight requests. Authentication is a
bearer token read from an environment variable at call time; no credentials
are ever stored in configs. Failures surface as ActorError with kinds
timeout/transport (retryable; retried with exponential backoff) or
protocol/parse (not retryable).
"""

from __future__ import annotations

import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import requests

from ..prompts import render_template
from ..trajectory import grammar_system_prompt
from ..world.types import Observation
from .base import (
    ActorError,
    Candidate,
    CallCounter,
    PolicyContext,
    Verification,
    candidate_from_raw,
    parse_verdict,
)

DEFAULT_API_KEY_ENV = "VERIACT_API_KEY"


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    api_key_env: str = DEFAULT_API_KEY_ENV
    timeout_s: float = 30.0
    max_retries: int = 3  # additional attempts after the first
    backoff_base_s: float = 0.5
    parallel_width: int = 8
    max_tokens: int = 512


def request_body(model: str, messages: list[dict], temperature: float, max_tokens: int) -> dict:
    return {
        "max_tokens": max_tokens,
        "messages": messages,
        "model": model,
        "n": 1,
        "temperature": temperature,
    }


def encode_body(body: dict) -> bytes:
    """Canonical byte encoding; golden-file tests pin this."""
    return json.dumps(body, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode()


class RemoteChatClient:
    """Thin chat-completion client with retries and latency recording."""

    def __init__(self, config: EndpointConfig, session: Optional[requests.Session] = None):
        self.config = config
        self._session = session or requests.Session()
        self._lock = threading.Lock()
        self.latencies: list[float] = []
        self.requests_sent = 0

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post_once(self, payload: bytes) -> str:
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        started = time.perf_counter()
        try:
            response = self._session.post(
                url, data=payload, headers=self._headers(), timeout=self.config.timeout_s
            )
        except requests.Timeout as exc:
            raise ActorError("timeout", str(exc), retryable=True) from None
        except requests.RequestException as exc:
            raise ActorError("transport", str(exc), retryable=True) from None
        finally:
            elapsed = time.perf_counter() - started
            with self._lock:
                self.latencies.append(elapsed)
                self.requests_sent += 1
        if response.status_code == 429 or response.status_code >= 500:
            raise ActorError(
                "transport", f"HTTP {response.status_code}", retryable=True
            )
        if response.status_code != 200:
            raise ActorError(
                "protocol", f"HTTP {response.status_code}", retryable=False
            )
        try:
            data = response.json()
        except ValueError as exc:
            raise ActorError("protocol", f"invalid JSON: {exc}", retryable=False) from None
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ActorError(
                "parse", "response missing choices[0].message.content", retryable=False
            ) from None
        if not isinstance(content, str):
            raise ActorError("parse", "message content is not text", retryable=False)
        return content

    def complete(self, messages: list[dict], temperature: float) -> str:
        payload = encode_body(
            request_body(self.config.model, messages, temperature, self.config.max_tokens)
        )
        attempt = 0
        while True:
            try:
                return self._post_once(payload)
            except ActorError as exc:
                if not exc.retryable or attempt >= self.config.max_retries:
                    raise
                time.sleep(self.config.backoff_base_s * (2 ** attempt))
                attempt += 1

    def complete_many(self, messages: list[dict], k: int, temperature: float) -> list[str]:
        """k independent samples for the same messages, order-preserving."""
        if k == 1:
            return [self.complete(messages, temperature)]
        width = max(1, min(self.config.parallel_width, k))
        with ThreadPoolExecutor(max_workers=width) as pool:
            return list(pool.map(lambda _: self.complete(messages, temperature), range(k)))


def _history_block(prior_actions: tuple[str, ...]) -> str:
    if not prior_actions:
        return "(none)"
    return "\n".join(f"{i + 1}. {text}" for i, text in enumerate(prior_actions))


class RemotePolicy(CallCounter):
    """Policy that samples candidates from a remote endpoint.

    Remote sampling is not reproducible from the seed; the seed parameter is
    accepted for interface compatibility and ignored.
    """

    def __init__(self, client: RemoteChatClient, profile: str = "extended"):
        super().__init__()
        self.client = client
        self.profile = profile

    def propose(
        self, context: PolicyContext, n: int, temperature: float, seed: int
    ) -> list[Candidate]:
        self.count(n)
        user = render_template(
            "policy_prompt",
            grammar=grammar_system_prompt(self.profile),
            instruction=context.instruction,
            history=_history_block(context.prior_action_texts()),
            observation=context.observation.render(),
        )
        messages = [{"role": "user", "content": user}]
        texts = self.client.complete_many(messages, n, temperature)
        return [candidate_from_raw(i, text) for i, text in enumerate(texts)]


class RemoteVerifier(CallCounter):
    def __init__(self, client: RemoteChatClient):
        super().__init__()
        self.client = client

    def verify(
        self,
        instruction: str,
        prior_actions: tuple[str, ...],
        observation: Observation,
        candidate: Candidate,
        m: int,
        temperature: float,
        seed: int,
    ) -> list[Verification]:
        self.count(m)
        user = render_template(
            "verifier_prompt",
            instruction=instruction,
            history=_history_block(prior_actions),
            observation=observation.render(),
            candidate_action=(
                candidate.record.action_text if candidate.parsable else candidate.raw_text
            ),
            candidate_rationale=candidate.rationale or "(none)",
        )
        messages = [{"role": "user", "content": user}]
        texts = self.client.complete_many(messages, m, temperature)
        return [
            Verification(candidate.index, vote, text, parse_verdict(text))
            for vote, text in enumerate(texts)
        ]
