"""Remote LLM classification with retries, bounded concurrency, and an on-disk cache."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

from tweetframe.corpus import Tweet
from tweetframe.llm.parsing import ConfidenceParse, DirectParse, ParseFailure, parse_confidence, parse_direct
from tweetframe.llm.prompts import PromptSpec, build_prompt

log = logging.getLogger(__name__)


class AuthError(RuntimeError):
    """Credentials rejected by the endpoint; not retried."""


class TransportError(RuntimeError):
    """Retryable failure talking to the endpoint."""


@dataclass(frozen=True)
class LlmEndpoint:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o"
    api_key_env: str = "LLM_API_KEY"
    timeout: float = 60.0
    max_retries: int = 5
    concurrency: int = 4
    backoff_base: float = 1.0
    backoff_max: float = 60.0
    temperature: float = 0.0


class Transport(Protocol):
    def __call__(self, prompt: str, endpoint: LlmEndpoint) -> str: ...


class ChatCompletionsTransport:
    """OpenAI-compatible ``POST {base_url}/chat/completions``, single user message."""

    def __init__(self, client: httpx.Client | None = None):
        self._client = client or httpx.Client()

    def __call__(self, prompt: str, endpoint: LlmEndpoint) -> str:
        key = os.environ.get(endpoint.api_key_env)
        if not key:
            raise AuthError(f"environment variable {endpoint.api_key_env} is not set")
        try:
            resp = self._client.post(
                endpoint.base_url.rstrip("/") + "/chat/completions",
                headers={"Authorization": f"Bearer {key}"},
                json={
                    "model": endpoint.model,
                    "messages": [{"role": "user", "content": prompt}],
                    "temperature": endpoint.temperature,
                },
                timeout=endpoint.timeout,
            )
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"endpoint rejected credentials ({resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class ResponseCache:
    """Append-only JSONL of {prompt_hash, model, raw_response, timestamp}; last entry wins."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, str], str] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self._entries[(rec["model"], rec["prompt_hash"])] = rec["raw_response"]

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, model: str, prompt: str) -> str | None:
        return self._entries.get((model, prompt_hash(prompt)))

    def put(self, model: str, prompt: str, raw: str) -> None:
        key = (model, prompt_hash(prompt))
        with self._lock:
            self._entries[key] = raw
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({
                    "prompt_hash": key[1],
                    "model": model,
                    "raw_response": raw,
                    "timestamp": datetime.now(timezone.utc).isoformat(),
                }, ensure_ascii=False) + "\n")


@dataclass
class LlmResponse:
    tweet_id: str | None
    raw: str | None
    parsed: DirectParse | ConfidenceParse | None
    error: str | None = None
    attempts: int = 0
    from_cache: bool = False

    @property
    def classified(self) -> bool:
        return self.parsed is not None


def _parser(spec: PromptSpec) -> Callable[[str], DirectParse | ConfidenceParse]:
    return parse_direct if spec.mode == "direct" else parse_confidence


def classify_remote(
    tweets: Sequence[Tweet],
    spec: PromptSpec,
    endpoint: LlmEndpoint,
    cache: ResponseCache | None = None,
    transport: Transport | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> list[LlmResponse]:
    """One request per tweet, results in input order.

    Transport errors and unparseable responses are retried with
    exponential backoff up to ``endpoint.max_retries`` extra attempts;
    after that the tweet is returned unclassified with the last error.
    Only parseable responses are cached.  ``AuthError`` propagates.
    """
    transport = transport or ChatCompletionsTransport()
    parse = _parser(spec)
    abort = threading.Event()

    def one(tweet: Tweet) -> LlmResponse:
        prompt = build_prompt(spec, tweet)
        if cache is not None:
            hit = cache.get(endpoint.model, prompt)
            if hit is not None:
                try:
                    return LlmResponse(tweet.tweet_id, hit, parse(hit), from_cache=True)
                except ParseFailure:
                    pass
        raw, error = None, None
        for attempt in range(endpoint.max_retries + 1):
            if abort.is_set():
                return LlmResponse(tweet.tweet_id, None, None, "aborted after auth failure", attempt)
            if attempt:
                delay = min(endpoint.backoff_max, endpoint.backoff_base * 2 ** (attempt - 1))
                sleep(delay * (1 + 0.1 * random.random()))
            try:
                raw = transport(prompt, endpoint)
            except AuthError:
                abort.set()
                raise
            except TransportError as exc:
                error = f"transport: {exc}"
                continue
            try:
                parsed = parse(raw)
            except ParseFailure as exc:
                error = f"parse: {exc}"
                continue
            if cache is not None:
                cache.put(endpoint.model, prompt, raw)
            return LlmResponse(tweet.tweet_id, raw, parsed, attempts=attempt + 1)
        log.warning("tweet %s unclassified after %d attempts: %s", tweet.tweet_id, endpoint.max_retries + 1, error)
        return LlmResponse(tweet.tweet_id, raw, None, error, endpoint.max_retries + 1)

    if endpoint.concurrency <= 1:
        return [one(t) for t in tweets]
    with ThreadPoolExecutor(max_workers=endpoint.concurrency) as pool:
        return list(pool.map(one, tweets))


def write_unclassified(responses: Sequence[LlmResponse], path: str | Path) -> int:
    rows = [(r.tweet_id, r.error) for r in responses if not r.classified]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["tweet_id", "reason"])
        w.writerows(rows)
    return len(rows)


def write_responses(responses: Sequence[LlmResponse], spec: PromptSpec, path: str | Path) -> None:
    """CSV with one row per tweet: parsed label or confidences, plus the raw text."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if spec.mode == "direct":
            w.writerow(["tweet_id", "label", "explanation", "raw", "error"])
            for r in responses:
                p = r.parsed
                w.writerow([r.tweet_id, int(p.label) if p else "", (p.explanation or "") if p else "",
                            r.raw or "", r.error or ""])
        else:
            w.writerow(["tweet_id", "conf1", "conf2", "conf3", "rescaled", "raw", "error"])
            for r in responses:
                p = r.parsed
                w.writerow([r.tweet_id, *(p.confs if p else ("", "", "")), p.rescaled if p else "",
                            r.raw or "", r.error or ""])
