"""Metadata and LLM clients: live HTTP implementations plus deterministic stubs.

Everything network-facing sits behind these two small interfaces so the
pipeline (and every test) can run hermetically on fixture-backed stubs.
The HTTP clients refuse to construct in offline mode.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field

from .errors import OfflineError

logger = logging.getLogger(__name__)

DOI_API_BASE_ENV = "DOI_API_BASE"
LLM_API_BASE_ENV = "LLM_API_BASE"
LLM_API_KEY_ENV = "LLM_API_KEY"

DEFAULT_DOI_API_BASE = "https://api.crossref.org"


class RateLimiter:
    """Blocks so that consecutive acquisitions are at least min_interval apart."""

    def __init__(self, min_interval: float):
        self.min_interval = min_interval
        self._lock = threading.Lock()
        self._last = 0.0

    def acquire(self):
        if self.min_interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            wait = self._last + self.min_interval - now
            if wait > 0:
                time.sleep(wait)
            self._last = time.monotonic()


class DoiClient:
    """Resolves a DOI to the paper abstract, or None when there is none."""

    def get_abstract(self, doi: str) -> str | None:
        raise NotImplementedError


class LlmClient:
    """Completes a prompt and returns the raw response text."""

    def complete(self, prompt: str) -> str:
        raise NotImplementedError


class HttpDoiClient(DoiClient):
    def __init__(self, base_url: str | None = None, offline: bool = False,
                 rate_limiter: RateLimiter | None = None, timeout: float = 30.0):
        if offline:
            raise OfflineError("offline mode forbids the HTTP DOI client")
        self.base_url = (base_url or os.environ.get(DOI_API_BASE_ENV, DEFAULT_DOI_API_BASE)).rstrip("/")
        self.rate_limiter = rate_limiter or RateLimiter(1.0)
        self.timeout = timeout

    def get_abstract(self, doi: str) -> str | None:
        import requests

        self.rate_limiter.acquire()
        response = requests.get(f"{self.base_url}/works/{doi}", timeout=self.timeout)
        if response.status_code == 404:
            return None
        response.raise_for_status()
        message = response.json().get("message", {})
        abstract = message.get("abstract")
        return abstract or None


class HttpLlmClient(LlmClient):
    """OpenAI-style completions endpoint; base URL and key come from the env."""

    def __init__(self, base_url: str | None = None, api_key: str | None = None,
                 model: str = "default", offline: bool = False, timeout: float = 120.0):
        if offline:
            raise OfflineError("offline mode forbids the HTTP LLM client")
        base = base_url or os.environ.get(LLM_API_BASE_ENV)
        if not base:
            raise ValueError(f"no LLM endpoint configured (set {LLM_API_BASE_ENV})")
        self.base_url = base.rstrip("/")
        self.api_key = api_key or os.environ.get(LLM_API_KEY_ENV, "")
        self.model = model
        self.timeout = timeout

    def complete(self, prompt: str) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        response = requests.post(
            f"{self.base_url}/v1/completions",
            json={"model": self.model, "prompt": prompt, "max_tokens": 512},
            headers=headers,
            timeout=self.timeout,
        )
        response.raise_for_status()
        return response.json()["choices"][0]["text"]


@dataclass
class StubDoiClient(DoiClient):
    """Fixture-backed DOI client; `failures` DOIs raise for retry testing."""

    abstracts: dict[str, str] = field(default_factory=dict)
    failures: dict[str, int] = field(default_factory=dict)
    calls: int = 0

    @classmethod
    def from_fixture(cls, path) -> "StubDoiClient":
        with open(path, encoding="utf-8") as fh:
            return cls(abstracts=json.load(fh))

    def get_abstract(self, doi: str) -> str | None:
        self.calls += 1
        if self.failures.get(doi, 0) > 0:
            self.failures[doi] -= 1
            raise ConnectionError(f"stub failure for {doi}")
        return self.abstracts.get(doi)


@dataclass
class StubLlmClient(LlmClient):
    """Returns canned keyword responses keyed by the record id in the prompt.

    The fixture maps id -> list of keywords (or a raw response string for
    malformed-output tests).
    """

    keywords_by_id: dict = field(default_factory=dict)
    calls: int = 0

    @classmethod
    def from_fixture(cls, path) -> "StubLlmClient":
        with open(path, encoding="utf-8") as fh:
            return cls(keywords_by_id=json.load(fh))

    def complete(self, prompt: str) -> str:
        self.calls += 1
        record_id = None
        for line in prompt.splitlines():
            line = line.strip()
            if line.startswith("ID:"):
                record_id = line[len("ID:"):].strip()  # last ID block is the query
        if record_id is None or record_id not in self.keywords_by_id:
            return "[]"
        value = self.keywords_by_id[record_id]
        if isinstance(value, str):
            return value
        return json.dumps([{"ID": record_id, "Keywords": list(value)}])
