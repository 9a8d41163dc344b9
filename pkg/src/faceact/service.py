"""HTTP-style service clients shared by the teacher and the predictor.

Requests are JSON posts; responses are plain text. Transport and sleep are
injectable so tests never touch the network. Credentials come only from an
environment variable, never from flags, keeping them out of shell history.
"""

from __future__ import annotations

import json
import os
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass

from .errors import ServiceError

DEFAULT_TOKEN_ENV = "FACEACT_API_TOKEN"


@dataclass(frozen=True)
class RetryPolicy:
    retries: int = 3
    backoff_base: float = 0.5
    backoff_factor: float = 2.0
    timeout: float = 30.0


def default_transport(url: str, data: bytes, headers: dict, timeout: float) -> str:
    request = urllib.request.Request(url, data=data, headers=headers, method="POST")
    with urllib.request.urlopen(request, timeout=timeout) as response:
        return response.read().decode("utf-8")


class JsonPostClient:
    """POSTs a JSON payload with bounded retries and exponential backoff.

    ``max_in_flight`` bounds concurrent requests across threads.
    """

    def __init__(
        self,
        endpoint: str,
        *,
        token_env: str = DEFAULT_TOKEN_ENV,
        policy: RetryPolicy | None = None,
        max_in_flight: int = 4,
        transport=default_transport,
        sleep=time.sleep,
    ):
        self.endpoint = endpoint
        self.token_env = token_env
        self.policy = policy or RetryPolicy()
        self._transport = transport
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def post(self, payload: dict) -> str:
        data = json.dumps(payload).encode("utf-8")
        attempts = max(1, self.policy.retries)
        last: Exception | None = None
        with self._slots:
            for attempt in range(attempts):
                try:
                    return self._transport(
                        self.endpoint, data, self._headers(), self.policy.timeout
                    )
                except (urllib.error.URLError, OSError, TimeoutError) as exc:
                    last = exc
                    if attempt + 1 < attempts:
                        delay = self.policy.backoff_base * (
                            self.policy.backoff_factor**attempt
                        )
                        self._sleep(delay)
        raise ServiceError(
            f"{self.endpoint}: request failed after {attempts} attempts: {last}"
        )


class HttpCompletionClient(JsonPostClient):
    """Text-completion endpoint: (model, prompt, decoding parameters) -> plain text."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        *,
        temperature: float = 0.0,
        max_tokens: int = 1024,
        **kwargs,
    ):
        super().__init__(endpoint, **kwargs)
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens

    def complete(self, prompt: str) -> str:
        return self.post(
            {
                "model": self.model,
                "prompt": prompt,
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
            }
        )


class HttpPredictorClient(JsonPostClient):
    """Image-to-target endpoint: (image reference, prompt) -> plain text.

    The decoding strategy (greedy vs. sampled, temperature, ...) is the
    service's concern; pass it through ``decoding`` if the endpoint takes one.
    """

    def __init__(self, endpoint: str, *, decoding: dict | None = None, **kwargs):
        super().__init__(endpoint, **kwargs)
        self.decoding = dict(decoding or {})

    def complete(self, image_ref: str, prompt: str) -> str:
        payload = {"image_ref": image_ref, "prompt": prompt}
        if self.decoding:
            payload["decoding"] = self.decoding
        return self.post(payload)
