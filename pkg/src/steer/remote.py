"""HTTP JSON backends: remote next-token log-probabilities.

Protocol: ``POST {endpoint}/logits`` with body ``{"context": [int, ...]}``,
answered by ``{"log_probs": [float, ...]}`` and status 200. Any other status is
an error. Connection failures, timeouts and 5xx answers are retried with
exponential backoff (``base, 2*base, 4*base, ...``); 4xx answers are not.
"""

from __future__ import annotations

import json
import socket
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BackendError,
    ContextOverflow,
    NetworkTimeout,
    NonFiniteInput,
    RetryExhausted,
    ShapeMismatch,
    ValidationError,
)
from .vocab import Vocabulary


@dataclass
class RemoteBackend:
    endpoint: str
    timeout_ms: float = 10_000
    max_retries: int = 3
    backoff_base_ms: float = 100
    sleep: Callable[[float], None] = field(default=time.sleep, repr=False, compare=False)

    def __post_init__(self):
        if not self.timeout_ms > 0:
            raise ValidationError("timeout must be > 0")
        if self.max_retries < 0:
            raise ValidationError("max_retries must be >= 0")

    def backoff_schedule(self):
        return [self.backoff_base_ms * (2**i) for i in range(self.max_retries)]

    def post_json(self, route: str, body: dict) -> dict:
        url = self.endpoint.rstrip("/") + route
        data = json.dumps(body).encode()
        delays = self.backoff_schedule()
        last = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self.sleep(delays[attempt - 1] / 1000.0)
            try:
                return _post_once(url, data, self.timeout_ms / 1000.0)
            except _Retryable as exc:
                last = exc.error
        if self.max_retries == 0:
            raise last
        raise RetryExhausted(
            f"{url}: gave up after {self.max_retries + 1} attempts: {last}"
        ) from last


class _Retryable(Exception):
    def __init__(self, error):
        super().__init__(str(error))
        self.error = error


def _post_once(url, data, timeout):
    req = urllib.request.Request(
        url, data=data, method="POST", headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            status = resp.status
            payload = resp.read()
    except urllib.error.HTTPError as exc:
        err = BackendError(f"{url}: HTTP {exc.code}")
        if exc.code >= 500:
            raise _Retryable(err) from exc
        raise err from exc
    except (socket.timeout, TimeoutError) as exc:
        raise _Retryable(NetworkTimeout(f"{url}: timed out")) from exc
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, (socket.timeout, TimeoutError)):
            raise _Retryable(NetworkTimeout(f"{url}: timed out")) from exc
        raise _Retryable(BackendError(f"{url}: {exc.reason}")) from exc
    except OSError as exc:
        raise _Retryable(BackendError(f"{url}: {exc}")) from exc
    if status != 200:
        raise BackendError(f"{url}: HTTP {status}")
    try:
        return json.loads(payload)
    except json.JSONDecodeError as exc:
        raise BackendError(f"{url}: response is not JSON") from exc


def _log_normalise(x):
    finite = np.isfinite(x)
    if np.isnan(x).any() or np.isposinf(x).any() or not finite.any():
        raise NonFiniteInput("backend returned NaN, +inf or an all-masked vector")
    m = x[finite].max()
    return x - (m + np.log(np.exp(x[finite] - m).sum()))


def remote_log_probs(backend: RemoteBackend, context: Sequence[int], vocab_size: int) -> np.ndarray:
    """Fetch log-probabilities for ``context`` and renormalise them."""
    reply = backend.post_json("/logits", {"context": [int(t) for t in context]})
    try:
        values = np.asarray(reply["log_probs"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise BackendError("malformed /logits response") from exc
    if values.ndim != 1 or values.shape[0] != vocab_size:
        raise ShapeMismatch(f"expected {vocab_size} log-probs, got shape {values.shape}")
    return _log_normalise(values)


@dataclass
class RemoteModel:
    """Adapter exposing a remote backend through the language-model interface."""

    backend: RemoteBackend
    vocab: Vocabulary
    context_size: int = 2048

    def log_probs(self, context):
        if len(context) > self.context_size:
            raise ContextOverflow(
                f"context of {len(context)} tokens exceeds budget {self.context_size}"
            )
        return remote_log_probs(self.backend, context, len(self.vocab))
