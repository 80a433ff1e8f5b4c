"""External completion gateway: bearer-authenticated HTTP client with a
replay mode for offline fixtures.

Wire format: POST <base_url> with JSON body {model, prompt, temperature},
response JSON {text}. Replay fixtures live one file per request hash in a
directory; the hash is a stable digest over (model name, full prompt text).

The test suites run behind a network guard: while the guard is active any
live request raises instead of touching the network.
"""

from __future__ import annotations

import hashlib
import os
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path


class GatewayUnavailable(RuntimeError):
    """Connection failure, timeout, or a non-OK gateway response."""


class AuthMissing(RuntimeError):
    """The configured auth token environment variable is unset."""


class ReplayMiss(KeyError):
    """Replay mode had no fixture for the request."""


class NetworkGuardViolation(RuntimeError):
    """A live network call was attempted while the guard was active."""


_guard_lock = threading.Lock()
_guard_depth = 0


@contextmanager
def network_guard():
    """Forbid live gateway calls inside the context (reentrant)."""
    global _guard_depth
    with _guard_lock:
        _guard_depth += 1
    try:
        yield
    finally:
        with _guard_lock:
            _guard_depth -= 1


def network_guard_active() -> bool:
    return _guard_depth > 0


@dataclass(frozen=True)
class GatewayConfig:
    base_url: str
    model_name: str
    auth_token_env: str = "APDLBENCH_GATEWAY_TOKEN"
    timeout_s: float = 30.0
    temperature: float = 0.0
    replay_dir: Path | None = None


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    model: str
    temperature: float = 0.0


def request_hash(model: str, prompt: str) -> str:
    digest = hashlib.sha256(f"{model}\n{prompt}".encode("utf-8")).hexdigest()
    return digest[:24]


def record_fixture(request: GenerationRequest, text: str, replay_dir: str | Path) -> Path:
    """Store a response so replay mode can serve it later."""
    replay_dir = Path(replay_dir)
    replay_dir.mkdir(parents=True, exist_ok=True)
    path = replay_dir / f"{request_hash(request.model, request.prompt)}.txt"
    path.write_text(text, encoding="utf-8")
    return path


def external_complete(request: GenerationRequest, config: GatewayConfig) -> str:
    """Resolve a completion request: replay fixture or live gateway POST."""
    if config.replay_dir is not None:
        path = Path(config.replay_dir) / f"{request_hash(request.model, request.prompt)}.txt"
        if not path.exists():
            raise ReplayMiss(f"no replay fixture for request {path.stem}")
        return path.read_text(encoding="utf-8")

    token = os.environ.get(config.auth_token_env)
    if not token:
        raise AuthMissing(f"environment variable {config.auth_token_env} is not set")
    if network_guard_active():
        raise NetworkGuardViolation(
            f"live gateway call to {config.base_url} blocked by the network guard"
        )

    import requests

    try:
        response = requests.post(
            config.base_url,
            json={
                "model": request.model,
                "prompt": request.prompt,
                "temperature": request.temperature,
            },
            headers={"Authorization": f"Bearer {token}"},
            timeout=config.timeout_s,
        )
    except requests.RequestException as exc:
        raise GatewayUnavailable(f"gateway request failed: {exc}") from exc
    if response.status_code != 200:
        raise GatewayUnavailable(f"gateway returned HTTP {response.status_code}")
    try:
        return response.json()["text"]
    except (ValueError, KeyError) as exc:
        raise GatewayUnavailable(f"gateway response malformed: {exc}") from exc
