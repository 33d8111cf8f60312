"""Chat-completion proposer talking to a remote model over HTTP."""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field

import httpx

from .base import Proposal, Proposer, ProposalRequest, empty_proposal, proposal_from_text
from .prompt import build_prompt, context_for

ENV_ENDPOINT = "CHAINPLAN_LLM_ENDPOINT"
ENV_API_KEY = "CHAINPLAN_LLM_API_KEY"
ENV_MODEL = "CHAINPLAN_LLM_MODEL"

SYSTEM_MESSAGE = "You plan robot manipulation steps and answer only with fenced code blocks."


class RemoteConfigError(ValueError):
    pass


@dataclass
class RemoteConfig:
    endpoint: str
    api_key: str
    model: str
    temperature: float = 0.2
    # overall budget for one proposal, retries and backoff included
    timeout: float = 60.0
    retries: int = 2
    backoff: float = 0.5
    max_in_flight: int = 4
    template: str = "mcts"

    @classmethod
    def from_env(cls, env=None, **overrides) -> "RemoteConfig":
        env = os.environ if env is None else env
        missing = [v for v in (ENV_ENDPOINT, ENV_API_KEY) if not env.get(v)]
        if missing:
            raise RemoteConfigError("remote proposer needs " + " and ".join(missing))
        return cls(env[ENV_ENDPOINT], env[ENV_API_KEY], env.get(ENV_MODEL, "default"), **overrides)


@dataclass
class Usage:
    calls: int = 0
    failures: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def add(self, usage: dict | None, failed: bool) -> None:
        with self.lock:
            self.calls += 1
            self.failures += int(failed)
            if usage:
                self.prompt_tokens += int(usage.get("prompt_tokens", 0))
                self.completion_tokens += int(usage.get("completion_tokens", 0))

    def as_dict(self) -> dict:
        return {"calls": self.calls, "failures": self.failures, "prompt_tokens": self.prompt_tokens,
                "completion_tokens": self.completion_tokens}


class _Retry(Exception):
    pass


class RemoteProposer(Proposer):
    """One chat-completion round per proposal; every failure comes back as a value."""

    name = "remote"

    def __init__(self, config: RemoteConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self.usage = Usage()
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._transport = transport

    def request_body(self, prompt: str) -> dict:
        return {
            "model": self.config.model,
            "messages": [{"role": "system", "content": SYSTEM_MESSAGE}, {"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        }

    def prompt_for(self, request: ProposalRequest) -> str:
        ctx = context_for(self.config.template, request.task, request.scene, request.initial_state,
                          request.state, request.executed, request.prohibited)
        return build_prompt(ctx)

    def _post(self, client: httpx.Client, body: dict, budget: float) -> dict:
        try:
            r = client.post(self.config.endpoint, json=body, timeout=budget,
                            headers={"Authorization": f"Bearer {self.config.api_key}"})
        except httpx.TimeoutException as e:
            raise TimeoutError(str(e) or "request timed out") from None
        except httpx.TransportError as e:
            raise _Retry(f"transport error: {e}") from None
        if r.status_code == 429 or r.status_code >= 500:
            raise _Retry(f"HTTP {r.status_code}")
        if r.status_code != 200:
            raise ValueError(f"HTTP {r.status_code}")
        try:
            return r.json()
        except ValueError:
            raise ValueError("response is not JSON") from None

    def complete(self, prompt: str) -> tuple[str | None, dict | None, str | None]:
        """(content, usage, error) for one prompt, within the configured budget."""
        cfg = self.config
        deadline = time.monotonic() + cfg.timeout
        body = self.request_body(prompt)
        error = None
        with self._slots, httpx.Client(transport=self._transport) as client:
            for attempt in range(cfg.retries + 1):
                left = deadline - time.monotonic()
                if left <= 0:
                    return None, None, error or "timed out"
                try:
                    data = self._post(client, body, left)
                except TimeoutError:
                    return None, None, "timed out"
                except _Retry as e:
                    error = str(e)
                    pause = cfg.backoff * (2 ** attempt)
                    if attempt == cfg.retries or time.monotonic() + pause >= deadline:
                        break
                    time.sleep(pause)
                    continue
                except ValueError as e:
                    return None, None, str(e)
                try:
                    content = data["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError):
                    return None, data.get("usage") if isinstance(data, dict) else None, "malformed response"
                if not isinstance(content, str):
                    return None, data.get("usage"), "malformed response"
                return content, data.get("usage"), None
        return None, None, error

    def propose(self, request: ProposalRequest) -> Proposal:
        prompt = self.prompt_for(request)
        content, usage, error = self.complete(prompt)
        self.usage.add(usage, failed=error is not None)
        if error is not None:
            return empty_proposal(error, usage=usage, meta={"prompt": prompt})
        prop = proposal_from_text(content, "proposed", usage=usage)
        prop.meta["prompt"] = prompt
        if not prop.statuses:
            prop.error = "reply contains no fenced code block"
        return prop
