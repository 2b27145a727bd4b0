""" One abstraction over chat-completion backends.

Every agent (tool, workflow, reasoning) and the tag classifier talk to a model through
`complete()`. Remote endpoints speak the OpenAI-compatible chat completions protocol:

    POST {base_url}/v1/chat/completions
    {"max_tokens": 1000, "messages": [{"content": "...", "role": "user"}], "model": "...", "temperature": 0.1}
    -> {"choices": [{"message": {"content": "..."}}]}

The scripted mock replays replies deterministically so whole pipelines run offline.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Union
import os
import threading
import httpx
from loguru import logger
from utils import approx_token_count, call_with_retries, canonical_dumps

ROLES = ("system", "user", "assistant")
DEFAULT_API_KEY_ENV = "BIOFLOW_API_KEY"


class GatewayError(Exception):
    """ Base class for chat backend failures. """


class BackendUnavailableError(GatewayError):
    """ Timeouts and connection failures, after all retries. """


class BackendHTTPError(GatewayError):
    def __init__(self, status_code: int, body: str):
        super().__init__(f"HTTP {status_code}: {body}")
        self.status_code = status_code
        self.body = body


class ScriptExhaustedError(GatewayError):
    """ A scripted mock was asked for more replies than it was given. """


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown chat role {self.role!r}")
        if not self.content:
            raise ValueError(f"empty {self.role} message")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class GenConfig:
    """ Generation settings; defaults are the 1,000 new tokens / 0.1 temperature budget. """

    temperature: float = 0.1
    max_new_tokens: int = 1000
    model: str = ""
    stop: Optional[tuple] = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")


@dataclass(frozen=True)
class BackendSpec:
    kind: str  # remote | scripted-mock
    base_url: str = ""
    model: str = ""
    timeout: float = 60.0  # seconds
    retries: int = 2
    backoff_seconds: float = 0.5
    api_key_env: str = DEFAULT_API_KEY_ENV
    queue: tuple = ()
    table: Dict[str, str] = field(default_factory=dict)
    default: Optional[str] = None  # scripted reply when neither table nor queue answers

    def __post_init__(self):
        if self.kind not in ("remote", "scripted-mock"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "remote" and not self.base_url:
            raise ValueError("remote backends require base_url")
        if self.kind == "scripted-mock" and not (self.queue or self.table or self.default is not None):
            raise ValueError("scripted-mock backends require a script (queue, table or default)")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")


def validate_conversation(messages: Sequence[ChatMessage]) -> None:
    if not messages:
        raise ValueError("a conversation needs at least one message")
    if messages[0].role not in ("system", "user"):
        raise ValueError("a conversation starts with a system or user message")


def build_request_body(messages: Sequence[ChatMessage], config: GenConfig, model: str = "") -> dict:
    body = {
        "model": config.model or model,
        "messages": [m.to_dict() for m in messages],
        "temperature": config.temperature,
        "max_tokens": config.max_new_tokens,
    }
    if config.stop:
        body["stop"] = list(config.stop)
    return body


class ChatBackend:
    """ Backends are stateless handles; `attempts` counts wire attempts for tests. """

    name = "backend"

    def __init__(self):
        self.attempts = 0
        self._attempts_lock = threading.Lock()

    def _count_attempt(self, _attempt: int = 0) -> None:
        with self._attempts_lock:
            self.attempts += 1

    def complete(self, messages: Sequence[ChatMessage], config: GenConfig) -> str:
        raise NotImplementedError


class RemoteChatBackend(ChatBackend):
    def __init__(self, spec: BackendSpec, name: str = "remote", transport: Optional[httpx.BaseTransport] = None):
        super().__init__()
        self.spec = spec
        self.name = name
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(spec.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(
            base_url=spec.base_url.rstrip("/"),
            timeout=spec.timeout,
            headers=headers,
            transport=transport,
        )

    def _post_once(self, content: bytes) -> httpx.Response:
        return self._client.post("/v1/chat/completions", content=content)

    def complete(self, messages: Sequence[ChatMessage], config: GenConfig) -> str:
        validate_conversation(messages)
        # field order canonicalized so identical requests are byte-identical on the wire
        content = canonical_dumps(build_request_body(messages, config, self.spec.model)).encode("utf-8")

        try:
            response = call_with_retries(
                lambda: self._post_once(content),
                retries=self.spec.retries,
                backoff_seconds=self.spec.backoff_seconds,
                retry_on=(httpx.TimeoutException, httpx.TransportError),
                label=f"{self.name.upper()} COMPLETION",
                on_attempt=self._count_attempt,
            )
        except httpx.TransportError as exc:
            raise BackendUnavailableError(f"{self.name}: {exc}") from exc

        if not response.is_success:
            raise BackendHTTPError(response.status_code, response.text)

        try:
            return response.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"{self.name}: unexpected completion payload {response.text[:200]!r}") from exc

    def close(self) -> None:
        self._client.close()


Responder = Callable[[Sequence[ChatMessage]], str]


class ScriptedChatBackend(ChatBackend):
    """ Deterministic mock: exact-prompt lookup on the last user message, else the next
    queued reply, else the responder callable (echo-style tests, constant defaults).
    Every request is recorded in `requests`.
    """

    def __init__(
        self,
        queue: Iterable[str] = (),
        table: Optional[Dict[str, str]] = None,
        responder: Optional[Responder] = None,
        name: str = "scripted",
    ):
        super().__init__()
        self.name = name
        self._queue: List[str] = list(queue)
        self._table = dict(table or {})
        self._responder = responder
        self._lock = threading.Lock()
        self.requests: List[List[ChatMessage]] = []

    @classmethod
    def from_spec(cls, spec: BackendSpec, name: str = "scripted") -> "ScriptedChatBackend":
        responder = None if spec.default is None else (lambda _messages: spec.default)
        return cls(queue=spec.queue, table=spec.table, responder=responder, name=name)

    def complete(self, messages: Sequence[ChatMessage], config: GenConfig) -> str:
        validate_conversation(messages)
        with self._lock:
            self._count_attempt()
            self.requests.append(list(messages))
            prompt = last_user_content(messages)
            if prompt in self._table:
                return self._table[prompt]
            if self._queue:
                return self._queue.pop(0)
            if self._responder is not None:
                return self._responder(messages)
            raise ScriptExhaustedError(f"{self.name}: script exhausted after {len(self.requests) - 1} replies")


def last_user_content(messages: Sequence[ChatMessage]) -> str:
    for message in reversed(messages):
        if message.role == "user":
            return message.content
    return ""


def build_backend(spec: BackendSpec, name: str = "backend") -> ChatBackend:
    if spec.kind == "remote":
        return RemoteChatBackend(spec, name=name)
    return ScriptedChatBackend.from_spec(spec, name=name)


def complete(
    backend: Union[ChatBackend, BackendSpec], messages: Sequence[ChatMessage], config: GenConfig
) -> str:
    """ Returns the assistant text for messages under config. """
    built_here = isinstance(backend, BackendSpec)
    if built_here:
        backend = build_backend(backend)
    try:
        reply = backend.complete(messages, config)
    finally:
        if built_here and hasattr(backend, "close"):
            backend.close()
    logger.debug(
        "{} REPLIED ~{} TOKENS", getattr(backend, "name", "backend").upper(), approx_token_count(reply)
    )
    return reply
