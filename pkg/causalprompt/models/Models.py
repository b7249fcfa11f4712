import hashlib
import json
import os
import re
import threading
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import openai
import tiktoken

from causalprompt.utils.Config import LLMConfig
from causalprompt.utils.Errors import DataError, TransportError
from causalprompt.utils.Logger import get_logger

logger = get_logger(__name__)

NORMAL_FINISH = ("stop", "length")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    text: str


@dataclass(frozen=True)
class ChatRequest:
    messages: Tuple[ChatMessage, ...]
    temperature: Optional[float] = None
    max_tokens: int = 2000
    request_id: str = ""
    purpose: str = "chat"
    """rephrase, code or chat; only the mock model looks at it."""
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        if self.max_tokens <= 0:
            raise DataError("max_tokens must be positive")

    @classmethod
    def from_prompt(cls, prompt: str, system_prompt: str = "", **kwargs) -> "ChatRequest":
        messages = [ChatMessage("system", system_prompt)] if system_prompt else []
        messages.append(ChatMessage("user", prompt))
        return cls(tuple(messages), **kwargs)


@dataclass(frozen=True)
class ChatResponse:
    text: Optional[str]
    finish_reason: str
    usage: Dict[str, int] = field(default_factory=dict)
    request_id: str = ""

    def __post_init__(self):
        has_text = bool(self.text)
        if has_text != (self.finish_reason in NORMAL_FINISH):
            raise DataError(f"response text must be present iff finish reason is normal, got '{self.finish_reason}'")

    @property
    def ok(self) -> bool:
        return self.finish_reason in NORMAL_FINISH


class AuditLog:
    """Appends one JSON object per LLM exchange; safe to share between threads."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def write(self, request: ChatRequest, response: Optional[ChatResponse], attempts: int, error: str = ""):
        entry = {
            "request_id": request.request_id,
            "record_id": request.metadata.get("record_id", ""),
            "purpose": request.purpose,
            "messages": [{"role": m.role, "content": m.text} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "attempts": attempts,
            "response": None if response is None else response.text,
            "finish_reason": None if response is None else response.finish_reason,
            "usage": {} if response is None else response.usage,
            "error": error,
        }
        with self._lock, open(self.path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(entry, ensure_ascii=False) + "\n")


class ModelBase(ABC):
    """
    A chat model with a retry policy: at most `retries` retries with
    exponential backoff, so a failing request is attempted retries + 1 times.
    """
    retries: int
    backoff_s: float
    max_inflight: int
    audit_log: Optional[AuditLog]

    @abstractmethod
    def __init__(self):
        pass

    @abstractmethod
    def _send(self, request: ChatRequest) -> ChatResponse:
        """One attempt; raise on transport failure."""
        pass

    def _configure(self, retries: int = 3, backoff_s: float = 1.0, max_inflight: int = 4,
                   audit_log: Optional[AuditLog] = None, sleep: Callable[[float], None] = time.sleep):
        self.retries = retries
        self.backoff_s = backoff_s
        self.max_inflight = max_inflight
        self.audit_log = audit_log
        self.sleep = sleep

    def complete(self, request: ChatRequest) -> ChatResponse:
        last_error: Optional[BaseException] = None
        for attempt in range(self.retries + 1):
            if attempt:
                delay = self.backoff_s * 2 ** (attempt - 1)
                logger.warning(f"Request '{request.request_id}' failed ({last_error}); retry {attempt} in {delay:.1f}s")
                self.sleep(delay)
            try:
                response = self._send(request)
            except Exception as error:
                last_error = error
                continue
            if self.audit_log is not None:
                self.audit_log.write(request, response, attempt + 1)
            return response
        if self.audit_log is not None:
            self.audit_log.write(request, None, self.retries + 1, error=str(last_error))
        raise TransportError(self.retries + 1, last_error)

    def complete_many(self, requests: Sequence[ChatRequest]) -> List[ChatResponse]:
        """Complete requests with at most max_inflight in flight; results keep request order."""
        if self.max_inflight <= 1 or len(requests) <= 1:
            return [self.complete(r) for r in requests]
        with ThreadPoolExecutor(max_workers=self.max_inflight) as pool:
            return list(pool.map(self.complete, requests))

    def run(self, query: str, system_prompt: str = "", max_tokens: int = 1000, temperature: Optional[float] = 0) -> str:
        response = self.complete(ChatRequest.from_prompt(query, system_prompt, max_tokens=max_tokens,
                                                         temperature=temperature))
        return response.text or ""


class OpenAI(ModelBase):
    """
    Chat-completions client for OpenAI-compatible endpoints. The API key is
    read from the environment (a .env file is honored).
    """
    model: str
    base_url: str
    chatEncoding: Any

    def __init__(self, model: str = "gpt-3.5-turbo", base_url: str = "https://api.openai.com/v1",
                 api_key: str = "", api_key_env: str = "OPENAI_API_KEY", **policy):
        self.model = model
        self.base_url = base_url
        if not api_key:
            from dotenv import load_dotenv
            load_dotenv()
            api_key = os.environ.get(api_key_env, "")
            if not api_key:
                raise DataError(f"no API key in {api_key_env}; set it or run with --mock-llm")
            logger.info(f"Using API key from environment variable {api_key_env}")
        self.client = openai.OpenAI(api_key=api_key, base_url=base_url, max_retries=0)
        try:
            self.chatEncoding = tiktoken.encoding_for_model(model)
        except KeyError:
            self.chatEncoding = tiktoken.get_encoding("cl100k_base")
        self._configure(**policy)

    def _count_tokens(self, text: str) -> int:
        return len(self.chatEncoding.encode(text or ""))

    def _send(self, request: ChatRequest) -> ChatResponse:
        kwargs = dict(
            model=self.model,
            messages=[{"role": m.role, "content": m.text} for m in request.messages],
            max_tokens=request.max_tokens,
        )
        if request.temperature is not None:
            kwargs["temperature"] = request.temperature
        response = self.client.chat.completions.create(**kwargs)
        choice = response.choices[0]
        text = choice.message.content or ""
        finish = choice.finish_reason or "stop"
        if response.usage is not None:
            usage = {"prompt_tokens": response.usage.prompt_tokens,
                     "completion_tokens": response.usage.completion_tokens}
        else:
            usage = {"prompt_tokens": sum(self._count_tokens(m.text) for m in request.messages),
                     "completion_tokens": self._count_tokens(text)}
        if not text:
            finish = finish if finish not in NORMAL_FINISH else "empty"
            return ChatResponse(None, finish, usage, request.request_id)
        if finish not in NORMAL_FINISH:
            text = None
        return ChatResponse(text, finish, usage, request.request_id)


# Deterministic rephrasings for offline runs, one transform per default intention.
def _expand_contractions(text: str) -> str:
    for short, full in (("n't", " not"), ("'re", " are"), ("'s", " is"), ("'ll", " will"), ("'ve", " have")):
        text = text.replace(short, full)
    return text.replace("ca not", "cannot").replace("wo not", "will not")


def _drop_fillers(text: str) -> str:
    text = re.sub(r"\b(?:very|really|just|please|simply|actually|basically)\b\s*", "", text, flags=re.IGNORECASE)
    text = re.sub(r"\b\w{4,}ly\b\s*", "", text)
    text = re.sub(r"\([^()]*\)\s*", "", text)
    return re.sub(r"[ \t]{2,}", " ", text)


MOCK_RULES: Dict[str, Callable[[str], str]] = {
    "short": _drop_fillers,
    "fluent": lambda t: re.sub(r"\s*\n\s*(?=[a-z])", " ", t),
    "long": lambda t: t + "\nRead the whole input carefully, then compute the answer and print it exactly as described above.",
    "formal": lambda t: "Formally, the task is as follows. " + _expand_contractions(t),
    "clear": lambda t: "Task: " + t,
    "precise": lambda t: t + "\nFollow the input and output formats exactly.",
    "student": lambda t: "As a student, I need help with this exercise. " + t,
    "teacher": lambda t: "Dear students, please solve the following problem. " + t,
    "expert": lambda t: "Implement an efficient and robust solution. " + t,
    "competition": lambda t: t + "\nThis is a contest problem with strict time limits.",
    "interview": lambda t: "In this interview question, " + t[:1].lower() + t[1:],
    "classroom": lambda t: t + "\nThis exercise is part of today's class.",
}


def mock_rephrase(question: str, intention_ids: Sequence[str], surface_texts: Sequence[str] = ()) -> str:
    """Apply the rule of every selected intention in registry order."""
    text = question
    for i, intention_id in enumerate(intention_ids):
        rule = MOCK_RULES.get(intention_id)
        if rule is not None:
            text = rule(text)
        elif i < len(surface_texts):
            text = f"{text}\n({surface_texts[i]})"
    return text.strip()


def _digest(*parts: str) -> int:
    return int(hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()[:12], 16)


def derive_mock_programs(question: str, gold: str, n: int) -> List[str]:
    """
    Deterministic stand-ins for generated solutions. Longer questions get
    correct variants more often; the pick per slot comes from a hash of the
    question, so different rephrasings yield different programs.
    """
    if not gold:
        return ["print()"] * n
    words = len(question.split())
    accuracy = min(0.9, max(0.2, words / 120))
    programs = []
    for slot in range(n):
        u = (_digest(question, str(slot)) % 10_000) / 10_000
        v = _digest(str(slot), question) % 3
        if u < accuracy:
            if v == 0:
                programs.append(gold)
            elif v == 1:
                programs.append("# solution\n" + gold)
            else:
                programs.append(re.sub(r"(?m)^(\s*\w+) = ", r"\1=", gold))
        elif v == 2:
            programs.append("raise SystemExit(1)\n" + gold)
        else:
            programs.append(gold.rstrip("\n") + "\nprint('?')\n")
    return programs


class MockModel(ModelBase):
    """
    Offline deterministic model. Rephrasing modes: `echo` returns the question,
    `fixtures` looks up (question, selection) in a table, `rules` applies
    MOCK_RULES. Code requests are answered from `code_fixtures` (question ->
    programs). `failures` makes the next that many attempts raise, for
    exercising the retry policy; `empty` lists request ids answered with an
    empty response.
    """

    def __init__(self, mode: str = "rules", fixtures: Optional[Dict[Tuple[str, str], str]] = None,
                 code_fixtures: Optional[Dict[str, List[str]]] = None, failures: int = 0,
                 empty: Sequence[str] = (), **policy):
        if mode not in ("echo", "fixtures", "rules"):
            raise DataError(f"unknown mock mode '{mode}'")
        self.mode = mode
        self.fixtures = dict(fixtures or {})
        self.code_fixtures = dict(code_fixtures or {})
        self.failures = failures
        self.empty = set(empty)
        self.attempts = 0
        self._lock = threading.Lock()
        policy.setdefault("max_inflight", 1)
        policy.setdefault("sleep", lambda seconds: None)
        self._configure(**policy)

    def _send(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.attempts += 1
            if self.failures > 0:
                self.failures -= 1
                raise ConnectionError("injected transport failure")
        if request.request_id in self.empty:
            return ChatResponse(None, "empty", {}, request.request_id)
        text = self._answer(request)
        usage = {"prompt_tokens": sum(len(m.text.split()) for m in request.messages),
                 "completion_tokens": len(text.split())}
        if not text:
            return ChatResponse(None, "empty", usage, request.request_id)
        return ChatResponse(text, "stop", usage, request.request_id)

    def _answer(self, request: ChatRequest) -> str:
        meta = request.metadata
        if request.purpose == "rephrase":
            question = meta.get("question", "")
            if self.mode == "echo":
                return question
            if self.mode == "fixtures":
                return self.fixtures.get((question, meta.get("selection", "")), "")
            return mock_rephrase(question, meta.get("intentions", ()), meta.get("surface_texts", ()))
        if request.purpose == "code":
            programs = self.code_fixtures.get(meta.get("question", ""))
            if not programs:
                return ""
            return programs[meta.get("slot", 0) % len(programs)]
        return request.messages[-1].text


class Models(Enum):
    OpenAI = OpenAI
    Mock = MockModel

    @staticmethod
    def get_Model(model_name: str):
        for model in Models:
            if model.name.lower() == model_name.lower():
                return model.value
        return None


def create_model(config: LLMConfig, audit_log: Optional[AuditLog] = None, **mock_options) -> ModelBase:
    policy = dict(retries=config.retries, backoff_s=config.backoff_s, max_inflight=config.max_inflight,
                  audit_log=audit_log)
    if config.mock:
        policy["max_inflight"] = 1
        return MockModel(**mock_options, **policy)
    return OpenAI(model=config.model, base_url=config.endpoint, api_key_env=config.api_key_env, **policy)
