"""Chat-backend gateway: single-prompt and guided multi-turn generation,
query extraction from free-text responses, and retry on malformed output.

The mock backend makes the whole gateway a deterministic function of
(prompts, fixtures, config); the http backend speaks the usual
chat-completions JSON contract against a configurable base URL with the
credential taken from ``LLM_API_KEY``.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import requests

from .collections import ReviewTopic, SeedStudy
from .prompts import PromptBindings, render
from .query_ast import Query, QueryParseError, Term, parse, validate
from .ratelimit import RateLimiter

__all__ = [
    "Message",
    "Conversation",
    "BackendConfig",
    "GenerationOutcome",
    "CategorizedTerm",
    "CategorizedTerms",
    "MockBackend",
    "HttpBackend",
    "make_backend",
    "conversation_digest",
    "complete",
    "extract_query",
    "generate_with_retry",
    "parse_term_list",
    "parse_categorized_list",
    "run_guided_session",
    "GatewayError",
    "RequestTimeoutError",
    "HttpError",
    "MissingFixtureResponseError",
    "NoParsableQueryError",
    "ExhaustedRetriesError",
    "ResponseFormatError",
    "DuplicateTermError",
    "NoTermsFoundError",
    "UnknownCategoryError",
    "NoEntriesError",
    "EmptySeedStudyError",
]

# Step-1 seed abstracts are clipped to this many whitespace tokens to stay
# within a ~4000-token chat context.
MAX_SEED_ABSTRACT_TOKENS = 3000


class GatewayError(Exception):
    pass


class RequestTimeoutError(GatewayError):
    pass


class HttpError(GatewayError):
    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"HTTP {status}{': ' + detail if detail else ''}")
        self.status = status


class MissingFixtureResponseError(GatewayError):
    pass


class NoParsableQueryError(GatewayError):
    pass


class ExhaustedRetriesError(GatewayError):
    def __init__(self, attempts: int, last_error: str = ""):
        super().__init__(f"no valid query after {attempts} attempts ({last_error})")
        self.attempts = attempts


class ResponseFormatError(GatewayError):
    pass


class DuplicateTermError(ResponseFormatError):
    pass


class NoTermsFoundError(ResponseFormatError):
    pass


class UnknownCategoryError(ResponseFormatError):
    pass


class NoEntriesError(ResponseFormatError):
    pass


class EmptySeedStudyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Conversations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Message:
    role: str  # system | user | assistant
    content: str


@dataclass
class Conversation:
    messages: list[Message] = field(default_factory=list)

    def append(self, role: str, content: str) -> None:
        if role not in ("system", "user", "assistant"):
            raise ValueError(f"unknown role {role!r}")
        if role == "system":
            if self.messages:
                raise ValueError("system message must come first")
        else:
            last = self.messages[-1].role if self.messages else None
            if last == role:
                raise ValueError(f"roles must alternate; got {role} after {role}")
            if role == "assistant" and last not in ("user",):
                raise ValueError("assistant message requires a preceding user message")
        self.messages.append(Message(role, content))

    def last_role(self) -> Optional[str]:
        return self.messages[-1].role if self.messages else None

    def as_payload(self) -> list[dict[str, str]]:
        return [{"role": m.role, "content": m.content} for m in self.messages]


def conversation_digest(conv: Conversation) -> str:
    blob = json.dumps(conv.as_payload(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"  # mock | http
    base_url: Optional[str] = None
    model_name: str = "mock-model"
    temperature: float = 0.0
    timeout: float = 60.0
    max_retries: int = 3
    fixtures_path: Optional[str] = None
    http_attempts: int = 3       # transport-level retries on 429/5xx
    backoff_base: float = 0.5    # seconds; doubles per retry
    rate_limit: Optional[float] = None  # requests/second across all threads

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "http"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.kind == "http" and not self.base_url:
            raise ValueError("http backend requires base_url")

    def describe(self) -> str:
        if self.kind == "mock":
            return f"mock:{self.fixtures_path or 'scripted'}"
        return f"http:{self.model_name}@{self.base_url}"


class MockBackend:
    """Deterministic stand-in for a chat service.

    ``fixtures`` maps conversation digests to response text.  ``script``
    responses, when present, are consumed in order first; this is how tests
    simulate a nondeterministic service emitting different answers for the
    same prompt.
    """

    def __init__(
        self,
        fixtures: Optional[dict[str, str]] = None,
        script: Optional[Sequence[str]] = None,
    ):
        self.fixtures = dict(fixtures or {})
        self.script = list(script or [])
        self.calls = 0

    @classmethod
    def from_file(cls, path) -> "MockBackend":
        with open(path, "r", encoding="utf-8") as f:
            return cls(fixtures=json.load(f))

    def complete(self, conv: Conversation) -> str:
        self.calls += 1
        if self.script:
            return self.script.pop(0)
        digest = conversation_digest(conv)
        if digest not in self.fixtures:
            raise MissingFixtureResponseError(f"no fixture for conversation digest {digest}")
        return self.fixtures[digest]


class HttpBackend:
    """Chat-completions client: POST base_url with a role/content message
    array, bearer credential from ``LLM_API_KEY``.

    Safe for concurrent sessions: connections are per thread and the
    optional rate limit is shared by every caller of this backend.
    """

    RETRYABLE = {429, 500, 502, 503, 504}

    def __init__(self, cfg: BackendConfig, session: Optional[requests.Session] = None):
        self.cfg = cfg
        self._fixed_session = session
        self._local = threading.local()
        self._limiter = RateLimiter(cfg.rate_limit) if cfg.rate_limit else None

    def _session(self) -> requests.Session:
        if self._fixed_session is not None:
            return self._fixed_session
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def complete(self, conv: Conversation) -> str:
        api_key = os.environ.get("LLM_API_KEY")
        if not api_key:
            raise GatewayError("http backend requires a credential in LLM_API_KEY")
        headers = {
            "Content-Type": "application/json",
            "Authorization": f"Bearer {api_key}",
        }
        payload = {
            "model": self.cfg.model_name,
            "messages": conv.as_payload(),
            "temperature": self.cfg.temperature,
        }
        last_status = None
        for attempt in range(self.cfg.http_attempts):
            if attempt:
                time.sleep(self.cfg.backoff_base * (2 ** (attempt - 1)))
            if self._limiter is not None:
                self._limiter.acquire()
            try:
                resp = self._session().post(
                    self.cfg.base_url, json=payload, headers=headers, timeout=self.cfg.timeout
                )
            except requests.Timeout as e:
                raise RequestTimeoutError(str(e)) from e
            except requests.RequestException as e:
                raise HttpError(0, str(e)) from e
            if resp.status_code == 200:
                body = resp.json()
                return body["choices"][0]["message"]["content"]
            last_status = resp.status_code
            if resp.status_code not in self.RETRYABLE:
                raise HttpError(resp.status_code, resp.text[:200])
        raise HttpError(last_status or 0, "retries exhausted")


def make_backend(cfg: BackendConfig):
    if cfg.kind == "mock":
        if cfg.fixtures_path:
            return MockBackend.from_file(cfg.fixtures_path)
        return MockBackend()
    return HttpBackend(cfg)


def complete(conv: Conversation, backend) -> str:
    """Send the conversation (which must end with a user message) and append
    the assistant's reply to it."""
    if conv.last_role() != "user":
        raise ValueError("conversation must end with a user message")
    text = backend.complete(conv)
    conv.append("assistant", text)
    return text


# ---------------------------------------------------------------------------
# Extracting structure from free-text responses
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\n?(.*?)```", re.DOTALL)


def _balanced_paren_spans(text: str) -> list[str]:
    spans = []
    depth = 0
    start = -1
    for i, ch in enumerate(text):
        if ch == "(":
            if depth == 0:
                start = i
            depth += 1
        elif ch == ")":
            if depth == 0:
                continue
            depth -= 1
            if depth == 0:
                spans.append(text[start : i + 1])
    spans.sort(key=len, reverse=True)
    return spans


def extract_query(response: str) -> Query:
    """Pull a parsable Boolean query out of a free-text response.

    Candidates, in order: fenced code blocks, the longest balanced-
    parenthesis span, the whole trimmed text.  The first candidate that
    parses with zero validation errors wins.

    Because an untagged word sequence is itself a well-formed phrase term,
    plain prose would otherwise "parse"; a candidate whose whole parse is a
    single bare, untagged term is therefore rejected unless it was
    explicitly quoted or field-tagged.
    """
    candidates = [m.strip() for m in _FENCE_RE.findall(response) if m.strip()]
    spans = _balanced_paren_spans(response)
    if spans:
        candidates.append(spans[0].strip())
    if response.strip():
        candidates.append(response.strip())
    for candidate in candidates:
        try:
            query = parse(candidate)
        except QueryParseError:
            continue
        if isinstance(query.root, Term) and "[" not in candidate \
                and candidate[0] not in ('"', "“"):
            continue
        if validate(query).ok:
            return query
    raise NoParsableQueryError("response contains no parsable Boolean query")


_NUMBERED_RE = re.compile(r"^\s*(\d+)\.\s*(.+?)\s*$")
_CATEGORY_RE = re.compile(r"^\((A|B|C|N/A|NA)\)\s*(.+?)\s*$", re.IGNORECASE)


def parse_term_list(response: str) -> list[str]:
    """Parse ``N. term`` lines; numbering must strictly increase and terms
    must be unique case-insensitively."""
    terms: list[str] = []
    seen: set[str] = set()
    last_n = 0
    for line in response.splitlines():
        m = _NUMBERED_RE.match(line)
        if not m:
            continue
        n, text = int(m.group(1)), m.group(2).rstrip(".").strip()
        if n <= last_n:
            raise ResponseFormatError(f"list numbering does not increase at line {line!r}")
        last_n = n
        if not text:
            raise ResponseFormatError(f"empty term at line {line!r}")
        key = text.lower()
        if key in seen:
            raise DuplicateTermError(f"duplicate term {text!r}")
        seen.add(key)
        terms.append(text)
    if not terms:
        raise NoTermsFoundError("no numbered term lines found")
    return terms


@dataclass(frozen=True)
class CategorizedTerm:
    index: int
    category: str  # A | B | C | NA
    text: str


@dataclass(frozen=True)
class CategorizedTerms:
    entries: tuple[CategorizedTerm, ...]

    def in_category(self, category: str) -> list[str]:
        return [e.text for e in self.entries if e.category == category]


def parse_categorized_list(response: str) -> CategorizedTerms:
    """Parse ``N. (CAT) term`` lines with CAT in A/B/C/N-A."""
    entries: list[CategorizedTerm] = []
    last_n = 0
    for line in response.splitlines():
        m = _NUMBERED_RE.match(line)
        if not m:
            continue
        n, rest = int(m.group(1)), m.group(2)
        cm = _CATEGORY_RE.match(rest)
        if not cm:
            raise UnknownCategoryError(f"no (A)/(B)/(C)/(N/A) category at line {line!r}")
        if n <= last_n:
            raise ResponseFormatError(f"list numbering does not increase at line {line!r}")
        last_n = n
        category = cm.group(1).upper().replace("N/A", "NA")
        entries.append(CategorizedTerm(index=n, category=category, text=cm.group(2).rstrip(".").strip()))
    if not entries:
        raise NoEntriesError("no categorized lines found")
    return CategorizedTerms(tuple(entries))


# ---------------------------------------------------------------------------
# Generation drivers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GenerationOutcome:
    query: Query
    attempts: int
    conversation_log: Conversation
    raw_responses: tuple[str, ...]
    failures: tuple[str, ...] = ()


def generate_with_retry(prompt: str, cfg: BackendConfig, backend=None) -> GenerationOutcome:
    """One fresh single-turn conversation per attempt until a response
    yields a valid query."""
    backend = backend if backend is not None else make_backend(cfg)
    raw: list[str] = []
    failures: list[str] = []
    attempts = 0
    for _ in range(cfg.max_retries + 1):
        attempts += 1
        conv = Conversation()
        conv.append("user", prompt)
        response = complete(conv, backend)
        raw.append(response)
        try:
            query = extract_query(response)
        except NoParsableQueryError as e:
            failures.append(f"attempt {attempts}: {e}")
            continue
        return GenerationOutcome(
            query=query,
            attempts=attempts,
            conversation_log=conv,
            raw_responses=tuple(raw),
            failures=tuple(failures),
        )
    raise ExhaustedRetriesError(attempts, failures[-1] if failures else "")


def _truncate_abstract(text: str) -> str:
    tokens = text.split()
    if len(tokens) <= MAX_SEED_ABSTRACT_TOKENS:
        return text
    return " ".join(tokens[:MAX_SEED_ABSTRACT_TOKENS])


def run_guided_session(
    topic: ReviewTopic,
    seed: SeedStudy,
    cfg: BackendConfig,
    backend=None,
) -> GenerationOutcome:
    """Drive the four-step guided formulation in one conversation: identify
    terms, categorize them, assemble a grouped query, then refine it.

    Each step's answer is validated (term list, categorized list, query,
    query); any malformed step restarts the whole session, which counts as
    one attempt against ``cfg.max_retries``.
    """
    if not seed.title.strip() or not seed.abstract.strip():
        raise EmptySeedStudyError(
            f"guided session for topic {topic.topic_id} needs a seed with title and abstract"
        )
    backend = backend if backend is not None else make_backend(cfg)
    step1 = render(
        "guided_step1",
        PromptBindings(
            seed_study_title=seed.title,
            seed_study_text=_truncate_abstract(seed.abstract),
        ),
    )
    steps = [
        (step1, parse_term_list),
        (render("guided_step2", PromptBindings()), parse_categorized_list),
        (render("guided_step3", PromptBindings()), extract_query),
        (render("guided_step4", PromptBindings()), extract_query),
    ]

    raw: list[str] = []
    failures: list[str] = []
    attempts = 0
    for _ in range(cfg.max_retries + 1):
        attempts += 1
        conv = Conversation()
        final_query: Optional[Query] = None
        failed = False
        for step_no, (prompt, check) in enumerate(steps, start=1):
            conv.append("user", prompt)
            response = complete(conv, backend)
            raw.append(response)
            try:
                result = check(response)
            except (ResponseFormatError, NoParsableQueryError) as e:
                failures.append(f"attempt {attempts} step {step_no}: {e}")
                failed = True
                break
            if step_no == 4:
                final_query = result
        if failed:
            continue
        assert final_query is not None
        return GenerationOutcome(
            query=final_query,
            attempts=attempts,
            conversation_log=conv,
            raw_responses=tuple(raw),
            failures=tuple(failures),
        )
    raise ExhaustedRetriesError(attempts, failures[-1] if failures else "")
