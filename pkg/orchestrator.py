""" The question-answering pipeline: two specialists, a reasoning agent, and a
self-rating loop.

Per round:

    query --+--> tool agent ---------------------+
            |                                    +--> reasoning agent --> answer --> self rating
            +--> index search --> workflow agent +

Rounds repeat until the rating reaches the threshold or max_rounds is hit. Every
round re-issues the original query (plus an "Attempt N" line) instead of feeding back
earlier answers, and the returned answer is the best-rated round, earliest on ties.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple
import hashlib
import re
import time
from loguru import logger
from gateway import ChatBackend, ChatMessage, GatewayError, GenConfig
from vector_index import EmbeddingBackend, IndexSnapshot, SearchHit, VectorIndexError, search

TRACE_SCHEMA_VERSION = 1
PROMPTS_DIRECTORY = Path(__file__).resolve().parent / "prompts"
TEMPLATE_SEPARATOR = "\n---\n"
PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")
FIRST_INTEGER = re.compile(r"-?\d+")
RATING_REASK = "Reply with a single integer from 1 to 5."
NO_CONTEXT = "(no documentation was retrieved for this question)"
RATING_SCALE = (1, 5)
MAX_ROUNDS_LIMIT = 10


class AgentRole(str, Enum):
    TOOL_AGENT = "tool_agent"
    WORKFLOW_AGENT = "workflow_agent"
    REASONING_AGENT = "reasoning_agent"


class OrchestratorError(Exception):
    pass


class AgentError(OrchestratorError):
    def __init__(self, role: AgentRole, message: str):
        super().__init__(f"{AgentRole(role).value}: {message}")
        self.role = AgentRole(role)


class RatingError(AgentError):
    def __init__(self, message: str, reply: str = ""):
        super().__init__(AgentRole.REASONING_AGENT, message)
        self.reply = reply


class PipelineError(OrchestratorError):
    """ Raised when an agent fails mid-run; `trace` holds the rounds completed so far. """

    def __init__(self, message: str, trace: "OrchestrationTrace"):
        super().__init__(message)
        self.trace = trace


class PromptTemplate:
    def __init__(self, name: str, text: str):
        if TEMPLATE_SEPARATOR not in text:
            raise OrchestratorError(f"prompt template {name} has no '---' line between system and user parts")
        self.name = name
        self.text = text
        self.system, self.user = (part.strip() for part in text.split(TEMPLATE_SEPARATOR, 1))

    @staticmethod
    def _fill(template: str, values: Dict[str, str]) -> str:
        def replace(match):
            key = match.group(1)
            if key not in values:
                raise OrchestratorError(f"no value for placeholder {{{{{key}}}}}")
            return values[key]

        filled = PLACEHOLDER.sub(replace, template)
        return re.sub(r"\n{3,}", "\n\n", filled).strip()

    def render(self, **values: str) -> List[ChatMessage]:
        return [ChatMessage("system", self._fill(self.system, values)), ChatMessage("user", self._fill(self.user, values))]


@dataclass(frozen=True)
class PromptSet:
    tool_agent: PromptTemplate
    workflow_agent: PromptTemplate
    reasoning_agent: PromptTemplate
    self_rating: PromptTemplate

    @property
    def version(self) -> str:
        """ Short content hash recorded in traces so runs name the templates they used. """
        digest = hashlib.sha256()
        for template in (self.tool_agent, self.workflow_agent, self.reasoning_agent, self.self_rating):
            digest.update(template.text.encode("utf-8"))
        return digest.hexdigest()[:12]


def load_prompts(directory=PROMPTS_DIRECTORY) -> PromptSet:
    directory = Path(directory)
    templates = {}
    for name in ("tool_agent", "workflow_agent", "reasoning_agent", "self_rating"):
        filepath = directory / f"{name}.txt"
        if not filepath.is_file():
            raise OrchestratorError(f"missing prompt template {filepath}")
        templates[name] = PromptTemplate(name, filepath.read_text(encoding="utf-8"))
    return PromptSet(**templates)


@dataclass(frozen=True)
class PipelineConfig:
    threshold: int = 4
    max_rounds: int = 3
    retrieval_k: int = 1
    prompts: Optional[PromptSet] = None
    gen: GenConfig = field(default_factory=GenConfig)
    return_last: bool = False
    forward_citations: bool = False

    def __post_init__(self):
        low, high = RATING_SCALE
        if not low <= self.threshold <= high:
            raise ValueError(f"threshold must be within {low}..{high}")
        if not 1 <= self.max_rounds <= MAX_ROUNDS_LIMIT:
            raise ValueError(f"max_rounds must be within 1..{MAX_ROUNDS_LIMIT}")
        if self.retrieval_k < 1:
            raise ValueError("retrieval_k must be >= 1")
        if self.prompts is None:
            object.__setattr__(self, "prompts", load_prompts())

    def snapshot(self) -> dict:
        return {
            "threshold": self.threshold,
            "max_rounds": self.max_rounds,
            "retrieval_k": self.retrieval_k,
            "gen": {**asdict(self.gen), "stop": list(self.gen.stop) if self.gen.stop else None},
            "return_last": self.return_last,
            "forward_citations": self.forward_citations,
            "prompts_version": self.prompts.version,
        }


@dataclass(frozen=True)
class AgentResponse:
    role: AgentRole
    text: str
    retrieved: Tuple[SearchHit, ...] = ()
    latency: float = 0.0  # seconds
    round: int = 1

    def __post_init__(self):
        if self.retrieved and self.role != AgentRole.WORKFLOW_AGENT:
            raise ValueError("only the workflow agent carries retrieved documents")

    def to_dict(self) -> dict:
        return {
            "role": self.role.value,
            "text": self.text,
            "retrieved": [hit.to_dict() for hit in self.retrieved],
            "latency": self.latency,
            "round": self.round,
        }

    @classmethod
    def from_dict(cls, row: dict) -> "AgentResponse":
        return cls(
            role=AgentRole(row["role"]),
            text=row["text"],
            retrieved=tuple(SearchHit.from_dict(hit) for hit in row.get("retrieved", [])),
            latency=float(row.get("latency", 0.0)),
            round=int(row["round"]),
        )


@dataclass(frozen=True)
class RoundRecord:
    round: int
    specialist_responses: Tuple[AgentResponse, AgentResponse]
    synthesized: str
    self_rating: int

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "specialist_responses": [response.to_dict() for response in self.specialist_responses],
            "synthesized": self.synthesized,
            "self_rating": self.self_rating,
        }

    @classmethod
    def from_dict(cls, row: dict) -> "RoundRecord":
        return cls(
            round=int(row["round"]),
            specialist_responses=tuple(AgentResponse.from_dict(r) for r in row["specialist_responses"]),
            synthesized=row["synthesized"],
            self_rating=int(row["self_rating"]),
        )


@dataclass(frozen=True)
class OrchestrationTrace:
    query: str
    rounds: Tuple[RoundRecord, ...]
    final_answer: str
    final_round: int
    config_snapshot: dict
    warnings: Tuple[str, ...] = ()

    @property
    def ratings(self) -> List[int]:
        return [record.self_rating for record in self.rounds]

    def to_dict(self) -> dict:
        return {
            "schema_version": TRACE_SCHEMA_VERSION,
            "query": self.query,
            "rounds": [record.to_dict() for record in self.rounds],
            "final_answer": self.final_answer,
            "final_round": self.final_round,
            "config_snapshot": self.config_snapshot,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, row: dict) -> "OrchestrationTrace":
        if row.get("schema_version") != TRACE_SCHEMA_VERSION:
            raise OrchestratorError(f"unsupported trace schema version {row.get('schema_version')}")
        return cls(
            query=row["query"],
            rounds=tuple(RoundRecord.from_dict(r) for r in row["rounds"]),
            final_answer=row["final_answer"],
            final_round=int(row["final_round"]),
            config_snapshot=row["config_snapshot"],
            warnings=tuple(row.get("warnings", [])),
        )


@dataclass
class PipelineDeps:
    tool: ChatBackend
    workflow: ChatBackend
    reasoning: ChatBackend
    index: Optional[IndexSnapshot] = None
    embedder: Optional[EmbeddingBackend] = None


def round_salt(round_number: int) -> str:
    return "" if round_number <= 1 else f"Attempt {round_number}: reconsider the question from scratch."


def _call(role: AgentRole, backend: ChatBackend, messages: Sequence[ChatMessage], gen: GenConfig) -> Tuple[str, float]:
    started = time.perf_counter()
    try:
        text = backend.complete(messages, gen)
    except GatewayError as exc:
        raise AgentError(role, str(exc)) from exc
    return text, time.perf_counter() - started


def _require_query(query: str) -> None:
    if not query or not query.strip():
        raise ValueError("query must be non-empty")


def ask_tool_agent(query: str, gateway: ChatBackend, config: PipelineConfig, round_number: int = 1) -> AgentResponse:
    _require_query(query)
    messages = config.prompts.tool_agent.render(query=query, round=round_salt(round_number))
    text, latency = _call(AgentRole.TOOL_AGENT, gateway, messages, config.gen)
    return AgentResponse(role=AgentRole.TOOL_AGENT, text=text, latency=latency, round=round_number)


def format_context(hits: Sequence[SearchHit]) -> str:
    if not hits:
        return NO_CONTEXT
    return "\n\n".join(f"[{number}] {hit.chunk_id}\n{hit.chunk.text.strip()}" for number, hit in enumerate(hits, start=1))


def ask_workflow_agent(
    query: str,
    index: Optional[IndexSnapshot],
    gateway: ChatBackend,
    config: PipelineConfig,
    embedder: Optional[EmbeddingBackend] = None,
    round_number: int = 1,
    warnings: Optional[List[str]] = None,
) -> AgentResponse:
    _require_query(query)
    hits: List[SearchHit] = []
    if index is None or index.size == 0:
        message = "workflow agent answered without retrieved context: the index is empty"
        logger.warning(message.upper())
        if warnings is not None and message not in warnings:
            warnings.append(message)
    else:
        if embedder is None:
            raise AgentError(AgentRole.WORKFLOW_AGENT, "no embedding backend configured for retrieval")
        try:
            hits = search(index, query, config.retrieval_k, embedder)
        except VectorIndexError as exc:
            raise AgentError(AgentRole.WORKFLOW_AGENT, f"retrieval failed: {exc}") from exc

    messages = config.prompts.workflow_agent.render(
        query=query, context=format_context(hits), round=round_salt(round_number)
    )
    text, latency = _call(AgentRole.WORKFLOW_AGENT, gateway, messages, config.gen)
    return AgentResponse(
        role=AgentRole.WORKFLOW_AGENT, text=text, retrieved=tuple(hits), latency=latency, round=round_number
    )


def synthesize(
    query: str,
    responses: Sequence[AgentResponse],
    gateway: ChatBackend,
    config: PipelineConfig,
    round_number: int = 1,
) -> str:
    by_role = {response.role: response for response in responses}
    if len(responses) != 2 or set(by_role) != {AgentRole.TOOL_AGENT, AgentRole.WORKFLOW_AGENT}:
        raise ValueError("synthesis needs exactly one tool agent and one workflow agent response")

    workflow = by_role[AgentRole.WORKFLOW_AGENT]
    workflow_answer = workflow.text.strip() or "(no answer)"
    if config.forward_citations and workflow.retrieved:
        workflow_answer += "\n\nRetrieved sources: " + ", ".join(hit.chunk_id for hit in workflow.retrieved)

    messages = config.prompts.reasoning_agent.render(
        query=query,
        tool_answer=by_role[AgentRole.TOOL_AGENT].text.strip() or "(no answer)",
        workflow_answer=workflow_answer,
        round=round_salt(round_number),
    )
    text, _ = _call(AgentRole.REASONING_AGENT, gateway, messages, config.gen)
    return text


def parse_rating(reply: str) -> Optional[int]:
    """ First integer token in the reply; "Rating: 3/5 because ..." is 3. """
    match = FIRST_INTEGER.search(reply or "")
    return int(match.group(0)) if match else None


def self_rate(query: str, answer: str, gateway: ChatBackend, config: PipelineConfig) -> int:
    if not answer or not answer.strip():
        raise ValueError("cannot rate an empty answer")

    messages = config.prompts.self_rating.render(query=query, answer=answer)
    reply, _ = _call(AgentRole.REASONING_AGENT, gateway, messages, config.gen)
    rating = parse_rating(reply)
    if rating is None:
        # one re-ask, keeping the unusable reply in the conversation
        messages = messages + [ChatMessage("assistant", reply or "(empty)"), ChatMessage("user", RATING_REASK)]
        reply, _ = _call(AgentRole.REASONING_AGENT, gateway, messages, config.gen)
        rating = parse_rating(reply)
        if rating is None:
            raise RatingError(f"unparsable rating {reply!r}", reply=reply)

    low, high = RATING_SCALE
    if not low <= rating <= high:
        raise RatingError(f"rating {rating} outside {low}..{high}", reply=reply)
    return rating


def select_final_round(ratings: Sequence[int], return_last: bool = False) -> int:
    """ 1-based round to return: the earliest maximum, or the last round. """
    if not ratings:
        raise ValueError("no rounds to choose from")
    if return_last:
        return len(ratings)
    best = max(ratings)
    return ratings.index(best) + 1


def _trace(query: str, rounds: List[RoundRecord], config: PipelineConfig, warnings: List[str]) -> OrchestrationTrace:
    if rounds:
        final_round = select_final_round([r.self_rating for r in rounds], config.return_last)
        final_answer = rounds[final_round - 1].synthesized
    else:
        final_round, final_answer = 0, ""
    return OrchestrationTrace(
        query=query,
        rounds=tuple(rounds),
        final_answer=final_answer,
        final_round=final_round,
        config_snapshot=config.snapshot(),
        warnings=tuple(warnings),
    )


def run_round(
    query: str, round_number: int, config: PipelineConfig, deps: PipelineDeps, warnings: List[str]
) -> RoundRecord:
    # each specialist sees only the original query
    with ThreadPoolExecutor(max_workers=2, thread_name_prefix="specialist") as executor:
        tool_future = executor.submit(ask_tool_agent, query, deps.tool, config, round_number)
        workflow_future = executor.submit(
            ask_workflow_agent, query, deps.index, deps.workflow, config, deps.embedder, round_number, warnings
        )
        tool_response = tool_future.result()
        workflow_response = workflow_future.result()

    responses = (tool_response, workflow_response)
    answer = synthesize(query, responses, deps.reasoning, config, round_number)
    rating = self_rate(query, answer, deps.reasoning, config)
    logger.info("ROUND {} RATED {}", round_number, rating)
    return RoundRecord(round=round_number, specialist_responses=responses, synthesized=answer, self_rating=rating)


def run_pipeline(query: str, config: PipelineConfig, deps: PipelineDeps) -> OrchestrationTrace:
    _require_query(query)
    rounds: List[RoundRecord] = []
    warnings: List[str] = []

    for round_number in range(1, config.max_rounds + 1):
        try:
            record = run_round(query, round_number, config, deps, warnings)
        except (OrchestratorError, ValueError) as exc:
            raise PipelineError(f"round {round_number} failed: {exc}", _trace(query, rounds, config, warnings)) from exc
        rounds.append(record)
        if record.self_rating >= config.threshold:
            break

    trace = _trace(query, rounds, config, warnings)
    logger.info("FINISHED AFTER {} ROUNDS, RETURNING ROUND {}", len(rounds), trace.final_round)
    return trace
