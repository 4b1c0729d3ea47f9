"""Question answering pipelines over the two retrieval backends.

Six pipelines share the same building blocks: a retriever (flat chunk
top-k or graph activation), prompt assets, and a JSON-parsing completion
helper with one repair retry.

  naive             single retrieval, single answer call
  cot               iterative reasoning loop over chunk retrieval
  decomposition     subquestion chain over chunk retrieval
  sa                single retrieval over the graph, single answer call
  sa-cot            iterative reasoning loop over graph retrieval
  sa-decomposition  subquestion chain over graph retrieval

All outputs are plain dataclasses with stable dict renderings so that two
runs against the same scripted gateway serialize identically.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .chunk_store import ChunkStore
from .errors import ParseFailure, PipelineError
from .gateway import ChatRequest, Gateway
from .graph_store import GraphStore
from .ingest import REPAIR_NOTE, parse_model_payload
from .prompts import compose
from .retrieval import (
    ActivationState,
    Context,
    RetrievalConfig,
    Subgraph,
    assemble_context,
    fetch_subgraph,
    spread_activation,
)

logger = logging.getLogger(__name__)

PIPELINES = ("naive", "cot", "decomposition", "sa", "sa-cot", "sa-decomposition")
INSUFFICIENT_TEXT = "Insufficient Information"
DEFAULT_MAX_STEPS = 3


def _normalize_loose(text: str) -> str:
    return " ".join("".join(ch for ch in text.lower() if ch.isalnum() or ch.isspace()).split())


def is_insufficient(text: str) -> bool:
    return _normalize_loose(text) == "insufficient information"


@dataclass
class CotStep:
    retrieval_query: str
    provided_context: str
    answer_possible: bool
    final_answer: str
    additional_question: str

    def to_dict(self) -> dict:
        return {
            "retrieval_query": self.retrieval_query,
            "provided_context": self.provided_context,
            "answer_possible": self.answer_possible,
            "final_answer": self.final_answer,
            "additional_question": self.additional_question,
        }


@dataclass
class SubAnswer:
    question: str
    answer: str

    def to_dict(self) -> dict:
        return {"question": self.question, "answer": self.answer}


@dataclass
class Answer:
    question: str
    pipeline: str
    text: str
    reasoning: str = ""
    insufficient: bool = False
    steps: list[CotStep] = field(default_factory=list)
    subanswers: list[SubAnswer] = field(default_factory=list)
    trace: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "pipeline": self.pipeline,
            "answer": self.text,
            "reasoning": self.reasoning,
            "insufficient": self.insufficient,
            "steps": [step.to_dict() for step in self.steps],
            "subanswers": [sub.to_dict() for sub in self.subanswers],
            "trace": self.trace,
        }


@dataclass
class Retrieved:
    documents: list[str]
    relations: list[str]
    trace: dict


class ChunkRetriever:
    """Top-k cosine retrieval over the flat chunk store."""

    def __init__(self, gateway: Gateway, store: ChunkStore, k: int):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.gateway = gateway
        self.store = store
        self.k = k
        self.uses_graph = False

    def retrieve(self, query: str) -> Retrieved:
        vector = self.gateway.embed_one(query)
        hits = self.store.top_k(vector, self.k)
        return Retrieved(
            documents=[chunk.text for chunk, _score in hits],
            relations=[],
            trace={"chunks": [[chunk.id, round(score, 6)] for chunk, score in hits]},
        )


class ActivationRetriever:
    """Graph retrieval: seeds, activation spreading, context assembly.

    Keeps the last subgraph and activation state around so callers can
    export a DOT rendering of the most recent retrieval.
    """

    def __init__(self, gateway: Gateway, store: GraphStore, config: RetrievalConfig):
        self.gateway = gateway
        self.store = store
        self.config = config
        self.uses_graph = True
        self.last_subgraph: Subgraph | None = None
        self.last_state: ActivationState | None = None
        self.last_context: Context | None = None

    def retrieve(self, query: str) -> Retrieved:
        vector = self.gateway.embed_one(query)
        subgraph = fetch_subgraph(self.store, vector, self.config)
        state = spread_activation(subgraph, self.config.tau_a)
        context = assemble_context(self.store, subgraph, state, vector, self.config)
        self.last_subgraph = subgraph
        self.last_state = state
        self.last_context = context
        return Retrieved(
            documents=[doc.text for doc in context.documents],
            relations=[rel.text for rel in context.relations],
            trace={
                "seeds": {eid: round(score, 6) for eid, score in sorted(subgraph.seeds.items())},
                "activated": sorted(state.activated),
                "documents": [doc.doc_id for doc in context.documents],
                "relations": [rel.link_id for rel in context.relations],
            },
        )


def render_context(documents: list[str], relations: list[str]) -> str:
    """Numbered knowledge paragraphs followed by a key-relationship list."""
    parts = []
    for i, text in enumerate(documents, start=1):
        parts.append(f"Paragraph {i}:\n{text}")
    if relations:
        parts.append("Key relationships:\n" + "\n".join(f"- {r}" for r in relations))
    if not parts:
        return "No context was retrieved."
    return "\n\n".join(parts)


def _render_input(question: str, context: str) -> str:
    return f"Question: {question}\n\n{context}"


def _structured_call(gateway: Gateway, prompt: str, validate):
    """Completion with strict JSON parsing and one repair retry."""
    raw = gateway.complete(ChatRequest(user_prompt=prompt, expect_structured=True))
    try:
        return validate(parse_model_payload(raw))
    except (ParseFailure, ValueError) as first_error:
        logger.debug("structured call parse failed, retrying once: %s", first_error)
    raw = gateway.complete(
        ChatRequest(user_prompt=f"{prompt}\n\n{REPAIR_NOTE}", expect_structured=True)
    )
    try:
        return validate(parse_model_payload(raw))
    except (ParseFailure, ValueError) as exc:
        raise PipelineError(f"unusable model output: {exc}", trace={"raw": raw}) from exc


def _validate_answer(payload) -> tuple[str, str]:
    if not isinstance(payload, dict):
        raise ValueError("expected a JSON object")
    if "final_answer" not in payload:
        raise ValueError("missing 'final_answer'")
    return str(payload["final_answer"]).strip(), str(payload.get("reasoning", "")).strip()


def _coerce_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in ("true", "yes"):
            return True
        if lowered in ("false", "no", ""):
            return False
    raise ValueError(f"cannot read {value!r} as a boolean")


def _validate_reasoning(payload) -> dict:
    if not isinstance(payload, dict):
        raise ValueError("expected a JSON object")
    if "answer_possible" not in payload:
        raise ValueError("missing 'answer_possible'")
    return {
        "provided_context": str(payload.get("provided_context", "")).strip(),
        "answer_possible": _coerce_bool(payload["answer_possible"]),
        "final_answer": str(payload.get("final_answer", "")).strip(),
        "additional_question": str(payload.get("additional_question", "")).strip(),
    }


def _validate_decomposition(payload) -> list[str]:
    if not isinstance(payload, dict) or not isinstance(payload.get("subquestions"), list):
        raise ValueError("expected an object with a 'subquestions' list")
    items = []
    for entry in payload["subquestions"]:
        if not isinstance(entry, dict) or "question" not in entry:
            raise ValueError("each subquestion must be an object with a 'question'")
        order = entry.get("id")
        items.append((order if isinstance(order, int) else len(items) + 1, str(entry["question"]).strip()))
    items.sort(key=lambda pair: pair[0])
    questions = [q for _order, q in items if q]
    if not questions:
        raise ValueError("decomposition produced no subquestions")
    return questions


def _answer_prompt_name(retriever) -> str:
    return "answer_graph" if retriever.uses_graph else "answer_baseline"


def _reason_prompt_name(retriever) -> str:
    return "reason_graph" if retriever.uses_graph else "reason_iterative"


def _make_answer(question: str, pipeline: str, text: str, reasoning: str, **extra) -> Answer:
    return Answer(
        question=question,
        pipeline=pipeline,
        text=text,
        reasoning=reasoning,
        insufficient=is_insufficient(text),
        **extra,
    )


def answer_direct(gateway: Gateway, retriever, question: str, pipeline_name: str) -> Answer:
    """Single retrieval pass, single answer completion."""
    retrieved = retriever.retrieve(question)
    context = render_context(retrieved.documents, retrieved.relations)
    prompt = compose(_answer_prompt_name(retriever), _render_input(question, context))
    text, reasoning = _structured_call(gateway, prompt, _validate_answer)
    return _make_answer(
        question, pipeline_name, text, reasoning, trace={"retrieval": retrieved.trace}
    )


def answer_naive(gateway: Gateway, retriever: ChunkRetriever, question: str) -> Answer:
    return answer_direct(gateway, retriever, question, "naive")


def answer_sa(gateway: Gateway, retriever: ActivationRetriever, question: str) -> Answer:
    return answer_direct(gateway, retriever, question, "sa")


def answer_cot(
    gateway: Gateway,
    retriever,
    question: str,
    max_steps: int = DEFAULT_MAX_STEPS,
    pipeline_name: str | None = None,
) -> Answer:
    """Iterative reasoning loop.

    Each step retrieves for the current query (the original question first,
    then the model's follow-up questions), asks the model to summarize the
    relevant facts and decide whether the question is answerable, and
    carries the summaries forward as extra context.  After max_steps without
    an answer the accumulated context goes through one forced answer call.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    pipeline = pipeline_name or ("sa-cot" if retriever.uses_graph else "cot")
    reason_prompt = _reason_prompt_name(retriever)
    steps: list[CotStep] = []
    retrieval_traces = []
    memory: list[str] = []
    current_query = question
    retrieved = None
    for _step in range(max_steps):
        retrieved = retriever.retrieve(current_query)
        retrieval_traces.append(retrieved.trace)
        context = render_context(memory + retrieved.documents, retrieved.relations)
        prompt = compose(reason_prompt, _render_input(question, context))
        verdict = _structured_call(gateway, prompt, _validate_reasoning)
        step = CotStep(
            retrieval_query=current_query,
            provided_context=verdict["provided_context"],
            answer_possible=verdict["answer_possible"],
            final_answer=verdict["final_answer"],
            additional_question=verdict["additional_question"],
        )
        steps.append(step)
        if step.answer_possible:
            return _make_answer(
                question,
                pipeline,
                step.final_answer,
                step.provided_context,
                steps=steps,
                trace={"retrievals": retrieval_traces, "forced_final": False},
            )
        if step.provided_context:
            memory.append(step.provided_context)
        current_query = step.additional_question or question
    context = render_context(memory + (retrieved.documents if retrieved else []),
                             retrieved.relations if retrieved else [])
    prompt = compose(_answer_prompt_name(retriever), _render_input(question, context))
    text, reasoning = _structured_call(gateway, prompt, _validate_answer)
    return _make_answer(
        question,
        pipeline,
        text,
        reasoning,
        steps=steps,
        trace={"retrievals": retrieval_traces, "forced_final": True},
    )


def decompose(gateway: Gateway, question: str) -> list[str]:
    """Break a multi-hop question into ordered subquestions.

    Falls back to the question itself when the model output is unusable.
    """
    prompt = compose("decompose", question)
    try:
        return _structured_call(gateway, prompt, _validate_decomposition)
    except PipelineError as exc:
        logger.warning("decomposition failed (%s); answering the question directly", exc)
        return [question]


def answer_decomposition(
    gateway: Gateway,
    retriever,
    question: str,
    pipeline_name: str | None = None,
) -> Answer:
    """Answer subquestions in order, then the original question.

    Each subquestion retrieves with the prior question/answer pairs
    prepended to the retrieval query and answers with those pairs as extra
    context.  The final answer retrieves on the original question alone and
    sees the full subquestion transcript.
    """
    pipeline = pipeline_name or ("sa-decomposition" if retriever.uses_graph else "decomposition")
    answer_prompt = _answer_prompt_name(retriever)
    subquestions = decompose(gateway, question)
    subanswers: list[SubAnswer] = []
    retrieval_traces = []

    def qa_block() -> list[str]:
        if not subanswers:
            return []
        lines = [f"Q: {sub.question} A: {sub.answer}" for sub in subanswers]
        return ["Previously answered subquestions:\n" + "\n".join(lines)]

    for subquestion in subquestions:
        query_parts = [f"Q: {sub.question} A: {sub.answer}" for sub in subanswers]
        retrieval_query = "\n".join(query_parts + [subquestion])
        retrieved = retriever.retrieve(retrieval_query)
        retrieval_traces.append(retrieved.trace)
        context = render_context(qa_block() + retrieved.documents, retrieved.relations)
        prompt = compose(answer_prompt, _render_input(subquestion, context))
        text, _reasoning = _structured_call(gateway, prompt, _validate_answer)
        subanswers.append(SubAnswer(question=subquestion, answer=text))

    retrieved = retriever.retrieve(question)
    retrieval_traces.append(retrieved.trace)
    context = render_context(qa_block() + retrieved.documents, retrieved.relations)
    prompt = compose(answer_prompt, _render_input(question, context))
    text, reasoning = _structured_call(gateway, prompt, _validate_answer)
    return _make_answer(
        question,
        pipeline,
        text,
        reasoning,
        subanswers=subanswers,
        trace={"subquestions": subquestions, "retrievals": retrieval_traces},
    )


def build_retriever(
    pipeline: str,
    gateway: Gateway,
    graph_store: GraphStore | None = None,
    chunk_store: ChunkStore | None = None,
    config: RetrievalConfig | None = None,
):
    config = config or RetrievalConfig()
    if pipeline not in PIPELINES:
        raise ValueError(f"unknown pipeline {pipeline!r}; expected one of {PIPELINES}")
    if pipeline.startswith("sa"):
        if graph_store is None:
            raise ValueError(f"pipeline {pipeline!r} needs a graph store")
        return ActivationRetriever(gateway, graph_store, config)
    if chunk_store is None:
        raise ValueError(f"pipeline {pipeline!r} needs a chunk store")
    return ChunkRetriever(gateway, chunk_store, config.k)


def answer_question(
    pipeline: str,
    gateway: Gateway,
    question: str,
    graph_store: GraphStore | None = None,
    chunk_store: ChunkStore | None = None,
    config: RetrievalConfig | None = None,
    max_steps: int = DEFAULT_MAX_STEPS,
    retriever=None,
) -> Answer:
    """Dispatch a question through one named pipeline."""
    if retriever is None:
        retriever = build_retriever(pipeline, gateway, graph_store, chunk_store, config)
    if pipeline in ("naive", "sa"):
        return answer_direct(gateway, retriever, question, pipeline)
    if pipeline in ("cot", "sa-cot"):
        return answer_cot(gateway, retriever, question, max_steps, pipeline_name=pipeline)
    if pipeline in ("decomposition", "sa-decomposition"):
        return answer_decomposition(gateway, retriever, question, pipeline_name=pipeline)
    raise ValueError(f"unknown pipeline {pipeline!r}; expected one of {PIPELINES}")
