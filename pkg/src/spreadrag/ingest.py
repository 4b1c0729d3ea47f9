"""Corpus ingestion: chunking, entity/relation extraction, graph population.

Chunking is whitespace-word based with a fixed stride.  Extraction sends one
completion per task per chunk and parses structured JSON out of the reply,
tolerating markdown fences and stray prose around the payload.  Extraction
calls run on a bounded thread pool; results are applied to the store
serially in chunk order so that node ids are stable across runs.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .chunk_store import ChunkStore
from .errors import AmbiguousEntity, ExtractionError, GatewayError, ParseFailure
from .gateway import ChatRequest, Gateway
from .graph_store import EntityType, GraphStore
from .prompts import compose

logger = logging.getLogger(__name__)

REPAIR_NOTE = (
    "Your previous response could not be parsed as the required JSON. "
    "Respond with only the JSON value, no commentary."
)


@dataclass(frozen=True)
class Chunk:
    source_id: str
    chunk_index: int
    text: str
    start_word: int
    end_word: int


@dataclass
class ExtractedEntity:
    name: str
    entity_type: EntityType
    aliases: list[str] = field(default_factory=list)
    description: str = ""


@dataclass(frozen=True)
class ExtractedTriple:
    subject: str
    relation: str
    obj: str


@dataclass
class IndexReport:
    sources: int = 0
    chunks: int = 0
    entities_created: int = 0
    entities_merged: int = 0
    ambiguous_entities: int = 0
    descriptions: int = 0
    documents: int = 0
    relations: int = 0
    dropped_triples: int = 0
    deduped_triples: int = 0
    parse_retries: int = 0
    failures: list[str] = field(default_factory=list)

    def summary(self) -> str:
        return (
            f"{self.sources} sources, {self.chunks} chunks, "
            f"{self.entities_created} entities (+{self.entities_merged} merged), "
            f"{self.descriptions} descriptions, {self.documents} documents, "
            f"{self.relations} relations, {len(self.failures)} failures"
        )


def chunk_text(text: str, source_id: str, chunk_size: int, overlap: int) -> list[Chunk]:
    """Split text into overlapping windows of whitespace-delimited words.

    Consecutive chunks advance by ``chunk_size - overlap`` words; the final
    chunk ends exactly at the last word.  Empty input yields no chunks.
    """
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    if overlap < 0 or overlap >= chunk_size:
        raise ValueError("overlap must satisfy 0 <= overlap < chunk_size")
    words = text.split()
    if not words:
        return []
    chunks = []
    start = 0
    index = 0
    while True:
        end = min(start + chunk_size, len(words))
        chunks.append(
            Chunk(
                source_id=source_id,
                chunk_index=index,
                text=" ".join(words[start:end]),
                start_word=start,
                end_word=end,
            )
        )
        if end == len(words):
            break
        start += chunk_size - overlap
        index += 1
    return chunks


def parse_model_payload(raw: str):
    """Pull a JSON value out of a model reply.

    Accepts bare JSON, JSON inside markdown code fences, and JSON embedded
    in surrounding prose (first balanced object or array wins).
    """
    text = raw.strip()
    if not text:
        raise ParseFailure("empty model reply")
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if text.startswith("```"):
        first_newline = text.find("\n")
        closing = text.rfind("```")
        if first_newline != -1 and closing > first_newline:
            inner = text[first_newline + 1 : closing].strip()
            try:
                return json.loads(inner)
            except json.JSONDecodeError:
                text = inner
    starts = [i for i in (text.find("{"), text.find("[")) if i != -1]
    if not starts:
        raise ParseFailure("no JSON object or array in model reply")
    start = min(starts)
    opener = text[start]
    closer = "}" if opener == "{" else "]"
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch in "{[":
            depth += 1
        elif ch in "}]":
            depth -= 1
            if depth == 0:
                candidate = text[start : i + 1]
                try:
                    return json.loads(candidate)
                except json.JSONDecodeError as exc:
                    raise ParseFailure(f"malformed JSON payload: {exc.msg}", offset=start) from exc
    raise ParseFailure(f"unbalanced JSON starting at offset {start}", offset=start)


def _complete_structured(gateway: Gateway, prompt: str, validate) -> tuple[object, int]:
    """One completion with a single repair retry on unparseable output."""
    request = ChatRequest(user_prompt=prompt, expect_structured=True)
    raw = gateway.complete(request)
    try:
        return validate(parse_model_payload(raw)), 0
    except (ParseFailure, ValueError) as first_error:
        logger.debug("extraction parse failed, retrying once: %s", first_error)
    retry = ChatRequest(user_prompt=f"{prompt}\n\n{REPAIR_NOTE}", expect_structured=True)
    raw = gateway.complete(retry)
    try:
        return validate(parse_model_payload(raw)), 1
    except (ParseFailure, ValueError) as exc:
        raise ExtractionError(f"unusable extraction output: {exc}", raw_output=raw) from exc


def _validate_entities(payload) -> list[ExtractedEntity]:
    if isinstance(payload, dict):
        lists = [v for v in payload.values() if isinstance(v, list)]
        if len(lists) == 1:
            payload = lists[0]
    if not isinstance(payload, list):
        raise ValueError("expected a JSON array of entities")
    out = []
    for item in payload:
        if not isinstance(item, dict):
            raise ValueError("entity entries must be objects")
        name = str(item.get("name", "")).strip()
        if not name:
            continue
        aliases = item.get("aliases") or []
        if not isinstance(aliases, list):
            raise ValueError("aliases must be a list")
        out.append(
            ExtractedEntity(
                name=name,
                entity_type=EntityType.coerce(str(item.get("type", "MISC"))),
                aliases=[str(a).strip() for a in aliases if str(a).strip()],
                description=str(item.get("entity_information", "")).strip(),
            )
        )
    return out


def _validate_triples(payload) -> list[ExtractedTriple]:
    if isinstance(payload, list):
        payload = {"triples": payload}
    if not isinstance(payload, dict) or not isinstance(payload.get("triples"), list):
        raise ValueError("expected an object with a 'triples' list")
    out = []
    for item in payload["triples"]:
        if not isinstance(item, (list, tuple)) or len(item) != 3:
            raise ValueError(f"triple must have three elements, got {item!r}")
        subject, relation, obj = (str(part).strip() for part in item)
        if subject and relation and obj:
            out.append(ExtractedTriple(subject, relation, obj))
    return out


def extract_entities(gateway: Gateway, text: str) -> tuple[list[ExtractedEntity], int]:
    prompt = compose("extract_entities", text)
    return _complete_structured(gateway, prompt, _validate_entities)


def extract_relations(
    gateway: Gateway, text: str, entity_names: list[str]
) -> tuple[list[ExtractedTriple], int]:
    payload = f"{text}\n\nEntity list: {', '.join(entity_names)}"
    prompt = compose("extract_relations", payload)
    return _complete_structured(gateway, prompt, _validate_triples)


@dataclass
class _ChunkExtraction:
    chunk: Chunk
    entities: list[ExtractedEntity]
    triples: list[ExtractedTriple]
    retries: int
    error: str | None = None


def _extract_chunk(gateway: Gateway, chunk: Chunk) -> _ChunkExtraction:
    try:
        entities, retries_a = extract_entities(gateway, chunk.text)
        names = []
        for entity in entities:
            names.append(entity.name)
            names.extend(entity.aliases)
        triples: list[ExtractedTriple] = []
        retries_b = 0
        if entities:
            triples, retries_b = extract_relations(gateway, chunk.text, names)
        return _ChunkExtraction(chunk, entities, triples, retries_a + retries_b)
    except (ExtractionError, GatewayError) as exc:
        return _ChunkExtraction(chunk, [], [], 0, error=str(exc))


def index_corpus(
    gateway: Gateway,
    store: GraphStore,
    corpus: list[tuple[str, str]],
    chunk_size: int = 500,
    overlap: int = 200,
    max_workers: int = 4,
) -> IndexReport:
    """Chunk every source, extract entities/relations, populate the graph.

    Extraction runs concurrently; store writes happen on the calling thread
    in chunk order, so two runs over the same corpus with the same gateway
    produce identical stores.  Embeddings are requested during the serial
    application phase because relation strings use resolved entity names.
    """
    report = IndexReport(sources=len(corpus))
    chunks: list[Chunk] = []
    for source_id, text in corpus:
        chunks.extend(chunk_text(text, source_id, chunk_size, overlap))
    report.chunks = len(chunks)
    if not chunks:
        return report

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(_extract_chunk, gateway, chunk) for chunk in chunks]
        results = [future.result() for future in futures]

    seen_relations: set[tuple[str, str, str]] = set()
    for result in results:
        report.parse_retries += result.retries
        if result.error:
            report.failures.append(
                f"{result.chunk.source_id}[{result.chunk.chunk_index}]: {result.error}"
            )
        try:
            _apply_chunk(gateway, store, result, report, seen_relations)
        except GatewayError as exc:
            report.failures.append(
                f"{result.chunk.source_id}[{result.chunk.chunk_index}]: {exc}"
            )
    logger.info("indexing done: %s", report.summary())
    return report


def _apply_chunk(
    gateway: Gateway,
    store: GraphStore,
    result: _ChunkExtraction,
    report: IndexReport,
    seen_relations: set[tuple[str, str, str]],
):
    chunk = result.chunk
    mentioned: list[str] = []
    pending_descriptions: list[tuple[str, str]] = []
    for entity in result.entities:
        try:
            entity_id, created = store.upsert_entity(
                entity.name, entity.entity_type, entity.aliases
            )
            if created:
                report.entities_created += 1
            else:
                report.entities_merged += 1
        except AmbiguousEntity as exc:
            entity_id = exc.entity_ids[0]
            report.ambiguous_entities += 1
            logger.warning(
                "ambiguous entity %r matches %s; attaching to %s",
                entity.name,
                exc.entity_ids,
                entity_id,
            )
        if entity_id not in mentioned:
            mentioned.append(entity_id)
        if entity.description:
            pending_descriptions.append((entity_id, entity.description))

    pending_relations: list[tuple[str, str, str, str]] = []
    for triple in result.triples:
        source = store.find_entity(triple.subject)
        target = store.find_entity(triple.obj)
        if source is None or target is None or source.id == target.id:
            report.dropped_triples += 1
            continue
        key = (source.id, " ".join(triple.relation.split()).lower(), target.id)
        if key in seen_relations:
            report.deduped_triples += 1
            continue
        seen_relations.add(key)
        pending_relations.append(
            (source.id, target.id, triple.relation, f"{source.name} {triple.relation} {target.name}")
        )

    texts = [text for _, text in pending_descriptions]
    texts.append(chunk.text)
    texts.extend(sentence for *_ids, sentence in pending_relations)
    vectors = gateway.embed(texts)

    offset = 0
    for (entity_id, text), vector in zip(pending_descriptions, vectors):
        store.add_description(entity_id, text, vector)
        report.descriptions += 1
    offset = len(pending_descriptions)
    store.add_document(chunk.source_id, chunk.chunk_index, chunk.text, vectors[offset], mentioned)
    report.documents += 1
    offset += 1
    for (source_id, target_id, relation, _sentence), vector in zip(
        pending_relations, vectors[offset:]
    ):
        store.add_relation(source_id, target_id, relation, vector)
        report.relations += 1


def index_chunks(
    gateway: Gateway,
    store: ChunkStore,
    corpus: list[tuple[str, str]],
    chunk_size: int = 500,
    overlap: int = 100,
) -> IndexReport:
    """Populate the flat chunk store for the embedding-only baseline."""
    report = IndexReport(sources=len(corpus))
    chunks: list[Chunk] = []
    for source_id, text in corpus:
        chunks.extend(chunk_text(text, source_id, chunk_size, overlap))
    report.chunks = len(chunks)
    if not chunks:
        return report
    vectors = gateway.embed([chunk.text for chunk in chunks])
    for chunk, vector in zip(chunks, vectors):
        store.add(chunk.source_id, chunk.chunk_index, chunk.text, vector)
        report.documents += 1
    return report


def load_corpus(path: str) -> list[tuple[str, str]]:
    """Load (source id, text) pairs from a directory of .txt files or a .jsonl.

    Directory: every *.txt file, sorted by name, source id = file stem.
    JSONL: one object per line with fields id (or _id), text, optional title;
    title is prepended to the text.
    """
    root = Path(path)
    if root.is_dir():
        pairs = []
        for file in sorted(root.glob("*.txt")):
            pairs.append((file.stem, file.read_text(encoding="utf-8")))
        if not pairs:
            raise ValueError(f"no .txt files under {path}")
        return pairs
    if root.suffix == ".jsonl":
        pairs = []
        with open(root, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
                doc_id = str(record.get("id") or record.get("_id") or f"doc-{lineno}")
                text = str(record.get("text", ""))
                if not text.strip():
                    raise ValueError(f"{path}:{lineno}: record has no text")
                title = str(record.get("title", "")).strip()
                if title:
                    text = f"{title}\n{text}"
                pairs.append((doc_id, text))
        if not pairs:
            raise ValueError(f"no records in {path}")
        return pairs
    raise ValueError(f"corpus path must be a directory or .jsonl file: {path}")
