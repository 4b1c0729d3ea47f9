"""Persistent text-attributed knowledge graph.

Node kinds: entities, entity descriptions, documents (text chunks).
Link kinds: describes (document/description -> entity) and related_to
(entity -> entity, carrying the relation text and its embedding).

Entity resolution is case-insensitive exact matching on names and aliases
after trimming and whitespace collapse; no fuzzy matching.  The snapshot
format is line-delimited JSON records, UTF-8, one self-describing record
per line.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import AmbiguousEntity, Conflict, InvalidRelation, NotFound, ParseError
from .gateway import NORM_TOLERANCE

logger = logging.getLogger(__name__)

SNAPSHOT_FORMAT = "spreadrag-graph"
SNAPSHOT_VERSION = 1


class EntityType(str, Enum):
    PERSON = "PERSON"
    ORGANIZATION = "ORGANIZATION"
    GPE = "GPE"
    MISC = "MISC"

    @classmethod
    def coerce(cls, value: str | "EntityType") -> "EntityType":
        """Map a raw type string onto the four-way enum; unknown -> MISC."""
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            return cls.MISC


def normalize_name(name: str) -> str:
    """Trim, collapse internal whitespace, lowercase."""
    return " ".join(name.split()).lower()


@dataclass
class EntityNode:
    id: str
    name: str
    entity_type: EntityType
    aliases: list[str] = field(default_factory=list)


@dataclass
class DescriptionNode:
    id: str
    entity_id: str
    text: str
    embedding: np.ndarray


@dataclass
class DocumentNode:
    id: str
    source_id: str
    chunk_index: int
    text: str
    embedding: np.ndarray


@dataclass
class RelatedToLink:
    id: str
    source_entity_id: str
    target_entity_id: str
    relation_text: str
    embedding: np.ndarray


@dataclass(frozen=True)
class DescribesLink:
    from_id: str
    entity_id: str


@dataclass
class Subgraph:
    """Query-time working set: entities, their relation links, and seeds.

    ``seeds`` maps entity id to the best seed-description cosine (1.0 when
    marked without a score).  ``weights`` maps link id to the rescaled arc
    weight and ``raw_weights`` to the pre-rescale query cosine; each link
    yields arcs in both directions with equal weight.
    """

    entities: set[str] = field(default_factory=set)
    links: list[RelatedToLink] = field(default_factory=list)
    seeds: dict[str, float] = field(default_factory=dict)
    weights: dict[str, float] = field(default_factory=dict)
    raw_weights: dict[str, float] = field(default_factory=dict)
    skipped_seeds: int = 0

    @property
    def is_empty(self) -> bool:
        return not self.entities

    def adjacency(self) -> dict[str, list[tuple[str, float, str]]]:
        """Outgoing weighted arcs per entity; every entity gets a key.

        Links with no recorded weight contribute zero-weight arcs.
        """
        adj: dict[str, list[tuple[str, float, str]]] = {e: [] for e in self.entities}
        for link in self.links:
            weight = self.weights.get(link.id, 0.0)
            adj[link.source_entity_id].append((link.target_entity_id, weight, link.id))
            adj[link.target_entity_id].append((link.source_entity_id, weight, link.id))
        return adj


def _check_embedding(embedding, dim: int | None) -> np.ndarray:
    vec = np.asarray(embedding, dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError(f"embedding must be a vector, got shape {vec.shape}")
    if dim is not None and vec.shape[0] != dim:
        raise ValueError(f"embedding dimension {vec.shape[0]} != store dimension {dim}")
    norm = float(np.linalg.norm(vec))
    if abs(norm - 1.0) > NORM_TOLERANCE:
        raise ValueError(f"embedding must be unit-norm, got ||v||={norm:.6g}")
    return vec


class GraphStore:
    """In-memory knowledge graph with a line-delimited snapshot format.

    Write operations are meant to be called from a single indexing thread;
    query operations are read-only and safe to run concurrently.
    """

    def __init__(self):
        self.entities: dict[str, EntityNode] = {}
        self.descriptions: dict[str, DescriptionNode] = {}
        self.documents: dict[str, DocumentNode] = {}
        self.relations: dict[str, RelatedToLink] = {}
        self.dim: int | None = None
        self._counter = 0
        # normalized name/alias -> entity id
        self._name_index: dict[str, str] = {}
        self._doc_keys: dict[tuple[str, int], str] = {}
        self._entity_descriptions: dict[str, list[str]] = {}
        self._entity_documents: dict[str, list[str]] = {}
        self._entity_relations: dict[str, list[str]] = {}
        self._doc_mentions: dict[str, list[str]] = {}
        self._describes: set[DescribesLink] = set()

    # -- id allocation ----------------------------------------------------

    def _next_id(self, prefix: str) -> str:
        self._counter += 1
        return f"{prefix}{self._counter}"

    # -- write operations --------------------------------------------------

    def upsert_entity(
        self, name: str, entity_type: EntityType | str, aliases: list[str] | None = None
    ) -> tuple[str, bool]:
        """Create or merge an entity, keyed by normalized name/alias overlap.

        Returns (entity id, created flag).  When the incoming name/alias set
        matches several distinct entities, raises AmbiguousEntity carrying
        the matches in creation order; nothing is modified in that case.
        """
        if not name or not name.strip():
            raise ValueError("entity name must be non-empty")
        aliases = aliases or []
        forms = [normalize_name(name)] + [normalize_name(a) for a in aliases if a.strip()]
        matched: list[str] = []
        for form in forms:
            hit = self._name_index.get(form)
            if hit is not None and hit not in matched:
                matched.append(hit)
        if len(matched) > 1:
            creation_order = {eid: i for i, eid in enumerate(self.entities)}
            matched.sort(key=creation_order.__getitem__)
            raise AmbiguousEntity(
                f"name/aliases of {name!r} match {len(matched)} distinct entities",
                entity_ids=matched,
            )
        if matched:
            entity = self.entities[matched[0]]
            self._merge_aliases(entity, [name] + aliases)
            return entity.id, False
        entity = EntityNode(
            id=self._next_id("ent"),
            name=" ".join(name.split()),
            entity_type=EntityType.coerce(entity_type),
        )
        self.entities[entity.id] = entity
        self._name_index[normalize_name(entity.name)] = entity.id
        self._entity_descriptions[entity.id] = []
        self._entity_documents[entity.id] = []
        self._entity_relations[entity.id] = []
        self._merge_aliases(entity, aliases)
        return entity.id, True

    def _merge_aliases(self, entity: EntityNode, candidates: list[str]):
        known = {normalize_name(entity.name)}
        known.update(normalize_name(a) for a in entity.aliases)
        for raw in candidates:
            cleaned = " ".join(raw.split())
            if not cleaned:
                continue
            form = normalize_name(cleaned)
            if form in known:
                continue
            entity.aliases.append(cleaned)
            known.add(form)
            self._name_index[form] = entity.id

    def add_description(self, entity_id: str, text: str, embedding) -> str:
        if entity_id not in self.entities:
            raise NotFound(f"unknown entity id {entity_id!r}")
        if not text:
            raise ValueError("description text must be non-empty")
        vec = _check_embedding(embedding, self.dim)
        self.dim = self.dim or vec.shape[0]
        node = DescriptionNode(id=self._next_id("desc"), entity_id=entity_id, text=text, embedding=vec)
        self.descriptions[node.id] = node
        self._entity_descriptions[entity_id].append(node.id)
        self._describes.add(DescribesLink(from_id=node.id, entity_id=entity_id))
        return node.id

    def add_document(
        self,
        source_id: str,
        chunk_index: int,
        text: str,
        embedding,
        mentioned_entity_ids: list[str] | None = None,
    ) -> str:
        key = (source_id, int(chunk_index))
        if key in self._doc_keys:
            raise Conflict(f"document ({source_id!r}, {chunk_index}) already stored")
        mentions = list(dict.fromkeys(mentioned_entity_ids or []))
        for eid in mentions:
            if eid not in self.entities:
                raise NotFound(f"unknown entity id {eid!r} in mention list")
        vec = _check_embedding(embedding, self.dim)
        self.dim = self.dim or vec.shape[0]
        node = DocumentNode(
            id=self._next_id("doc"),
            source_id=source_id,
            chunk_index=int(chunk_index),
            text=text,
            embedding=vec,
        )
        self.documents[node.id] = node
        self._doc_keys[key] = node.id
        self._doc_mentions[node.id] = mentions
        for eid in mentions:
            self._entity_documents[eid].append(node.id)
            self._describes.add(DescribesLink(from_id=node.id, entity_id=eid))
        return node.id

    def add_relation(
        self, source_entity_id: str, target_entity_id: str, relation_text: str, embedding
    ) -> str:
        for eid in (source_entity_id, target_entity_id):
            if eid not in self.entities:
                raise NotFound(f"unknown entity id {eid!r}")
        if source_entity_id == target_entity_id:
            raise InvalidRelation(f"self-relation on {source_entity_id!r}")
        if not relation_text:
            raise ValueError("relation text must be non-empty")
        vec = _check_embedding(embedding, self.dim)
        self.dim = self.dim or vec.shape[0]
        link = RelatedToLink(
            id=self._next_id("rel"),
            source_entity_id=source_entity_id,
            target_entity_id=target_entity_id,
            relation_text=relation_text,
            embedding=vec,
        )
        self.relations[link.id] = link
        self._entity_relations[source_entity_id].append(link.id)
        self._entity_relations[target_entity_id].append(link.id)
        return link.id

    # -- query operations ---------------------------------------------------

    def find_entity(self, name: str) -> EntityNode | None:
        eid = self._name_index.get(normalize_name(name))
        return self.entities.get(eid) if eid else None

    def top_k_descriptions(self, query_embedding, k: int) -> list[tuple[str, str, float]]:
        """Highest-cosine descriptions, stable on ties by insertion order."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self.descriptions:
            return []
        query = _check_embedding(query_embedding, self.dim)
        ids = list(self.descriptions)
        matrix = np.stack([self.descriptions[i].embedding for i in ids])
        scores = matrix @ query
        order = np.argsort(-scores, kind="stable")[:k]
        return [
            (ids[i], self.descriptions[ids[i]].entity_id, float(scores[i])) for i in order
        ]

    def neighborhood(self, seed_entity_ids: list[str], n: int) -> Subgraph:
        """Entities within n hops of the seeds, links traversed undirected.

        Unknown seed ids are skipped (counted on the returned subgraph).
        Includes every related_to link whose endpoints both fall in the
        reached entity set.
        """
        if n < 0:
            raise ValueError("hop radius must be >= 0")
        seeds = []
        skipped = 0
        for sid in seed_entity_ids:
            if sid in self.entities:
                if sid not in seeds:
                    seeds.append(sid)
            else:
                skipped += 1
        if skipped:
            logger.warning("neighborhood: skipped %d unknown seed id(s)", skipped)
        reached: dict[str, int] = {sid: 0 for sid in seeds}
        queue = deque(seeds)
        while queue:
            current = queue.popleft()
            depth = reached[current]
            if depth == n:
                continue
            for link_id in self._entity_relations[current]:
                link = self.relations[link_id]
                other = (
                    link.target_entity_id
                    if link.source_entity_id == current
                    else link.source_entity_id
                )
                if other not in reached:
                    reached[other] = depth + 1
                    queue.append(other)
        entity_set = set(reached)
        links = [
            self.relations[lid]
            for lid in self.relations
            if self.relations[lid].source_entity_id in entity_set
            and self.relations[lid].target_entity_id in entity_set
        ]
        return Subgraph(
            entities=entity_set,
            links=links,
            seeds={sid: 1.0 for sid in seeds},
            skipped_seeds=skipped,
        )

    def documents_for_entities(self, entity_ids) -> list[DocumentNode]:
        """Documents with a describes link to any given entity, deduplicated."""
        wanted = set()
        for eid in entity_ids:
            wanted.update(self._entity_documents.get(eid, []))
        return [self.documents[did] for did in self.documents if did in wanted]

    def descriptions_for_entity(self, entity_id: str) -> list[DescriptionNode]:
        return [self.descriptions[d] for d in self._entity_descriptions.get(entity_id, [])]

    def describes_links(self) -> set[DescribesLink]:
        return set(self._describes)

    def counts(self) -> dict[str, int]:
        return {
            "entities": len(self.entities),
            "descriptions": len(self.descriptions),
            "documents": len(self.documents),
            "relations": len(self.relations),
            "describes": len(self._describes),
        }

    def validate(self) -> list[str]:
        """Full-scan referential integrity check; returns violation messages."""
        problems = []
        for desc in self.descriptions.values():
            if desc.entity_id not in self.entities:
                problems.append(f"description {desc.id} references missing entity {desc.entity_id}")
        for link in self.relations.values():
            for eid in (link.source_entity_id, link.target_entity_id):
                if eid not in self.entities:
                    problems.append(f"relation {link.id} references missing entity {eid}")
        for describes in self._describes:
            if describes.entity_id not in self.entities:
                problems.append(f"describes link from {describes.from_id} references missing entity")
            if describes.from_id not in self.documents and describes.from_id not in self.descriptions:
                problems.append(f"describes link references missing node {describes.from_id}")
        return problems

    # -- persistence ---------------------------------------------------------

    def save(self, path: str):
        """Write the snapshot: one JSON record per line, header first."""
        with open(path, "w", encoding="utf-8") as handle:
            header = {
                "type": "header",
                "format": SNAPSHOT_FORMAT,
                "version": SNAPSHOT_VERSION,
                "dim": self.dim,
                "counter": self._counter,
            }
            handle.write(json.dumps(header) + "\n")
            for entity in self.entities.values():
                handle.write(
                    json.dumps(
                        {
                            "type": "entity",
                            "id": entity.id,
                            "name": entity.name,
                            "entity_type": entity.entity_type.value,
                            "aliases": entity.aliases,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
            for desc in self.descriptions.values():
                handle.write(
                    json.dumps(
                        {
                            "type": "description",
                            "id": desc.id,
                            "entity_id": desc.entity_id,
                            "text": desc.text,
                            "embedding": desc.embedding.tolist(),
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
            for doc in self.documents.values():
                mentions = self._doc_mentions.get(doc.id, [])
                handle.write(
                    json.dumps(
                        {
                            "type": "document",
                            "id": doc.id,
                            "source_id": doc.source_id,
                            "chunk_index": doc.chunk_index,
                            "text": doc.text,
                            "embedding": doc.embedding.tolist(),
                            "mentions": mentions,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
            for link in self.relations.values():
                handle.write(
                    json.dumps(
                        {
                            "type": "relation",
                            "id": link.id,
                            "source": link.source_entity_id,
                            "target": link.target_entity_id,
                            "relation_text": link.relation_text,
                            "embedding": link.embedding.tolist(),
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
            handle.write(json.dumps({"type": "trailer", "counts": self.counts()}) + "\n")

    @classmethod
    def load(cls, path: str) -> "GraphStore":
        """Rebuild a store from a snapshot; corrupt input raises ParseError."""
        store = cls()
        saw_header = False
        saw_trailer = False
        trailer_counts: dict | None = None
        lineno = 0
        with open(path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"invalid JSON record: {exc.msg}", line=lineno) from exc
                kind = record.get("type")
                try:
                    if kind == "header":
                        if record.get("format") != SNAPSHOT_FORMAT:
                            raise ParseError(
                                f"unexpected snapshot format {record.get('format')!r}", line=lineno
                            )
                        store.dim = record.get("dim")
                        store._counter = int(record.get("counter", 0))
                        saw_header = True
                    elif kind == "entity":
                        entity = EntityNode(
                            id=record["id"],
                            name=record["name"],
                            entity_type=EntityType.coerce(record["entity_type"]),
                            aliases=list(record["aliases"]),
                        )
                        store.entities[entity.id] = entity
                        store._name_index[normalize_name(entity.name)] = entity.id
                        for alias in entity.aliases:
                            store._name_index[normalize_name(alias)] = entity.id
                        store._entity_descriptions[entity.id] = []
                        store._entity_documents[entity.id] = []
                        store._entity_relations[entity.id] = []
                    elif kind == "description":
                        node = DescriptionNode(
                            id=record["id"],
                            entity_id=record["entity_id"],
                            text=record["text"],
                            embedding=np.asarray(record["embedding"], dtype=np.float64),
                        )
                        store.descriptions[node.id] = node
                        store._entity_descriptions[node.entity_id].append(node.id)
                        store._describes.add(DescribesLink(node.id, node.entity_id))
                    elif kind == "document":
                        node = DocumentNode(
                            id=record["id"],
                            source_id=record["source_id"],
                            chunk_index=int(record["chunk_index"]),
                            text=record["text"],
                            embedding=np.asarray(record["embedding"], dtype=np.float64),
                        )
                        store.documents[node.id] = node
                        store._doc_keys[(node.source_id, node.chunk_index)] = node.id
                        store._doc_mentions[node.id] = list(record["mentions"])
                        for eid in record["mentions"]:
                            store._entity_documents[eid].append(node.id)
                            store._describes.add(DescribesLink(node.id, eid))
                    elif kind == "relation":
                        link = RelatedToLink(
                            id=record["id"],
                            source_entity_id=record["source"],
                            target_entity_id=record["target"],
                            relation_text=record["relation_text"],
                            embedding=np.asarray(record["embedding"], dtype=np.float64),
                        )
                        store.relations[link.id] = link
                        store._entity_relations[link.source_entity_id].append(link.id)
                        store._entity_relations[link.target_entity_id].append(link.id)
                    elif kind == "trailer":
                        saw_trailer = True
                        trailer_counts = record.get("counts")
                    else:
                        raise ParseError(f"unknown record type {kind!r}", line=lineno)
                except ParseError:
                    raise
                except (KeyError, TypeError, ValueError) as exc:
                    raise ParseError(f"malformed {kind!r} record: {exc}", line=lineno) from exc
            if not saw_header:
                raise ParseError("missing snapshot header", line=max(lineno, 1))
            if not saw_trailer:
                raise ParseError("missing snapshot trailer (truncated file?)", line=max(lineno, 1))
            if trailer_counts is not None and trailer_counts != store.counts():
                raise ParseError(
                    f"trailer counts {trailer_counts} do not match records {store.counts()}",
                    line=lineno,
                )
        # resume id allocation past everything in the snapshot
        suffixes = [
            int("".join(ch for ch in node_id if ch.isdigit()) or 0)
            for node_id in (
                list(store.entities)
                + list(store.descriptions)
                + list(store.documents)
                + list(store.relations)
            )
        ]
        store._counter = max(suffixes + [store._counter], default=0)
        return store
