"""Graph retrieval: seed selection, activation spreading, context assembly.

The retrieval pass works in four stages.  Seed entities come from a top-k
cosine search over entity descriptions.  Their n-hop neighborhood is pulled
from the graph with every relation link weighted by the query/link cosine,
linearly rescaled so that weights below the cut point c contribute nothing.
Activation then spreads from each seed in turn over the weighted arcs, and
entities whose final activation exceeds tau_a select the documents and
relation sentences that form the model context.

The spreading pass is deliberately order-dependent: seeds run in descending
seed-score order (ties by entity id) and each pass visits nodes in FIFO
order.  Tests pin this behavior; do not "fix" it to be order-free.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .gateway import cosine
from .graph_store import GraphStore, Subgraph

logger = logging.getLogger(__name__)

PRESETS = {
    "musique": {"k": 3, "n": 4},
    "twowiki": {"k": 10, "n": 3},
}


@dataclass
class RetrievalConfig:
    """Knobs for the graph retrieval pass.

    k: seed descriptions fetched per query.
    n: hop radius around the seeds.
    c: rescale cut point; raw cosines at or below c get weight 0.
    tau_a: activation threshold (strict) for an entity to count as activated.
    tau_d: document cosine threshold (inclusive) for context inclusion.
    tau_r: raw link cosine threshold (strict) for relation inclusion.
    """

    k: int = 3
    n: int = 4
    c: float = 0.4
    tau_a: float = 0.5
    tau_d: float = 0.45
    tau_r: float = 0.5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if not 0.0 <= self.c < 1.0:
            raise ValueError("c must be in [0, 1)")
        for name in ("tau_a", "tau_d", "tau_r"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")

    @classmethod
    def preset(cls, name: str, **overrides) -> "RetrievalConfig":
        if name not in PRESETS:
            raise KeyError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
        params = dict(PRESETS[name])
        params.update(overrides)
        return cls(**params)


def rescale_weight(raw: float, c: float) -> float:
    """Map a raw cosine onto [0, 1] with everything at or below c squashed to 0.

    Applies w' = (w - c) / (1 - c), then clamps to [0, 1].
    """
    if not 0.0 <= c < 1.0:
        raise ValueError("c must be in [0, 1)")
    return min(1.0, max(0.0, (raw - c) / (1.0 - c)))


def fetch_subgraph(store: GraphStore, query_embedding, config: RetrievalConfig) -> Subgraph:
    """Seed entities by description similarity and pull their neighborhood.

    Seed score is the entity's best description cosine.  Every link in the
    neighborhood gets a raw query cosine and its rescaled weight.
    """
    hits = store.top_k_descriptions(query_embedding, config.k)
    seeds: dict[str, float] = {}
    for _desc_id, entity_id, score in hits:
        if entity_id not in seeds:
            seeds[entity_id] = score
    subgraph = store.neighborhood(list(seeds), config.n)
    subgraph.seeds = seeds
    if subgraph.links:
        query = np.asarray(query_embedding, dtype=np.float64)
        matrix = np.stack([link.embedding for link in subgraph.links])
        raw_scores = matrix @ query
        for link, raw in zip(subgraph.links, raw_scores):
            subgraph.raw_weights[link.id] = float(raw)
            subgraph.weights[link.id] = rescale_weight(float(raw), config.c)
    return subgraph


@dataclass
class ActivationState:
    values: dict[str, float]
    activated: set[str]
    seed_order: list[str]

    def activated_in_order(self) -> list[str]:
        """Activated entities, highest final value first, ties by id."""
        return sorted(self.activated, key=lambda e: (-self.values[e], e))


def spread_activation(subgraph: Subgraph, tau_a: float) -> ActivationState:
    """Run one activation pass per seed and threshold the final values.

    All activation values start at zero.  Seeds run in descending seed-score
    order with ties broken by entity id.  Each pass sets the seed's value to
    exactly 1, then walks the subgraph breadth-first with a per-pass visited
    set: popping an already-visited node is a no-op, every outgoing arc adds
    weight * value(node) to the target (saturating at 1), and unvisited
    targets are enqueued.  Entities finishing strictly above tau_a are
    activated.
    """
    if not 0.0 <= tau_a <= 1.0:
        raise ValueError("tau_a must be in [0, 1]")
    adjacency = subgraph.adjacency()
    values = {entity: 0.0 for entity in subgraph.entities}
    seed_order = sorted(
        (s for s in subgraph.seeds if s in values),
        key=lambda entity: (-subgraph.seeds[entity], entity),
    )
    for seed in seed_order:
        values[seed] = 1.0
        visited: set[str] = set()
        queue: deque[str] = deque([seed])
        while queue:
            node = queue.popleft()
            if node in visited:
                continue
            visited.add(node)
            for target, weight, _link_id in adjacency[node]:
                values[target] = min(1.0, values[target] + weight * values[node])
                if target not in visited:
                    queue.append(target)
    activated = {entity for entity, value in values.items() if value > tau_a}
    return ActivationState(values=values, activated=activated, seed_order=seed_order)


@dataclass
class ContextDocument:
    doc_id: str
    source_id: str
    chunk_index: int
    text: str
    score: float


@dataclass
class ContextRelation:
    link_id: str
    text: str
    raw_score: float
    weight: float


@dataclass
class Context:
    documents: list[ContextDocument] = field(default_factory=list)
    relations: list[ContextRelation] = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not self.documents and not self.relations


def assemble_context(
    store: GraphStore,
    subgraph: Subgraph,
    state: ActivationState,
    query_embedding,
    config: RetrievalConfig,
) -> Context:
    """Select documents and relation sentences for the activated entities.

    Documents describing any activated entity qualify when their query
    cosine is at least tau_d; they are ordered by descending cosine.
    Relation links qualify when both endpoints are activated and the raw
    (pre-rescale) link cosine strictly exceeds tau_r; they render as
    "<subject name> <relation text> <object name>", deduplicated, in
    descending raw-cosine order.
    """
    query = np.asarray(query_embedding, dtype=np.float64)
    documents = []
    for doc in store.documents_for_entities(state.activated):
        score = cosine(doc.embedding, query)
        if score >= config.tau_d:
            documents.append(
                ContextDocument(
                    doc_id=doc.id,
                    source_id=doc.source_id,
                    chunk_index=doc.chunk_index,
                    text=doc.text,
                    score=score,
                )
            )
    documents.sort(key=lambda d: -d.score)

    relations = []
    seen_texts: set[str] = set()
    candidates = []
    for link in subgraph.links:
        if link.source_entity_id not in state.activated:
            continue
        if link.target_entity_id not in state.activated:
            continue
        raw = subgraph.raw_weights.get(link.id)
        if raw is None:
            raw = cosine(link.embedding, query)
        if raw > config.tau_r:
            candidates.append((link, raw))
    candidates.sort(key=lambda pair: -pair[1])
    for link, raw in candidates:
        subject = store.entities[link.source_entity_id].name
        obj = store.entities[link.target_entity_id].name
        text = f"{subject} {link.relation_text} {obj}"
        if text in seen_texts:
            continue
        seen_texts.add(text)
        relations.append(
            ContextRelation(
                link_id=link.id,
                text=text,
                raw_score=raw,
                weight=subgraph.weights.get(link.id, 0.0),
            )
        )
    return Context(documents=documents, relations=relations)


def export_activation_dot(
    store: GraphStore,
    subgraph: Subgraph,
    state: ActivationState,
    golden_entity_ids: set[str] | None = None,
) -> str:
    """Render the subgraph as Graphviz DOT with activation coloring.

    Color code: activated and golden nodes are pink, golden-only yellow,
    activated-only red, everything else light blue.  Golden nodes are the
    entities a caller marks as expected supporting evidence.
    """
    golden = golden_entity_ids or set()

    def color(entity_id: str) -> str:
        activated = entity_id in state.activated
        is_golden = entity_id in golden
        if activated and is_golden:
            return "pink"
        if is_golden:
            return "yellow"
        if activated:
            return "red"
        return "lightblue"

    def esc(text: str) -> str:
        return text.replace("\\", "\\\\").replace('"', '\\"')

    lines = ["graph activation {", "  node [style=filled];"]
    for entity_id in sorted(subgraph.entities):
        name = store.entities[entity_id].name if entity_id in store.entities else entity_id
        value = state.values.get(entity_id, 0.0)
        lines.append(
            f'  "{esc(entity_id)}" [label="{esc(name)}\\n{value:.3f}", '
            f"fillcolor={color(entity_id)}];"
        )
    for link in sorted(subgraph.links, key=lambda l: l.id):
        weight = subgraph.weights.get(link.id, 0.0)
        lines.append(
            f'  "{esc(link.source_entity_id)}" -- "{esc(link.target_entity_id)}" '
            f'[label="{esc(link.relation_text)} ({weight:.2f})"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"
