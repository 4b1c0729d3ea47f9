import json

import numpy as np
import pytest

from spreadrag.errors import AmbiguousEntity, Conflict, InvalidRelation, NotFound, ParseError
from conftest import axis, unit
from spreadrag.graph_store import EntityType, GraphStore, normalize_name


def make_unit(i, dim=8):
    return axis(i % dim, dim)


def populated_store() -> GraphStore:
    """Five entities, a few descriptions, documents, relations.

    Layout: a - b - c chain plus d linked to b, e isolated.
    """
    store = GraphStore()
    ids = {}
    for key, name in [("a", "Alpha"), ("b", "Beta"), ("c", "Gamma"), ("d", "Delta"), ("e", "Echo")]:
        eid, _created = store.upsert_entity(name, EntityType.MISC)
        ids[key] = eid
    store.add_description(ids["a"], "alpha desc", axis(0))
    store.add_description(ids["b"], "beta desc", axis(1))
    store.add_description(ids["c"], "gamma desc", axis(2))
    store.add_document("src1", 0, "alpha beta text", axis(3), [ids["a"], ids["b"]])
    store.add_document("src1", 1, "gamma text", axis(4), [ids["c"]])
    store.add_relation(ids["a"], ids["b"], "knows", unit([1, 1, 0, 0, 0, 0, 0, 0]))
    store.add_relation(ids["b"], ids["c"], "likes", unit([0, 1, 1, 0, 0, 0, 0, 0]))
    store.add_relation(ids["b"], ids["d"], "sees", unit([1, 0, 1, 0, 0, 0, 0, 0]))
    return store


def test_normalize_name_collapses_whitespace_and_case():
    assert normalize_name("  Elena   MARSH ") == "elena marsh"


def test_entity_type_coerce_unknown_becomes_misc():
    assert EntityType.coerce("LOCATION") is EntityType.MISC
    assert EntityType.coerce("person") is EntityType.PERSON


class TestUpsert:
    def test_create_then_merge_by_name(self):
        store = GraphStore()
        eid, created = store.upsert_entity("Mercury", "GPE")
        assert created
        same, created_again = store.upsert_entity("  mercury ", "GPE")
        assert same == eid
        assert not created_again
        assert len(store.entities) == 1

    def test_merge_by_alias_and_alias_accumulation(self):
        store = GraphStore()
        eid, _ = store.upsert_entity("Mercury", "MISC", aliases=["Quicksilver"])
        found = store.find_entity("quicksilver")
        assert found is not None and found.id == eid
        store.upsert_entity("Quicksilver", "MISC", aliases=["Hg"])
        entity = store.entities[eid]
        assert entity.name == "Mercury"
        assert entity.aliases == ["Quicksilver", "Hg"]

    def test_merge_does_not_duplicate_known_forms(self):
        store = GraphStore()
        eid, _ = store.upsert_entity("Douro", "MISC", aliases=["The Douro"])
        store.upsert_entity("douro", "MISC", aliases=["THE DOURO", "Douro"])
        assert store.entities[eid].aliases == ["The Douro"]

    def test_ambiguous_match_raises_with_creation_order(self):
        store = GraphStore()
        first, _ = store.upsert_entity("Mercury", "MISC")
        second, _ = store.upsert_entity("Hermes", "PERSON")
        with pytest.raises(AmbiguousEntity) as excinfo:
            store.upsert_entity("Hermes", "PERSON", aliases=["Mercury"])
        assert excinfo.value.entity_ids == [first, second]
        # nothing was modified
        assert store.entities[second].aliases == []
        assert len(store.entities) == 2

    def test_empty_name_rejected(self):
        store = GraphStore()
        with pytest.raises(ValueError):
            store.upsert_entity("   ", "MISC")


class TestWrites:
    def test_description_requires_known_entity(self):
        store = GraphStore()
        with pytest.raises(NotFound):
            store.add_description("ent99", "text", axis(0))

    def test_embedding_must_be_unit_norm(self):
        store = GraphStore()
        eid, _ = store.upsert_entity("A", "MISC")
        with pytest.raises(ValueError):
            store.add_description(eid, "text", np.ones(8))

    def test_dimension_locked_after_first_vector(self):
        store = GraphStore()
        eid, _ = store.upsert_entity("A", "MISC")
        store.add_description(eid, "text", axis(0, dim=8))
        with pytest.raises(ValueError):
            store.add_description(eid, "other", axis(0, dim=4))

    def test_duplicate_document_key_conflicts(self):
        store = GraphStore()
        store.add_document("s", 0, "text", axis(0), [])
        with pytest.raises(Conflict):
            store.add_document("s", 0, "again", axis(1), [])

    def test_document_mentions_deduplicated_in_order(self):
        store = GraphStore()
        a, _ = store.upsert_entity("A", "MISC")
        b, _ = store.upsert_entity("B", "MISC")
        doc_id = store.add_document("s", 0, "text", axis(0), [b, a, b, a])
        assert store._doc_mentions[doc_id] == [b, a]

    def test_document_unknown_mention_rejected(self):
        store = GraphStore()
        with pytest.raises(NotFound):
            store.add_document("s", 0, "text", axis(0), ["ent7"])

    def test_self_relation_rejected(self):
        store = GraphStore()
        eid, _ = store.upsert_entity("A", "MISC")
        with pytest.raises(InvalidRelation):
            store.add_relation(eid, eid, "loops", axis(0))

    def test_relation_unknown_endpoint_rejected(self):
        store = GraphStore()
        eid, _ = store.upsert_entity("A", "MISC")
        with pytest.raises(NotFound):
            store.add_relation(eid, "ent42", "points", axis(0))


class TestIds:
    def test_shared_counter_interleaves_prefixes(self):
        store = GraphStore()
        e1, _ = store.upsert_entity("A", "MISC")
        d1 = store.add_description(e1, "text", axis(0))
        e2, _ = store.upsert_entity("B", "MISC")
        doc = store.add_document("s", 0, "t", axis(1), [e1])
        rel = store.add_relation(e1, e2, "r", axis(2))
        assert [e1, d1, e2, doc, rel] == ["ent1", "desc2", "ent3", "doc4", "rel5"]


class TestQueries:
    def test_top_k_orders_by_cosine(self):
        store = GraphStore()
        a, _ = store.upsert_entity("A", "MISC")
        b, _ = store.upsert_entity("B", "MISC")
        store.add_description(a, "low", unit([0.2, 1, 0, 0, 0, 0, 0, 0]))
        store.add_description(b, "high", unit([0.9, 1, 0, 0, 0, 0, 0, 0]))
        hits = store.top_k_descriptions(axis(0), k=2)
        assert [h[1] for h in hits] == [b, a]
        assert hits[0][2] > hits[1][2]

    def test_top_k_tie_keeps_insertion_order(self):
        store = GraphStore()
        a, _ = store.upsert_entity("A", "MISC")
        b, _ = store.upsert_entity("B", "MISC")
        first = store.add_description(a, "same", axis(0))
        second = store.add_description(b, "same", axis(0))
        hits = store.top_k_descriptions(axis(0), k=2)
        assert [h[0] for h in hits] == [first, second]

    def test_top_k_rejects_bad_k(self):
        with pytest.raises(ValueError):
            GraphStore().top_k_descriptions(axis(0), k=0)

    def test_neighborhood_radius_zero_is_seeds_only(self):
        store = populated_store()
        sub = store.neighborhood(["ent1"], 0)
        assert sub.entities == {"ent1"}
        assert sub.links == []

    def test_neighborhood_expands_per_hop(self):
        store = populated_store()
        one_hop = store.neighborhood(["ent1"], 1)
        assert one_hop.entities == {"ent1", "ent2"}
        two_hop = store.neighborhood(["ent1"], 2)
        names = {store.entities[e].name for e in two_hop.entities}
        assert names == {"Alpha", "Beta", "Gamma", "Delta"}

    def test_neighborhood_includes_links_between_reached_entities(self):
        store = populated_store()
        sub = store.neighborhood(["ent1"], 2)
        texts = sorted(l.relation_text for l in sub.links)
        assert texts == ["knows", "likes", "sees"]

    def test_neighborhood_skips_unknown_seeds(self):
        store = populated_store()
        sub = store.neighborhood(["ent1", "ghost"], 1)
        assert sub.skipped_seeds == 1
        assert "ent1" in sub.entities

    def test_adjacency_lists_both_directions(self):
        store = populated_store()
        sub = store.neighborhood(["ent1"], 1)
        adj = sub.adjacency()
        assert {t for t, _w, _l in adj["ent1"]} == {"ent2"}
        assert {t for t, _w, _l in adj["ent2"]} == {"ent1"}

    def test_documents_for_entities_in_insertion_order(self):
        store = populated_store()
        docs = store.documents_for_entities(["ent3", "ent1"])
        assert [d.source_id + str(d.chunk_index) for d in docs] == ["src10", "src11"]

    def test_validate_clean_store(self):
        assert populated_store().validate() == []


class TestSnapshot:
    def test_round_trip_preserves_everything(self, tmp_path):
        store = populated_store()
        path = tmp_path / "graph.jsonl"
        store.save(str(path))
        loaded = GraphStore.load(str(path))
        assert loaded.counts() == store.counts()
        assert set(loaded.entities) == set(store.entities)
        for eid, entity in store.entities.items():
            other = loaded.entities[eid]
            assert (other.name, other.entity_type, other.aliases) == (
                entity.name,
                entity.entity_type,
                entity.aliases,
            )
        for did, doc in store.documents.items():
            assert np.array_equal(loaded.documents[did].embedding, doc.embedding)
        assert loaded.describes_links() == store.describes_links()
        for doc_id in store._doc_mentions:
            assert loaded._doc_mentions[doc_id] == store._doc_mentions[doc_id]

    def test_save_twice_is_byte_identical(self, tmp_path):
        store = populated_store()
        p1, p2 = tmp_path / "one.jsonl", tmp_path / "two.jsonl"
        store.save(str(p1))
        store.save(str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_counter_resumes_after_load(self, tmp_path):
        store = populated_store()
        path = tmp_path / "graph.jsonl"
        store.save(str(path))
        loaded = GraphStore.load(str(path))
        eid, _ = loaded.upsert_entity("Fresh", "MISC")
        assert eid not in store.entities

    def test_load_reports_line_number_on_bad_json(self, tmp_path):
        store = populated_store()
        path = tmp_path / "graph.jsonl"
        store.save(str(path))
        lines = path.read_text().splitlines()
        lines[2] = "{not json"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError) as excinfo:
            GraphStore.load(str(path))
        assert "line 3" in str(excinfo.value)

    def test_load_rejects_unknown_record_type(self, tmp_path):
        store = populated_store()
        path = tmp_path / "graph.jsonl"
        store.save(str(path))
        lines = path.read_text().splitlines()
        lines.insert(1, json.dumps({"type": "mystery"}))
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError):
            GraphStore.load(str(path))

    def test_load_detects_truncation(self, tmp_path):
        store = populated_store()
        path = tmp_path / "graph.jsonl"
        store.save(str(path))
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(ParseError) as excinfo:
            GraphStore.load(str(path))
        assert "truncated" in str(excinfo.value)

    def test_load_requires_header_first(self, tmp_path):
        path = tmp_path / "graph.jsonl"
        path.write_text(json.dumps({"type": "entity", "id": "ent1"}) + "\n")
        with pytest.raises(ParseError):
            GraphStore.load(str(path))
