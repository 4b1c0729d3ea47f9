import json
from types import SimpleNamespace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from spreadrag.evalkit import (
    EvalReport,
    EvalRecord,
    QAItem,
    best_scores,
    exact_match,
    f1_score,
    format_report_table,
    load_dataset,
    normalize_answer,
    run_eval,
    sample_items,
)


class TestNormalization:
    def test_strips_articles_punctuation_case(self):
        assert normalize_answer("The Eiffel Tower.") == "eiffel tower"

    def test_collapses_whitespace(self):
        assert normalize_answer("  a   b\tc ") == "b c"

    def test_interior_articles_removed(self):
        assert normalize_answer("king of the hill") == "king of hill"

    def test_article_prefix_of_word_kept(self):
        assert normalize_answer("theory of anarchy") == "theory of anarchy"


class TestScores:
    def test_exact_match_after_normalization(self):
        assert exact_match("The  Douro!", "douro") == 1.0
        assert exact_match("Douro river", "douro") == 0.0

    def test_f1_partial_overlap(self):
        assert f1_score("New York City", "New York") == pytest.approx(0.8, abs=1e-9)

    def test_f1_counts_repeated_tokens_per_occurrence(self):
        assert f1_score("blue blue sky", "blue sky") == pytest.approx(0.8, abs=1e-9)

    def test_f1_empty_cases(self):
        assert f1_score("the", "a") == 1.0
        assert f1_score("word", "the") == 0.0
        assert f1_score("the", "word") == 0.0

    def test_f1_disjoint_is_zero(self):
        assert f1_score("alpha beta", "gamma delta") == 0.0

    def test_best_scores_takes_max_over_golds(self):
        em, f1 = best_scores("The Douro", ["Duero", "Douro"])
        assert em == 1.0
        assert f1 == 1.0

    def test_best_scores_requires_golds(self):
        with pytest.raises(ValueError):
            best_scores("x", [])

    @given(st.text(min_size=1, max_size=40))
    def test_em_implies_perfect_f1(self, text):
        gold = text
        if exact_match(text, gold) == 1.0 and normalize_answer(text):
            assert f1_score(text, gold) == 1.0


class TestDataset:
    def write(self, tmp_path, rows):
        path = tmp_path / "data.jsonl"
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        return str(path)

    def test_loads_items_with_alias_fallbacks(self, tmp_path):
        path = self.write(
            tmp_path,
            [
                {"id": "a", "question": "q1", "answer": "x", "answer_aliases": ["y"]},
                {"_id": "b", "question": "q2", "answer": "z", "aliases": ["w"]},
                {"question": "q3", "answer": "v"},
            ],
        )
        items = load_dataset(path)
        assert [i.id for i in items] == ["a", "b", "item-3"]
        assert items[0].golds() == ["x", "y"]
        assert items[1].aliases == ["w"]

    def test_missing_answer_reports_line(self, tmp_path):
        path = self.write(tmp_path, [{"question": "q1", "answer": "a"}, {"question": "q2"}])
        with pytest.raises(ValueError) as excinfo:
            load_dataset(path)
        assert ":2" in str(excinfo.value)

    def test_invalid_json_reports_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"question": "q", "answer": "a"}\nnot json\n')
        with pytest.raises(ValueError) as excinfo:
            load_dataset(str(path))
        assert ":2" in str(excinfo.value)

    def test_sampling_is_seeded(self):
        items = [QAItem(id=str(i), question="q", answer="a") for i in range(20)]
        first = sample_items(items, 5, seed=17)
        second = sample_items(items, 5, seed=17)
        different = sample_items(items, 5, seed=18)
        assert [i.id for i in first] == [i.id for i in second]
        assert [i.id for i in first] != [i.id for i in different]

    def test_sample_covering_size_keeps_order(self):
        items = [QAItem(id=str(i), question="q", answer="a") for i in range(4)]
        assert sample_items(items, 10, seed=1) == items


def fake_answer_fn(question: str):
    by_question = {
        "q1": ("right", False),
        "q2": ("wrong answer", False),
        "q3": ("Insufficient Information", True),
    }
    text, insufficient = by_question[question]
    return SimpleNamespace(text=text, insufficient=insufficient)


class TestRunEval:
    items = [
        QAItem(id="1", question="q1", answer="right"),
        QAItem(id="2", question="q2", answer="expected"),
        QAItem(id="3", question="q3", answer="whatever"),
    ]

    def test_report_aggregates(self):
        report = run_eval(fake_answer_fn, self.items, pipeline="naive", dataset="unit")
        assert report.n == 3
        assert report.correct == 1
        assert report.em_mean == pytest.approx(1 / 3)
        assert report.insufficient_count == 1
        assert 0.0 <= report.f1_mean <= 1.0

    def test_records_stream_to_jsonl(self, tmp_path):
        records_path = tmp_path / "records.jsonl"
        run_eval(
            fake_answer_fn,
            self.items,
            pipeline="naive",
            dataset="unit",
            records_path=str(records_path),
        )
        rows = [json.loads(line) for line in records_path.read_text().splitlines()]
        assert len(rows) == 3
        assert rows[0]["item_id"] == "1"
        assert rows[0]["em"] == 1.0
        assert set(rows[0]) == {
            "item_id",
            "question",
            "gold",
            "aliases",
            "predicted",
            "em",
            "f1",
            "insufficient",
            "latency_s",
        }

    def test_empty_items_give_degenerate_report(self):
        report = run_eval(fake_answer_fn, [], pipeline="naive")
        assert report.n == 0
        assert report.em_mean == 0.0


def test_report_table_formatting():
    record = EvalRecord(
        item_id="1",
        question="q",
        gold="g",
        aliases=[],
        predicted="g",
        em=1.0,
        f1=1.0,
        insufficient=False,
        latency_s=0.01,
    )
    report = EvalReport(pipeline="sa-cot", dataset="musique", records=[record])
    table = format_report_table([report])
    lines = table.splitlines()
    assert lines[0].startswith("Pipeline")
    assert any("sa-cot" in line and "musique" in line and "1.00" in line for line in lines)
