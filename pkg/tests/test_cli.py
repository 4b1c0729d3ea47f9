import json

import pytest

from spreadrag.cli import main
from spreadrag.graph_store import GraphStore

QUESTION = "In which country is the company founded by Elena Marsh headquartered?"


@pytest.fixture(scope="module")
def stores(tmp_path_factory):
    """Index the tiny corpus once per module, both store kinds."""
    root = tmp_path_factory.mktemp("stores")
    fixtures = __file__.rsplit("/", 1)[0] + "/fixtures"
    mock = f"{fixtures}/golden_fixture.json"
    corpus = f"{fixtures}/golden_corpus.jsonl"
    graph = str(root / "graph.jsonl")
    chunks = str(root / "chunks.jsonl")
    assert main(["index", "--corpus", corpus, "--store", graph, "--mode", "graph", "--mock", mock]) == 0
    assert main(["index", "--corpus", corpus, "--store", chunks, "--mode", "chunks", "--mock", mock]) == 0
    return {"mock": mock, "corpus": corpus, "graph": graph, "chunks": chunks, "fixtures": fixtures}


def ask(stores, pipeline, *extra):
    store_args = (
        ["--store", stores["graph"]]
        if pipeline.startswith("sa")
        else ["--chunk-store", stores["chunks"], "--k", "5"]
    )
    return main(
        ["ask", QUESTION, "--pipeline", pipeline, "--mock", stores["mock"], *store_args, *extra]
    )


class TestIndex:
    def test_graph_store_is_loadable(self, stores, capsys):
        loaded = GraphStore.load(stores["graph"])
        counts = loaded.counts()
        assert counts["entities"] == 8
        assert counts["relations"] == 6
        assert loaded.validate() == []

    def test_summary_printed(self, stores, capsys):
        code = main(
            [
                "index",
                "--corpus",
                stores["corpus"],
                "--store",
                stores["graph"] + ".again",
                "--mode",
                "graph",
                "--mock",
                stores["mock"],
            ]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "8 entities" in out
        assert out.strip().endswith(f"wrote {stores['graph']}.again")


class TestAsk:
    @pytest.mark.parametrize(
        "pipeline", ["naive", "cot", "decomposition", "sa", "sa-cot", "sa-decomposition"]
    )
    def test_every_pipeline_answers(self, stores, capsys, pipeline):
        assert ask(stores, pipeline) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["answer"] == "Portugal"
        assert payload["pipeline"] == pipeline

    def test_output_is_stable_across_runs(self, stores, capsys):
        ask(stores, "sa")
        first = capsys.readouterr().out
        ask(stores, "sa")
        second = capsys.readouterr().out
        assert first == second

    def test_emit_dot_writes_graph(self, stores, capsys, tmp_path):
        dot_path = str(tmp_path / "activation.dot")
        assert ask(stores, "sa", "--emit-dot", dot_path) == 0
        text = open(dot_path).read()
        assert text.startswith("graph activation {")
        assert "fillcolor=red" in text

    def test_emit_dot_rejected_for_baseline(self, stores, capsys):
        assert ask(stores, "naive", "--emit-dot", "/tmp/nope.dot") == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_store_flag_is_usage_error(self, stores, capsys):
        code = main(["ask", QUESTION, "--pipeline", "sa", "--mock", stores["mock"]])
        assert code == 2

    def test_nonexistent_store_file_is_operational_error(self, stores, capsys):
        code = main(
            ["ask", QUESTION, "--pipeline", "sa", "--mock", stores["mock"], "--store", "/tmp/absent-store.jsonl"]
        )
        assert code == 1

    def test_unknown_pipeline_rejected_by_parser(self, stores):
        with pytest.raises(SystemExit):
            main(["ask", QUESTION, "--pipeline", "psychic", "--mock", stores["mock"]])

    def test_invalid_threshold_is_config_error(self, stores, capsys):
        assert ask(stores, "sa", "--tau-a", "1.5") == 2

    def test_preset_flag_accepted(self, stores, capsys):
        assert ask(stores, "sa", "--preset", "musique") == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["answer"] == "Portugal"


class TestEval:
    def test_table_and_records(self, stores, capsys, tmp_path):
        records = str(tmp_path / "records.jsonl")
        code = main(
            [
                "eval",
                "--dataset",
                f"{stores['fixtures']}/golden_eval.jsonl",
                "--pipeline",
                "sa-cot",
                "--store",
                stores["graph"],
                "--mock",
                stores["mock"],
                "--records",
                records,
            ]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "Pipeline" in out and "sa-cot" in out
        rows = [json.loads(line) for line in open(records)]
        assert len(rows) == 3
        assert all(row["em"] == 1.0 for row in rows)

    def test_missing_dataset_is_operational_error(self, stores, capsys):
        code = main(
            [
                "eval",
                "--dataset",
                "/tmp/absent-dataset.jsonl",
                "--pipeline",
                "naive",
                "--chunk-store",
                stores["chunks"],
                "--mock",
                stores["mock"],
            ]
        )
        assert code == 1
