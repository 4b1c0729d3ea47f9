"""Command line entry points: index a corpus, ask a question, run an eval.

Exit codes: 0 on success, 1 on operational failures (gateway errors, bad
stores, missing files), 2 on usage or configuration errors.  Logs go to
stderr; stdout carries only the command's output so runs can be diffed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from .chunk_store import ChunkStore
from .config import RunConfig, load_config
from .errors import ConfigError, SpreadragError
from .evalkit import format_report_table, load_dataset, run_eval, sample_items
from .gateway import HttpGateway, MockGateway
from .graph_store import GraphStore
from .ingest import index_chunks, index_corpus, load_corpus
from .pipelines import PIPELINES, answer_question, build_retriever
from .retrieval import PRESETS, export_activation_dot

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spreadrag",
        description="Knowledge-graph question answering with activation-based retrieval.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for info, -vv for debug logging (stderr)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--mock", metavar="FIXTURE",
                       help="use a scripted gateway from a JSON fixture instead of the API")

    index = sub.add_parser("index", help="build a store from a corpus")
    add_common(index)
    index.add_argument("--corpus", required=True,
                       help="directory of .txt files or a .jsonl file")
    index.add_argument("--store", required=True, help="output snapshot path")
    index.add_argument("--mode", choices=("graph", "chunks"), default="graph")
    index.add_argument("--chunk-size", type=int, help="words per chunk")
    index.add_argument("--overlap", type=int, help="overlapping words between chunks")
    index.add_argument("--max-workers", type=int, help="extraction concurrency")

    ask = sub.add_parser("ask", help="answer one question")
    add_common(ask)
    ask.add_argument("question")
    ask.add_argument("--pipeline", choices=PIPELINES, required=True)
    ask.add_argument("--store", help="graph snapshot (sa pipelines)")
    ask.add_argument("--chunk-store", help="chunk snapshot (baseline pipelines)")
    ask.add_argument("--preset", choices=sorted(PRESETS), help="k/n preset")
    ask.add_argument("--k", type=int, help="seeds (graph) or chunks (baseline) per retrieval")
    ask.add_argument("--n", type=int, help="hop radius")
    ask.add_argument("--c", type=float, help="weight rescale cut point")
    ask.add_argument("--tau-a", type=float, help="activation threshold")
    ask.add_argument("--tau-d", type=float, help="document similarity threshold")
    ask.add_argument("--tau-r", type=float, help="relation similarity threshold")
    ask.add_argument("--max-steps", type=int, help="reasoning steps before a forced answer")
    ask.add_argument("--emit-dot", metavar="PATH",
                     help="write the last retrieval as Graphviz DOT (sa pipelines)")

    evalp = sub.add_parser("eval", help="score a pipeline on a QA dataset")
    add_common(evalp)
    evalp.add_argument("--dataset", required=True, help="JSONL with question/answer records")
    evalp.add_argument("--pipeline", choices=PIPELINES, required=True)
    evalp.add_argument("--store", help="graph snapshot (sa pipelines)")
    evalp.add_argument("--chunk-store", help="chunk snapshot (baseline pipelines)")
    evalp.add_argument("--preset", choices=sorted(PRESETS), help="k/n preset")
    evalp.add_argument("--k", type=int)
    evalp.add_argument("--n", type=int)
    evalp.add_argument("--c", type=float)
    evalp.add_argument("--tau-a", type=float)
    evalp.add_argument("--tau-d", type=float)
    evalp.add_argument("--tau-r", type=float)
    evalp.add_argument("--max-steps", type=int)
    evalp.add_argument("--sample", type=int, help="random subset size")
    evalp.add_argument("--seed", type=int, help="sampling seed")
    evalp.add_argument("--records", help="write per-item results to this JSONL file")
    return parser


def _load_run_config(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def _make_gateway(args, config: RunConfig):
    if args.mock:
        return MockGateway.from_fixture(args.mock)
    api = config.api
    return HttpGateway(
        base_url=api.base_url,
        chat_model=api.chat_model,
        embed_model=api.embed_model,
        api_key=os.environ.get("SPREADRAG_API_KEY", ""),
        timeout=api.timeout,
        max_retries=api.max_retries,
        max_inflight=api.max_inflight,
    )


def _retrieval_config(args, config: RunConfig):
    retrieval = config.retrieval
    if getattr(args, "preset", None):
        retrieval = dataclasses.replace(retrieval, **PRESETS[args.preset])
    overrides = {}
    for flag, name in (("k", "k"), ("n", "n"), ("c", "c"),
                       ("tau_a", "tau_a"), ("tau_d", "tau_d"), ("tau_r", "tau_r")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[name] = value
    if overrides:
        try:
            retrieval = dataclasses.replace(retrieval, **overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return retrieval


def _load_stores(args, pipeline: str) -> tuple[GraphStore | None, ChunkStore | None]:
    if pipeline.startswith("sa"):
        if not args.store:
            raise ConfigError(f"pipeline {pipeline!r} needs --store (graph snapshot)")
        return GraphStore.load(args.store), None
    if not args.chunk_store:
        raise ConfigError(f"pipeline {pipeline!r} needs --chunk-store")
    return None, ChunkStore.load(args.chunk_store)


def cmd_index(args) -> int:
    config = _load_run_config(args)
    gateway = _make_gateway(args, config)
    corpus = load_corpus(args.corpus)
    if args.mode == "graph":
        chunk_size = args.chunk_size or config.index.chunk_size
        overlap = args.overlap if args.overlap is not None else config.index.overlap
        store = GraphStore()
        report = index_corpus(
            gateway,
            store,
            corpus,
            chunk_size=chunk_size,
            overlap=overlap,
            max_workers=args.max_workers or config.index.max_workers,
        )
        store.save(args.store)
    else:
        chunk_size = args.chunk_size or config.baseline_index.chunk_size
        overlap = args.overlap if args.overlap is not None else config.baseline_index.overlap
        store = ChunkStore()
        report = index_chunks(gateway, store, corpus, chunk_size=chunk_size, overlap=overlap)
        store.save(args.store)
    print(report.summary())
    for failure in report.failures:
        print(f"failed: {failure}", file=sys.stderr)
    print(f"wrote {args.store}")
    return 0


def cmd_ask(args) -> int:
    config = _load_run_config(args)
    gateway = _make_gateway(args, config)
    retrieval = _retrieval_config(args, config)
    graph_store, chunk_store = _load_stores(args, args.pipeline)
    if args.emit_dot and not args.pipeline.startswith("sa"):
        raise ConfigError("--emit-dot needs a graph pipeline (sa, sa-cot, sa-decomposition)")
    retriever = build_retriever(args.pipeline, gateway, graph_store, chunk_store, retrieval)
    answer = answer_question(
        args.pipeline,
        gateway,
        args.question,
        config=retrieval,
        max_steps=args.max_steps or config.pipeline.max_steps,
        retriever=retriever,
    )
    if args.emit_dot:
        if retriever.last_subgraph is None or retriever.last_state is None:
            raise ConfigError("no retrieval pass to render")
        dot = export_activation_dot(graph_store, retriever.last_subgraph, retriever.last_state)
        with open(args.emit_dot, "w", encoding="utf-8") as handle:
            handle.write(dot)
        logger.info("wrote %s", args.emit_dot)
    print(json.dumps(answer.to_dict(), indent=2, ensure_ascii=False, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    config = _load_run_config(args)
    gateway = _make_gateway(args, config)
    retrieval = _retrieval_config(args, config)
    graph_store, chunk_store = _load_stores(args, args.pipeline)
    items = load_dataset(args.dataset)
    size = args.sample or config.eval.sample_size
    seed = args.seed if args.seed is not None else config.eval.seed
    subset = sample_items(items, size, seed)
    retriever = build_retriever(args.pipeline, gateway, graph_store, chunk_store, retrieval)
    max_steps = args.max_steps or config.pipeline.max_steps

    def answer_fn(question: str):
        return answer_question(
            args.pipeline,
            gateway,
            question,
            config=retrieval,
            max_steps=max_steps,
            retriever=retriever,
        )

    report = run_eval(
        answer_fn,
        subset,
        pipeline=args.pipeline,
        dataset=os.path.basename(args.dataset),
        records_path=args.records,
    )
    print(format_report_table([report]))
    if args.records:
        print(f"records: {args.records}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - min(args.verbose, 2) * 10
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"index": cmd_index, "ask": cmd_ask, "eval": cmd_eval}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SpreadragError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
