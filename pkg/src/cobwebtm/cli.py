"""Command-line driver: fit / topics / metrics / holdout.

Exit code 0 on success, 2 on input validation failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from cobwebtm import metrics as M
from cobwebtm.corpus_io import load_corpus, read_documents, read_word_vectors
from cobwebtm.harness import (
    ExperimentConfig,
    ExperimentState,
    holdout_experiment,
    run_experiment,
    threads_cap,
)
from cobwebtm.topics import extract_hierarchical_topics, topic_report
from cobwebtm.tree import ConceptTree


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--initial-batch", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=125)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--max-clusters", type=int, default=None)
    group.add_argument(
        "--k-hint",
        type=int,
        default=None,
        help="derive the cluster budget as ceil(1.3 * K)",
    )
    p.add_argument("--leaf-ratio", type=float, default=0.15)
    p.add_argument("--top-k", type=int, default=10, help="report words per topic")
    p.add_argument("--isim-top-k", type=int, default=5)
    p.add_argument("--tau", type=float, default=0.5, help="alignment threshold")
    p.add_argument("--variance-floor", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window-size", type=int, default=110)
    p.add_argument("--n-intruders", type=int, default=15)
    p.add_argument(
        "--metrics",
        default="cv,ari,tcd,npmi",
        help="comma-separated metric toggles (cv,ari,tcd,npmi,isim)",
    )
    p.add_argument("--word-vectors", default=None, help="CBW1 word-vector table")
    p.add_argument("--vocab", default=None, help="sidecar vocabulary for --word-vectors")


def _config_from_args(args) -> ExperimentConfig:
    if args.max_clusters is not None:
        max_clusters = args.max_clusters
    elif args.k_hint is not None:
        max_clusters = ExperimentConfig.max_clusters_from_hint(args.k_hint)
    else:
        max_clusters = 10
    return ExperimentConfig(
        max_clusters=max_clusters,
        initial_batch=args.initial_batch,
        batch_size=args.batch_size,
        leaf_ratio=args.leaf_ratio,
        top_k_report=args.top_k,
        top_k_isim=args.isim_top_k,
        alignment_threshold=args.tau,
        variance_floor=args.variance_floor,
        seed=args.seed,
        window_size=args.window_size,
        n_intruders=args.n_intruders,
        metrics=tuple(m for m in args.metrics.split(",") if m),
    )


def _load_word_vectors(args):
    if args.word_vectors is None:
        return None
    if args.vocab is None:
        raise ValueError("--word-vectors requires --vocab")
    return read_word_vectors(args.word_vectors, args.vocab)


def cmd_fit(args) -> int:
    config = _config_from_args(args)
    docs = load_corpus(args.docs, args.embeddings)
    word_vectors = _load_word_vectors(args)
    state = None
    if args.resume:
        dim = docs[0].embedding.shape[0]
        state = ExperimentState.restore(args.resume, config, dim)
    reports = run_experiment(
        config,
        docs,
        word_vectors=word_vectors,
        state=state,
        report_path=args.report,
        snapshot_path=args.snapshot,
    )
    for r in reports:
        line = {
            "batch": r.batch_index,
            "docs": r.docs_processed,
            "topics": r.n_topics,
            "metrics": r.metrics,
        }
        print(json.dumps(line))
    return 0


def cmd_topics(args) -> int:
    state = _load_state_or_tree(args.snapshot)
    tree = state if isinstance(state, ConceptTree) else state.tree
    tokens = {}
    if args.docs:
        tokens = {d.id: d.tokens for d in read_documents(args.docs)}
    levels = extract_hierarchical_topics(tree, tokens, levels=args.levels, top_k=args.top_k)
    out = {
        str(level): topic_report(descs, label_key="position")
        for level, descs in levels.items()
    }
    print(json.dumps(out, indent=2))
    return 0


def _load_state_or_tree(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"unreadable snapshot {path}: {exc}") from exc
    if "tree" in data and "experiment" in data:
        tree = ConceptTree.from_snapshot(data["tree"])
        return tree
    return ConceptTree.from_snapshot(data)


def cmd_metrics(args) -> int:
    docs = read_documents(args.docs)
    token_lists = [d.tokens for d in docs if d.tokens]
    table = M.build_cooccurrence(token_lists, args.window_size)
    results = []
    with open(args.report, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            report = json.loads(line)
            fragment = {"cv": None, "npmi": None, "flags": []}
            cv_scores, npmi_scores = [], []
            for topic in report.get("topics", []):
                words = [w for w, _ in topic["top_words"]]
                if len(words) < 2:
                    fragment["flags"].append(f"topic{topic['node_id']}:too-few-words")
                    continue
                cv, cv_flags = M.cv_coherence(words, table)
                npmi_val = M.topic_npmi(words, table)
                if cv is None:
                    fragment["flags"].append(f"cv:topic{topic['node_id']}:missing")
                else:
                    cv_scores.append(cv)
                if npmi_val is None:
                    fragment["flags"].append(f"npmi:topic{topic['node_id']}:missing")
                else:
                    npmi_scores.append(npmi_val)
            if cv_scores:
                fragment["cv"] = float(np.mean(cv_scores))
            if npmi_scores:
                fragment["npmi"] = float(np.mean(npmi_scores))
            fragment["batch_index"] = report["batch_index"]
            results.append(fragment)
            print(json.dumps(fragment))
    return 0


def cmd_holdout(args) -> int:
    config = _config_from_args(args)
    docs = load_corpus(args.docs, args.embeddings)
    word_vectors = _load_word_vectors(args)
    result = holdout_experiment(config, docs, args.label, word_vectors=word_vectors)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(result, fh, indent=2)
    summary = {
        "holdout_label": result["holdout_label"],
        "emerged": result["emerged"],
        "emergent_topic_is_new": result["emergent_topic_is_new"],
        "best_topic": result["best_topic"],
    }
    print(json.dumps(summary, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cobwebtm")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="stream a corpus and emit batch reports")
    p_fit.add_argument("--docs", required=True, help="document JSONL")
    p_fit.add_argument("--embeddings", required=True, help="CBW1 embedding file")
    p_fit.add_argument("--report", default=None, help="write BatchReport JSONL here")
    p_fit.add_argument("--snapshot", default=None, help="write the final state here")
    p_fit.add_argument("--resume", default=None, help="resume from a snapshot")
    _add_config_flags(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_topics = sub.add_parser("topics", help="print topics from a snapshot")
    p_topics.add_argument("--snapshot", required=True)
    p_topics.add_argument("--docs", default=None, help="JSONL for topic words")
    p_topics.add_argument("--levels", type=int, default=3)
    p_topics.add_argument("--top-k", type=int, default=10)
    p_topics.set_defaults(func=cmd_topics)

    p_metrics = sub.add_parser("metrics", help="recompute coherence from reports")
    p_metrics.add_argument("--report", required=True, help="BatchReport JSONL")
    p_metrics.add_argument("--docs", required=True, help="document JSONL")
    p_metrics.add_argument("--window-size", type=int, default=110)
    p_metrics.set_defaults(func=cmd_metrics)

    p_holdout = sub.add_parser("holdout", help="holdout-injection protocol")
    p_holdout.add_argument("--docs", required=True)
    p_holdout.add_argument("--embeddings", required=True)
    p_holdout.add_argument("--label", required=True, help="label to hold out")
    p_holdout.add_argument("--report", default=None)
    _add_config_flags(p_holdout)
    p_holdout.set_defaults(func=cmd_holdout)

    return parser


def main(argv=None) -> int:
    threads_cap()  # validate the env var early
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
