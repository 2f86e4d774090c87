"""Lifelong experiment driver.

Streams a corpus through the concept tree batch by batch (one initial
batch, then fixed-size increments), recomputing the flat cut, aligning
topics with the previous batch, and emitting per-batch reports with
metrics and operator counts. Tree plus experiment state can be
snapshotted and resumed mid-stream with bit-identical continued reports.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from cobwebtm import metrics as M
from cobwebtm import topics as T
from cobwebtm.corpus_io import DocumentRecord, load_corpus
from cobwebtm.topics import OUTLIER_TOPIC, TopicDescriptor
from cobwebtm.tree import ConceptTree, Operator, TreeConfig, _atomic_write_json

DEFAULT_METRICS = ("cv", "ari", "tcd", "npmi")
SNAPSHOT_VERSION = 1


def threads_cap() -> int:
    """Optional intra-step parallelism cap; the default driver is sequential."""
    raw = os.environ.get("CBWTM_THREADS", "1")
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValueError(f"CBWTM_THREADS must be an integer, got {raw!r}") from exc
    return max(1, value)


@dataclass
class ExperimentConfig:
    max_clusters: int = 10
    initial_batch: int = 2000
    batch_size: int = 125
    leaf_ratio: float = 0.15
    top_k_report: int = 10
    top_k_isim: int = 5
    alignment_threshold: float = 0.5
    variance_floor: float = 1e-4
    seed: int = 0
    window_size: int = 110
    n_intruders: int = 15
    metrics: tuple[str, ...] = DEFAULT_METRICS

    def __post_init__(self):
        if self.initial_batch < 1 or self.batch_size < 1:
            raise ValueError("batch sizes must be >= 1")
        if not 0.0 <= self.leaf_ratio <= 1.0:
            raise ValueError("leaf_ratio must lie in [0, 1]")
        if self.max_clusters < 1:
            raise ValueError("max_clusters must be >= 1")

    @staticmethod
    def max_clusters_from_hint(k: int) -> int:
        """The 1.3 * K convention for choosing the cluster budget."""
        return max(1, math.ceil(1.3 * k))


@dataclass
class BatchReport:
    batch_index: int
    docs_processed: int
    operator_counts: dict[str, int]
    node_count: int
    depth: int
    leaf_count: int
    n_topics: int
    n_outliers: int
    cut_node_ids: list[int]
    topics: list[dict]
    matched: int
    new_topics: int
    retired_topics: int
    metrics: dict[str, Optional[float]]
    flags: list[str]
    assignment: dict[str, int]
    duration_s: float = 0.0

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "batch_index": self.batch_index,
            "docs_processed": self.docs_processed,
            "operator_counts": self.operator_counts,
            "tree": {
                "node_count": self.node_count,
                "depth": self.depth,
                "leaf_count": self.leaf_count,
            },
            "partition": {
                "n_topics": self.n_topics,
                "n_outliers": self.n_outliers,
                "cut_node_ids": self.cut_node_ids,
            },
            "topics": self.topics,
            "alignment": {
                "matched": self.matched,
                "new": self.new_topics,
                "retired": self.retired_topics,
            },
            "metrics": self.metrics,
            "flags": self.flags,
            "assignment": self.assignment,
        }
        if include_timing:
            out["duration_s"] = self.duration_s
        return out


class ExperimentState:
    """Everything that must survive a snapshot/restore to keep the report
    stream identical: the tree plus cross-batch alignment context."""

    def __init__(self, config: ExperimentConfig, dimensionality: int):
        self.config = config
        self.tree = ConceptTree(
            TreeConfig(dimensionality=dimensionality, variance_floor=config.variance_floor)
        )
        self.batches_done = 0
        self.docs_processed = 0
        self.next_topic_uid = 0
        self.prev_assignment: dict[str, int] = {}
        self.prev_descriptors: list[TopicDescriptor] = []
        self.prev_uid_by_node: dict[int, int] = {}
        self.tokens_seen: dict[str, list[str]] = {}

    # ------------------------------------------------------------ persistence

    def to_snapshot(self) -> dict:
        tree_snap = self.tree.to_snapshot()
        tree_snap["child_order"] = {
            str(n.id): list(n.children) for n in self.tree.nodes.values() if n.children
        }
        return {
            "format_version": SNAPSHOT_VERSION,
            "tree": tree_snap,
            "experiment": {
                "batches_done": self.batches_done,
                "docs_processed": self.docs_processed,
                "next_topic_uid": self.next_topic_uid,
                "prev_assignment": self.prev_assignment,
                "prev_uid_by_node": {str(k): v for k, v in self.prev_uid_by_node.items()},
                "prev_descriptors": [
                    {
                        "node_id": d.node_id,
                        "centroid": [float(v) for v in d.centroid],
                        "top_words": [[w, float(s)] for w, s in d.top_words],
                        "doc_count": d.doc_count,
                    }
                    for d in self.prev_descriptors
                ],
            },
        }

    def save(self, path: str) -> None:
        _atomic_write_json(path, self.to_snapshot())

    @classmethod
    def restore(cls, path: str, config: ExperimentConfig, dimensionality: int) -> "ExperimentState":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"unreadable snapshot {path}: {exc}") from exc
        if data.get("format_version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {data.get('format_version')}")
        state = cls(config, dimensionality)
        state.tree = ConceptTree.from_snapshot(data["tree"], expected_dim=dimensionality)
        exp = data["experiment"]
        state.batches_done = exp["batches_done"]
        state.docs_processed = exp["docs_processed"]
        state.next_topic_uid = exp["next_topic_uid"]
        state.prev_assignment = dict(exp["prev_assignment"])
        state.prev_uid_by_node = {int(k): v for k, v in exp["prev_uid_by_node"].items()}
        state.prev_descriptors = [
            TopicDescriptor(
                node_id=d["node_id"],
                centroid=np.array(d["centroid"], dtype=np.float64),
                top_words=[(w, s) for w, s in d["top_words"]],
                doc_count=d["doc_count"],
            )
            for d in exp["prev_descriptors"]
        ]
        return state


def _batch_slices(total: int, start: int, initial: int, size: int):
    """Yield (batch_index, lo, hi) for the remaining stream positions."""
    pos = 0
    index = 0
    while pos < total:
        take = initial if index == 0 else size
        lo, hi = pos, min(pos + take, total)
        if lo >= start:
            yield index, lo, hi
        pos = hi
        index += 1


def process_batch(
    state: ExperimentState,
    batch_index: int,
    batch_docs: Sequence[DocumentRecord],
    word_vectors: Optional[Mapping[str, np.ndarray]] = None,
) -> BatchReport:
    cfg = state.config
    t0 = time.perf_counter()
    ops_before = dict(state.tree.operator_counts)

    for doc in batch_docs:
        state.tree.ifit(doc.id, doc.embedding)
        state.tokens_seen[doc.id] = doc.tokens
    op_delta = {
        op.value: state.tree.operator_counts[op] - ops_before[op] for op in Operator
    }

    partition = T.flat_cut(state.tree, cfg.max_clusters, cfg.leaf_ratio)
    descriptors = T.flat_topic_descriptors(
        state.tree, partition, state.tokens_seen, cfg.top_k_report
    )
    alignment = T.match_topics(
        state.prev_descriptors, descriptors, cfg.alignment_threshold
    )

    # persistent topic uids: matched topics inherit, new topics get fresh uids
    uid_by_node: dict[int, int] = {}
    for pid, cid, _sim in alignment.pairs:
        uid_by_node[cid] = state.prev_uid_by_node[pid]
    for d in descriptors:
        if d.node_id not in uid_by_node:
            uid_by_node[d.node_id] = state.next_topic_uid
            state.next_topic_uid += 1

    assignment: dict[str, int] = {}
    for doc_id, topic in partition.assignment.items():
        if topic == OUTLIER_TOPIC:
            assignment[doc_id] = OUTLIER_TOPIC
        else:
            assignment[doc_id] = uid_by_node[partition.topic_nodes[topic]]

    values, flags = _batch_metrics(
        state, descriptors, alignment, assignment, batch_index, word_vectors
    )

    report = BatchReport(
        batch_index=batch_index,
        docs_processed=len(batch_docs),
        operator_counts=op_delta,
        node_count=len(state.tree.nodes),
        depth=state.tree.depth(),
        leaf_count=sum(1 for _ in state.tree.leaves()),
        n_topics=len(partition.topic_nodes),
        n_outliers=len(partition.outlier_nodes),
        cut_node_ids=list(partition.cut),
        topics=[
            {
                "topic_uid": uid_by_node[d.node_id],
                "node_id": d.node_id,
                "doc_count": d.doc_count,
                "top_words": [[w, float(s)] for w, s in d.top_words],
                "centroid_digest": T._centroid_digest(d.centroid),
            }
            for d in descriptors
        ],
        matched=len(alignment.pairs),
        new_topics=len(alignment.unmatched_curr),
        retired_topics=len(alignment.unmatched_prev),
        metrics=values,
        flags=flags,
        assignment=assignment,
        duration_s=time.perf_counter() - t0,
    )

    state.batches_done = batch_index + 1
    state.docs_processed += len(batch_docs)
    state.prev_assignment = assignment
    state.prev_descriptors = descriptors
    state.prev_uid_by_node = uid_by_node
    return report


def _batch_metrics(
    state: ExperimentState,
    descriptors: Sequence[TopicDescriptor],
    alignment: T.TopicAlignment,
    assignment: Mapping[str, int],
    batch_index: int,
    word_vectors: Optional[Mapping[str, np.ndarray]],
) -> tuple[dict, list[str]]:
    cfg = state.config
    enabled = set(cfg.metrics)
    values: dict[str, Optional[float]] = {}
    flags: list[str] = []

    table = None
    if enabled & {"cv", "npmi"}:
        token_lists = [t for t in state.tokens_seen.values() if t]
        if token_lists:
            table = M.build_cooccurrence(token_lists, cfg.window_size)

    word_lists = [[w for w, _ in d.top_words] for d in descriptors]

    if "cv" in enabled:
        values["cv"] = _mean_over_topics(
            word_lists, flags, "cv", lambda ws: M.cv_coherence(ws, table)[0] if table else None
        )
    if "npmi" in enabled:
        values["npmi"] = _mean_over_topics(
            word_lists, flags, "npmi", lambda ws: M.topic_npmi(ws, table) if table else None
        )
    if "ari" in enabled:
        prior_docs = set(state.prev_assignment)
        if len(prior_docs) >= 2:
            old = {d: state.prev_assignment[d] for d in prior_docs}
            new = {d: assignment[d] for d in prior_docs}
            values["ari"] = M.ari(old, new)
        else:
            values["ari"] = None
            flags.append("ari:no-prior-batch")
    if "tcd" in enabled:
        if alignment.pairs:
            prev_centroids = {d.node_id: d.centroid for d in state.prev_descriptors}
            curr_centroids = {d.node_id: d.centroid for d in descriptors}
            drift, tcd_flags = M.tcd(alignment.pairs, prev_centroids, curr_centroids)
            values["tcd"] = drift
            flags.extend(f"tcd:zero-norm:{p}-{c}" for p, c in tcd_flags)
        else:
            values["tcd"] = None
            flags.append("tcd:no-matched-topics")
    if "isim" in enabled:
        if word_vectors:
            topics = []
            for ws in word_lists:
                usable = [w for w in ws if w in word_vectors][: cfg.top_k_isim]
                if usable:
                    topics.append(usable)
                else:
                    flags.append("isim:topic-without-vectors")
            if topics:
                values["isim"] = M.isim(
                    topics,
                    word_vectors,
                    n_intruders=cfg.n_intruders,
                    seed=_batch_seed(cfg.seed, batch_index),
                )
            else:
                values["isim"] = None
        else:
            values["isim"] = None
            flags.append("isim:no-word-vectors")
    return values, flags


def _mean_over_topics(word_lists, flags, name, fn):
    scores = []
    for i, ws in enumerate(word_lists):
        if len(ws) < 2:
            flags.append(f"{name}:topic{i}:too-few-words")
            continue
        score = fn(ws)
        if score is None:
            flags.append(f"{name}:topic{i}:missing")
        else:
            scores.append(score)
    return float(np.mean(scores)) if scores else None


def _batch_seed(seed: int, batch_index: int) -> int:
    return int(np.random.SeedSequence([seed, batch_index]).generate_state(1)[0])


def run_experiment(
    config: ExperimentConfig,
    docs: Sequence[DocumentRecord],
    word_vectors: Optional[Mapping[str, np.ndarray]] = None,
    state: Optional[ExperimentState] = None,
    report_path: Optional[str] = None,
    snapshot_path: Optional[str] = None,
    max_batches: Optional[int] = None,
) -> list[BatchReport]:
    """Run the batch protocol over ``docs``; resume from ``state`` if given.

    With a resumed state, the first ``state.docs_processed`` stream positions
    are assumed already incorporated and are skipped.
    """
    if not docs:
        raise ValueError("empty corpus")
    dim = docs[0].embedding.shape[0]
    for doc in docs:
        if doc.embedding is None or doc.embedding.shape != (dim,):
            raise ValueError(f"document {doc.id}: inconsistent embedding")
    if state is None:
        state = ExperimentState(config, dim)

    reports: list[BatchReport] = []
    report_fh = open(report_path, "w", encoding="utf-8") if report_path else None
    try:
        for index, lo, hi in _batch_slices(
            len(docs), state.docs_processed, config.initial_batch, config.batch_size
        ):
            if max_batches is not None and len(reports) >= max_batches:
                break
            # rebuild token context for resumed runs
            if not state.tokens_seen and lo > 0:
                for doc in docs[:lo]:
                    state.tokens_seen[doc.id] = doc.tokens
            report = process_batch(state, index, docs[lo:hi], word_vectors)
            reports.append(report)
            if report_fh:
                report_fh.write(json.dumps(report.to_dict()) + "\n")
                report_fh.flush()
            if snapshot_path:
                state.save(snapshot_path)
    finally:
        if report_fh:
            report_fh.close()
    return reports


def holdout_experiment(
    config: ExperimentConfig,
    docs: Sequence[DocumentRecord],
    holdout_label: str,
    word_vectors: Optional[Mapping[str, np.ndarray]] = None,
    purity_threshold: float = 0.8,
    recall_threshold: float = 0.8,
) -> dict:
    """Stream everything except ``holdout_label``, then inject the held-out
    documents as one final batch and test whether a dedicated topic emerges."""
    if any(doc.label is None for doc in docs):
        raise ValueError("holdout experiments need labeled documents")
    holdout = [d for d in docs if d.label == holdout_label]
    rest = [d for d in docs if d.label != holdout_label]
    if not holdout:
        raise ValueError(f"no documents carry label {holdout_label!r}")

    dim = rest[0].embedding.shape[0]
    state = ExperimentState(config, dim)
    reports = run_experiment(config, rest, word_vectors=word_vectors, state=state)
    before_metrics = reports[-1].metrics if reports else {}

    injection = process_batch(state, state.batches_done, holdout, word_vectors)

    holdout_ids = {d.id for d in holdout}
    best = {"topic_uid": None, "purity": 0.0, "recall": 0.0}
    topic_members: dict[int, set[str]] = {}
    for doc_id, uid in injection.assignment.items():
        if uid == OUTLIER_TOPIC:
            continue
        topic_members.setdefault(uid, set()).add(doc_id)
    for uid, members in topic_members.items():
        inj = len(members & holdout_ids)
        purity = inj / len(members)
        recall = inj / len(holdout_ids)
        if (purity, recall) > (best["purity"], best["recall"]):
            best = {"topic_uid": uid, "purity": purity, "recall": recall}

    # topics whose uid was minted this batch are exactly the unmatched_curr ones
    prior_uids = state_uid_range(reports)
    new_uids = {
        t["topic_uid"] for t in injection.topics if t["topic_uid"] not in prior_uids
    }

    emerged = (
        best["topic_uid"] is not None
        and best["purity"] >= purity_threshold
        and best["recall"] >= recall_threshold
    )
    return {
        "holdout_label": holdout_label,
        "holdout_size": len(holdout),
        "before_metrics": before_metrics,
        "after_metrics": injection.metrics,
        "best_topic": best,
        "new_topic_uids": sorted(new_uids),
        "emerged": emerged,
        "emergent_topic_is_new": best["topic_uid"] in new_uids,
        "injection_report": injection.to_dict(),
    }


def state_uid_range(reports: Sequence[BatchReport]) -> set[int]:
    uids: set[int] = set()
    for r in reports:
        for t in r.topics:
            uids.add(t["topic_uid"])
    return uids
