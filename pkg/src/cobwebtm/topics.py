"""Topic derivation from a concept tree.

Covers class-based tf-idf keyword weighting, per-level hierarchical topic
descriptors, the dynamic flat cut with its outlier rule, and greedy
centroid alignment of topics across batches.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from cobwebtm.tree import ConceptTree

OUTLIER_TOPIC = -1


@dataclass
class TopicDescriptor:
    node_id: int
    centroid: np.ndarray
    top_words: list[tuple[str, float]]
    doc_count: int


@dataclass
class FlatPartition:
    cut: list[int]  # frontier node ids, antichain covering all documents
    assignment: dict[str, int]  # doc id -> topic id (OUTLIER_TOPIC for outliers)
    topic_nodes: dict[int, int]  # topic id -> cut node id
    outlier_nodes: list[int]
    cut_params: tuple[int, float]  # (max_clusters, leaf_ratio)


@dataclass
class TopicAlignment:
    pairs: list[tuple[int, int, float]]  # (prev id, curr id, cosine sim)
    unmatched_prev: list[int]
    unmatched_curr: list[int]
    threshold: float
    flagged: list[int] = field(default_factory=list)  # zero-norm centroids


def ctfidf(topic_token_bags: Mapping[int, Iterable[str]]) -> dict[int, dict[str, float]]:
    """Class-based tf-idf: W = tf * ln(1 + A / f) per topic and word.

    ``A`` is the average bag size across topics and ``f`` the word's total
    frequency over all bags. Words absent from a topic are omitted.
    """
    if not topic_token_bags:
        raise ValueError("need at least one topic")
    counts = {t: Counter(bag) for t, bag in topic_token_bags.items()}
    total_tokens = sum(sum(c.values()) for c in counts.values())
    if total_tokens == 0:
        raise ValueError("all topic bags are empty")
    avg_words = total_tokens / len(counts)
    freq: Counter = Counter()
    for c in counts.values():
        freq.update(c)
    weights: dict[int, dict[str, float]] = {}
    for t, c in counts.items():
        weights[t] = {
            w: tf * math.log(1.0 + avg_words / freq[w]) for w, tf in c.items()
        }
    return weights


def _top_k(weight_map: Mapping[str, float], k: int) -> list[tuple[str, float]]:
    # deterministic: weight descending, then word ascending
    return sorted(weight_map.items(), key=lambda it: (-it[1], it[0]))[:k]


def _subtree_bag(tree: ConceptTree, node_id: int, tokens_by_doc) -> list[str]:
    bag: list[str] = []
    for doc_id in tree.subtree_doc_ids(node_id):
        bag.extend(tokens_by_doc.get(doc_id, ()))
    return bag


def extract_hierarchical_topics(
    tree: ConceptTree,
    tokens_by_doc: Mapping[str, Sequence[str]],
    levels: int,
    top_k: int,
) -> dict[int, list[TopicDescriptor]]:
    """Per-level topic descriptors for every node within ``levels`` of the root.

    Each node's bag concatenates the tokens of all documents in its subtree;
    tf-idf statistics are computed per level, treating that level's nodes as
    the topic set.
    """
    if tree.is_empty():
        raise ValueError("cannot extract topics from an empty tree")
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    by_level: dict[int, list[int]] = {0: [tree.root_id]}
    for level in range(levels):
        nxt = [
            c
            for nid in by_level.get(level, [])
            for c in tree.node(nid).children
        ]
        if not nxt:
            break
        by_level[level + 1] = nxt

    out: dict[int, list[TopicDescriptor]] = {}
    for level, node_ids in by_level.items():
        bags = {nid: _subtree_bag(tree, nid, tokens_by_doc) for nid in node_ids}
        if all(len(b) == 0 for b in bags.values()):
            weights = {nid: {} for nid in node_ids}
        else:
            weights = ctfidf(bags)
        out[level] = [
            TopicDescriptor(
                node_id=nid,
                centroid=tree.node(nid).mean.copy(),
                top_words=_top_k(weights[nid], top_k),
                doc_count=tree.node(nid).count,
            )
            for nid in node_ids
        ]
    return out


def flat_cut(tree: ConceptTree, max_clusters: int, leaf_ratio: float) -> FlatPartition:
    """Derive a flat topic partition by expanding the most populous frontier
    nodes while the cluster budget and leaf-fraction constraints hold.

    Frontier leaves with a single document become outliers (topic -1);
    remaining frontier nodes are numbered by descending count.
    """
    if tree.is_empty():
        raise ValueError("cannot cut an empty tree")
    if max_clusters < 1:
        raise ValueError("max_clusters must be >= 1")
    if not 0.0 <= leaf_ratio <= 1.0:
        raise ValueError("leaf_ratio must lie in [0, 1]")

    frontier = [tree.root_id]

    def leaf_fraction(nodes: list[int]) -> float:
        n_leaves = sum(1 for nid in nodes if tree.node(nid).is_leaf)
        return n_leaves / len(nodes)

    while True:
        internal = [nid for nid in frontier if not tree.node(nid).is_leaf]
        internal.sort(key=lambda nid: (-tree.node(nid).count, nid))
        committed = False
        for nid in internal:
            pos = frontier.index(nid)
            tentative = frontier[:pos] + list(tree.node(nid).children) + frontier[pos + 1 :]
            if len(tentative) <= max_clusters and leaf_fraction(tentative) <= leaf_ratio:
                frontier = tentative
                committed = True
                break
        if not committed:
            break

    outliers = [
        nid
        for nid in frontier
        if tree.node(nid).is_leaf and tree.node(nid).count == 1
    ]
    topical = [nid for nid in frontier if nid not in outliers]
    topical.sort(key=lambda nid: (-tree.node(nid).count, nid))
    topic_nodes = {i: nid for i, nid in enumerate(topical)}

    assignment: dict[str, int] = {}
    for topic_id, nid in topic_nodes.items():
        for doc_id in tree.subtree_doc_ids(nid):
            assignment[doc_id] = topic_id
    for nid in outliers:
        for doc_id in tree.subtree_doc_ids(nid):
            assignment[doc_id] = OUTLIER_TOPIC

    return FlatPartition(
        cut=list(frontier),
        assignment=assignment,
        topic_nodes=topic_nodes,
        outlier_nodes=outliers,
        cut_params=(max_clusters, leaf_ratio),
    )


def flat_topic_descriptors(
    tree: ConceptTree,
    partition: FlatPartition,
    tokens_by_doc: Mapping[str, Sequence[str]],
    top_k: int,
) -> list[TopicDescriptor]:
    """c-tf-idf descriptors for a flat partition's non-outlier topics, with
    the cut's topic set defining the tf-idf statistics."""
    bags = {
        topic_id: _subtree_bag(tree, nid, tokens_by_doc)
        for topic_id, nid in partition.topic_nodes.items()
    }
    if bags and any(bags.values()):
        weights = ctfidf(bags)
    else:
        weights = {t: {} for t in bags}
    return [
        TopicDescriptor(
            node_id=partition.topic_nodes[topic_id],
            centroid=tree.node(partition.topic_nodes[topic_id]).mean.copy(),
            top_words=_top_k(weights[topic_id], top_k),
            doc_count=tree.node(partition.topic_nodes[topic_id]).count,
        )
        for topic_id in sorted(bags)
    ]


def _cosine(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return None
    return float(np.dot(a, b) / (na * nb))


def match_topics(
    prev: Sequence[TopicDescriptor],
    curr: Sequence[TopicDescriptor],
    threshold: float = 0.5,
) -> TopicAlignment:
    """Greedy one-to-one alignment of topic centroids by cosine similarity.

    Commits the highest-similarity available pair first; pairs below the
    threshold are never committed. Exact ties break by (prev id, curr id).
    Zero-norm centroids are left unmatched and flagged.
    """
    flagged: list[int] = []
    candidates = []
    for p in prev:
        for c in curr:
            sim = _cosine(p.centroid, c.centroid)
            if sim is None:
                continue
            candidates.append((sim, p.node_id, c.node_id))
    for d in list(prev) + list(curr):
        if float(np.linalg.norm(d.centroid)) == 0.0 and d.node_id not in flagged:
            flagged.append(d.node_id)
    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))

    used_prev: set[int] = set()
    used_curr: set[int] = set()
    pairs: list[tuple[int, int, float]] = []
    for sim, pid, cid in candidates:
        if sim < threshold:
            break
        if pid in used_prev or cid in used_curr:
            continue
        pairs.append((pid, cid, sim))
        used_prev.add(pid)
        used_curr.add(cid)

    return TopicAlignment(
        pairs=pairs,
        unmatched_prev=[p.node_id for p in prev if p.node_id not in used_prev],
        unmatched_curr=[c.node_id for c in curr if c.node_id not in used_curr],
        threshold=threshold,
        flagged=flagged,
    )


def topic_report(descriptors: Sequence[TopicDescriptor], label_key: str = "topic_id") -> list[dict]:
    """JSON-ready report rows for a list of descriptors."""
    rows = []
    for i, d in enumerate(descriptors):
        rows.append(
            {
                label_key: i,
                "node_id": d.node_id,
                "doc_count": d.doc_count,
                "top_words": [[w, float(s)] for w, s in d.top_words],
                "centroid_digest": _centroid_digest(d.centroid),
            }
        )
    return rows


def _centroid_digest(centroid: np.ndarray) -> str:
    import hashlib

    return hashlib.sha256(np.ascontiguousarray(centroid, dtype=np.float64).tobytes()).hexdigest()[:16]
