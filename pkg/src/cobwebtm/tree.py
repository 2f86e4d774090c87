"""Incremental probabilistic concept hierarchy over dense embeddings.

Each node summarizes its subtree with a diagonal Gaussian (count, mean,
per-dimension sum of squared deviations). Documents are incorporated one at
a time by a greedy top-down search that, at every internal node, picks the
best of four restructuring operators by category utility.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

LOG_2PI_E = math.log(2.0 * math.pi * math.e)


class Operator(Enum):
    INSERT = "INSERT"
    NEW = "NEW"
    MERGE = "MERGE"
    SPLIT = "SPLIT"


# higher value wins ties; least destructive action first
_TIE_ORDER = {Operator.INSERT: 3, Operator.NEW: 2, Operator.MERGE: 1, Operator.SPLIT: 0}


@dataclass
class TreeConfig:
    dimensionality: int
    variance_floor: float = 1e-4

    def __post_init__(self):
        if self.dimensionality < 1:
            raise ValueError("dimensionality must be >= 1")
        if not self.variance_floor > 0:
            raise ValueError("variance_floor must be > 0")


@dataclass
class ConceptNode:
    """A concept with running Gaussian statistics.

    ``m2`` holds per-dimension sums of squared deviations from the mean, so
    the population variance is ``m2 / count``. A node either has children
    (internal) or houses document ids (leaf), never both.
    """

    id: int
    count: int
    mean: np.ndarray
    m2: np.ndarray
    children: list[int] = field(default_factory=list)
    doc_ids: list[str] = field(default_factory=list)
    parent_id: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def variance(self) -> np.ndarray:
        return self.m2 / self.count

    def copy_stats(self) -> "ConceptNode":
        return ConceptNode(
            id=self.id,
            count=self.count,
            mean=self.mean.copy(),
            m2=self.m2.copy(),
            children=list(self.children),
            doc_ids=list(self.doc_ids),
            parent_id=self.parent_id,
        )


@dataclass
class OperatorDecision:
    operator: Operator
    node_id: int
    scores: dict[Operator, float]
    best_child: Optional[int] = None
    second_child: Optional[int] = None


def _check_vector(x: np.ndarray, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (dim,):
        raise ValueError(f"embedding has shape {x.shape}, expected ({dim},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("embedding contains non-finite values")
    return x


def update_stats(node: ConceptNode, x: np.ndarray) -> ConceptNode:
    """Incorporate one point into a node's running statistics in place.

    Uses the single-pass recurrence: delta = x - mean_old, mean += delta/N,
    m2 += delta * (x - mean_new), which is numerically stable and exactly
    reproduces the batch mean / population variance.
    """
    x = _check_vector(x, node.mean.shape[0])
    node.count += 1
    delta = x - node.mean
    node.mean += delta / node.count
    node.m2 += delta * (x - node.mean)
    return node


def merge_stats(a: ConceptNode, b: ConceptNode, merged_id: int = -1) -> ConceptNode:
    """Pool two nodes' statistics exactly (pairwise combination recurrence)."""
    if a.mean.shape != b.mean.shape:
        raise ValueError("cannot merge nodes of different dimensionality")
    n = a.count + b.count
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.count / n)
    m2 = a.m2 + b.m2 + delta * delta * (a.count * b.count / n)
    return ConceptNode(id=merged_id, count=n, mean=mean, m2=m2, children=[a.id, b.id])


def node_entropy(node: ConceptNode, cfg: TreeConfig) -> float:
    """Differential entropy of the node's floored diagonal Gaussian."""
    if node.count < 1:
        raise ValueError("entropy of an empty node is undefined")
    var = node.m2 / node.count + cfg.variance_floor
    return 0.5 * float(np.sum(LOG_2PI_E + np.log(var)))


def category_utility(
    parent: ConceptNode, children_view: Sequence[ConceptNode], cfg: TreeConfig
) -> float:
    """Probability-weighted entropy reduction of a partition of ``parent``.

    ``children_view`` may be the node's actual children or a hypothetical
    partition; counts must sum to the parent's count either way.
    """
    if not children_view:
        raise ValueError("children_view must be non-empty")
    total = sum(c.count for c in children_view)
    if total != parent.count:
        raise ValueError(
            f"child counts sum to {total}, parent count is {parent.count}"
        )
    u_parent = node_entropy(parent, cfg)
    cu = 0.0
    for c in children_view:
        cu += (c.count / parent.count) * (u_parent - node_entropy(c, cfg))
    return cu


def _entropy_stats(count: int, m2: np.ndarray, eps: float) -> float:
    var = m2 / count + eps
    return 0.5 * float(np.sum(LOG_2PI_E + np.log(var)))


def _stack_stats(nodes: Sequence[ConceptNode]):
    """Row-stack (counts, means, m2) for a list of nodes."""
    counts = np.array([n.count for n in nodes], dtype=np.float64)
    means = np.stack([n.mean for n in nodes])
    m2s = np.stack([n.m2 for n in nodes])
    return counts, means, m2s


def _row_entropies(counts: np.ndarray, m2s: np.ndarray, eps: float) -> np.ndarray:
    var = m2s / counts[:, None] + eps
    return 0.5 * np.sum(LOG_2PI_E + np.log(var), axis=1)


def _absorbed_rows(counts: np.ndarray, means: np.ndarray, m2s: np.ndarray, x: np.ndarray):
    """Per-row stats after each node hypothetically absorbs x (no mutation)."""
    n2 = counts + 1.0
    delta = x[None, :] - means
    mean2 = means + delta / n2[:, None]
    m2b = m2s + delta * (x[None, :] - mean2)
    return n2, m2b


def _row_log_likelihoods(
    counts: np.ndarray, means: np.ndarray, m2s: np.ndarray, x: np.ndarray, eps: float
) -> np.ndarray:
    var = m2s / counts[:, None] + eps
    sq = (x[None, :] - means) ** 2
    return -0.5 * np.sum(np.log(2.0 * math.pi * var) + sq / var, axis=1)


def _absorbed(count: int, mean: np.ndarray, m2: np.ndarray, x: np.ndarray):
    """Stats of a child after hypothetically absorbing x (no mutation)."""
    n = count + 1
    delta = x - mean
    mean2 = mean + delta / n
    m2b = m2 + delta * (x - mean2)
    return n, mean2, m2b


def _log_likelihood(node: ConceptNode, x: np.ndarray, eps: float) -> float:
    var = node.m2 / node.count + eps
    return -0.5 * float(np.sum(np.log(2.0 * math.pi * var) + (x - node.mean) ** 2 / var))


class ConceptTree:
    """Mutable concept hierarchy with single-writer semantics.

    All mutation flows through :meth:`ifit`; reads (:meth:`categorize`,
    entropy/CU queries) never touch node state. Node ids are assigned
    monotonically and never reused.
    """

    def __init__(self, cfg: TreeConfig):
        self.cfg = cfg
        self.nodes: dict[int, ConceptNode] = {}
        self.root_id: Optional[int] = None
        self._next_id = 0
        self.operator_counts = {op: 0 for op in Operator}
        self.doc_count = 0

    # ------------------------------------------------------------------ util

    @property
    def dimensionality(self) -> int:
        return self.cfg.dimensionality

    def _new_id(self) -> int:
        nid = self._next_id
        self._next_id += 1
        return nid

    def node(self, node_id: int) -> ConceptNode:
        return self.nodes[node_id]

    @property
    def root(self) -> Optional[ConceptNode]:
        return None if self.root_id is None else self.nodes[self.root_id]

    def is_empty(self) -> bool:
        return self.root_id is None

    def leaves(self) -> Iterable[ConceptNode]:
        return (n for n in self.nodes.values() if n.is_leaf)

    def depth(self) -> int:
        if self.root_id is None:
            return 0

        def _d(nid: int) -> int:
            node = self.nodes[nid]
            if node.is_leaf:
                return 1
            return 1 + max(_d(c) for c in node.children)

        return _d(self.root_id)

    def subtree_doc_ids(self, node_id: int) -> list[str]:
        out: list[str] = []
        stack = [node_id]
        while stack:
            n = self.nodes[stack.pop()]
            if n.is_leaf:
                out.extend(n.doc_ids)
            else:
                stack.extend(reversed(n.children))
        return out

    # ------------------------------------------------------- operator scoring

    def _children_of(self, node: ConceptNode) -> list[ConceptNode]:
        return [self.nodes[c] for c in node.children]

    def _rank_children(self, parent: ConceptNode, children: list[ConceptNode], x: np.ndarray):
        """Score each child by the partition CU after it absorbs x.

        ``parent`` stats must already include x. Returns (scores aligned with
        ``children``, ranked index order). Ranking ties break by
        log-likelihood of x under the child, then by smaller node id.
        """
        eps = self.cfg.variance_floor
        n_p = parent.count
        u_p = _entropy_stats(parent.count, parent.m2, eps)
        counts, means, m2s = _stack_stats(children)
        base_terms = (counts / n_p) * (u_p - _row_entropies(counts, m2s, eps))
        base = float(np.sum(base_terms))
        n2, m2b = _absorbed_rows(counts, means, m2s, x)
        absorbed_terms = (n2 / n_p) * (u_p - _row_entropies(n2, m2b, eps))
        scores = list(base - base_terms + absorbed_terms)
        lls = _row_log_likelihoods(counts, means, m2s, x, eps)
        order = sorted(
            range(len(children)),
            key=lambda i: (-scores[i], -lls[i], children[i].id),
        )
        return scores, order

    def evaluate_operators(self, node_id: int, x: np.ndarray) -> OperatorDecision:
        """Score the four operators for placing x under an internal node.

        Assumes the node's own stats already include x (stats on the descent
        path are updated before operator selection). Each candidate score is
        the category utility of the hypothetical partition normalized by its
        number of children; without the normalizer, singleton children are
        maximally certain under the variance floor and NEW dominates every
        other operator, collapsing the tree into a flat star.
        """
        node = self.nodes[node_id]
        if node.is_leaf:
            raise ValueError("operator evaluation applies to internal nodes only")
        x = _check_vector(x, self.dimensionality)
        eps = self.cfg.variance_floor
        children = self._children_of(node)
        k = len(children)
        n_p = node.count
        u_p = _entropy_stats(node.count, node.m2, eps)

        # Partition terms for the current children; every candidate partition
        # below is the same sum with one or two terms swapped out.
        counts, means, m2s = _stack_stats(children)
        base_terms = (counts / n_p) * (u_p - _row_entropies(counts, m2s, eps))
        base = float(np.sum(base_terms))
        n2, m2b = _absorbed_rows(counts, means, m2s, x)
        absorbed_terms = (n2 / n_p) * (u_p - _row_entropies(n2, m2b, eps))
        insert_scores = base - base_terms + absorbed_terms
        lls = _row_log_likelihoods(counts, means, m2s, x, eps)
        order = sorted(
            range(k), key=lambda i: (-insert_scores[i], -lls[i], children[i].id)
        )
        c1 = children[order[0]]
        c2 = children[order[1]] if k > 1 else None

        scores: dict[Operator, float] = {}
        scores[Operator.INSERT] = float(insert_scores[order[0]]) / k

        u_singleton = 0.5 * self.dimensionality * (LOG_2PI_E + math.log(eps))
        scores[Operator.NEW] = (base + (1.0 / n_p) * (u_p - u_singleton)) / (k + 1)

        if c2 is not None:
            pooled = merge_stats(c1, c2)
            update_stats(pooled, x)
            u_pooled = _entropy_stats(pooled.count, pooled.m2, eps)
            merged_term = (pooled.count / n_p) * (u_p - u_pooled)
            cu_merge = (
                base
                - float(base_terms[order[0]])
                - float(base_terms[order[1]])
                + merged_term
            )
            scores[Operator.MERGE] = cu_merge / (k - 1)
        else:
            scores[Operator.MERGE] = -math.inf

        if not c1.is_leaf:
            promoted = [c for c in children if c.id != c1.id] + self._children_of(c1)
            p_counts, p_means, p_m2s = _stack_stats(promoted)
            p_terms = (p_counts / n_p) * (u_p - _row_entropies(p_counts, p_m2s, eps))
            p_base = float(np.sum(p_terms))
            pn2, pm2b = _absorbed_rows(p_counts, p_means, p_m2s, x)
            p_absorbed = (pn2 / n_p) * (u_p - _row_entropies(pn2, pm2b, eps))
            split_scores = (p_base - p_terms + p_absorbed) / len(promoted)
            scores[Operator.SPLIT] = float(np.max(split_scores))
        else:
            scores[Operator.SPLIT] = -math.inf

        chosen = max(scores, key=lambda op: (scores[op], _TIE_ORDER[op]))
        return OperatorDecision(
            operator=chosen,
            node_id=node_id,
            scores=scores,
            best_child=c1.id,
            second_child=None if c2 is None else c2.id,
        )

    # ---------------------------------------------------------------- fitting

    def _make_leaf(self, x: np.ndarray, doc_id: str, parent_id: Optional[int]) -> ConceptNode:
        leaf = ConceptNode(
            id=self._new_id(),
            count=1,
            mean=x.copy(),
            m2=np.zeros_like(x),
            doc_ids=[doc_id],
            parent_id=parent_id,
        )
        self.nodes[leaf.id] = leaf
        return leaf

    def _fracture_leaf(self, leaf: ConceptNode, x: np.ndarray, doc_id: str) -> int:
        """Turn a leaf into an internal node over a copy of itself plus a new
        singleton leaf for the incoming document. Counted as one NEW."""
        twin = leaf.copy_stats()
        twin.id = self._new_id()
        twin.parent_id = leaf.id
        twin.children = []
        self.nodes[twin.id] = twin
        new_leaf = self._make_leaf(x, doc_id, parent_id=leaf.id)
        leaf.children = [twin.id, new_leaf.id]
        leaf.doc_ids = []
        update_stats(leaf, x)
        self.operator_counts[Operator.NEW] += 1
        return new_leaf.id

    def _perform_merge(self, node: ConceptNode, c1: int, c2: int) -> int:
        a, b = self.nodes[c1], self.nodes[c2]
        merged = merge_stats(a, b, merged_id=self._new_id())
        merged.parent_id = node.id
        a.parent_id = merged.id
        b.parent_id = merged.id
        self.nodes[merged.id] = merged
        node.children[node.children.index(c1)] = merged.id
        node.children.remove(c2)
        return merged.id

    def _perform_split(self, node: ConceptNode, c1: int) -> None:
        child = self.nodes[c1]
        pos = node.children.index(c1)
        node.children = (
            node.children[:pos] + list(child.children) + node.children[pos + 1 :]
        )
        for gc in child.children:
            self.nodes[gc].parent_id = node.id
        del self.nodes[c1]

    def ifit(self, doc_id: str, x: np.ndarray) -> int:
        """Incorporate one document, returning the id of its new leaf."""
        x = _check_vector(x, self.dimensionality)
        if self.root_id is None:
            leaf = self._make_leaf(x, doc_id, parent_id=None)
            self.root_id = leaf.id
            self.operator_counts[Operator.NEW] += 1
            self.doc_count += 1
            return leaf.id

        cur = self.root_id
        while True:
            node = self.nodes[cur]
            if node.is_leaf:
                new_leaf = self._fracture_leaf(node, x, doc_id)
                self.doc_count += 1
                return new_leaf
            update_stats(node, x)
            while True:
                decision = self.evaluate_operators(cur, x)
                op = decision.operator
                self.operator_counts[op] += 1
                if op is Operator.SPLIT:
                    self._perform_split(node, decision.best_child)
                    continue  # re-evaluate at the same node
                break
            if op is Operator.NEW:
                leaf = self._make_leaf(x, doc_id, parent_id=node.id)
                node.children.append(leaf.id)
                self.doc_count += 1
                return leaf.id
            if op is Operator.MERGE:
                cur = self._perform_merge(node, decision.best_child, decision.second_child)
            else:  # INSERT
                cur = decision.best_child

    # ---------------------------------------------------------------- reading

    def categorize(self, x: np.ndarray) -> list[int]:
        """Read-only root-to-leaf descent by the insertion-scoring criterion."""
        if self.root_id is None:
            raise ValueError("cannot categorize into an empty tree")
        x = _check_vector(x, self.dimensionality)
        path = [self.root_id]
        cur = self.nodes[self.root_id]
        while not cur.is_leaf:
            # score against the node as if it had absorbed x, mirroring ifit
            ghost = cur.copy_stats()
            update_stats(ghost, x)
            _, order = self._rank_children(ghost, self._children_of(cur), x)
            nxt = cur.children[order[0]]
            path.append(nxt)
            cur = self.nodes[nxt]
        return path

    # ------------------------------------------------------------ persistence

    SNAPSHOT_VERSION = 1

    def to_snapshot(self) -> dict:
        nodes = []
        for nid in sorted(self.nodes):
            n = self.nodes[nid]
            nodes.append(
                {
                    "id": n.id,
                    "parent_id": n.parent_id,
                    "count": n.count,
                    "mean": [float(v) for v in n.mean],
                    "m2": [float(v) for v in n.m2],
                    "doc_ids": list(n.doc_ids),
                }
            )
        return {
            "header": {
                "format_version": self.SNAPSHOT_VERSION,
                "D": self.dimensionality,
                "variance_floor": self.cfg.variance_floor,
                "node_count": len(self.nodes),
                "doc_count": self.doc_count,
            },
            "root_id": self.root_id,
            "next_id": self._next_id,
            "operator_counts": {op.value: c for op, c in self.operator_counts.items()},
            "nodes": nodes,
        }

    @classmethod
    def from_snapshot(cls, data: dict, expected_dim: Optional[int] = None) -> "ConceptTree":
        try:
            header = data["header"]
            version = header["format_version"]
            dim = header["D"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed tree snapshot: {exc}") from exc
        if version != cls.SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        if expected_dim is not None and dim != expected_dim:
            raise ValueError(f"snapshot dimensionality {dim} != expected {expected_dim}")
        tree = cls(TreeConfig(dimensionality=dim, variance_floor=header["variance_floor"]))
        for rec in data["nodes"]:
            node = ConceptNode(
                id=rec["id"],
                count=rec["count"],
                mean=np.array(rec["mean"], dtype=np.float64),
                m2=np.array(rec["m2"], dtype=np.float64),
                doc_ids=list(rec["doc_ids"]),
                parent_id=rec["parent_id"],
            )
            tree.nodes[node.id] = node
        for node in tree.nodes.values():
            if node.parent_id is not None:
                tree.nodes[node.parent_id].children.append(node.id)
        # restore child ordering: snapshots carry it explicitly when present
        if "child_order" in data:
            for nid, order in data["child_order"].items():
                tree.nodes[int(nid)].children = list(order)
        tree.root_id = data["root_id"]
        tree._next_id = data["next_id"]
        tree.operator_counts = {
            Operator(k): v for k, v in data["operator_counts"].items()
        }
        tree.doc_count = header["doc_count"]
        if len(tree.nodes) != header["node_count"]:
            raise ValueError("snapshot node_count disagrees with node records")
        return tree

    def save(self, path: str) -> None:
        snap = self.to_snapshot()
        snap["child_order"] = {
            str(n.id): list(n.children) for n in self.nodes.values() if n.children
        }
        _atomic_write_json(path, snap)

    @classmethod
    def load(cls, path: str, expected_dim: Optional[int] = None) -> "ConceptTree":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"unreadable tree snapshot {path}: {exc}") from exc
        return cls.from_snapshot(data, expected_dim=expected_dim)


def _atomic_write_json(path: str, payload: dict) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
