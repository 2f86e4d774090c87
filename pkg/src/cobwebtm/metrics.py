"""Evaluation metrics for streaming topic models.

Sliding-window co-occurrence counting plus the quantities reported per
batch: NPMI, C_v coherence, adjusted Rand index, topic centroid drift,
intruder similarity, parent-child coherence, and sibling diversity. All
operations are pure; the co-occurrence table is immutable once built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np


class VocabularyError(KeyError):
    """A queried word is not in the co-occurrence vocabulary."""


@dataclass(frozen=True)
class CooccurrenceTable:
    vocabulary: frozenset
    window_count: int
    word_window_counts: Mapping[str, int]
    pair_window_counts: Mapping[frozenset, int]
    window_size: int
    smoothing_eps: float = 1e-12

    def p_word(self, w: str) -> float:
        if w not in self.vocabulary:
            raise VocabularyError(w)
        return self.word_window_counts.get(w, 0) / self.window_count

    def pair_count(self, w1: str, w2: str) -> int:
        return self.pair_window_counts.get(frozenset((w1, w2)), 0)


def build_cooccurrence(docs: Iterable[Sequence[str]], window_size: int) -> CooccurrenceTable:
    """Count word and word-pair presence over stride-1 sliding windows.

    Documents shorter than the window contribute a single window. Presence
    is boolean per window.
    """
    if window_size < 1:
        raise ValueError("window_size must be >= 1")
    docs = [list(d) for d in docs]
    if not docs:
        raise ValueError("empty corpus")
    vocab: set = set()
    word_counts: dict = {}
    pair_counts: dict = {}
    n_windows = 0
    for tokens in docs:
        vocab.update(tokens)
        if not tokens:
            continue
        if len(tokens) <= window_size:
            windows = [tokens]
        else:
            windows = [
                tokens[i : i + window_size]
                for i in range(len(tokens) - window_size + 1)
            ]
        for win in windows:
            n_windows += 1
            present = sorted(set(win))
            for w in present:
                word_counts[w] = word_counts.get(w, 0) + 1
            for a, b in combinations(present, 2):
                key = frozenset((a, b))
                pair_counts[key] = pair_counts.get(key, 0) + 1
    if n_windows == 0:
        raise ValueError("corpus contains no tokens")
    return CooccurrenceTable(
        vocabulary=frozenset(vocab),
        window_count=n_windows,
        word_window_counts=word_counts,
        pair_window_counts=pair_counts,
        window_size=window_size,
    )


def npmi(w_i: str, w_j: str, table: CooccurrenceTable) -> float:
    """Normalized pointwise mutual information in [-1, 1].

    Boundary conventions: zero co-occurrence -> -1, co-occurrence in every
    window -> 1; smoothing applies only inside the logs of the general case.
    """
    for w in (w_i, w_j):
        if w not in table.vocabulary:
            raise VocabularyError(w)
    pair = table.pair_count(w_i, w_j) if w_i != w_j else table.word_window_counts.get(w_i, 0)
    if pair == 0:
        return -1.0
    p_ij = pair / table.window_count
    if p_ij == 1.0:
        return 1.0
    eps = table.smoothing_eps
    p_i = table.p_word(w_i)
    p_j = table.p_word(w_j)
    value = math.log((p_ij + eps) / ((p_i + eps) * (p_j + eps))) / (-math.log(p_ij + eps))
    return max(-1.0, min(1.0, value))


def topic_npmi(topic_words: Sequence[str], table: CooccurrenceTable) -> Optional[float]:
    """Mean NPMI over all unordered word pairs; None when fewer than two
    topic words are in the vocabulary (missing, not zero)."""
    if len(topic_words) < 2:
        raise ValueError("topic needs at least two words")
    in_vocab = [w for w in dict.fromkeys(topic_words) if w in table.vocabulary]
    if len(in_vocab) < 2:
        return None
    vals = [npmi(a, b, table) for a, b in combinations(in_vocab, 2)]
    return float(np.mean(vals))


def cv_coherence(
    topic_words: Sequence[str], table: CooccurrenceTable
) -> tuple[Optional[float], list[str]]:
    """C_v: mean pairwise cosine of per-word NPMI vectors.

    v(w_i) = (NPMI(w_i, w_1), ..., NPMI(w_i, w_N)) with NPMI(w, w) := 1.
    Returns (score, flags); zero-norm vectors contribute 0 to their pairs and
    are flagged. None when fewer than two words are in vocabulary.
    """
    words = [w for w in dict.fromkeys(topic_words) if w in table.vocabulary]
    if len(topic_words) < 2:
        raise ValueError("topic needs at least two words")
    if len(words) < 2:
        return None, list(dict.fromkeys(topic_words))
    n = len(words)
    vecs = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            vecs[i, j] = 1.0 if i == j else npmi(words[i], words[j], table)
    norms = np.linalg.norm(vecs, axis=1)
    flags = [words[i] for i in range(n) if norms[i] == 0.0]
    total = 0.0
    count = 0
    for i, j in combinations(range(n), 2):
        count += 1
        if norms[i] == 0.0 or norms[j] == 0.0:
            continue
        total += float(np.dot(vecs[i], vecs[j]) / (norms[i] * norms[j]))
    return total / count, flags


def ari(labels_a: Mapping[str, object], labels_b: Mapping[str, object]) -> float:
    """Adjusted Rand index between two labelings of the same documents.

    Degenerate pairs (both all-singletons or both one cluster) score 1.
    """
    if set(labels_a) != set(labels_b):
        raise ValueError("labelings cover different document sets")
    keys = sorted(labels_a)
    if len(keys) < 2:
        raise ValueError("need at least two documents")
    # contingency table
    table: dict = {}
    counts_a: dict = {}
    counts_b: dict = {}
    for k in keys:
        la, lb = labels_a[k], labels_b[k]
        table[(la, lb)] = table.get((la, lb), 0) + 1
        counts_a[la] = counts_a.get(la, 0) + 1
        counts_b[lb] = counts_b.get(lb, 0) + 1

    def comb2(m: int) -> float:
        return m * (m - 1) / 2.0

    n = len(keys)
    sum_ij = sum(comb2(v) for v in table.values())
    sum_a = sum(comb2(v) for v in counts_a.values())
    sum_b = sum(comb2(v) for v in counts_b.values())
    expected = sum_a * sum_b / comb2(n)
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return (sum_ij - expected) / (max_index - expected)


def tcd(
    pairs: Sequence[tuple[int, int, float]],
    prev_centroids: Mapping[int, np.ndarray],
    curr_centroids: Mapping[int, np.ndarray],
) -> tuple[Optional[float], list[tuple[int, int]]]:
    """Topic centroid drift: mean (1 - cosine) over matched topic pairs.

    Zero-norm centroids exclude their pair and flag it. Returns
    (mean drift or None, flagged pairs).
    """
    if not pairs:
        raise ValueError("need at least one matched pair")
    drifts = []
    flags = []
    for pid, cid, _ in pairs:
        a = np.asarray(prev_centroids[pid], dtype=float)
        b = np.asarray(curr_centroids[cid], dtype=float)
        na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
        if na == 0.0 or nb == 0.0:
            flags.append((pid, cid))
            continue
        drifts.append(1.0 - float(np.dot(a, b) / (na * nb)))
    return (float(np.mean(drifts)) if drifts else None), flags


def isim(
    topics: Sequence[Sequence[str]],
    word_vectors: Mapping[str, np.ndarray],
    n_intruders: int = 15,
    seed: int = 0,
) -> float:
    """Intruder similarity: mean cosine between randomly drawn intruder words
    and each topic's words, averaged over intruders then topics. Lower is
    better."""
    vocab = sorted(word_vectors)
    rng = np.random.default_rng(seed)
    topic_scores = []
    for words in topics:
        for w in words:
            if w not in word_vectors:
                raise VocabularyError(w)
        pool = [w for w in vocab if w not in set(words)]
        if not pool:
            raise ValueError("vocabulary must be larger than the topic word set")
        idx = rng.choice(len(pool), size=min(n_intruders, len(pool)), replace=False)
        intruders = [pool[i] for i in sorted(idx)]
        topic_mat = np.stack([np.asarray(word_vectors[w], dtype=float) for w in words])
        topic_norms = np.linalg.norm(topic_mat, axis=1)
        per_intruder = []
        for intr in intruders:
            v = np.asarray(word_vectors[intr], dtype=float)
            nv = float(np.linalg.norm(v))
            sims = topic_mat @ v / np.where(topic_norms * nv == 0, 1, topic_norms * nv)
            per_intruder.append(float(np.mean(sims)))
        topic_scores.append(float(np.mean(per_intruder)))
    return float(np.mean(topic_scores))


def pcc(
    child_words: Sequence[str],
    parent_words: Sequence[str],
    table: CooccurrenceTable,
) -> Optional[float]:
    """Parent-child coherence: mean NPMI over cross pairs after removing the
    shared words from both lists. None (missing) when a reduced list is
    empty."""
    if not child_words or not parent_words:
        raise ValueError("word lists must be non-empty")
    overlap = set(child_words) & set(parent_words)
    child = [w for w in dict.fromkeys(child_words) if w not in overlap]
    parent = [w for w in dict.fromkeys(parent_words) if w not in overlap]
    if not child or not parent:
        return None
    vals = [npmi(c, p, table) for c in child for p in parent]
    return float(np.mean(vals))


def sibling_diversity(sibling_word_sets: Sequence[Iterable[str]]) -> float:
    """Fraction of distinct words appearing in exactly one sibling's set."""
    if len(sibling_word_sets) < 2:
        raise ValueError("need at least two siblings")
    sets = [set(s) for s in sibling_word_sets]
    membership: dict = {}
    for s in sets:
        for w in s:
            membership[w] = membership.get(w, 0) + 1
    unique = sum(1 for w, k in membership.items() if k == 1)
    return unique / len(membership)
