"""Streaming hierarchical topic modeling over dense document embeddings."""

from cobwebtm.tree import (
    ConceptNode,
    ConceptTree,
    Operator,
    OperatorDecision,
    TreeConfig,
    category_utility,
    merge_stats,
    node_entropy,
    update_stats,
)
from cobwebtm.topics import (
    FlatPartition,
    TopicAlignment,
    TopicDescriptor,
    ctfidf,
    extract_hierarchical_topics,
    flat_cut,
    flat_topic_descriptors,
    match_topics,
)
from cobwebtm.metrics import (
    CooccurrenceTable,
    ari,
    build_cooccurrence,
    cv_coherence,
    isim,
    npmi,
    pcc,
    sibling_diversity,
    tcd,
    topic_npmi,
)

__all__ = [
    "ConceptNode",
    "ConceptTree",
    "Operator",
    "OperatorDecision",
    "TreeConfig",
    "category_utility",
    "merge_stats",
    "node_entropy",
    "update_stats",
    "FlatPartition",
    "TopicAlignment",
    "TopicDescriptor",
    "ctfidf",
    "extract_hierarchical_topics",
    "flat_cut",
    "flat_topic_descriptors",
    "match_topics",
    "CooccurrenceTable",
    "ari",
    "build_cooccurrence",
    "cv_coherence",
    "isim",
    "npmi",
    "pcc",
    "sibling_diversity",
    "tcd",
    "topic_npmi",
]
