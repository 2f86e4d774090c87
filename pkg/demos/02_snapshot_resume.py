"""Pause an experiment mid-stream, restore it, and continue losslessly.

The harness snapshot captures the concept tree plus the cross-batch
alignment context, so a resumed run emits reports bit-identical to the
uninterrupted one (timing aside).
"""

import json
import tempfile

import numpy as np

from cobwebtm.corpus_io import DocumentRecord
from cobwebtm.harness import ExperimentConfig, ExperimentState, run_experiment

rng = np.random.default_rng(7)
DIM = 12

docs = []
for i in range(3):
    center = np.zeros(DIM)
    center[i * 4 : (i + 1) * 4] = 9.0
    for j in range(60):
        docs.append(
            DocumentRecord(
                id=f"c{i}-{j}",
                tokens=[f"word{i}_{k}" for k in rng.integers(0, 8, size=10)],
                embedding=center + rng.normal(scale=0.5, size=DIM),
            )
        )
rng.shuffle(docs)
for pos, d in enumerate(docs):
    d.arrival_index = pos

config = ExperimentConfig(max_clusters=5, initial_batch=30, batch_size=30, seed=1)

straight = run_experiment(config, docs)
print(f"uninterrupted run: {len(straight)} batches")

with tempfile.NamedTemporaryFile(suffix=".json") as snap:
    head = run_experiment(config, docs, snapshot_path=snap.name, max_batches=3)
    print(f"interrupted after batch {head[-1].batch_index} "
          f"({head[-1].docs_processed} docs in that batch); snapshot saved")

    state = ExperimentState.restore(snap.name, config, DIM)
    tail = run_experiment(config, docs, state=state)
    print(f"resumed from snapshot: {len(tail)} more batches")

resumed = [r.to_dict(include_timing=False) for r in head + tail]
original = [r.to_dict(include_timing=False) for r in straight]
identical = json.dumps(resumed, sort_keys=True) == json.dumps(original, sort_keys=True)
print(f"\nresumed report stream identical to uninterrupted run: {identical}")
