"""Stream a synthetic corpus and watch topics form, batch by batch.

Four well-separated Gaussian "themes" arrive shuffled; after each batch the
harness recuts the hierarchy, aligns topics with the previous batch, and
reports stability metrics. By the end the four themes are recovered exactly.
"""

import numpy as np

from cobwebtm.corpus_io import DocumentRecord
from cobwebtm.harness import ExperimentConfig, run_experiment

rng = np.random.default_rng(0)

THEMES = {
    "space": ["orbit", "lander", "telescope", "comet", "thruster"],
    "cooking": ["saute", "broth", "knead", "simmer", "zest"],
    "tennis": ["backhand", "volley", "deuce", "tiebreak", "topspin"],
    "geology": ["basalt", "stratum", "moraine", "fault", "magma"],
}

DIM = 16
centers = {name: np.zeros(DIM) for name in THEMES}
for i, name in enumerate(THEMES):
    centers[name][i * 4 : (i + 1) * 4] = 10.0

docs = []
for name, words in THEMES.items():
    for j in range(80):
        tokens = [words[k] for k in rng.integers(0, len(words), size=12)]
        docs.append(
            DocumentRecord(
                id=f"{name}-{j}",
                tokens=tokens,
                embedding=centers[name] + rng.normal(scale=0.5, size=DIM),
                label=name,
            )
        )
rng.shuffle(docs)
for pos, d in enumerate(docs):
    d.arrival_index = pos

config = ExperimentConfig(
    max_clusters=6, initial_batch=40, batch_size=40, leaf_ratio=0.15, seed=0
)
reports = run_experiment(config, docs)

print(f"streamed {len(docs)} documents in {len(reports)} batches\n")
print("batch  topics  matched  new  ARI     TCD       top words of first topic")
for r in reports:
    ari = r.metrics.get("ari")
    tcd = r.metrics.get("tcd")
    words = ", ".join(w for w, _ in r.topics[0]["top_words"][:3]) if r.topics else "-"
    print(
        f"{r.batch_index:>5}  {r.n_topics:>6}  {r.matched:>7}  {r.new_topics:>3}  "
        f"{'-' if ari is None else f'{ari:.3f}'}  "
        f"{'-' if tcd is None else f'{tcd:.2e}'}  {words}"
    )

print("\nfinal topics:")
truth = {d.id: d.label for d in docs}
final = reports[-1]
for topic in final.topics:
    members = [doc for doc, uid in final.assignment.items() if uid == topic["topic_uid"]]
    labels = sorted({truth[m] for m in members})
    words = ", ".join(w for w, _ in topic["top_words"][:5])
    print(f"  topic {topic['topic_uid']}: {len(members)} docs, themes {labels}: {words}")
