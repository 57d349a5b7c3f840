"""Synthetic cross-segment benchmark generator.

Each document spans several topical segments.  The first segment opens with
a declaration naming the document's subject token; every segment plants one
salient sentence carrying that segment's content tokens.  Reference summary
sentences repeat the local content tokens *and the subject*, so summarizing
any segment after the first correctly requires information carried over
from segment one: exactly the global-context gap between a per-segment
system and a memory-augmented one.

Decoy sentences reuse the salient template with off-summary content tokens,
so extraction is informative but not trivial.

Generation is deterministic per (seed, doc index); corpora are reproducible
record by record.
"""

import numpy as np

SUBJECTS = [
    "kovar", "mitra", "selda", "norin", "tavek", "rusol", "pemba", "giltan",
    "vossin", "arlen", "dekka", "sorin", "malory", "tirex", "ulban", "wexly",
]

CONTENT = [
    "cargo", "ledger", "harbor", "signal", "tunnel", "marble", "copper",
    "velvet", "lantern", "orchard", "saddle", "anchor", "bridge", "canyon",
    "drumlin", "ember", "falcon", "garnet", "hollow", "island", "jasper",
    "kettle", "lagoon", "meadow", "needle", "onyx", "prairie", "quarry",
    "ridge", "spire", "thicket", "umber", "willow", "zephyr", "beacon",
    "cinder", "dagger", "engine", "furnace", "grotto",
]

FILLER = [
    "matters", "remained", "quiet", "during", "routine", "checks", "while",
    "staff", "kept", "usual", "records", "nearby", "offices", "noted",
    "minor", "general", "plain", "common", "weekly", "visits",
]


def _filler_sentence(rng):
    k = int(rng.integers(4, 7))
    return "the " + " ".join(rng.choice(FILLER, size=k, replace=False)) + " ."


def _decoy_sentence(rng, banned):
    pool = [c for c in CONTENT if c not in banned]
    picks = rng.choice(pool, size=3, replace=False)
    return "update covers " + " ".join(picks) + " ."


def generate_document(seed, index, n_segments=4):
    """One synthetic record: (sentences, summary sentences)."""
    rng = np.random.default_rng([seed, index])
    subject = SUBJECTS[int(rng.integers(0, len(SUBJECTS)))]
    content = rng.choice(CONTENT, size=(n_segments, 3), replace=False)

    sentences = []
    summary = []
    for t in range(n_segments):
        seg = []
        salient = "update covers " + " ".join(content[t]) + " ."
        seg.append(salient)
        seg.append(_decoy_sentence(rng, set(content.reshape(-1))))
        seg.append(_filler_sentence(rng))
        order = rng.permutation(len(seg))
        seg = [seg[i] for i in order]
        if t == 0:
            # the declaration always leads the document; the doubled subject
            # keeps its share of the segment from washing out
            seg.insert(0, f"topic {subject} opens the {subject} record .")
            summary.append("begin " + subject + " update notes "
                           + " ".join(content[t]) + " .")
        else:
            summary.append("again " + subject + " update notes "
                           + " ".join(content[t]) + " .")
        sentences.extend(seg)
    return sentences, summary


def generate_corpus(seed, n_docs, n_segments=4, start_id=0):
    """JSONL-ready records with pre-split sentences."""
    records = []
    for i in range(n_docs):
        idx = start_id + i
        sentences, summary = generate_document(seed, idx, n_segments)
        records.append({
            "id": f"syn{idx:05d}",
            "document": sentences,
            "summary": summary,
        })
    return records
