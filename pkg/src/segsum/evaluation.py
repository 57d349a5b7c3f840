"""Reference-based and reference-free summary metrics.

ROUGE here is self-contained: lowercased tokens from the package tokenizer,
multiset n-gram overlap, no stemming.  Entity metrics run a capitalization
heuristic over raw sentence strings, so they see casing the tokenizer
throws away.
"""

import re

# Function words that never start an entity run at the head of a sentence.
ENTITY_STOPWORDS = frozenset({
    "the", "a", "an", "this", "that", "these", "those", "it", "its", "he",
    "she", "they", "we", "i", "you", "his", "her", "their", "our", "in",
    "on", "at", "by", "of", "to", "for", "with", "from", "as", "and", "or",
    "but", "if", "when", "while", "after", "before", "because", "so",
    "however", "moreover", "also", "although", "though", "there", "here",
    "what", "which", "who", "how", "why", "where", "not", "no", "yes",
    "then", "later", "finally", "first", "second", "third", "next", "now",
    "today", "yesterday", "meanwhile", "again", "once", "only", "some",
    "many", "most", "both", "each", "every", "all", "one", "two", "three",
})

_NUMBER_RE = re.compile(r"\d[\d,.\-/]*")


def _counts(tokens, n):
    out = {}
    for i in range(len(tokens) - n + 1):
        key = tuple(tokens[i:i + n])
        out[key] = out.get(key, 0) + 1
    return out


def _prf(overlap, n_cand, n_ref):
    if n_cand == 0 and n_ref == 0:
        return {"precision": 1.0, "recall": 1.0, "f1": 1.0}
    if n_cand == 0 or n_ref == 0:
        return {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    p = overlap / n_cand
    r = overlap / n_ref
    f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return {"precision": p, "recall": r, "f1": f1}


def rouge_n_tokens(cand_tokens, ref_tokens, n):
    """Multiset n-gram overlap precision/recall/F1 on token lists."""
    c = _counts(cand_tokens, n)
    r = _counts(ref_tokens, n)
    overlap = sum(min(cnt, r.get(g, 0)) for g, cnt in c.items())
    return _prf(overlap, sum(c.values()), sum(r.values()))


def rouge_l_tokens(cand_tokens, ref_tokens):
    """Longest-common-subsequence precision/recall/F1 on token lists."""
    m, n = len(cand_tokens), len(ref_tokens)
    if m == 0 or n == 0:
        return _prf(0, m, n)
    prev = [0] * (n + 1)
    for i in range(1, m + 1):
        row = [0] * (n + 1)
        ci = cand_tokens[i - 1]
        for j in range(1, n + 1):
            if ci == ref_tokens[j - 1]:
                row[j] = prev[j - 1] + 1
            else:
                row[j] = row[j - 1] if row[j - 1] >= prev[j] else prev[j]
        prev = row
    return _prf(prev[n], m, n)


def rouge_n(candidate, reference, n):
    from .pipeline import tokenize_text

    return rouge_n_tokens(tokenize_text(candidate), tokenize_text(reference), n)


def rouge_l(candidate, reference):
    from .pipeline import tokenize_text

    return rouge_l_tokens(tokenize_text(candidate), tokenize_text(reference))


def _classify(raw_token):
    """Strip surrounding punctuation; return (core, kind) with kind in
    {'cap', 'num', 'other'}."""
    core = raw_token.strip("\"'`.,;:!?()[]{}<>")
    if not core:
        return "", "other"
    if _NUMBER_RE.fullmatch(core):
        return core, "num"
    if core[0].isupper():
        return core, "cap"
    return core, "other"


def extract_entities(sentences):
    """Capitalization-heuristic mentions: maximal runs of capitalized tokens
    plus standalone numbers; surfaces normalized to lowercase.

    The first token of a sentence joins a run only when it is capitalized
    and not a stopword, so ordinary sentence-initial capitals are ignored.
    """
    mentions = []
    for si, sent in enumerate(sentences):
        run = []
        for ti, raw in enumerate(sent.split()):
            core, kind = _classify(raw)
            if kind == "num":
                if run:
                    mentions.append((" ".join(run).lower(), si))
                    run = []
                mentions.append((core.lower(), si))
                continue
            ok = kind == "cap"
            if ok and ti == 0 and core.lower() in ENTITY_STOPWORDS:
                ok = False
            if ok:
                run.append(core)
            elif run:
                mentions.append((" ".join(run).lower(), si))
                run = []
        if run:
            mentions.append((" ".join(run).lower(), si))
    return mentions


def entity_precision(summary_sentences, document_sentences):
    """|summary entities present in document| / |summary entities| on surface
    sets; an entity-free summary scores 1.0 by convention."""
    summ = {m for m, _ in extract_entities(summary_sentences)}
    if not summ:
        return 1.0
    doc = {m for m, _ in extract_entities(document_sentences)}
    return len(summ & doc) / len(summ)


def entity_graph(summary_sentences, weighted=True):
    """Connectivity of summary sentences through shared entity surfaces.

    Projects the sentence-entity bipartite graph onto sentences (edge weight
    = shared surface count, or 1 if unweighted) and averages each sentence's
    total edge weight toward later sentences.
    """
    n = len(summary_sentences)
    if n <= 1:
        return 0.0
    per_sentence = [set() for _ in range(n)]
    for surface, si in extract_entities(summary_sentences):
        per_sentence[si].add(surface)
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            shared = len(per_sentence[i] & per_sentence[j])
            if shared:
                total += shared if weighted else 1.0
    return total / n


def score_sample(summary_text, reference_text, document_sentences, weighted_graph=True):
    from .pipeline import split_sentences, tokenize_text

    cand = tokenize_text(summary_text)
    ref = tokenize_text(reference_text)
    summ_sents = split_sentences(summary_text)
    return {
        "rouge1": rouge_n_tokens(cand, ref, 1)["f1"],
        "rouge2": rouge_n_tokens(cand, ref, 2)["f1"],
        "rougeL": rouge_l_tokens(cand, ref)["f1"],
        "ent_precision": entity_precision(summ_sents, document_sentences),
        "ent_graph": entity_graph(summ_sents, weighted=weighted_graph),
    }


METRIC_NAMES = ["rouge1", "rouge2", "rougeL", "ent_precision", "ent_graph"]


def evaluate_corpus(system_by_id, references, weighted_graph=True):
    """Score system summaries against reference records.

    system_by_id: {id: summary string}; references: iterable of dataset
    records with id/document/summary.  Returns the report dict with
    per-sample scores and corpus means.
    """
    from . import pipeline

    samples = []
    for rec in references:
        doc, ref_sents = pipeline.ingest_record(rec)
        if doc.id not in system_by_id:
            raise ValueError(f"no system output for sample id '{doc.id}'")
        scores = score_sample(system_by_id[doc.id], " ".join(ref_sents),
                              doc.sentences, weighted_graph=weighted_graph)
        samples.append({"id": doc.id, **scores})
    means = {
        m: (sum(s[m] for s in samples) / len(samples) if samples else 0.0)
        for m in METRIC_NAMES
    }
    return {"n_samples": len(samples), "means": means, "samples": samples}
