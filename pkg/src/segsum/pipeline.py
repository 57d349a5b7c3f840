"""Text pipeline: sentence splitting, tokenization, vocabulary, deterministic
sentence embeddings, semantic document segmentation, and target assignment.

All stages are pure functions of their inputs plus corpus statistics, so
identical inputs produce bit-identical outputs.
"""

import hashlib
import json
import re
import zlib
from dataclasses import dataclass, field

import numpy as np

# Trailing words that keep a following period from ending a sentence.
ABBREVIATIONS = frozenset({
    "dr", "mr", "mrs", "ms", "prof", "rev", "gen", "sen", "rep", "gov",
    "sr", "jr", "st", "vs", "etc", "inc", "ltd", "co", "corp", "dept",
    "univ", "assn", "bros", "fig", "no", "vol", "approx", "est", "min",
    "max", "e.g", "i.e", "al", "ave", "blvd",
})

_TOKEN_RE = re.compile(r"[a-z0-9]+|[^a-z0-9\s]")
_WORD_BEFORE_RE = re.compile(r"[A-Za-z][A-Za-z.]*$")


def split_sentences(text):
    """Split text into sentences on ., !, ? followed by whitespace and an
    uppercase letter (or end of text).

    A period is not a boundary after a listed abbreviation or after a single
    uppercase letter (an initial).  Whitespace is collapsed first, so joining
    the result with single spaces reconstructs the normalized text.
    """
    text = " ".join(text.split())
    if not text:
        return []
    sentences = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in ".!?":
            at_end = i + 1 >= n
            follows = (not at_end and text[i + 1] == " "
                       and i + 2 < n and text[i + 2].isupper())
            if (at_end or follows) and ch == ".":
                m = _WORD_BEFORE_RE.search(text[:i])
                word = m.group(0).lower() if m else ""
                if word in ABBREVIATIONS or (len(word) == 1 and not at_end
                                             and text[i - 1].isupper()):
                    i += 1
                    continue
            if follows:
                sentences.append(text[start:i + 1])
                start = i + 2
                i += 2
                continue
        i += 1
    if start < n:
        sentences.append(text[start:])
    return sentences


def tokenize_text(text):
    """Lowercase whitespace-and-punctuation tokenization to token strings."""
    return _TOKEN_RE.findall(text.lower())


RESERVED_TOKENS = ["<pad>", "<unk>", "<s>", "</s>", "<prev>", "<curr>", "<next>"]
PAD_ID, UNK_ID, BOS_ID, EOS_ID, PREV_ID, CURR_ID, NEXT_ID = range(7)

MARKER_DISPLAY = {
    PREV_ID: "Previous important sentences:",
    CURR_ID: "Current chunk:",
    NEXT_ID: "Next important sentences:",
}


class Vocab:
    """Frequency vocabulary with fixed reserved ids (ids dense from 0)."""

    def __init__(self, tokens):
        if tokens[:len(RESERVED_TOKENS)] != RESERVED_TOKENS:
            raise ValueError("vocabulary must start with the reserved tokens")
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def encode(self, token_strings):
        return [self.index.get(t, UNK_ID) for t in token_strings]

    def decode(self, ids):
        return [self.tokens[i] for i in ids]

    def detokenize(self, ids):
        """Render ids for display; markers show their surface strings."""
        parts = []
        for i in ids:
            if i in (PAD_ID, BOS_ID, EOS_ID):
                continue
            parts.append(MARKER_DISPLAY.get(i, self.tokens[i]))
        return " ".join(parts)

    def sha256(self):
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()

    def to_list(self):
        return list(self.tokens)


def build_vocab(token_lists, size=8000):
    """Top-`size` tokens by frequency (ties to the lexicographically first)."""
    counts = {}
    for toks in token_lists:
        for t in toks:
            counts[t] = counts.get(t, 0) + 1
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    keep = max(0, size - len(RESERVED_TOKENS))
    return Vocab(RESERVED_TOKENS + ranked[:keep])


@dataclass
class Document:
    """Sentence-split, tokenized document."""

    id: str
    sentences: list
    tokens: list = field(default_factory=list)

    def __post_init__(self):
        if not self.tokens:
            self.tokens = [tokenize_text(s) for s in self.sentences]

    def token_ids(self, vocab):
        return [vocab.encode(toks) for toks in self.tokens]

    def sentence_lengths(self):
        return [len(toks) for toks in self.tokens]


@dataclass
class SegmentedDocument:
    """Document plus contiguous segment ranges and per-segment target lists."""

    document: Document
    segments: list            # list of (start, stop) sentence-index ranges
    targets: list             # per segment, reference-sentence indices in order

    def segment_tokens(self, seg_idx):
        a, b = self.segments[seg_idx]
        out = []
        for toks in self.document.tokens[a:b]:
            out.extend(toks)
        return out


class IdfTable:
    """Sentence-level inverse document frequencies over a training corpus."""

    def __init__(self, df, n_sentences):
        self.df = df
        self.n_sentences = n_sentences

    def __call__(self, token):
        df = self.df.get(token, 0)
        return float(np.log((1.0 + self.n_sentences) / (1.0 + df)) + 1.0)


def build_idf(token_lists):
    df = {}
    n = 0
    for toks in token_lists:
        n += 1
        for t in set(toks):
            df[t] = df.get(t, 0) + 1
    return IdfTable(df, n)


def sentence_embedding(tokens, idf, dim=256):
    """Hashed TF-IDF bag of words, L2 normalized; empty input -> zero vector."""
    vec = np.zeros(dim)
    counts = {}
    for t in tokens:
        counts[t] = counts.get(t, 0) + 1
    for t, tf in counts.items():
        bucket = zlib.crc32(t.encode("utf-8")) % dim
        vec[bucket] += tf * idf(t)
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def _mean_cosine(embeddings, seg_indices, j):
    """Average cosine of sentence j against a segment's sentences.

    Embeddings are unit or zero vectors, so the dot product is the cosine.
    An empty segment scores -1 so it can never win the comparison.
    """
    if not seg_indices:
        return -1.0
    e = embeddings[j]
    return float(np.mean([e @ embeddings[i] for i in seg_indices]))


def segment_document(doc, idf, l_min=512, l_max=768, dim=256):
    """Greedy semantic segmentation of a document into token-budget ranges.

    Grows the current segment while it holds fewer than l_min tokens,
    finalizes it once it exceeds l_max, and otherwise sends the sentence to
    whichever of the current segment or the upcoming pseudo segment (future
    sentences up to l_min tokens) it is more similar to on average cosine.
    """
    if l_min >= l_max:
        raise ValueError(f"need l_min < l_max, got {l_min} >= {l_max}")
    n = len(doc.sentences)
    if n == 0:
        return []
    lengths = doc.sentence_lengths()
    embeddings = [sentence_embedding(toks, idf, dim) for toks in doc.tokens]

    ranges = []
    start = 0
    curr_len = 0
    for j in range(n):
        if curr_len < l_min:
            curr_len += lengths[j]
        elif curr_len > l_max:
            ranges.append((start, j))
            start = j
            curr_len = lengths[j]
        else:
            pseudo = []
            pseudo_len = 0
            for k in range(j + 1, n):
                if pseudo_len >= l_min:
                    break
                pseudo.append(k)
                pseudo_len += lengths[k]
            curr = list(range(start, j))
            if _mean_cosine(embeddings, pseudo, j) > _mean_cosine(embeddings, curr, j):
                ranges.append((start, j))
                start = j
                curr_len = lengths[j]
            else:
                curr_len += lengths[j]
    ranges.append((start, n))
    return ranges


def assign_targets(doc, ranges, reference_tokens):
    """Route each reference sentence to its best-overlap segment.

    Best = highest ROUGE-1 F1 + ROUGE-2 F1 against the segment's token
    stream; ties (including all-zero overlap) go to the earliest segment.
    Within a segment, targets keep reference order.
    """
    from . import evaluation

    seg_tokens = []
    for a, b in ranges:
        toks = []
        for ts in doc.tokens[a:b]:
            toks.extend(ts)
        seg_tokens.append(toks)
    targets = [[] for _ in ranges]
    for ri, ref in enumerate(reference_tokens):
        best, best_score = 0, -1.0
        for si, seg in enumerate(seg_tokens):
            s = (evaluation.rouge_n_tokens(ref, seg, 1)["f1"]
                 + evaluation.rouge_n_tokens(ref, seg, 2)["f1"])
            if s > best_score:
                best, best_score = si, s
        targets[best].append(ri)
    return targets


def segment_and_assign(doc, reference_sentences, idf, l_min=512, l_max=768, dim=256):
    ranges = segment_document(doc, idf, l_min=l_min, l_max=l_max, dim=dim)
    ref_tokens = [tokenize_text(s) for s in reference_sentences]
    targets = assign_targets(doc, ranges, ref_tokens)
    return SegmentedDocument(doc, ranges, targets)


def _as_sentences(value):
    if isinstance(value, str):
        return split_sentences(value)
    if isinstance(value, list) and all(isinstance(s, str) for s in value):
        return [" ".join(s.split()) for s in value if s.strip()]
    raise ValueError("document/summary must be a string or a list of strings")


def ingest_record(rec):
    """Turn one dataset JSON object into (Document, reference sentences)."""
    for key in ("id", "document", "summary"):
        if key not in rec:
            raise ValueError(f"dataset record missing field '{key}'")
    doc = Document(id=str(rec["id"]), sentences=_as_sentences(rec["document"]))
    refs = _as_sentences(rec["summary"])
    return doc, refs


def read_jsonl(path):
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: malformed JSON on line {ln}: {exc}") from exc
    return records


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
