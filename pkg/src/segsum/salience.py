"""Salient-content machinery: greedy extractive oracle labels, a small
trainable sentence extractor, and the two global-content augmentation
builders (text concatenation and key-value rows).

Augmented content always comes from *other* segments than the one being
encoded, chosen outermost-first: the earliest remaining sentence from the
past and the latest remaining sentence from the future, alternating, whole
sentences only, under a token budget.
"""

from dataclasses import dataclass, fields

import numpy as np

from . import checkpoint, pipeline, tensor as T
from .attention import AttnProjections, multi_head_attention
from .evaluation import rouge_n_tokens
from .tensor import Graph, backward


def _selection_score(doc_tokens, selected, ref_tokens):
    toks = []
    for i in sorted(selected):
        toks.extend(doc_tokens[i])
    return (rouge_n_tokens(toks, ref_tokens, 1)["f1"]
            + rouge_n_tokens(toks, ref_tokens, 2)["f1"])


def greedy_oracle_labels(doc_tokens, ref_tokens):
    """Greedy oracle: repeatedly add the sentence that most increases
    ROUGE-1 F1 + ROUGE-2 F1 of the selection (concatenated in document
    order) against the reference; stop at the first non-improving step.

    Returns (labels, pick_order, score_trace).  Ties go to the earliest
    sentence index.
    """
    n = len(doc_tokens)
    selected = []
    order = []
    trace = []
    current = 0.0
    while len(selected) < n:
        best_i, best_s = -1, current
        for i in range(n):
            if i in selected:
                continue
            s = _selection_score(doc_tokens, selected + [i], ref_tokens)
            if s > best_s:
                best_i, best_s = i, s
        if best_i < 0:
            break
        selected.append(best_i)
        order.append(best_i)
        current = best_s
        trace.append(current)
    labels = [i in selected for i in range(n)]
    return labels, order, trace


# ----------------------------------------------------------------------
# extractor

@dataclass
class ExtractorConfig:
    d: int = 32
    heads: int = 2
    ffn: int = 64
    layers: int = 1
    hidden: int = 32
    vocab_size: int = 8000
    max_positions: int = 64
    seed: int = 0

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class Extractor:
    """Token encoder -> mean-pooled sentence reps -> sentence-level
    self-attention -> one-hidden-layer MLP scorer.

    The scorer emits two logits per sentence; the salience score is the
    softmax probability of the positive class, i.e. a sigmoid of the logit
    margin, so it lives in (0, 1).
    """

    def __init__(self, config):
        self.cfg = config
        self.graph = Graph()
        self.params = {}
        self._build(np.random.default_rng(config.seed))

    def _add(self, name, array):
        t = self.graph.tensor(array, requires_grad=True)
        self.params[name] = t
        return t

    def _proj(self, prefix, rng):
        d = self.cfg.d
        w = lambda nm: self._add(f"{prefix}.{nm}", rng.normal(scale=0.05, size=(d, d)))
        b = lambda nm: self._add(f"{prefix}.{nm}", np.zeros(d))
        return AttnProjections(w("wq"), w("wk"), w("wv"), w("wo"),
                               b("bq"), b("bk"), b("bv"), b("bo"))

    def _ln(self, prefix):
        return (self._add(f"{prefix}.g", np.ones(self.cfg.d)),
                self._add(f"{prefix}.b", np.zeros(self.cfg.d)))

    def _build(self, rng):
        cfg = self.cfg
        self._add("tok_emb", rng.normal(scale=0.05, size=(cfg.vocab_size, cfg.d)))
        self._add("pos_emb", rng.normal(scale=0.05, size=(cfg.max_positions, cfg.d)))
        self.ln_emb = self._ln("ln_emb")
        self.enc_layers = []
        for l in range(cfg.layers):
            self.enc_layers.append({
                "self": self._proj(f"tok.{l}.self", rng),
                "ln1": self._ln(f"tok.{l}.ln1"),
                "w1": self._add(f"tok.{l}.ffn.w1",
                                rng.normal(scale=0.05, size=(cfg.d, cfg.ffn))),
                "b1": self._add(f"tok.{l}.ffn.b1", np.zeros(cfg.ffn)),
                "w2": self._add(f"tok.{l}.ffn.w2",
                                rng.normal(scale=0.05, size=(cfg.ffn, cfg.d))),
                "b2": self._add(f"tok.{l}.ffn.b2", np.zeros(cfg.d)),
                "ln2": self._ln(f"tok.{l}.ln2"),
            })
        self.sent_attn = self._proj("sent.attn", rng)
        self.ln_sent = self._ln("sent.ln")
        self._add("score.w1", rng.normal(scale=0.05, size=(cfg.d, cfg.hidden)))
        self._add("score.b1", np.zeros(cfg.hidden))
        self._add("score.w2", rng.normal(scale=0.05, size=(cfg.hidden, 2)))
        self._add("score.b2", np.zeros(2))

    def _encode_sentence(self, ids):
        g = self.graph
        ids = ids[:self.cfg.max_positions] or [pipeline.UNK_ID]
        x = T.add(T.embedding(self.params["tok_emb"], ids),
                  T.embedding(self.params["pos_emb"], np.arange(len(ids))))
        x = T.layernorm(x, *self.ln_emb)
        for layer in self.enc_layers:
            a = multi_head_attention(x, x, layer["self"], self.cfg.heads)
            x = T.layernorm(T.add(x, a), *layer["ln1"])
            h = T.relu(T.linear(x, layer["w1"], layer["b1"]))
            x = T.layernorm(T.add(x, T.linear(h, layer["w2"], layer["b2"])),
                            *layer["ln2"])
        pool = g.constant(np.full((1, len(ids)), 1.0 / len(ids)))
        return T.matmul(pool, x)

    def sentence_logits(self, sent_ids):
        """(N, 2) logits over not-salient/salient for one document."""
        reps = T.concat_rows([self._encode_sentence(ids) for ids in sent_ids])
        a = multi_head_attention(reps, reps, self.sent_attn, self.cfg.heads)
        x = T.layernorm(T.add(reps, a), *self.ln_sent)
        h = T.relu(T.linear(x, self.params["score.w1"], self.params["score.b1"]))
        return T.linear(h, self.params["score.w2"], self.params["score.b2"])

    def scores(self, sent_ids):
        with self.graph.no_grad():
            logits = self.sentence_logits(sent_ids).data
        margin = logits[:, 1] - logits[:, 0]
        return 1.0 / (1.0 + np.exp(-margin))


def train_extractor(extractor, train_samples, dev_samples, epochs, lr):
    """Per-sentence binary cross-entropy against oracle labels.

    train_samples/dev_samples: (sent_ids per sentence, labels).  Returns
    (loss curve, dev F1 at threshold 0.5).  An all-negative corpus aborts.
    """
    from .model import Adam

    if not any(any(labels) for _, labels in train_samples):
        raise ValueError("oracle labels are all-negative; nothing to learn "
                         "(check reference summaries)")
    opt = Adam(extractor.params, lr=lr)
    graph = extractor.graph
    curve = []
    for _ in range(epochs):
        total = 0.0
        for sent_ids, labels in train_samples:
            graph.clear()
            logits = extractor.sentence_logits(sent_ids)
            loss = T.cross_entropy(logits, np.array(labels, dtype=np.int64))
            total += float(loss.data[0])
            backward(loss)
            opt.step()
            opt.zero_grad()
        graph.clear()
        curve.append(total / max(1, len(train_samples)))
    return curve, extractor_f1(extractor, dev_samples)


def extractor_f1(extractor, samples, threshold=0.5):
    tp = fp = fn = 0
    for sent_ids, labels in samples:
        pred = extractor.scores(sent_ids) > threshold
        extractor.graph.clear()
        for p, y in zip(pred, labels):
            if p and y:
                tp += 1
            elif p and not y:
                fp += 1
            elif y and not p:
                fn += 1
    if tp == 0:
        return 0.0
    prec = tp / (tp + fp)
    rec = tp / (tp + fn)
    return 2 * prec * rec / (prec + rec)


def top_ratio_indices(scores, ratio):
    """Indices of the top ceil(ratio * N) scores (ties to the earlier
    index), re-sorted into document order."""
    if not 0 < ratio <= 1:
        raise ValueError("ratio must be in (0, 1]")
    k = int(np.ceil(ratio * len(scores)))
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))[:k]
    return sorted(ranked)


def select_salient(extractor, sent_ids, ratio=0.08):
    """Top ceil(ratio * N) sentences by extractor score, document order."""
    s = extractor.scores(sent_ids)
    extractor.graph.clear()
    return top_ratio_indices(s, ratio)


def save_extractor(path, extractor, vocab):
    checkpoint.save(path, {
        "kind": "extractor",
        "config": extractor.cfg.to_dict(),
        "vocab": vocab.to_list(),
        "vocab_sha256": vocab.sha256(),
    }, {name: t.data for name, t in extractor.params.items()})


def load_extractor(path):
    meta, arrays = checkpoint.load(path)
    if meta.get("kind") != "extractor":
        raise ValueError(f"{path}: not an extractor checkpoint")
    ext = Extractor(ExtractorConfig.from_dict(meta["config"]))
    for name, t in ext.params.items():
        t.data = np.ascontiguousarray(arrays[name])
    vocab = pipeline.Vocab(meta["vocab"])
    return ext, vocab


# ----------------------------------------------------------------------
# augmentation builders

@dataclass
class AugPackage:
    kind: str              # "text" or "kv"
    salient: list          # salient sentence indices, document order


def select_augmentation_sentences(t, segments, salient, lengths, budget):
    """Outermost-first alternating pick of whole salient sentences from
    other segments, under a token budget.

    Returns (past picks, future picks), each sorted to document order.  A
    sentence that does not fit whole is skipped, not truncated.
    """
    a_t, b_t = segments[t]
    past = [s for s in salient if s < a_t]
    future = [s for s in salient if s >= b_t]
    chosen_past, chosen_future = [], []
    remaining = budget
    turn_past = True
    while past or future:
        if turn_past and not past:
            turn_past = False
        if not turn_past and not future:
            turn_past = True
        if turn_past:
            cand = past.pop(0)          # earliest remaining past sentence
            if lengths[cand] <= remaining:
                chosen_past.append(cand)
                remaining -= lengths[cand]
        else:
            cand = future.pop()         # latest remaining future sentence
            if lengths[cand] <= remaining:
                chosen_future.append(cand)
                remaining -= lengths[cand]
        turn_past = not turn_past
    return sorted(chosen_past), sorted(chosen_future)


def build_text_augmentation(t, segments, salient, sent_ids, budget):
    """Prefixed token sequence: [prev][past sentences][curr][segment][next]
    [future sentences], with empty sides omitting their block entirely."""
    lengths = [len(ids) for ids in sent_ids]
    past, future = select_augmentation_sentences(t, segments, salient,
                                                 lengths, budget)
    out = []
    if past:
        out.append(pipeline.PREV_ID)
        for s in past:
            out.extend(sent_ids[s])
    out.append(pipeline.CURR_ID)
    a, b = segments[t]
    for s in range(a, b):
        out.extend(sent_ids[s])
    if future:
        out.append(pipeline.NEXT_ID)
        for s in future:
            out.extend(sent_ids[s])
    return out


def build_kv_rows(t, segments, salient, reps_by_sentence, lengths, budget):
    """Detached final-layer-input rows for the chosen sentences, document
    order, capped at `budget` tokens; rows enter attention with no
    positional encoding."""
    avail = [s for s in salient if s in reps_by_sentence]
    past, future = select_augmentation_sentences(t, segments, avail,
                                                 lengths, budget)
    picked = past + future
    if not picked:
        return None
    return np.concatenate([reps_by_sentence[s] for s in picked], axis=0)


def prepare_encoder_inputs(model, sample, pkg):
    """Per-segment encoder token ids and kv rows for one document.

    pkg must be present exactly when the model is configured with
    augmentation, and its kind must match.
    """
    cfg = model.cfg
    if cfg.augmentation == "none":
        if pkg is not None:
            raise ValueError("salience package supplied but augmentation=none")
        return sample.seg_ids, None
    if pkg is None or pkg.kind != cfg.augmentation:
        raise ValueError(f"augmentation={cfg.augmentation} needs a matching "
                         "salience package")
    segments = sample.segdoc.segments
    sent_ids = sample.sent_ids
    if cfg.augmentation == "text":
        inputs = []
        for t in range(len(segments)):
            # reserve room for the segment itself and up to three markers
            budget = max(0, cfg.max_positions - len(sample.seg_ids[t]) - 3)
            inputs.append(build_text_augmentation(t, segments, pkg.salient,
                                                  sent_ids, budget))
        return inputs, None
    lengths = [len(ids) for ids in sent_ids]
    reps = model.collect_salient_reps(sample.seg_ids, sample.sent_of_token,
                                      set(pkg.salient))
    rows = [build_kv_rows(t, segments, pkg.salient, reps, lengths, cfg.budget)
            for t in range(len(segments))]
    rows = [None if r is None else r for r in rows]
    return sample.seg_ids, rows
