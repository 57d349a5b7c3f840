"""Segment-by-segment encoder-decoder summarizer.

Documents are processed one segment at a time in order; per-layer external
memories (when configured) carry state between segments, and the decoder
concatenates the per-segment summaries.  Each segment's forward+backward
lives on its own stretch of the tape, which is cleared before the next
segment, so the retained graph never grows with document length.
"""

import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import checkpoint, memory as mem, pipeline, tensor as T
from .attention import AttnProjections, causal_mask, multi_head_attention
from .memory import (AttentiveParams, AttentiveState, CompressiveState,
                     attentive_step, compressive_update,
                     fresh_compressive_state, memory_augmented_self_attention,
                     memory_cross_attention)
from .tensor import Graph, backward

MEMORY_KINDS = ("none", "compressive", "attentive")
AUGMENTATION_KINDS = ("none", "text", "kv")


class NumericalError(RuntimeError):
    """Training produced a non-finite quantity."""


@dataclass
class ModelConfig:
    """Architecture and decoding configuration.

    Desk-scale defaults; the published-scale values (d=1024, 12+12 layers,
    m=1024, r=5, 512/768 segment budget, 1024 positions) are plain config.
    """

    d: int = 64
    layers: int = 2
    heads: int = 2
    ffn: int = 128
    vocab_size: int = 8000
    max_positions: int = 128
    l_min: int = 48
    l_max: int = 64
    memory: str = "none"
    enc_memory: bool = True
    dec_memory: bool = True
    memory_size: int = 16
    ratio: int = 2
    augmentation: str = "none"
    budget: int = 64
    decode_max_len: int = 32
    seed: int = 0

    def validate(self):
        if self.memory not in MEMORY_KINDS:
            raise ValueError(f"memory must be one of {MEMORY_KINDS}")
        if self.augmentation not in AUGMENTATION_KINDS:
            raise ValueError(f"augmentation must be one of {AUGMENTATION_KINDS}")
        if self.d % self.heads:
            raise ValueError(f"d={self.d} not divisible by heads={self.heads}")
        if self.l_min >= self.l_max:
            raise ValueError("need l_min < l_max")
        if self.max_positions < self.l_max:
            raise ValueError("max_positions must cover l_max")
        if self.memory == "compressive" and self.memory_size % 2:
            raise ValueError("compressive memory size must be even")
        if self.ratio < 1:
            raise ValueError("compression ratio must be >= 1")
        if self.decode_max_len < 1 or self.decode_max_len > self.max_positions:
            raise ValueError("decode_max_len must be in [1, max_positions]")
        return self

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        return cls(**d).validate()


@dataclass
class MemoryBank:
    """Per-layer memory states for one side, plus not-yet-folded stream rows."""

    states: list
    pending: list = field(default_factory=list)

    def __post_init__(self):
        if not self.pending:
            self.pending = [None] * len(self.states)


def _uses_memory(cfg, side):
    if cfg.memory == "none":
        return False
    return cfg.enc_memory if side == "enc" else cfg.dec_memory


class SummarizerModel:
    def __init__(self, config):
        self.cfg = config.validate()
        self.graph = Graph()
        self.params = {}
        self._build(np.random.default_rng(config.seed))

    # ------------------------------------------------------------------
    # parameters

    def _add(self, name, array, requires_grad=True):
        t = self.graph.tensor(array, requires_grad=requires_grad)
        self.params[name] = t
        return t

    def _proj(self, prefix, rng):
        d = self.cfg.d
        w = lambda nm: self._add(f"{prefix}.{nm}",
                                 rng.normal(scale=0.02, size=(d, d)))
        b = lambda nm: self._add(f"{prefix}.{nm}", np.zeros(d))
        return AttnProjections(w("wq"), w("wk"), w("wv"), w("wo"),
                               b("bq"), b("bk"), b("bv"), b("bo"))

    def _ln(self, prefix):
        return (self._add(f"{prefix}.g", np.ones(self.cfg.d)),
                self._add(f"{prefix}.b", np.zeros(self.cfg.d)))

    def _build(self, rng):
        cfg = self.cfg
        d = cfg.d
        self._add("tok_emb", rng.normal(scale=0.02, size=(cfg.vocab_size, d)))
        self._add("pos_emb", rng.normal(scale=0.02, size=(cfg.max_positions, d)))
        self.ln_emb = {"enc": self._ln("enc.ln_emb"), "dec": self._ln("dec.ln_emb")}
        self.layers = {"enc": [], "dec": []}
        for side in ("enc", "dec"):
            for l in range(cfg.layers):
                p = f"{side}.{l}"
                layer = {
                    "self": self._proj(f"{p}.self", rng),
                    "ln1": self._ln(f"{p}.ln1"),
                    "ffn_w1": self._add(f"{p}.ffn.w1",
                                        rng.normal(scale=0.02, size=(d, cfg.ffn))),
                    "ffn_b1": self._add(f"{p}.ffn.b1", np.zeros(cfg.ffn)),
                    "ffn_w2": self._add(f"{p}.ffn.w2",
                                        rng.normal(scale=0.02, size=(cfg.ffn, d))),
                    "ffn_b2": self._add(f"{p}.ffn.b2", np.zeros(d)),
                    "ln2": self._ln(f"{p}.ln2"),
                }
                if side == "dec":
                    layer["cross"] = self._proj(f"{p}.cross", rng)
                    layer["lnc"] = self._ln(f"{p}.lnc")
                if _uses_memory(cfg, side):
                    if cfg.memory == "compressive":
                        # start near mean pooling so compression is sane at init
                        base = np.stack([np.eye(d) / cfg.ratio] * cfg.ratio)
                        noise = rng.normal(scale=0.02, size=base.shape)
                        layer["comp_kernel"] = self._add(f"{p}.comp.kernel",
                                                         base + noise)
                    else:
                        layer["mem_read"] = self._proj(f"{p}.memread", rng)
                        layer["lnm"] = self._ln(f"{p}.lnm")
                        layer["mem_upd"] = AttentiveParams(
                            *(self._add(f"{p}.memupd.{nm}",
                                        rng.normal(scale=0.02, size=(d, d)))
                              for nm in ("w_u1", "w_u2", "w_g1", "w_g2")))
                if side == "enc" and cfg.augmentation == "kv":
                    layer["aug_k"] = self._add(f"{p}.kvaug.pk",
                                               rng.normal(scale=0.02, size=(d, d)))
                    # zero init: augmented values start contributing nothing
                    layer["aug_v"] = self._add(f"{p}.kvaug.pv", np.zeros((d, d)))
                self.layers[side].append(layer)
        self._add("out.w", rng.normal(scale=0.02, size=(d, cfg.vocab_size)))
        self._add("out.b", np.zeros(cfg.vocab_size))
        # fixed seeded attentive M^0: identical zero rows would make Eq.-style
        # synthesis emit identical rows forever, collapsing the memory to
        # rank one; a tiny random snapshot keeps the m slots distinct.
        # Not a trainable parameter: a pure function of the config seed.
        self.mem_init = {}
        if cfg.memory == "attentive":
            init_rng = np.random.default_rng([cfg.seed, 7919])
            for side in ("enc", "dec"):
                self.mem_init[side] = [
                    init_rng.normal(scale=0.5, size=(cfg.memory_size, d))
                    for _ in range(cfg.layers)]

    def parameter_arrays(self):
        return {name: t.data for name, t in self.params.items()}

    def load_parameter_arrays(self, arrays):
        for name, t in self.params.items():
            if name not in arrays:
                raise ValueError(f"checkpoint missing parameter '{name}'")
            if arrays[name].shape != t.data.shape:
                raise ValueError(f"parameter '{name}' shape {arrays[name].shape} "
                                 f"!= expected {t.data.shape}")
            t.data = np.ascontiguousarray(arrays[name], dtype=np.float64)

    # ------------------------------------------------------------------
    # memory banks

    def fresh_bank(self, side):
        cfg = self.cfg
        if not _uses_memory(cfg, side):
            return None
        if cfg.memory == "compressive":
            states = [fresh_compressive_state(cfg.memory_size, cfg.d)
                      for _ in range(cfg.layers)]
        else:
            states = [AttentiveState(self.mem_init[side][l].copy(), 0)
                      for l in range(cfg.layers)]
        return MemoryBank(states)

    def _advance_bank(self, side, bank):
        """Fold each layer's pending rows into its state on the current tape.

        Returns (per-layer read tensors or None, advanced MemoryBank).  The
        fold consumes only detached constants, so gradients reach the memory
        parameters but never an earlier segment's subgraph.
        """
        if bank is None:
            return [None] * self.cfg.layers, None
        g = self.graph
        rows, states = [], []
        for l, (state, pend) in enumerate(zip(bank.states, bank.pending)):
            layer = self.layers[side][l]
            if pend is None:
                if self.cfg.memory == "compressive":
                    valid = state.valid_rows()
                    rows.append(g.constant(valid) if len(valid) else None)
                else:
                    rows.append(g.constant(state.M.copy()) if state.step else None)
                states.append(state)
                continue
            pend_t = g.constant(pend)
            if self.cfg.memory == "compressive":
                r, st = compressive_update(state, pend_t, layer["comp_kernel"],
                                           self.cfg.ratio)
            else:
                r, st = attentive_step(state, pend_t, layer["mem_upd"])
            rows.append(r)
            states.append(st)
        return rows, MemoryBank(states)

    # ------------------------------------------------------------------
    # forward passes

    def _embed(self, ids, side):
        if len(ids) > self.cfg.max_positions:
            raise ValueError(
                f"segment of {len(ids)} tokens exceeds the positional budget "
                f"{self.cfg.max_positions}; segmentation and augmentation "
                "budgets are inconsistent with this model config")
        tok = T.embedding(self.params["tok_emb"], ids)
        pos = T.embedding(self.params["pos_emb"], np.arange(len(ids)))
        g, b = self.ln_emb[side]
        return T.layernorm(T.add(tok, pos), g, b)

    def _ffn(self, layer, x):
        h = T.relu(T.linear(x, layer["ffn_w1"], layer["ffn_b1"]))
        out = T.linear(h, layer["ffn_w2"], layer["ffn_b2"])
        return T.layernorm(T.add(x, out), *layer["ln2"])

    def _encoder_forward(self, ids, rows, aug_rows=None):
        cfg = self.cfg
        x = self._embed(ids, "enc")
        stash = []
        compressive = cfg.memory == "compressive"
        for l, layer in enumerate(self.layers["enc"]):
            h_inp = x
            extra_k = extra_v = None
            if aug_rows is not None and aug_rows.shape[0] > 0:
                aug_c = self.graph.constant(aug_rows)
                extra_k = T.matmul(aug_c, layer["aug_k"])
                extra_v = T.matmul(aug_c, layer["aug_v"])
            if compressive and rows[l] is not None:
                kv_in = T.concat_rows([rows[l], h_inp])
            else:
                kv_in = h_inp
            attn_out = multi_head_attention(h_inp, kv_in, layer["self"],
                                            cfg.heads, k_extra=extra_k,
                                            v_extra=extra_v)
            x = T.layernorm(T.add(x, attn_out), *layer["ln1"])
            if "mem_read" in layer:
                read = memory_cross_attention(x, rows[l], layer["mem_read"],
                                              cfg.heads)
                # t=1 bypass: residual identity through the same layernorm
                x = T.layernorm(T.add(x, read), *layer["lnm"]) \
                    if read is not None else T.layernorm(x, *layer["lnm"])
            x = self._ffn(layer, x)
            stash.append(h_inp.data if compressive else attn_out.data)
        return x, stash

    def _decoder_forward(self, inp_ids, enc_out, rows):
        cfg = self.cfg
        x = self._embed(inp_ids, "dec")
        stash = []
        compressive = cfg.memory == "compressive"
        L = len(inp_ids)
        for l, layer in enumerate(self.layers["dec"]):
            h_inp = x
            if compressive and rows[l] is not None:
                n_mem = rows[l].data.shape[0]
                kv_in = T.concat_rows([rows[l], h_inp])
            else:
                n_mem = 0
                kv_in = h_inp
            mask = causal_mask(L, n_prefix=n_mem)
            attn_out = multi_head_attention(h_inp, kv_in, layer["self"],
                                            cfg.heads, mask=mask)
            x = T.layernorm(T.add(x, attn_out), *layer["ln1"])
            if "mem_read" in layer:
                read = memory_cross_attention(x, rows[l], layer["mem_read"],
                                              cfg.heads)
                x = T.layernorm(T.add(x, read), *layer["lnm"]) \
                    if read is not None else T.layernorm(x, *layer["lnm"])
            cross = multi_head_attention(x, enc_out, layer["cross"], cfg.heads)
            x = T.layernorm(T.add(x, cross), *layer["lnc"])
            x = self._ffn(layer, x)
            stash.append(h_inp.data if compressive else attn_out.data)
        return x, stash

    @staticmethod
    def _bank_after(bank, advanced, stash):
        if bank is None:
            return None
        return MemoryBank(advanced.states, list(stash))

    # ------------------------------------------------------------------
    # public segment operations

    def encode_segment(self, ids, enc_bank, aug_rows=None):
        """Encode one segment, reading and then advancing the encoder memory."""
        rows, advanced = self._advance_bank("enc", enc_bank)
        x, stash = self._encoder_forward(ids, rows, aug_rows=aug_rows)
        return x, self._bank_after(enc_bank, advanced, stash)

    def decode_segment_train(self, enc_out, target_ids, dec_bank):
        """Teacher-forced pass; target must begin with BOS and end with EOS."""
        target_ids = list(target_ids)
        if len(target_ids) < 2 or target_ids[0] != pipeline.BOS_ID \
                or target_ids[-1] != pipeline.EOS_ID:
            raise ValueError("target must be [BOS, ..., EOS]")
        rows, advanced = self._advance_bank("dec", dec_bank)
        x, stash = self._decoder_forward(target_ids[:-1], enc_out, rows)
        logits = T.linear(x, self.params["out.w"], self.params["out.b"])
        loss = T.cross_entropy(logits, target_ids[1:], ignore_id=pipeline.PAD_ID)
        return loss, self._bank_after(dec_bank, advanced, stash)

    def decode_segment_greedy(self, enc_out, dec_bank, max_len=None):
        """Greedy decode from BOS until EOS or max_len; ties pick the lower id.

        The decoder memory is advanced from the realized token sequence the
        same way training advances it from the forced target.
        """
        max_len = max_len or self.cfg.decode_max_len
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        with self.graph.no_grad():
            rows, advanced = self._advance_bank("dec", dec_bank)
            out_ids = []
            inp = [pipeline.BOS_ID]
            while len(out_ids) < max_len:
                x, _ = self._decoder_forward(inp, enc_out, rows)
                last = T.slice_rows(x, len(inp) - 1, len(inp))
                logits = T.linear(last, self.params["out.w"], self.params["out.b"])
                nxt = int(np.argmax(logits.data[0]))
                if nxt == pipeline.EOS_ID:
                    break
                out_ids.append(nxt)
                inp.append(nxt)
            _, stash = self._decoder_forward(inp, enc_out, rows)
        return out_ids, self._bank_after(dec_bank, advanced, stash)

    # ------------------------------------------------------------------
    # documents

    def collect_salient_reps(self, seg_ids_per_segment, token_sentence_map,
                             wanted_sentences):
        """First encoding pass over all segments (memory active, no grad);
        returns {sentence index: rows of the final layer's input stream}."""
        reps = {s: [] for s in wanted_sentences}
        with self.graph.no_grad():
            bank = self.fresh_bank("enc")
            for ids, sent_of_token in zip(seg_ids_per_segment, token_sentence_map):
                rows, advanced = self._advance_bank("enc", bank)
                x = self._embed(ids, "enc")
                stash = []
                compressive = self.cfg.memory == "compressive"
                for l, layer in enumerate(self.layers["enc"]):
                    h_inp = x
                    if l == self.cfg.layers - 1:
                        for pos, sent in enumerate(sent_of_token):
                            if sent in reps:
                                reps[sent].append(h_inp.data[pos])
                    kv_in = T.concat_rows([rows[l], h_inp]) \
                        if compressive and rows[l] is not None else h_inp
                    attn_out = multi_head_attention(h_inp, kv_in, layer["self"],
                                                    self.cfg.heads)
                    x = T.layernorm(T.add(x, attn_out), *layer["ln1"])
                    if "mem_read" in layer:
                        read = memory_cross_attention(x, rows[l],
                                                      layer["mem_read"],
                                                      self.cfg.heads)
                        x = T.layernorm(T.add(x, read), *layer["lnm"]) \
                            if read is not None else T.layernorm(x, *layer["lnm"])
                    x = self._ffn(layer, x)
                    stash.append(h_inp.data if compressive else attn_out.data)
                bank = self._bank_after(bank, advanced, stash)
        return {s: np.array(v) for s, v in reps.items() if v}

    def summarize_document(self, sample, vocab, salience_pkg=None):
        """Iterate segments in order, threading both memories; returns the
        concatenated, detokenized summary string."""
        from . import salience as sal

        enc_inputs, aug_rows = sal.prepare_encoder_inputs(
            self, sample, salience_pkg)
        enc_bank = self.fresh_bank("enc")
        dec_bank = self.fresh_bank("dec")
        pieces = []
        with self.graph.no_grad():
            for t in range(len(enc_inputs)):
                enc_out, enc_bank = self.encode_segment(
                    enc_inputs[t], enc_bank,
                    aug_rows=None if aug_rows is None else aug_rows[t])
                ids, dec_bank = self.decode_segment_greedy(enc_out, dec_bank)
                piece = vocab.detokenize(ids)
                if piece:
                    pieces.append(piece)
        return " ".join(pieces)

    def peak_live_nodes(self, sample, salience_pkg=None):
        """Max live tape nodes during each segment's training-mode pass."""
        from . import salience as sal

        enc_inputs, aug_rows = sal.prepare_encoder_inputs(
            self, sample, salience_pkg)
        enc_bank = self.fresh_bank("enc")
        dec_bank = self.fresh_bank("dec")
        peaks = []
        for t in range(len(enc_inputs)):
            self.graph.clear()
            self.graph.reset_peak()
            enc_out, enc_bank = self.encode_segment(
                enc_inputs[t], enc_bank,
                aug_rows=None if aug_rows is None else aug_rows[t])
            loss, dec_bank = self.decode_segment_train(
                enc_out, sample.target_ids[t], dec_bank)
            backward(loss)
            peaks.append(self.graph.peak_live_nodes)
        self.graph.clear()
        self.zero_grads()
        return peaks

    def zero_grads(self):
        for t in self.params.values():
            t.zero_grad()


@dataclass
class DocumentSample:
    """Everything the trainer needs for one document."""

    doc_id: str
    seg_ids: list                 # per segment, encoder token ids (no aug)
    target_ids: list              # per segment, [BOS, ..., EOS]
    has_target: list              # per segment, whether targets were assigned
    sent_ids: list = None         # per document sentence, token ids
    sent_of_token: list = None    # per segment, sentence index per token
    segdoc: object = None


def build_sample(segdoc, ref_sentences, vocab):
    doc = segdoc.document
    sent_ids = [vocab.encode(toks) for toks in doc.tokens]
    seg_ids, targets, has_target = [], [], []
    sent_maps = []
    ref_tokens = [pipeline.tokenize_text(s) for s in ref_sentences]
    for t, (a, b) in enumerate(segdoc.segments):
        ids, smap = [], []
        for si in range(a, b):
            ids.extend(sent_ids[si])
            smap.extend([si] * len(sent_ids[si]))
        seg_ids.append(ids)
        sent_maps.append(smap)
        assigned = segdoc.targets[t]
        toks = []
        for ri in assigned:
            toks.extend(ref_tokens[ri])
        targets.append([pipeline.BOS_ID] + vocab.encode(toks) + [pipeline.EOS_ID])
        has_target.append(bool(assigned))
    return DocumentSample(doc.id, seg_ids, targets, has_target,
                          sent_ids=sent_ids, sent_of_token=sent_maps,
                          segdoc=segdoc)


class Adam:
    """Adam with linear warmup to a constant learning rate."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8,
                 warmup_steps=0):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.warmup = warmup_steps
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in params.items()}

    def step(self):
        self.t += 1
        lr = self.lr * min(1.0, self.t / self.warmup) if self.warmup else self.lr
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * g * g
            mhat = self.m[name] / (1 - self.b1 ** self.t)
            vhat = self.v[name] / (1 - self.b2 ** self.t)
            p.data = p.data - lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


def train_summarizer(model, samples, epochs, lr, warmup_steps=0,
                     accumulate="document", salience_pkgs=None,
                     on_epoch=None):
    """Sequential segment passes with per-segment backward and tape clears;
    one optimizer step per document (or per segment when configured).

    Returns the per-epoch mean document loss.  Non-finite losses abort with
    the offending document id and segment index.
    """
    from . import salience as sal

    if accumulate not in ("document", "segment"):
        raise ValueError("accumulate must be 'document' or 'segment'")
    opt = Adam(model.params, lr=lr, warmup_steps=warmup_steps)
    graph = model.graph
    curve = []
    for epoch in range(epochs):
        epoch_loss = 0.0
        for sample in samples:
            pkg = salience_pkgs.get(sample.doc_id) if salience_pkgs else None
            enc_inputs, aug_rows = sal.prepare_encoder_inputs(model, sample, pkg)
            enc_bank = model.fresh_bank("enc")
            dec_bank = model.fresh_bank("dec")
            n_eff = max(1, sum(sample.has_target))
            doc_loss = 0.0
            for t in range(len(enc_inputs)):
                graph.clear()
                enc_out, enc_bank = model.encode_segment(
                    enc_inputs[t], enc_bank,
                    aug_rows=None if aug_rows is None else aug_rows[t])
                loss, dec_bank = model.decode_segment_train(
                    enc_out, sample.target_ids[t], dec_bank)
                if not np.isfinite(loss.data[0]):
                    raise NumericalError(
                        f"non-finite loss on document '{sample.doc_id}' "
                        f"segment {t}")
                if sample.has_target[t]:
                    # empty-assignment segments still updated the memory but
                    # contribute exactly zero loss and zero gradient
                    doc_loss += float(loss.data[0])
                    backward(T.scale(loss, 1.0 / n_eff)
                             if accumulate == "document" else loss)
                if accumulate == "segment" and sample.has_target[t]:
                    opt.step()
                    opt.zero_grad()
            graph.clear()
            if accumulate == "document":
                opt.step()
                opt.zero_grad()
            epoch_loss += doc_loss / n_eff
        curve.append(epoch_loss / max(1, len(samples)))
        if on_epoch:
            on_epoch(epoch, curve[-1])
    return curve


# ----------------------------------------------------------------------
# checkpoint glue

def save_model(path, model, vocab, step=0, extra_meta=None, extra_arrays=None):
    meta = {
        "config": model.cfg.to_dict(),
        "vocab": vocab.to_list(),
        "vocab_sha256": vocab.sha256(),
        "step": step,
    }
    if extra_meta:
        meta.update(extra_meta)
    arrays = dict(model.parameter_arrays())
    if extra_arrays:
        arrays.update(extra_arrays)
    checkpoint.save(path, meta, arrays)


def load_model(path):
    meta, arrays = checkpoint.load(path)
    cfg = ModelConfig.from_dict(meta["config"])
    vocab = pipeline.Vocab(meta["vocab"])
    if vocab.sha256() != meta["vocab_sha256"]:
        raise ValueError(f"{path}: vocabulary hash mismatch")
    model = SummarizerModel(cfg)
    model.load_parameter_arrays(arrays)
    return model, vocab, meta


def bank_to_arrays(bank, prefix):
    """Serialize memory states for inference resumption inside checkpoints."""
    arrays, meta = {}, {}
    if bank is None:
        return arrays, meta
    for l, state in enumerate(bank.states):
        arrays[f"{prefix}.{l}.M"] = state.M
        if isinstance(state, CompressiveState):
            meta[f"{prefix}.{l}"] = [state.valid_compressed,
                                     state.valid_uncompressed]
        else:
            meta[f"{prefix}.{l}"] = [state.step]
        if bank.pending[l] is not None:
            arrays[f"{prefix}.{l}.pending"] = bank.pending[l]
    return arrays, meta


def bank_from_arrays(arrays, meta, prefix, kind, layers):
    states, pending = [], []
    for l in range(layers):
        M = arrays[f"{prefix}.{l}.M"]
        info = meta[f"{prefix}.{l}"]
        if kind == "compressive":
            states.append(CompressiveState(M, int(info[0]), int(info[1])))
        else:
            states.append(AttentiveState(M, int(info[0])))
        pending.append(arrays.get(f"{prefix}.{l}.pending"))
    return MemoryBank(states, pending)
