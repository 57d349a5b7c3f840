"""Command-line surface: segment, train-extractor, train, summarize,
evaluate, synthesize.

Configuration comes from a flat key=value file plus command-line flags;
flags win.  Every command is deterministic under a fixed seed.  Exit codes:
0 success, 1 usage error, 2 data error, 3 numerical abort.  Path-valued
flags fall back to SEGSUM_<FLAG> environment variables.
"""

import argparse
import csv
import json
import os
import sys
from dataclasses import fields

import numpy as np

from . import evaluation, pipeline, salience, synthetic
from .model import (ModelConfig, NumericalError, SummarizerModel, build_sample,
                    load_model, save_model, train_summarizer)
from .pipeline import build_idf, build_vocab, ingest_record, read_jsonl, write_jsonl
from .salience import (AugPackage, Extractor, ExtractorConfig, greedy_oracle_labels,
                       load_extractor, save_extractor, select_salient,
                       train_extractor)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


MODEL_KEYS = {f.name: f.type for f in fields(ModelConfig)}
RUN_KEYS = {
    "epochs": int, "lr": float, "warmup_steps": int, "accumulate": str,
    "salient_ratio": float, "emb_dim": int, "dev_fraction": float,
    "ext_d": int, "ext_heads": int, "ext_ffn": int, "ext_hidden": int,
    "ext_positions": int,
}
RUN_DEFAULTS = {
    "epochs": 10, "lr": 5e-5, "warmup_steps": 0, "accumulate": "document",
    "salient_ratio": 0.08, "emb_dim": 256, "dev_fraction": 0.1,
    "ext_d": 32, "ext_heads": 2, "ext_ffn": 64, "ext_hidden": 32,
    "ext_positions": 64,
}
ALL_KEYS = {**MODEL_KEYS, **RUN_KEYS}


def _coerce(key, raw):
    target = ALL_KEYS[key]
    if target is bool or target == "bool":
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise UsageError(f"config key '{key}' expects a boolean, got '{raw}'")
    caster = {"int": int, "float": float, "str": str}.get(target, target)
    try:
        return caster(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"config key '{key}': {exc}") from exc


def parse_config_file(path):
    values = {}
    try:
        lines = open(path, "r", encoding="utf-8").read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config file: {exc}") from exc
    for ln, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{ln}: expected key=value")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in ALL_KEYS:
            raise UsageError(f"{path}:{ln}: unknown config key '{key}'")
        values[key] = _coerce(key, raw.strip())
    return values


def resolve_settings(args):
    """Defaults <- config file <- explicit flags."""
    settings = {f.name: getattr(ModelConfig, f.name, None)
                for f in fields(ModelConfig)}
    settings.update({f.name: f.default for f in fields(ModelConfig)})
    settings.update(RUN_DEFAULTS)
    if getattr(args, "config", None):
        settings.update(parse_config_file(args.config))
    for key in ALL_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = val
    return settings


def model_config_from(settings):
    try:
        return ModelConfig(**{k: settings[k] for k in MODEL_KEYS}).validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _env_default(flag):
    return os.environ.get("SEGSUM_" + flag.upper().replace("-", "_"))


def _add_path(parser, flag, required=False, help=""):
    default = _env_default(flag)
    parser.add_argument(f"--{flag}", default=default,
                        required=required and default is None, help=help)


def _add_config_flags(parser, keys):
    for key in keys:
        target = ALL_KEYS[key]
        flag = "--" + key.replace("_", "-")
        if target is bool or target == "bool":
            parser.add_argument(flag, default=None,
                                type=lambda s: _coerce(key, s))
        else:
            caster = {"int": int, "float": float, "str": str}.get(target, target)
            parser.add_argument(flag, default=None, type=caster)


def load_corpus(path, require_summary=True):
    try:
        records = read_jsonl(path)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    corpus = []
    for rec in records:
        try:
            if not require_summary and "summary" not in rec:
                rec = {**rec, "summary": []}
            corpus.append(ingest_record(rec))
        except ValueError as exc:
            raise DataError(str(exc)) from exc
    return corpus


def corpus_idf(corpus):
    return build_idf([toks for doc, _ in corpus for toks in doc.tokens])


def segment_corpus(corpus, cfg, emb_dim):
    idf = corpus_idf(corpus)
    out = []
    for doc, refs in corpus:
        segdoc = pipeline.segment_and_assign(doc, refs, idf, l_min=cfg.l_min,
                                             l_max=cfg.l_max, dim=emb_dim)
        out.append((segdoc, refs))
    return out


def oracle_salient(doc, refs):
    ref_tokens = []
    for r in refs:
        ref_tokens.extend(pipeline.tokenize_text(r))
    labels, _, _ = greedy_oracle_labels(doc.tokens, ref_tokens)
    return [i for i, y in enumerate(labels) if y]


def salience_packages(args, cfg, segmented, vocab=None):
    """Per-document AugPackage according to --oracle/--salient-from/--extractor."""
    sources = [bool(getattr(args, "oracle", False)),
               bool(getattr(args, "salient_from", None)),
               bool(getattr(args, "extractor", None))]
    if cfg.augmentation == "none":
        if any(sources):
            raise UsageError("salience flags given but augmentation=none")
        return None
    if sum(sources) != 1:
        raise UsageError("augmentation needs exactly one salience source: "
                         "--oracle, --salient-from, or --extractor")
    pkgs = {}
    if args.oracle:
        for segdoc, refs in segmented:
            if not refs:
                raise DataError(f"--oracle needs reference summaries "
                                f"(document '{segdoc.document.id}' has none)")
            pkgs[segdoc.document.id] = AugPackage(
                cfg.augmentation, oracle_salient(segdoc.document, refs))
    elif getattr(args, "salient_from", None):
        try:
            by_id = {str(r["id"]): r["salient"]
                     for r in read_jsonl(args.salient_from)}
        except (ValueError, KeyError, OSError) as exc:
            raise DataError(f"bad salience file: {exc}") from exc
        for segdoc, _ in segmented:
            if segdoc.document.id not in by_id:
                raise DataError(f"salience file misses document "
                                f"'{segdoc.document.id}'")
            pkgs[segdoc.document.id] = AugPackage(
                cfg.augmentation, list(by_id[segdoc.document.id]))
    else:
        ext, ext_vocab = load_extractor_checked(args.extractor)
        ratio = (args.salient_ratio if args.salient_ratio is not None
                 else RUN_DEFAULTS["salient_ratio"])
        for segdoc, _ in segmented:
            sent_ids = [ext_vocab.encode(t) for t in segdoc.document.tokens]
            pkgs[segdoc.document.id] = AugPackage(
                cfg.augmentation, select_salient(ext, sent_ids, ratio))
    return pkgs


def load_extractor_checked(path):
    try:
        return load_extractor(path)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc


# ----------------------------------------------------------------------
# commands

def cmd_segment(args):
    settings = resolve_settings(args)
    cfg = model_config_from(settings)
    corpus = load_corpus(args.input)
    records = []
    for segdoc, _ in segment_corpus(corpus, cfg, settings["emb_dim"]):
        records.append({
            "id": segdoc.document.id,
            "segments": [list(r) for r in segdoc.segments],
            "targets": segdoc.targets,
        })
    write_jsonl(args.output, records)
    print(f"segmented {len(records)} documents -> {args.output}")
    return 0


def cmd_synthesize(args):
    records = synthetic.generate_corpus(args.seed, args.docs,
                                        n_segments=args.segments,
                                        start_id=args.start_id)
    write_jsonl(args.output, records)
    print(f"wrote {len(records)} synthetic documents -> {args.output}")
    return 0


def cmd_train(args):
    settings = resolve_settings(args)
    cfg = model_config_from(settings)
    corpus = load_corpus(args.data)
    if not corpus:
        raise DataError(f"{args.data}: empty training corpus")
    vocab = build_vocab(
        [t for doc, _ in corpus for t in doc.tokens]
        + [pipeline.tokenize_text(r) for _, refs in corpus for r in refs],
        size=cfg.vocab_size)
    cfg.vocab_size = len(vocab)
    segmented = segment_corpus(corpus, cfg, settings["emb_dim"])
    samples = [build_sample(segdoc, refs, vocab) for segdoc, refs in segmented]
    pkgs = salience_packages(args, cfg, segmented)
    model = SummarizerModel(cfg)
    curve = train_summarizer(
        model, samples, epochs=settings["epochs"], lr=settings["lr"],
        warmup_steps=settings["warmup_steps"],
        accumulate=settings["accumulate"], salience_pkgs=pkgs,
        on_epoch=lambda e, v: print(f"epoch {e} loss {v:.6f}"))
    run_meta = {k: settings[k] for k in RUN_KEYS}
    save_model(args.output, model, vocab, step=len(curve),
               extra_meta={"run": run_meta, "loss_curve": curve})
    print(f"saved checkpoint -> {args.output}")
    return 0


def cmd_train_extractor(args):
    settings = resolve_settings(args)
    corpus = load_corpus(args.data)
    if not corpus:
        raise DataError(f"{args.data}: empty corpus")
    vocab = build_vocab([t for doc, _ in corpus for t in doc.tokens],
                        size=settings["vocab_size"])
    labels_records = []
    samples = []
    for doc, refs in corpus:
        sal = oracle_salient(doc, refs)
        labels_records.append({"id": doc.id, "salient": sal})
        sent_ids = [vocab.encode(t) for t in doc.tokens]
        labels = [i in set(sal) for i in range(len(doc.tokens))]
        samples.append((sent_ids, labels))
    n_dev = max(1, int(round(settings["dev_fraction"] * len(samples))))
    train_part, dev_part = samples[:-n_dev] or samples, samples[-n_dev:]
    ext = Extractor(ExtractorConfig(
        d=settings["ext_d"], heads=settings["ext_heads"],
        ffn=settings["ext_ffn"], hidden=settings["ext_hidden"],
        vocab_size=len(vocab), max_positions=settings["ext_positions"],
        seed=settings["seed"]))
    try:
        curve, dev_f1 = train_extractor(ext, train_part, dev_part,
                                        epochs=settings["epochs"],
                                        lr=settings["lr"])
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    save_extractor(args.output, ext, vocab)
    if args.labels_out:
        write_jsonl(args.labels_out, labels_records)
    print(f"dev F1@0.5 {dev_f1:.4f}")
    print(f"saved extractor -> {args.output}")
    return 0


def cmd_summarize(args):
    try:
        model, vocab, meta = load_model(args.checkpoint)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    cfg = model.cfg
    settings = resolve_settings(args)
    corpus = load_corpus(args.data, require_summary=False)
    segmented = segment_corpus(corpus, cfg, settings["emb_dim"])
    pkgs = salience_packages(args, cfg, segmented)
    out = []
    for segdoc, refs in segmented:
        sample = build_sample(segdoc, refs, vocab)
        pkg = pkgs.get(segdoc.document.id) if pkgs else None
        summary = model.summarize_document(sample, vocab, pkg)
        model.graph.clear()
        out.append({"id": segdoc.document.id, "summary": summary})
    write_jsonl(args.output, out)
    print(f"summarized {len(out)} documents -> {args.output}")
    return 0


def cmd_evaluate(args):
    try:
        system_records = read_jsonl(args.system)
        references = read_jsonl(args.references)
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    system = {}
    for rec in system_records:
        if "id" not in rec or "summary" not in rec:
            raise DataError(f"{args.system}: records need id and summary fields")
        system[str(rec["id"])] = rec["summary"]
    try:
        report = evaluation.evaluate_corpus(
            system, references, weighted_graph=not args.unweighted_graph)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    report["provenance"] = {"system": args.system,
                            "references": args.references,
                            "weighted_graph": not args.unweighted_graph}
    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id"] + evaluation.METRIC_NAMES)
            for s in report["samples"]:
                writer.writerow([s["id"]] + [repr(s[m])
                                             for m in evaluation.METRIC_NAMES])
    means = " ".join(f"{m}={report['means'][m]:.4f}"
                     for m in evaluation.METRIC_NAMES)
    print(f"evaluated {report['n_samples']} samples: {means}")
    return 0


# ----------------------------------------------------------------------
# parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="segsum",
        description="Divide-and-conquer long-document summarization with "
                    "external memories and salient-content augmentation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="split, tokenize, segment, assign targets")
    _add_path(p, "input", required=True)
    _add_path(p, "output", required=True)
    _add_path(p, "config")
    _add_config_flags(p, ["l_min", "l_max", "emb_dim", "vocab_size", "seed"])
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("synthesize", help="emit the synthetic benchmark corpus")
    _add_path(p, "output", required=True)
    p.add_argument("--docs", type=int, required=True)
    p.add_argument("--segments", type=int, default=4)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--start-id", type=int, default=0)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("train", help="train a summarizer")
    _add_path(p, "data", required=True)
    _add_path(p, "output", required=True)
    _add_path(p, "config")
    _add_path(p, "salient-from")
    p.add_argument("--oracle", action="store_true",
                   help="build augmentation from oracle extractive labels")
    _add_config_flags(p, list(MODEL_KEYS)
                      + ["epochs", "lr", "warmup_steps", "accumulate",
                         "emb_dim", "salient_ratio"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-extractor",
                       help="build oracle labels and train the extractor")
    _add_path(p, "data", required=True)
    _add_path(p, "output", required=True)
    _add_path(p, "labels-out")
    _add_path(p, "config")
    _add_config_flags(p, ["epochs", "lr", "dev_fraction", "vocab_size", "seed",
                          "ext_d", "ext_heads", "ext_ffn", "ext_hidden",
                          "ext_positions"])
    p.set_defaults(func=cmd_train_extractor)

    p = sub.add_parser("summarize", help="summarize documents with a checkpoint")
    _add_path(p, "data", required=True)
    _add_path(p, "checkpoint", required=True)
    _add_path(p, "output", required=True)
    _add_path(p, "config")
    _add_path(p, "extractor")
    _add_path(p, "salient-from")
    p.add_argument("--oracle", action="store_true",
                   help="use oracle extractive labels instead of the extractor")
    _add_config_flags(p, ["emb_dim", "salient_ratio"])
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("evaluate", help="score system summaries")
    _add_path(p, "system", required=True)
    _add_path(p, "references", required=True)
    _add_path(p, "report", required=True)
    _add_path(p, "csv")
    p.add_argument("--unweighted-graph", action="store_true")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
