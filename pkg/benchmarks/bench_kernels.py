"""Benchmark the compiled kernels against the numpy reference backend.

Run: python benchmarks/bench_kernels.py [--repeats 200]

Times each hot kernel on training-shaped inputs, then a full train step of
the desk-scale summarizer under both backends (the backend is chosen at
import, so the end-to-end comparison re-executes this script in a
subprocess with SEGSUM_KERNELS pinned).
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np


def time_fn(fn, repeats):
    fn()  # warmup
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_kernels(repeats):
    from segsum.kernels import _core, reference

    rng = np.random.default_rng(0)
    L, d, V = 64, 64, 8000
    scores = np.ascontiguousarray(rng.normal(size=(L, L)))
    probs = reference.softmax_rows_fwd(scores)
    grad = np.ascontiguousarray(rng.normal(size=(L, L)))
    x = np.ascontiguousarray(rng.normal(size=(L, d)))
    xhat, rstd = reference.layernorm_fwd(x, 1e-5)
    logits = np.ascontiguousarray(rng.normal(size=(L, V)))
    targets = rng.integers(0, V, size=L).astype(np.int64)

    cases = [
        ("softmax_rows_fwd", lambda m: m.softmax_rows_fwd(scores)),
        ("softmax_rows_bwd", lambda m: m.softmax_rows_bwd(probs, grad)),
        ("layernorm_fwd", lambda m: m.layernorm_fwd(x, 1e-5)),
        ("layernorm_bwd", lambda m: m.layernorm_bwd(xhat, rstd, x)),
        ("cross_entropy_fwd", lambda m: m.cross_entropy_fwd(logits, targets)),
    ]
    print(f"{'kernel':22s} {'numpy (us)':>12s} {'compiled (us)':>14s} {'speedup':>8s}")
    for name, fn in cases:
        t_py = time_fn(lambda: fn(reference), repeats) * 1e6
        t_c = time_fn(lambda: fn(_core), repeats) * 1e6
        print(f"{name:22s} {t_py:12.1f} {t_c:14.1f} {t_py / t_c:7.2f}x")


def bench_train_step():
    from segsum.kernels import BACKEND
    from segsum.model import ModelConfig, SummarizerModel, build_sample, train_summarizer
    from segsum.pipeline import Document, SegmentedDocument, build_vocab

    rng = np.random.default_rng(1)
    words = [f"w{i}" for i in range(120)]
    sentences = [" ".join(rng.choice(words, size=8)) for _ in range(16)]
    doc = Document(id="bench", sentences=sentences)
    vocab = build_vocab(doc.tokens + [words], size=8000)
    segments = [(i, i + 4) for i in range(0, 16, 4)]
    segdoc = SegmentedDocument(doc, segments, [[i] for i in range(4)])
    refs = [" ".join(rng.choice(words, size=6)) for _ in range(4)]
    sample = build_sample(segdoc, refs, vocab)
    cfg = ModelConfig(d=64, layers=2, heads=2, ffn=128, vocab_size=len(vocab),
                      max_positions=128, l_min=24, l_max=40,
                      memory="attentive", memory_size=16, seed=0)
    model = SummarizerModel(cfg)
    train_summarizer(model, [sample], epochs=2, lr=1e-4)  # warmup
    t0 = time.perf_counter()
    train_summarizer(model, [sample], epochs=10, lr=1e-4)
    dt = (time.perf_counter() - t0) / 10
    print(f"train step ({BACKEND} backend): {dt * 1e3:.2f} ms/document")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--train-step-only", action="store_true")
    args = parser.parse_args()

    if args.train_step_only:
        bench_train_step()
        return

    try:
        import segsum.kernels._core  # noqa: F401
    except ImportError:
        print("compiled extension not built; nothing to compare")
        sys.exit(1)

    bench_kernels(args.repeats)
    print()
    for backend in ("c", "py"):
        env = dict(os.environ, SEGSUM_KERNELS=backend)
        subprocess.run([sys.executable, __file__, "--train-step-only"],
                       env=env, check=True)


if __name__ == "__main__":
    main()
