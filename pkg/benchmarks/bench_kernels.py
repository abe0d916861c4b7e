#!/usr/bin/env python3
"""Time the compiled kernels against the numpy fallback at Cora scale.

Usage::

    python benchmarks/bench_kernels.py [--repeat 20] [--data data/cora]

Without the Cora files a random graph of the same size is used.  The dense
kernels are timed on a batch of real diffused rows and on a dense random batch
of the same shape.  Each row reports the best wall time over ``--repeat`` calls
per backend, after checking that both backends agree to 1e-12.
"""
import argparse
import timeit
from pathlib import Path

import numpy as np

from dcnn import kernels
from dcnn.data import generate_synthetic, load_citation_dir
from dcnn.graph import build_transition, diffuse


def cora_like(data_dir):
    if (Path(data_dir) / "cora.cites").exists():
        return load_citation_dir(data_dir).graph
    rng = np.random.default_rng(0)
    g = generate_synthetic("random", 2708, seed=0, p=5278 / (2708 * 2707 / 2))
    return g.with_features((rng.random((2708, 1433)) < 0.013).astype(float))


def dense_cases(label, inputs, hops, classes, rng):
    F = inputs.shape[1] // (hops + 1)
    batch = inputs.shape[0]
    wc = rng.normal(0, 0.1, (hops + 1, F))
    wd = rng.normal(0, 0.1, (classes, (hops + 1) * F))
    z, _ = kernels.dense_forward(inputs, wc, wd, backend="python")
    upstream = rng.normal(size=(batch, classes))
    return {
        f"dense forward, {label}":
            lambda b: kernels.dense_forward(inputs, wc, wd, backend=b)[1],
        f"dense backward, {label}":
            lambda b: np.concatenate([g.ravel() for g in
                                      kernels.dense_backward(inputs, z, wd, upstream, backend=b)]),
    }


def cases(graph, hops, classes, batch, rng):
    P = build_transition(graph).matrix
    X = np.ascontiguousarray(graph.features)
    F = X.shape[1]
    rows = rng.choice(graph.num_nodes, batch, replace=False)
    diffused = np.ascontiguousarray(diffuse(graph, hops).flat()[rows])

    def spmm(backend):
        out = np.empty_like(X)
        kernels.spmm_csr(P.indptr, P.indices, P.data, X, out, backend=backend)
        return out

    table = {f"spmm P@X ({P.shape[0]}x{F}, nnz={P.nnz})": spmm}
    density = np.count_nonzero(diffused) / diffused.size
    table.update(dense_cases(f"diffused rows ({density:.0%} nonzero)", diffused,
                             hops, classes, rng))
    table.update(dense_cases("random dense rows", rng.random(diffused.shape),
                             hops, classes, rng))
    return table


def main(argv=None):
    parser = argparse.ArgumentParser(description="kernel backend benchmark")
    parser.add_argument("--data", default="data/cora")
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--hops", type=int, default=2)
    parser.add_argument("--batch", type=int, default=64)
    args = parser.parse_args(argv)

    backends = kernels.available_backends()
    print(f"backends: {backends} (active: {kernels.BACKEND})")
    rng = np.random.default_rng(0)
    table = cases(cora_like(args.data), args.hops, 7, args.batch, rng)
    print(f"batch={args.batch}, H={args.hops}")
    print(f"{'kernel':48s}" + "".join(f"{b:>12s}" for b in backends) + "   speedup")
    for name, fn in table.items():
        ref = fn("python")
        times = {}
        for b in backends:
            if not np.allclose(fn(b), ref, rtol=0, atol=1e-12):
                raise SystemExit(f"{name}: backend {b} disagrees with python")
            times[b] = min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat))
        speedup = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:48s}" + "".join(f"{times[b] * 1e3:10.2f}ms" for b in backends)
              + f"   {speedup:6.2f}x")


if __name__ == "__main__":
    main()
