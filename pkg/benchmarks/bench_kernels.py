"""Throughput comparison of the two convolution kernel backends.

Runs the forward and backward kernels on identical seeded inputs through
the pure NumPy implementation and, when built, the compiled extension,
then prints documents/second and the speedup.  A correctness cross-check
runs first so the timing never covers diverging code.

Usage: python3 benchmarks/bench_kernels.py [--docs N] [--len T] [--dim D]
       [--filters F] [--repeat R]
"""

import argparse
import time

import numpy as np

from petcast.nn.kernels import compiled_available, pyconv

try:
    from petcast.nn.kernels import _cconv
except ImportError:
    _cconv = None

WIDTHS = (1, 2, 3)


def make_inputs(n_docs, seq_len, dim, n_filters, seed=0):
    rng = np.random.default_rng(seed)
    docs = [rng.normal(size=(seq_len, dim)) for _ in range(n_docs)]
    layers = {
        w: (
            rng.normal(size=(n_filters, w * dim)) * 0.1,
            rng.normal(size=n_filters) * 0.1,
        )
        for w in WIDTHS
    }
    return docs, layers


def run_forward(mod, docs, layers):
    out = []
    for emb in docs:
        for w, (weights, bias) in layers.items():
            out.append(mod.conv_forward(emb, weights, bias))
    return out


def run_backward(mod, docs, layers, traces):
    i = 0
    for emb in docs:
        for w, (weights, bias) in layers.items():
            pooled, argmax = traces[i]
            i += 1
            d_emb = np.zeros_like(emb)
            d_w = np.zeros_like(weights)
            d_b = np.zeros_like(bias)
            g = np.ones_like(pooled)
            mod.conv_backward(emb, weights, g, pooled, argmax, d_emb, d_w, d_b)


def cross_check(docs, layers):
    py = run_forward(pyconv, docs[:4], layers)
    cc = run_forward(_cconv, docs[:4], layers)
    for (p_pool, p_arg), (c_pool, c_arg) in zip(py, cc):
        np.testing.assert_allclose(p_pool, c_pool, atol=1e-12)
        np.testing.assert_array_equal(p_arg, c_arg)


def bench(mod, docs, layers, repeat):
    traces = run_forward(mod, docs, layers)
    t0 = time.perf_counter()
    for _ in range(repeat):
        run_forward(mod, docs, layers)
    fwd = (time.perf_counter() - t0) / repeat
    t0 = time.perf_counter()
    for _ in range(repeat):
        run_backward(mod, docs, layers, traces)
    bwd = (time.perf_counter() - t0) / repeat
    return fwd, bwd


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--docs", type=int, default=64)
    parser.add_argument("--len", dest="seq_len", type=int, default=400)
    parser.add_argument("--dim", type=int, default=100)
    parser.add_argument("--filters", type=int, default=100)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    docs, layers = make_inputs(args.docs, args.seq_len, args.dim, args.filters)
    print(
        f"{args.docs} docs, len {args.seq_len}, dim {args.dim}, "
        f"{args.filters} filters x widths {WIDTHS}, mean of {args.repeat} runs"
    )

    results = {}
    fwd, bwd = bench(pyconv, docs, layers, args.repeat)
    results["python"] = (fwd, bwd)
    if compiled_available() and _cconv is not None:
        cross_check(docs, layers)
        results["compiled"] = bench(_cconv, docs, layers, args.repeat)
    else:
        print("compiled extension not built; timing the NumPy backend only")

    print(f"{'backend':<10} {'fwd s':>9} {'bwd s':>9} {'docs/s fwd':>11} {'docs/s bwd':>11}")
    for name, (fwd, bwd) in results.items():
        print(
            f"{name:<10} {fwd:>9.4f} {bwd:>9.4f} "
            f"{args.docs / fwd:>11.0f} {args.docs / bwd:>11.0f}"
        )
    if "compiled" in results:
        sf = results["python"][0] / results["compiled"][0]
        sb = results["python"][1] / results["compiled"][1]
        print(f"speedup: forward x{sf:.1f}, backward x{sb:.1f}")


if __name__ == "__main__":
    main()
