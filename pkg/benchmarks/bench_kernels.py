"""Throughput of the compiled kernels against the pure-Python fallback.

Run with ``python3 benchmarks/bench_kernels.py``.  Every workload is run on
each available backend; outputs are compared so a speedup never hides a
disagreement.
"""
import argparse
import time

import numpy as np

from wmlab.kernels import available_backends


def workloads(rng, vocab, rows):
    q = rng.dirichlet(np.full(vocab, 0.3), size=rows)
    seeds = rng.integers(0, 2**63, size=rows).astype(np.uint64)
    inv_perm = rng.permutation(vocab).astype(np.int64)
    u = rng.random(rows)

    def gumbel_vectors(k):
        return np.concatenate([k.gumbel_vector(int(s), vocab) for s in seeds])

    def argmax_many(k):
        return k.gumbel_argmax_many(q[0], seeds)

    def aux_rows(k):
        return k.aux_select_rows(q, seeds, inv_perm, 0.1)

    def residual(k):
        return np.array([k.residual_sample(q[i], 0.1, float(u[i])) for i in range(rows)])

    return {"gumbel_vector": gumbel_vectors, "gumbel_argmax_many": argmax_many,
            "aux_select_rows": aux_rows, "residual_sample": residual}


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--vocab", type=int, default=64)
    ap.add_argument("--rows", type=int, default=2000, help="positions per workload")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = available_backends()
    jobs = workloads(np.random.default_rng(args.seed), args.vocab, args.rows)
    names = list(backends)
    print(f"vocab={args.vocab} rows={args.rows} best of {args.repeat}")
    print(f"{'kernel':<20}" + "".join(f"{n + ' (ms)':>16}" for n in names) + f"{'speedup':>10}{'agree':>8}")
    for job, fn in jobs.items():
        timings, outputs = {}, {}
        for name, mod in backends.items():
            timings[name], outputs[name] = best_time(lambda: fn(mod), args.repeat)
        agree = all(np.array_equal(outputs[names[0]], outputs[n]) for n in names[1:])
        speed = timings["python"] / timings["cython"] if "cython" in timings else float("nan")
        print(f"{job:<20}" + "".join(f"{1e3 * timings[n]:>16.2f}" for n in names) + f"{speed:>10.1f}{str(agree):>8}")
    if "cython" not in backends:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
