"""Timing comparison of the compiled and pure-Python QP kernels.

Runs the same workloads through both backends: a corpus of
dispatch-shaped QP instances hit directly, repeated base dispatches of a
bundled market, and full settlement of the bundled chain scenario.
Cross-checks statuses and objectives while it times, so a silent
divergence between the twins shows up here too.

Usage: python3 benchmarks/bench_kernels.py [--repeats N] [--instances N]
"""

from __future__ import annotations

import argparse
import contextlib
import importlib.resources
import sys
import time

import numpy as np

from powerroute import kernels
from powerroute.dispatch import solve_base_dispatch
from powerroute.engine import World, process_queue
from powerroute.kernels import _qp_py
from powerroute.scenario import parse_scenario

try:
    from powerroute.kernels import _qpcore
except ImportError:
    sys.exit(
        "compiled kernel not built; reinstall with Cython available "
        "(pip install -e . --no-build-isolation)"
    )


@contextlib.contextmanager
def use_impl(impl):
    # The facade resolves kernels._impl at call time, so rebinding it
    # routes every dispatch in the process through the chosen backend.
    saved = kernels._impl
    kernels._impl = impl
    try:
        yield
    finally:
        kernels._impl = saved


def qp_corpus(count: int, seed: int) -> list[tuple]:
    """Dispatch-shaped instances: diagonal PSD H, balance row, box + flow rows."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(3, 9))
        h = np.diag(np.where(rng.random(n) < 0.2, 0.0, rng.uniform(0.05, 0.3, n)) * 2.0)
        g = rng.uniform(0.5, 8.0, n)
        p_max = rng.uniform(80.0, 300.0, n)
        a_eq = np.ones((1, n))
        b_eq = np.array([0.6 * p_max.sum()])
        rows = [np.eye(n), -np.eye(n)]
        rhs = [p_max, -rng.uniform(0.0, 15.0, n)]
        m = int(rng.integers(4, 13))
        sens = rng.normal(scale=0.4, size=(m, n))
        lim = rng.uniform(60.0, 250.0, m)
        rows += [sens, -sens]
        rhs += [lim, lim]
        out.append((h, g, a_eq, b_eq, np.vstack(rows), np.concatenate(rhs)))
    return out


def time_qp(impl, corpus: list[tuple], repeats: int) -> tuple[float, list]:
    results = []
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        run = [impl.solve_qp(*inst) for inst in corpus]
        best = min(best, time.perf_counter() - t0)
        results = run
    return best, results


def time_dispatch(impl, network, repeats: int) -> float:
    best = float("inf")
    with use_impl(impl):
        for _ in range(repeats):
            t0 = time.perf_counter()
            for _ in range(50):
                solve_base_dispatch(network)
            best = min(best, time.perf_counter() - t0)
    return best


def time_settle(impl, text: str, repeats: int) -> float:
    best = float("inf")
    with use_impl(impl):
        for _ in range(repeats):
            scn = parse_scenario(text)  # fresh networks: settlement mutates schedules
            t0 = time.perf_counter()
            process_queue(World(scn.markets, scn.ties), scn.transactions)
            best = min(best, time.perf_counter() - t0)
    return best


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5, help="timing repeats, best kept")
    ap.add_argument("--instances", type=int, default=200, help="QP corpus size")
    ap.add_argument("--seed", type=int, default=20260815)
    args = ap.parse_args(argv)

    corpus = qp_corpus(args.instances, args.seed)
    t_py, res_py = time_qp(_qp_py, corpus, args.repeats)
    t_c, res_c = time_qp(_qpcore, corpus, args.repeats)
    mismatches = 0
    for (s_p, x_p, _), (s_c, x_c, _) in zip(res_py, res_c):
        if s_p != s_c:
            mismatches += 1
        elif s_p == kernels.OPTIMAL and not np.allclose(x_p, x_c, atol=1e-7):
            mismatches += 1
    if mismatches:
        print(f"WARNING: backends disagree on {mismatches} instances", file=sys.stderr)

    text = (
        importlib.resources.files("powerroute")
        .joinpath("data", "chain4.scn")
        .read_text(encoding="utf-8")
    )
    network = parse_scenario(text).markets[0]
    d_py = time_dispatch(_qp_py, network, args.repeats)
    d_c = time_dispatch(_qpcore, network, args.repeats)
    s_py = time_settle(_qp_py, text, args.repeats)
    s_c = time_settle(_qpcore, text, args.repeats)

    rows = [
        (f"qp corpus ({args.instances} solves)", t_py, t_c),
        ("base dispatch x50 (9-bus market)", d_py, d_c),
        ("settle chain4.scn (2 txns)", s_py, s_c),
    ]
    width = max(len(r[0]) for r in rows)
    print(f"{'workload':<{width}}  {'python':>10}  {'compiled':>10}  speedup")
    for name, tp, tc in rows:
        print(f"{name:<{width}}  {tp * 1e3:>8.1f}ms  {tc * 1e3:>8.1f}ms  {tp / tc:>6.2f}x")
    return 1 if mismatches else 0


if __name__ == "__main__":
    raise SystemExit(main())
