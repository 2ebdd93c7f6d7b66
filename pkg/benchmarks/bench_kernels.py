"""Compare the numba and numpy epoch kernels on synthetic scenarios.

    python3 benchmarks/bench_kernels.py [--nodes 1 10 100] [--epochs 500000]

Reports wall time and ns per node-epoch for each backend, with and without
jitter, and checks that both backends agree on the final ledgers.
"""

import argparse
import time
from dataclasses import replace

from iobsim import engine
from iobsim.link import wir_link
from iobsim.scenario import Scenario, default_catalog, make_node


def build(n_nodes: int, epochs: int, jitter: float) -> Scenario:
    classes = [c for c in default_catalog() if c.name != "camera-video"]
    nodes = tuple(
        make_node(f"n{i}", classes[i % len(classes)], "wir", raw_rate=1e3 + 10.0 * i)
        for i in range(n_nodes)
    )
    return Scenario(nodes=nodes, links=(wir_link(),), duration=float(epochs), epoch=1.0,
                    jitter=jitter, seed=1)


def timed(s: Scenario, backend: str, repeat: int) -> tuple[float, engine.SimResult]:
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = engine.run(s, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, result


def max_rel_diff(a: engine.SimResult, b: engine.SimResult) -> float:
    worst = 0.0
    for nid, la in a.ledgers.items():
        lb = b.ledgers[nid]
        for x, y in ((la.final_J, lb.final_J), (la.consumed_J, lb.consumed_J)):
            worst = max(worst, abs(x - y) / max(abs(x), abs(y), 1e-300))
    return worst


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, nargs="+", default=[1, 10, 100])
    ap.add_argument("--epochs", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    engine.run(build(1, 10, 0.1), backend="numba")  # compile or load cache

    header = f"{'nodes':>6} {'jitter':>6} {'backend':>7} {'time_s':>9} {'ns/node-epoch':>14}"
    print(header)
    print("-" * len(header))
    for n in args.nodes:
        for jitter in (0.0, 0.1):
            s = build(n, args.epochs, jitter)
            results = {}
            for backend in ("numba", "numpy"):
                t, results[backend] = timed(s, backend, args.repeat)
                ns = t / (n * args.epochs) * 1e9
                print(f"{n:>6} {jitter:>6} {backend:>7} {t:>9.4f} {ns:>14.2f}")
            diff = max_rel_diff(results["numba"], results["numpy"])
            print(f"{'':>6} {'':>6} {'agree':>7} max rel diff {diff:.2e}")


if __name__ == "__main__":
    main()
