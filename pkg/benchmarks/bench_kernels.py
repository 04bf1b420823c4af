"""Time the compiled event-loop kernel against its pure-Python twin.

    python benchmarks/bench_kernels.py [--events N] [--repeat R]

Two workloads: the mild preset with adaptation on (the kernel is called in
25-event segments) and the same link with adaptation off (one long segment,
so the timing is almost all kernel).  Outputs are checked for equality
before any number is printed.
"""

import argparse
import sys
import timeit

import numpy as np

from rkeadapt import kernels, scenario


def workload(cfg, backend, events):
    sim = scenario._simulator(cfg, backend)
    return sim.run(events)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--events", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if "cython" not in kernels.BACKENDS:
        print("compiled kernel not built; run `pip install -e . --no-build-isolation` first")
        return 1

    base = scenario.load_preset("mild").with_overrides(attacks=(), duration_events=args.events)
    cases = {
        "adaptive, 25-event segments": base,
        "fixed link, one segment": base.with_overrides(adaptation=False),
    }
    print(f"{args.events} events, best of {args.repeat}")
    print(f"{'workload':32s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s}")
    for label, cfg in cases.items():
        a = workload(cfg, "python", args.events)
        b = workload(cfg, "cython", args.events)
        assert np.array_equal(a.success, b.success) and np.array_equal(a.pdr_latest, b.pdr_latest)
        t = {
            name: min(timeit.repeat(lambda: workload(cfg, name, args.events), number=1, repeat=args.repeat))
            for name in ("python", "cython")
        }
        print(f"{label:32s} {t['python']:10.3f} {t['cython']:10.3f} {t['python'] / t['cython']:7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
