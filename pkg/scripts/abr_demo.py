"""Simulate buffer-based and rate-based ABR sessions, mine specifications and report metrics."""

import argparse
import time

from spectra.export import render_report
from spectra.metrics import evaluate
from spectra.model import MinerConfig
from spectra.references import abr_observations, random_trace
from spectra.synthesis import mine


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--traces", type=int, default=40)
    ap.add_argument("--chunks", type=int, default=300)
    ap.add_argument("--parts", type=int, default=20)
    ap.add_argument("--tau-max", type=int, default=5)
    ap.add_argument("--tau-rep", type=float, default=0.01)
    args = ap.parse_args()
    train = abr_observations([random_trace(i) for i in range(args.traces)], chunks=args.chunks)
    test = abr_observations([random_trace(10_000 + i) for i in range(args.traces // 4 or 1)], chunks=args.chunks)
    config = MinerConfig(parts=args.parts, tau_max=args.tau_max, tau_rep=args.tau_rep, history=3)
    start = time.perf_counter()
    s = mine(train, config)
    print(f"{len(train)} observations, {s.stats.n_interesting} interesting regions, "
          f"{len(s)} specifications in {time.perf_counter() - start:.2f} s")
    print(render_report(s))
    for split, obs in (("train", train), ("test", test)):
        for m in evaluate(s, obs, split=split).references:
            print(f"{split} {m.name}: support {m.support}, confidence {m.confidence}")


if __name__ == "__main__":
    main()
