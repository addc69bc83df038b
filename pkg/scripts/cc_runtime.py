"""Time mining on a 130k-observation, 12-feature congestion-control-like workload."""

import argparse
import time

from spectra.model import MinerConfig
from spectra.references import cc_like_observations
from spectra.synthesis import mine


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=65_000, help="observations per reference")
    ap.add_argument("--parts", type=int, default=50)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    obs = cc_like_observations(args.n, seed=0)
    config = MinerConfig(parts=args.parts, tau_max=2, tau_rep=0.01, history=4)
    times = []
    for _ in range(args.repeats):
        start = time.perf_counter()
        s = mine(obs, config)
        times.append(time.perf_counter() - start)
    print(f"{len(obs)} observations, d={obs.d}, {s.stats.n_interesting} interesting regions, {len(s)} specifications")
    print("wall time: " + ", ".join(f"{t:.2f} s" for t in times))


if __name__ == "__main__":
    main()
