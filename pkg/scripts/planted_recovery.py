"""Mine specifications from two planted references and compare them against the planted boxes."""

import argparse
import json
import time
from pathlib import Path

from spectra.export import render_report
from spectra.metrics import evaluate
from spectra.model import MinerConfig, ObservationSet, OutputAlphabet, ReferenceData
from spectra.references import PlantedReference, PlantedRule, sample_planted
from spectra.synthesis import mine

FIXTURE = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "planted_rules.json"


def sample(spec, n, seed):
    refs = {}
    for i, (name, body) in enumerate(sorted(spec["references"].items())):
        rules = [PlantedRule.from_dict(r) for r in body["rules"]]
        refs[name] = PlantedReference(rules, len(spec["labels"]), body.get("noise_rate", 0.0), seed * 1000 + i + 1)
    data = sample_planted(refs, spec["lower"], spec["upper"], n, seed)
    references = tuple(ReferenceData(name, x, y) for name, (x, y) in data.items())
    return ObservationSet(references, OutputAlphabet(spec["labels"]), tuple(spec["features"]), spec.get("output_name", "y"))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rules", default=str(FIXTURE))
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--parts", type=int, default=20)
    ap.add_argument("--seed", type=int, default=11)
    args = ap.parse_args()
    spec = json.loads(Path(args.rules).read_text())
    train = sample(spec, args.n, args.seed)
    config = MinerConfig(parts=args.parts, tau_rep=0.02, tau_max=2, lower=tuple(spec["lower"]), upper=tuple(spec["upper"]))
    start = time.perf_counter()
    s = mine(train, config)
    print(f"mined {len(s)} specifications in {time.perf_counter() - start:.3f} s")
    print(render_report(s))
    test = sample(spec, args.n, args.seed + 1)
    for m in evaluate(s, test, split="test").references:
        print(f"{m.name}: support {m.support}, confidence {m.confidence}")
    print("planted boxes:")
    for rule in spec["references"]["A"]["rules"]:
        print("  ", rule["box"])


if __name__ == "__main__":
    main()
