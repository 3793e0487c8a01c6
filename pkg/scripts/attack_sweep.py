"""Clean vs attacked metrics for every preset, loss and attack vector.

Usage: python3 scripts/attack_sweep.py [--frame 8] [--vectors digital aai eai] [--out sweep.json]
"""

import argparse
import json
import time

from tbp_attack.attacks import AttackConfig
from tbp_attack.experiments import attack_episode
from tbp_attack.metrics import report_table


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frame", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--presets", nargs="+", default=["sparse", "crossing", "dense"])
    ap.add_argument("--losses", nargs="+", default=["tqf", "tmc"])
    ap.add_argument("--vectors", nargs="+", default=["digital"])
    ap.add_argument("--out")
    args = ap.parse_args()

    results = []
    for name in args.presets:
        rows = []
        for vector in args.vectors:
            for loss in args.losses:
                t0 = time.perf_counter()
                ep = attack_episode(name, args.frame, AttackConfig(loss_kind=loss, vector=vector), seed=args.seed)
                if not rows:
                    rows.append(("clean", ep.clean))
                rows.append((f"{loss}/{vector}", ep.attacked))
                s = ep.summary()
                s.pop("attack")
                results.append({"preset": name, "loss": loss, "vector": vector,
                                "seconds": round(time.perf_counter() - t0, 2), **s})
        print(f"== {name}")
        print(report_table(rows))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
