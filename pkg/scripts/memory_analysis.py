"""Memory-bank diagnostics before and after a TMC attack.

Prints, for frames after the attack, the mean similarity between bank entries
of the same identity, across identities, and the spread of entry norms.

Usage: python3 scripts/memory_analysis.py [--preset crossing] [--frame 8] [--vector digital]
"""

import argparse

import numpy as np

from tbp_attack.attacks import AttackConfig
from tbp_attack.experiments import attack_episode
from tbp_attack.tracker import memory_diagnostics


def bank_stats(trace, t):
    rec = trace[t]
    labels = np.array([i for i in sorted(rec.memory) for _ in rec.memory[i]])
    d = memory_diagnostics(trace, t)
    S = d["self_similarity"]
    same = (labels[:, None] == labels[None]) & ~np.eye(len(labels), dtype=bool)
    other = labels[:, None] != labels[None]
    pick = lambda m: float(S[m].mean()) if m.any() else float("nan")
    return pick(same), pick(other), float(d["l2_norms"].std())


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="crossing")
    ap.add_argument("--frame", type=int, default=8)
    ap.add_argument("--vector", default="digital", choices=["digital", "aai", "eai"])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ep = attack_episode(args.preset, args.frame, AttackConfig(loss_kind="tmc", vector=args.vector), seed=args.seed)
    print("frame  same-id clean/attacked  cross-id clean/attacked  norm-std clean/attacked")
    for t in range(args.frame, min(args.frame + 5, len(ep.clean_trace))):
        c, a = bank_stats(ep.clean_trace, t), bank_stats(ep.adv_trace, t)
        print(f"{t:5d}  {c[0]:7.3f} / {a[0]:7.3f}      {c[1]:7.3f} / {a[1]:7.3f}      {c[2]:6.3f} / {a[2]:6.3f}")


if __name__ == "__main__":
    main()
