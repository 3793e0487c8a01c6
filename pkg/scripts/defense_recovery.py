"""HOTA of clean, attacked and defended sequences (recovery-gap style table).

Usage: python3 scripts/defense_recovery.py [--preset sparse] [--loss tqf] [--frame 8]
"""

import argparse

from tbp_attack.attacks import AttackConfig
from tbp_attack.experiments import attack_episode, defend_frames
from tbp_attack.metrics import evaluate, report_table
from tbp_attack.sensors import DEFENSES
from tbp_attack.synthetic import gen_synthetic_sequence, preset
from tbp_attack.tracker import Tracker, trace_to_trajectories


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="sparse")
    ap.add_argument("--loss", default="tqf", choices=["tqf", "tmc"])
    ap.add_argument("--frame", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    seq, gt = gen_synthetic_sequence(preset(args.preset, args.seed))
    ep = attack_episode(seq, args.frame, AttackConfig(loss_kind=args.loss), gt=gt)
    tracker = Tracker()
    rows = [("clean", ep.clean), ("attacked", ep.attacked)]
    for kind in DEFENSES:
        for label, frames in ((f"clean+{kind}", seq.frames), (f"attacked+{kind}", ep.result.frames)):
            trace, _ = tracker.run(defend_frames(frames, kind, args.seed))
            rows.append((label, evaluate(gt, trace_to_trajectories(trace))))
    print(report_table(rows), end="")


if __name__ == "__main__":
    main()
