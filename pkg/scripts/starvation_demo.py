"""Query-budget starvation on the dense preset.

Sets the budget to (object count - 2), floods one frame with a TQF attack and
lists which legitimate identities are terminated in the following frames.

Usage: python3 scripts/starvation_demo.py [--frame 8] [--seed 0] [--weights 1 0 0]
"""

import argparse

from tbp_attack.attacks import AttackConfig
from tbp_attack.experiments import attack_episode, legit_terminations
from tbp_attack.losses import LossWeights
from tbp_attack.synthetic import gen_synthetic_sequence, preset
from tbp_attack.tracker import TrackerConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frame", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--weights", type=float, nargs=3, default=[1.0, 0.0, 0.0], metavar=("FLOOD", "COST", "SIPHON"))
    ap.add_argument("--horizon", type=int, default=5)
    args = ap.parse_args()

    seq, gt = gen_synthetic_sequence(preset("dense", args.seed))
    cfg = TrackerConfig(B=len(gt) - 2)
    attack = AttackConfig(loss_kind="tqf", weights=LossWeights(*args.weights))
    ep = attack_episode(seq, args.frame, attack, cfg, gt=gt)
    t, h = args.frame, args.horizon
    print(f"objects {len(gt)}, budget B={cfg.B}, attacked frame {t}")
    print(f"clean terminations in frames {t}..{t + h}:    {legit_terminations(ep.clean_trace, t, h)}")
    print(f"attacked terminations in frames {t}..{t + h}: {legit_terminations(ep.adv_trace, t, h)}")
    print(f"HOTA clean {ep.clean.HOTA:.4f} attacked {ep.attacked.HOTA:.4f}")


if __name__ == "__main__":
    main()
