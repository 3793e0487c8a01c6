"""``fade-bench``: command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Errors go to stderr as one ``code: message`` line, where ``code`` is one of
``usage_error``, ``data_error`` or ``numerical_failure``.
Set ``FADE_LOG=error|info|debug`` to control log verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .attacks import NumericalFailure, run_attack
from .autograd import NonFiniteError
from .dataio import (DataError, atomic_write_text, load_config, load_sequence, parse_mot, read_json, save_sequence,
                     write_json, write_mot)
from .experiments import defend_frames
from .gradchecks import SUITES, run_suite
from .metrics import EvalReport, evaluate, report_table
from .sensors import DEFENSES
from .synthetic import PRESETS, Sequence, gen_synthetic_sequence, preset
from .tracker import StateTrace, Tracker, memory_diagnostics, trace_to_trajectories

__all__ = ["main", "build_parser"]

log = logging.getLogger("tbp_attack")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        raise UsageError(f"{message}\n{self.format_usage().strip()}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fade-bench", description="FADE attack workbench on a toy tracking-by-propagation tracker.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen", help="render a synthetic preset with ground truth")
    g.add_argument("--preset", required=True, choices=sorted(PRESETS))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--length", type=int, default=20)
    g.add_argument("--out", required=True)

    t = sub.add_parser("track", help="clean tracking of a sequence folder")
    t.add_argument("--seq", required=True)
    t.add_argument("--config")
    t.add_argument("--out", required=True, help="predictions in MOTChallenge format")
    t.add_argument("--trace", help="optional state trace JSON")

    a = sub.add_parser("attack", help="PGD attack on frames --frame .. --frame+window-1")
    a.add_argument("--seq", required=True)
    a.add_argument("--config")
    a.add_argument("--vector", choices=["digital", "aai", "eai"], default=None)
    a.add_argument("--loss", choices=["tqf", "tmc", "bypass"], default=None)
    a.add_argument("--frame", type=int, required=True, help="0-based first attacked frame")
    a.add_argument("--window", type=int, default=None)
    a.add_argument("--anchor", choices=["gt", "pred"], default=None)
    a.add_argument("--out", required=True)

    d = sub.add_parser("defend", help="apply a pre-processing defense to every frame")
    d.add_argument("--seq", required=True)
    d.add_argument("--kind", required=True, choices=list(DEFENSES))
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="HOTA / IDF1 / IDSW of predictions against ground truth")
    e.add_argument("--gt", required=True)
    e.add_argument("--pred", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--table", help="optional aligned-text table")

    m = sub.add_parser("diagnose", help="memory-bank diagnostics of a trace at one frame")
    m.add_argument("--trace", required=True)
    m.add_argument("--frame", type=int, required=True)
    m.add_argument("--out", required=True)

    c = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    c.add_argument("--target", required=True, choices=sorted(SUITES))
    c.add_argument("--tol", type=float, default=1e-3)

    r = sub.add_parser("report", help="comparison table of EvalReport JSON files")
    r.add_argument("--inputs", nargs="+", required=True)
    r.add_argument("--out", required=True)
    return p


# ---------------------------------------------------------------------------
def _cmd_gen(args) -> int:
    seq, gt = gen_synthetic_sequence(preset(args.preset, args.seed, args.length))
    save_sequence(args.out, seq, gt, meta={"preset": args.preset, "seed": args.seed})
    print(f"wrote {len(seq)} frames and {len(gt)} tracks to {args.out}")
    return EXIT_OK


def _cmd_track(args) -> int:
    cfg = load_config(args.config)
    seq, _ = load_sequence(args.seq)
    trace, _ = Tracker(cfg.tracker).run(seq.frames)
    write_mot(trace_to_trajectories(trace), args.out)
    if args.trace:
        doc = trace.to_json()
        doc["config"] = cfg.echo(seq.height, seq.width)
        write_json(args.trace, doc)
    return EXIT_OK


def _cmd_attack(args) -> int:
    overrides = {k: v for k, v in (("vector", args.vector), ("loss_kind", args.loss), ("window", args.window),
                                   ("anchor_mode", args.anchor)) if v is not None}
    cfg = load_config(args.config, {"attack": overrides} if overrides else None)
    seq, gt = load_sequence(args.seq)
    if cfg.attack.loss_kind == "tqf" and cfg.attack.anchor_mode == "gt" and gt is None:
        raise DataError(f"{args.seq}: TQF with ground-truth anchors needs gt.txt")
    if not 0 <= args.frame < len(seq):
        raise DataError(f"--frame {args.frame} outside sequence of length {len(seq)}")
    bounds = cfg.resolve_bounds(seq.height, seq.width)
    res = run_attack(Tracker(cfg.tracker), seq.frames, args.frame, cfg.attack, bounds=bounds, gt=gt)
    out = Path(args.out)
    save_sequence(out, Sequence(res.frames, seq.fps, seq.name + "-adv"), gt,
                  meta={"attacked_frames": res.attacked}, lossless=True)
    doc = res.to_json()
    doc["config"] = cfg.echo(seq.height, seq.width)
    doc["sequence"] = {"name": seq.name, "length": len(seq), "height": seq.height, "width": seq.width}
    write_json(out / "attack.json", doc)
    print(f"attacked frames {res.attacked}: best objective {[round(v, 6) for v in res.best_objective()]}")
    return EXIT_OK


def _cmd_defend(args) -> int:
    seq, gt = load_sequence(args.seq)
    frames = defend_frames(seq.frames, args.kind, args.seed)
    save_sequence(args.out, Sequence(frames, seq.fps, f"{seq.name}-{args.kind}"), gt,
                  meta={"defense": args.kind, "seed": args.seed}, lossless=True)
    return EXIT_OK


def _cmd_eval(args) -> int:
    rep = evaluate(parse_mot(args.gt), parse_mot(args.pred))
    write_json(args.out, rep.to_dict())
    table = report_table([(Path(args.pred).stem, rep)])
    if args.table:
        atomic_write_text(args.table, table)
    print(table, end="")
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    try:
        trace = StateTrace.from_json(read_json(args.trace))
    except (KeyError, TypeError) as e:
        raise DataError(f"{args.trace}: not a state trace ({e})") from None
    diag = memory_diagnostics(trace, args.frame)
    write_json(args.out, {k: np.asarray(v).tolist() for k, v in diag.items()} | {"frame": args.frame})
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    ok = True
    for name, rep in run_suite(args.target, tol=args.tol):
        ok &= rep.passed
        print(f"{'PASS' if rep.passed else 'FAIL'} {name}: max rel err {rep.max_rel_error:.3e} at {rep.worst_index}")
    if not ok:
        raise FloatingPointError(f"gradient check failed for target {args.target}")
    return EXIT_OK


def _cmd_report(args) -> int:
    rows = []
    for path in args.inputs:
        doc = read_json(path)
        label = doc.pop("label", Path(path).stem) if isinstance(doc, dict) else Path(path).stem
        try:
            rows.append((label, EvalReport.from_dict(doc)))
        except (TypeError, ValueError, AttributeError) as e:
            raise DataError(f"{path}: not an EvalReport ({e})") from None
    table = report_table(rows)
    atomic_write_text(args.out, table)
    print(table, end="")
    return EXIT_OK


COMMANDS = {"gen": _cmd_gen, "track": _cmd_track, "attack": _cmd_attack, "defend": _cmd_defend, "eval": _cmd_eval,
            "diagnose": _cmd_diagnose, "gradcheck": _cmd_gradcheck, "report": _cmd_report}


def _setup_logging() -> None:
    level = os.environ.get("FADE_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _fail(code: str, message: str, status: int) -> int:
    print(f"{code}: {' '.join(message.split())}", file=sys.stderr)
    return status


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        msg, _, usage = str(e).partition("\n")
        print(f"usage_error: {msg}", file=sys.stderr)
        print(usage, file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (NumericalFailure, NonFiniteError, FloatingPointError) as e:
        return _fail("numerical_failure", str(e), EXIT_NUMERIC)
    except (DataError, OSError, ValueError, IndexError) as e:
        return _fail("data_error", str(e), EXIT_DATA)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
