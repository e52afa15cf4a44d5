"""Command-line entry point.

Exit codes: 0 success, 1 usage, 2 input/schema error, 3 internal invariant
violation (including a failed gradient check).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .evaluate import InvariantError, dumps_report, run_eval
from .geom import DistanceKind
from .grading import grade
from .losses import OPS, gradcheck
from .maskmeasure import DEFAULT_MIN_AREA, measure_masks, read_pgm
from .metrics import MatchConfig
from .records import SchemaError, parse_records
from .rng import make_generator
from .synth import SynthConfig, synth_generate, write_synth

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("polymeasure")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_masks(directory: str | None) -> dict | None:
    if directory is None:
        return None
    return {p.stem: read_pgm(p) for p in sorted(Path(directory).glob("*.pgm"))}


def cmd_eval(args) -> int:
    cfg = MatchConfig(args.chamfer_thresh, args.conf_thresh, DistanceKind(args.distance))
    gt = parse_records(args.gt)
    pred = parse_records(args.pred)
    report = run_eval(
        gt, pred, cfg, workers=args.workers,
        gt_masks=_load_masks(args.gt_masks), pred_masks=_load_masks(args.pred_masks),
    )
    missing = report["unmatched_ids"]
    if missing["gt_only"] or missing["pred_only"]:
        log.warning("unmatched image ids: %s", missing)
    _emit(dumps_report(report), args.out)
    return EXIT_OK


def _grade_entry(image_id, ratio):
    return {"id": image_id, "vd_cd": ratio, "grade": None if ratio is None else grade(ratio, image_id).to_dict()}


def cmd_grade(args) -> int:
    if args.report:
        report = json.loads(Path(args.report).read_text(encoding="utf-8"))
        items = [(row["id"], row["pred_ratio"]) for row in report["images"]]
    else:
        data = json.loads(Path(args.ratios).read_text(encoding="utf-8"))
        if isinstance(data, dict):
            items = list(data.items())
        elif isinstance(data, list):
            items = [(row["id"], row["vd_cd"]) for row in data]
        else:
            raise SchemaError(args.ratios, "expected an object {id: ratio} or a list of {id, vd_cd}")
    out = []
    for image_id, ratio in items:
        if ratio is not None and (isinstance(ratio, bool) or not isinstance(ratio, (int, float))):
            raise SchemaError(f"{image_id}", f"ratio must be a number or null, got {ratio!r}")
        out.append(_grade_entry(image_id, ratio))
    _emit(json.dumps(out, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_measure_mask(args) -> int:
    out = []
    for path in args.inputs:
        m = measure_masks(read_pgm(path), min_area=args.min_area)
        ratio = m.ratio
        out.append({
            "path": str(path),
            "villi_lengths": m.villi_lengths,
            "crypt_lengths": m.crypt_lengths,
            "crypt_depth": m.crypt_depth,
            "ratio": ratio,
            "grade": None if ratio is None else grade(ratio, Path(path).stem).to_dict(),
        })
    _emit(json.dumps(out, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = SynthConfig.from_json(args.config)
    write_synth(synth_generate(cfg), args.out_dir, cfg)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    ok = True
    for op in args.ops or list(OPS):
        r = gradcheck(op, args.trials, args.step, args.tol, rng=make_generator(args.seed))
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {op:12s} checked={r.checked:5d} skipped={r.skipped:4d} max_rel_err={r.max_rel_error:.3e}")
        ok &= r.passed
    return EXIT_OK if ok else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="polymeasure", description="Polyline measurement, evaluation and grading tools.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("--gt", required=True)
    e.add_argument("--pred", required=True)
    e.add_argument("--chamfer-thresh", type=float, default=0.05)
    e.add_argument("--conf-thresh", type=float, default=0.5)
    e.add_argument("--distance", choices=[k.value for k in DistanceKind], default="chamfer")
    e.add_argument("--out")
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--gt-masks", help="directory of <id>.pgm ground-truth label maps")
    e.add_argument("--pred-masks", help="directory of <id>.pgm predicted label maps")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("grade", help="grade Vd:Cd ratios")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--ratios")
    src.add_argument("--report")
    g.add_argument("--out")
    g.set_defaults(func=cmd_grade)

    m = sub.add_parser("measure-mask", help="measure lengths from PGM label maps")
    m.add_argument("--in", dest="inputs", nargs="+", required=True)
    m.add_argument("--min-area", type=int, default=DEFAULT_MIN_AREA)
    m.add_argument("--out")
    m.set_defaults(func=cmd_measure_mask)

    s = sub.add_parser("synth", help="generate synthetic fixtures")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_synth)

    gc = sub.add_parser("gradcheck", help="verify loss gradients by finite differences")
    gc.add_argument("--trials", type=int, default=100)
    gc.add_argument("--step", type=float, default=1e-5)
    gc.add_argument("--tol", type=float, default=1e-4)
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--ops", nargs="*", choices=list(OPS))
    gc.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InvariantError as exc:
        log.error("%s", exc)
        return EXIT_INVARIANT
    except (SchemaError, ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
