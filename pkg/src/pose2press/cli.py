"""Command-line interface.

Subcommands: synth, train, knn-build, eval, cop, plot.  Exit codes:
0 success, 1 usage or configuration problem, 2 malformed or inconsistent
data, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, NumericalError, ShapeError
from .harness import (
    SyntheticSpec,
    TrainConfig,
    build_knn_predictor,
    evaluate,
    load_knn_predictor,
    load_manifest,
    render_heatmap,
    save_knn_predictor,
    split_for_subject,
    synth_generate,
    train,
    write_report,
)
from .harness.evaluate import PressNetPredictor
from .metrics import center_of_pressure
from .pressnet import PressNetConfig, build_pressnet
from .pressure import clean_and_mask, load_mask_file, load_pressure_file
from .harness.data import load_takes

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; usage errors are 1
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pose2press",
                     description="Foot-pressure regression from 2D pose keypoints")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the seed controlling all randomness (default 42)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--spec", required=True, help="SyntheticSpec JSON file")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train the network on one LOSO split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split-subject", required=True, help="held-out test subject")
    p.add_argument("--config", required=True, help="TrainConfig JSON file")
    p.add_argument("--model-config", help="network architecture JSON (default architecture if omitted)")
    p.add_argument("--out", required=True, help="checkpoint directory")

    p = sub.add_parser("knn-build", help="build the nearest-neighbor index for a split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split-subject", required=True)
    p.add_argument("--factor", type=int, default=5, help="temporal subsampling factor")
    p.add_argument("--out", required=True, help="index JSON path")

    p = sub.add_parser("eval", help="evaluate a checkpoint and/or KNN index on a split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split-subject", required=True)
    p.add_argument("--checkpoint", help="checkpoint .p2p produced by train")
    p.add_argument("--knn-index", help="index JSON produced by knn-build")
    p.add_argument("--report", required=True, help="output report JSON path")

    p = sub.add_parser("cop", help="per-frame center of pressure from a pressure file")
    p.add_argument("--pressure", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("plot", help="render ground truth vs prediction heatmaps")
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--gt", required=True, help="ground-truth pressure CSV")
    p.add_argument("--pred", required=True, help="predicted pressure CSV")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _cmd_synth(args) -> int:
    spec = SyntheticSpec.from_json_file(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    manifest = synth_generate(spec, args.out)
    print(f"wrote {len(manifest.subject_ids())} subjects to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    manifest = load_manifest(args.manifest)
    split = split_for_subject(manifest, args.split_subject)
    cfg = TrainConfig.from_json_file(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    first_take = manifest.take(split.train_takes[0])
    footmask = load_mask_file(manifest.resolve(first_take.mask_file))
    if args.model_config:
        import json

        with open(args.model_config) as fh:
            model_config = PressNetConfig.from_json(json.load(fh))
    else:
        model_config = PressNetConfig()
    model_config.dropout_rate = cfg.dropout_rate
    model = build_pressnet(model_config, seed=cfg.seed, footmask=footmask, dtype=cfg.dtype)
    result = train(model, manifest, split, cfg, out_dir=args.out)
    best = f"best epoch {result.best_epoch} (val MSE {result.best_val_mse:.6f})" \
        if result.best_epoch else "no validation"
    print(f"trained {cfg.epochs} epochs; {best}; checkpoint {result.checkpoint_path}")
    return EXIT_OK


def _cmd_knn_build(args) -> int:
    manifest = load_manifest(args.manifest)
    split = split_for_subject(manifest, args.split_subject)
    predictor = build_knn_predictor(manifest, split, factor=args.factor)
    save_knn_predictor(args.out, predictor)
    print(f"indexed {len(predictor.index)} frames (factor {args.factor}) -> {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    if not args.checkpoint and not args.knn_index:
        print("eval: provide --checkpoint, --knn-index, or both", file=sys.stderr)
        return EXIT_USAGE
    manifest = load_manifest(args.manifest)
    split = split_for_subject(manifest, args.split_subject)
    pressnet = PressNetPredictor.from_checkpoint(args.checkpoint) if args.checkpoint else None
    knn = load_knn_predictor(args.knn_index, manifest) if args.knn_index else None
    report = evaluate(manifest, split, pressnet=pressnet, knn=knn)
    write_report(report, args.report)
    for name, block in report["predictors"].items():
        print(f"{name}: MAE {block['mae_kpa']['mean']:.3f} kPa "
              f"(median {block['mae_kpa']['median']:.3f}, n={block['mae_kpa']['count']})")
    if "paired_t_test" in report:
        t = report["paired_t_test"]
        print(f"paired t-test ({t['a']} vs {t['b']}): t={t['t_stat']:.3f} p={t['p_value']:.3g}")
    print(f"report -> {args.report}")
    return EXIT_OK


def _cmd_cop(args) -> int:
    mask = load_mask_file(args.mask)
    grids = load_pressure_file(args.pressure)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_id",
                         "left_x_mm", "left_y_mm", "left_defined",
                         "right_x_mm", "right_y_mm", "right_defined"])
        for raw in grids:
            grid = clean_and_mask(raw)
            if not np.array_equal(grid.mask, mask):
                raise DataError(f"frame {raw.frame_id}: pressure NaN layout disagrees with mask file")
            row = [raw.frame_id]
            for foot in (0, 1):
                cop = center_of_pressure(grid, foot)
                row.extend([repr(cop.x_mm) if cop.defined else "",
                            repr(cop.y_mm) if cop.defined else "",
                            int(cop.defined)])
            writer.writerow(row)
    print(f"wrote CoP for {len(grids)} frames -> {args.out}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    def pick(path):
        for raw in load_pressure_file(path):
            if raw.frame_id == args.frame:
                return clean_and_mask(raw)
        raise DataError(f"{path}: no frame {args.frame}")

    gt = pick(args.gt)
    pred = pick(args.pred)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out = render_heatmap(out_dir / f"frame_{args.frame}.ppm", gt, pred)
    print(f"wrote {out}")
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "knn-build": _cmd_knn_build,
    "eval": _cmd_eval,
    "cop": _cmd_cop,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"pose2press {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ShapeError) as exc:
        print(f"pose2press {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"pose2press {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
