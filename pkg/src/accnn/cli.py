"""Command-line interface: ``accnn <subcommand> ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import io
from .density import GaussianSpec, count_from_density, ground_truth_density, mae
from .fuzzy import LEVEL_ORDER, classify_hp_level, defuzzify_centroid, fuzzify, infer
from .headsize import OracleEstimator, PerspectiveEstimator, fit_perspective_model, heads_from_annotations
from .pipeline import count_image, train_bank
from .regressor import DEFAULT_HP_CONFIGS, TrainParams
from .synth import SynthSceneParams, gen_synthetic_scene


class CLIError(Exception):
    pass


def _image_id(path):
    return Path(path).stem


def _points_for(records_by_id, image_id, image, required=True):
    points = records_by_id.get(image_id)
    if points is None:
        if required:
            raise CLIError(f"no annotations for image {image_id!r}")
        return []
    h, w = image.shape
    io.check_points_in_image(points, w, h, image_id)
    return points


def _image_paths(directory):
    paths = sorted(Path(directory).glob("*.pgm"))
    if not paths:
        raise CLIError(f"no .pgm images in {directory}")
    return paths


def _fmt(v):
    return format(float(v), ".17g")


def cmd_gt_density(args):
    image = io.load_pgm(args.image)
    by_id = io.group_annotations(io.load_annotations(args.ann))
    points = _points_for(by_id, _image_id(args.image), image, required=False)
    h, w = image.shape
    density = ground_truth_density(w, h, points, GaussianSpec(args.sigma))
    io.save_density_csv(density, args.out)
    print(f"count={_fmt(count_from_density(density))}")


def cmd_train(args):
    cfg = io.load_fis_config(args.config)
    by_id = io.group_annotations(io.load_annotations(args.ann))
    pairs = []
    for path in _image_paths(args.images):
        image = io.load_pgm(path)
        pairs.append((image, _points_for(by_id, _image_id(path), image)))
    hps = DEFAULT_HP_CONFIGS
    if args.hp_config:
        hps = io.parse_hp_configs(Path(args.hp_config).read_text(encoding="utf-8"), args.hp_config)
    base = TrainParams()
    params = TrainParams(
        momentum=base.momentum,
        learning_rate=args.lr if args.lr is not None else base.learning_rate,
        weight_decay=args.weight_decay if args.weight_decay is not None else base.weight_decay,
        epochs=args.epochs if args.epochs is not None else base.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    obs = []
    for _, points in pairs:
        obs.extend(heads_from_annotations(points))
    perspective = fit_perspective_model(obs)
    bank = train_bank(pairs, cfg, OracleEstimator(), hps, params)
    io.save_bank(bank, args.out_bank, perspective)
    print(f"trained {len(pairs)} images -> {args.out_bank}")


def _estimator(args):
    if args.estimator == "oracle":
        if not args.ann:
            raise CLIError("--estimator oracle needs --ann with head sizes")
        return OracleEstimator()
    return PerspectiveEstimator.from_model(io.load_perspective(args.bank))


def cmd_count(args):
    cfg = io.load_fis_config(args.config)
    bank = io.load_bank(args.bank)
    estimator = _estimator(args)
    image = io.load_pgm(args.image)
    points = None
    if args.ann:
        by_id = io.group_annotations(io.load_annotations(args.ann))
        points = _points_for(by_id, _image_id(args.image), image)
    result = count_image(image, bank, cfg, estimator, points)
    io.save_density_csv(result.density, args.out_density)
    if args.render:
        io.render_density_pgm(result.density, args.render)
    print(f"count={_fmt(result.count)}")


def cmd_eval(args):
    cfg = io.load_fis_config(args.config)
    bank = io.load_bank(args.bank)
    estimator = _estimator(args)
    by_id = io.group_annotations(io.load_annotations(args.ann))
    rows, preds, truths = [], [], []
    for path in _image_paths(args.images):
        image = io.load_pgm(path)
        points = _points_for(by_id, _image_id(path), image, required=False)
        result = count_image(image, bank, cfg, estimator, points)
        preds.append(result.count)
        truths.append(len(points))
        rows.append((_image_id(path), len(points), result.count))
    print(f"mae={_fmt(mae(preds, truths))}")
    print("image_id\ttrue\tpred\tabs_err")
    for image_id, true, pred in rows:
        print(f"{image_id}\t{true}\t{pred:.6f}\t{abs(pred - true):.6f}")


def cmd_gen_synth(args):
    params = SynthSceneParams(
        width=args.width, height=args.height, n_people=args.n, size_at_top=args.size_top,
        size_at_bottom=args.size_bottom, blob_contrast=args.contrast, seed=args.seed,
    )
    image, points = gen_synthetic_scene(params)
    io.save_pgm(image, args.out_image)
    image_id = _image_id(args.out_image)
    io.save_annotations([io.AnnotationRecord(image_id, p.x, p.y, p.head_size) for p in points], args.out_ann)
    print(f"wrote {len(points)} heads -> {args.out_image}, {args.out_ann}")


def cmd_fis(args):
    cfg = io.load_fis_config(args.config)
    degrees = fuzzify(args.size, args.pos, cfg)
    act = infer(degrees, cfg)
    print(f"level={classify_hp_level(act).value}")
    for level in LEVEL_ORDER:
        print(f"{level.value}={act[level]:.6f}")
    for name, deg in {**degrees.size, **degrees.position}.items():
        print(f"  {name}={deg:.6f}")
    print(f"centroid={defuzzify_centroid(act, cfg):.6f}")


def build_parser():
    parser = argparse.ArgumentParser(prog="accnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gt-density", help="ground-truth density map from point annotations")
    p.add_argument("--image", required=True)
    p.add_argument("--ann", required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gt_density)

    p = sub.add_parser("train", help="train the three-level model bank")
    p.add_argument("--images", required=True)
    p.add_argument("--ann", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out-bank", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, help="learning rate (default 1e-4)")
    p.add_argument("--weight-decay", type=float, help="L2 weight decay (default 1e-3)")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--hp-config", help="file with 'Level = patch,sigma,stride' lines")
    p.set_defaults(func=cmd_train)

    for name, func, help_ in (("count", cmd_count, "count one image"), ("eval", cmd_eval, "MAE over a directory")):
        p = sub.add_parser(name, help=help_)
        if name == "count":
            p.add_argument("--image", required=True)
            p.add_argument("--ann")
            p.add_argument("--out-density", required=True)
            p.add_argument("--render")
        else:
            p.add_argument("--images", required=True)
            p.add_argument("--ann", required=True)
        p.add_argument("--bank", required=True)
        p.add_argument("--config", required=True)
        p.add_argument("--estimator", choices=("oracle", "perspective"), default="oracle")
        p.set_defaults(func=func)

    p = sub.add_parser("gen-synth", help="generate a synthetic perspective scene")
    p.add_argument("--out-image", required=True)
    p.add_argument("--out-ann", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--size-top", type=float, default=4.0)
    p.add_argument("--size-bottom", type=float, default=16.0)
    p.add_argument("--width", type=int, default=200)
    p.add_argument("--height", type=int, default=200)
    p.add_argument("--contrast", type=int, default=200)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("fis", help="show the fuzzy classification for one input pair")
    p.add_argument("--size", type=float, required=True)
    p.add_argument("--pos", type=float, required=True)
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_fis)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CLIError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
