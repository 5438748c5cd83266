"""``gazelab`` command line: synth, train, eval, dissect.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import dissect as D
from . import formats as F
from .data import BlobSpec, PALETTE, as_labeled, synth_dataset
from .errors import ConfigError, DomainError, NumericError, ParseError, ShapeError
from .losses import LossKind
from .metrics import center_gaussian, evaluate_map
from .model import NetworkConfig, build_network, encoder_features
from .train import TrainConfig, TrainingDiverged, evaluate, train

log = logging.getLogger("gazelab")

EXIT_USAGE = 2
EXIT_NUMERIC = 3

TRAIN_DEFAULTS = {
    "data": "",
    "out": "run",
    "loss": "ead",
    "reduction": "sum",
    "lr0": "5e-5",
    "lr_decay": "0.1",
    "epochs": "5",
    "batch_size": "8",
    "beta1": "0.9",
    "beta2": "0.999",
    "eps": "1e-8",
    "seed": "0",
    "input_h": "64",
    "input_w": "64",
    "encoder_blocks": "2x8,2x16",
    "pool_count": "2",
    "decoder_channels": "",
}

SYNTH_DEFAULTS = {
    "out": "dataset",
    "seed": "0",
    "count": "200",
    "height": "64",
    "width": "64",
    "min_shapes": "1",
    "max_shapes": "3",
    "min_radius": "4",
    "max_radius": "8",
    "sigma_scale": "1.0",
    "fixations": "20",
    "texture": "0.08",
    "background": "0.15",
}


def _number(values, key, kind):
    try:
        return kind(values[key])
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {values[key]!r} as {kind.__name__}") from None


def _load_config(path, defaults) -> dict[str, str]:
    values = dict(defaults)
    if path:
        values.update(F.read_config(path, allowed=defaults))
    return values


def _encoder_blocks(text: str) -> tuple[tuple[int, int], ...]:
    try:
        return tuple(tuple(int(x) for x in part.split("x")) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"encoder_blocks must look like '2x8,2x16', got {text!r}") from None


def network_config(values) -> NetworkConfig:
    plan = values["decoder_channels"].strip()
    return NetworkConfig(
        input_h=_number(values, "input_h", int),
        input_w=_number(values, "input_w", int),
        encoder_blocks=_encoder_blocks(values["encoder_blocks"]),
        pool_count=_number(values, "pool_count", int),
        decoder_channel_plan=tuple(int(c) for c in plan.split(",")) if plan else None,
        seed=_number(values, "seed", int),
    )


def train_config(values) -> TrainConfig:
    return TrainConfig(
        loss=LossKind(values["loss"], values["reduction"]),
        lr0=_number(values, "lr0", float),
        lr_decay=_number(values, "lr_decay", float),
        epochs=_number(values, "epochs", int),
        batch_size=_number(values, "batch_size", int),
        betas=(_number(values, "beta1", float), _number(values, "beta2", float)),
        eps=_number(values, "eps", float),
        seed=_number(values, "seed", int),
    )


def _write_effective_config(out: Path, values) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with F.atomic_output(out / "config.txt", "w") as fh:
        fh.write(F.format_config(values))


def _load_data(path, label="data"):
    if not path:
        raise ConfigError(f"no {label} directory given")
    try:
        return F.load_dataset(path)
    except FileNotFoundError as exc:
        raise ConfigError(f"{label} directory {path}: {exc}") from None


def cmd_synth(args) -> int:
    values = _load_config(args.config, SYNTH_DEFAULTS)
    if args.seed is not None:
        values["seed"] = str(args.seed)
    if args.out:
        values["out"] = args.out
    h, w = _number(values, "height", int), _number(values, "width", int)
    spec = BlobSpec(
        min_shapes=_number(values, "min_shapes", int),
        max_shapes=_number(values, "max_shapes", int),
        min_radius=_number(values, "min_radius", int),
        max_radius=_number(values, "max_radius", int),
        sigma_scale=_number(values, "sigma_scale", float),
        n_fixations=_number(values, "fixations", int),
        texture=_number(values, "texture", float),
        background=_number(values, "background", float),
    )
    samples = synth_dataset(_number(values, "seed", int), _number(values, "count", int), h, w, spec)
    out = Path(values["out"])
    F.save_dataset(out, samples, PALETTE)
    _write_effective_config(out, values)
    log.info("wrote %d samples to %s", len(samples), out)
    return 0


def cmd_train(args) -> int:
    values = _load_config(args.config, TRAIN_DEFAULTS)
    if args.seed is not None:
        values["seed"] = str(args.seed)
    if args.out:
        values["out"] = args.out
    net_cfg = network_config(values)
    cfg = train_config(values)
    data = _load_data(values["data"])
    out = Path(values["out"])
    _write_effective_config(out, values)
    net = build_network(net_cfg)

    history = []

    def checkpoint(entry, net, state):
        history.append(entry)
        F.save_checkpoint(out / f"checkpoint_epoch{entry.epoch:03d}.salc", net, entry.epoch, state, cfg.loss.name)

    header = ("epoch", "mean_loss", "val_nss", "val_cc", "val_auc", "val_sim")

    def write_log(rows):
        F.write_csv(out / "train_log.csv", header,
                    [(e.epoch, e.mean_loss, e.val_nss, e.val_cc, e.val_auc, e.val_sim) for e in rows])

    try:
        train(net, data, cfg, on_epoch=checkpoint)
    except TrainingDiverged as exc:
        write_log(exc.history)
        raise
    write_log(history)
    return 0


def cmd_eval(args) -> int:
    net, info = F.load_checkpoint(args.checkpoint)
    data = _load_data(args.data)
    h, w = net.config.input_h, net.config.input_w
    for s in data:
        if s.density.shape != (h, w):
            raise ShapeError(f"image {s.image_id} is {s.density.shape}, network expects {(h, w)}")
    rows = evaluate(net, data, info["loss"])
    keys = ("nss", "cc", "auc", "sim")
    table = [(s.image_id, *(r[k] for k in keys)) for s, r in zip(data, rows)]
    if rows:
        table.append(("mean", *(float(np.mean([r[k] for r in rows])) for k in keys)))
        for name, base in (("baseline_uniform", np.ones((h, w))), ("baseline_center", center_gaussian(h, w))):
            scores = [evaluate_map(base, s.density, s.fixations) for s in data]
            table.append((name, *(float(np.mean([r[k] for r in scores])) for k in keys)))
    F.write_csv(args.out or "eval.csv", ("image_id", *keys), table)
    return 0


def cmd_dissect(args) -> int:
    net, _ = F.load_checkpoint(args.checkpoint)
    gaze = _load_data(args.data)
    labeled = as_labeled(_load_data(args.labeled, "labeled") if args.labeled else gaze)
    if not gaze or not labeled:
        raise ConfigError("dissection needs non-empty datasets")
    out = Path(args.out or "dissection")
    _write_effective_config(out, {"checkpoint": args.checkpoint, "data": args.data,
                                  "labeled": args.labeled or args.data, "threshold": args.threshold})

    scores = D.unit_nss_scores(net, gaze)
    detectors = D.select_positive_detectors(scores, args.threshold)
    chosen = set(detectors)
    F.write_csv(out / "unit_scores.csv", ("unit", "top5_mean", "normalized", "is_detector"),
                [(s.unit_index, s.top5_mean, s.normalized_score, int(s.unit_index in chosen)) for s in scores])

    report = D.dissect_units(net, labeled, detectors)
    F.write_csv(out / "dissection.csv", ("unit", "T_k", "best_class", "iou"),
                [(u.unit, u.threshold, u.best_class or "", u.best_iou) for u in report.units])
    F.write_csv(out / "classes.csv", ("class", "f_d", "f_t", "f_n"),
                [(c.name, c.detected, c.total, c.normalized) for c in report.classes])

    by_id = {s.image_id: s for s in gaze}
    for u in detectors:
        ranked = sorted(scores[u].per_image_nss, key=lambda t: -t[1])[:D.TOP_K]
        for rank, (image_id, _) in enumerate(ranked, start=1):
            s = by_id[image_id]
            crop = D.pattern_crop(s.image, encoder_features(net, s.image)[..., u])
            F.write_pgm(out / "montages" / f"unit{u:04d}_rank{rank}_{image_id}.pgm", crop)
    log.info("%d of %d units are positive detectors", len(detectors), len(scores))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    parser = argparse.ArgumentParser(prog="gazelab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic gaze dataset")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train a network from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dissect", parents=[common], help="find positive fixation detectors and dissect them")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="gaze dataset (fixations)")
    p.add_argument("--labeled", help="labeled dataset with masks (defaults to --data)")
    p.add_argument("--threshold", type=float, default=D.DEFAULT_T)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dissect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParseError, ShapeError, DomainError, FileNotFoundError) as exc:
        print(f"gazelab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"gazelab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
