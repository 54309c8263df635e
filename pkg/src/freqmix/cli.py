"""Command-line entry point: ``freqmix {synth,augment,train,eval,analyze}``.

Every command writes ``resolved_config.txt`` next to its outputs.  Exit codes:
0 on success, 2 for usage errors, 1 for runtime failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .config import ConfigError, default_domains, parse_value, resolve
from .data import DatasetError, generate_synthetic, load_dataset, save_png
from .discrepancy import CONDITIONS, hypothesis_check
from .fmaug import build_training_samples
from .frequency_views import ParameterError, extract_view_bank, sample_view_params
from .metrics import score
from .trainer import TrainConfig, fit, load_checkpoint, new_network, predict_batch

log = logging.getLogger("freqmix")


class UsageError(Exception):
    pass


def _overrides(args, mapping: dict) -> dict:
    out = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = parse_value(value)
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = value
    return out


def _run_config(args, mapping: dict, extra: dict | None = None):
    overrides = _overrides(args, mapping)
    overrides.update(extra or {})
    return resolve(args.preset, args.config, overrides)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    if args.count is not None and args.count < 1:
        raise UsageError("--count must be >= 1")
    if args.domains is not None and args.domains < 1:
        raise UsageError("--domains must be >= 1")
    extra = {}
    if args.domains is not None:
        extra["synth.domains"] = default_domains(args.domains)
    if args.fresh_geometry:
        extra["synth.shared_geometry"] = False
    rc = _run_config(args, {"count": "synth.count", "seed": "train.seed", "size": "train.image_size",
                            "val_fraction": "synth.val_fraction"}, extra)
    out = _out_dir(args)
    manifest = generate_synthetic(rc.synth, out)
    rc.write(out / "resolved_config.txt")
    print(manifest)
    return 0


def _affine_map(arrays):
    lo = float(min(a.min() for a in arrays))
    hi = float(max(a.max() for a in arrays))
    return lo, hi if hi > lo else lo + 1.0


def cmd_augment(args) -> int:
    if args.views is not None and args.views < 2:
        raise UsageError("--views must be >= 2")
    rc = _run_config(args, {"views": "train.n_views", "seed": "train.seed", "size": "train.image_size"})
    cfg = rc.train
    ds = load_dataset(args.manifest, cfg.image_size, split=args.split, channels=rc.model.in_channels)
    if len(ds) == 0:
        raise UsageError(f"split {args.split!r} is empty")
    out = _out_dir(args)
    rng = np.random.default_rng(cfg.seed)
    rows = ["file\timage_id\tkind\ti\tj\tk\tradius\tsigma\tlo\thi"]
    for n_img, (image_id, image, mask) in enumerate(zip(ds.ids, ds.images, ds.masks)):
        params = sample_view_params(rng, cfg.n_views, cfg.radius_range, cfg.sigma_range)
        views = extract_view_bank(image, cfg.anchor, params)
        samples = build_training_samples(image, mask, cfg.anchor, rng, cfg.n_views, perturbed=params,
                                         patch_count_range=cfg.patch_count_range,
                                         patch_frac_range=cfg.patch_frac_range)
        arrays = [v.pixels for v in views] + [s.mixed for s in samples]
        lo, hi = _affine_map(arrays)
        entries = [(f"{image_id}_view{v.view_index}.png", "anchor" if v.view_index == 0 else "view",
                    v.view_index, "-", "-", v.params.radius, v.params.sigma, v.pixels) for v in views]
        entries += [(f"{image_id}_mix_k{s.k}.png", "mixed", s.pair[0], s.pair[1], s.k, "-", "-", s.mixed)
                    for s in samples]
        for name, kind, i, j, k, r, sg, arr in entries:
            # value = lo + (png / 255) * (hi - lo)
            save_png(out / name, (arr - lo) / (hi - lo))
            rows.append(f"{name}\t{image_id}\t{kind}\t{i}\t{j}\t{k}\t{r}\t{sg}\t{lo!r}\t{hi!r}")
        if n_img == 0:
            plotting.view_grid([image] + arrays, ["source"] + [e[0].rsplit("_", 1)[-1][:-4] for e in entries],
                               out / "augment_preview.png")
    (out / "augment_manifest.tsv").write_text("\n".join(rows) + "\n")
    rc.write(out / "resolved_config.txt")
    print(out / "augment_manifest.tsv")
    return 0


def cmd_train(args) -> int:
    out = _out_dir(args)
    if args.resume:
        ckpt = load_checkpoint(args.resume)
        cfg = TrainConfig(**ckpt.train_config)
        rc = resolve(None, None, {f"train.{k}": v for k, v in ckpt.train_config.items()
                                  if k not in ("alpha", "bce_epsilon")}
                     | {"loss.alpha": cfg.alpha, "loss.bce_epsilon": cfg.bce_epsilon}
                     | {f"model.{k}": v for k, v in ckpt.model_config.items()
                        if k not in ("image_size", "attention_enabled")})
    else:
        ckpt = None
        extra = {}
        if args.epochs is not None:
            if args.epochs < 2:
                raise UsageError("--epochs must be >= 2")
            warm = int(round(args.epochs * 0.4))
            extra.update({"train.total_epochs": args.epochs, "train.warm_epochs": warm,
                          "train.decay_epochs": args.epochs - warm})
        for flag, key in (("no_fmaug", "train.use_fmaug"), ("no_ssl", "train.use_ssl"),
                          ("no_att", "train.use_att")):
            if getattr(args, flag):
                extra[key] = False
        rc = _run_config(args, {"seed": "train.seed", "views": "train.n_views",
                                "batch_size": "train.batch_size", "alpha": "loss.alpha",
                                "size": "train.image_size"}, extra)
        cfg = rc.train

    channels = rc.model.in_channels
    train_set = load_dataset(args.manifest, cfg.image_size, split="train", channels=channels)
    val_set = load_dataset(args.manifest, cfg.image_size, split="val", channels=channels)
    if len(train_set) == 0:
        raise UsageError("manifest has no 'train' records")
    rc.write(out / "resolved_config.txt")
    net = new_network(rc.model, cfg)
    result = fit(net, train_set, val_set, cfg, out_dir=out, resume=ckpt, stop_epoch=args.stop_after)
    plotting.training_curves(result.history, out / "training_curves.png")
    print(json.dumps({"best_epoch": result.best.epoch, "best_val_dice": result.best.val_dice,
                      "checkpoint": str(out / "best.pt")}))
    return 0


def cmd_eval(args) -> int:
    if not Path(args.checkpoint).exists():
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    ckpt = load_checkpoint(args.checkpoint)
    cfg = TrainConfig(**ckpt.train_config)
    net = ckpt.build()
    ds = load_dataset(args.manifest, net.config.image_size, split=args.split,
                      channels=net.config.in_channels)
    if len(ds) == 0:
        raise UsageError(f"split {args.split!r} is empty")
    out = _out_dir(args)
    preds = predict_batch(net, ds.images, cfg)
    scores = [score(p.prob, m) for p, m in zip(preds, ds.masks)]
    dice = [s[0] for s in scores]
    mcc = [s[1] for s in scores]
    rows = ["id\tdomain\tdice\tmcc"]
    rows += [f"{i}\t{d}\t{a!r}\t{b!r}" for i, d, a, b in zip(ds.ids, ds.domains, dice, mcc)]
    summary = {"split": args.split, "count": len(ds), "mean_dice": float(np.mean(dice)),
               "mean_mcc": float(np.mean(mcc)), "checkpoint": str(args.checkpoint)}
    rows.append(f"MEAN\t-\t{summary['mean_dice']!r}\t{summary['mean_mcc']!r}")
    (out / "eval_report.tsv").write_text("\n".join(rows) + "\n")
    (out / "eval_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    plotting.eval_scores(ds.ids, dice, mcc, out / "eval_scores.png")
    (out / "resolved_config.txt").write_text(
        "".join(f"train.{k} = {v!r}\n" for k, v in ckpt.train_config.items()))
    print(json.dumps(summary))
    return 0


def cmd_analyze(args) -> int:
    rc = _run_config(args, {"seed": "train.seed", "size": "train.image_size"})
    size = rc.train.image_size
    ds = load_dataset(args.manifest, size, channels=rc.model.in_channels)
    if len(set(ds.domains)) < 2:
        raise UsageError("analyze needs a manifest with at least two domains")
    lo, hi = rc.train.radius_range
    radius_range = (lo, min(hi, (size - 1) // 2))
    verdict = hypothesis_check(ds.images, ds.domains, rc.train.anchor,
                               np.random.default_rng(rc.train.seed), radius_range, rc.train.sigma_range)
    out = _out_dir(args)
    record = verdict.as_dict()
    record["radius_range"] = list(radius_range)
    (out / "verdict.json").write_text(json.dumps(record, indent=2) + "\n")

    rows = ["condition\tscope\tstatistic\tvalue"]
    for cond, rep in verdict.reports.items():
        rows += [f"{cond}\t{d}\tinner_dispersion\t{v!r}" for d, v in rep.inner.items()]
        rows += [f"{cond}\t{a}|{b}\tcentroid_distance\t{v!r}" for (a, b), v in rep.inter.items()]
    (out / "dispersion.tsv").write_text("\n".join(rows) + "\n")

    n = len(ds)
    rows = ["condition\tdomain\timage_id\tpc1\tpc2"]
    for c, cond in enumerate(CONDITIONS):
        for i in range(n):
            x, y = verdict.projection[c * n + i]
            rows.append(f"{cond}\t{ds.domains[i]}\t{ds.ids[i]}\t{x!r}\t{y!r}")
    (out / "projection.tsv").write_text("\n".join(rows) + "\n")
    plotting.projection(verdict.projection, ds.domains, CONDITIONS, out / "projection.png")
    rc.write(out / "resolved_config.txt")
    print(json.dumps({"h1": record["h1"], "h2": record["h2"]}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override (repeatable)")
    common.add_argument("--preset", choices=["desk", "paper"], default="desk")
    common.add_argument("--seed", type=int)
    common.add_argument("--size", type=int, help="image side length")

    parser = argparse.ArgumentParser(prog="freqmix", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset and manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--domains", type=int)
    p.add_argument("--count", type=int, help="images per domain")
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--fresh-geometry", action="store_true", help="new geometry for every domain")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", parents=[common], help="dump frequency views and mixed images")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--views", type=int)
    p.add_argument("--split", default="train")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", parents=[common], help="train the coupled network")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--views", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--no-fmaug", action="store_true")
    p.add_argument("--no-ssl", action="store_true")
    p.add_argument("--no-att", action="store_true")
    p.add_argument("--resume", help="continue from a last.pt checkpoint")
    p.add_argument("--stop-after", type=int, help="stop after this epoch (schedule unchanged)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="DICE / Mcc of a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", parents=[common], help="frequency hypothesis statistics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ParameterError) as exc:
        print(f"freqmix {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, OSError, RuntimeError, ValueError) as exc:
        print(f"freqmix {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
