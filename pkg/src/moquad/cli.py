"""Command-line entry point: ``moquad {gen,pretrain,evaluate,retrieve,diag,sweep}``.

Exit codes: 0 success, 1 internal error, 2 configuration error, 3 missing
input, 4 artifact mismatch.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import plotting
from .config import ABLATIONS, MINING_GRID, WARMUP_GRID, RunConfig
from .encoder import load_checkpoint, save_checkpoint
from .errors import ConfigError, FormatError
from .evaluation import evaluate, extract_features, retrieve
from .synthdata import generate_dataset, load_dataset, write_dataset
from .trainer import read_metrics, run_pretraining

log = logging.getLogger("moquad")

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_MISSING, EXIT_MISMATCH = 0, 1, 2, 3, 4


class MissingInput(Exception):
    pass


class ArtifactMismatch(Exception):
    pass


# -- config resolution -------------------------------------------------------


def resolve_config(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig.from_dict({})
    if args.seed is not None:
        cfg.override(None, "seed", args.seed)
    if args.out is not None:
        cfg.override(None, "out", args.out)
    if args.data_dir is not None:
        cfg.override(None, "data_dir", args.data_dir)
    if args.deterministic:
        cfg.override(None, "deterministic", True)
    if getattr(args, "epochs", None) is not None:
        cfg.override("schedule", "total_epochs", args.epochs)
    if getattr(args, "ablation", None) is not None:
        ad_pos, intra, ad_intra = ABLATIONS[args.ablation]
        cfg.override("quad", "enable_ad_pos", ad_pos)
        cfg.override("quad", "enable_intra_neg", intra)
        cfg.override("quad", "enable_ad_intra_neg", ad_intra)
    if getattr(args, "warmup_ratio", None) is not None:
        cfg.override("schedule", "warmup_ratio", args.warmup_ratio)
    if getattr(args, "beta", None) is not None:
        cfg.override("loss", "beta", args.beta)
        cfg.override("loss", "mining_enabled", True)
    if getattr(args, "alpha", None) is not None:
        cfg.override("loss", "alpha", args.alpha)
        cfg.override("loss", "mining_enabled", True)
    if getattr(args, "mining", None) is not None:
        cfg.override("loss", "mining_enabled", args.mining)
    if getattr(args, "appearance_disturb", None) is not None:
        cfg.override("rad", "donor_mode", args.appearance_disturb)
    if getattr(args, "motion_disturb", None) is not None:
        cfg.override("quad", "motion_kind", args.motion_disturb)
    cfg.validate()
    return cfg


def _echo(cfg, name):
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / f"config.{name}.json").write_text(cfg.to_json() + "\n")


def _load_split(cfg):
    if not (cfg.data_dir / "manifest.jsonl").exists():
        raise MissingInput(f"no dataset at {cfg.data_dir} (run 'moquad gen' first)")
    videos = load_dataset(cfg.data_dir)
    return ([v for v in videos if v.split == "train"], [v for v in videos if v.split == "test"])


def _checkpoint_path(cfg, args):
    return Path(args.checkpoint) if getattr(args, "checkpoint", None) else cfg.out / "checkpoint.bin"


def _load_matching_checkpoint(cfg, args):
    path = _checkpoint_path(cfg, args)
    if not path.exists():
        raise MissingInput(f"checkpoint {path} not found")
    try:
        params, enc = load_checkpoint(path)
    except FormatError as exc:
        raise ArtifactMismatch(str(exc)) from exc
    expected = cfg.encoder(seed=enc.seed)
    if enc != expected:
        raise ArtifactMismatch(f"checkpoint encoder {enc.to_dict()} does not match config "
                               f"{expected.to_dict()}")
    return params, enc


def _write_csv(path, rows, columns):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


# -- subcommands -------------------------------------------------------------


def cmd_gen(cfg, args):
    _echo(cfg, "gen")
    records = generate_dataset(cfg.dataset())
    manifest = write_dataset(records, cfg.data_dir)
    log.info("wrote %d videos to %s", len(records), manifest.parent)
    return manifest


def cmd_pretrain(cfg, args):
    train, test = _load_split(cfg)
    _echo(cfg, "pretrain")
    enc = cfg.encoder()
    params, metrics = run_pretraining(train, enc, cfg.schedule(), cfg.optim(), cfg.seed,
                                      test_videos=test, log_path=cfg.out / "metrics.jsonl",
                                      dump_dir=cfg.out)
    save_checkpoint(params, enc, cfg.out / "checkpoint.bin")
    plotting.plot_loss_curve(metrics, cfg.out / "loss.png")
    return metrics


def _eval_settings(cfg):
    e = cfg.raw["eval"]
    return e["num_clips"], e["dilation"], e["layer"]


def cmd_evaluate(cfg, args):
    train, test = _load_split(cfg)
    params, enc = _load_matching_checkpoint(cfg, args)
    _echo(cfg, "evaluate")
    num_clips, dilation, layer = _eval_settings(cfg)
    tied = cfg.raw["data"]["appearance_tied_motion_classes"]
    groups = {int(c): "appearance_separable" for c in tied}
    results, train_f, test_f = evaluate(params, enc, train, test, num_clips, dilation, layer,
                                        cfg.probe(), groups)
    (cfg.out / "results.json").write_text(json.dumps(results, indent=2, sort_keys=True) + "\n")
    with open(cfg.out / "features.jsonl", "w") as f:
        for feat in train_f + test_f:
            f.write(json.dumps({"video_id": feat.video_id, "motion_class": feat.motion_class,
                                "appearance_class": feat.appearance_class,
                                "vector": [float(v) for v in feat.vector]}) + "\n")
    rows = [{"motion_class": c, **row} for c, row in results["per_class"].items()]
    _write_csv(cfg.out / "per_class.csv", rows, ["motion_class", "group", "count", "accuracy"])
    plotting.plot_per_class(results["per_class"], cfg.out / "per_class.png")
    return results


def cmd_retrieve(cfg, args):
    train, test = _load_split(cfg)
    params, enc = _load_matching_checkpoint(cfg, args)
    _echo(cfg, "retrieve")
    num_clips, dilation, layer = _eval_settings(cfg)
    gallery = extract_features(params, train, enc, num_clips, dilation, layer)
    query = extract_features(params, test, enc, num_clips, dilation, layer)
    acc = retrieve(query, gallery).top_k_accuracy
    out = {"top1": acc[1], "top5": acc[5], "top10": acc[10]}
    (cfg.out / "retrieval.json").write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return out


def cmd_diag(cfg, args):
    path = Path(args.metrics) if getattr(args, "metrics", None) else cfg.out / "metrics.jsonl"
    if not path.exists():
        raise MissingInput(f"metrics log {path} not found")
    _echo(cfg, "diag")
    rows = [r for r in read_metrics(path) if r["stage"] == "moquad"]
    _write_csv(cfg.out / "rank_curve.csv", rows,
               ["epoch", "mean_rank_ad_pos", "mean_rank_intra_negs"])
    if rows:
        plotting.plot_rank_curves(rows, cfg.out / "rank_curve.png")
    return rows


SWEEPS = {
    "components": [(name, {"quad": dict(zip(("enable_ad_pos", "enable_intra_neg",
                                             "enable_ad_intra_neg"), flags))})
                   for name, flags in ABLATIONS.items()],
    "appearance": [(m, {"rad": {"donor_mode": m}}) for m in ("be_baseline", "intra", "inter")],
    "motion": [(m, {"quad": {"motion_kind": m}}) for m in ("reverse", "shuffle", "speed")],
    "mining": [(f"b{b}_a{a}", {"loss": {"beta": b, "alpha": a, "mining_enabled": b > 0}})
               for b, a in MINING_GRID],
    "warmup": [(f"p{p}", {"schedule": {"warmup_ratio": p}}) for p in WARMUP_GRID],
}


def run_arm(cfg, seed, train, test):
    """Pre-train and evaluate one configuration in memory; returns a summary row."""
    enc = cfg.encoder(seed=seed)
    params, metrics = run_pretraining(train, enc, cfg.schedule(), cfg.optim(), seed,
                                      test_videos=test)
    num_clips, dilation, layer = _eval_settings(cfg)
    results, _, _ = evaluate(params, enc, train, test, num_clips, dilation, layer, cfg.probe())
    last = metrics[-1]
    return {"seed": seed, "top1": results["top1"], "top5": results["top5"],
            "top10": results["top10"], "probe_test_acc": results["probe_test_acc"],
            "final_rank_ad_pos": last["mean_rank_ad_pos"],
            "final_rank_intra_negs": last["mean_rank_intra_negs"]}, metrics


def cmd_sweep(cfg, args):
    _echo(cfg, "sweep")
    if (cfg.data_dir / "manifest.jsonl").exists():
        train, test = _load_split(cfg)
    else:
        videos = generate_dataset(cfg.dataset())
        train = [v for v in videos if v.split == "train"]
        test = [v for v in videos if v.split == "test"]
    seeds = args.seeds or [cfg.seed]
    summary = []
    for arm, patch in SWEEPS[args.grid]:
        raw = json.loads(cfg.to_json())
        for section, values in patch.items():
            raw[section].update(values)
        arm_cfg = RunConfig.from_dict(raw)
        for seed in seeds:
            row, metrics = run_arm(arm_cfg, seed, train, test)
            row["arm"] = arm
            summary.append(row)
            log.info("%s seed %d: top1 %.3f", arm, seed, row["top1"])
            arm_dir = cfg.out / f"sweep_{args.grid}" / arm
            arm_dir.mkdir(parents=True, exist_ok=True)
            (arm_dir / f"metrics_seed{seed}.jsonl").write_text(
                "".join(json.dumps(r) + "\n" for r in metrics))
    out_dir = cfg.out / f"sweep_{args.grid}"
    out_dir.mkdir(parents=True, exist_ok=True)
    columns = ["arm", "seed", "top1", "top5", "top10", "probe_test_acc",
               "final_rank_ad_pos", "final_rank_intra_negs"]
    _write_csv(out_dir / "summary.csv", summary, columns)
    plotting.plot_sweep(summary, out_dir / "summary.png")
    return summary


COMMANDS = {
    "gen": cmd_gen,
    "pretrain": cmd_pretrain,
    "evaluate": cmd_evaluate,
    "retrieve": cmd_retrieve,
    "diag": cmd_diag,
    "sweep": cmd_sweep,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="moquad", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (JSON)")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--data-dir", dest="data_dir", help="dataset directory (default: OUT/data)")
    common.add_argument("--deterministic", action="store_true")
    common.add_argument("-v", "--verbose", action="store_true")

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--epochs", type=int)
    training.add_argument("--ablation", choices=sorted(ABLATIONS))
    training.add_argument("--warmup-ratio", dest="warmup_ratio", type=float, choices=WARMUP_GRID)
    training.add_argument("--beta", type=float, help="hard-negative fraction (enables mining)")
    training.add_argument("--alpha", type=float, help="hard-negative weight (enables mining)")
    training.add_argument("--mining", action=argparse.BooleanOptionalAction, default=None)
    training.add_argument("--appearance-disturb", dest="appearance_disturb",
                          choices=["inter", "intra", "be_baseline"])
    training.add_argument("--motion-disturb", dest="motion_disturb",
                          choices=["speed", "reverse", "shuffle"])

    ckpt = argparse.ArgumentParser(add_help=False)
    ckpt.add_argument("--checkpoint", help="checkpoint path (default: OUT/checkpoint.bin)")

    sub.add_parser("gen", parents=[common], help="generate the synthetic dataset")
    sub.add_parser("pretrain", parents=[common, training], help="two-stage pre-training")
    sub.add_parser("evaluate", parents=[common, ckpt], help="retrieval + linear probe")
    sub.add_parser("retrieve", parents=[common, ckpt], help="nearest-neighbour retrieval only")
    p = sub.add_parser("diag", parents=[common], help="export rank curves from a metrics log")
    p.add_argument("--metrics", help="metrics log (default: OUT/metrics.jsonl)")
    p = sub.add_parser("sweep", parents=[common, training], help="run an ablation grid")
    p.add_argument("--grid", choices=sorted(SWEEPS), default="components")
    p.add_argument("--seeds", type=int, nargs="+")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingInput as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ArtifactMismatch as exc:
        print(f"artifact mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
