"""Command-line interface.

Subcommands: gen-data, train, eval, saliency, activity.  Every command is
reproducible byte-for-byte given the same config and seeds.  Exit codes:
0 success, 2 configuration error, 3 divergence during training or
evaluation, 4 I/O error, 5 checkpoint format/version error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, load_config, save_config
from .errors import (CheckpointError, ConfigError, DivergenceError,
                     StructuralError, UnsupportedSolverError)
from . import harness
from .policy import Policy
from .simworld.episodes import load_dataset, read_frames_blob, save_dataset
from .wiring import format_adjacency

EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4
EXIT_CHECKPOINT = 5


def _load_experiment(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError("this command needs --config")
    return load_config(args.config)


def cmd_gen_data(args):
    config = _load_experiment(args)
    if args.seed is not None:
        config.data = replace(config.data, seed=args.seed)
    episodes = harness.generate_experiment_dataset(config)
    manifest = {"config_hash": config.config_hash(),
                "seeds": {k: v for k, v in config.seeds().items()},
                "themes": list(config.data.themes),
                "recovery_fraction": config.data.recovery_fraction}
    save_dataset(args.out, episodes, manifest)
    print(f"wrote {len(episodes)} episodes to {args.out}")
    return 0


def cmd_train(args):
    config = _load_experiment(args)
    if args.seed is not None:
        config.train = replace(config.train, seed=args.seed)
    dataset, _ = load_dataset(args.data)
    try:
        bundle, history = harness.train_experiment(config, dataset)
    except DivergenceError as exc:
        partial = getattr(exc, "history", None)
        if partial is not None:
            history_path = os.path.splitext(args.out)[0] + ".history.csv"
            with open(history_path, "w") as fh:
                fh.write(partial.to_csv())
            print(f"partial history: {history_path}", file=sys.stderr)
        raise
    save_checkpoint(bundle, args.out)
    history_path = os.path.splitext(args.out)[0] + ".history.csv"
    with open(history_path, "w") as fh:
        fh.write(history.to_csv())
    wiring_path = os.path.splitext(args.out)[0] + ".wiring.txt"
    with open(wiring_path, "w") as fh:
        fh.write(format_adjacency(bundle.wiring))
    print(f"checkpoint: {args.out}")
    print(f"history: {history_path}")
    if history.val_loss:
        print(f"selected epoch {bundle.selected_epoch} "
              f"(val loss {history.val_loss[bundle.selected_epoch]!r})")
    return 0


def cmd_eval(args):
    config = _load_experiment(args)
    if args.seed is not None:
        config.eval = replace(config.eval, seed=args.seed)
    if args.episodes is not None:
        config.eval = replace(config.eval, episodes=args.episodes)
    if args.noise is not None:
        variances = tuple(float(v) for v in args.noise.split(","))
        config.eval = replace(config.eval, noise_variances=variances)
    if args.save_frames:
        config.eval = replace(config.eval, save_frames=True)
    bundle = load_checkpoint(args.checkpoint)
    policy = Policy.from_checkpoint(bundle)
    os.makedirs(args.out, exist_ok=True)
    if args.mode == "openloop":
        if args.data is None:
            raise ConfigError("openloop evaluation needs --data")
        dataset, _ = load_dataset(args.data)
        reports = harness.eval_open_loop(policy, config, dataset)
    else:
        log_dir = os.path.join(args.out, "episodes")
        reports, _ = harness.eval_closed_loop(policy, config,
                                              log_dir=log_dir)
    report_path = os.path.join(args.out, "report.csv")
    harness.write_report_csv(report_path, reports, config)
    print(f"report: {report_path}")
    return 0


def cmd_saliency(args):
    config = _load_experiment(args)
    bundle = load_checkpoint(args.checkpoint)
    policy = Policy.from_checkpoint(bundle)
    frames = read_frames_blob(args.frames).astype(np.float64) / 255.0
    if args.max_frames is not None:
        frames = frames[:args.max_frames]
    variances = (tuple(float(v) for v in args.noise.split(","))
                 if args.noise else config.eval.noise_variances)
    os.makedirs(args.out, exist_ok=True)
    seed = args.seed if args.seed is not None else config.eval.seed
    results = harness.saliency_battery(policy, frames, variances, seed,
                                       out_dir=args.out)
    lines = [f"# config_hash={config.config_hash()}",
             f"# seeds={config.seeds()!r}",
             "frame," + ",".join(f"ssim_noise_{v:g}" for v in variances)]
    for i in range(len(frames)):
        row = [str(i)] + [repr(float(results[float(v)][i]))
                          for v in variances]
        lines.append(",".join(row))
    stats = ["mean"] + [repr(float(np.mean(results[float(v)])))
                        for v in variances]
    stds = ["std"] + [repr(float(np.std(results[float(v)])))
                      for v in variances]
    lines.append(",".join(stats))
    lines.append(",".join(stds))
    csv_path = os.path.join(args.out, "ssim.csv")
    with open(csv_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"saliency SSIM: {csv_path}")
    return 0


def cmd_activity(args):
    config = _load_experiment(args)
    bundle = load_checkpoint(args.checkpoint)
    policy = Policy.from_checkpoint(bundle)
    theme = args.theme or config.data.themes[0]
    track_seed = args.track_seed if args.track_seed is not None \
        else config.eval.seed
    episode, table, summary = harness.activity_run(policy, track_seed, theme,
                                                   config)
    with open(args.out, "w") as fh:
        fh.write(f"# config_hash={config.config_hash()}\n")
        fh.write(f"# seeds={config.seeds()!r}\n")
        fh.write(table)
    summary_path = os.path.splitext(args.out)[0] + ".summary.csv"
    with open(summary_path, "w") as fh:
        fh.write("model,wiring,theme,track_seed,mean_abs_correlation\n")
        fh.write(f"{policy.model_kind},{harness.wiring_label(config)},"
                 f"{theme},{track_seed},{summary!r}\n")
    print(f"activity: {args.out} (mean |corr| = {summary:.3f}, "
          f"crashed={episode.crashed})")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="liquidlab",
        description="Electrical vs chemical synapse CT-RNNs on a synthetic "
                    "lane-keeping world")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate an expert dataset")
    g.add_argument("--config", required=True)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model on a dataset")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--config", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--mode", choices=("openloop", "closedloop"),
                   default="closedloop")
    e.add_argument("--noise", default=None,
                   help="comma-separated variances, e.g. 0,0.1,0.2")
    e.add_argument("--episodes", type=int, default=None)
    e.add_argument("--data", default=None, help="dataset dir (openloop)")
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--save-frames", action="store_true")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("saliency", help="saliency maps and their SSIM "
                                        "under noise")
    s.add_argument("--config", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--frames", required=True, help="frames.bin blob")
    s.add_argument("--noise", default=None)
    s.add_argument("--max-frames", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_saliency)

    a = sub.add_parser("activity", help="per-neuron activity along a drive")
    a.add_argument("--config", required=True)
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--track-seed", type=int, default=None)
    a.add_argument("--theme", default=None)
    a.add_argument("--seed", type=int, default=None, help="alias of "
                                                          "--track-seed")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_activity)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "activity" and args.track_seed is None \
            and args.seed is not None:
        args.track_seed = args.seed
    try:
        return args.func(args)
    except (ConfigError, UnsupportedSolverError, StructuralError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
