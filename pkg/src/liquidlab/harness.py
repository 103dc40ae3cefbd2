"""Experiment orchestration shared by the CLI and the acceptance suite:
dataset generation, training, the closed/open-loop evaluation batteries,
saliency robustness and activity traces.
"""

from __future__ import annotations

import os

import numpy as np

from .checkpoint import CheckpointBundle
from .config import ExperimentConfig
from .convhead import saliency_map, write_pgm
from .errors import ConfigError
from .metrics import (MetricReport, Stat, activity_correlation,
                      crash_likelihood, lipschitz, mse, ssim,
                      trajectory_similarity, weighted_mse)
from .simworld.episodes import (START_S, generate_dataset,
                                run_closed_loop_batch, write_episode_log)
from .simworld.imaging import add_gaussian_noise
from .simworld.track import generate_track
from .trainer import predict_windows, train
from .wiring import count_parameters


def wiring_label(config: ExperimentConfig) -> str:
    if config.wiring_kind == "ncp":
        n = (config.ncp.n_inter + config.ncp.n_command + config.ncp.n_motor)
    else:
        n = config.fully_neurons
    return f"{config.wiring_kind}-{n}"


def generate_experiment_dataset(config: ExperimentConfig):
    d = config.data
    return generate_dataset(d.n_episodes, d.themes, d.seed,
                            d.recovery_fraction,
                            episode_frames=d.episode_frames,
                            vehicle=config.vehicle)


def train_experiment(config: ExperimentConfig, dataset, log=print):
    wiring = config.build_wiring()
    n_params = count_parameters(wiring, config.model_kind)
    if log:
        log(f"{config.model_kind} {wiring_label(config)}: "
            f"{wiring.n_neurons} neurons, {wiring.n_synapses} synapses, "
            f"{n_params} trainable recurrent parameters")
    bundle, history = train(dataset, wiring, config.model_kind, config.train,
                            conv_spec=config.conv_spec())
    bundle.extra = {"config_hash": config.config_hash(),
                    "seeds": config.seeds(), "name": config.name,
                    "wiring_label": wiring_label(config),
                    "recurrent_parameters": n_params}
    return bundle, history


def _eval_track_length(config: ExperimentConfig) -> float:
    v = config.vehicle
    return (START_S + config.eval.max_steps * v.speed * v.frame_dt + 40.0)


def eval_tracks(config: ExperimentConfig, theme: str):
    """Fresh (never trained on) tracks for one theme, seed-deterministic."""
    root = np.random.SeedSequence((config.eval.seed, hash_theme(theme)))
    length = _eval_track_length(config)
    return [generate_track(child, length, theme)
            for child in root.spawn(config.eval.episodes)]


def hash_theme(theme: str) -> int:
    return int.from_bytes(theme.encode("utf-8")[:6].ljust(6, b"_"), "big")


def eval_closed_loop(policy, config: ExperimentConfig, log_dir=None):
    """The closed-loop battery over themes x noise variances.

    Within a theme, every variance runs the very same tracks with the very
    same per-episode noise streams (scaled by the variance), and each run
    is paired with the noise-free run for trajectory similarity.  Returns
    (reports, episodes) with episodes keyed by (theme, variance).
    """
    reports, by_condition = [], {}
    variances = list(config.eval.noise_variances)
    for theme in config.data.themes:
        tracks = eval_tracks(config, theme)
        noise_seeds = [(config.eval.seed, hash_theme(theme), i)
                       for i in range(len(tracks))]
        clean = run_closed_loop_batch(
            policy, tracks, 0.0, config.eval.max_steps, noise_seeds,
            vehicle=config.vehicle, record_frames=config.eval.save_frames)
        runs = {0.0: clean}
        for var in variances:
            if var not in runs:
                runs[var] = run_closed_loop_batch(
                    policy, tracks, var, config.eval.max_steps, noise_seeds,
                    vehicle=config.vehicle,
                    record_frames=config.eval.save_frames)
        for var in variances:
            episodes = runs[var]
            by_condition[(theme, var)] = episodes
            reports.append(_closed_loop_report(
                policy, config, theme, var, episodes, runs[0.0]))
            if log_dir is not None:
                for i, ep in enumerate(episodes):
                    write_episode_log(
                        os.path.join(log_dir, theme, f"noise_{var:g}",
                                     f"ep{i:04d}"), ep)
    return reports, by_condition


def _closed_loop_report(policy, config, theme, variance, episodes, clean):
    lips = [lipschitz(ep.predicted, config.vehicle.frame_dt)
            for ep in episodes if ep.steps >= 2]
    corrs = [activity_correlation(ep.activities, ep.road_curvature)
             for ep in episodes
             if ep.activities is not None and ep.steps >= 3]
    sims = [trajectory_similarity(c, n) for c, n in zip(clean, episodes)
            if c.steps > 0 and n.steps > 0]
    return MetricReport(
        model=policy.model_kind, wiring=wiring_label(config), theme=theme,
        noise_variance=variance,
        crash_likelihood=crash_likelihood(episodes),
        lipschitz=Stat.of(lips) if lips else None,
        activity_correlation=Stat.of(corrs) if corrs else None,
        trajectory_similarity=Stat.of(sims) if sims else None)


def eval_open_loop(policy, config: ExperimentConfig, dataset):
    """Window MSE / weighted MSE on the held-out validation episodes."""
    from .trainer import dataset_split  # same split as training

    _, val_windows = dataset_split(dataset, config.train)
    if not val_windows:
        raise ConfigError("no validation windows; dataset too small")
    length = config.train.sequence_length
    mses, wmses = [], []
    bs = config.train.batch_size
    for start in range(0, len(val_windows), bs):
        chunk = val_windows[start:start + bs]
        frames = np.stack([dataset[e].frames[s:s + length]
                           for e, s in chunk]).astype(np.float64) / 255.0
        labels = np.stack([dataset[e].labels[s:s + length] for e, s in chunk])
        preds = predict_windows(
            policy.model_kind,
            {f: getattr(policy.rnn_params, f) for f in
             ("g_leak", "e_leak", "capacitance", "syn_g", "syn_a", "syn_b",
              "syn_e", "syn_h")},
            policy.conv_spec, policy.conv_params.as_dict(), policy.edges,
            policy.solver, frames, policy.motor) / policy.label_scale
        for row_p, row_l in zip(preds, labels):
            mses.append(mse(row_p, row_l))
            wmses.append(weighted_mse(row_p, row_l))
    themes = "+".join(config.data.themes)
    return [MetricReport(model=policy.model_kind,
                         wiring=wiring_label(config), theme=themes,
                         noise_variance=0.0, mse=Stat.of(mses),
                         weighted_mse=Stat.of(wmses))]


def saliency_battery(policy, frames01, variances, seed, out_dir=None):
    """Per-frame saliency SSIM between clean and noise-perturbed inputs.

    The noise field for frame i is drawn from seed (seed, i) and scaled by
    sqrt(variance), so larger variances see the same pattern, stronger.
    Returns {variance: ssim array}; optionally writes PGM maps.
    """
    conv = policy.conv_params.as_dict()
    spec = policy.conv_spec
    results = {float(v): np.empty(len(frames01)) for v in variances}
    for i, frame in enumerate(frames01):
        clean_map = saliency_map(spec, conv, frame)
        if out_dir is not None:
            write_pgm(os.path.join(out_dir, f"frame{i:04d}_clean.pgm"),
                      clean_map)
        for var in variances:
            if var == 0:
                noisy_map = clean_map
            else:
                noisy = add_gaussian_noise(frame, var,
                                           np.random.default_rng((seed, i)))
                noisy_map = saliency_map(spec, conv, noisy)
            results[float(var)][i] = ssim(clean_map, noisy_map)
            if out_dir is not None and var != 0:
                write_pgm(os.path.join(out_dir,
                                       f"frame{i:04d}_noise{var:g}.pgm"),
                          noisy_map)
    return results


def activity_run(policy, track_seed, theme, config: ExperimentConfig):
    """One clean closed-loop episode plus the per-neuron trace table."""
    length = _eval_track_length(config)
    track = generate_track(track_seed, length, theme)
    episode = run_closed_loop_batch(
        policy, [track], 0.0, config.eval.max_steps, [0],
        vehicle=config.vehicle)[0]
    n = episode.activities.shape[0]
    header = ["t", "s", "d", "curvature"] + [f"x_{i + 1}" for i in range(n)]
    lines = [",".join(header)]
    for t in range(episode.steps):
        row = [str(t), repr(float(episode.s[t])), repr(float(episode.d[t])),
               repr(float(episode.road_curvature[t]))]
        row += [repr(float(v)) for v in episode.activities[:, t]]
        lines.append(",".join(row))
    summary = activity_correlation(episode.activities, episode.road_curvature)
    return episode, "\n".join(lines) + "\n", summary


def write_report_csv(path, reports, config: ExperimentConfig):
    """Metric rows plus the audit trail (config hash and seed list)."""
    lines = [f"# config_hash={config.config_hash()}",
             f"# seeds={config.seeds()!r}",
             MetricReport.CSV_HEADER]
    lines += [r.to_csv_row() for r in reports]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
