"""Episode generation and closed-loop evaluation.

Two kinds of record:

* :class:`EpisodeData` -- an open-loop training episode (frames + expert
  labels) produced by :func:`generate_dataset`.
* :class:`Episode` -- a closed-loop run log: predictions, poses, neuron
  activities and the crash outcome.

Closed-loop runs drive either a neural policy (an object with
``initial_state(n)`` and ``step_batch(frames, x)``) or the world-state
:class:`~liquidlab.simworld.expert.ExpertDriver` (an object with
``command(track, state)``).  Episodes are independent, so the batch runner
steps many of them in lockstep with per-episode noise streams; noise with
the same seed is drawn identically across variance levels (scaled, not
redrawn), which keeps failure sets nested as noise grows.

Per step ``t`` the logged pose is the state *after* applying prediction
``t``, so a crash is always visible in the logged offset series.  A crash
is |lateral offset| > half width; a non-finite network state also ends the
episode (crashed, reason "divergence").
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, StructuralError
from .expert import ExpertDriver, expert_label
from .imaging import add_gaussian_noise
from .render import IMAGE_HEIGHT, IMAGE_WIDTH, render_frame
from .track import DEFAULT_HALF_WIDTH, Track, generate_track
from .vehicle import VehicleConfig, curvature_to_steering, place_on_track, \
    vehicle_step

START_S = 5.0        # m of track kept behind the start point
TRACK_MARGIN = 25.0  # m of track kept beyond the last reachable point
FRAMES_MAGIC_LEN = 16  # header: width, height, channels, count (4 x uint32)


@dataclass
class EpisodeData:
    """Training episode: camera frames plus the expert's driven commands."""

    frames: np.ndarray            # (T, H, W, 3) uint8
    labels: np.ndarray            # (T,) float, curvature driven by the expert
    lateral_offsets: np.ndarray   # (T,)
    heading_errors: np.ndarray    # (T,)
    meta: dict = field(default_factory=dict)


@dataclass
class Episode:
    """Closed-loop run log; all per-step arrays share one length."""

    predicted: np.ndarray        # (T,) commanded curvature
    expert: np.ndarray           # (T,) pure-pursuit reference at each state
    x: np.ndarray                # (T,) pose after each step
    y: np.ndarray
    heading: np.ndarray
    s: np.ndarray
    d: np.ndarray                # signed lateral offset
    road_curvature: np.ndarray   # centerline curvature at each pose
    activities: np.ndarray       # (n_neurons, T) or None for the expert
    frames: np.ndarray           # (T, H, W, 3) uint8 or None
    crashed: bool
    crash_step: int              # first step whose pose left the road; -1 if none
    reason: str                  # "" | "off-road" | "divergence"
    meta: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return len(self.predicted)


def generate_dataset(n_episodes, themes, seed, recovery_fraction, *,
                     episode_frames=400, vehicle: VehicleConfig = None,
                     half_width=DEFAULT_HALF_WIDTH, lookahead=6.0,
                     track_kwargs=None):
    """Expert-driven episodes for imitation learning.

    Themes alternate episode by episode (an even split when both are
    requested).  The first ``round(recovery_fraction * n)`` episodes start
    off-orientation: |offset| up to 0.8 * half width and heading error up to
    20 degrees, so the expert demonstrates recovering to the lane center.
    """
    if n_episodes < 1:
        raise ConfigError("need at least one episode")
    if not 0.0 <= recovery_fraction <= 1.0:
        raise ConfigError("recovery_fraction must be in [0, 1]")
    themes = list(themes)
    if not themes:
        raise ConfigError("need at least one theme")
    vehicle = vehicle or VehicleConfig()
    vehicle.validate()
    driver = ExpertDriver(lookahead=lookahead)
    n_recovery = int(round(recovery_fraction * n_episodes))
    length = (START_S + episode_frames * vehicle.speed * vehicle.frame_dt
              + lookahead + TRACK_MARGIN)
    episodes = []
    root = np.random.SeedSequence(seed)
    for i, child in enumerate(root.spawn(n_episodes)):
        rng = np.random.default_rng(child)
        track_seed = rng.integers(2 ** 63)
        track = generate_track(track_seed, length, themes[i % len(themes)],
                               half_width=half_width, **(track_kwargs or {}))
        if i < n_recovery:
            d0 = rng.uniform(-0.8, 0.8) * half_width
            head_err = rng.uniform(-np.deg2rad(20.0), np.deg2rad(20.0))
        else:
            d0, head_err = 0.0, 0.0
        start = place_on_track(track, START_S, d0, head_err)
        run = run_closed_loop(driver, track, noise_variance=0.0,
                              max_steps=episode_frames, noise_seed=0,
                              start=start, vehicle=vehicle,
                              record_frames=True)
        heading_err = _wrap(run.heading - track.heading_at(run.s))
        episodes.append(EpisodeData(
            frames=run.frames, labels=run.predicted,
            lateral_offsets=run.d, heading_errors=heading_err,
            meta={"theme": track.theme, "track_seed": int(track_seed),
                  "recovery": bool(i < n_recovery), "start_offset": float(d0),
                  "start_heading_error": float(head_err)}))
    return episodes


def _wrap(a):
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


def run_closed_loop(policy, track, noise_variance=0.0, max_steps=1200, *,
                    noise_seed=0, start=None, vehicle: VehicleConfig = None,
                    record_frames=False) -> Episode:
    """Single closed-loop episode (a batch of one; see the batch runner)."""
    return run_closed_loop_batch(
        policy, [track], noise_variance, max_steps, [noise_seed],
        starts=None if start is None else [start], vehicle=vehicle,
        record_frames=record_frames)[0]


def run_closed_loop_batch(policy, tracks, noise_variance=0.0, max_steps=1200,
                          noise_seeds=None, *, starts=None,
                          vehicle: VehicleConfig = None,
                          record_frames=False):
    """Run many independent episodes in lockstep; returns list of Episodes."""
    n = len(tracks)
    if n == 0:
        return []
    vehicle = vehicle or VehicleConfig()
    vehicle.validate()
    if noise_seeds is None:
        noise_seeds = list(range(n))
    if len(noise_seeds) != n:
        raise ConfigError("need one noise seed per episode")
    is_expert = hasattr(policy, "command")
    need_frames = record_frames or not is_expert

    horizon = START_S + max_steps * vehicle.speed * vehicle.frame_dt
    for track in tracks:
        if track.length < horizon + 10.0:
            raise ConfigError(
                f"track of length {track.length:.0f} m too short for "
                f"{max_steps} steps from s={START_S}")

    states = list(starts) if starts is not None else \
        [place_on_track(t, START_S) for t in tracks]
    rngs = [np.random.default_rng(s) for s in noise_seeds]
    if not is_expert:
        x = policy.initial_state(n)
    logs = [_EpisodeLog(record_frames=need_frames) for _ in range(n)]
    active = np.ones(n, dtype=bool)

    for _ in range(max_steps):
        idx = np.where(active)[0]
        if len(idx) == 0:
            break
        if need_frames:
            frames = np.stack([render_frame(tracks[i], states[i])
                               for i in idx])
            if noise_variance > 0:
                frames = np.stack([
                    add_gaussian_noise(frames[j], noise_variance, rngs[i])
                    for j, i in enumerate(idx)])
        if is_expert:
            preds = np.array([policy.command(tracks[i], states[i])
                              for i in idx])
            acts = None
            finite = np.isfinite(preds)
        else:
            preds, x_new = policy.step_batch(frames, x[idx])
            finite = (np.isfinite(x_new).all(axis=1)
                      & np.isfinite(np.asarray(preds)))
            x[idx[finite]] = x_new[finite]
            acts = x_new

        for j, i in enumerate(idx):
            log = logs[i]
            if not finite[j]:
                log.close(crashed=True, reason="divergence")
                active[i] = False
                continue
            ref = expert_label(tracks[i], states[i])
            steering = curvature_to_steering(float(preds[j]), vehicle)
            new_state = vehicle_step(states[i], steering, vehicle, tracks[i])
            states[i] = new_state
            log.append(
                pred=float(preds[j]), expert=ref, state=new_state,
                curv=float(tracks[i].curvature_at(new_state.s)),
                act=None if acts is None else acts[j],
                frame=frames[j] if need_frames else None)
            if abs(new_state.d) > tracks[i].half_width:
                log.close(crashed=True, reason="off-road")
                active[i] = False

    out = []
    for i, log in enumerate(logs):
        out.append(log.build(meta={"noise_variance": float(noise_variance),
                                   "noise_seed": repr(noise_seeds[i]),
                                   "theme": tracks[i].theme},
                             keep_frames=record_frames))
    return out


class _EpisodeLog:
    def __init__(self, record_frames):
        self.record_frames = record_frames
        self.pred, self.expert, self.curv = [], [], []
        self.xs, self.ys, self.hs, self.ss, self.ds = [], [], [], [], []
        self.acts, self.frames = [], []
        self.crashed = False
        self.reason = ""

    def append(self, pred, expert, state, curv, act, frame):
        self.pred.append(pred)
        self.expert.append(expert)
        self.curv.append(curv)
        self.xs.append(state.x)
        self.ys.append(state.y)
        self.hs.append(state.heading)
        self.ss.append(state.s)
        self.ds.append(state.d)
        if act is not None:
            self.acts.append(np.array(act))
        if self.record_frames and frame is not None:
            self.frames.append(np.round(frame * 255.0).astype(np.uint8))

    def close(self, crashed, reason):
        self.crashed = crashed
        self.reason = reason

    def build(self, meta, keep_frames) -> Episode:
        activities = (np.stack(self.acts, axis=1) if self.acts
                      else None)
        frames = (np.stack(self.frames) if keep_frames and self.frames
                  else None)
        d = np.array(self.ds)
        crash_step = -1
        if self.crashed and self.reason == "off-road":
            crash_step = int(len(d) - 1)
        elif self.crashed:
            crash_step = int(len(d))  # divergence: no pose was logged for it
        return Episode(predicted=np.array(self.pred),
                       expert=np.array(self.expert),
                       x=np.array(self.xs), y=np.array(self.ys),
                       heading=np.array(self.hs), s=np.array(self.ss), d=d,
                       road_curvature=np.array(self.curv),
                       activities=activities, frames=frames,
                       crashed=self.crashed, crash_step=crash_step,
                       reason=self.reason, meta=meta)


# ---------------------------------------------------------------------------
# On-disk formats
# ---------------------------------------------------------------------------

def write_frames_blob(path, frames):
    """Binary frame blob: uint32 LE width, height, channels, count header,
    then count * height * width * channels 8-bit pixels, frame-major."""
    frames = np.ascontiguousarray(frames, dtype=np.uint8)
    count, h, w, c = frames.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<IIII", w, h, c, count))
        fh.write(frames.tobytes())


def read_frames_blob(path):
    with open(path, "rb") as fh:
        header = fh.read(FRAMES_MAGIC_LEN)
        if len(header) != FRAMES_MAGIC_LEN:
            raise StructuralError(f"{path}: truncated frame-blob header")
        w, h, c, count = struct.unpack("<IIII", header)
        data = np.frombuffer(fh.read(count * h * w * c), dtype=np.uint8)
    if data.size != count * h * w * c:
        raise StructuralError(f"{path}: truncated frame payload")
    return data.reshape(count, h, w, c).copy()


def save_dataset(path, episodes, manifest):
    """One directory per episode: frames.bin + labels.csv, plus a manifest."""
    os.makedirs(path, exist_ok=True)
    for i, ep in enumerate(episodes):
        ep_dir = os.path.join(path, f"ep{i:04d}")
        os.makedirs(ep_dir, exist_ok=True)
        write_frames_blob(os.path.join(ep_dir, "frames.bin"), ep.frames)
        lines = ["t,curvature,lateral_offset,heading_error"]
        for t in range(len(ep.labels)):
            lines.append(f"{t},{float(ep.labels[t])!r},"
                         f"{float(ep.lateral_offsets[t])!r},"
                         f"{float(ep.heading_errors[t])!r}")
        with open(os.path.join(ep_dir, "labels.csv"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
    full = dict(manifest)
    full["n_episodes"] = len(episodes)
    full["image_size"] = [IMAGE_HEIGHT, IMAGE_WIDTH, 3]
    full["episodes"] = [dict(ep.meta, frames=int(len(ep.labels)))
                        for ep in episodes]
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(full, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_dataset(path):
    """Read a dataset directory back; returns (episodes, manifest)."""
    manifest_path = os.path.join(path, "manifest.json")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    episodes = []
    i = 0
    while True:
        ep_dir = os.path.join(path, f"ep{i:04d}")
        if not os.path.isdir(ep_dir):
            break
        frames = read_frames_blob(os.path.join(ep_dir, "frames.bin"))
        rows = np.genfromtxt(os.path.join(ep_dir, "labels.csv"),
                             delimiter=",", skip_header=1, dtype=np.float64)
        rows = np.atleast_2d(rows)
        meta = (manifest.get("episodes") or [{}] * (i + 1))[i]
        episodes.append(EpisodeData(
            frames=frames, labels=rows[:, 1].copy(),
            lateral_offsets=rows[:, 2].copy(),
            heading_errors=rows[:, 3].copy(), meta=dict(meta)))
        i += 1
    if not episodes:
        raise StructuralError(f"no episode directories under {path}")
    return episodes, manifest


def write_episode_log(path, episode: Episode):
    """Per-step CSV + crash summary (and a frames blob when recorded)."""
    os.makedirs(path, exist_ok=True)
    header = "t,predicted,expert,x,y,heading,s,lateral_offset,road_curvature"
    lines = [header]
    for t in range(episode.steps):
        row = [episode.predicted[t], episode.expert[t], episode.x[t],
               episode.y[t], episode.heading[t], episode.s[t], episode.d[t],
               episode.road_curvature[t]]
        lines.append(str(t) + "," + ",".join(repr(float(v)) for v in row))
    with open(os.path.join(path, "episode.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    summary = {"crashed": episode.crashed, "crash_step": episode.crash_step,
               "reason": episode.reason, "steps": episode.steps,
               **{k: v for k, v in episode.meta.items()}}
    with open(os.path.join(path, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    if episode.frames is not None:
        write_frames_blob(os.path.join(path, "frames.bin"), episode.frames)
