"""Imitation-learning trainer: BPTT through the unrolled solver and the
conv head, AdamW with decoupled weight decay, cosine learning-rate decay.

Training operates on windows of ``sequence_length`` consecutive frames cut
from expert episodes.  The split into train/validation is by episode (never
by frame) to avoid temporal leakage.  One optimizer step:

    frames -> augment -> standardize -> conv head -> tanh -> recurrent
    unroll -> motor potential -> MSE against expert curvature

with the gradient clipped at global norm 10 and bounded parameters clamped
back into their invariant ranges after the update.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import GradientTape, Tensor
from .convhead import ConvHeadParams, ConvHeadSpec, conv_forward, init_conv_head
from .errors import ConfigError, DivergenceError, StructuralError
from .params import TRAINABLE_FIELDS, ModelParams, clamp, init_params
from .simworld.imaging import augment_with_factors, draw_augment_factors
from .solver import SolverConfig, sequence_states
from .wiring import WiringGraph, compile_edges

GRAD_CLIP_NORM = 10.0
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

SELECTION_MODES = ("min-val", "paper-literal", "last")


@dataclass(frozen=True)
class TrainConfig:
    sequence_length: int = 32
    batch_size: int = 32
    epochs: int = 100
    lr0: float = 1e-3
    weight_decay: float = 1e-6
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    window_stride: int = 16
    val_fraction: float = 0.1
    augment: bool = True
    selection: str = "min-val"
    # Curvature targets are tiny (|y| <~ 0.1 1/m); training regresses the
    # motor potential onto label_scale * y so the read-out uses the
    # neuron's natural O(1) range, and the policy divides the potential by
    # the same factor when converting to physical curvature.
    label_scale: float = 10.0
    # The conv head runs in float32 by default (memory-bound on small
    # CPUs); the recurrent dynamics always integrate in float64.
    conv_dtype: str = "float32"
    # Frames excluded from the loss at the start of each window, so the
    # zero-initialized state can warm up before being scored.
    loss_warmup: int = 8

    def validate(self):
        if min(self.sequence_length, self.batch_size, self.window_stride) < 1:
            raise ConfigError("sequence_length, batch_size and window_stride "
                              "must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.selection not in SELECTION_MODES:
            raise ConfigError(f"selection must be one of {SELECTION_MODES}")
        if self.label_scale <= 0:
            raise ConfigError("label_scale must be positive")
        if self.conv_dtype not in ("float32", "float64"):
            raise ConfigError("conv_dtype must be float32 or float64")
        if not 0 <= self.loss_warmup < self.sequence_length:
            raise ConfigError("loss_warmup must be in [0, sequence_length)")
        self.solver.validate()


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)

    def __len__(self):
        return len(self.train_loss)

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss,lr"]
        for i, (tr, va, lr) in enumerate(zip(self.train_loss, self.val_loss,
                                             self.lr)):
            lines.append(f"{i},{tr!r},{va!r},{lr!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_lists(cls, train_loss, val_loss, lr):
        return cls(train_loss=list(train_loss), val_loss=list(val_loss),
                   lr=list(lr))


def cosine_lr(epoch: int, total_epochs: int, lr0: float) -> float:
    """lr0 * 0.5 * (1 + cos(pi * epoch / total))."""
    if not 0 <= epoch < total_epochs:
        raise ConfigError(f"epoch {epoch} outside [0, {total_epochs})")
    return float(lr0 * 0.5 * (1.0 + np.cos(np.pi * epoch / total_epochs)))


def forward_loss(predictions, labels) -> float:
    """Mean over batch and time of squared prediction error."""
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if predictions.shape != labels.shape or predictions.size == 0:
        raise StructuralError(
            f"predictions {predictions.shape} vs labels {labels.shape}")
    loss = float(np.mean((predictions - labels) ** 2))
    if not np.isfinite(loss):
        raise DivergenceError("loss is not finite")
    return loss


@dataclass
class AdamWState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int):
        return cls(m=np.zeros(n), v=np.zeros(n))


def adamw_step(params, grads, lr, weight_decay, state: AdamWState):
    """One AdamW update; weight decay applied separately from the moments."""
    if state.m.shape != params.shape:
        raise StructuralError("moment state does not match parameter vector")
    state.t += 1
    state.m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * grads
    state.v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * grads * grads
    m_hat = state.m / (1.0 - ADAM_BETA1 ** state.t)
    v_hat = state.v / (1.0 - ADAM_BETA2 ** state.t)
    return (params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
            - lr * weight_decay * params)


def clip_global_norm(grads, max_norm=GRAD_CLIP_NORM):
    norm = float(np.sqrt(np.sum(grads * grads)))
    if norm > max_norm:
        return grads * (max_norm / norm), norm
    return grads, norm


def select_epoch(history: TrainHistory, mode: str = "min-val") -> int:
    """Pick the checkpoint epoch from the validation curve."""
    if len(history) == 0:
        raise ConfigError("empty history")
    val = np.asarray(history.val_loss)
    if mode == "min-val":
        return int(np.argmin(val))
    if mode == "paper-literal":
        return int(np.argmax(val))
    if mode == "last":
        return len(history) - 1
    raise ConfigError(f"unknown selection mode {mode!r}")


@dataclass
class _FlatSpec:
    """Stable packing of the rnn + conv parameter dicts into one vector."""

    rnn_fields: tuple
    conv_keys: tuple
    sizes: dict

    @classmethod
    def build(cls, kind, rnn: ModelParams, conv: ConvHeadParams):
        conv_d = conv.as_dict()
        rnn_fields = TRAINABLE_FIELDS[kind]
        conv_keys = tuple(conv_d.keys())
        sizes = {**{f: getattr(rnn, f).shape for f in rnn_fields},
                 **{k: conv_d[k].shape for k in conv_keys}}
        return cls(rnn_fields=rnn_fields, conv_keys=conv_keys, sizes=sizes)

    def pack(self, rnn_d, conv_d):
        parts = [np.ravel(rnn_d[f]) for f in self.rnn_fields]
        parts += [np.ravel(conv_d[k]) for k in self.conv_keys]
        return np.concatenate(parts)

    def unpack(self, flat):
        rnn_d, conv_d, off = {}, {}, 0
        for f in self.rnn_fields:
            n = int(np.prod(self.sizes[f]))
            rnn_d[f] = flat[off:off + n].reshape(self.sizes[f]).copy()
            off += n
        for k in self.conv_keys:
            n = int(np.prod(self.sizes[k]))
            conv_d[k] = flat[off:off + n].reshape(self.sizes[k]).copy()
            off += n
        return rnn_d, conv_d


def predict_windows(kind, rnn_params, conv_spec, conv_params, edges, solver,
                    frames01, motor):
    """Predicted curvature (B, L) for float frame windows (B, L, H, W, C).

    When the parameter dicts hold Tensors and a tape is active, the result
    is a Tensor wired for backprop; with plain arrays it is a plain array.
    """
    b, length = frames01.shape[:2]
    from .convhead import standardize  # local import keeps module header light
    std = standardize(frames01.reshape((-1,) + frames01.shape[2:]))
    feats, _ = conv_forward(conv_spec, conv_params, std)
    feats = ad.reshape(feats, (b, length, conv_spec.n_features))
    u = ad.tanh(feats)
    states = sequence_states(kind, rnn_params, edges, u, solver)
    return ad.index_last(states, motor)


def train(dataset, wiring: WiringGraph, model_kind: str, config: TrainConfig,
          conv_spec: ConvHeadSpec = None):
    """Full imitation-learning run; returns (CheckpointBundle, TrainHistory).

    ``dataset`` is a sequence of episodes with ``frames`` (T, H, W, 3) uint8
    and ``labels`` (T,) float arrays, as produced by
    :func:`liquidlab.simworld.episodes.generate_dataset`.
    """
    from .checkpoint import CheckpointBundle  # deferred: avoids import cycle

    config.validate()
    conv_spec = conv_spec or ConvHeadSpec(n_features=wiring.n_sensory)
    if conv_spec.n_features != wiring.n_sensory:
        raise ConfigError(
            f"conv head emits {conv_spec.n_features} features but the wiring "
            f"has {wiring.n_sensory} sensory units")
    edges = compile_edges(wiring)
    motor = wiring.motor_indices[0]

    # Separate streams: the conv head draw is identical across model kinds
    # for the same seed, whatever the recurrent model consumes.
    ss = np.random.SeedSequence(config.seed)
    conv_seed, rnn_seed, split_seed = ss.spawn(3)
    conv = init_conv_head(conv_spec, np.random.default_rng(conv_seed))
    rnn = init_params(model_kind, edges, np.random.default_rng(rnn_seed))

    train_windows, val_windows = _split_windows(dataset, config, split_seed)
    if not train_windows:
        raise ConfigError("dataset has no full-length training window")

    flat_spec = _FlatSpec.build(model_kind, rnn, conv)
    theta = flat_spec.pack({f: getattr(rnn, f) for f in flat_spec.rnn_fields},
                           conv.as_dict())
    opt = AdamWState.zeros(theta.size)

    history = TrainHistory()
    best = {"min": (np.inf, None), "max": (-np.inf, None)}

    def snapshot():
        return rnn.copy(), conv.replace_from(conv.as_dict())

    for epoch in range(config.epochs):
        lr = cosine_lr(epoch, config.epochs, config.lr0)
        order = np.random.default_rng(
            (config.seed, 91, epoch)).permutation(len(train_windows))
        total, weighted = 0, 0.0
        for start in range(0, len(order), config.batch_size):
            batch_ids = order[start:start + config.batch_size]
            frames01, labels = _gather_batch(dataset, train_windows, batch_ids,
                                             config, epoch)
            rnn_t = {f: Tensor(getattr(rnn, f)) for f in
                     ("g_leak", "e_leak", "capacitance", "syn_g", "syn_a",
                      "syn_b", "syn_e", "syn_h")}
            conv_t = {k: Tensor(v) for k, v in conv.as_dict().items()}
            try:
                with GradientTape() as tape:
                    preds = predict_windows(model_kind, rnn_t, conv_spec,
                                            conv_t, edges, config.solver,
                                            frames01, motor)
                    err = ad.slice_last(preds, config.loss_warmup) \
                        - labels[:, config.loss_warmup:]
                    loss = ad.mean_all(err * err)
                loss_val = loss.item()
                if not np.isfinite(loss_val):
                    raise DivergenceError("training loss is not finite",
                                          epoch=epoch)
            except DivergenceError as exc:
                err = DivergenceError(f"diverged in epoch {epoch}: {exc}",
                                      epoch=epoch)
                err.history = history  # partial, for the caller to retain
                raise err from exc
            sources = ([rnn_t[f] for f in flat_spec.rnn_fields]
                       + [conv_t[k] for k in flat_spec.conv_keys])
            grads = tape.gradient(loss, sources)
            flat_g = np.concatenate([np.ravel(g) for g in grads])
            flat_g, _ = clip_global_norm(flat_g)
            theta = adamw_step(theta, flat_g, lr, config.weight_decay, opt)
            rnn_d, conv_d = flat_spec.unpack(theta)
            for f in flat_spec.rnn_fields:
                setattr(rnn, f, rnn_d[f])
            clamp(rnn)
            theta = flat_spec.pack({f: getattr(rnn, f)
                                    for f in flat_spec.rnn_fields}, conv_d)
            conv = conv.replace_from(conv_d)
            total += len(batch_ids)
            weighted += loss_val * len(batch_ids)

        train_loss = weighted / total
        val_loss = _evaluate(dataset, val_windows, model_kind, rnn, conv_spec,
                             conv, edges, config, motor)
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.lr.append(lr)
        if val_loss < best["min"][0]:
            best["min"] = (val_loss, snapshot())
        if val_loss > best["max"][0]:
            best["max"] = (val_loss, snapshot())

    if config.epochs == 0:
        selected, sel_rnn, sel_conv = 0, rnn, conv
    else:
        selected = select_epoch(history, config.selection)
        if config.selection == "min-val":
            sel_rnn, sel_conv = best["min"][1]
        elif config.selection == "paper-literal":
            sel_rnn, sel_conv = best["max"][1]
        else:
            sel_rnn, sel_conv = rnn, conv

    bundle = CheckpointBundle(model_kind=model_kind, wiring=wiring,
                              rnn_params=sel_rnn, conv_spec=conv_spec,
                              conv_params=sel_conv, train_config=config,
                              selected_epoch=selected, history=history)
    return bundle, history


def dataset_split(dataset, config: TrainConfig):
    """The (train, validation) window split a training run would use."""
    split_seed = np.random.SeedSequence(config.seed).spawn(3)[2]
    return _split_windows(dataset, config, split_seed)


def _split_windows(dataset, config: TrainConfig, split_seed):
    """Window index lists, split 90/10 by episode."""
    n_ep = len(dataset)
    if n_ep == 0:
        raise ConfigError("empty dataset")
    rng = np.random.default_rng(split_seed)
    perm = rng.permutation(n_ep)
    n_val = int(round(config.val_fraction * n_ep))
    n_val = min(max(n_val, 1 if n_ep > 1 else 0), n_ep - 1)
    val_eps = set(int(i) for i in perm[:n_val])
    train_w, val_w = [], []
    for e, episode in enumerate(dataset):
        n_frames = len(episode.labels)
        starts = range(0, n_frames - config.sequence_length + 1,
                       config.window_stride)
        target = val_w if e in val_eps else train_w
        target.extend((e, s) for s in starts)
    return train_w, val_w


def _gather_batch(dataset, windows, batch_ids, config: TrainConfig, epoch):
    length = config.sequence_length
    dtype = np.dtype(config.conv_dtype)
    frames, labels = [], []
    for wid in batch_ids:
        e, s = windows[int(wid)]
        episode = dataset[e]
        clip = episode.frames[s:s + length].astype(dtype) / dtype.type(255)
        if config.augment:
            rng = np.random.default_rng((config.seed, 17, epoch, int(wid)))
            factors = draw_augment_factors(rng)
            clip = augment_with_factors(clip, *factors)
        frames.append(clip)
        labels.append(episode.labels[s:s + length] * config.label_scale)
    return np.stack(frames), np.stack(labels)


def _evaluate(dataset, windows, kind, rnn, conv_spec, conv, edges, config,
              motor):
    """Mean validation MSE without augmentation (plain forward pass)."""
    if not windows:
        return float("nan")
    length = config.sequence_length
    total, weighted = 0, 0.0
    dtype = np.dtype(config.conv_dtype)
    for start in range(0, len(windows), config.batch_size):
        chunk = windows[start:start + config.batch_size]
        frames = np.stack([dataset[e].frames[s:s + length] for e, s in chunk]
                          ).astype(dtype) / dtype.type(255)
        labels = np.stack([dataset[e].labels[s:s + length] for e, s in chunk]
                          ) * config.label_scale
        preds = predict_windows(kind, rnn, conv_spec, conv.as_dict(), edges,
                                config.solver, frames, motor)
        weighted += forward_loss(preds[:, config.loss_warmup:],
                                 labels[:, config.loss_warmup:]) * len(chunk)
        total += len(chunk)
    return weighted / total
