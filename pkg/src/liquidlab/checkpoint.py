"""Checkpoint container: a single binary file holding the wiring, all
parameters, the training configuration and the metric history.

Layout (all integers little-endian):

    magic    4 bytes  b"LLCP"
    version  uint32   currently 1
    json_len uint64   length of the UTF-8 JSON config block
    json     the config block (model kind, wiring, specs, history, ...)
    n_arrays uint32
    per array:
        name_len uint16, name UTF-8
        ndim     uint8,  dims uint64 each
        data     float64 raw bytes, C order

The JSON block is canonical (sorted keys, fixed separators), so saving the
same bundle twice produces byte-identical files and load(save(x)) round-
trips exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .convhead import ConvHeadParams, ConvHeadSpec, ConvLayerSpec
from .errors import (CheckpointFormatError, CheckpointTruncatedError,
                     CheckpointVersionError)
from .params import ModelParams
from .solver import SolverConfig
from .trainer import TrainConfig, TrainHistory
from .wiring import WiringGraph

MAGIC = b"LLCP"
VERSION = 1

_PARAM_FIELDS = ("g_leak", "e_leak", "capacitance", "syn_g", "syn_a",
                 "syn_b", "syn_e", "syn_h")


@dataclass
class CheckpointBundle:
    model_kind: str
    wiring: WiringGraph
    rnn_params: ModelParams
    conv_spec: ConvHeadSpec
    conv_params: ConvHeadParams
    train_config: TrainConfig
    selected_epoch: int = 0
    history: TrainHistory = field(default_factory=TrainHistory)
    extra: dict = field(default_factory=dict)


def _wiring_to_json(w: WiringGraph):
    return {"kind": w.kind, "n_sensory": w.n_sensory, "n_inter": w.n_inter,
            "n_command": w.n_command, "n_motor": w.n_motor,
            "edges": [[k, int(s), int(d)] for k, s, d in w.edges]}


def _wiring_from_json(d) -> WiringGraph:
    return WiringGraph(kind=d["kind"], n_sensory=d["n_sensory"],
                       n_inter=d["n_inter"], n_command=d["n_command"],
                       n_motor=d["n_motor"],
                       edges=[(k, int(s), int(t)) for k, s, t in d["edges"]])


def _spec_to_json(spec: ConvHeadSpec):
    return {"input_height": spec.input_height, "input_width": spec.input_width,
            "input_channels": spec.input_channels,
            "n_features": spec.n_features,
            "layers": [{"out_channels": l.out_channels, "kernel": l.kernel,
                        "stride": l.stride, "activation": l.activation}
                       for l in spec.layers]}


def _spec_from_json(d) -> ConvHeadSpec:
    return ConvHeadSpec(
        input_height=d["input_height"], input_width=d["input_width"],
        input_channels=d["input_channels"], n_features=d["n_features"],
        layers=tuple(ConvLayerSpec(out_channels=l["out_channels"],
                                   kernel=l["kernel"], stride=l["stride"],
                                   activation=l["activation"])
                     for l in d["layers"]))


def _train_to_json(c: TrainConfig):
    return {"sequence_length": c.sequence_length, "batch_size": c.batch_size,
            "epochs": c.epochs, "lr0": c.lr0, "weight_decay": c.weight_decay,
            "seed": c.seed, "window_stride": c.window_stride,
            "val_fraction": c.val_fraction, "augment": c.augment,
            "selection": c.selection, "label_scale": c.label_scale,
            "conv_dtype": c.conv_dtype, "loss_warmup": c.loss_warmup,
            "solver": {"method": c.solver.method, "dt": c.solver.dt,
                       "unfold_steps": c.solver.unfold_steps}}


def _train_from_json(d) -> TrainConfig:
    s = d["solver"]
    return TrainConfig(
        sequence_length=d["sequence_length"], batch_size=d["batch_size"],
        epochs=d["epochs"], lr0=d["lr0"], weight_decay=d["weight_decay"],
        seed=d["seed"], window_stride=d["window_stride"],
        val_fraction=d["val_fraction"], augment=d["augment"],
        selection=d["selection"], label_scale=d.get("label_scale", 1.0),
        conv_dtype=d.get("conv_dtype", "float32"),
        loss_warmup=d.get("loss_warmup", 0),
        solver=SolverConfig(method=s["method"], dt=s["dt"],
                            unfold_steps=s["unfold_steps"]))


def save_checkpoint(bundle: CheckpointBundle, path):
    config = {
        "model_kind": bundle.model_kind,
        "wiring": _wiring_to_json(bundle.wiring),
        "conv_spec": _spec_to_json(bundle.conv_spec),
        "train_config": _train_to_json(bundle.train_config),
        "selected_epoch": bundle.selected_epoch,
        "history": {"train_loss": bundle.history.train_loss,
                    "val_loss": bundle.history.val_loss,
                    "lr": bundle.history.lr},
        "extra": bundle.extra,
    }
    blob = json.dumps(config, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")
    arrays = {f"rnn.{f}": getattr(bundle.rnn_params, f)
              for f in _PARAM_FIELDS}
    arrays.update({f"conv.{k}": v
                   for k, v in bundle.conv_params.as_dict().items()})
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name], dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(arr.tobytes())


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointTruncatedError(f"file ended while reading {what}")
    return data


def load_checkpoint(path) -> CheckpointBundle:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointFormatError(
                f"bad magic {magic!r}; not a checkpoint file")
        version, = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise CheckpointVersionError(
                f"checkpoint version {version} not supported "
                f"(this build reads {VERSION})")
        json_len, = struct.unpack("<Q", _read_exact(fh, 8, "header"))
        try:
            config = json.loads(_read_exact(fh, json_len, "config block"))
        except json.JSONDecodeError as exc:
            raise CheckpointFormatError(f"bad config block: {exc}") from exc
        n_arrays, = struct.unpack("<I", _read_exact(fh, 4, "array count"))
        arrays = {}
        for _ in range(n_arrays):
            name_len, = struct.unpack("<H", _read_exact(fh, 2, "array name"))
            name = _read_exact(fh, name_len, "array name").decode("utf-8")
            ndim, = struct.unpack("<B", _read_exact(fh, 1, "array rank"))
            shape = tuple(
                struct.unpack("<Q", _read_exact(fh, 8, "array shape"))[0]
                for _ in range(ndim))
            count = int(np.prod(shape)) if shape else 1
            data = _read_exact(fh, count * 8, f"array {name}")
            arrays[name] = np.frombuffer(data, dtype="<f8").reshape(shape).copy()

    kind = config["model_kind"]
    rnn = ModelParams(kind=kind, **{f: arrays[f"rnn.{f}"]
                                    for f in _PARAM_FIELDS})
    spec = _spec_from_json(config["conv_spec"])
    conv = ConvHeadParams(spec=spec)
    n_layers = len(spec.layers)
    conv.kernels = [arrays[f"conv.conv{i}_w"] for i in range(n_layers)]
    conv.biases = [arrays[f"conv.conv{i}_b"] for i in range(n_layers)]
    conv.dense_w = arrays["conv.dense_w"]
    conv.dense_b = arrays["conv.dense_b"]
    hist = config["history"]
    return CheckpointBundle(
        model_kind=kind, wiring=_wiring_from_json(config["wiring"]),
        rnn_params=rnn, conv_spec=spec, conv_params=conv,
        train_config=_train_from_json(config["train_config"]),
        selected_epoch=config["selected_epoch"],
        history=TrainHistory.from_lists(hist["train_loss"], hist["val_loss"],
                                        hist["lr"]),
        extra=config.get("extra", {}))
