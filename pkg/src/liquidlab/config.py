"""Experiment configuration: one JSON file drives data generation, training
and evaluation.  All randomness flows from the seeds recorded here; loading
materializes every default so the canonical form (and its hash) always
carries explicit seeds.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .convhead import ConvHeadSpec
from .errors import ConfigError
from .simworld.vehicle import VehicleConfig
from .solver import SolverConfig
from .trainer import TrainConfig
from .wiring import (MODEL_KINDS, WiringConfig, WiringGraph,
                     build_fully_connected, build_ncp)


@dataclass(frozen=True)
class DataConfig:
    n_episodes: int = 40
    themes: tuple = ("summer", "winter")
    seed: int = 101
    recovery_fraction: float = 0.25
    episode_frames: int = 400

    def validate(self):
        if self.n_episodes < 1:
            raise ConfigError("data.n_episodes must be >= 1")
        if not self.themes:
            raise ConfigError("data.themes must not be empty")
        if not 0.0 <= self.recovery_fraction <= 1.0:
            raise ConfigError("data.recovery_fraction must be in [0, 1]")
        if self.episode_frames < 2:
            raise ConfigError("data.episode_frames must be >= 2")


@dataclass(frozen=True)
class EvalConfig:
    episodes: int = 25
    noise_variances: tuple = (0.0, 0.1, 0.2)
    seed: int = 202
    max_steps: int = 1200
    save_frames: bool = False

    def validate(self):
        if self.episodes < 1:
            raise ConfigError("eval.episodes must be >= 1")
        if any(v < 0 for v in self.noise_variances):
            raise ConfigError("noise variances must be >= 0")
        if self.max_steps < 2:
            raise ConfigError("eval.max_steps must be >= 2")


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    model_kind: str = "ltc"
    wiring_kind: str = "ncp"          # "ncp" | "fully"
    ncp: WiringConfig = field(default_factory=lambda: WiringConfig(
        n_sensory=32, n_inter=12, n_command=6, n_motor=1, sensory_fanout=11,
        inter_fanout=5, command_recurrence=26, motor_fanin=6, seed=7))
    fully_neurons: int = 64
    fully_sensory: int = 64
    conv: ConvHeadSpec = None         # derived from the wiring if omitted
    train: TrainConfig = field(default_factory=TrainConfig)
    vehicle: VehicleConfig = field(default_factory=VehicleConfig)
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self):
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.model_kind!r}")
        if self.wiring_kind not in ("ncp", "fully"):
            raise ConfigError(f"unknown wiring kind {self.wiring_kind!r}")
        if self.wiring_kind == "ncp":
            self.ncp.validate()
        elif self.fully_neurons < 1 or self.fully_sensory < 0:
            raise ConfigError("bad fully-connected sizes")
        self.train.validate()
        self.vehicle.validate()
        self.data.validate()
        self.eval.validate()

    def build_wiring(self) -> WiringGraph:
        if self.wiring_kind == "ncp":
            return build_ncp(self.ncp)
        return build_fully_connected(self.fully_neurons, self.fully_sensory)

    def conv_spec(self) -> ConvHeadSpec:
        if self.conv is not None:
            return self.conv
        n = (self.ncp.n_sensory if self.wiring_kind == "ncp"
             else self.fully_sensory)
        return ConvHeadSpec(n_features=n)

    # -- JSON ----------------------------------------------------------

    def to_json_dict(self) -> dict:
        spec = self.conv_spec()
        return {
            "name": self.name,
            "model_kind": self.model_kind,
            "wiring_kind": self.wiring_kind,
            "ncp": asdict(self.ncp),
            "fully_neurons": self.fully_neurons,
            "fully_sensory": self.fully_sensory,
            "conv": {
                "input_height": spec.input_height,
                "input_width": spec.input_width,
                "input_channels": spec.input_channels,
                "n_features": spec.n_features,
                "layers": [asdict(l) for l in spec.layers],
            },
            "train": {
                "sequence_length": self.train.sequence_length,
                "batch_size": self.train.batch_size,
                "epochs": self.train.epochs,
                "lr0": self.train.lr0,
                "weight_decay": self.train.weight_decay,
                "seed": self.train.seed,
                "window_stride": self.train.window_stride,
                "val_fraction": self.train.val_fraction,
                "augment": self.train.augment,
                "selection": self.train.selection,
                "label_scale": self.train.label_scale,
                "conv_dtype": self.train.conv_dtype,
                "loss_warmup": self.train.loss_warmup,
                "solver": asdict(self.train.solver),
            },
            "vehicle": asdict(self.vehicle),
            "data": {**asdict(self.data), "themes": list(self.data.themes)},
            "eval": {**asdict(self.eval),
                     "noise_variances": list(self.eval.noise_variances)},
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True,
                          separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def seeds(self) -> dict:
        return {"wiring": self.ncp.seed if self.wiring_kind == "ncp" else None,
                "train": self.train.seed, "data": self.data.seed,
                "eval": self.eval.seed}

    @classmethod
    def from_json_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            cfg = cls()
            cfg.name = d.get("name", cfg.name)
            cfg.model_kind = d.get("model_kind", cfg.model_kind)
            cfg.wiring_kind = d.get("wiring_kind", cfg.wiring_kind)
            if "ncp" in d:
                cfg.ncp = WiringConfig(**d["ncp"])
            cfg.fully_neurons = d.get("fully_neurons", cfg.fully_neurons)
            cfg.fully_sensory = d.get("fully_sensory", cfg.fully_sensory)
            if "conv" in d:
                from .convhead import ConvLayerSpec
                c = d["conv"]
                cfg.conv = ConvHeadSpec(
                    input_height=c.get("input_height", 32),
                    input_width=c.get("input_width", 48),
                    input_channels=c.get("input_channels", 3),
                    n_features=c["n_features"],
                    layers=tuple(ConvLayerSpec(**l) for l in c["layers"])
                    if "layers" in c else ConvHeadSpec().layers)
            if "train" in d:
                t = dict(d["train"])
                solver = t.pop("solver", None)
                if solver is not None:
                    t["solver"] = SolverConfig(**solver)
                cfg.train = TrainConfig(**t)
            if "vehicle" in d:
                cfg.vehicle = VehicleConfig(**d["vehicle"])
            if "data" in d:
                dd = dict(d["data"])
                dd["themes"] = tuple(dd.get("themes", ("summer", "winter")))
                cfg.data = DataConfig(**dd)
            if "eval" in d:
                ee = dict(d["eval"])
                ee["noise_variances"] = tuple(
                    ee.get("noise_variances", (0.0, 0.1, 0.2)))
                cfg.eval = EvalConfig(**ee)
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"malformed experiment config: {exc}") from exc
        cfg.validate()
        return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_json_dict(raw)


def save_config(config: ExperimentConfig, path):
    with open(path, "w") as fh:
        json.dump(config.to_json_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
