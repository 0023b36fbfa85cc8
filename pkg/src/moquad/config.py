"""Run configuration: one JSON document covering every stage of an experiment."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from .disturb import DONOR_MODES, MOTION_KINDS, RadConfig
from .encoder import EncoderConfig, OptimConfig
from .errors import ConfigError
from .evaluation import ProbeConfig
from .losses import LossConfig
from .quadruple import QuadConfig
from .synthdata import DatasetConfig
from .trainer import ScheduleConfig

DEFAULTS = {
    "data": {
        "num_train": 200, "num_test": 100, "T": 32, "H": 32, "W": 32, "C": 1,
        "num_motion_classes": 4, "num_appearance_classes": 4,
        "background_mode": "unique_per_video", "seed": 0, "sprite_size": 6,
        "sprite_start": "center", "appearance_tied_motion_classes": [],
    },
    "rad": {"k": 5, "lambda_range": [0.1, 0.5], "donor_mode": "inter"},
    "quad": {
        "clip_length": 8, "dilation_candidates": [1, 2, 4], "motion_kind": "speed",
        "enable_ad_pos": True, "enable_intra_neg": True, "enable_ad_intra_neg": True,
    },
    "loss": {"tau": 0.1, "alpha": 1.5, "beta": 0.01, "mining_enabled": False},
    "encoder": {
        "frame_size": 16, "hidden_dims": [256], "feature_dim": 128,
        "proj_dims": [128], "proj_out_dim": 64,
    },
    "optim": {"base_lr": 0.002, "momentum": 0.9, "weight_decay": 0.0},
    "schedule": {
        "total_epochs": 60, "warmup_ratio": 0.2, "batch_size": 16,
        "steps_per_epoch": None, "diag_split": "train",
    },
    "eval": {
        "num_clips": 10, "dilation": 2, "layer": "backbone",
        "probe_lr": 0.5, "probe_epochs": 500, "probe_l2": 1e-4,
    },
    "data_dir": None,
    "out": "runs/default",
    "seed": 0,
    "deterministic": True,
}

ABLATIONS = {
    "simclr": (False, False, False),
    "ad_pos": (True, False, False),
    "ad_pos_intra": (True, True, False),
    "full": (True, True, True),
}
WARMUP_GRID = (0.0, 0.1, 0.2, 0.4, 0.6)
MINING_GRID = ((0.0, 1.0), (0.01, 1.5), (0.01, 2.0), (0.01, 3.0), (0.05, 1.5))


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be an object")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


@dataclass
class RunConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def from_dict(cls, d):
        cfg = cls(_merge(DEFAULTS, d))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def override(self, section, key, value):
        if section is None:
            self.raw[key] = value
        else:
            self.raw[section][key] = value

    def to_json(self):
        return json.dumps(self.raw, indent=2, sort_keys=True)

    # -- typed views -------------------------------------------------------

    @property
    def out(self):
        return Path(self.raw["out"])

    @property
    def data_dir(self):
        d = self.raw["data_dir"]
        return Path(d) if d is not None else self.out / "data"

    @property
    def seed(self):
        return int(self.raw["seed"])

    def dataset(self):
        return DatasetConfig(**self.raw["data"])

    def rad(self):
        r = self.raw["rad"]
        return RadConfig(k=r["k"], lambda_range=tuple(r["lambda_range"]), donor_mode=r["donor_mode"])

    def quad(self):
        q = dict(self.raw["quad"])
        q["dilation_candidates"] = tuple(q["dilation_candidates"])
        return QuadConfig(rad=self.rad(), **q)

    def loss(self):
        return LossConfig(**self.raw["loss"])

    def encoder(self, seed=None):
        e = self.raw["encoder"]
        return EncoderConfig(clip_length=self.raw["quad"]["clip_length"],
                             frame_size=e["frame_size"], channels=self.raw["data"]["C"],
                             hidden_dims=tuple(e["hidden_dims"]), feature_dim=e["feature_dim"],
                             proj_dims=tuple(e["proj_dims"]), proj_out_dim=e["proj_out_dim"],
                             seed=self.seed if seed is None else seed)

    def optim(self):
        return OptimConfig(**self.raw["optim"])

    def schedule(self):
        s = self.raw["schedule"]
        return ScheduleConfig(loss=self.loss(), quad=self.quad(), **s)

    def probe(self):
        e = self.raw["eval"]
        return ProbeConfig(lr=e["probe_lr"], epochs=e["probe_epochs"], l2=e["probe_l2"],
                           seed=self.seed)

    def validate(self):
        try:
            self.dataset().validate()
            self.rad().validate()
            self.loss().validate()
            self.encoder().validate()
            self.optim().validate()
            self.schedule().validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        q = self.raw["quad"]
        if q["motion_kind"] not in MOTION_KINDS:
            raise ConfigError(f"unknown motion_kind {q['motion_kind']!r}")
        if self.raw["rad"]["donor_mode"] not in DONOR_MODES:
            raise ConfigError(f"unknown donor_mode {self.raw['rad']['donor_mode']!r}")
        if not q["dilation_candidates"] or min(q["dilation_candidates"]) < 1:
            raise ConfigError("dilation_candidates must be positive integers")
        if self.raw["eval"]["layer"] not in ("backbone", "projection"):
            raise ConfigError(f"unknown eval layer {self.raw['eval']['layer']!r}")
        return self
