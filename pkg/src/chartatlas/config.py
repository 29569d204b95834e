"""Run configuration: flat dotted keys, built-in presets, file parsing.

A config file holds one ``key = value`` per line; ``#`` starts a comment.
Values are parsed with the type of the key's default.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .atlas import AtlasConfig
from .manifolds import SAMPLERS, PointCloud, read_cloud, rescale
from .nerve import NerveConfig, default_epsilon_grid, parse_epsilon_grid
from .trainer import LossConfig

DEFAULTS: dict[str, object] = {
    "seed": 0,
    "data.source": "circle",
    "data.N": 2000,
    "data.seed": -1,  # -1: use ``seed``
    "data.rescale": True,
    "model.d": 1,
    "model.k": 3,
    "model.encoder_kind": "linear",
    "model.decoder_hidden": (16, 16),
    "model.membership_hidden": (16,),
    "model.membership_activation": "relu",
    "model.discriminator_hidden": (16, 16),
    "model.encoder_hidden": (16, 16),
    "model.shared_trunk": False,
    "train.epochs": 500,
    "train.batch_size": 128,
    "train.learning_rate": 1e-3,
    "train.disc_steps": 1,
    "train.gen_steps": 1,
    "nerve.method": 1,
    "nerve.epsilon": 0.0,  # 0: sweep only
    "nerve.max_dimension": 0,  # 0: d + 1
    "nerve.epsilon_grid": "1e-6:0.5:40",
    "nerve.top_fraction": 1 / 3,
    "sweep.d_list": (1,),
    "generate.count": 1000,
    "generate.seed": 0,
}

PRESETS: dict[str, dict[str, object]] = {
    "circle": {
        "data.source": "circle",
        "data.N": 2000,
        "model.d": 1,
        "model.k": 3,
        "model.encoder_kind": "linear",
        "train.epochs": 1000,
        "nerve.method": 1,
    },
    "torus3": {
        "data.source": "torus3",
        "data.N": 5000,
        "model.d": 3,
        "model.k": 8,
        "model.encoder_kind": "linear",
        "train.epochs": 100,
        "sweep.d_list": (1, 2, 3, 4, 5),
    },
    "rp2": {
        "data.source": "rp2",
        "data.N": 10_000,
        "model.d": 2,
        "model.k": 8,
        "model.encoder_kind": "linear",
        "model.membership_activation": "tanh",
        "train.epochs": 500,
        "nerve.method": 1,
    },
}


def _parse_value(key: str, raw: str):
    default = DEFAULTS[key]
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
    return raw


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))

    def __getitem__(self, key: str):
        return self.values[key]

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise KeyError(f"unknown config key {key!r}")
        if isinstance(value, str):
            try:
                value = _parse_value(key, value)
            except ValueError as exc:
                raise ValueError(f"invalid value for {key}: {exc}") from exc
        self.values[key] = value

    def update(self, items: dict) -> None:
        for k, v in items.items():
            self.set(k, v)

    @classmethod
    def load(cls, path=None, preset: str | None = None, overrides: dict | None = None) -> "RunConfig":
        """Defaults, then the preset, then the file, then ``overrides``."""
        cfg = cls()
        if preset is not None:
            if preset not in PRESETS:
                raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
            cfg.update(PRESETS[preset])
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise FileNotFoundError(f"config file not found: {path}")
            for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected 'key = value'")
                key, value = (s.strip() for s in line.split("=", 1))
                try:
                    cfg.set(key, value)
                except (KeyError, ValueError) as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from exc
        cfg.update(overrides or {})
        cfg.validate()
        return cfg

    def validate(self) -> None:
        v = self.values
        problems = []
        if v["data.N"] < 1:
            problems.append("data.N must be >= 1")
        if v["model.k"] < 1:
            problems.append("model.k must be >= 1")
        if v["model.d"] < 1:
            problems.append("model.d must be >= 1")
        if v["train.batch_size"] < 1:
            problems.append("train.batch_size must be >= 1")
        if v["train.epochs"] < 0:
            problems.append("train.epochs must be >= 0")
        if v["nerve.method"] not in (1, 2):
            problems.append("nerve.method must be 1 or 2")
        if not 0 <= v["nerve.epsilon"] < 1:
            problems.append("nerve.epsilon must lie in [0, 1)")
        if not 0 < v["nerve.top_fraction"] <= 1:
            problems.append("nerve.top_fraction must lie in (0, 1]")
        if problems:
            raise ValueError("invalid config: " + "; ".join(problems))

    def dump(self) -> str:
        return "".join(f"{k} = {_format_value(self.values[k])}\n" for k in sorted(self.values))

    def as_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(self.values.items())}

    # -- builders -------------------------------------------------------------------

    @property
    def data_seed(self) -> int:
        s = self["data.seed"]
        return self["seed"] if s < 0 else s

    def load_data(self) -> PointCloud:
        src = self["data.source"]
        if src in SAMPLERS:
            cloud = SAMPLERS[src](self["data.N"], self.data_seed)
        else:
            cloud = read_cloud(src)
            cloud = PointCloud(cloud.raw_points(), None, cloud.seed)
        return rescale(cloud) if self["data.rescale"] else cloud

    def atlas_config(self, n: int, d: int | None = None) -> AtlasConfig:
        return AtlasConfig(
            n=n,
            d=self["model.d"] if d is None else d,
            k=self["model.k"],
            encoder_kind=self["model.encoder_kind"],
            decoder_hidden=self["model.decoder_hidden"],
            membership_hidden=self["model.membership_hidden"],
            membership_activation=self["model.membership_activation"],
            discriminator_hidden=self["model.discriminator_hidden"],
            encoder_hidden=self["model.encoder_hidden"],
            shared_trunk=self["model.shared_trunk"],
            seed=self["seed"],
        )

    def loss_config(self) -> LossConfig:
        return LossConfig(
            batch_size=self["train.batch_size"],
            learning_rate=self["train.learning_rate"],
            epochs=self["train.epochs"],
            disc_steps=self["train.disc_steps"],
            gen_steps=self["train.gen_steps"],
        )

    def max_dimension(self, d: int) -> int:
        return self["nerve.max_dimension"] or d + 1

    def nerve_config(self, d: int) -> NerveConfig:
        return NerveConfig(self["nerve.method"], self["nerve.epsilon"], self.max_dimension(d))

    def epsilon_grid(self) -> np.ndarray:
        spec = self["nerve.epsilon_grid"]
        return default_epsilon_grid() if spec == DEFAULTS["nerve.epsilon_grid"] else parse_epsilon_grid(spec)
