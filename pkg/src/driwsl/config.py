"""Run configuration read from TOML.

Sections and their keys::

    [data]   SyntheticDatasetSpec fields (num_train, num_test, eta, ...)
    [model]  hidden, seed
    [emd]    max_iters, gamma0, epsilon, samples, init, fixed_noise
    [train]  batch_size, lr, iterations, s_learn, tau0, tau_min, beta,
             optimizer, warm_start, seed
    [eval]   ks, samples, tau, seed

Every section is optional; missing keys keep their defaults.  Unknown keys
and badly typed values raise :class:`ConfigError` naming the offending field
path, e.g. ``train.lr``.  ``eval.samples`` overrides ``emd.samples`` at test
time only.
"""

import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .emd import EmdConfig
from .errors import ConfigError
from .learning import TrainConfig
from .model import ModelConfig
from .synthetic import SyntheticDatasetSpec


@dataclass(frozen=True)
class ModelSection:
    hidden: int = 32
    seed: int = 0


@dataclass(frozen=True)
class EvalConfig:
    ks: tuple = (20, 50, 100)
    samples: int = 20
    tau: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not self.ks or any(k < 1 for k in self.ks):
            raise ValueError("ks must be a non-empty list of positive integers")
        if self.samples < 1 or not self.tau > 0:
            raise ValueError("samples and tau must be positive")


@dataclass(frozen=True)
class RunConfig:
    data: SyntheticDatasetSpec = field(default_factory=SyntheticDatasetSpec)
    model: ModelSection = field(default_factory=ModelSection)
    emd: EmdConfig = field(default_factory=EmdConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def model_config(self):
        return ModelConfig(self.data.feature_dim, self.model.hidden,
                           self.data.object_vocab, self.data.predicate_vocab)

    def train_config(self):
        return replace(self.train, emd=self.emd)

    def eval_emd(self):
        return replace(self.emd, samples=self.eval.samples)

    def with_seed(self, seed):
        """Override every section's seed with one master seed."""
        return replace(
            self,
            data=replace(self.data, seed=seed),
            model=replace(self.model, seed=seed),
            train=replace(self.train, seed=seed),
            eval=replace(self.eval, seed=seed),
        )

    def to_dict(self):
        out = {}
        for name in ("data", "model", "emd", "train", "eval"):
            d = asdict(getattr(self, name))
            d.pop("emd", None)
            if "ks" in d:
                d["ks"] = list(d["ks"])
            out[name] = d
        return out

    def to_toml(self):
        lines = []
        for section, values in self.to_dict().items():
            lines.append(f"[{section}]")
            for key, value in values.items():
                lines.append(f"{key} = {_toml_value(value)}")
            lines.append("")
        return "\n".join(lines)


SECTIONS = {
    "data": SyntheticDatasetSpec,
    "model": ModelSection,
    "emd": EmdConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
}


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return json.dumps(v)


def _coerce(path, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return tuple(_coerce(f"{path}[{k}]", default[0], x) for k, x in enumerate(value))
    raise ConfigError(path, "field is not configurable")


def _build_section(name, raw):
    cls = SECTIONS[name]
    if not isinstance(raw, dict):
        raise ConfigError(name, "expected a table")
    defaults = cls()
    known = {f.name for f in fields(cls) if f.name != "emd"}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"{name}.{key}", "unknown key")
        kwargs[key] = _coerce(f"{name}.{key}", getattr(defaults, key), value)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        keys = ", ".join(f"{name}.{k}" for k in sorted(kwargs)) or name
        raise ConfigError(name, f"{exc} (given: {keys})") from exc


def config_from_dict(raw):
    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        raise ConfigError(unknown[0], "unknown section")
    return RunConfig(**{name: _build_section(name, raw.get(name, {})) for name in SECTIONS})


def load_config(path):
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML: {exc}") from exc
    return config_from_dict(raw)


def parse_config(text):
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<string>", f"invalid TOML: {exc}") from exc
    return config_from_dict(raw)
