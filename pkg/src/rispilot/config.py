"""Experiment configuration: flat ``key = value`` text grouped under ``[section]`` headers.

Unknown sections or keys are errors. ``#`` starts a comment. Lists are
comma-separated.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .channel import ChannelConfig
from .pipeline import SNR_GRID_DB, SystemConfig, TrainConfig
from .waveform import PowerSplit

SCALES = {"desk": (20_000, 4_000), "paper": (100_000, 20_000)}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class SweepConfig:
    snr_db: tuple = SNR_GRID_DB
    lambdas: tuple = (0.1, 0.15, 0.2)
    taps: tuple = (3, 5, 7)
    n_frames: int = 2000
    mode: str = "grid"


@dataclass(frozen=True)
class ExperimentConfig:
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    split: PowerSplit = field(default_factory=PowerSplit)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    scale: str = "desk"
    seed: int = 0
    workers: int = 1
    out: str = "results"

    @property
    def system(self) -> SystemConfig:
        return SystemConfig(self.channel, self.split)

    def with_scale(self, scale: str) -> "ExperimentConfig":
        if scale not in SCALES:
            raise ConfigError(f"run.scale: expected one of {sorted(SCALES)}, got {scale!r}")
        n_train, n_val = SCALES[scale]
        return replace(self, scale=scale, train=replace(self.train, n_train=n_train, n_val=n_val))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        if not 0 <= seed < 2**64:
            raise ConfigError(f"run.seed: must be a 64-bit unsigned integer, got {seed}")
        return replace(self, seed=seed, channel=replace(self.channel, seed=seed),
                       train=replace(self.train, seed=seed))


# section -> key -> (dataclass attribute path, type)
_SCHEMA = {
    "channel": {
        "n_subcarriers": ("channel.n_subcarriers", int),
        "n_subsurfaces": ("channel.n_subsurfaces", int),
        "n_taps": ("channel.n_taps", int),
        "cp_length": ("channel.cp_length", int),
        "rician_k_db": ("channel.rician_k_db", float),
        "pdp_decay": ("channel.pdp_decay", float),
        "phase_mode": ("channel.phase_mode", str),
    },
    "power": {
        "lambda": ("split.lam", float),
        "total_power": ("split.total_power", float),
    },
    "train": {
        "n_train": ("train.n_train", int),
        "n_val": ("train.n_val", int),
        "batch": ("train.batch", int),
        "epochs_ce": ("train.epochs_ce", int),
        "epochs_fus": ("train.epochs_fus", int),
        "lr_ce": ("train.lr_ce", float),
        "lr_fus": ("train.lr_fus", float),
        "l2_ce": ("train.l2_ce", float),
        "l2_fus": ("train.l2_fus", float),
        "snr_db": ("train.snr_grid_db", (float,)),
    },
    "sweep": {
        "snr_db": ("sweep.snr_db", (float,)),
        "lambda": ("sweep.lambdas", (float,)),
        "taps": ("sweep.taps", (int,)),
        "n_frames": ("sweep.n_frames", int),
        "mode": ("sweep.mode", str),
    },
    "run": {
        "scale": ("scale", str),
        "seed": ("seed", int),
        "workers": ("workers", int),
        "out": ("out", str),
    },
}


def _convert(raw: str, typ, where: str):
    try:
        if isinstance(typ, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            if not items:
                raise ConfigError(f"{where}: list must not be empty")
            return tuple(_grid_number(typ[0], x) for x in items)
        if typ is str:
            return raw
        return typ(raw)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: cannot parse {raw!r} as {_typename(typ)}") from None


def _grid_number(typ, raw: str):
    v = typ(raw)
    # keep whole-number floats as ints in grids so CSV output reads "12", not "12.0"
    if typ is float and v.is_integer() and "." not in raw and "e" not in raw.lower():
        return int(v)
    return v


def _typename(typ) -> str:
    return f"list of {typ[0].__name__}" if isinstance(typ, tuple) else typ.__name__


def _get(cfg, path: str):
    obj = cfg
    for part in path.split("."):
        obj = getattr(obj, part)
    return obj


def _set(cfg, path: str, value):
    head, _, rest = path.partition(".")
    if not rest:
        return replace(cfg, **{head: value})
    return replace(cfg, **{head: _set(getattr(cfg, head), rest, value)})


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse configuration text; every error names the file, line and field."""
    values = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"{where}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {line!r}")
        if section is None:
            raise ConfigError(f"{where}: key outside of a [section]")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _SCHEMA[section]:
            raise ConfigError(f"{where}: unknown key {section}.{key}")
        if (section, key) in values:
            raise ConfigError(f"{where}: duplicate key {section}.{key}")
        path, typ = _SCHEMA[section][key]
        values[(section, key)] = (path, _convert(raw, typ, f"{where} {section}.{key}"))

    cfg = ExperimentConfig()
    scale = values.get(("run", "scale"), (None, "desk"))[1]
    try:
        cfg = cfg.with_scale(scale)
        seed = values.get(("run", "seed"), (None, 0))[1]
        cfg = cfg.with_seed(seed)
        for (section, key), (path, value) in values.items():
            cfg = _set(cfg, path, value)
        _validate(cfg)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    s = cfg.sweep
    if s.mode not in ("grid", "axes"):
        raise ConfigError(f"sweep.mode: expected 'grid' or 'axes', got {s.mode!r}")
    if s.n_frames <= 0:
        raise ConfigError("sweep.n_frames: must be positive")
    if cfg.workers <= 0:
        raise ConfigError("run.workers: must be positive")
    for lam in s.lambdas:
        if not 0 <= lam <= 1:
            raise ConfigError(f"sweep.lambda: {lam} outside [0, 1]")
    for taps in s.taps:
        replace(cfg.channel, n_taps=taps)  # re-validates the channel invariants
    if cfg.train.batch > cfg.train.n_train:
        raise ConfigError("train.batch: must not exceed train.n_train")


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialize every field; ``parse_config(dump_config(c)) == c``."""
    lines = []
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (path, _typ) in keys.items():
            lines.append(f"{key} = {_format(_get(cfg, path))}")
        lines.append("")
    return "\n".join(lines)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(), str(p))
