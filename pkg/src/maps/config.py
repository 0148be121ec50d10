"""Run configuration: one flat ``key = value`` file.

A ``[maps]`` section header is optional. Unknown keys are rejected. Keys
(defaults in brackets):

    config_version      file format version [1]
    seed                master seed for init, episodes, batches and synthesis [0]
    agents              ensemble size K, 1..64 [4]
    base_sizes          hidden widths of the first agent in a block [32,16]
    window              state window length f [30]
    maxiter, batch_size, sync_every   [400000, 128, 1000]
    lam, gamma, lr      loss weight, discount, Adam step [0.8, 0.99, 1e-5]
    eps_start, eps_end, eps_decay_frac   exploration schedule [1.0, 0.1, 0.25]
    buffer_size         replay columns M [50000]; batches draw columns uniformly,
                        with replacement, from the occupied ones
    td_form             standard | printed [standard]
    probe_every, log_every   [10000, 100]
    data                long-format price CSV; empty means synthesise [""]
    fill_policy, max_gap     forward | drop, longest fillable gap [forward, 5]
    synth_companies, synth_days   [20, 1500]
    synth_regimes       "drift:vol:len; ..." [0.0005:0.01:500; -0.0005:0.015:500; 0.0003:0.01:500]
    train_range, valid_range, test_range   "YYYY-MM-DD:YYYY-MM-DD" (all or none)
    split_fractions     used when no ranges are given [0.6,0.2,0.2]
    risk_free           optional ``date,rate`` CSV of daily percent rates [""]
    baselines           comma list from MOM, MR; empty disables [MOM,MR]
    discrete_baselines  sign-only baseline positions [false]
    out                 output directory [maps_out]
    checkpoint          checkpoint directory [<out>/checkpoint]
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .agents import DEFAULT_BASE_SIZES
from .market_data import SplitSpec
from .training import TrainConfig

CONFIG_VERSION = 1
SECTION = "maps"
DEFAULT_REGIMES = ((0.0005, 0.01, 500), (-0.0005, 0.015, 500), (0.0003, 0.01, 500))


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    agents: int = 4
    base_sizes: tuple[int, ...] = DEFAULT_BASE_SIZES
    data: str = ""
    fill_policy: str = "forward"
    max_gap: int = 5
    synth_companies: int = 20
    synth_days: int = 1500
    synth_regimes: tuple[tuple[float, float, int], ...] = DEFAULT_REGIMES
    split: SplitSpec | None = None
    split_fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    risk_free: str = ""
    baselines: tuple[str, ...] = ("MOM", "MR")
    discrete_baselines: bool = False
    out: str = "maps_out"
    checkpoint: str = ""

    def __post_init__(self):
        if not 1 <= self.agents <= 64:
            raise ConfigError(f"agents must be in 1..64, got {self.agents}")
        bad = set(self.baselines) - {"MOM", "MR"}
        if bad:
            raise ConfigError(f"unknown baselines {sorted(bad)}")

    @property
    def seed(self) -> int:
        return self.train.seed

    @property
    def window(self) -> int:
        return self.train.window

    @property
    def checkpoint_dir(self) -> Path:
        return Path(self.checkpoint) if self.checkpoint else Path(self.out) / "checkpoint"

    def with_overrides(self, seed=None, out=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, train=replace(cfg.train, seed=int(seed)))
        if out is not None:
            cfg = replace(cfg, out=str(out))
        return cfg


_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_RUN_KEYS = {"agents", "base_sizes", "data", "fill_policy", "max_gap", "synth_companies", "synth_days",
             "synth_regimes", "train_range", "valid_range", "test_range", "split_fractions", "risk_free",
             "baselines", "discrete_baselines", "out", "checkpoint", "config_version"}


def _ints(s):
    return tuple(int(x) for x in s.replace(" ", "").split(",") if x)


def _floats(s):
    return tuple(float(x) for x in s.replace(" ", "").split(",") if x)


def _range(s):
    lo, sep, hi = s.strip().partition(":")
    if not sep:
        raise ConfigError(f"date range {s!r} must look like START:END")
    return lo.strip(), hi.strip()


def parse_regimes(s: str):
    out = []
    for part in s.split(";"):
        part = part.strip()
        if not part:
            continue
        drift, vol, length = part.split(":")
        out.append((float(drift), float(vol), int(length)))
    if not out:
        raise ConfigError("synth_regimes is empty")
    return tuple(out)


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    if not text.lstrip().startswith("["):
        text = f"[{SECTION}]\n" + text
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    if parser.sections() != [SECTION]:
        raise ConfigError(f"config must have a single [{SECTION}] section")
    raw = dict(parser[SECTION])
    unknown = set(raw) - _TRAIN_KEYS - _RUN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    version = int(raw.pop("config_version", CONFIG_VERSION))
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config_version {version}")

    try:
        train_kw = {}
        for f in fields(TrainConfig):
            if f.name in raw:
                v = raw.pop(f.name)
                train_kw[f.name] = v if f.name == "td_form" else (float(v) if isinstance(f.default, float) else int(v))
        run_kw = {"train": TrainConfig(**train_kw)}
        conv = {
            "agents": int, "max_gap": int, "synth_companies": int, "synth_days": int,
            "base_sizes": _ints, "split_fractions": _floats, "synth_regimes": parse_regimes,
            "discrete_baselines": _bool,
            "baselines": lambda s: tuple(x.strip().upper() for x in s.split(",") if x.strip()),
        }
        ranges = [raw.pop(k, None) for k in ("train_range", "valid_range", "test_range")]
        if any(ranges):
            if not all(ranges):
                raise ConfigError("give all of train_range, valid_range, test_range or none")
            run_kw["split"] = SplitSpec(*(_range(r) for r in ranges))
            run_kw["split"].ranges()
        for k, v in raw.items():
            run_kw[k] = conv.get(k, str.strip)(v)
        return RunConfig(**run_kw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
