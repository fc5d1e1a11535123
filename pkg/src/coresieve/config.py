"""Run configuration: a nested key-value tree with every default spelled out.

Configs are read from YAML (JSON is accepted too, being a YAML subset) and
echoed back in full in each run report, so a report alone replays its run.
"""
from dataclasses import asdict, dataclass, field, fields

import yaml

from .errors import ConfigError
from .loss import BetaSchedule, default_beta_max
from .model import OptimizerConfig


@dataclass
class DataConfig:
    source: str = "blobs"  # "blobs" or "file"
    num_samples: int = 5000
    num_test: int = 2000
    num_classes: int = 4
    dim: int = 20
    separation: float = 4.0
    path: str | None = None
    sidecar: str | None = None
    test_path: str | None = None


@dataclass
class NoiseConfig:
    kind: str = "instance"
    epsilon: float = 0.4
    include_true_label: bool = False


@dataclass
class ModelConfig:
    arch: str = "mlp"
    hidden: int = 64


@dataclass
class ScheduleConfig:
    warmup_epochs: int = 5
    ramp_epochs: int = 15
    beta_max: float | None = None  # None: 2 for K <= 10, else 0.2 K
    sieve_start: int | None = None  # None: end of the ramp
    split_epoch: int | None = None  # None: end of the ramp + 5
    normalize: str = "selected"  # "selected" or "batch"
    loss_hist_epochs: list = field(default_factory=list)


@dataclass
class ConsistencyConfig:
    enabled: bool = False
    sigma_fraction: float = 0.1
    epochs: int | None = None  # None: remaining epoch budget after the split
    kl_weight: float = 1.0


@dataclass
class SeedConfig:
    data: int = 0
    noise: int = 0
    train: int = 0


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    consistency: ConsistencyConfig = field(default_factory=ConsistencyConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    output_dir: str = "runs/default"

    # derived quantities -----------------------------------------------------

    def beta_schedule(self):
        s = self.schedule
        beta_max = default_beta_max(self.data.num_classes) if s.beta_max is None else s.beta_max
        return BetaSchedule(s.warmup_epochs, s.ramp_epochs, beta_max)

    @property
    def sieve_start(self):
        s = self.schedule
        return s.warmup_epochs + s.ramp_epochs if s.sieve_start is None else s.sieve_start

    @property
    def split_epoch(self):
        s = self.schedule
        return s.warmup_epochs + s.ramp_epochs + 5 if s.split_epoch is None else s.split_epoch

    @property
    def consistency_epochs(self):
        c = self.consistency
        return self.optimizer.epochs - self.split_epoch - 1 if c.epochs is None else c.epochs

    def resolved(self):
        """Copy with every ``None`` default replaced by its concrete value."""
        d = self.to_dict()
        d["schedule"]["beta_max"] = self.beta_schedule().beta_max
        d["schedule"]["sieve_start"] = self.sieve_start
        d["schedule"]["split_epoch"] = self.split_epoch
        d["consistency"]["epochs"] = self.consistency_epochs
        d["optimizer"]["lr_decay_epoch"] = self.optimizer.decay_epoch
        return RunConfig.from_dict(d)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown key")
        kwargs = {}
        for f in fields(cls):
            if f.name not in d:
                continue
            sub = _SECTIONS.get(f.name)
            kwargs[f.name] = _build(sub, d[f.name], f.name) if sub else d[f.name]
        cfg = cls(**kwargs)
        validate(cfg)
        return cfg


_SECTIONS = {"data": DataConfig, "noise": NoiseConfig, "model": ModelConfig, "optimizer": OptimizerConfig,
             "schedule": ScheduleConfig, "consistency": ConsistencyConfig, "seeds": SeedConfig}


def _build(kind, values, prefix):
    if not isinstance(values, dict):
        raise ConfigError(prefix, "expected a mapping")
    names = {f.name for f in fields(kind)}
    for key in values:
        if key not in names:
            raise ConfigError(f"{prefix}.{key}", "unknown key")
    try:
        return kind(**values)
    except (TypeError, ValueError) as exc:
        # OptimizerConfig validates itself; map its message to a field path
        msg = str(exc)
        key = next((n for n in names if msg.startswith(n)), None)
        raise ConfigError(f"{prefix}.{key}" if key else prefix, msg) from None


def _require(cond, field_path, message):
    if not cond:
        raise ConfigError(field_path, message)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def validate(cfg):
    d, n, m, s, c, o = cfg.data, cfg.noise, cfg.model, cfg.schedule, cfg.consistency, cfg.optimizer
    _require(d.source in ("blobs", "file"), "data.source", "must be 'blobs' or 'file'")
    if d.source == "file":
        _require(bool(d.path), "data.path", "required when data.source is 'file'")
    else:
        _require(_is_int(d.num_samples) and d.num_samples >= 1, "data.num_samples", "must be a positive integer")
        _require(_is_int(d.num_classes) and d.num_classes >= 2, "data.num_classes", "must be an integer >= 2")
        _require(d.num_samples >= d.num_classes, "data.num_samples", "must be >= data.num_classes")
        _require(_is_int(d.dim) and d.dim >= 1, "data.dim", "must be a positive integer")
        _require(isinstance(d.separation, (int, float)) and d.separation > 0, "data.separation", "must be > 0")
    _require(_is_int(d.num_test) and d.num_test >= 0, "data.num_test", "must be a non-negative integer")
    _require(n.kind in ("symmetric", "asymmetric", "instance"), "noise.kind",
             "must be one of symmetric, asymmetric, instance")
    _require(isinstance(n.epsilon, (int, float)) and 0 <= n.epsilon < 1, "noise.epsilon", "must lie in [0, 1)")
    _require(m.arch in ("linear", "mlp"), "model.arch", "must be 'linear' or 'mlp'")
    if m.arch == "mlp":
        _require(_is_int(m.hidden) and m.hidden >= 1, "model.hidden", "must be a positive integer")
    for key in ("warmup_epochs", "ramp_epochs"):
        v = getattr(s, key)
        _require(_is_int(v) and v >= 0, f"schedule.{key}", "must be a non-negative integer")
    _require(s.beta_max is None or s.beta_max >= 0, "schedule.beta_max", "must be >= 0")
    _require(s.normalize in ("selected", "batch"), "schedule.normalize", "must be 'selected' or 'batch'")
    _require(cfg.sieve_start >= 0, "schedule.sieve_start", "must be >= 0")
    _require(0 <= cfg.split_epoch < o.epochs, "schedule.split_epoch", "must lie in [0, optimizer.epochs)")
    _require(c.sigma_fraction >= 0, "consistency.sigma_fraction", "must be >= 0")
    _require(c.kl_weight >= 0, "consistency.kl_weight", "must be >= 0")
    _require(cfg.consistency_epochs >= 0, "consistency.epochs", "must be >= 0")
    for key in ("data", "noise", "train"):
        _require(_is_int(getattr(cfg.seeds, key)), f"seeds.{key}", "must be an integer")


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if isinstance(raw, dict) and "config_echo" in raw:
        raw = raw["config_echo"]
    return RunConfig.from_dict(raw)


def apply_overrides(cfg, overrides):
    """Apply ``dotted.key=value`` overrides (values parsed as YAML scalars)."""
    d = cfg.to_dict()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, raw = item.split("=", 1)
        path = key.strip().split(".")
        if len(path) == 1:
            path = ["seeds"] + path
        node = d
        for part in path[:-1]:
            if not isinstance(node.get(part), dict):
                raise ConfigError(key, "unknown key")
            node = node[part]
        if path[-1] not in node:
            raise ConfigError(key, "unknown key")
        node[path[-1]] = yaml.safe_load(raw)
    return RunConfig.from_dict(d)
