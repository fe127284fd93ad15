"""Line-oriented experiment configuration.

One ``key = value`` per line, ``#`` starts a comment. Keys are
``<section>.<field>`` for the sections ``dataset`` (DatasetSpec), ``train``
(TrainConfig), ``loss`` (LossConfig) and ``guide`` (GuidanceConfig), plus the
top-level ``out_dir``, ``dataset_dir`` and ``init_prior``. Tuples are comma
separated: ``guide.target_band = 0.15, 0.25``.

Example::

    out_dir = runs/r191
    dataset.target_ratio = 191
    dataset.n_train = 96
    train.lr = 0.1
    loss.family = DIBE_DIS
    loss.alpha = 0.5
"""

from dataclasses import dataclass, field, fields, replace
import math
import typing

from .guide import GuidanceConfig
from .losses import DEFAULT_GAMMA, Family, LossConfig
from .synth import DatasetSpec
from .trainer import TrainConfig

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    """Bad configuration; ``lineno`` is set when a specific line is at fault."""

    def __init__(self, message, lineno=None, path=None):
        where = f"{path or '<config>'}:{lineno}: " if lineno else (f"{path}: " if path else "")
        super().__init__(where + message)
        self.lineno = lineno
        self.path = path


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    out_dir: str = "runs"
    dataset_dir: str = ""
    init_prior: float = math.nan  # NaN: zero output bias

    @property
    def loss(self):
        return self.train.loss

    @property
    def prior(self):
        return None if math.isnan(self.init_prior) else self.init_prior

    def with_seed(self, seed):
        return replace(self, train=replace(self.train, seed=seed))

    def with_param(self, name, value):
        """Copy with one train/loss field (or ``seed``) replaced; alpha ties beta when guidance does."""
        if name == "family":
            loss = LossConfig.for_family(value, **{
                k: getattr(self.loss, k) for k in ("lam", "alpha", "beta", "theta", "eps")
            })
            return replace(self, train=replace(self.train, loss=loss))
        loss_names = {f.name for f in fields(LossConfig)}
        train_names = {f.name for f in fields(TrainConfig)} - {"loss"}
        if name in loss_names:
            value = _convert(name, value, _field_type(LossConfig, name))
            if name == "alpha":
                loss = self.loss.with_alpha(value, self.guidance.tie_beta)
            else:
                loss = replace(self.loss, **{name: value})
            return replace(self, train=replace(self.train, loss=loss))
        if name in train_names:
            value = _convert(name, value, _field_type(TrainConfig, name))
            return replace(self, train=replace(self.train, **{name: value}))
        raise ConfigError(f"cannot sweep unknown parameter {name!r}")


_SECTIONS = {"dataset": DatasetSpec, "train": TrainConfig, "loss": LossConfig, "guide": GuidanceConfig}
_TOP = {"out_dir": str, "dataset_dir": str, "init_prior": float}


def _field_type(cls, name):
    hints = typing.get_type_hints(cls)
    return hints[name]


def _convert(key, raw, typ):
    raw = str(raw).strip()
    if typ is bool:
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    if typ is tuple:
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if len(parts) != 2:
            raise ValueError(f"{key}: expected two comma-separated values, got {raw!r}")
        return tuple(float(p) for p in parts)
    if typ is Family:
        return Family(raw.upper())
    return raw


def parse_config(text, path=None):
    """Parse config text; every value is validated before returning."""
    values = {name: {} for name in _SECTIONS}
    top = {}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, path)
        key, value = (s.strip() for s in line.split("=", 1))
        if not value:
            raise ConfigError(f"empty value for {key!r}", lineno, path)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", lineno, path)
        seen[key] = lineno
        try:
            if key in _TOP:
                top[key] = _convert(key, value, _TOP[key])
                continue
            section, _, name = key.partition(".")
            cls = _SECTIONS.get(section)
            if cls is None or name not in {f.name for f in fields(cls)} or (section == "train" and name == "loss"):
                raise ConfigError(f"unknown key {key!r}", lineno, path)
            values[section][name] = (_convert(key, value, _field_type(cls, name)), lineno)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc), lineno, path) from None

    def build(section, cls, extra=None):
        kwargs = {k: v for k, (v, _) in values[section].items()}
        kwargs.update(extra or {})
        try:
            return cls(**kwargs)
        except ValueError as exc:
            lines = sorted(n for _, n in values[section].values())
            raise ConfigError(f"[{section}] {exc}", lines[0] if len(lines) == 1 else None, path) from None

    loss_kwargs = {}
    if "family" in values["loss"] and "gamma" not in values["loss"]:
        loss_kwargs["gamma"] = DEFAULT_GAMMA.get(values["loss"]["family"][0], 2.0)
    loss = build("loss", LossConfig, loss_kwargs)
    cfg = ExperimentConfig(
        dataset=build("dataset", DatasetSpec),
        train=build("train", TrainConfig, {"loss": loss}),
        guidance=build("guide", GuidanceConfig),
        **top,
    )
    if cfg.prior is not None and not 0 < cfg.prior < 1:
        raise ConfigError("init_prior must be in (0, 1)", seen.get("init_prior"), path)
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}") from None
    return parse_config(text, path)


def dump_config(cfg):
    """Config text that ``parse_config`` maps back to ``cfg``."""
    lines = [f"out_dir = {cfg.out_dir}"]
    if cfg.dataset_dir:
        lines.append(f"dataset_dir = {cfg.dataset_dir}")
    if cfg.prior is not None:
        lines.append(f"init_prior = {cfg.init_prior!r}")
    for section, obj in (("dataset", cfg.dataset), ("train", cfg.train), ("loss", cfg.loss), ("guide", cfg.guidance)):
        for f in fields(obj):
            if f.name == "loss":
                continue
            v = getattr(obj, f.name)
            if isinstance(v, tuple):
                v = ", ".join(repr(x) for x in v)
            elif isinstance(v, Family):
                v = v.value
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{section}.{f.name} = {v}")
    return "\n".join(lines) + "\n"
