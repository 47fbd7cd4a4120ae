"""Flat run configuration, loadable from a TOML key/value file."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

ABLATION_FLAGS = ("no_rtgcn", "no_pcm", "no_rmulti", "no_rtemp")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    learning_rate: float = 0.0003
    batch_dialogues: int = 10
    epochs: int = 100
    dropout: float = 0.5
    past: int = 11
    future: int = 9
    strict_window: bool = False
    heads: int = 7
    pcm_heads: int = 2
    eta: float = 1.0
    pcm_depth: int = 2
    d_h: int = 200
    d_h1: int = 200
    d_h2: int = 200
    d_alpha: int = 64
    d_V: int = 0          # 0 -> d_h (the cross-modal residuals need d_V == d_h)
    d_cls: int = 0        # classifier hidden width; 0 -> round(d_H / 2)
    text_heads: int = 4
    text_layers: int = 1
    rgcn_layers: int = 1
    gt_layers: int = 1
    ln_eps: float = 1e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    valid_fraction: float = 0.1
    no_rtgcn: bool = False
    no_pcm: bool = False
    no_rmulti: bool = False
    no_rtemp: bool = False
    modalities: str = "avt"

    def __post_init__(self):
        self.validate()

    # modality letters: a (audio), v (visual), t (text); internally text is "l"
    @property
    def modality_set(self) -> tuple[str, ...]:
        letters = set(self.modalities.replace("l", "t"))
        return tuple(m for m, c in (("a", "a"), ("v", "v"), ("l", "t")) if c in letters)

    @property
    def value_width(self) -> int:
        return self.d_V or self.d_h

    @property
    def use_rtgcn(self) -> bool:
        return not self.no_rtgcn

    @property
    def use_pcm(self) -> bool:
        return not self.no_pcm and len(self.modality_set) > 1

    def fused_width(self) -> int:
        n_mod = len(self.modality_set)
        width = 0
        if self.use_rtgcn:
            width += n_mod * self.heads * self.d_h2
        if self.use_pcm:
            n_pairs = {1: 0, 2: 1, 3: 3}[n_mod]
            width += n_pairs * 2 * self.value_width
        return width

    def classifier_width(self) -> int:
        return self.d_cls or max(1, round(self.fused_width() / 2))

    def validate(self) -> None:
        bad = set(self.modalities) - set("avtl")
        if not self.modalities or bad:
            raise ConfigError(f"modalities must be a non-empty subset of 'avt', got {self.modalities!r}")
        if self.value_width != self.d_h:
            raise ConfigError(f"d_V ({self.d_V}) must equal d_h ({self.d_h})")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta must be in [0, 1], got {self.eta}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.past < 0 or self.future < 0:
            raise ConfigError("window sizes must be non-negative")
        for name in ("heads", "pcm_heads", "text_heads", "batch_dialogues", "d_h", "d_h1",
                     "d_h2", "d_alpha"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("epochs", "pcm_depth", "text_layers", "rgcn_layers", "gt_layers"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.rgcn_layers < 1 and self.gt_layers < 1 and not self.no_rtgcn:
            raise ConfigError("RT-GCN enabled with zero layers")
        if not 0.0 <= self.valid_fraction < 1.0:
            raise ConfigError("valid_fraction must be in [0, 1)")
        if self.fused_width() == 0:
            raise ConfigError("ablation flags leave no representation to classify "
                              "(RT-GCN disabled and no P-CM pairs)")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for k, v in values.items():
            kind = type(getattr(cls(), k)) if k != "modalities" else str
            try:
                kwargs[k] = kind(v) if kind is not bool else _as_bool(v)
            except (TypeError, ValueError):
                raise ConfigError(f"config key {k}: cannot interpret {v!r}") from None
        return cls(**kwargs)


def _as_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    if isinstance(v, str) and v.lower() in ("true", "false", "1", "0", "yes", "no"):
        return v.lower() in ("true", "1", "yes")
    if isinstance(v, int):
        return bool(v)
    raise ValueError(v)


def load_config(path: str | Path | None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    values: dict[str, Any] = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                values.update(tomllib.load(fh))
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
    values.update(overrides or {})
    return RunConfig.from_dict(values)


def parse_flags(csv: str) -> dict[str, Any]:
    """``"no_pcm,modalities=at"`` -> ``{"no_pcm": True, "modalities": "at"}``."""
    out: dict[str, Any] = {}
    for item in filter(None, (s.strip() for s in csv.split(","))):
        if "=" in item:
            k, v = item.split("=", 1)
            out[k.strip()] = v.strip()
        elif item in ABLATION_FLAGS:
            out[item] = True
        else:
            raise ConfigError(f"unknown ablation flag {item!r}")
    return out
