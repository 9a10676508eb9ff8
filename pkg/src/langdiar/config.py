"""Pipeline configuration, hyper-parameter presets and JSON loading."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

log = logging.getLogger(__name__)


def round_to_odd(x: float) -> int:
    """Nearest odd integer to ``x`` (at least 1)."""
    return max(1, 2 * math.floor((x - 1.0) / 2.0 + 0.5) + 1)


@dataclass(frozen=True)
class ChangePointConfig:
    alpha: float = 3.2
    delta: float = 1.3
    gamma: float = 0.9
    N: int = 200

    def __post_init__(self):
        for name in ("alpha", "delta", "gamma"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.N < 1:
            raise ConfigError("N must be >= 1")

    @property
    def smoothing_len(self) -> int:
        return round_to_odd(self.N / self.delta)

    @property
    def min_peak_distance(self) -> int:
        return max(1, math.floor(self.gamma * self.N + 0.5))


@dataclass(frozen=True)
class Preset:
    alpha: float
    delta: float
    gamma: float
    N: int
    scorer: str
    chain: tuple
    lda_dim: int | None = None


# (alpha, delta, gamma) from the tuned settings for each dataset / window length.
PRESETS = {
    "ttsf-n200": Preset(3.2, 1.3, 0.9, 200, "gplda", ("whiten", "lnorm")),
    "ttsf-n50": Preset(2.6, 1.3, 0.9, 50, "gplda", ("whiten", "lnorm")),
    "ttsf-sd-n50": Preset(2.6, 1.3, 0.9, 50, "gplda", ("whiten", "lnorm")),
    "explicit-n100": Preset(0.9, 0.5, 0.5, 100, "gplda", ("whiten", "lnorm")),
    "mscs-gue-n200": Preset(0.3, 4.5, 1.1, 200, "cosine", ("lda", "wccn"), 150),
    "mscs-tae-n200": Preset(0.3, 4.5, 1.1, 200, "cosine", ("lda", "wccn"), 150),
    "mscs-tee-n200": Preset(0.3, 3.9, 1.1, 200, "cosine", ("lda", "wccn"), 150),
    "mscs-gue-n50": Preset(0.3, 0.9, 1.1, 50, "cosine", ("lda", "wccn"), 150),
    "mscs-tae-n50": Preset(0.3, 0.9, 1.3, 50, "cosine", ("lda", "wccn"), 150),
    "mscs-tee-n50": Preset(0.3, 0.5, 1.3, 50, "cosine", ("lda", "wccn"), 150),
}
for _short in ("gue", "tae", "tee"):
    for _n in (200, 50):
        PRESETS[f"{_short}-n{_n}"] = PRESETS[f"mscs-{_short}-n{_n}"]


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}") from None


@dataclass
class PipelineConfig:
    mode: str = "fixed"
    N: int = 200
    preset: str | None = None
    extractor: str = "stat-pool"
    extractor_dim: int | None = None
    extractor_seed: int = 0
    scorer: str = "gplda"
    chain: list = field(default_factory=lambda: ["whiten", "lnorm"])
    lda_dim: int | None = None
    K: int = 2
    alpha: float = 3.2
    delta: float = 1.3
    gamma: float = 0.9
    tick: float = 0.2
    frame_len: float = 0.02
    frame_shift: float = 0.01
    vad_factor: float = 0.06
    min_segment_frames: int = 4

    @property
    def changepoint(self) -> ChangePointConfig:
        return ChangePointConfig(self.alpha, self.delta, self.gamma, self.N)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}
_TYPES = {
    "mode": str, "N": int, "preset": (str, type(None)), "extractor": str,
    "extractor_dim": (int, type(None)), "extractor_seed": int, "scorer": str, "chain": list,
    "lda_dim": (int, type(None)), "K": int, "alpha": (int, float), "delta": (int, float),
    "gamma": (int, float), "tick": (int, float), "frame_len": (int, float),
    "frame_shift": (int, float), "vad_factor": (int, float), "min_segment_frames": int,
}


def _check_type(key, value):
    want = _TYPES[key]
    if isinstance(value, bool) or not isinstance(value, want):
        raise ConfigError(f"$.{key}: expected {want}, got {type(value).__name__}")


def config_from_dict(doc: dict) -> PipelineConfig:
    """Validate a config document and fill defaults.

    Hyper-parameters not given explicitly come from ``preset``; without a preset
    the TTSF preset for the requested N is used (``ttsf-n50`` for N=50, else ``ttsf-n200``).
    """
    if not isinstance(doc, dict):
        raise ConfigError("$: config must be a JSON object")
    for key, value in doc.items():
        if key not in _FIELDS:
            raise ConfigError(f"$.{key}: unknown key")
        _check_type(key, value)
    if "chain" in doc:
        from .backend import CHAIN_STEPS

        for i, step in enumerate(doc["chain"]):
            if step not in CHAIN_STEPS:
                raise ConfigError(f"$.chain[{i}]: unknown step {step!r}")

    preset_name = doc.get("preset")
    if preset_name is None:
        preset_name = "ttsf-n50" if doc.get("N") == 50 else "ttsf-n200"
        implicit = True
    else:
        implicit = False
    p = get_preset(preset_name)
    values = {"alpha": p.alpha, "delta": p.delta, "gamma": p.gamma}
    if not implicit:
        values.update(N=p.N, scorer=p.scorer, chain=list(p.chain), lda_dim=p.lda_dim)
    values.update(doc)
    values["preset"] = preset_name
    for key in ("alpha", "delta", "gamma", "tick", "frame_len", "frame_shift", "vad_factor"):
        values[key] = float(values.get(key, _FIELDS[key].default))
    cfg = PipelineConfig(**values)

    if cfg.mode not in ("fixed", "changepoint"):
        raise ConfigError(f"$.mode: expected 'fixed' or 'changepoint', got {cfg.mode!r}")
    if cfg.scorer not in ("gplda", "cosine"):
        raise ConfigError(f"$.scorer: expected 'gplda' or 'cosine', got {cfg.scorer!r}")
    if cfg.N < 1:
        raise ConfigError("$.N: must be >= 1")
    if cfg.K < 1:
        raise ConfigError("$.K: must be >= 1")
    for key in ("alpha", "delta", "gamma", "tick", "vad_factor"):
        if getattr(cfg, key) <= 0:
            raise ConfigError(f"$.{key}: must be > 0")
    if not 0 < cfg.frame_shift <= cfg.frame_len:
        raise ConfigError("$.frame_shift: need 0 < frame_shift <= frame_len")
    return cfg


def load_config(path) -> PipelineConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    cfg = config_from_dict(doc)
    log.info("effective config: %s", json.dumps(cfg.to_dict(), sort_keys=True))
    return cfg
