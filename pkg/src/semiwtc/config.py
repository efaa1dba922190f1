"""Flat key=value experiment configuration.

Format: one `section.key=value` per line, `#` comments. Sections: data,
model, train, cum, aar, experiment. Unknown keys are errors so typos fail
fast.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from .aar import AarConfig
from .training import TrainConfig

EXPERIMENT_MODES = ("standard", "ratio_sweep", "ablation", "mislabel", "unseen", "aar")


@dataclass
class DataConfig:
    path: str = "synthetic"  # "synthetic" uses the built-in generator
    schema: str = ""
    delimiter: str = ","
    has_header: bool = False
    downsample_cap: int = 5000
    label_ratio: float = 0.01
    val_ratio: float = 0.170114
    test_ratio: float = 0.149426
    xi: float = 1e-6
    standardize: bool = False
    synth_seed: int = 7
    synth_total: int = 32772
    synth_class_sep: float = 1.55
    synth_tail_offset: float = 2.0
    synth_noise: float = 1.4
    synth_scale_spread: float = 1.30
    synth_noise_cols: int = 6


@dataclass
class ModelConfig:
    use_residual: bool = True
    use_batchnorm: bool = True


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    aar: AarConfig = field(default_factory=AarConfig)
    mode: str = "standard"
    seeds: list[int] = field(default_factory=lambda: [0])
    swap_fraction: float = 0.10
    ratios: list[float] = field(default_factory=lambda: [0.005, 0.01, 0.05, 0.10])
    aar_rounds: int = 6

    def __post_init__(self):
        if self.mode not in EXPERIMENT_MODES:
            raise ValueError(f"unknown experiment mode {self.mode!r}")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")

    def flat(self) -> dict:
        """Resolved config as flat section.key -> value pairs (report header)."""
        out = {}
        for section, obj in (("data", self.data), ("model", self.model),
                             ("train", self.train), ("aar", self.aar)):
            for k, v in asdict(obj).items():
                if isinstance(v, dict):
                    for kk, vv in v.items():
                        out[f"{section}.{k}.{kk}"] = vv
                else:
                    out[f"{section}.{k}"] = v
        out["experiment.mode"] = self.mode
        out["experiment.seeds"] = ",".join(map(str, self.seeds))
        out["experiment.swap_fraction"] = self.swap_fraction
        out["experiment.ratios"] = ",".join(map(str, self.ratios))
        out["experiment.aar_rounds"] = self.aar_rounds
        return out


def _coerce(current, value: str):
    if isinstance(current, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    return value


def _set_field(obj, key: str, value: str) -> None:
    valid = {f.name for f in fields(obj)}
    if key not in valid:
        raise KeyError(f"unknown config key {key!r} for {type(obj).__name__}")
    setattr(obj, key, _coerce(getattr(obj, key), value))


def parse_config(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        dotted, _, value = line.partition("=")
        dotted = dotted.strip()
        value = value.strip()
        section, _, key = dotted.partition(".")
        if section == "data":
            _set_field(cfg.data, key, value)
        elif section == "model":
            _set_field(cfg.model, key, value)
        elif section == "train":
            _set_field(cfg.train, key, value)
        elif section == "cum":
            _set_field(cfg.train.cum, key, value)
        elif section == "aar":
            if key == "bandwidth":
                cfg.aar.mean_shift.bandwidth = float(value)
            else:
                _set_field(cfg.aar, key, value)
        elif section == "experiment":
            if key == "mode":
                cfg.mode = value
            elif key == "seeds":
                cfg.seeds = [int(s) for s in value.split(",") if s]
            elif key == "ratios":
                cfg.ratios = [float(s) for s in value.split(",") if s]
            elif key == "swap_fraction":
                cfg.swap_fraction = float(value)
            elif key == "aar_rounds":
                cfg.aar_rounds = int(value)
            else:
                raise KeyError(f"unknown config key experiment.{key}")
        else:
            raise KeyError(f"line {lineno}: unknown config section {section!r}")
    cfg.__post_init__()
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
