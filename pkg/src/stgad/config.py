"""Run configuration: a small INI file with typed, defaulted sections.

Every key has a default, unknown sections or keys are rejected (typos
must not silently fall back to defaults), and the fully resolved state
can be echoed back to disk next to the run outputs. The output directory
falls back to the STGAD_OUT environment variable when set.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class DataSection:
    train_csv: str = ""
    test_csv: str = ""
    dataset_dir: str = ""  # directory with train.csv/test.csv/metadata.txt
    label_column: str = "label"
    label_file: str = ""
    sample_interval_seconds: float = 1.0
    downsample_stride: int = 1
    trim_head: int = 0  # rows dropped from the start of train (warm-up)
    validation_ratio: float = 0.1


@dataclass
class ModelSection:
    window: int = 5
    layers: int = 2
    conv_channels: int = 16
    skip_channels: int = 32
    embed_dim: int = 256
    alpha: float = 20.0
    topk: int = 15
    retain: float = 0.1
    hops: int = 2
    dilation_base: int = 1
    head_hidden: int = 32
    share_gcn_directions: bool = False
    ablation: str = "none"
    dtype: str = "float64"
    seed: int = 0


@dataclass
class TrainingSection:
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    grad_clip: float = 0.0  # 0 disables clipping


@dataclass
class ScoringSection:
    method: str = "pca"  # pca | gaussian
    normalizer_window: int = 0  # 0 = min(validation rows, 5000)
    iqr_epsilon: float = 1e-2
    smape_target: float = 0.10


@dataclass
class EvaluationSection:
    delays_minutes: str = "0,1,5,10,20,30,60"
    rc_top_k: int = 3
    diagnosis_mode: str = "mtcl_graph"  # mtcl_graph | direct


@dataclass
class OutputSection:
    directory: str = ""


_SECTIONS = {
    "data": DataSection,
    "model": ModelSection,
    "training": TrainingSection,
    "scoring": ScoringSection,
    "evaluation": EvaluationSection,
    "output": OutputSection,
}


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    scoring: ScoringSection = field(default_factory=ScoringSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    output: OutputSection = field(default_factory=OutputSection)

    def output_dir(self) -> Path:
        if self.output.directory:
            return Path(self.output.directory)
        env = os.environ.get("STGAD_OUT")
        return Path(env) if env else Path("stgad_out")

    def delays(self) -> list:
        out = []
        for part in self.evaluation.delays_minutes.split(","):
            part = part.strip()
            if not part:
                continue
            try:
                out.append(float(part))
            except ValueError:
                raise ConfigError(
                    f"evaluation.delays_minutes: {part!r} is not a number"
                ) from None
        if not out:
            raise ConfigError("evaluation.delays_minutes is empty")
        return out

    def validate(self) -> "RunConfig":
        if self.model.ablation not in ("none", "no_mtcl", "no_gcn", "mod_tcn"):
            raise ConfigError(f"model.ablation {self.model.ablation!r} unknown")
        if self.model.dtype not in ("float32", "float64"):
            raise ConfigError(f"model.dtype {self.model.dtype!r} unknown")
        if self.scoring.method not in ("pca", "gaussian"):
            raise ConfigError(f"scoring.method {self.scoring.method!r} unknown")
        if self.evaluation.diagnosis_mode not in ("mtcl_graph", "direct"):
            raise ConfigError(
                f"evaluation.diagnosis_mode {self.evaluation.diagnosis_mode!r} unknown"
            )
        if not 0.0 < self.data.validation_ratio < 1.0:
            raise ConfigError("data.validation_ratio must be in (0, 1)")
        if self.training.epochs < 1:
            raise ConfigError("training.epochs must be >= 1")
        if self.training.batch_size < 1:
            raise ConfigError("training.batch_size must be >= 1")
        if self.data.downsample_stride < 1:
            raise ConfigError("data.downsample_stride must be >= 1")
        if self.data.trim_head < 0:
            raise ConfigError("data.trim_head must be >= 0")
        self.delays()
        return self


def _coerce(section: str, key: str, text: str, target_type):
    text = text.strip()
    try:
        if target_type is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return target_type(text)
    except ValueError:
        raise ConfigError(
            f"[{section}] {key}: cannot parse {text!r} as {target_type.__name__}"
        ) from None


def parse_config(path) -> RunConfig:
    """Load an INI file; missing keys keep defaults, unknown keys fail."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    cfg = RunConfig()
    for section_name in parser.sections():
        if section_name not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section_name}]")
        target = getattr(cfg, section_name)
        known = {f.name: f.type for f in fields(target)}
        types = {f.name: type(getattr(target, f.name)) for f in fields(target)}
        for key, raw in parser.items(section_name):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in section [{section_name}]")
            setattr(target, key, _coerce(section_name, key, raw, types[key]))
    return cfg.validate()


def apply_overrides(cfg: RunConfig, pairs) -> RunConfig:
    """Apply section.key=value strings (CLI --set) on top of a config."""
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not section.key=value")
        dotted, _, value = pair.partition("=")
        if "." not in dotted:
            raise ConfigError(f"override {pair!r} is not section.key=value")
        section_name, _, key = dotted.strip().partition(".")
        if section_name not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section_name}]")
        target = getattr(cfg, section_name)
        names = {f.name for f in fields(target)}
        if key not in names:
            raise ConfigError(f"unknown key {key!r} in section [{section_name}]")
        setattr(
            target, key, _coerce(section_name, key, value, type(getattr(target, key)))
        )
    return cfg.validate()


def write_resolved(cfg: RunConfig, path) -> None:
    """Echo the fully resolved configuration as an INI file."""
    parser = configparser.ConfigParser()
    for section_name in _SECTIONS:
        values = asdict(getattr(cfg, section_name))
        parser[section_name] = {k: str(v) for k, v in values.items()}
    with open(path, "w") as fh:
        parser.write(fh)
