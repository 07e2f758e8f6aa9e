"""Run configuration: defaults, YAML snapshot and `--set` overrides."""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import yaml
from django.conf import settings

from corpora.domain import IngestConfig, Split
from scoring.domain import ScoringConfig
from targets.domain import TargetOptions
from translator.domain import TrainConfig

CONFIG_NAME = 'config.yaml'


class ConfigError(ValueError):
    """The run configuration or an override is invalid."""


@dataclass
class EvaluationConfig:
    per_clip_normalize: bool = False
    macro: bool = False


@dataclass
class RunConfig:
    run_dir: str
    corpus: Optional[str] = None
    test_corpus: Optional[str] = None
    scene: Optional[str] = None
    seed: int = 0
    ingest: IngestConfig = field(default_factory=IngestConfig)
    targets: TargetOptions = field(default_factory=TargetOptions)
    appearance: TrainConfig = field(default_factory=TrainConfig)
    motion: TrainConfig = field(default_factory=TrainConfig)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    @property
    def run_path(self) -> Path:
        return Path(self.run_dir)

    @property
    def corpus_path(self) -> Path:
        return Path(self.corpus) if self.corpus else self.run_path / 'corpus'

    @property
    def test_corpus_path(self) -> Path:
        return Path(self.test_corpus) if self.test_corpus else self.corpus_path

    @property
    def scene_path(self) -> Path:
        return Path(self.scene) if self.scene else Path(settings.TRANSLAD_REFERENCE_SCENE)

    def train_config(self, branch: str) -> TrainConfig:
        return self.appearance if branch == 'appearance' else self.motion

    def ingest_config(self, splits=(Split.TRAIN, Split.TEST)) -> IngestConfig:
        return IngestConfig(
            side=self.ingest.side,
            workers=self.ingest.workers,
            palette=self.ingest.palette,
            splits=list(splits),
        )

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def default_dict(run_dir) -> dict:
    """Built-in defaults; process settings supply side, workers and the pre-training switch."""
    config = RunConfig(run_dir=str(run_dir))
    config.ingest.side = settings.TRANSLAD_FRAME_SIDE
    config.ingest.workers = settings.TRANSLAD_WORKERS
    config.appearance.pretrained = config.motion.pretrained = settings.TRANSLAD_PRETRAINED_ENCODER
    data = config.to_dict()
    del data['ingest']['splits']
    return data


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, str):
        return str(value)
    return value


def merge(base: dict, update: dict, prefix: str = '') -> dict:
    """Deep-merge `update` into a copy of `base`; keys unknown to `base` are errors."""
    merged = copy.deepcopy(base)
    for key, value in (update or {}).items():
        path = f'{prefix}{key}'
        if key not in merged:
            raise ConfigError(f'Unknown config key {path!r}')
        if isinstance(merged[key], dict) and merged[key]:
            if not isinstance(value, dict):
                raise ConfigError(f'Config key {path!r} is a section; set its fields instead')
            merged[key] = merge(merged[key], value, prefix=f'{path}.')
        else:
            merged[key] = value
    return merged


def parse_override(text: str) -> dict:
    """`a.b.c=value` -> {"a": {"b": {"c": value}}}, the value parsed as a YAML scalar."""
    key, sep, raw = text.partition('=')
    key = key.strip()
    if not sep or not key or any(not part for part in key.split('.')):
        raise ConfigError(f'Override {text!r} must look like key.path=value')
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f'Override {text!r} has an unparsable value: {exc}')
    for part in reversed(key.split('.')):
        value = {part: value}
    return value


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f'Config file {path} does not exist')
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f'Config file {path} is not valid YAML: {exc}')
    if not isinstance(data, dict):
        raise ConfigError(f'Config file {path} must hold a mapping')
    return data


def resolve_config(config_path=None, overrides=(), run_dir=None) -> RunConfig:
    """defaults -> config file (or the run's stored snapshot) -> overrides.

    The run directory is taken from `run_dir`, an override, the config file,
    then the TRANSLAD_RUN_DIR setting, in that order.
    """
    from .serializers import RunConfigSerializer

    parsed = [parse_override(text) for text in overrides]
    file_data = read_config_file(config_path) if config_path else {}
    override_dirs = [o['run_dir'] for o in parsed if 'run_dir' in o]
    chosen_dir = run_dir or (override_dirs[-1] if override_dirs else None) or file_data.get('run_dir') \
        or settings.TRANSLAD_RUN_DIR
    if not config_path and (Path(chosen_dir) / CONFIG_NAME).exists():
        file_data = read_config_file(Path(chosen_dir) / CONFIG_NAME)

    data = merge(default_dict(chosen_dir), file_data)
    for override in parsed:
        data = merge(data, override)
    data['run_dir'] = str(chosen_dir)

    serializer = RunConfigSerializer(data=data)
    if not serializer.is_valid():
        raise ConfigError(f'Invalid run config: {_flatten_errors(serializer.errors)}')
    return serializer.save()


def _flatten_errors(errors, prefix='') -> str:
    parts = []
    for key, value in errors.items():
        if isinstance(value, dict):
            parts.append(_flatten_errors(value, f'{prefix}{key}.'))
        else:
            parts.append(f"{prefix}{key}: {' '.join(str(v) for v in value)}")
    return '; '.join(parts)


def save_config(config: RunConfig) -> Path:
    config.run_path.mkdir(parents=True, exist_ok=True)
    data = config.to_dict()
    del data['ingest']['splits']
    path = config.run_path / CONFIG_NAME
    path.write_text(yaml.safe_dump(data, sort_keys=False))
    return path
