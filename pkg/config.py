"""
Run Configuration

Loads, merges, validates and writes the nested run configuration shared by
every CLI subcommand.

Config files are parsed with yaml.safe_load, so plain JSON works and YAML
is accepted too. Written configs are JSON with sorted keys.

Precedence: CLI flags > config file > defaults. The seed may also come from
the RCGAN_SEED environment variable when neither a flag nor the file sets it.

The schema is a tree of pydantic models (RunConfig at the root); the
defaults are the models' field defaults. A violation is reported as a
ConfigError located by the JSON pointer of the offending value.
"""

import copy
import json
import logging
import os
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from errors import ConfigError

logger = logging.getLogger(__name__)

SEED_ENV_VAR = 'RCGAN_SEED'

BUILDER_SECTIONS = ('channel', 'mixture')

Phi = Literal['linear', 'log']
Mode = Literal['rcgan', 'lambda', 'labeled_only']

Count = Annotated[int, Field(strict=True, ge=1)]
NonNegativeInt = Annotated[int, Field(strict=True, ge=0)]
Rate = Annotated[float, Field(strict=True, ge=0)]
PositiveFloat = Annotated[float, Field(strict=True, gt=0)]
UnitInterval = Annotated[float, Field(strict=True, ge=0, lt=1)]
LabeledFraction = Annotated[float, Field(strict=True, gt=0, le=1)]


class Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


# ============================================================================
# Schema
# ============================================================================


class TrainSection(Section):
    """Training hyperparameters. The per-run seed is added by gan.TrainConfig.

    nonsaturating swaps the generator's phi=log objective for
    -E[log sigmoid(D)]; off by default, so the generator minimizes L(D, G).
    warmup_steps only applies to mode="lambda": steps of the conditional
    loss on the labeled records before the RCGAN(lambda) epochs.
    """
    model_config = ConfigDict(extra='forbid', frozen=True)

    phi: Phi = 'log'
    lam: Rate = 0.1
    lr_disc: Rate = 0.05
    lr_gen: Rate = 0.05
    momentum: UnitInterval = 0.5
    batch_size: Count = 64
    epochs: NonNegativeInt = 30
    clip_bound: PositiveFloat = 1.0
    feature_clip: Optional[PositiveFloat] = None
    latent_dim: Count = 2
    gen_hidden: Tuple[Count, ...] = (64, 64)
    disc_hidden: Tuple[Count, ...] = (64,)
    feature_dim: Count = 16
    nonsaturating: Annotated[bool, Field(strict=True)] = False
    warmup_steps: NonNegativeInt = 500
    mode: Mode = 'rcgan'


class DataSection(Section):
    n: Count = 8000
    # builder object, checked by data.mixture_from_config
    mixture: Dict[str, Any] = {'kind': 'default', 'm': 8, 'dim': 2, 'radius': 5.0, 'sigma': 0.5}


class RecoverySection(Section):
    restarts: Count = 5
    steps: Count = 200
    step_size: PositiveFloat = 0.05
    z_bound: Optional[PositiveFloat] = None


class EvalSection(Section):
    n: Count = 2000
    n_recovery: Optional[Count] = 500
    recovery: RecoverySection = Field(default_factory=RecoverySection)


class SweepSection(Section):
    alphas: List[LabeledFraction] = [1.0, 0.5, 0.2]


class FewLabelSection(Section):
    n_labels: List[Count] = [40]
    trials: Count = 5


class VerifySection(Section):
    trials: Count = 1000
    max_support: Annotated[int, Field(strict=True, ge=2)] = 6
    max_classes: Annotated[int, Field(strict=True, ge=2)] = 4
    max_uncertain: Count = 3
    max_feature_dim: Count = 3
    max_mass: UnitInterval = 0.9
    crosscheck_trials: NonNegativeInt = 100


class RunConfig(Section):
    seed: NonNegativeInt = 0
    data: DataSection = Field(default_factory=DataSection)
    # builder object, checked by channel.channel_from_config
    channel: Dict[str, Any] = {'kind': 'missing', 'alpha': 0.5}
    train: TrainSection = Field(default_factory=TrainSection)
    eval: EvalSection = Field(default_factory=EvalSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    few_labels: FewLabelSection = Field(default_factory=FewLabelSection)
    verify: VerifySection = Field(default_factory=VerifySection)


DEFAULT_CONFIG = RunConfig().model_dump(mode='json')


def default_config() -> Dict:
    return copy.deepcopy(DEFAULT_CONFIG)


# ============================================================================
# File I/O
# ============================================================================


def init_config_file(filepath: Union[str, Path] = 'rcgan_config.json') -> bool:
    """Write the default config if the file doesn't exist. Returns True when written."""
    filepath = Path(filepath)
    if filepath.exists():
        return False
    save_config(default_config(), filepath)
    logger.info("created %s with default settings", filepath)
    return True


def load_config(filepath: Union[str, Path]) -> Dict:
    """Read a JSON or YAML config file.

    Raises:
        FileNotFoundError: the file is missing
        ConfigError: the file doesn't parse or isn't a mapping
    """
    with open(filepath, 'r') as file:
        try:
            config = yaml.safe_load(file)
        except yaml.YAMLError as exc:
            raise ConfigError('/', f"cannot parse {filepath}: {exc}") from exc
    if config is None:
        return {}
    if not isinstance(config, dict):
        raise ConfigError('/', f"top level of {filepath} must be an object")
    return config


def _builtin(value: Any) -> Any:
    # numpy scalars and arrays that leak out of DataFrames
    if hasattr(value, 'tolist'):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def dump_json(data: Any) -> str:
    """Byte-stable JSON text used for every artifact the toolkit writes."""
    return json.dumps(data, sort_keys=True, indent=2, default=_builtin) + '\n'


def save_config(config: Dict, filepath: Union[str, Path]):
    Path(filepath).write_text(dump_json(config))


# ============================================================================
# Merge and resolve
# ============================================================================


def merge_config(base: Mapping, override: Mapping) -> Dict:
    """Recursive merge; None values in override leave base untouched.

    Builder objects (channel, mixture) are replaced whole, never merged.
    """
    merged = copy.deepcopy(dict(base))
    for key, value in override.items():
        if value is None:
            continue
        if (isinstance(value, Mapping) and isinstance(merged.get(key), Mapping)
                and key not in BUILDER_SECTIONS):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _env_seed(environ: Mapping[str, str]) -> Optional[int]:
    raw = environ.get(SEED_ENV_VAR)
    if raw is None or raw.strip() == '':
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError('/seed', f"{SEED_ENV_VAR}={raw!r} is not an integer") from None


def resolve_config(file_config: Optional[Mapping] = None, overrides: Optional[Mapping] = None,
                   environ: Optional[Mapping[str, str]] = None) -> Dict:
    """Defaults <- file <- CLI overrides, then the env seed fallback, then validation."""
    file_config = file_config or {}
    overrides = overrides or {}
    environ = os.environ if environ is None else environ

    config = merge_config(merge_config(default_config(), file_config), overrides)
    if overrides.get('seed') is None and file_config.get('seed') is None:
        env_seed = _env_seed(environ)
        if env_seed is not None:
            logger.debug("seed %d taken from %s", env_seed, SEED_ENV_VAR)
            config['seed'] = env_seed
    validate_config(config)
    return config


# ============================================================================
# Validation
# ============================================================================


def error_pointer(loc: Tuple) -> str:
    return '/' + '/'.join(str(part) for part in loc)


def describe_error(error: Dict) -> str:
    return f"{error['msg']}, got {error['input']!r}"


def validate_config(config: Mapping) -> RunConfig:
    """Validate against RunConfig; ConfigError names the first violation's pointer."""
    try:
        return RunConfig.model_validate(dict(config))
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(error_pointer(first['loc']), describe_error(first)) from None
