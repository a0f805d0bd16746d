"""
Search configuration.

A configuration file is a TOML document with the sections [search], [dataset],
[operators] (plus an optional [operators.weights] table) and [training]. Every
key is optional; the defaults reproduce the published hyperparameters, so an
empty file is a valid configuration.
"""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields

import tomli_w

from ..dataset import load_idx, split, subset
from ..errors import ConfigError
from ..mutation import OperatorConfig
from ..training.trainer import TrainConfig

WEIGHT_INITIALIZATIONS = ("epigenetic", "he")


@dataclass
class SearchConfig:
    """
    Attributes:
        population_size (int): Population capacity.
        max_evaluations (int): Number of genomes issued (and evaluated) before the search stops.
        seed (int): Seed of the master RNG and of every training run.
        weight_init (str): "epigenetic" (inherit trained weights) or "he" (fresh weights for every candidate).
        checkpoint_interval (int): Completed evaluations between checkpoints (0 disables periodic checkpoints).
        output_dir (str): Directory receiving CSV stats, checkpoints and the best genome.
        reissue_factor (float): Outstanding work is reissued after this many median training times.
        initial_reissue_timeout (float): Reissue timeout in seconds before any result arrived.
    """

    population_size: int = 50
    max_evaluations: int = 500
    seed: int = 0
    weight_init: str = "epigenetic"
    checkpoint_interval: int = 50
    output_dir: str = "evodag-output"
    reissue_factor: float = 10.0
    initial_reissue_timeout: float = 3600.0

    def __post_init__(self):
        if self.population_size < 2:
            raise ConfigError(f"population_size must be at least 2, got {self.population_size}")
        if self.max_evaluations <= 0:
            raise ConfigError(f"max_evaluations must be positive, got {self.max_evaluations}")
        if self.weight_init not in WEIGHT_INITIALIZATIONS:
            raise ConfigError(f"weight_init must be one of {WEIGHT_INITIALIZATIONS}, got {self.weight_init!r}")
        if self.checkpoint_interval < 0:
            raise ConfigError("checkpoint_interval must not be negative")
        if self.reissue_factor <= 0 or self.initial_reissue_timeout <= 0:
            raise ConfigError("reissue settings must be positive")


@dataclass
class DatasetConfig:
    """
    Attributes:
        train_images, train_labels (str): IDX files split into training and validation sets.
        test_images, test_labels (str): IDX test files, only used by `retrain`.
        num_classes (int): Number of classes.
        train_count (int): Size of the training split; the rest validates.
        train_subset (int): Train on a random subset of this size (0 keeps the whole split).
        split_seed (int): Seed of the train/validation partition.
        pad (bool): Zero-pad images to 32x32.
    """

    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    num_classes: int = 10
    train_count: int = 50_000
    train_subset: int = 0
    split_seed: int = 0
    pad: bool = False

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("num_classes must be at least 2")
        if self.train_count <= 0 or self.train_subset < 0:
            raise ConfigError("train_count must be positive and train_subset nonnegative")

    def load(self):
        """Loads the training file pair and returns the (train, validation) splits."""
        if not (self.train_images and self.train_labels):
            raise ConfigError("dataset.train_images and dataset.train_labels are required")
        full = load_idx(self.train_images, self.train_labels, self.num_classes, self.pad)
        train_set, validation_set = split(full, self.train_count, self.split_seed)
        if self.train_subset:
            train_set = subset(train_set, self.train_subset, self.split_seed)
        return train_set, validation_set

    def load_test(self):
        if not (self.test_images and self.test_labels):
            raise ConfigError("dataset.test_images and dataset.test_labels are required")
        return load_idx(self.test_images, self.test_labels, self.num_classes, self.pad)


@dataclass
class Config:
    search: SearchConfig = field(default_factory=SearchConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    operators: OperatorConfig = field(default_factory=OperatorConfig)
    training: TrainConfig = field(default_factory=TrainConfig)


SECTIONS = {"search": SearchConfig, "dataset": DatasetConfig, "operators": OperatorConfig, "training": TrainConfig}


def _build(cls, section, values):
    if not isinstance(values, dict):
        raise ConfigError(f"[{section}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigError(f"invalid [{section}]: {e}") from e


def config_from_dict(document):
    """Builds a Config from a parsed TOML document; missing sections and keys take defaults."""
    unknown = set(document) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return Config(**{name: _build(cls, name, document.get(name, {})) for name, cls in SECTIONS.items()})


def config_to_dict(config):
    document = {name: asdict(getattr(config, name)) for name in SECTIONS}
    document["operators"]["size_deltas"] = list(config.operators.size_deltas)
    return document


def load_config(path=None):
    """
    Reads a TOML configuration file.

    Args:
        path (str): Path to the file; None returns the defaults.

    Raises:
        ConfigError: If the file is missing, not TOML, or contains unknown or invalid values.
    """
    if path is None:
        return Config()
    try:
        with open(path, "rb") as f:
            document = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path} is not valid TOML: {e}") from e
    return config_from_dict(document)


def dump_config(config):
    """Serializes a Config to TOML text that `load_config` reads back unchanged."""
    return tomli_w.dumps(config_to_dict(config))
