"""
Training and evaluation of a single genome.

A worker receives an initialized genome, trains its phenotype with
mini-batch Nesterov SGD on the training split and scores it by the summed
cross-entropy on the validation split. The test split is only ever touched by
`evaluate` when explicitly asked (the `retrain` command).
"""

import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..dataset import batches
from ..errors import ConfigError
from .initialization import VARIANCE_RULES, he_initialize
from .optimizer import init_velocity, schedule_step, sgd_step
from .phenotype import Phenotype, cross_entropy

logger = logging.getLogger(__name__)

EVALUATION_CHUNK = 1000
LOG_COLUMNS = ("epoch", "train_loss", "val_loss", "val_accuracy", "mu", "eta", "lambda")


@dataclass
class TrainConfig:
    """
    Backpropagation hyperparameters.

    Momentum, learning rate and weight decay follow a per-epoch schedule:
    mu grows towards mu_max while eta and lambda decay towards their floors.
    """

    batch_size: int = 50
    bn_alpha: float = 0.1
    relu_max: float = 5.5
    relu_leak: float = 0.1
    mu: float = 0.5
    mu_delta: float = 0.95
    mu_max: float = 0.99
    eta: float = 0.0125
    eta_delta: float = 0.95
    eta_min: float = 1e-4
    lambda_: float = 0.0005
    lambda_delta: float = 0.95
    lambda_min: float = 1e-5
    epochs: int = 10
    init_variance: str = "sqrt"
    dtype: str = "float32"

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (int, float)) and not isinstance(value, bool) and value <= 0:
                raise ConfigError(f"training.{f.name} must be positive, got {value}")
        if self.mu > self.mu_max:
            raise ConfigError(f"mu ({self.mu}) must not exceed mu_max ({self.mu_max})")
        if self.eta_min > self.eta:
            raise ConfigError(f"eta_min ({self.eta_min}) must not exceed eta ({self.eta})")
        if self.lambda_min > self.lambda_:
            raise ConfigError(f"lambda_min ({self.lambda_min}) must not exceed lambda ({self.lambda_})")
        if self.init_variance not in VARIANCE_RULES:
            raise ConfigError(f"init_variance must be one of {VARIANCE_RULES}, got {self.init_variance!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, document):
        known = {f.name for f in fields(cls)}
        unknown = set(document) - known
        if unknown:
            raise ConfigError(f"unknown training settings: {sorted(unknown)}")
        return cls(**document)


@dataclass(frozen=True)
class TrainResult:
    """
    Outcome of training one genome.

    Attributes:
        genome (Genome): Trained genome with fitness set (the untrained input if training diverged).
        fitness (float): Summed validation cross-entropy, math.inf when diverged.
        accuracy (float): Validation accuracy in [0, 1].
        diverged (bool): A non-finite loss or weight was encountered.
        log (list): Per-epoch rows with LOG_COLUMNS keys.
        digest (str): SHA-256 of the training log.
        wall_time (float): Seconds spent training and evaluating.
    """

    genome: object
    fitness: float
    accuracy: float
    diverged: bool
    log: list = field(default_factory=list)
    digest: str = ""
    wall_time: float = 0.0


def training_seed(seed, generation_id):
    """Seed sequence shared by every worker training the same generation id."""
    return np.random.SeedSequence([int(seed), max(int(generation_id), -1) + 1])


def evaluate_phenotype(phenotype, image_set):
    """Infer-mode (summed cross-entropy, accuracy) over a whole image set."""
    total, correct = 0.0, 0
    for start in range(0, len(image_set), EVALUATION_CHUNK):
        images = image_set.images[start:start + EVALUATION_CHUNK]
        labels = image_set.labels[start:start + EVALUATION_CHUNK]
        probs = phenotype.forward(images, mode="infer")
        total += float(cross_entropy(probs, labels).astype(np.float64).sum())
        correct += int((probs.argmax(axis=1) == labels).sum())
    return total, correct / max(1, len(image_set))


def evaluate(genome, image_set, config):
    """
    Scores a trained genome on any split.

    Returns:
        tuple: (summed cross-entropy, accuracy)
    """
    phenotype = Phenotype(
        genome, dtype=config.dtype, relu_max=config.relu_max, relu_leak=config.relu_leak, bn_alpha=config.bn_alpha
    )
    return evaluate_phenotype(phenotype, image_set)


def _log_digest(rows):
    return hashlib.sha256(json.dumps(rows, sort_keys=True).encode("utf-8")).hexdigest()


def train(genome, train_set, validation_set, config, init="epigenetic", seed=0):
    """
    Trains a genome and computes its fitness.

    Args:
        genome (Genome): Genome with initialized weights.
        train_set (ImageSet): Training split.
        validation_set (ImageSet): Validation split used for the fitness.
        config (TrainConfig): Hyperparameters.
        init (str): "epigenetic" trains the weights carried by `genome`; "he" re-draws them first.
        seed (int): Base seed; combined with the genome's generation id.

    Returns:
        TrainResult: The trained genome carries the fitness; a diverged run returns
        the untrained genome with fitness math.inf.

    Raises:
        ConfigError: If the training split holds fewer images than one batch.
    """
    if len(train_set) < config.batch_size:
        raise ConfigError(f"{len(train_set)} training images cannot fill a batch of {config.batch_size}")
    start = time.time()
    init_seq, pool_seq, epoch_seq = training_seed(seed, genome.generation_id).spawn(3)
    if init == "he":
        genome = he_initialize(genome, np.random.default_rng(init_seq), config.init_variance)
    elif init != "epigenetic":
        raise ConfigError(f"unknown weight initialization {init!r}")

    phenotype = Phenotype(
        genome,
        dtype=config.dtype,
        rng=np.random.default_rng(pool_seq),
        relu_max=config.relu_max,
        relu_leak=config.relu_leak,
        bn_alpha=config.bn_alpha,
    )
    velocity = init_velocity(phenotype.params)
    epoch_seeds = np.random.default_rng(epoch_seq).integers(0, 2**63 - 1, size=config.epochs)
    mu, eta, lam = config.mu, config.eta, config.lambda_

    rows, diverged = [], False
    for epoch in range(config.epochs):
        losses = []
        for images, labels in batches(train_set, config.batch_size, int(epoch_seeds[epoch])):
            phenotype.forward(images, mode="train")
            loss, grads = phenotype.backward(labels)
            if not math.isfinite(loss):
                diverged = True
                break
            sgd_step(phenotype.params, grads, velocity, mu, eta, lam)
            losses.append(loss)
        if diverged or not all(np.isfinite(p).all() for p in phenotype.params.values()):
            diverged = True
            break

        val_loss, val_accuracy = evaluate_phenotype(phenotype, validation_set)
        if not math.isfinite(val_loss):
            diverged = True
            break
        row = dict(zip(LOG_COLUMNS, (epoch + 1, float(np.mean(losses)), val_loss, val_accuracy, mu, eta, lam)))
        rows.append(row)
        logger.debug(
            "Genome %s epoch %s: train %.4f, val %.4f (%.2f%%)",
            genome.generation_id, epoch + 1, row["train_loss"], val_loss, 100 * val_accuracy,
        )
        mu, eta, lam = schedule_step(mu, eta, lam, config)

    wall_time = time.time() - start
    if diverged:
        logger.info("Genome %s diverged during training.", genome.generation_id)
        return TrainResult(
            genome.with_fitness(math.inf, diverged=True), math.inf, 0.0, True, rows, _log_digest(rows), wall_time
        )

    if rows:
        fitness, accuracy = rows[-1]["val_loss"], rows[-1]["val_accuracy"]
    else:
        fitness, accuracy = evaluate_phenotype(phenotype, validation_set)
    trained = phenotype.to_genome().with_fitness(fitness)
    return TrainResult(trained, fitness, accuracy, False, rows, _log_digest(rows), wall_time)
