"""
Phenotype compilation and training of genomes.

Modules:
- initialization: He and epigenetic weight initialization
- pooling: fractional max pooling partitions and gather/scatter plans
- phenotype: depth-ordered forward and backward propagation
- optimizer: Nesterov SGD step and per-epoch schedule
- trainer: TrainConfig, train() and evaluate()
"""

from .initialization import epigenetic_initialize, he_initialize, initialize
from .pooling import pooling_partition
from .phenotype import Phenotype
from .optimizer import schedule_step, sgd_step
from .trainer import TrainConfig, TrainResult, evaluate, train

__all__ = [
    "Phenotype",
    "TrainConfig",
    "TrainResult",
    "epigenetic_initialize",
    "evaluate",
    "he_initialize",
    "initialize",
    "pooling_partition",
    "schedule_step",
    "sgd_step",
    "train",
]
