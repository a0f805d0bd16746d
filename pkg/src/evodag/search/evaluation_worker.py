"""
Ray actor training genomes for the distributed search.

Every actor loads the dataset once in `init()` and then trains whatever genome
the master hands it. Genomes travel as archive documents so that weights stay
bit-exact across processes.
"""

import logging

import ray

from ..dataset import fingerprint
from ..genome import from_document, to_document
from ..training.trainer import train

logger = logging.getLogger(__name__)


@ray.remote
class EvaluationWorker:
    """
    A worker process holding the training and validation splits.

    Attributes:
        _parameters (Parameters): Worker configuration.
        _worker_id (int): Index of the worker in the pool.
        _train_set, _validation_set (ImageSet): Loaded in `init()`.
    """

    class Parameters:
        """
        Configuration of an evaluation worker.

        Attributes:
            dataset (DatasetConfig): Where to load the data from.
            training (TrainConfig): Backpropagation hyperparameters.
            seed (int): Base training seed.
            train_set, validation_set (ImageSet): Preloaded splits; when given, `dataset` is not read.
        """

        def __init__(self, dataset, training, seed, train_set=None, validation_set=None):
            self.dataset = dataset
            self.training = training
            self.seed = seed
            self.train_set = train_set
            self.validation_set = validation_set

    def __init__(self, parameters, worker_id):
        self._parameters = parameters
        self._worker_id = worker_id
        self._train_set, self._validation_set = None, None

    def init(self):
        """
        Loads the dataset.

        Returns:
            str: Fingerprint of the loaded splits.
        """
        if self._parameters.train_set is not None:
            self._train_set, self._validation_set = self._parameters.train_set, self._parameters.validation_set
        else:
            self._train_set, self._validation_set = self._parameters.dataset.load()
        logger.info("Worker %s loaded %s training images.", self._worker_id, len(self._train_set))
        return fingerprint(self._train_set, self._validation_set)

    def evaluate(self, document):
        """
        Trains a genome.

        Args:
            document (dict): Genome archive document.

        Returns:
            tuple: (trained genome document, wall time in seconds, validation accuracy)
        """
        genome = from_document(document)
        result = train(
            genome, self._train_set, self._validation_set, self._parameters.training, init="epigenetic",
            seed=self._parameters.seed,
        )
        return to_document(result.genome), result.wall_time, result.accuracy
