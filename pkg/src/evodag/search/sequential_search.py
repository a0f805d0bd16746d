"""
Single-process evolution driver.

One in-process worker asks the master for a genome, trains it and reports it
back before asking again, so a run is a deterministic function of the seed.
"""

import logging
import time

from ..training.trainer import train
from .master import open_master
from .stats_logger import log_search_stats_stdout, progress_listener, write_search_outputs

logger = logging.getLogger(__name__)

WORKER_ID = "local"


class SequentialSearch:
    """
    A sequential evolution driver.

    Attributes:
        config (Config): Search configuration.
        train_set (ImageSet): Training split.
        validation_set (ImageSet): Validation split scoring the fitness.
        master (Master): The population owner.
    """

    def __init__(self, config, train_set, validation_set, resume=False, trainer=train):
        """
        Args:
            config (Config): Search configuration.
            train_set (ImageSet): Training split.
            validation_set (ImageSet): Validation split.
            resume (bool): Continue from the checkpoint in the output directory.
            trainer (callable): Training function with the signature of `evodag.training.train`.
        """
        self.config = config
        self.train_set, self.validation_set = train_set, validation_set
        self._trainer = trainer
        self.master = open_master(
            config,
            train_set.image_dims,
            train_set.num_classes,
            resume=resume,
            listener=progress_listener(config.search.output_dir),
        )

    def step(self):
        """
        Evaluates one genome.

        Returns:
            TrainResult: The training result, or None if the master had nothing to hand out.
        """
        genome = self.master.fulfill_work_request(WORKER_ID)
        if genome is None:
            return None
        result = self._trainer(
            genome, self.train_set, self.validation_set, self.config.training, init="epigenetic",
            seed=self.config.search.seed,
        )
        self.master.insert_result(result.genome, wall_time=result.wall_time)
        return result

    def run(self):
        """
        Runs the search until the evaluation budget is spent.

        Returns:
            Genome: The best genome found (None if every evaluation diverged).
        """
        start = time.time()
        while not self.master.done:
            if self.step() is None:
                break
        return self.finish(time.time() - start)

    def finish(self, elapsed):
        snapshot, best = write_search_outputs(self.master, self.config.search.output_dir)
        log_search_stats_stdout(snapshot, best, elapsed)
        return best
