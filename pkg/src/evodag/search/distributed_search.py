"""
Ray-based asynchronous evolution driver.

A pool of `EvaluationWorker` actors trains genomes while the master loop
keeps every idle actor busy: as soon as one result comes back it is inserted
and the actor gets the next genome. Actors that die or become unschedulable
are killed and restarted, and their genome is released for reissue.
"""

import logging
import os
import time

import ray
import ray.exceptions

from ..dataset import fingerprint
from ..errors import DatasetError, SearchInterrupted
from ..genome import from_document, to_document
from .evaluation_worker import EvaluationWorker
from .master import open_master
from .stats_logger import log_search_stats_stdout, progress_listener, write_search_outputs

logger = logging.getLogger(__name__)


class DistributedSearch:
    """
    Master loop over a pool of Ray evaluation workers.

    Attributes:
        master (Master): The population owner.
        _workers (list): Actor handles, indexed by worker id.
        _init_refs (dict): Pending `init()` calls, object ref to worker id.
        _result_refs (dict): Pending `evaluate()` calls, object ref to worker id.
        _ready (set): Ids of initialized workers.
        _restarts (int): Number of actor restarts so far.
    """

    POLL_TIMEOUT = 0.1
    IDLE_SLEEP = 0.05

    def __init__(self, config, train_set, validation_set, workers=2, resume=False, preload=False, max_restarts=None):
        """
        Args:
            config (Config): Search configuration.
            train_set (ImageSet): Training split as loaded by the master.
            validation_set (ImageSet): Validation split as loaded by the master.
            workers (int): Number of actors.
            resume (bool): Continue from the checkpoint in the output directory.
            preload (bool): Ship the master's splits to the actors instead of having them read `config.dataset`.
            max_restarts (int): Actor restarts tolerated before the search is interrupted (default 3 per worker).
        """
        self.config = config
        self._fingerprint = fingerprint(train_set, validation_set)
        self._max_restarts = 3 * workers if max_restarts is None else max_restarts
        self._restarts = 0
        self.master = open_master(
            config,
            train_set.image_dims,
            train_set.num_classes,
            resume=resume,
            listener=progress_listener(config.search.output_dir),
        )
        self._worker_params = EvaluationWorker.Parameters(
            config.dataset,
            config.training,
            config.search.seed,
            train_set if preload else None,
            validation_set if preload else None,
        )
        self._workers = [self.__new_worker(worker_id) for worker_id in range(workers)]
        self._init_refs, self._result_refs, self._ready = {}, {}, set()
        for worker_id in range(workers):
            self.__init_worker(worker_id)

    def __new_worker(self, worker_id):
        return EvaluationWorker.options(num_cpus=1, num_gpus=0).remote(self._worker_params, worker_id)

    def __init_worker(self, worker_id):
        init_ref = self._workers[worker_id].init.remote()
        self._init_refs[init_ref] = worker_id

    def __restart_worker(self, worker_id):
        """Kills and recreates a worker; its outstanding genome becomes reissuable."""
        self._restarts += 1
        if self._restarts > self._max_restarts:
            self.__interrupt(f"{self._restarts} worker restarts exceed the limit of {self._max_restarts}")

        self._ready.discard(worker_id)
        self._result_refs = {ref: w_id for ref, w_id in self._result_refs.items() if w_id != worker_id}
        self._init_refs = {ref: w_id for ref, w_id in self._init_refs.items() if w_id != worker_id}
        self.master.release(str(worker_id))

        ray.kill(self._workers[worker_id])
        self._workers[worker_id] = self.__new_worker(worker_id)
        self.__init_worker(worker_id)
        logger.info("Worker %s restarted.", worker_id)

    def __interrupt(self, reason):
        directory = os.path.join(self.config.search.output_dir, "checkpoint")
        self.master.checkpoint(directory)
        logger.error("Search interrupted (%s); state saved to %s.", reason, directory)
        raise SearchInterrupted(reason)

    def __restore_workers(self):
        """Marks workers whose `init()` finished as ready."""
        if not self._init_refs:
            return

        ready_init_refs, _ = ray.wait(list(self._init_refs), num_returns=1, timeout=0)
        for init_ref in ready_init_refs:
            worker_id = self._init_refs.pop(init_ref)
            try:
                worker_fingerprint = ray.get(init_ref)
            except ray.exceptions.ActorUnschedulableError as e:
                logger.info("Worker %s is not schedulable during initialization: %s", worker_id, e.error_msg)
                self.__restart_worker(worker_id)
                continue
            except ray.exceptions.RayActorError as e:
                logger.info("Worker %s died during initialization: %s", worker_id, e.error_msg)
                self.__restart_worker(worker_id)
                continue
            if worker_fingerprint != self._fingerprint:
                raise DatasetError(f"worker {worker_id} loaded a different dataset than the master")
            self._ready.add(worker_id)
            logger.info("Worker %s initialized.", worker_id)

    def __assign_work(self):
        """
        Hands a genome to every idle worker.

        Returns:
            int: Number of genomes assigned.
        """
        busy = set(self._result_refs.values())
        assigned = 0
        for worker_id in sorted(self._ready - busy):
            genome = self.master.fulfill_work_request(str(worker_id))
            if genome is None:
                break
            result_ref = self._workers[worker_id].evaluate.remote(to_document(genome))
            self._result_refs[result_ref] = worker_id
            assigned += 1
            logger.debug("Assigned genome %s to worker %s.", genome.generation_id, worker_id)
        return assigned

    def __collect_results(self):
        """
        Inserts the results of finished evaluations.

        Returns:
            int: Number of results collected.
        """
        if not self._result_refs:
            return 0

        ready_result_refs, _ = ray.wait(list(self._result_refs), num_returns=1, timeout=self.POLL_TIMEOUT)
        for result_ref in ready_result_refs:
            worker_id = self._result_refs.pop(result_ref)
            try:
                document, wall_time, _ = ray.get(result_ref)
            except ray.exceptions.ActorUnschedulableError as e:
                logger.info("Worker %s is not schedulable: %s", worker_id, e.error_msg)
                self.__restart_worker(worker_id)
                continue
            except ray.exceptions.RayActorError as e:
                logger.info("Worker %s died: %s", worker_id, e.error_msg)
                self.__restart_worker(worker_id)
                continue
            self.master.insert_result(from_document(document), wall_time=wall_time)
        return len(ready_result_refs)

    def run(self):
        """
        Runs the search until the evaluation budget is spent.

        Returns:
            Genome: The best genome found (None if every evaluation diverged).

        Raises:
            SearchInterrupted: On Ctrl-C or when workers keep dying; a checkpoint is written first.
        """
        start = time.time()
        try:
            while not self.master.done:
                self.__restore_workers()
                assigned = self.__assign_work()
                collected = self.__collect_results()
                if not (assigned or collected or self._result_refs):
                    time.sleep(self.IDLE_SLEEP)
        except KeyboardInterrupt:
            self.__interrupt("keyboard interrupt")

        snapshot, best = write_search_outputs(self.master, self.config.search.output_dir)
        log_search_stats_stdout(snapshot, best, time.time() - start)
        return best

    def shutdown(self):
        for worker in self._workers:
            ray.kill(worker)
