"""
The asynchronous evolution master.

The master owns the population, the innovation registry, the RNG and the
operator statistics. Workers ask it for genomes and report trained genomes
back; neither call ever waits for an outstanding evaluation. All state sits
behind one lock, and the critical sections only generate or insert genomes;
training always happens outside.

Work that is not reported within `reissue_factor` median training times is
handed out again under the same generation id; the first result for a
generation id wins and later copies are ignored.
"""

import json
import logging
import os
import statistics
import threading
import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..genome import from_document, minimal_genome, to_document
from ..mutation import INITIAL_TAG, InnovationRegistry, generate_candidate
from ..training.initialization import initialize
from .config import config_from_dict, config_to_dict
from .population import InsertOutcome, Population

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "evodag.checkpoint"
CHECKPOINT_VERSION = 1
WALL_TIME_WINDOW = 50


@dataclass
class WorkItem:
    genome: object
    issued_at: float
    worker_id: str = ""
    released: bool = False


@dataclass
class StatsSnapshot:
    """Per-operator rows (operator, generated, inserted, insertion_rate) and a population summary."""

    operators: list
    population: dict
    evaluations_completed: int
    issued: int


class Master:
    """
    Population owner serving work requests and results.

    Args:
        config (Config): Full search configuration.
        input_dims (tuple): Image size of the dataset.
        num_classes (int): Number of classes.
        clock (callable): Monotonic time source (injectable for tests).
        listener (callable): Called with a progress row after every counted result.
    """

    def __init__(self, config, input_dims, num_classes, clock=time.monotonic, listener=None):
        self.config = config
        self.input_dims = tuple(input_dims)
        self.num_classes = num_classes
        self.clock = clock
        self.listener = listener

        self.population = Population(config.search.population_size)
        self.registry = None
        self.rng = np.random.default_rng(config.search.seed)
        self.next_generation_id = 0
        self.issued = 0
        self.evaluations_completed = 0
        self.filled = False

        self._lock = threading.Lock()
        self._checkpoint_lock = threading.Lock()
        self._checkpoint_written = -1
        self._outstanding = {}
        self._completed = set()
        self._wall_times = deque(maxlen=WALL_TIME_WINDOW)
        self._last_checkpoint = 0

    # ------------------------------------------------------------------ work requests

    @property
    def done(self):
        """All evaluations completed, or the budget is issued and nothing is outstanding."""
        with self._lock:
            return self.evaluations_completed >= self.config.search.max_evaluations or (
                self.issued >= self.config.search.max_evaluations and not self._outstanding
            )

    def reissue_timeout(self):
        if not self._wall_times:
            return self.config.search.initial_reissue_timeout
        return self.config.search.reissue_factor * statistics.median(self._wall_times)

    def _reissuable(self):
        now, timeout = self.clock(), self.reissue_timeout()
        stale = [
            (item.issued_at, gid) for gid, item in self._outstanding.items()
            if item.released or now - item.issued_at > timeout
        ]
        return min(stale)[1] if stale else None

    def _initialized(self, candidate):
        parents = [p for p in (self.population.find(gid) for gid in candidate.parents) if p is not None]
        return initialize(
            candidate, parents, self.rng, self.config.search.weight_init, self.config.training.init_variance
        )

    def _next_candidate(self):
        if not len(self.population):
            genome = minimal_genome(self.input_dims, self.num_classes)
            if self.registry is None:
                self.registry = InnovationRegistry.for_genome(genome)
            return self._initialized(genome.with_genes(generated_by=INITIAL_TAG)), True
        if not self.filled and not self.population.full:
            candidate = generate_candidate(
                self.population.members, self.config.operators, self.registry, self.rng, allow_crossover=False
            )
            return self._initialized(candidate), True
        self.filled = True
        candidate = generate_candidate(self.population.members, self.config.operators, self.registry, self.rng)
        return self._initialized(candidate), False

    def fulfill_work_request(self, worker_id=""):
        """
        Hands out the next genome to evaluate.

        Timed-out (or released) outstanding work is reissued first. Otherwise the
        first request gets the minimal genome, requests during the fill phase get
        mutants whose UNEVALUATED copies are inserted, and later requests get
        mutation or crossover candidates.

        Returns:
            Genome: Initialized genome with a generation id, or None when there is nothing to hand out right now.
        """
        with self._lock:
            gid = self._reissuable()
            if gid is not None:
                item = self._outstanding[gid]
                logger.info("Reissuing genome %s (was with %s).", gid, item.worker_id or "an unknown worker")
                item.issued_at, item.worker_id, item.released = self.clock(), worker_id, False
                return item.genome

            if self.issued >= self.config.search.max_evaluations:
                return None

            genome, placeholder = self._next_candidate()
            genome = genome.with_genes(generation_id=self.next_generation_id)
            self.next_generation_id += 1
            self.issued += 1
            if placeholder:
                self.population.add_placeholder(genome)
            self._outstanding[genome.generation_id] = WorkItem(genome, self.clock(), worker_id)
            logger.debug("Issued genome %s (%s) to %s.", genome.generation_id, genome.generated_by, worker_id)
            return genome

    def release(self, worker_id):
        """Marks the work of a lost worker as immediately reissuable."""
        with self._lock:
            for item in self._outstanding.values():
                if item.worker_id == worker_id:
                    item.released = True

    # ------------------------------------------------------------------ results

    def insert_result(self, genome, wall_time=None):
        """
        Inserts a trained genome reported by a worker.

        Returns:
            InsertOutcome: INSERTED or REJECTED for the first result of an issued
            genome; DUPLICATE for repeated results; UNKNOWN for genomes that were
            never issued or do not match what was issued. Only the first two
            update the statistics.
        """
        snapshot = None
        with self._lock:
            gid = genome.generation_id
            if gid in self._completed:
                logger.info("Ignoring duplicate result for genome %s.", gid)
                return InsertOutcome.DUPLICATE
            item = self._outstanding.get(gid)
            if item is None or not genome.same_structure(item.genome):
                logger.info("Ignoring result for unknown genome %s.", gid)
                return InsertOutcome.UNKNOWN

            del self._outstanding[gid]
            self._completed.add(gid)
            self.evaluations_completed += 1
            if wall_time is not None:
                self._wall_times.append(wall_time)

            tag = item.genome.generated_by
            genome = genome.with_genes(generated_by=tag, parents=item.genome.parents)
            inserted = self.population.offer(genome)
            self.population.stats.record(tag, inserted)
            logger.info(
                "Result: generation_id=%s operator=%s fitness=%s inserted=%s", gid, tag, genome.fitness, inserted
            )

            if self.listener is not None:
                self.listener(self._progress_row(genome, tag, inserted))
            interval = self.config.search.checkpoint_interval
            if interval and self.evaluations_completed - self._last_checkpoint >= interval:
                snapshot = self._checkpoint_documents()

        if snapshot is not None:
            self._write_checkpoint(os.path.join(self.config.search.output_dir, "checkpoint"), snapshot)
        return InsertOutcome.INSERTED if inserted else InsertOutcome.REJECTED

    def _progress_row(self, genome, tag, inserted):
        return {
            "evaluation": self.evaluations_completed,
            "generation_id": genome.generation_id,
            "operator": tag,
            "fitness": genome.fitness,
            "inserted": inserted,
            **self.population.summary(),
        }

    # ------------------------------------------------------------------ stats

    def best(self):
        with self._lock:
            return self.population.best()

    def snapshot_stats(self):
        with self._lock:
            return StatsSnapshot(
                operators=self.population.stats.rows(),
                population=self.population.summary(),
                evaluations_completed=self.evaluations_completed,
                issued=self.issued,
            )

    # ------------------------------------------------------------------ checkpoints

    def checkpoint(self, directory):
        """Writes state.json, population.json and registry.json atomically into `directory`."""
        with self._lock:
            snapshot = self._checkpoint_documents()
        self._write_checkpoint(directory, snapshot)

    def _checkpoint_documents(self):
        """Copies the master state into JSON documents; the caller holds the state lock."""
        state = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": config_to_dict(self.config),
            "input_dims": list(self.input_dims),
            "num_classes": self.num_classes,
            "next_generation_id": self.next_generation_id,
            "issued": self.issued,
            "evaluations_completed": self.evaluations_completed,
            "filled": self.filled,
            "rng": self.rng.bit_generator.state,
            "completed": sorted(self._completed),
            "outstanding": [to_document(item.genome) for item in self._outstanding.values()],
            "wall_times": list(self._wall_times),
        }
        self._last_checkpoint = self.evaluations_completed
        return {
            "state.json": state,
            "population.json": self.population.to_dict(),
            "registry.json": None if self.registry is None else self.registry.to_dict(),
        }

    def _write_checkpoint(self, directory, snapshot):
        evaluations = snapshot["state.json"]["evaluations_completed"]
        with self._checkpoint_lock:
            # a slower writer must not overwrite a newer snapshot
            if evaluations < self._checkpoint_written:
                return
            os.makedirs(directory, exist_ok=True)
            for name, document in snapshot.items():
                if document is not None:
                    _write_json_atomic(os.path.join(directory, name), document)
            self._checkpoint_written = evaluations
        logger.info("Checkpoint written to %s after %s evaluations.", directory, evaluations)

    @classmethod
    def load_checkpoint(cls, directory, config=None, clock=time.monotonic, listener=None):
        """
        Restores a master from a checkpoint directory.

        Outstanding work is marked released so it is reissued first. A `config`
        overrides the stored one (e.g. a larger evaluation budget).

        Raises:
            ConfigError: If the directory does not hold a readable checkpoint.
        """
        try:
            state = _read_json(os.path.join(directory, "state.json"))
            population = _read_json(os.path.join(directory, "population.json"))
            registry_path = os.path.join(directory, "registry.json")
            registry = _read_json(registry_path) if os.path.exists(registry_path) else None
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read checkpoint {directory}: {e}") from e
        if state.get("format") != CHECKPOINT_FORMAT or state.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(f"{directory} does not contain a supported checkpoint")

        master = cls(
            config or config_from_dict(state["config"]), state["input_dims"], state["num_classes"], clock, listener
        )
        master.population = Population.from_dict(population)
        master.population.capacity = master.config.search.population_size
        master.registry = InnovationRegistry.from_dict(registry) if registry is not None else None
        master.rng.bit_generator.state = state["rng"]
        master.next_generation_id = int(state["next_generation_id"])
        master.issued = int(state["issued"])
        master.evaluations_completed = int(state["evaluations_completed"])
        master.filled = bool(state["filled"])
        master._completed = set(state["completed"])
        master._wall_times.extend(state["wall_times"])
        master._last_checkpoint = master.evaluations_completed
        for document in state["outstanding"]:
            genome = from_document(document)
            master._outstanding[genome.generation_id] = WorkItem(genome, clock(), "", released=True)
        logger.info("Resumed from %s at %s evaluations.", directory, master.evaluations_completed)
        return master


def _write_json_atomic(path, document):
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "w", encoding="utf-8") as f:
        json.dump(document, f, allow_nan=False)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp_path, path)


def _read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def open_master(config, input_dims, num_classes, resume=False, listener=None):
    """
    Creates a fresh master, or resumes the checkpoint in `config.search.output_dir` when `resume` is set.

    The resumed master runs under `config`, so budgets may be raised on resume.
    """
    if resume:
        directory = os.path.join(config.search.output_dir, "checkpoint")
        master = Master.load_checkpoint(directory, config=config, listener=listener)
        if tuple(master.input_dims) != tuple(input_dims) or master.num_classes != num_classes:
            raise ConfigError(f"checkpoint {directory} was written for a different dataset shape")
        return master
    return Master(config, input_dims, num_classes, listener=listener)
