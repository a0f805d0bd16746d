"""
Fixed-capacity, fitness-ordered population with per-operator statistics.
"""

from enum import Enum

import numpy as np

from ..genome import enabled_conv_edges, enabled_nodes, enabled_pool_edges, from_document, to_document, weight_count
from ..mutation import ALL_TAGS


class InsertOutcome(Enum):
    INSERTED = "inserted"
    REJECTED = "rejected"
    DUPLICATE = "duplicate"
    UNKNOWN = "unknown"


def fitness_key(genome):
    """Ascending sort key: evaluated genomes by fitness, UNEVALUATED last, ties to the older genome."""
    if not genome.evaluated:
        return (1, 0.0, genome.generation_id)
    return (0, genome.fitness, genome.generation_id)


class OperatorStats:
    """Counts generated and inserted genomes per operator tag."""

    def __init__(self, counts=None):
        self.counts = {tag: [0, 0] for tag in ALL_TAGS}
        for tag, (generated, inserted) in (counts or {}).items():
            self.counts[tag] = [int(generated), int(inserted)]

    def record(self, tag, inserted):
        counts = self.counts.setdefault(tag, [0, 0])
        counts[0] += 1
        counts[1] += int(inserted)

    def rows(self):
        return [
            {
                "operator": tag,
                "generated": generated,
                "inserted": inserted,
                "insertion_rate": inserted / generated if generated else 0.0,
            }
            for tag, (generated, inserted) in self.counts.items()
        ]

    def total_generated(self):
        return sum(generated for generated, _ in self.counts.values())

    def to_dict(self):
        return {tag: list(counts) for tag, counts in self.counts.items()}


class Population:
    """
    Members sorted by `fitness_key`; never more than `capacity` of them.

    UNEVALUATED placeholders count toward the capacity and are the first to be
    ejected when a real result needs room.
    """

    def __init__(self, capacity, members=(), stats=None):
        self.capacity = capacity
        self._members = sorted(members, key=fitness_key)
        self.stats = stats or OperatorStats()

    def __len__(self):
        return len(self._members)

    @property
    def members(self):
        return list(self._members)

    @property
    def full(self):
        return len(self._members) >= self.capacity

    def best(self):
        evaluated = [m for m in self._members if m.evaluated]
        return evaluated[0] if evaluated else None

    def find(self, generation_id):
        return next((m for m in self._members if m.generation_id == generation_id), None)

    def _insert(self, genome):
        self._members.append(genome)
        self._members.sort(key=fitness_key)

    def add_placeholder(self, genome):
        """Stores an UNEVALUATED copy of an issued genome."""
        if self.full:
            raise ValueError("population is full")
        self._insert(genome.with_fitness(None))

    def offer(self, genome):
        """
        Offers an evaluated genome.

        A genome replaces its own placeholder if one is present; otherwise it
        takes a free slot or ejects the worst member if it is better. Diverged
        genomes are never inserted (their placeholder is dropped).

        Returns:
            bool: Whether the genome entered the population.
        """
        placeholder = next(
            (m for m in self._members if m.generation_id == genome.generation_id and not m.evaluated), None
        )
        if placeholder is not None:
            self._members.remove(placeholder)
        if genome.diverged or not genome.evaluated or not np.isfinite(genome.fitness):
            return False

        if len(self._members) < self.capacity:
            self._insert(genome)
            return True
        worst = self._members[-1]
        if fitness_key(genome) < fitness_key(worst):
            self._members.pop()
            self._insert(genome)
            return True
        return False

    def summary(self):
        """Min/avg/max of fitness (evaluated members), node, edge and weight counts."""

        def spread(values):
            if not values:
                return (None, None, None)
            return (min(values), sum(values) / len(values), max(values))

        fitness = [m.fitness for m in self._members if m.evaluated]
        columns = {
            "fitness": spread(fitness),
            "nodes": spread([len(enabled_nodes(m)) for m in self._members]),
            "conv_edges": spread([len(enabled_conv_edges(m)) for m in self._members]),
            "pool_edges": spread([len(enabled_pool_edges(m)) for m in self._members]),
            "weights": spread([weight_count(m) for m in self._members]),
        }
        summary = {"size": len(self._members)}
        for name, (low, mean, high) in columns.items():
            summary.update({f"{name}_min": low, f"{name}_avg": mean, f"{name}_max": high})
        return summary

    def to_dict(self):
        return {
            "capacity": self.capacity,
            "members": [to_document(m) for m in self._members],
            "stats": self.stats.to_dict(),
        }

    @classmethod
    def from_dict(cls, document):
        return cls(
            int(document["capacity"]),
            [from_document(m) for m in document["members"]],
            OperatorStats(document.get("stats")),
        )
