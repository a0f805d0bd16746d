import math

import pytest

from evodag.genome import minimal_genome
from evodag.search.population import InsertOutcome, OperatorStats, Population, fitness_key


def member(generation_id, fitness=None, diverged=False):
    genome = minimal_genome((4, 4), 2).with_genes(generation_id=generation_id, generated_by="split_edge")
    return genome.with_fitness(fitness, diverged=diverged)


def test_fitness_key_orders_unevaluated_last():
    genomes = [member(0), member(1, 5.0), member(2, 3.0), member(3, 3.0)]
    assert [g.generation_id for g in sorted(genomes, key=fitness_key)] == [2, 3, 1, 0]


def test_offer_fills_free_slots():
    population = Population(3)
    assert population.offer(member(0, 4.0))
    assert population.offer(member(1, 2.0))
    assert [m.generation_id for m in population.members] == [1, 0]
    assert population.best().generation_id == 1


def test_offer_ejects_the_worst_member():
    population = Population(2, [member(0, 4.0), member(1, 2.0)])

    assert not population.offer(member(2, 5.0))
    assert population.offer(member(3, 3.0))
    assert [m.generation_id for m in population.members] == [1, 3]


def test_ties_favor_the_older_genome():
    population = Population(2, [member(0, 4.0), member(1, 2.0)])
    assert not population.offer(member(5, 4.0))


def test_diverged_genomes_are_never_inserted():
    population = Population(3)
    population.add_placeholder(member(0))

    assert not population.offer(member(0, math.inf, diverged=True))
    assert len(population) == 0
    assert not population.offer(member(1, math.nan))


def test_result_replaces_its_placeholder():
    population = Population(2)
    population.add_placeholder(member(0))
    population.add_placeholder(member(1))
    assert population.full
    assert population.best() is None

    assert population.offer(member(1, 7.0))
    assert len(population) == 2
    assert population.find(1).fitness == 7.0
    assert not population.find(0).evaluated


def test_add_placeholder_needs_room():
    population = Population(2, [member(0, 1.0), member(1, 2.0)])
    with pytest.raises(ValueError):
        population.add_placeholder(member(2))


def test_summary():
    population = Population(3, [member(0, 1.0), member(1, 3.0), member(2)])
    summary = population.summary()

    assert summary["size"] == 3
    assert (summary["fitness_min"], summary["fitness_avg"], summary["fitness_max"]) == (1.0, 2.0, 3.0)
    assert summary["nodes_max"] == 3
    assert summary["conv_edges_avg"] == 2
    assert summary["pool_edges_max"] == 0
    assert summary["weights_min"] == 32


def test_population_document():
    population = Population(3, [member(0, 1.0), member(1)])
    population.stats.record("split_edge", True)
    restored = Population.from_dict(population.to_dict())

    assert restored.capacity == 3
    assert [m.generation_id for m in restored.members] == [0, 1]
    assert not restored.find(1).evaluated
    assert restored.stats.counts["split_edge"] == [1, 1]


def test_operator_stats():
    stats = OperatorStats()
    stats.record("add_node", True)
    stats.record("add_node", False)
    stats.record("crossover", False)

    rows = {row["operator"]: row for row in stats.rows()}
    assert rows["add_node"] == {"operator": "add_node", "generated": 2, "inserted": 1, "insertion_rate": 0.5}
    assert rows["crossover"]["insertion_rate"] == 0.0
    assert rows["merge_node"]["generated"] == 0
    assert stats.total_generated() == 3


def test_insert_outcome_values():
    assert {o.value for o in InsertOutcome} == {"inserted", "rejected", "duplicate", "unknown"}
