"""
evodag: asynchronous neuro-evolution of DAG-structured convolutional networks.

A master keeps a fixed-size population of CNN genomes ordered by validation
cross-entropy. Workers request genomes, train them with mini-batch SGD and
report them back; every result that beats the worst member replaces it.
Genomes grow by mutation (edge, node and pooling operators) and crossover,
and children inherit their parents' trained weights.

Main modules:
- cli: command-line interface and main entry point
- genome: node/edge genes, invariants, archives and DOT export
- mutation: innovation registry, mutation operators, crossover, candidate generation
- dataset: IDX loading, splits and batches
- training: phenotype forward/backward pass, Nesterov SGD, weight initialization
- search: population, master, sequential and Ray-based drivers, statistics
- protocol: TCP master/worker exchange
- errors: exception hierarchy
"""

__version__ = "1.0.0"
__author__ = "evodag developers"
