"""
Weight initialization of issued genomes.

Two strategies are supported:
- he: every filter is drawn from a zero-mean Gaussian scaled by the fan-in of
  its destination node; pooling scales start at 1 and batch norm is reset.
- epigenetic: genes the child shares with a trained parent copy the parent's
  weights verbatim; everything else falls back to the He rule.
"""

import math
from dataclasses import replace

import numpy as np

from ..errors import ConfigError
from ..genome import conv_filter_dims

VARIANCE_RULES = ("sqrt", "he")


def weight_std(fan_in, rule="sqrt"):
    """
    Standard deviation of a fresh weight for a node with `fan_in` incoming weights.

    The "sqrt" rule uses variance sqrt(2/n), "he" the usual variance 2/n.
    """
    if rule not in VARIANCE_RULES:
        raise ConfigError(f"unknown variance rule {rule!r}, expected one of {VARIANCE_RULES}")
    n = max(1, fan_in)
    variance = math.sqrt(2.0 / n) if rule == "sqrt" else 2.0 / n
    return math.sqrt(variance)


def fan_in(genome, node_id):
    """Number of weights on enabled edges entering `node_id`."""
    return sum(e.parameter_count for e in genome.incoming(node_id) if e.enabled)


def _draw_filter(genome, edge, rng, rule, fan_ins):
    src, dst = genome.nodes[edge.in_node], genome.nodes[edge.out_node]
    shape = conv_filter_dims(src.size, dst.size)
    n = fan_ins.get(edge.out_node) or int(np.prod(shape))
    return rng.normal(0.0, weight_std(n, rule), size=shape)


def he_initialize(genome, rng, rule="sqrt"):
    """
    Re-draws every weight of a genome.

    Args:
        genome (Genome): Genome whose structure is kept.
        rng (numpy.random.Generator): Random source; draws happen in edge id order.
        rule (str): Variance rule, "sqrt" or "he".

    Returns:
        Genome: Copy with fresh filters, unit pooling scales and default batch norm.
    """
    fan_ins = {node_id: fan_in(genome, node_id) for node_id in genome.nodes}
    edges = {}
    for edge_id, edge in genome.edges.items():
        if edge.is_pooling:
            edges[edge_id] = _with_weights(edge, scale=1.0)
        else:
            edges[edge_id] = _with_weights(edge, filter=_draw_filter(genome, edge, rng, rule, fan_ins))
    nodes = {node_id: node.with_default_batch_norm() for node_id, node in genome.nodes.items()}
    return genome.with_genes(nodes=nodes, edges=edges)


def epigenetic_initialize(child, parents, rng, rule="sqrt"):
    """
    Initializes a child from the trained weights of its parents.

    For every gene the first parent holding the same innovation id (and, for
    edges, the same kind) is its source. Filters of equal shape are copied
    bit-exactly; resized filters keep the overlapping top-left block and draw
    the rest. Genes without a source are drawn with the He rule.

    Args:
        child (Genome): Freshly generated candidate.
        parents (list): Parent genomes, more fit first.
        rng (numpy.random.Generator): Random source for genes without a source.
        rule (str): Variance rule for fresh weights.
    """
    fan_ins = {node_id: fan_in(child, node_id) for node_id in child.nodes}

    edges = {}
    for edge_id, edge in child.edges.items():
        source = next(
            (p.edges[edge_id] for p in parents if edge_id in p.edges and p.edges[edge_id].kind is edge.kind), None
        )
        if edge.is_pooling:
            edges[edge_id] = _with_weights(edge, scale=source.scale if source is not None else 1.0)
        elif source is not None and source.filter.shape == edge.filter.shape:
            edges[edge_id] = _with_weights(edge, filter=source.filter)
        else:
            weights = _draw_filter(child, edge, rng, rule, fan_ins)
            if source is not None:
                rows = min(weights.shape[0], source.filter.shape[0])
                cols = min(weights.shape[1], source.filter.shape[1])
                weights[:rows, :cols] = source.filter[:rows, :cols]
            edges[edge_id] = _with_weights(edge, filter=weights)

    nodes = {}
    for node_id, node in child.nodes.items():
        source = next((p.nodes[node_id] for p in parents if node_id in p.nodes and p.nodes[node_id].kind is node.kind), None)
        if source is None:
            nodes[node_id] = node.with_default_batch_norm()
        else:
            nodes[node_id] = _with_batch_norm(node, source)
    return child.with_genes(nodes=nodes, edges=edges)


def initialize(child, parents, rng, strategy="epigenetic", rule="sqrt"):
    """Dispatches to the configured strategy; genomes without parents are always He-initialized."""
    if strategy == "epigenetic" and parents:
        return epigenetic_initialize(child, parents, rng, rule)
    if strategy not in ("epigenetic", "he"):
        raise ConfigError(f"unknown weight initialization {strategy!r}")
    return he_initialize(child, rng, rule)


def _with_weights(edge, **weights):
    return replace(edge, **weights)


def _with_batch_norm(node, source):
    return replace(
        node,
        bn_gamma=source.bn_gamma,
        bn_beta=source.bn_beta,
        bn_running_mean=source.bn_running_mean,
        bn_running_var=source.bn_running_var,
    )
