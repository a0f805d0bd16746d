"""
Structural operators on CNN genomes.

Every operator takes a source genome and returns a new, UNEVALUATED child
tagged with the operator name. Operators are structural only: genes copied
from the source keep their weights, genes without a counterpart carry zero
filters (or a unit pooling scale) that the weight-initialization pass fills
in before the child is trained.

Operators report `OperatorInapplicable` when the genome offers nothing to act
on and `CandidateRejected` when the child could not exist (e.g. a feature map
smaller than 1x1). Reachability is checked by `generate_candidate`, which
discards and retries.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CandidateRejected, ConfigError, DegeneratePopulationError, GenomeError, OperatorInapplicable
from .genome import (
    EdgeGene,
    EdgeKind,
    NodeGene,
    NodeKind,
    conv_filter_dims,
    pooling_valid,
    resize_filter,
    validate,
    zero_weights,
)

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 1000

EDGE_OPERATOR_WEIGHTS = {
    "disable_edge": 2.5,
    "enable_edge": 2.5,
    "split_edge": 3.0,
    "add_edge": 3.0,
    "change_size": 2.0,
    "change_size_x": 1.0,
    "change_size_y": 1.0,
}
NODE_OPERATOR_WEIGHTS = {
    "add_node": 3.0,
    "split_node": 2.0,
    "merge_node": 2.0,
    "disable_node": 1.5,
    "enable_node": 1.5,
}
POOLING_OPERATOR_WEIGHTS = {"alter_edge_type": 1.0}

OPERATOR_TAGS = (*EDGE_OPERATOR_WEIGHTS, *NODE_OPERATOR_WEIGHTS, *POOLING_OPERATOR_WEIGHTS)
CROSSOVER_TAG = "crossover"
INITIAL_TAG = "initial"
ALL_TAGS = (INITIAL_TAG, *OPERATOR_TAGS, CROSSOVER_TAG)


class InnovationRegistry:
    """
    Assigns stable innovation ids to structural novelties.

    Edges are keyed by their ordered (in, out) node pair, so the same
    connection gets the same id in every genome. Nodes created by splitting an
    edge are keyed by the split edge's id; every other new node gets a fresh id.
    """

    def __init__(self, next_node_id=0, next_edge_id=0, edge_innovations=None, split_node_innovations=None):
        self.next_node_id = next_node_id
        self.next_edge_id = next_edge_id
        self.edge_innovations = dict(edge_innovations or {})
        self.split_node_innovations = dict(split_node_innovations or {})

    @classmethod
    def for_genome(cls, genome):
        """Seeds a registry with the genes of a (minimal) genome."""
        return cls(
            next_node_id=max(genome.nodes) + 1,
            next_edge_id=max(genome.edges) + 1,
            edge_innovations={(e.in_node, e.out_node): e.innovation_id for e in genome.edges.values()},
        )

    def fresh_node_id(self):
        node_id = self.next_node_id
        self.next_node_id += 1
        return node_id

    def edge_id(self, in_node, out_node):
        key = (in_node, out_node)
        if key not in self.edge_innovations:
            self.edge_innovations[key] = self.next_edge_id
            self.next_edge_id += 1
        return self.edge_innovations[key]

    def split_node_id(self, edge_id):
        if edge_id not in self.split_node_innovations:
            self.split_node_innovations[edge_id] = self.fresh_node_id()
        return self.split_node_innovations[edge_id]

    def to_dict(self):
        return {
            "next_node_id": self.next_node_id,
            "next_edge_id": self.next_edge_id,
            "edge_innovations": [[a, b, i] for (a, b), i in sorted(self.edge_innovations.items())],
            "split_node_innovations": [[e, n] for e, n in sorted(self.split_node_innovations.items())],
        }

    @classmethod
    def from_dict(cls, document):
        return cls(
            next_node_id=int(document["next_node_id"]),
            next_edge_id=int(document["next_edge_id"]),
            edge_innovations={(int(a), int(b)): int(i) for a, b, i in document["edge_innovations"]},
            split_node_innovations={int(e): int(n) for e, n in document["split_node_innovations"]},
        )


@dataclass
class OperatorConfig:
    """
    Operator selection and crossover settings.

    Attributes:
        node_ops_enabled (bool): Allow add/split/merge/disable/enable node operators.
        pooling_enabled (bool): Allow pooling edges and the alter-edge-type operator.
        crossover_rate (float): Probability of producing a candidate by crossover.
        more_fit_rate (float): Probability of enabling an edge present only in the more fit parent.
        less_fit_rate (float): Probability of enabling an edge present only in the less fit parent.
        size_deltas (tuple): Feature map size changes drawn by the change-size operators.
        weights (dict): Raw selection weights overriding the defaults, keyed by operator tag.
    """

    node_ops_enabled: bool = True
    pooling_enabled: bool = False
    crossover_rate: float = 0.2
    more_fit_rate: float = 0.8
    less_fit_rate: float = 0.4
    size_deltas: tuple = (-2, -1, 1, 2)
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        self.size_deltas = tuple(int(d) for d in self.size_deltas)
        self.weights = dict(self.weights)
        for name in ("crossover_rate", "more_fit_rate", "less_fit_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if not self.size_deltas or 0 in self.size_deltas:
            raise ConfigError(f"size_deltas must be nonempty and nonzero, got {self.size_deltas}")
        unknown = set(self.weights) - set(OPERATOR_TAGS)
        if unknown:
            raise ConfigError(f"unknown operators in weights: {sorted(unknown)}")
        if any(w < 0 for w in self.weights.values()):
            raise ConfigError("operator weights must be nonnegative")
        if sum(self.raw_weights().values()) <= 0:
            raise ConfigError("at least one active operator needs a positive weight")

    def raw_weights(self):
        raw = dict(EDGE_OPERATOR_WEIGHTS)
        if self.node_ops_enabled:
            raw.update(NODE_OPERATOR_WEIGHTS)
        if self.pooling_enabled:
            raw.update(POOLING_OPERATOR_WEIGHTS)
        return {tag: float(self.weights.get(tag, w)) for tag, w in raw.items()}

    def operator_weights(self):
        """Returns selection probabilities of the active operators, summing to 1."""
        raw = self.raw_weights()
        total = math.fsum(raw.values())
        return {tag: w / total for tag, w in raw.items()}

    def to_dict(self):
        return {
            "node_ops_enabled": self.node_ops_enabled,
            "pooling_enabled": self.pooling_enabled,
            "crossover_rate": self.crossover_rate,
            "more_fit_rate": self.more_fit_rate,
            "less_fit_rate": self.less_fit_rate,
            "size_deltas": list(self.size_deltas),
            "weights": dict(self.weights),
        }


# --------------------------------------------------------------------------- helpers


def _pick(rng, items):
    return items[int(rng.integers(len(items)))]


def _child(source, tag, nodes, edges, parents=None):
    return source.with_genes(
        nodes=nodes,
        edges=edges,
        fitness=None,
        diverged=False,
        generated_by=tag,
        generation_id=-1,
        parents=(source.generation_id,) if parents is None else parents,
    )


def _edge_kind(rng, pooling, src, dst):
    """Pooling with probability 0.5 when enabled and the connection can be pooled."""
    if pooling and pooling_valid(src, dst) and rng.random() < 0.5:
        return EdgeKind.POOLING
    return EdgeKind.CONVOLUTIONAL


def _new_edge(edge_id, src, dst, kind):
    return EdgeGene(edge_id, src.innovation_id, dst.innovation_id, kind, True, **zero_weights(kind, src, dst))


def _enabled_hidden(genome):
    return [n for n in genome.hidden_nodes if n.enabled]


def _resized_edges(edges, nodes):
    """Adapts edge weights to the sizes of `nodes`; rejects pooling edges that can no longer pool."""
    resized = {}
    for edge in edges.values():
        src, dst = nodes[edge.in_node], nodes[edge.out_node]
        if edge.is_pooling:
            if not pooling_valid(src, dst):
                raise CandidateRejected(f"pooling edge {edge.innovation_id} cannot connect {src.size} -> {dst.size}")
        else:
            shape = conv_filter_dims(src.size, dst.size)
            if edge.filter.shape != shape:
                edge = replace(edge, filter=resize_filter(edge.filter, shape))
        resized[edge.innovation_id] = edge
    return resized


def _disable_node_and_edges(nodes, edges, node_id):
    nodes[node_id] = replace(nodes[node_id], enabled=False)
    for edge in list(edges.values()):
        if edge.enabled and node_id in (edge.in_node, edge.out_node):
            edges[edge.innovation_id] = replace(edge, enabled=False)


# --------------------------------------------------------------------------- edge operators


def disable_edge(genome, rng):
    """Disables one enabled edge chosen uniformly at random."""
    candidates = genome.enabled_edges
    if not candidates:
        raise OperatorInapplicable("no enabled edge to disable")
    edge = _pick(rng, candidates)
    edges = dict(genome.edges)
    edges[edge.innovation_id] = replace(edge, enabled=False)
    return _child(genome, "disable_edge", genome.nodes, edges)


def enable_edge(genome, rng):
    """Enables one disabled edge (whose endpoints are both enabled) chosen uniformly at random."""
    candidates = [
        e for e in genome.disabled_edges if genome.nodes[e.in_node].enabled and genome.nodes[e.out_node].enabled
    ]
    if not candidates:
        raise OperatorInapplicable("no disabled edge to enable")
    edge = _pick(rng, candidates)
    edges = dict(genome.edges)
    edges[edge.innovation_id] = replace(edge, enabled=True)
    return _child(genome, "enable_edge", genome.nodes, edges)


def split_edge(genome, registry, rng, pooling=False):
    """
    Replaces an enabled edge by a new node halfway between its endpoints.

    The new node gets the ceiling of the averaged sizes and the average depth;
    the split edge is disabled and two new edges route through the new node.
    """
    candidates = genome.enabled_edges
    if not candidates:
        raise OperatorInapplicable("no enabled edge to split")
    edge = _pick(rng, candidates)
    src, dst = genome.nodes[edge.in_node], genome.nodes[edge.out_node]

    depth = (src.depth + dst.depth) / 2.0
    if not src.depth < depth < dst.depth:
        raise CandidateRejected(f"no room for a node between depths {src.depth} and {dst.depth}")

    node_id = registry.split_node_id(edge.innovation_id)
    if node_id in genome.nodes:
        node_id = registry.fresh_node_id()
    node = NodeGene(
        node_id,
        NodeKind.HIDDEN,
        depth,
        math.ceil((src.size_x + dst.size_x) / 2),
        math.ceil((src.size_y + dst.size_y) / 2),
    )

    nodes = {**genome.nodes, node_id: node}
    edges = dict(genome.edges)
    edges[edge.innovation_id] = replace(edge, enabled=False)
    for a, b in ((src, node), (node, dst)):
        new = _new_edge(registry.edge_id(a.innovation_id, b.innovation_id), a, b, _edge_kind(rng, pooling, a, b))
        edges[new.innovation_id] = new
    return _child(genome, "split_edge", nodes, edges)


def add_edge(genome, registry, rng, pooling=False):
    """Connects a random pair of enabled, not yet connected nodes in depth order."""
    enabled = sorted((n for n in genome.nodes.values() if n.enabled), key=lambda n: (n.depth, n.innovation_id))
    pairs = [
        (a, b)
        for i, a in enumerate(enabled)
        for b in enabled[i + 1:]
        if a.depth < b.depth and not genome.has_edge_between(a.innovation_id, b.innovation_id)
    ]
    if not pairs:
        raise OperatorInapplicable("every eligible node pair is already connected")
    src, dst = _pick(rng, pairs)
    new = _new_edge(registry.edge_id(src.innovation_id, dst.innovation_id), src, dst, _edge_kind(rng, pooling, src, dst))
    return _child(genome, "add_edge", genome.nodes, {**genome.edges, new.innovation_id: new})


def alter_edge_type(genome, rng, pooling=True):
    """Flips one enabled edge between convolution and pooling, keeping its innovation id."""
    if not pooling:
        raise OperatorInapplicable("pooling is disabled")
    candidates = [
        e for e in genome.enabled_edges
        if e.is_pooling or pooling_valid(genome.nodes[e.in_node], genome.nodes[e.out_node])
    ]
    if not candidates:
        raise OperatorInapplicable("no edge can change its type")
    edge = _pick(rng, candidates)
    src, dst = genome.nodes[edge.in_node], genome.nodes[edge.out_node]
    kind = EdgeKind.CONVOLUTIONAL if edge.is_pooling else EdgeKind.POOLING
    altered = replace(edge, kind=kind, **zero_weights(kind, src, dst))
    return _child(genome, "alter_edge_type", genome.nodes, {**genome.edges, edge.innovation_id: altered})


# --------------------------------------------------------------------------- node operators


def add_node(genome, registry, rng, pooling=False):
    """
    Inserts a node at a random depth with 1-5 edges from shallower and 1-5 edges to deeper nodes.

    The node size is, per dimension, the ceiling of the average of the largest
    chosen input node and the smallest chosen output node.
    """
    depth = 0.0
    while not 0.0 < depth < 1.0:
        depth = float(rng.uniform(0.0, 1.0))

    enabled = [n for n in genome.nodes.values() if n.enabled]
    shallower = [n for n in enabled if n.depth < depth]
    deeper = [n for n in enabled if n.depth > depth]
    if not shallower or not deeper:
        raise CandidateRejected(f"no nodes around depth {depth}")

    def choose(nodes):
        k = min(int(rng.integers(1, 6)), len(nodes))
        return [nodes[i] for i in sorted(rng.choice(len(nodes), size=k, replace=False))]

    inputs, outputs = choose(shallower), choose(deeper)
    size_x = math.ceil((max(n.size_x for n in inputs) + min(n.size_x for n in outputs)) / 2)
    size_y = math.ceil((max(n.size_y for n in inputs) + min(n.size_y for n in outputs)) / 2)
    node = NodeGene(registry.fresh_node_id(), NodeKind.HIDDEN, depth, size_x, size_y)

    edges = dict(genome.edges)
    for a, b in [(src, node) for src in inputs] + [(node, dst) for dst in outputs]:
        new = _new_edge(registry.edge_id(a.innovation_id, b.innovation_id), a, b, _edge_kind(rng, pooling, a, b))
        edges[new.innovation_id] = new
    return _child(genome, "add_node", {**genome.nodes, node.innovation_id: node}, edges)


def _split_assignment(rng, edges):
    """Assigns edges to two children: each gets at least one, a single edge goes to both."""
    if len(edges) == 1:
        return list(edges), list(edges)
    order = [edges[i] for i in rng.permutation(len(edges))]
    first, second = [order[0]], [order[1]]
    for edge in order[2:]:
        (first if rng.random() < 0.5 else second).append(edge)
    return first, second


def split_node(genome, registry, rng):
    """
    Replaces an enabled hidden node with two nodes of the same depth and size.

    Each new node receives at least one of the parent's input and output edges;
    single input or output edges are duplicated to both.
    """
    candidates = [
        n for n in _enabled_hidden(genome)
        if any(e.enabled for e in genome.incoming(n.innovation_id))
        and any(e.enabled for e in genome.outgoing(n.innovation_id))
    ]
    if not candidates:
        raise OperatorInapplicable("no connected hidden node to split")
    parent = _pick(rng, candidates)
    ins = [e for e in genome.incoming(parent.innovation_id) if e.enabled]
    outs = [e for e in genome.outgoing(parent.innovation_id) if e.enabled]

    nodes, edges = dict(genome.nodes), dict(genome.edges)
    _disable_node_and_edges(nodes, edges, parent.innovation_id)

    for ins_part, outs_part in zip(_split_assignment(rng, ins), _split_assignment(rng, outs)):
        node = replace(parent.with_default_batch_norm(), innovation_id=registry.fresh_node_id(), enabled=True)
        nodes[node.innovation_id] = node
        for edge in ins_part:
            new = _new_edge(registry.edge_id(edge.in_node, node.innovation_id), nodes[edge.in_node], node, edge.kind)
            edges[new.innovation_id] = new
        for edge in outs_part:
            new = _new_edge(registry.edge_id(node.innovation_id, edge.out_node), node, nodes[edge.out_node], edge.kind)
            edges[new.innovation_id] = new
    return _child(genome, "split_node", nodes, edges)


def merge_node(genome, registry, rng):
    """
    Combines two enabled hidden nodes into one at their average depth.

    The merged node connects to the union of their neighbors, shallower ones as
    inputs and deeper ones as outputs; neighbors at exactly the new depth are
    dropped. When both nodes share a neighbor the first node's edge kind wins.
    """
    hidden = _enabled_hidden(genome)
    if len(hidden) < 2:
        raise OperatorInapplicable("fewer than two hidden nodes to merge")
    first, second = (hidden[i] for i in rng.choice(len(hidden), size=2, replace=False))

    node = NodeGene(
        registry.fresh_node_id(),
        NodeKind.HIDDEN,
        (first.depth + second.depth) / 2.0,
        math.ceil((first.size_x + second.size_x) / 2),
        math.ceil((first.size_y + second.size_y) / 2),
    )
    merged = {first.innovation_id, second.innovation_id}

    nodes, edges = dict(genome.nodes), dict(genome.edges)
    neighbors = {}
    for old in (first, second):
        for edge in genome.edges.values():
            if not edge.enabled or old.innovation_id not in (edge.in_node, edge.out_node):
                continue
            other = edge.out_node if edge.in_node == old.innovation_id else edge.in_node
            if other not in merged and other not in neighbors:
                neighbors[other] = edge.kind

    for old in (first, second):
        _disable_node_and_edges(nodes, edges, old.innovation_id)
    nodes[node.innovation_id] = node

    for other_id, kind in neighbors.items():
        other = nodes[other_id]
        if other.depth == node.depth:
            continue
        src, dst = (other, node) if other.depth < node.depth else (node, other)
        if kind is EdgeKind.POOLING and not pooling_valid(src, dst):
            raise CandidateRejected(f"merged node {node.size} cannot keep pooling edge to node {other_id}")
        new = _new_edge(registry.edge_id(src.innovation_id, dst.innovation_id), src, dst, kind)
        edges[new.innovation_id] = new
    return _child(genome, "merge_node", nodes, edges)


def disable_node(genome, rng):
    """Disables an enabled hidden node together with all its incident edges."""
    candidates = _enabled_hidden(genome)
    if not candidates:
        raise OperatorInapplicable("no enabled hidden node to disable")
    node = _pick(rng, candidates)
    nodes, edges = dict(genome.nodes), dict(genome.edges)
    _disable_node_and_edges(nodes, edges, node.innovation_id)
    return _child(genome, "disable_node", nodes, edges)


def enable_node(genome, rng):
    """Enables a disabled node and those incident edges whose opposite endpoint is enabled."""
    candidates = [n for n in genome.nodes.values() if not n.enabled]
    if not candidates:
        raise OperatorInapplicable("no disabled node to enable")
    node = _pick(rng, candidates)
    nodes, edges = dict(genome.nodes), dict(genome.edges)
    nodes[node.innovation_id] = replace(node, enabled=True)
    for edge in genome.edges.values():
        if edge.enabled or node.innovation_id not in (edge.in_node, edge.out_node):
            continue
        other = edge.out_node if edge.in_node == node.innovation_id else edge.in_node
        if nodes[other].enabled:
            edges[edge.innovation_id] = replace(edge, enabled=True)
    return _child(genome, "enable_node", nodes, edges)


CHANGE_SIZE_TAGS = {"both": "change_size", "x": "change_size_x", "y": "change_size_y"}


def change_node_size(genome, rng, axis="both", deltas=(-2, -1, 1, 2)):
    """
    Grows or shrinks one enabled hidden node and resizes its incident filters.

    Args:
        genome (Genome): Source genome.
        rng (numpy.random.Generator): Random source.
        axis (str): "both", "x" or "y".
        deltas (tuple): Size changes to draw from uniformly.

    Raises:
        OperatorInapplicable: If there is no enabled hidden node.
        CandidateRejected: If the new size drops below 1 or breaks an incident pooling edge.
    """
    if axis not in CHANGE_SIZE_TAGS:
        raise ValueError(f"unknown axis {axis!r}")
    candidates = _enabled_hidden(genome)
    if not candidates:
        raise OperatorInapplicable("no enabled hidden node to resize")
    node = _pick(rng, candidates)
    delta = int(deltas[int(rng.integers(len(deltas)))])

    size_x = node.size_x + (delta if axis in ("both", "x") else 0)
    size_y = node.size_y + (delta if axis in ("both", "y") else 0)
    if size_x < 1 or size_y < 1:
        raise CandidateRejected(f"node {node.innovation_id} would shrink to {size_x}x{size_y}")

    nodes = {**genome.nodes, node.innovation_id: replace(node, size_x=size_x, size_y=size_y)}
    incident = {
        e.innovation_id: e for e in genome.edges.values() if node.innovation_id in (e.in_node, e.out_node)
    }
    edges = {**genome.edges, **_resized_edges(incident, nodes)}
    return _child(genome, CHANGE_SIZE_TAGS[axis], nodes, edges)


# --------------------------------------------------------------------------- crossover


def crossover(more_fit, less_fit, rng, more_fit_rate=0.8, less_fit_rate=0.4):
    """
    Recombines two evaluated parents aligned by edge innovation ids.

    Edges in both parents are inherited from the more fit parent. Edges present
    in only one parent are inherited with the corresponding rate; the rest are
    still copied but disabled. Nodes come from the more fit parent whenever it
    has them, and any edge touching a disabled node ends up disabled.

    Args:
        more_fit (Genome): Parent with the lower (better) fitness.
        less_fit (Genome): The other parent.
        rng (numpy.random.Generator): Random source; one draw per non-shared edge, in id order.
        more_fit_rate (float): Inclusion probability of edges only in `more_fit`.
        less_fit_rate (float): Inclusion probability of edges only in `less_fit`.

    Returns:
        Genome: The child, tagged "crossover".
    """
    if not (more_fit.evaluated and less_fit.evaluated):
        raise OperatorInapplicable("crossover needs evaluated parents")

    edges = {}
    for edge_id in sorted(set(more_fit.edges) | set(less_fit.edges)):
        if edge_id in more_fit.edges and edge_id in less_fit.edges:
            edges[edge_id] = more_fit.edges[edge_id]
            continue
        source, rate = (more_fit, more_fit_rate) if edge_id in more_fit.edges else (less_fit, less_fit_rate)
        edge = source.edges[edge_id]
        edges[edge_id] = edge if rng.random() < rate else replace(edge, enabled=False)

    nodes = {}
    endpoints = {n for e in edges.values() for n in (e.in_node, e.out_node)}
    endpoints |= {more_fit.input_node.innovation_id, *(n.innovation_id for n in more_fit.output_nodes)}
    for node_id in sorted(endpoints):
        nodes[node_id] = more_fit.nodes[node_id] if node_id in more_fit.nodes else less_fit.nodes[node_id]

    for edge_id, edge in edges.items():
        if edge.enabled and not (nodes[edge.in_node].enabled and nodes[edge.out_node].enabled):
            edges[edge_id] = replace(edge, enabled=False)

    edges = _resized_edges(edges, nodes)
    return _child(more_fit, CROSSOVER_TAG, nodes, edges, parents=(more_fit.generation_id, less_fit.generation_id))


# --------------------------------------------------------------------------- driver

MUTATIONS = {
    "disable_edge": lambda g, registry, rng, config: disable_edge(g, rng),
    "enable_edge": lambda g, registry, rng, config: enable_edge(g, rng),
    "split_edge": lambda g, registry, rng, config: split_edge(g, registry, rng, config.pooling_enabled),
    "add_edge": lambda g, registry, rng, config: add_edge(g, registry, rng, config.pooling_enabled),
    "change_size": lambda g, registry, rng, config: change_node_size(g, rng, "both", config.size_deltas),
    "change_size_x": lambda g, registry, rng, config: change_node_size(g, rng, "x", config.size_deltas),
    "change_size_y": lambda g, registry, rng, config: change_node_size(g, rng, "y", config.size_deltas),
    "add_node": lambda g, registry, rng, config: add_node(g, registry, rng, config.pooling_enabled),
    "split_node": lambda g, registry, rng, config: split_node(g, registry, rng),
    "merge_node": lambda g, registry, rng, config: merge_node(g, registry, rng),
    "disable_node": lambda g, registry, rng, config: disable_node(g, rng),
    "enable_node": lambda g, registry, rng, config: enable_node(g, rng),
    "alter_edge_type": lambda g, registry, rng, config: alter_edge_type(g, rng, config.pooling_enabled),
}


def mutate(genome, config, registry, rng):
    """Applies one operator drawn by the configured weights; may raise OperatorInapplicable/CandidateRejected."""
    weights = config.operator_weights()
    tags = list(weights)
    tag = tags[int(rng.choice(len(tags), p=np.array([weights[t] for t in tags])))]
    return MUTATIONS[tag](genome, registry, rng, config)


def _fitness_order(genome):
    return (genome.fitness, genome.generation_id)


def generate_candidate(members, config, registry, rng, allow_crossover=True):
    """
    Produces one valid candidate from a population.

    With probability `crossover_rate` (and at least two evaluated members) the
    candidate is a crossover of two distinct evaluated members; otherwise one
    operator is applied to a uniformly selected member. The mode is drawn once,
    then the candidate is regenerated until it passes validation.

    Args:
        members (list): Current population members.
        config (OperatorConfig): Operator weights and rates.
        registry (InnovationRegistry): Innovation ids, mutated in place.
        rng (numpy.random.Generator): Random source.
        allow_crossover (bool): False during population fill.

    Returns:
        Genome: A tagged, UNEVALUATED candidate with `parents` set.

    Raises:
        DegeneratePopulationError: If no valid candidate is found within MAX_ATTEMPTS attempts.
    """
    if not members:
        raise DegeneratePopulationError("cannot generate a candidate from an empty population")
    evaluated = [m for m in members if m.evaluated and not m.diverged]
    use_crossover = allow_crossover and len(evaluated) >= 2 and rng.random() < config.crossover_rate

    for attempt in range(MAX_ATTEMPTS):
        try:
            if use_crossover:
                a, b = (evaluated[i] for i in rng.choice(len(evaluated), size=2, replace=False))
                more_fit, less_fit = sorted((a, b), key=_fitness_order)
                candidate = crossover(more_fit, less_fit, rng, config.more_fit_rate, config.less_fit_rate)
            else:
                candidate = mutate(_pick(rng, members), config, registry, rng)
            validate(candidate)
            return candidate
        except (OperatorInapplicable, CandidateRejected, GenomeError) as e:
            logger.debug("Candidate discarded (attempt %s): %s", attempt + 1, e)

    raise DegeneratePopulationError(f"no valid candidate after {MAX_ATTEMPTS} attempts")
