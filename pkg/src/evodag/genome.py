"""
Genome data model for evolved directed-acyclic CNNs.

A genome is a blueprint of a CNN on the level of feature maps (nodes) and
filters (edges). Any two feature maps can be connected by a convolution whose
filter has size `|out_d - in_d| + 1` in each dimension `d`, so the structure of
a network is fully described by the sizes of its feature maps and how they are
connected. Nodes carry a depth in [0, 1] (input 0, outputs 1) which orders the
forward pass without any graph traversal.

Genes are immutable value objects. Operators never edit a genome in place, they
build a new one from (shared) genes of the old one.

The module also provides:
- structural queries (reachability, evaluation order, validation)
- the versioned JSON archive format (bit-exact weights)
- a DOT export for rendering genomes
"""

import base64
import binascii
import json
import math
from collections import deque
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property

import numpy as np

from .errors import GenomeError

ARCHIVE_FORMAT = "evodag.genome"
ARCHIVE_VERSION = 1

# Placeholder fitness of issued-but-unscored genomes; ordered worse than any real fitness.
UNEVALUATED = None


class NodeKind(str, Enum):
    INPUT = "input"
    HIDDEN = "hidden"
    OUTPUT = "output"


class EdgeKind(str, Enum):
    CONVOLUTIONAL = "conv"
    POOLING = "pool"


def conv_filter_dims(in_dims, out_dims):
    """
    Returns the filter size connecting two feature maps.

    Args:
        in_dims (tuple): (x, y) size of the input feature map.
        out_dims (tuple): (x, y) size of the output feature map.

    Returns:
        tuple: (|out_x - in_x| + 1, |out_y - in_y| + 1)
    """
    if min(*in_dims, *out_dims) < 1:
        raise GenomeError(f"feature map sizes must be positive, got {in_dims} -> {out_dims}")
    return (abs(out_dims[0] - in_dims[0]) + 1, abs(out_dims[1] - in_dims[1]) + 1)


@dataclass(frozen=True)
class NodeGene:
    """
    A feature map of the network.

    Each node is a single 2-D feature map, so its batch-norm state is a scalar
    pair (gamma, beta) plus running statistics used at inference time.
    """

    innovation_id: int
    kind: NodeKind
    depth: float
    size_x: int
    size_y: int
    enabled: bool = True
    bn_gamma: float = 1.0
    bn_beta: float = 0.0
    bn_running_mean: float = 0.0
    bn_running_var: float = 1.0

    @property
    def size(self):
        return (self.size_x, self.size_y)

    @property
    def is_hidden(self):
        return self.kind is NodeKind.HIDDEN

    def with_default_batch_norm(self):
        return replace(self, bn_gamma=1.0, bn_beta=0.0, bn_running_mean=0.0, bn_running_var=1.0)


@dataclass(frozen=True, eq=False)
class EdgeGene:
    """
    A connection between two feature maps.

    Convolutional edges carry a `filter` of shape conv_filter_dims(in, out);
    pooling edges carry a single `scale` multiplying the pooled output.
    Filters are stored as read-only float64 arrays.
    """

    innovation_id: int
    in_node: int
    out_node: int
    kind: EdgeKind
    enabled: bool = True
    filter: np.ndarray = None
    scale: float = None

    def __post_init__(self):
        if self.filter is not None:
            weights = np.asarray(self.filter, dtype=np.float64)
            if weights.flags.writeable:
                weights = weights.copy()
                weights.flags.writeable = False
            object.__setattr__(self, "filter", weights)

    @property
    def is_pooling(self):
        return self.kind is EdgeKind.POOLING

    @property
    def parameter_count(self):
        return 1 if self.is_pooling else int(self.filter.size)

    def __eq__(self, other):
        if not isinstance(other, EdgeGene):
            return NotImplemented
        same_filter = (self.filter is None and other.filter is None) or (
            self.filter is not None and other.filter is not None and np.array_equal(self.filter, other.filter)
        )
        return (
            self.innovation_id == other.innovation_id
            and self.in_node == other.in_node
            and self.out_node == other.out_node
            and self.kind is other.kind
            and self.enabled == other.enabled
            and self.scale == other.scale
            and same_filter
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Genome:
    """
    A CNN blueprint: node and edge genes keyed by innovation id plus metadata.

    Attributes:
        nodes (dict): innovation id => NodeGene.
        edges (dict): innovation id => EdgeGene.
        fitness (float): validation cross-entropy, or UNEVALUATED (None).
        generated_by (str): tag of the operator that produced the genome.
        generation_id (int): unique id assigned by the master when issued (-1 before).
        parents (tuple): generation ids of the parent genome(s).
        diverged (bool): training produced a non-finite loss.
    """

    nodes: dict
    edges: dict
    fitness: float = UNEVALUATED
    generated_by: str = "initial"
    generation_id: int = -1
    parents: tuple = ()
    diverged: bool = False

    def __post_init__(self):
        nodes = self.nodes.values() if isinstance(self.nodes, dict) else self.nodes
        edges = self.edges.values() if isinstance(self.edges, dict) else self.edges
        object.__setattr__(self, "nodes", {n.innovation_id: n for n in sorted(nodes, key=lambda n: n.innovation_id)})
        object.__setattr__(self, "edges", {e.innovation_id: e for e in sorted(edges, key=lambda e: e.innovation_id)})
        object.__setattr__(self, "parents", tuple(self.parents))

    @property
    def evaluated(self):
        return self.fitness is not UNEVALUATED

    @property
    def input_node(self):
        return next(n for n in self.nodes.values() if n.kind is NodeKind.INPUT)

    @property
    def output_nodes(self):
        return [n for n in self.nodes.values() if n.kind is NodeKind.OUTPUT]

    @property
    def hidden_nodes(self):
        return [n for n in self.nodes.values() if n.kind is NodeKind.HIDDEN]

    @property
    def enabled_edges(self):
        return [e for e in self.edges.values() if e.enabled]

    @property
    def disabled_edges(self):
        return [e for e in self.edges.values() if not e.enabled]

    @cached_property
    def _pair_index(self):
        return {(e.in_node, e.out_node): e for e in self.edges.values()}

    def edge_between(self, in_node, out_node):
        """Returns the edge in_node -> out_node (any kind, any state) or None."""
        return self._pair_index.get((in_node, out_node))

    def has_edge_between(self, a, b):
        return (a, b) in self._pair_index or (b, a) in self._pair_index

    def incoming(self, node_id):
        return [e for e in self.edges.values() if e.out_node == node_id]

    def outgoing(self, node_id):
        return [e for e in self.edges.values() if e.in_node == node_id]

    def is_live(self, edge):
        """An edge takes part in the forward pass iff it and both its endpoints are enabled."""
        return edge.enabled and self.nodes[edge.in_node].enabled and self.nodes[edge.out_node].enabled

    def with_genes(self, nodes=None, edges=None, **metadata):
        """Returns a copy with replaced gene collections and/or metadata fields."""
        return replace(
            self,
            nodes=self.nodes if nodes is None else nodes,
            edges=self.edges if edges is None else edges,
            **metadata,
        )

    def with_fitness(self, fitness, diverged=False):
        return replace(self, fitness=fitness, diverged=diverged)

    def same_structure(self, other):
        """Compares genomes gene by gene, ignoring weights and metadata."""

        def node_key(n):
            return (n.innovation_id, n.kind, n.depth, n.size_x, n.size_y, n.enabled)

        def edge_key(e):
            return (e.innovation_id, e.in_node, e.out_node, e.kind, e.enabled)

        return [node_key(n) for n in self.nodes.values()] == [node_key(n) for n in other.nodes.values()] and [
            edge_key(e) for e in self.edges.values()
        ] == [edge_key(e) for e in other.edges.values()]


def pooling_valid(in_node, out_node):
    """Fractional max pooling needs at least one input pixel per pool in each dimension."""
    return out_node.size_x <= in_node.size_x and out_node.size_y <= in_node.size_y


def zero_weights(kind, in_node, out_node):
    """Weight placeholders of the right shape for a fresh edge; filled later by an initializer."""
    if kind is EdgeKind.POOLING:
        return {"filter": None, "scale": 1.0}
    return {"filter": np.zeros(conv_filter_dims(in_node.size, out_node.size)), "scale": None}


def resize_filter(weights, shape):
    """Reshapes a filter to `shape`, keeping the overlapping top-left block and zero-filling the rest."""
    resized = np.zeros(shape)
    rows, cols = min(shape[0], weights.shape[0]), min(shape[1], weights.shape[1])
    resized[:rows, :cols] = weights[:rows, :cols]
    return resized


def minimal_genome(input_dims, num_classes):
    """
    Builds the starting CNN: one input node connected directly to one 1x1 output node per class.

    Node innovation ids are 0 (input) and 1..num_classes (outputs); edge i connects
    the input to output node i + 1. Filters are zero until initialized.

    Args:
        input_dims (tuple): (x, y) size of the dataset images.
        num_classes (int): Number of output classes (>= 2).

    Returns:
        Genome: An UNEVALUATED minimal genome.
    """
    if num_classes < 2:
        raise GenomeError(f"a classifier needs at least two classes, got {num_classes}")
    input_node = NodeGene(0, NodeKind.INPUT, 0.0, int(input_dims[0]), int(input_dims[1]))
    outputs = [NodeGene(i + 1, NodeKind.OUTPUT, 1.0, 1, 1) for i in range(num_classes)]
    edges = [
        EdgeGene(i, 0, out.innovation_id, EdgeKind.CONVOLUTIONAL, **zero_weights(EdgeKind.CONVOLUTIONAL, input_node, out))
        for i, out in enumerate(outputs)
    ]
    return Genome(nodes=[input_node, *outputs], edges=edges)


def forward_reachable(genome):
    """Returns the ids of nodes reachable from the input through live edges."""
    start = genome.input_node.innovation_id
    adjacency = {}
    for edge in genome.edges.values():
        if genome.is_live(edge):
            adjacency.setdefault(edge.in_node, []).append(edge.out_node)

    seen, queue = {start}, deque([start])
    while queue:
        node_id = queue.popleft()
        for nxt in adjacency.get(node_id, ()):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def reachable(genome):
    """True iff every enabled output node is reachable from the input through enabled nodes and edges."""
    seen = forward_reachable(genome)
    return all(out.innovation_id in seen for out in genome.output_nodes if out.enabled)


def evaluation_order(genome):
    """
    Orders the enabled nodes for a linear forward pass.

    Nodes are sorted by depth, ties broken by innovation id, so the order is
    deterministic for a fixed genome.

    Returns:
        list: Node innovation ids.

    Raises:
        GenomeError: If a live edge does not go from an earlier to a later position.
    """
    order = [n.innovation_id for n in sorted(
        (n for n in genome.nodes.values() if n.enabled), key=lambda n: (n.depth, n.innovation_id)
    )]
    position = {node_id: i for i, node_id in enumerate(order)}
    for edge in genome.edges.values():
        if genome.is_live(edge) and position[edge.in_node] >= position[edge.out_node]:
            raise GenomeError(f"edge {edge.innovation_id} violates depth ordering ({edge.in_node} -> {edge.out_node})")
    return order


def validate(genome, require_reachable=True):
    """
    Checks every structural invariant of a genome.

    Args:
        genome (Genome): The genome to check.
        require_reachable (bool): Also require every output to be reachable from the input.

    Raises:
        GenomeError: Describing the first violation found.
    """
    inputs = [n for n in genome.nodes.values() if n.kind is NodeKind.INPUT]
    if len(inputs) != 1:
        raise GenomeError(f"expected exactly one input node, found {len(inputs)}")
    if not genome.output_nodes:
        raise GenomeError("genome has no output nodes")

    for node in genome.nodes.values():
        if node.size_x < 1 or node.size_y < 1:
            raise GenomeError(f"node {node.innovation_id} has size {node.size}")
        if node.kind is NodeKind.INPUT and (node.depth != 0.0 or not node.enabled):
            raise GenomeError("input node must be enabled with depth 0")
        if node.kind is NodeKind.OUTPUT and (node.depth != 1.0 or node.size != (1, 1) or not node.enabled):
            raise GenomeError(f"output node {node.innovation_id} must be enabled, 1x1 and at depth 1")
        if node.kind is NodeKind.HIDDEN and not 0.0 < node.depth < 1.0:
            raise GenomeError(f"hidden node {node.innovation_id} has depth {node.depth}")

    pairs = set()
    for edge in genome.edges.values():
        if edge.in_node not in genome.nodes or edge.out_node not in genome.nodes:
            raise GenomeError(f"edge {edge.innovation_id} references a missing node")
        src, dst = genome.nodes[edge.in_node], genome.nodes[edge.out_node]
        if (edge.in_node, edge.out_node) in pairs or (edge.out_node, edge.in_node) in pairs:
            raise GenomeError(f"more than one edge between nodes {edge.in_node} and {edge.out_node}")
        pairs.add((edge.in_node, edge.out_node))
        if not src.depth < dst.depth:
            raise GenomeError(f"edge {edge.innovation_id} is not feed-forward")
        if edge.enabled and not (src.enabled and dst.enabled):
            raise GenomeError(f"enabled edge {edge.innovation_id} touches a disabled node")
        if edge.is_pooling:
            if edge.scale is None or edge.filter is not None:
                raise GenomeError(f"pooling edge {edge.innovation_id} must carry exactly one scale weight")
            if not pooling_valid(src, dst):
                raise GenomeError(f"pooling edge {edge.innovation_id} grows {src.size} -> {dst.size}")
        else:
            if edge.filter is None or edge.scale is not None:
                raise GenomeError(f"convolutional edge {edge.innovation_id} must carry a filter")
            expected = conv_filter_dims(src.size, dst.size)
            if edge.filter.shape != expected:
                raise GenomeError(f"edge {edge.innovation_id} filter is {edge.filter.shape}, expected {expected}")

    evaluation_order(genome)
    if require_reachable and not reachable(genome):
        raise GenomeError("an output node is unreachable from the input")


def enabled_nodes(genome):
    return [n for n in genome.nodes.values() if n.enabled]


def enabled_conv_edges(genome):
    return [e for e in genome.edges.values() if genome.is_live(e) and not e.is_pooling]


def enabled_pool_edges(genome):
    return [e for e in genome.edges.values() if genome.is_live(e) and e.is_pooling]


def weight_count(genome):
    """
    Counts the trainable reals of a genome.

    Includes filter entries of live convolutional edges, scales of live
    pooling edges and gamma/beta of enabled hidden nodes.
    """
    edge_weights = sum(e.parameter_count for e in genome.edges.values() if genome.is_live(e))
    bn_weights = 2 * sum(1 for n in genome.hidden_nodes if n.enabled)
    return edge_weights + bn_weights


# --------------------------------------------------------------------------- archive


def _encode_float(value):
    if value is None or math.isfinite(value):
        return value
    return repr(value)


def _decode_float(value):
    if value is None:
        return None
    return float(value)


def _encode_array(array):
    return {
        "shape": list(array.shape),
        "data": base64.b64encode(np.ascontiguousarray(array, dtype="<f8").tobytes()).decode("ascii"),
    }


def _decode_array(document):
    shape = tuple(int(d) for d in document["shape"])
    raw = base64.b64decode(document["data"], validate=True)
    if len(raw) != 8 * int(np.prod(shape)):
        raise GenomeError(f"filter data does not match shape {shape}")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)


def to_document(genome):
    """Converts a genome into its JSON-compatible archive document."""
    return {
        "format": ARCHIVE_FORMAT,
        "version": ARCHIVE_VERSION,
        "generation_id": genome.generation_id,
        "generated_by": genome.generated_by,
        "parents": list(genome.parents),
        "fitness": _encode_float(genome.fitness),
        "diverged": genome.diverged,
        "nodes": [
            {
                "id": n.innovation_id,
                "kind": n.kind.value,
                "depth": n.depth,
                "size": [n.size_x, n.size_y],
                "enabled": n.enabled,
                "bn": [n.bn_gamma, n.bn_beta, n.bn_running_mean, n.bn_running_var],
            }
            for n in genome.nodes.values()
        ],
        "edges": [
            {
                "id": e.innovation_id,
                "in": e.in_node,
                "out": e.out_node,
                "kind": e.kind.value,
                "enabled": e.enabled,
                **({"scale": e.scale} if e.is_pooling else {"filter": _encode_array(e.filter)}),
            }
            for e in genome.edges.values()
        ],
    }


def from_document(document, require_reachable=True):
    """
    Rebuilds a genome from an archive document and validates it.

    Raises:
        GenomeError: On unknown formats/versions, missing fields or invariant violations.
    """
    if not isinstance(document, dict) or document.get("format") != ARCHIVE_FORMAT:
        raise GenomeError("not a genome archive")
    if document.get("version") != ARCHIVE_VERSION:
        raise GenomeError(f"unsupported genome archive version {document.get('version')!r}")

    try:
        nodes = [
            NodeGene(
                innovation_id=int(n["id"]),
                kind=NodeKind(n["kind"]),
                depth=float(n["depth"]),
                size_x=int(n["size"][0]),
                size_y=int(n["size"][1]),
                enabled=bool(n["enabled"]),
                bn_gamma=float(n["bn"][0]),
                bn_beta=float(n["bn"][1]),
                bn_running_mean=float(n["bn"][2]),
                bn_running_var=float(n["bn"][3]),
            )
            for n in document["nodes"]
        ]
        edges = []
        for e in document["edges"]:
            kind = EdgeKind(e["kind"])
            weights = {"scale": float(e["scale"])} if kind is EdgeKind.POOLING else {"filter": _decode_array(e["filter"])}
            edges.append(EdgeGene(int(e["id"]), int(e["in"]), int(e["out"]), kind, bool(e["enabled"]), **weights))
        genome = Genome(
            nodes=nodes,
            edges=edges,
            fitness=_decode_float(document["fitness"]),
            generated_by=str(document["generated_by"]),
            generation_id=int(document["generation_id"]),
            parents=tuple(int(p) for p in document["parents"]),
            diverged=bool(document.get("diverged", False)),
        )
    except (KeyError, IndexError, TypeError, ValueError, binascii.Error) as e:
        raise GenomeError(f"malformed genome archive: {e}") from e

    if len(genome.nodes) != len(nodes) or len(genome.edges) != len(edges):
        raise GenomeError("duplicate innovation ids in genome archive")
    validate(genome, require_reachable=require_reachable)
    return genome


def serialize(genome):
    """Serializes a genome into a UTF-8 JSON byte stream."""
    return json.dumps(to_document(genome), separators=(",", ":"), allow_nan=False).encode("utf-8")


def deserialize(data, require_reachable=True):
    """
    Parses a byte stream produced by `serialize`.

    Raises:
        GenomeError: If the stream is truncated, not JSON or not a valid genome.
    """
    try:
        document = json.loads(data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise GenomeError(f"cannot parse genome archive: {e}") from e
    return from_document(document, require_reachable=require_reachable)


def save_genome(genome, path):
    with open(path, "wb") as f:
        f.write(serialize(genome))


def load_genome(path):
    with open(path, "rb") as f:
        return deserialize(f.read())


# --------------------------------------------------------------------------- DOT export


def export_dot(genome):
    """
    Renders a genome as a Graphviz DOT digraph.

    Nodes are labeled with their id, feature map size and depth; convolutional
    edges are black, pooling edges blue, and disabled genes are dashed.
    """
    lines = ["digraph genome {", "  rankdir=LR;"]
    if genome.evaluated:
        lines.append(f'  label="generation {genome.generation_id}, fitness {genome.fitness:.4f}";')

    shapes = {NodeKind.INPUT: "invhouse", NodeKind.HIDDEN: "box", NodeKind.OUTPUT: "doublecircle"}
    for node in genome.nodes.values():
        style = "solid" if node.enabled else "dashed"
        lines.append(
            f'  n{node.innovation_id} [label="{node.innovation_id}\\n{node.size_x}x{node.size_y}\\n'
            f'd={node.depth:.3f}", shape={shapes[node.kind]}, style={style}];'
        )

    for edge in genome.edges.values():
        style = "solid" if edge.enabled else "dashed"
        if edge.is_pooling:
            attributes = f'label="pool", color=blue, style={style}'
        else:
            rows, cols = edge.filter.shape
            attributes = f'label="{rows}x{cols}", color=black, style={style}'
        lines.append(f"  n{edge.in_node} -> n{edge.out_node} [{attributes}];")

    lines.append("}")
    return "\n".join(lines) + "\n"
