"""
Executable networks compiled from genomes.

A phenotype evaluates the active part of a genome (nodes reachable from the
input that also reach an output) in depth order, so forward and backward
propagation are two linear sweeps over the same plan.

Per node the incoming edge outputs are summed; hidden nodes then apply batch
normalization (one gamma/beta pair per feature map) and a bounded leaky ReLU,
while the 1x1 output nodes feed a joint softmax.
"""

from collections import deque
from dataclasses import replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import GenomeError
from ..genome import NodeKind, evaluation_order, forward_reachable
from .pooling import PoolingPlan, pooling_partition

BN_EPSILON = 1e-5
MODES = ("train", "infer")


def conv_padding(in_dims, out_dims, kernel_shape):
    """Zero padding per dimension: none when the map shrinks (valid), kernel - 1 when it grows (full)."""
    return tuple(k - 1 if o > i else 0 for i, o, k in zip(in_dims, out_dims, kernel_shape))


def correlate(x, weights, pad=(0, 0)):
    """
    Cross-correlates a batch of feature maps with one filter.

    Returns:
        tuple: output of shape (batch, out_x, out_y) and the window view needed by `correlate_backward`.
    """
    if any(pad):
        x = np.pad(x, ((0, 0), (pad[0], pad[0]), (pad[1], pad[1])))
    windows = sliding_window_view(x, weights.shape, axis=(1, 2))
    return np.tensordot(windows, weights, axes=((3, 4), (0, 1))), windows


def correlate_backward(dy, windows, weights, pad, input_shape, need_dx=True):
    """Filter gradient and (optionally) input gradient of `correlate`."""
    d_weights = np.tensordot(dy, windows, axes=((0, 1, 2), (0, 1, 2)))
    if not need_dx:
        return d_weights, None
    k_x, k_y = weights.shape
    padded = np.pad(dy, ((0, 0), (k_x - 1, k_x - 1), (k_y - 1, k_y - 1)))
    dx, _ = correlate(padded, weights[::-1, ::-1])
    return d_weights, dx[:, pad[0]:pad[0] + input_shape[1], pad[1]:pad[1] + input_shape[2]]


def bounded_leaky_relu(z, relu_max=5.5, leak=0.1):
    """Slope `leak` below 0 and above `relu_max`, identity in between; continuous."""
    return np.where(z < 0, leak * z, np.where(z > relu_max, relu_max + leak * (z - relu_max), z))


def bounded_leaky_relu_grad(z, relu_max=5.5, leak=0.1):
    return np.where((z < 0) | (z > relu_max), leak, 1.0).astype(z.dtype)


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def cross_entropy(probs, labels):
    """Per-sample cross-entropy of class probabilities against integer labels."""
    picked = probs[np.arange(len(labels)), labels]
    return -np.log(np.maximum(picked, np.finfo(probs.dtype).tiny))


def active_nodes(genome):
    """Ids of enabled nodes reachable from the input that reach an output, plus the input and outputs."""
    forward = forward_reachable(genome)
    parents = {}
    for edge in genome.edges.values():
        if genome.is_live(edge):
            parents.setdefault(edge.out_node, []).append(edge.in_node)

    outputs = [n.innovation_id for n in genome.output_nodes]
    backward, queue = set(outputs), deque(outputs)
    while queue:
        for prev in parents.get(queue.popleft(), ()):
            if prev not in backward:
                backward.add(prev)
                queue.append(prev)
    return (forward & backward) | set(outputs) | {genome.input_node.innovation_id}


class Phenotype:
    """
    A trainable network compiled from a genome.

    Parameters live in `params`, keyed by ("filter" | "scale", edge id) and
    ("gamma" | "beta", node id); `backward` returns gradients under the same
    keys. Batch-norm running statistics are kept per hidden node.

    Attributes:
        order (list): Active node ids in evaluation order.
        params (dict): Trainable arrays in the phenotype dtype.
        running (dict): node id => [running mean, running variance].
    """

    def __init__(self, genome, dtype=np.float64, rng=None, relu_max=5.5, relu_leak=0.1, bn_alpha=0.1):
        self.genome = genome
        self.dtype = np.dtype(dtype)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.relu_max, self.relu_leak, self.bn_alpha = relu_max, relu_leak, bn_alpha

        active = active_nodes(genome)
        self.order = [node_id for node_id in evaluation_order(genome) if node_id in active]
        self.input_id = genome.input_node.innovation_id
        self.output_index = {node.innovation_id: k for k, node in enumerate(genome.output_nodes)}
        self.in_edges = {
            node_id: [
                e for e in genome.edges.values()
                if e.out_node == node_id and e.in_node in active and genome.is_live(e)
            ]
            for node_id in self.order
        }

        self.params, self.pads, self.running = {}, {}, {}
        for edges in self.in_edges.values():
            for edge in edges:
                if edge.is_pooling:
                    self.params[("scale", edge.innovation_id)] = np.array(edge.scale, dtype=self.dtype)
                else:
                    src, dst = genome.nodes[edge.in_node], genome.nodes[edge.out_node]
                    self.params[("filter", edge.innovation_id)] = np.array(edge.filter, dtype=self.dtype)
                    self.pads[edge.innovation_id] = conv_padding(src.size, dst.size, edge.filter.shape)
        for node_id in self.order:
            node = genome.nodes[node_id]
            if node.kind is NodeKind.HIDDEN:
                self.params[("gamma", node_id)] = np.array(node.bn_gamma, dtype=self.dtype)
                self.params[("beta", node_id)] = np.array(node.bn_beta, dtype=self.dtype)
                self.running[node_id] = [node.bn_running_mean, node.bn_running_var]

        self._train_plans, self._canonical_plans = {}, {}
        self._cache = None

    @property
    def parameter_count(self):
        return int(sum(p.size for p in self.params.values()))

    def _pooling_plan(self, edge, train, reuse_pooling):
        src, dst = self.genome.nodes[edge.in_node], self.genome.nodes[edge.out_node]
        if not train:
            if edge.innovation_id not in self._canonical_plans:
                self._canonical_plans[edge.innovation_id] = PoolingPlan(
                    pooling_partition(src.size_x, dst.size_x), pooling_partition(src.size_y, dst.size_y)
                )
            return self._canonical_plans[edge.innovation_id]
        if not reuse_pooling or edge.innovation_id not in self._train_plans:
            self._train_plans[edge.innovation_id] = PoolingPlan(
                pooling_partition(src.size_x, dst.size_x, self.rng), pooling_partition(src.size_y, dst.size_y, self.rng)
            )
        return self._train_plans[edge.innovation_id]

    def forward(self, batch, mode="train", reuse_pooling=False, update_running=True):
        """
        Propagates a batch and returns class probabilities of shape (batch, classes).

        Args:
            batch (numpy.ndarray): Images of shape (batch, x, y).
            mode (str): "train" normalizes with batch statistics and shuffles pooling
                partitions; "infer" uses running statistics and canonical partitions.
            reuse_pooling (bool): Keep the previous training partitions (frozen pooling order).
            update_running (bool): Update batch-norm running statistics in train mode.
        """
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        x = np.asarray(batch, dtype=self.dtype)
        input_size = self.genome.nodes[self.input_id].size
        if x.ndim != 3 or x.shape[1:] != input_size:
            raise GenomeError(f"batch of shape {x.shape} does not match input node size {input_size}")
        train = mode == "train"
        size = x.shape[0]

        acts = {self.input_id: x}
        edge_cache, node_cache = {}, {}
        logits = np.zeros((size, len(self.output_index)), dtype=self.dtype)
        for node_id in self.order[1:]:
            node = self.genome.nodes[node_id]
            total = np.zeros((size, node.size_x, node.size_y), dtype=self.dtype)
            for edge in self.in_edges[node_id]:
                src = acts[edge.in_node]
                if edge.is_pooling:
                    pooled, argmax = self._pooling_plan(edge, train, reuse_pooling).forward(src)
                    total += self.params[("scale", edge.innovation_id)] * pooled
                    edge_cache[edge.innovation_id] = (pooled, argmax)
                else:
                    weights = self.params[("filter", edge.innovation_id)]
                    out, windows = correlate(src, weights, self.pads[edge.innovation_id])
                    total += out
                    edge_cache[edge.innovation_id] = windows

            if node.kind is NodeKind.OUTPUT:
                logits[:, self.output_index[node_id]] = total[:, 0, 0]
                continue

            if train:
                mean, var = float(total.mean()), float(total.var())
                if update_running:
                    running = self.running[node_id]
                    running[0] = (1.0 - self.bn_alpha) * running[0] + self.bn_alpha * mean
                    running[1] = (1.0 - self.bn_alpha) * running[1] + self.bn_alpha * var
            else:
                mean, var = self.running[node_id]
            inv_std = self.dtype.type(1.0 / np.sqrt(var + BN_EPSILON))
            x_hat = (total - self.dtype.type(mean)) * inv_std
            z = self.params[("gamma", node_id)] * x_hat + self.params[("beta", node_id)]
            acts[node_id] = bounded_leaky_relu(z, self.relu_max, self.relu_leak)
            node_cache[node_id] = (x_hat, inv_std, z)

        probs = softmax(logits)
        self._cache = {"train": train, "acts": acts, "edges": edge_cache, "nodes": node_cache, "probs": probs}
        return probs

    def backward(self, labels):
        """
        Back-propagates the batch-mean cross-entropy of the last train-mode forward pass.

        Args:
            labels (numpy.ndarray): Integer class labels of the forwarded batch.

        Returns:
            tuple: (mean cross-entropy, gradients keyed like `params`)
        """
        cache = self._cache
        if cache is None or not cache["train"]:
            raise RuntimeError("backward needs a preceding train-mode forward pass")
        labels = np.asarray(labels, dtype=np.int64)
        probs, acts = cache["probs"], cache["acts"]
        size = probs.shape[0]

        loss = float(cross_entropy(probs, labels).mean())
        d_logits = probs.copy()
        d_logits[np.arange(size), labels] -= 1.0
        d_logits /= size

        grads = {key: np.zeros_like(value) for key, value in self.params.items()}
        d_acts = {}
        for node_id in reversed(self.order[1:]):
            node = self.genome.nodes[node_id]
            if node.kind is NodeKind.OUTPUT:
                d_total = d_logits[:, self.output_index[node_id]].reshape(size, 1, 1)
            else:
                if node_id not in d_acts:
                    continue
                x_hat, inv_std, z = cache["nodes"][node_id]
                d_z = d_acts[node_id] * bounded_leaky_relu_grad(z, self.relu_max, self.relu_leak)
                grads[("gamma", node_id)] += (d_z * x_hat).sum()
                grads[("beta", node_id)] += d_z.sum()
                d_hat = d_z * self.params[("gamma", node_id)]
                count = d_hat.size
                d_total = (inv_std / count) * (count * d_hat - d_hat.sum() - x_hat * (d_hat * x_hat).sum())

            for edge in self.in_edges[node_id]:
                need_dx = edge.in_node != self.input_id
                src_shape = acts[edge.in_node].shape
                if edge.is_pooling:
                    pooled, argmax = cache["edges"][edge.innovation_id]
                    scale = self.params[("scale", edge.innovation_id)]
                    grads[("scale", edge.innovation_id)] += (pooled * d_total).sum()
                    d_src = PoolingPlan.backward(scale * d_total, argmax, src_shape) if need_dx else None
                else:
                    d_weights, d_src = correlate_backward(
                        d_total,
                        cache["edges"][edge.innovation_id],
                        self.params[("filter", edge.innovation_id)],
                        self.pads[edge.innovation_id],
                        src_shape,
                        need_dx,
                    )
                    grads[("filter", edge.innovation_id)] += d_weights
                if need_dx:
                    d_acts[edge.in_node] = d_acts[edge.in_node] + d_src if edge.in_node in d_acts else d_src

        return loss, grads

    def to_genome(self):
        """Writes the trained parameters and running statistics back into a float64 genome."""
        edges = dict(self.genome.edges)
        nodes = dict(self.genome.nodes)
        for (kind, gene_id), value in self.params.items():
            if kind == "filter":
                edges[gene_id] = replace(edges[gene_id], filter=value.astype(np.float64))
            elif kind == "scale":
                edges[gene_id] = replace(edges[gene_id], scale=float(value))
        for node_id, (mean, var) in self.running.items():
            nodes[node_id] = replace(
                nodes[node_id],
                bn_gamma=float(self.params[("gamma", node_id)]),
                bn_beta=float(self.params[("beta", node_id)]),
                bn_running_mean=float(mean),
                bn_running_var=float(var),
            )
        return self.genome.with_genes(nodes=nodes, edges=edges)


