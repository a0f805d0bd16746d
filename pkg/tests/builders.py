"""Hand-built genomes, datasets and IDX files shared by the tests."""

import gzip
import struct

import numpy as np

from evodag.dataset import IMAGE_MAGIC, LABEL_MAGIC, ImageSet
from evodag.genome import EdgeGene, EdgeKind, Genome, NodeGene, NodeKind, minimal_genome, zero_weights
from evodag.mutation import InnovationRegistry, OperatorConfig, generate_candidate
from evodag.training.initialization import he_initialize


def _edge(edge_id, src, dst, kind=EdgeKind.CONVOLUTIONAL):
    return EdgeGene(edge_id, src.innovation_id, dst.innovation_id, kind, True, **zero_weights(kind, src, dst))


def chain_genome(input_dims=(6, 6), num_classes=3, hidden=((0.5, (4, 4)),), pooling=False, skip=True, seed=0):
    """
    Input -> hidden_1 -> ... -> hidden_k -> every output, He-initialized.

    Args:
        hidden (tuple): (depth, (size_x, size_y)) per hidden node, in depth order.
        pooling (bool): Make the input -> hidden_1 edge a pooling edge.
        skip (bool): Also connect the input directly to every output (edge ids 0..C-1).
    """
    inp = NodeGene(0, NodeKind.INPUT, 0.0, *input_dims)
    outputs = [NodeGene(i + 1, NodeKind.OUTPUT, 1.0, 1, 1) for i in range(num_classes)]
    hidden_nodes = [
        NodeGene(num_classes + 1 + i, NodeKind.HIDDEN, depth, *dims) for i, (depth, dims) in enumerate(hidden)
    ]

    edges = []
    if skip:
        edges += [_edge(i, inp, out) for i, out in enumerate(outputs)]
    chain = [inp, *hidden_nodes]
    for k, (src, dst) in enumerate(zip(chain, chain[1:])):
        kind = EdgeKind.POOLING if pooling and k == 0 else EdgeKind.CONVOLUTIONAL
        edges.append(_edge(num_classes + k, src, dst, kind))
    last = chain[-1]
    first_id = num_classes + len(hidden_nodes)
    edges += [_edge(first_id + i, last, out) for i, out in enumerate(outputs)]

    genome = Genome(nodes=[inp, *outputs, *hidden_nodes], edges=edges)
    return he_initialize(genome, np.random.default_rng(seed))


def synthetic_set(count=60, dims=(6, 6), num_classes=3, seed=0):
    """Noise images with a bright vertical band whose position encodes the label."""
    rng = np.random.default_rng(seed)
    labels = np.arange(count) % num_classes
    images = rng.uniform(0.0, 0.2, size=(count, *dims))
    band = dims[1] // num_classes
    for i, label in enumerate(labels):
        images[i, :, label * band:(label + 1) * band] += 0.8
    return ImageSet(images.astype(np.float32), labels.astype(np.int64), num_classes)


def write_idx(images_path, labels_path, images, labels):
    """Writes uint8 images (N, rows, cols) and labels (N,) as IDX files; a .gz suffix compresses."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    image_bytes = struct.pack(">4I", IMAGE_MAGIC, *images.shape) + images.tobytes()
    label_bytes = struct.pack(">2I", LABEL_MAGIC, len(labels)) + labels.tobytes()
    for path, data in ((images_path, image_bytes), (labels_path, label_bytes)):
        opener = gzip.open if str(path).endswith(".gz") else open
        with opener(path, "wb") as f:
            f.write(data)


def synthetic_idx(directory, count=60, dims=(6, 6), num_classes=3, seed=0, prefix="train"):
    """Writes `synthetic_set`-like data as IDX files and returns (images_path, labels_path)."""
    image_set = synthetic_set(count, dims, num_classes, seed)
    images_path = str(directory / f"{prefix}-images-idx3-ubyte")
    labels_path = str(directory / f"{prefix}-labels-idx1-ubyte")
    write_idx(images_path, labels_path, np.round(image_set.images * 255), image_set.labels)
    return images_path, labels_path


def grown_members(count=30, config=None, input_dims=(6, 6), num_classes=3, seed=0):
    """
    Evaluated genomes grown from the minimal genome by single mutations.

    Fitness values are random, so every member is a valid crossover parent.

    Returns:
        tuple: (members, the InnovationRegistry they share)
    """
    rng = np.random.default_rng(seed)
    config = config or OperatorConfig()
    base = he_initialize(minimal_genome(input_dims, num_classes), rng)
    registry = InnovationRegistry.for_genome(base)
    members = [base.with_genes(generation_id=0).with_fitness(float(rng.uniform(1.0, 100.0)))]
    for generation_id in range(1, count):
        child = generate_candidate(members, config, registry, rng, allow_crossover=False)
        members.append(child.with_genes(generation_id=generation_id).with_fitness(float(rng.uniform(1.0, 100.0))))
    return members, registry
