import numpy as np
import pytest

from builders import chain_genome

from evodag.errors import GenomeError
from evodag.genome import conv_filter_dims, minimal_genome
from evodag.mutation import InnovationRegistry, OperatorConfig, generate_candidate
from evodag.training.initialization import he_initialize
from evodag.training.phenotype import (
    Phenotype,
    bounded_leaky_relu,
    conv_padding,
    correlate,
    cross_entropy,
)


def naive_correlate(x, weights, pad):
    x = np.pad(x, ((0, 0), (pad[0], pad[0]), (pad[1], pad[1])))
    k_x, k_y = weights.shape
    out = np.zeros((x.shape[0], x.shape[1] - k_x + 1, x.shape[2] - k_y + 1))
    for i in range(out.shape[1]):
        for j in range(out.shape[2]):
            out[:, i, j] = (x[:, i:i + k_x, j:j + k_y] * weights).sum(axis=(1, 2))
    return out


def batch_loss(phenotype, images, labels):
    probs = phenotype.forward(images, "train", reuse_pooling=True, update_running=False)
    return float(cross_entropy(probs, labels).mean())


def numeric_gradient(phenotype, images, labels, key, eps=1e-6):
    param = phenotype.params[key]
    grad = np.zeros_like(param)
    for index in np.ndindex(param.shape):
        original = param[index].copy()
        param[index] = original + eps
        plus = batch_loss(phenotype, images, labels)
        param[index] = original - eps
        minus = batch_loss(phenotype, images, labels)
        param[index] = original
        grad[index] = (plus - minus) / (2 * eps)
    return grad


@pytest.mark.parametrize("in_dims, out_dims", [((6, 5), (3, 4)), ((3, 4), (5, 6)), ((6, 3), (4, 5)), ((4, 4), (1, 1))])
def test_correlate_matches_naive_loop(rng, in_dims, out_dims):
    x = rng.normal(size=(2, *in_dims))
    weights = rng.normal(size=conv_filter_dims(in_dims, out_dims))
    pad = conv_padding(in_dims, out_dims, weights.shape)
    out, _ = correlate(x, weights, pad)

    assert out.shape == (2, *out_dims)
    np.testing.assert_allclose(out, naive_correlate(x, weights, pad))


def test_bounded_leaky_relu():
    np.testing.assert_allclose(bounded_leaky_relu(np.array([-1.0, 0.0, 3.0, 5.5, 6.5])), [-0.1, 0.0, 3.0, 5.5, 5.6])


GRADIENT_GENOMES = {
    "shrink-and-grow": dict(hidden=((0.3, (4, 4)), (0.6, (7, 7)))),
    "pooling": dict(hidden=((0.5, (4, 4)),), pooling=True),
    "pooling-then-conv": dict(hidden=((0.3, (3, 5)), (0.7, (2, 2))), pooling=True, skip=False),
}


@pytest.mark.parametrize("name", sorted(GRADIENT_GENOMES))
def test_backward_matches_finite_differences(rng, name):
    genome = chain_genome(seed=3, **GRADIENT_GENOMES[name])
    phenotype = Phenotype(genome, dtype=np.float64, rng=np.random.default_rng(0))
    images = rng.uniform(size=(4, 6, 6))
    labels = np.array([0, 1, 2, 1])

    phenotype.forward(images, "train", reuse_pooling=True, update_running=False)
    loss, grads = phenotype.backward(labels)

    assert loss == pytest.approx(batch_loss(phenotype, images, labels))
    assert set(grads) == set(phenotype.params)
    for key in phenotype.params:
        np.testing.assert_allclose(
            grads[key], numeric_gradient(phenotype, images, labels, key), rtol=1e-4, atol=1e-7, err_msg=str(key)
        )


def random_small_genome(seed, max_nodes=6):
    """Grows a He-initialized genome of at most `max_nodes` nodes with at least one live pooling edge."""
    rng = np.random.default_rng(seed)
    config = OperatorConfig(pooling_enabled=True, crossover_rate=0.0)
    genome = minimal_genome((6, 6), 2)
    registry = InnovationRegistry.for_genome(genome)
    best = None
    for _ in range(200):
        candidate = generate_candidate([genome], config, registry, rng)
        if len(candidate.nodes) > max_nodes:
            continue
        genome = candidate
        phenotype = Phenotype(genome)
        if any(kind == "scale" for kind, _ in phenotype.params) and len(phenotype.order) > 3:
            best = genome
    assert best is not None, "no genome with a live pooling edge was grown"
    return he_initialize(best, rng)


def gradient_mismatches(phenotype, images, labels, grads, eps):
    mismatched = []
    for key in phenotype.params:
        numeric = numeric_gradient(phenotype, images, labels, key, eps)
        if not np.allclose(grads[key], numeric, rtol=1e-4, atol=1e-7):
            mismatched.append(key)
    return mismatched


@pytest.mark.parametrize("seed", range(50))
def test_backward_matches_finite_differences_on_random_genomes(seed):
    genome = random_small_genome(seed)
    phenotype = Phenotype(genome, dtype=np.float64, rng=np.random.default_rng(seed))
    data = np.random.default_rng(1000 + seed)
    images = data.uniform(size=(8, 6, 6))
    labels = data.integers(0, 2, size=8)

    phenotype.forward(images, "train", reuse_pooling=True, update_running=False)
    loss, grads = phenotype.backward(labels)

    assert loss == pytest.approx(batch_loss(phenotype, images, labels))
    assert len(genome.nodes) <= 6
    assert any(kind == "filter" for kind, _ in grads) and any(kind == "scale" for kind, _ in grads)
    mismatched = gradient_mismatches(phenotype, images, labels, grads, 1e-6)
    # a step crossing an activation kink or a pooling tie gets a second look with a smaller step
    for key in mismatched:
        np.testing.assert_allclose(
            grads[key], numeric_gradient(phenotype, images, labels, key, 1e-7), rtol=1e-4, atol=1e-7, err_msg=str(key)
        )


def test_zero_filters_give_uniform_probabilities():
    phenotype = Phenotype(minimal_genome((6, 6), 3))
    probs = phenotype.forward(np.ones((2, 6, 6)), "infer")
    np.testing.assert_allclose(probs, np.full((2, 3), 1.0 / 3.0))


def test_infer_mode_is_deterministic_and_read_only(rng):
    phenotype = Phenotype(chain_genome(pooling=True), dtype=np.float32)
    images = rng.uniform(size=(5, 6, 6))
    running = {k: list(v) for k, v in phenotype.running.items()}

    first = phenotype.forward(images, "infer")
    second = phenotype.forward(images, "infer")

    assert first.dtype == np.float32
    np.testing.assert_array_equal(first, second)
    np.testing.assert_allclose(first.sum(axis=1), 1.0, rtol=1e-5)
    assert phenotype.running == running


def test_train_mode_updates_running_statistics(rng):
    phenotype = Phenotype(chain_genome())
    phenotype.forward(rng.uniform(size=(5, 6, 6)), "train")
    mean, var = phenotype.running[4]
    assert mean != 0.0 and var != 1.0


def test_train_mode_batch_norm_moments(rng):
    phenotype = Phenotype(chain_genome())
    phenotype.params[("gamma", 4)][()] = 2.0
    phenotype.params[("beta", 4)][()] = 0.5
    phenotype.forward(rng.uniform(size=(5, 6, 6)), "train")

    x_hat, _, z = phenotype._cache["nodes"][4]
    assert x_hat.mean() == pytest.approx(0.0, abs=1e-10)
    assert x_hat.var() == pytest.approx(1.0, rel=1e-3)
    assert z.mean() == pytest.approx(0.5, abs=1e-10)
    assert z.std() == pytest.approx(2.0, rel=1e-3)


def test_inactive_nodes_are_pruned():
    genome = chain_genome()
    dead_end = genome.with_genes(edges={k: e for k, e in genome.edges.items() if k < 4})
    phenotype = Phenotype(dead_end)

    assert 4 not in phenotype.order
    assert phenotype.parameter_count == 3 * 36


def test_to_genome_round_trips_weights():
    genome = chain_genome(pooling=True)
    restored = Phenotype(genome).to_genome()
    for edge_id, edge in genome.edges.items():
        assert restored.edges[edge_id] == edge
    assert restored.nodes == genome.nodes


def test_forward_checks_input_shape():
    phenotype = Phenotype(minimal_genome((6, 6), 2))
    with pytest.raises(GenomeError):
        phenotype.forward(np.zeros((1, 5, 6)))
    with pytest.raises(ValueError):
        phenotype.forward(np.zeros((1, 6, 6)), mode="eval")


def test_backward_needs_train_forward():
    phenotype = Phenotype(minimal_genome((6, 6), 2))
    with pytest.raises(RuntimeError):
        phenotype.backward(np.array([0]))
    phenotype.forward(np.zeros((1, 6, 6)), "infer")
    with pytest.raises(RuntimeError):
        phenotype.backward(np.array([0]))
