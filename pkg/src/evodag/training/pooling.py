"""
Fractional max pooling between arbitrarily sized feature maps.

Each dimension of size n is cut into m non-overlapping pools whose sizes
differ by at most one; the order of the pool sizes is reshuffled on every
training pass. A pooled feature map is the per-pool maximum, multiplied by the
edge's scale weight in the phenotype.
"""

import numpy as np

from ..errors import GenomeError


def pooling_partition(n, m, rng=None):
    """
    Splits `n` pixels into `m` pools.

    Args:
        n (int): Input size along one dimension.
        m (int): Output size along the same dimension.
        rng (numpy.random.Generator): Shuffles the pool order; None keeps the
            canonical order (large pools first).

    Returns:
        list: `m` pool sizes summing to `n`, `n mod m` of them one larger.

    Raises:
        GenomeError: If m > n (the pooling edge is invalid) or m < 1.
    """
    if not 1 <= m <= n:
        raise GenomeError(f"cannot pool {n} pixels into {m} pools")
    large = n % m
    sizes = np.full(m, n // m, dtype=np.int64)
    sizes[:large] += 1
    if rng is not None:
        rng.shuffle(sizes)
    return sizes.tolist()


def _window_indices(sizes):
    """(m, k) index matrix; short pools repeat their last index so every row has k entries."""
    sizes = np.asarray(sizes)
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    offsets = np.arange(int(sizes.max()))
    return starts[:, None] + np.minimum(offsets[None, :], sizes[:, None] - 1)


class PoolingPlan:
    """Gather/scatter indices for one pooling edge and one pair of partitions."""

    def __init__(self, sizes_x, sizes_y):
        self.sizes_x, self.sizes_y = list(sizes_x), list(sizes_y)
        self._rows = _window_indices(self.sizes_x)
        self._cols = _window_indices(self.sizes_y)

    def forward(self, x):
        """
        Pools a batch of feature maps.

        Args:
            x (numpy.ndarray): Input of shape (batch, n_x, n_y).

        Returns:
            tuple: pooled output (batch, m_x, m_y) and the flat argmax positions for `backward`.
        """
        batch = x.shape[0]
        m_x, k_x = self._rows.shape
        m_y, k_y = self._cols.shape
        # (batch, m_x, k_x, m_y, k_y) -> (batch, m_x, m_y, k_x * k_y)
        windows = x[:, self._rows[:, :, None, None], self._cols[None, None, :, :]]
        windows = windows.transpose(0, 1, 3, 2, 4).reshape(batch, m_x, m_y, k_x * k_y)
        local = windows.argmax(axis=-1)
        pooled = np.take_along_axis(windows, local[..., None], axis=-1)[..., 0]

        rows = self._rows[np.arange(m_x)[None, :, None], local // k_y]
        cols = self._cols[np.arange(m_y)[None, None, :], local % k_y]
        return pooled, (rows, cols)

    @staticmethod
    def backward(dy, argmax, input_shape):
        """Routes `dy` (batch, m_x, m_y) to the argmax positions of each pool."""
        rows, cols = argmax
        dx = np.zeros(input_shape, dtype=dy.dtype)
        batch_index = np.arange(dy.shape[0])[:, None, None]
        np.add.at(dx, (np.broadcast_to(batch_index, dy.shape), rows, cols), dy)
        return dx
