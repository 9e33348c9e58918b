"""Pure-numpy implementations of the histogram kernels.

Array contracts (shared with the compiled ``_kernels`` module):

``bin_batch``
    ``X`` is the column-major ``(N, M)`` feature matrix, ``rows`` the ``b``
    batch row indices and ``feats`` the ``m`` column indices being binned.
    ``lo``/``width``/``edges``/``n_edges``/``equal_width`` describe each of the
    ``m`` features (``edges`` is padded on the right with ``+inf``).  Writes the
    bin index of every (feature, row) pair into ``out[m, b]``; a value goes to
    bin ``j`` iff ``edges[j-1] <= v < edges[j]``.
``add_class_counts``
    ``counts[slots[i], bins[i, j], y[j]] += 1``.
``add_moments``
    adds ``(1, y, y**2, y**3, y**4)`` into ``moments[slots[i], bins[i, j], :]``.
``fisher_yates_prefix``
    swaps ``perm[i]`` with ``perm[draws[i - start]]`` for ``i`` in
    ``[start, stop)``.
"""

from __future__ import annotations

import numpy as np


def bin_batch(X, rows, feats, lo, width, edges, n_edges, equal_width, out):
    for i, col in enumerate(feats):
        v = X[rows, col]
        T = int(n_edges[i])
        e = edges[i, :T]
        if equal_width[i]:
            if width[i] > 0:
                idx = np.floor((v - lo[i]) / width[i])
                idx = np.clip(idx, 0, T).astype(np.int64)
            else:
                idx = np.zeros(v.shape[0], dtype=np.int64)
            if T > 0:
                # floating-point correction against the stored edges
                while True:
                    up = (idx < T) & (v >= e[np.minimum(idx, T - 1)])
                    if not up.any():
                        break
                    idx += up
                while True:
                    down = (idx > 0) & (v < e[np.maximum(idx - 1, 0)])
                    if not down.any():
                        break
                    idx -= down
            out[i, :] = idx
        else:
            out[i, :] = np.searchsorted(e, v, side="right")


def add_class_counts(bins, y, slots, counts):
    m, b = bins.shape
    s = np.repeat(np.asarray(slots, dtype=np.int64), b)
    np.add.at(counts, (s, bins.ravel(), np.tile(y, m)), 1)


def add_moments(bins, y, slots, moments):
    m, b = bins.shape
    y = np.asarray(y, dtype=np.float64)
    y2 = y * y
    powers = np.stack([np.ones_like(y), y, y2, y2 * y, y2 * y2], axis=1)
    s = np.repeat(np.asarray(slots, dtype=np.int64), b)
    np.add.at(moments, (s, bins.ravel()), np.tile(powers, (m, 1)))


def fisher_yates_prefix(perm, start, stop, draws):
    for i in range(start, stop):
        j = draws[i - start]
        perm[i], perm[j] = perm[j], perm[i]
