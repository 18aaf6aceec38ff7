"""Clustering evaluation: NMI and distortion statistics."""

from __future__ import annotations

import math

import numpy as np

from .core import ClusterState, point_distortions
from .divergences import DivergenceSpec
from .errors import EmptyDataset, LengthMismatch

__all__ = [
    "cluster_sizes",
    "distortion_stats",
    "entropy",
    "mutual_information",
    "nmi",
]


def _labels(x):
    x = np.asarray(x).ravel()
    if x.size == 0:
        raise EmptyDataset("a labeling needs at least one label")
    return x


def _contingency(c, a):
    c, a = _labels(c), _labels(a)
    if c.shape != a.shape:
        raise LengthMismatch(f"labelings have lengths {c.size} and {a.size}")
    _, ci = np.unique(c, return_inverse=True)
    _, ai = np.unique(a, return_inverse=True)
    table = np.zeros((ci.max() + 1, ai.max() + 1), dtype=np.int64)
    np.add.at(table, (ci, ai), 1)
    return table


def _entropy_from_counts(counts) -> float:
    n = counts.sum()
    return -math.fsum(k / n * math.log(k / n) for k in counts.ravel() if k > 0)


def entropy(labels) -> float:
    """Plug-in entropy in nats."""
    _, counts = np.unique(_labels(labels), return_counts=True)
    return _entropy_from_counts(counts)


def mutual_information(c, a) -> float:
    table = _contingency(c, a)
    n = table.sum()
    rows = table.sum(axis=1)
    cols = table.sum(axis=0)
    terms = []
    for i, j in zip(*np.nonzero(table)):
        p = table[i, j] / n
        terms.append(p * math.log(table[i, j] * n / (rows[i] * cols[j])))
    return max(math.fsum(terms), 0.0)


def nmi(c, a) -> float:
    """``I(C, A) / sqrt(H(C) H(A))``.

    When either labeling has zero entropy the ratio is undefined; the result
    is then 1 for identical partitions and 0 otherwise.
    """
    table = _contingency(c, a)
    hc = _entropy_from_counts(table.sum(axis=1))
    ha = _entropy_from_counts(table.sum(axis=0))
    if hc == 0 or ha == 0:
        identical = table.shape[0] == table.shape[1] == 1
        return 1.0 if identical else 0.0
    # the product commutes exactly, so nmi(c, a) == nmi(a, c) bit for bit
    value = mutual_information(c, a) / math.sqrt(hc * ha)
    return min(max(value, 0.0), 1.0)


def distortion_stats(div: DivergenceSpec, data, state: ClusterState) -> dict:
    """Average and maximum point-to-center divergence."""
    d = point_distortions(div, data, state)
    return {"avg": float(np.mean(d)), "max": float(np.max(d))}


def cluster_sizes(labels) -> np.ndarray:
    return np.bincount(np.asarray(labels, dtype=np.int64).ravel())
