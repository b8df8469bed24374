"""Feature-space distances, the within/between variability objectives and
linkage distances.

The within- and between-region variabilities use plain (unsquared)
Euclidean distances to region means; the squared flavour lives in
:func:`regionkit.metrics.normalized_sse`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LINKAGES",
    "as_features",
    "distance",
    "region_means",
    "within_variability",
    "between_variability",
    "region_cost",
    "linkage_distance",
    "minmax_normalize",
    "RegionSummary",
    "summarize",
]

LINKAGES = ("ward", "complete", "average", "single")


def as_features(features, n=None):
    """Validate a feature matrix: 2-D, finite, ``m >= 1``, ``n`` rows if given."""
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValueError(f"features must be an (n, m) matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    if n is not None and x.shape[0] != n:
        raise ValueError(f"features have {x.shape[0]} rows, graph has {n} units")
    return x


def distance(u, v):
    """Euclidean distance between two feature vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    return float(np.sqrt(np.sum((u - v) ** 2)))


def _labels(partition):
    return np.asarray(getattr(partition, "labels", partition), dtype=np.int64)


def region_means(partition, features):
    """``(k, m)`` region means and ``(k,)`` region sizes."""
    labels = _labels(partition)
    x = as_features(features, len(labels))
    k = int(getattr(partition, "k", labels.max() + 1))
    counts = np.bincount(labels, minlength=k).astype(float)
    sums = np.zeros((k, x.shape[1]))
    np.add.at(sums, labels, x)
    return sums / counts[:, None], counts


def within_variability(partition, features):
    """Sum over units of the distance to their region mean."""
    x = as_features(features)
    means, _ = region_means(partition, x)
    dev = x - means[_labels(partition)]
    return float(np.sqrt((dev**2).sum(axis=1)).sum())


def between_variability(partition, features):
    """Size-weighted sum of region-mean distances to the global mean."""
    x = as_features(features)
    means, counts = region_means(partition, x)
    gap = np.sqrt(((means - x.mean(axis=0)) ** 2).sum(axis=1))
    return float((counts * gap).sum())


def region_cost(features, members):
    """Within variability of a single region."""
    x = np.asarray(features, dtype=float)[np.asarray(members)]
    return float(np.sqrt(((x - x.mean(axis=0)) ** 2).sum(axis=1)).sum())


def _ssd(x):
    return float(((x - x.mean(axis=0)) ** 2).sum())


def linkage_distance(kind, a, b, features):
    """Distance between two disjoint regions under a linkage rule.

    ``ward`` is the increase of the summed squared deviations caused by
    the merge; ``complete``, ``average`` and ``single`` are the maximum,
    mean and minimum pairwise Euclidean distance between members.
    """
    a = np.unique(np.asarray(list(a), dtype=np.int64))
    b = np.unique(np.asarray(list(b), dtype=np.int64))
    if len(a) == 0 or len(b) == 0:
        raise ValueError("regions must be nonempty")
    if np.intersect1d(a, b).size:
        raise ValueError("regions overlap")
    x = as_features(features)
    if kind == "ward":
        return _ssd(x[np.concatenate([a, b])]) - _ssd(x[a]) - _ssd(x[b])
    diff = x[a][:, None, :] - x[b][None, :, :]
    d = np.sqrt((diff**2).sum(axis=2))
    if kind == "complete":
        return float(d.max())
    if kind == "average":
        return float(d.mean())
    if kind == "single":
        return float(d.min())
    raise ValueError(f"unknown linkage {kind!r}; choose from {LINKAGES}")


def minmax_normalize(features):
    """Map every column affinely onto [0, 1]; constant columns become 0."""
    x = as_features(features)
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    out = np.zeros_like(x)
    ok = span > 0
    out[:, ok] = (x[:, ok] - lo[ok]) / span[ok]
    return out


@dataclass
class RegionSummary:
    """Running count, sum and sum of squares of a region's features."""

    count: int
    sum: np.ndarray
    sumsq: np.ndarray = field(repr=False)

    @classmethod
    def of(cls, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return cls(len(x), x.sum(axis=0), (x**2).sum(axis=0))

    @property
    def mean(self):
        return self.sum / self.count

    @property
    def ssd(self):
        """Summed squared deviation from the mean."""
        return float((self.sumsq - self.sum**2 / self.count).sum())

    def add(self, x):
        x = np.asarray(x, dtype=float)
        self.count += 1
        self.sum = self.sum + x
        self.sumsq = self.sumsq + x**2

    def remove(self, x):
        if self.count <= 1:
            raise ValueError("a region summary cannot become empty")
        x = np.asarray(x, dtype=float)
        self.count -= 1
        self.sum = self.sum - x
        self.sumsq = self.sumsq - x**2

    def merge(self, other):
        return RegionSummary(self.count + other.count, self.sum + other.sum, self.sumsq + other.sumsq)


def summarize(partition, features):
    x = as_features(features)
    return [RegionSummary.of(x[m]) for m in partition.regions()]
