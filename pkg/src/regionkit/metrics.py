"""Unsupervised cluster-quality metrics and risk labelling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .objective import as_features, between_variability, region_means, within_variability

__all__ = [
    "MetricsReport",
    "calinski_harabasz",
    "silhouette",
    "normalized_sse",
    "RISK_QUANTILES",
    "national_thresholds",
    "bin_national",
    "ahr",
    "risk_rank",
    "evaluate",
    "CSV_FIXED",
    "csv_header",
]

# cut points of the five bins: bins 1-3 split the lower 70% evenly,
# bin 4 holds the 70th-85th percentile, bin 5 the top 15%
RISK_QUANTILES = (0.7 / 3, 1.4 / 3, 0.70, 0.85)
HIGH_RISK_BIN = 4


def _check_k(partition, n):
    k = partition.k
    if k < 2:
        raise ValueError("metric needs at least 2 regions")
    if k >= n:
        raise ValueError("metric needs fewer regions than units")
    return k


def calinski_harabasz(partition, features):
    """``(n - k) / (k - 1) * B / W`` with the unsquared within (W) and
    between (B) variabilities.

    Returns ``inf`` when ``W == 0``.
    """
    x = as_features(features, partition.n)
    n = len(x)
    k = _check_k(partition, n)
    w = within_variability(partition, x)
    if w == 0:
        return math.inf
    return (n - k) / (k - 1) * between_variability(partition, x) / w


def silhouette(partition, features, sample_cap=None, seed=0, chunk_elems=4_000_000):
    """Mean silhouette coefficient.

    For each scored point, ``a`` is its mean distance to the other
    members of its region and ``b`` the smallest mean distance to the
    members of another region; the score is ``(b - a) / max(a, b)``.
    Points in singleton regions score 0.  When ``sample_cap`` is below
    ``n`` a seeded uniform sample of that many points is scored (against
    all points).
    """
    x = as_features(features, partition.n)
    n = len(x)
    k = partition.k
    if k < 2:
        raise ValueError("silhouette needs at least 2 regions")
    labels = partition.labels
    if sample_cap is not None and sample_cap < n:
        idx = np.sort(np.random.default_rng(seed).choice(n, size=sample_cap, replace=False))
    else:
        idx = np.arange(n)
    sizes = np.bincount(labels, minlength=k).astype(float)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    step = max(1, chunk_elems // max(n, 1))
    scores = np.empty(len(idx))
    for lo in range(0, len(idx), step):
        rows = idx[lo:lo + step]
        sums = cdist(x[rows], x) @ onehot
        own = labels[rows]
        own_size = sizes[own]
        with np.errstate(divide="ignore", invalid="ignore"):
            a = sums[np.arange(len(rows)), own] / (own_size - 1)
            means = sums / sizes
        means[np.arange(len(rows)), own] = np.inf
        b = means.min(axis=1)
        denom = np.maximum(a, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(denom > 0, (b - a) / denom, 0.0)
        s[own_size == 1] = 0.0
        scores[lo:lo + len(rows)] = s
    return float(scores.mean())


def normalized_sse(partition, features):
    """Sum over regions of the ordered-pair squared distance sum divided
    by the region size.

    Uses ``sum_{i,j} |x_i - x_j|^2 = 2 s * sum_i |x_i - mean|^2`` so the
    per-region term is twice its squared deviation sum.
    """
    x = as_features(features, partition.n)
    means, _ = region_means(partition, x)
    return float(2.0 * ((x - means[partition.labels]) ** 2).sum())


def _cut_values(col, quantiles):
    s = np.sort(col)
    n = len(s)
    cuts = []
    for q in quantiles:
        pos = max(int(math.ceil(q * n - 1e-9)) - 1, 0)
        cuts.append(s[pos])
    return np.array(cuts)


def national_thresholds(features, quantiles=RISK_QUANTILES):
    """Per-column bin cut values, shape ``(4, m)``.

    A value falls above a cut when it is strictly greater than the
    order statistic sitting at that quantile, so ties never straddle a
    bin boundary and a constant column lands entirely in bin 1.
    """
    x = as_features(features)
    return np.column_stack([_cut_values(x[:, j], quantiles) for j in range(x.shape[1])])


def bin_national(features, thresholds=None):
    """Risk bins 1..5 per unit and feature column.

    ``thresholds`` (from :func:`national_thresholds`) may come from a
    larger reference dataset; by default they are computed from
    ``features`` itself.  Bins 4 and 5 together hold the top 30%.
    """
    x = as_features(features)
    cuts = national_thresholds(x) if thresholds is None else np.asarray(thresholds, dtype=float)
    if cuts.shape != (len(RISK_QUANTILES), x.shape[1]):
        raise ValueError(f"thresholds must have shape {(len(RISK_QUANTILES), x.shape[1])}")
    return 1 + (x[:, None, :] > cuts[None, :, :]).sum(axis=1)


def ahr(partition, bins):
    """Average count of high-risk (bin >= 4) domains per unit, per region."""
    high = (np.asarray(bins) >= HIGH_RISK_BIN).sum(axis=1).astype(float)
    sums = np.bincount(partition.labels, weights=high, minlength=partition.k)
    return sums / partition.sizes()


def risk_rank(values):
    """Rank 1..k ascending in ``values`` (ties by region label)."""
    order = np.argsort(np.asarray(values), kind="stable")
    rank = np.empty(len(order), dtype=np.int64)
    rank[order] = np.arange(1, len(order) + 1)
    return rank


@dataclass
class MetricsReport:
    chi: float
    silhouette: float
    sse_normalized: float
    within: float
    between: float
    ahr_per_region: np.ndarray = field(repr=False)
    region_risk_rank: np.ndarray = field(repr=False)

    def as_dict(self):
        return {
            "chi": self.chi,
            "silhouette": self.silhouette,
            "sse_normalized": self.sse_normalized,
            "within": self.within,
            "between": self.between,
            "ahr_per_region": [float(v) for v in self.ahr_per_region],
            "region_risk_rank": [int(v) for v in self.region_risk_rank],
        }


def evaluate(partition, features, bins=None, sample_cap=10_000, seed=0):
    """Full unsupervised report for one partition.

    Metrics that need at least two regions (CHI, silhouette) are NaN for
    a single region.
    """
    x = as_features(features, partition.n)
    if bins is None:
        bins = bin_national(x)
    multi = 2 <= partition.k < partition.n
    chi = calinski_harabasz(partition, x) if multi else math.nan
    sil = silhouette(partition, x, sample_cap=sample_cap, seed=seed) if partition.k >= 2 else math.nan
    risk = ahr(partition, bins)
    return MetricsReport(
        chi=chi,
        silhouette=sil,
        sse_normalized=normalized_sse(partition, x),
        within=within_variability(partition, x),
        between=between_variability(partition, x),
        ahr_per_region=risk,
        region_risk_rank=risk_rank(risk),
    )


CSV_FIXED = ["algo", "level", "seed", "k", "time_s", "peak_mem_bytes", "chi", "silhouette", "sse_norm", "within",
             "between"]


def csv_header(max_regions, extra=()):
    return CSV_FIXED + [f"ahr_{i}" for i in range(1, max_regions + 1)] + ["status", *extra]
