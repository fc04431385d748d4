"""High-value region, its clusters, and the EI/SELC mixing ratio."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .gp import GpFit, predict_all
from .space import DesignSpace


@dataclass(frozen=True)
class HighValueRegion:
    c: float
    f_max: float
    members: tuple  # candidate indices in enumeration order
    alpha: float
    k: Optional[int] = None
    labels: Optional[tuple] = None
    shift: float = 0.0

    @property
    def size(self) -> int:
        return len(self.members)


def response_shift(y: Sequence[float]) -> float:
    """Offset making the incumbent positive: 0 when ``max(y) > 0``, else ``-min(y) + 0.05 range(y)``."""
    y = np.asarray(y, dtype=float)
    if y.max() > 0:
        return 0.0
    span = float(np.ptp(y))
    shift = -float(y.min()) + 0.05 * span
    if shift <= 0 or y.max() + shift <= 0:
        # all responses equal and nonpositive
        shift = -float(y.max()) + 1.0
    return shift


def region_mask(y_hat: np.ndarray, c: float, f_max: float) -> np.ndarray:
    if not 0 < c < 1:
        raise ValueError(f"threshold fraction c must lie in (0, 1), got {c}")
    if not f_max > 0:
        raise ValueError("the incumbent must be positive; shift responses first")
    return np.asarray(y_hat) > c * f_max


def region_S(
    fit: GpFit,
    space: DesignSpace,
    c: float,
    f_max: float,
    y_hat: Optional[np.ndarray] = None,
) -> list:
    """Candidates whose prediction exceeds ``c * f_max`` (sampled ones included).

    ``fit`` and ``f_max`` must be on the same (possibly shifted) response scale.
    """
    if y_hat is None:
        y_hat = predict_all(fit, space.candidate_array())[0]
    mask = region_mask(y_hat, c, f_max)
    return [space.point(int(i)) for i in np.flatnonzero(mask)]


def mixing_alpha(members: Sequence, space: DesignSpace) -> float:
    """Discrete mixing ratio ``|S| / M``."""
    return len(members) / space.M


def ei_share(n_members: int, M: int, b: int) -> int:
    """``ceil(alpha * b)`` with ``alpha = n_members / M``, in exact integer arithmetic."""
    if b < 0 or not 0 <= n_members <= M:
        raise ValueError("need 0 <= |S| <= M and b >= 0")
    return min(-(-n_members * b // M), b)


def ceil_share(alpha: float, b: int) -> int:
    """``ceil(alpha * b)`` clipped to ``[0, b]`` for a real-valued ratio."""
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    return min(max(math.ceil(alpha * b - 1e-12), 0), b)


def cluster_count(
    members,
    k_max: int = 5,
    rng: Optional[np.random.Generator] = None,
    silhouette_threshold: float = 0.25,
    restarts: int = 5,
    max_points: int = 1000,
):
    """Number of clusters in the high-value region and a partition of it.

    k-means is run for ``k = 1..k_max``; the ``k`` with the largest mean
    silhouette wins, falling back to ``k = 1`` below ``silhouette_threshold``.
    Large regions are clustered on a seeded subsample of ``max_points`` and the
    remaining members are assigned to the nearest centroid.

    Returns
    -------
    k : int
    labels : numpy.ndarray
        Cluster label per member, in member order.
    """
    from sklearn.cluster import KMeans
    from sklearn.metrics import silhouette_score

    pts = np.asarray(members, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = len(pts)
    if n == 0:
        raise ValueError("cannot cluster an empty region")
    rng = rng if rng is not None else np.random.default_rng(0)
    seed = int(rng.integers(2**31 - 1))
    sample = pts
    if n > max_points:
        sample = pts[np.sort(np.random.default_rng(seed).choice(n, max_points, replace=False))]
    k_top = min(k_max, len(np.unique(sample, axis=0)))
    best_k, best_score, best_model = 1, -np.inf, None
    for k in range(2, k_top + 1):
        if k >= len(sample):
            break
        model = KMeans(n_clusters=k, n_init=restarts, random_state=seed).fit(sample)
        if len(np.unique(model.labels_)) < 2:
            continue
        score = silhouette_score(sample, model.labels_)
        if score > best_score:
            best_k, best_score, best_model = k, score, model
    if best_model is None or best_score < silhouette_threshold:
        return 1, np.zeros(n, dtype=int)
    return best_k, best_model.predict(pts).astype(int)


def high_value_region(
    fit: GpFit,
    space: DesignSpace,
    y_hat: np.ndarray,
    f_max: float,
    c: float = 0.75,
    shift: float = 0.0,
    cluster: bool = False,
    k_max: int = 5,
    silhouette_threshold: float = 0.25,
    rng: Optional[np.random.Generator] = None,
) -> HighValueRegion:
    """Assemble the region, its mixing ratio and (optionally) its cluster structure.

    ``y_hat`` and ``f_max`` are on the original response scale; ``shift`` is
    added to both before thresholding.
    """
    mask = region_mask(np.asarray(y_hat) + shift, c, f_max + shift)
    members = tuple(int(i) for i in np.flatnonzero(mask))
    alpha = len(members) / space.M
    k = labels = None
    if cluster and members:
        k, lab = cluster_count(
            space.candidate_array()[list(members)], k_max, rng, silhouette_threshold
        )
        labels = tuple(int(v) for v in lab)
    return HighValueRegion(c, f_max + shift, members, alpha, k, labels, shift)
