"""SELC: genetic search with forbidden arrays and weighted mutation."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.stats import f as f_dist

from .space import Dataset, DesignSpace

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ForbiddenArray:
    """Banned runs: any point agreeing with an entry on ``order`` or more coordinates is excluded."""

    entries: tuple = ()
    strength: int = 1
    order: int = 1

    def __post_init__(self):
        entries = []
        for e in self.entries:
            e = tuple(e)
            if e not in entries:
                entries.append(e)
        object.__setattr__(self, "entries", tuple(entries))
        if self.strength < 0:
            raise ValueError("strength must be nonnegative")
        if self.order < 1:
            raise ValueError("order must be at least 1")
        if entries and self.order > len(entries[0]):
            raise ValueError(f"order {self.order} exceeds the number of factors {len(entries[0])}")

    def is_forbidden(self, x: Sequence) -> bool:
        return is_forbidden(self, x)

    def mask(self, space: DesignSpace) -> np.ndarray:
        """Boolean mask over the enumerated library, True where forbidden."""
        C = space.candidate_array()
        out = np.zeros(len(C), dtype=bool)
        for e in self.entries:
            out |= (C == np.asarray(e, dtype=float)).sum(axis=1) >= self.order
        return out

    def patterns(self) -> list:
        """Every banned order-``k`` projection as a tuple with ``None`` for free coordinates."""
        out = []
        for e in self.entries:
            for cols in itertools.combinations(range(len(e)), self.order):
                pat = tuple(e[j] if j in cols else None for j in range(len(e)))
                if pat not in out:
                    out.append(pat)
        return out


def is_forbidden(fa: ForbiddenArray, x: Sequence) -> bool:
    x = tuple(x)
    for e in fa.entries:
        if sum(a == b for a, b in zip(e, x)) >= fa.order:
            return True
    return False


def update_forbidden(fa: ForbiddenArray, data: Dataset) -> ForbiddenArray:
    """Add the ``fa.strength`` lowest-response runs of ``data`` (ties: earlier run first)."""
    if data.n == 0:
        raise ValueError("cannot update a forbidden array from empty data")
    if fa.strength == 0:
        return fa
    order = np.argsort(data.y, kind="stable")[: fa.strength]
    worst = [data.observations[i].point for i in order]
    return ForbiddenArray(fa.entries + tuple(worst), fa.strength, fa.order)


# -- effect screening ----------------------------------------------------------


@dataclass(frozen=True)
class Significance:
    main: frozenset = frozenset()
    pairs: tuple = ()  # ((j, k), p_value) sorted by p-value


def _dummies(codes: np.ndarray) -> np.ndarray:
    levels = np.unique(codes)
    return (codes[:, None] == levels[None, 1:]).astype(float)


def _rss_rank(Z: np.ndarray, y: np.ndarray):
    coef, _, rank, _ = np.linalg.lstsq(Z, y, rcond=None)
    resid = y - Z @ coef
    return float(resid @ resid), int(rank)


def significant_effects(data: Dataset, alpha: float = 0.05) -> Significance:
    """Partial F-tests on a categorical linear model of the accumulated data.

    Two-factor interactions enter only when every observed cell of the pair
    holds at least two runs. When the model leaves no residual degrees of
    freedom, interactions are dropped; if main effects alone are still not
    estimable nothing is declared significant.
    """
    n = data.n
    if n < 3:
        return Significance()
    X = data.X
    y = data.y
    d = X.shape[1]
    mains = {j: _dummies(X[:, j]) for j in range(d)}
    inter = {}
    for j, k in itertools.combinations(range(d), 2):
        _, counts = np.unique(X[:, [j, k]], axis=0, return_counts=True)
        if len(counts) > 1 and counts.min() >= 2:
            cols = [a * b for a in mains[j].T for b in mains[k].T]
            if cols:
                inter[(j, k)] = np.column_stack(cols)

    def design(terms):
        blocks = [np.ones((n, 1))] + [mains[t] if isinstance(t, int) else inter[t] for t in terms]
        return np.hstack(blocks)

    terms = list(range(d)) + list(inter)
    rss, rank = _rss_rank(design(terms), y)
    if n - rank < 1 and inter:
        terms = list(range(d))
        rss, rank = _rss_rank(design(terms), y)
    resid_df = n - rank
    if resid_df < 1:
        return Significance()

    pvals = {}
    for t in terms:
        reduced = [u for u in terms if u != t]
        rss_r, rank_r = _rss_rank(design(reduced), y)
        df_t = rank - rank_r
        if df_t < 1:
            continue
        num = max(rss_r - rss, 0.0) / df_t
        if rss <= 1e-12 * max(float(y @ y), 1e-300):
            pvals[t] = 0.0 if num > 0 else 1.0
            continue
        pvals[t] = float(f_dist.sf(num / (rss / resid_df), df_t, resid_df))
    main = frozenset(t for t, pv in pvals.items() if isinstance(t, int) and pv < alpha)
    pairs = sorted(
        ((t, pv) for t, pv in pvals.items() if not isinstance(t, int) and pv < alpha),
        key=lambda item: (item[1], item[0]),
    )
    return Significance(main, tuple(pairs))


# -- weighted mutation ---------------------------------------------------------


def level_weights(averages: Sequence[float], w0: float = 0.25) -> np.ndarray:
    """Baseline-plus-boost mutation probabilities from per-level average responses.

    Each level gets ``w0 / L``; the remaining ``1 - w0`` is shared in
    proportion to the positive part of the level averages. Unobserved levels
    (NaN) and levels with nonpositive averages get no boost; when no level has
    a positive average the boost is spread uniformly.
    """
    avg = np.asarray(averages, dtype=float)
    L = avg.size
    pos = np.where(np.isfinite(avg), np.maximum(avg, 0.0), 0.0)
    total = pos.sum()
    boost = pos / total if total > 0 else np.full(L, 1.0 / L)
    return w0 / L + boost * (1.0 - w0)


@dataclass(frozen=True)
class MutationWeights:
    """Per-factor level distributions, plus joint tables for significant factor pairs."""

    marginals: tuple
    joints: dict = field(default_factory=dict)  # (j, k) -> (L_j, L_k) array
    partner: dict = field(default_factory=dict)  # factor -> paired factor

    def check(self, tol: float = 1e-10) -> None:
        for vec in self.marginals:
            if np.any(vec < 0) or abs(vec.sum() - 1.0) > tol:
                raise AssertionError("marginal mutation weights are not a distribution")
        for tab in self.joints.values():
            if np.any(tab < 0) or abs(tab.sum() - 1.0) > tol:
                raise AssertionError("joint mutation weights are not a distribution")


def uniform_weights(space: DesignSpace) -> MutationWeights:
    return MutationWeights(tuple(np.full(len(lv), 1.0 / len(lv)) for lv in space.levels))


def level_averages(data: Dataset, space: DesignSpace, j: int) -> np.ndarray:
    X, y = data.X, data.y
    return np.array(
        [y[X[:, j] == lv].mean() if np.any(X[:, j] == lv) else np.nan for lv in space.levels[j]]
    )


def mutation_weights(
    data: Dataset,
    space: DesignSpace,
    alpha: float = 0.05,
    w0: float = 0.25,
    significance: Optional[Significance] = None,
) -> MutationWeights:
    """Mutation distributions driven by the effects found significant in ``data``."""
    if data.n == 0:
        raise ValueError("mutation weights need data")
    sig = significance if significance is not None else significant_effects(data, alpha)
    X, y = data.X, data.y
    partner, joints = {}, {}
    for (j, k), _ in sig.pairs:
        if j in partner or k in partner:
            continue
        Lj, Lk = len(space.levels[j]), len(space.levels[k])
        avg = np.full((Lj, Lk), np.nan)
        for a, la in enumerate(space.levels[j]):
            for b, lb in enumerate(space.levels[k]):
                sel = (X[:, j] == la) & (X[:, k] == lb)
                if sel.any():
                    avg[a, b] = y[sel].mean()
        joints[(j, k)] = level_weights(avg.ravel(), w0).reshape(Lj, Lk)
        partner[j], partner[k] = k, j
    marginals = []
    for j, lv in enumerate(space.levels):
        if j in sig.main and j not in partner:
            marginals.append(level_weights(level_averages(data, space, j), w0))
        else:
            marginals.append(np.full(len(lv), 1.0 / len(lv)))
    return MutationWeights(tuple(marginals), joints, partner)


# -- offspring generation ------------------------------------------------------


def _draw(rng: np.random.Generator, probs: np.ndarray) -> int:
    c = np.cumsum(probs)
    return int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), len(probs) - 1))


def _mutate(child: list, space: DesignSpace, weights: MutationWeights, p_mut: float, rng) -> list:
    d = space.d
    flips = rng.random(d) < p_mut
    index = space.level_index()
    for j in range(d):
        if not flips[j]:
            continue
        k = weights.partner.get(j)
        if k is None:
            child[j] = space.levels[j][_draw(rng, weights.marginals[j])]
            continue
        key = (j, k) if (j, k) in weights.joints else (k, j)
        tab = weights.joints[key]
        if flips[k]:
            if k < j:
                continue  # already drawn jointly with the partner
            flat = _draw(rng, tab.ravel())
            a, b = divmod(flat, tab.shape[1])
            first, second = key
            child[first] = space.levels[first][a]
            child[second] = space.levels[second][b]
        else:
            # conditional on the partner's current level
            cur = index[k][child[k]]
            probs = tab[:, cur] if key[0] == j else tab[cur, :]
            child[j] = space.levels[j][_draw(rng, probs)]
    return child


def parent_probabilities(y: np.ndarray) -> np.ndarray:
    """Fitness-proportional selection on ``y - min(y) + eps``, ``eps = 1e-6 * range(y)``."""
    y = np.asarray(y, dtype=float)
    span = np.ptp(y)
    if span == 0:
        return np.full(len(y), 1.0 / len(y))
    w = y - y.min() + 1e-6 * span
    return w / w.sum()


def propose_selc_batch(
    data: Dataset,
    fa: ForbiddenArray,
    weights: MutationWeights,
    space: DesignSpace,
    m: int,
    exclude: Iterable,
    rng: np.random.Generator,
    p_mut: Optional[float] = None,
    retry_factor: int = 50,
) -> list:
    """Up to ``m`` new distinct offspring that are neither forbidden nor excluded.

    Each attempt picks two parents by shifted fitness, applies single-point
    crossover and per-factor weighted mutation. After ``retry_factor * m``
    attempts the points found so far are returned; the caller decides how to
    fill the shortfall.
    """
    if m <= 0:
        return []
    if data.n == 0:
        raise ValueError("SELC needs at least one observed run")
    d = space.d
    p_mut = 1.0 / d if p_mut is None else p_mut
    taken = {tuple(p) for p in exclude}
    probs = parent_probabilities(data.y)
    parents = data.points
    out = []
    for _ in range(retry_factor * m):
        i, j = rng.choice(len(parents), size=2, p=probs)
        a, b = parents[i], parents[j]
        cut = int(rng.integers(1, d)) if d > 1 else 1
        child = list(a[:cut]) + list(b[cut:])
        child = tuple(_mutate(child, space, weights, p_mut, rng))
        if child in taken or is_forbidden(fa, child):
            continue
        if not space.is_full_grid and not space.contains(child):
            continue
        taken.add(child)
        out.append(child)
        if len(out) == m:
            break
    if len(out) < m:
        log.debug("SELC produced %d of %d offspring", len(out), m)
    return out
