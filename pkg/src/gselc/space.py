"""Discrete design spaces, experiment data and space-filling initial designs."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

Point = tuple

DEFAULT_MAX_CANDIDATES = 10**7


class DesignSpaceError(ValueError):
    """Raised for malformed spaces, inadmissible points or oversize enumerations."""


def _as_number(v):
    f = float(v)
    if not math.isfinite(f):
        raise DesignSpaceError(f"level value {v!r} is not finite")
    return int(f) if f.is_integer() else f


@dataclass(frozen=True)
class DesignSpace:
    """A compound library: ``d`` factors, each with a finite set of numeric levels.

    Parameters
    ----------
    levels : sequence of sequences
        Admissible level values per factor.
    candidates : sequence of points, optional
        Explicit admissible subset of the full grid. When omitted the library
        is the full factorial of ``levels``.
    names : sequence of str, optional
        Factor (column) names, ``x1..xd`` by default.
    max_candidates : int
        Refuse to materialize libraries larger than this.
    """

    levels: tuple
    candidates: Optional[tuple] = None
    names: tuple = ()
    max_candidates: int = DEFAULT_MAX_CANDIDATES
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        levels = tuple(tuple(_as_number(v) for v in lv) for lv in self.levels)
        if len(levels) < 1:
            raise DesignSpaceError("a design space needs at least one factor")
        for j, lv in enumerate(levels):
            if len(lv) < 2:
                raise DesignSpaceError(f"factor {j} has fewer than 2 levels")
            if len(set(lv)) != len(lv):
                raise DesignSpaceError(f"factor {j} has repeated level values")
        object.__setattr__(self, "levels", levels)
        names = tuple(self.names) if self.names else tuple(f"x{j + 1}" for j in range(len(levels)))
        if len(names) != len(levels) or len(set(names)) != len(names):
            raise DesignSpaceError("factor names must be unique, one per factor")
        object.__setattr__(self, "names", names)
        if self.candidates is not None:
            cands = tuple(tuple(_as_number(v) for v in p) for p in self.candidates)
            if not cands:
                raise DesignSpaceError("explicit candidate list is empty")
            lookup = [set(lv) for lv in levels]
            for p in cands:
                if len(p) != len(levels) or any(v not in s for v, s in zip(p, lookup)):
                    raise DesignSpaceError(f"candidate {p} uses inadmissible levels")
            if len(set(cands)) != len(cands):
                raise DesignSpaceError("explicit candidate list has duplicates")
            object.__setattr__(self, "candidates", cands)

    @classmethod
    def grid(cls, d: int, n_levels: int, **kwargs) -> "DesignSpace":
        """Full factorial with integer levels ``1..n_levels`` on every factor."""
        return cls(levels=tuple(tuple(range(1, n_levels + 1)) for _ in range(d)), **kwargs)

    @property
    def d(self) -> int:
        return len(self.levels)

    @property
    def M(self) -> int:
        if self.candidates is not None:
            return len(self.candidates)
        return math.prod(len(lv) for lv in self.levels)

    @property
    def is_full_grid(self) -> bool:
        return self.candidates is None

    def candidate_array(self) -> np.ndarray:
        """All candidates as an ``(M, d)`` float array in enumeration order."""
        arr = self._cache.get("array")
        if arr is None:
            arr = np.asarray(enumerate_candidates(self), dtype=float).reshape(self.M, self.d)
            arr.flags.writeable = False
            self._cache["array"] = arr
        return arr

    def level_index(self) -> list:
        """Per-factor map from level value to its position."""
        lk = self._cache.get("level_index")
        if lk is None:
            lk = [{v: i for i, v in enumerate(lv)} for lv in self.levels]
            self._cache["level_index"] = lk
        return lk

    def index_of(self, point: Sequence) -> int:
        """Position of ``point`` in the enumeration order; raises if inadmissible."""
        p = tuple(_as_number(v) for v in point)
        if len(p) != self.d:
            raise DesignSpaceError(f"point {p} has {len(p)} coordinates, expected {self.d}")
        if self.candidates is not None:
            lookup = self._cache.get("cand_index")
            if lookup is None:
                lookup = {c: i for i, c in enumerate(self.candidates)}
                self._cache["cand_index"] = lookup
            try:
                return lookup[p]
            except KeyError:
                raise DesignSpaceError(f"point {p} is not in the candidate list") from None
        idx = 0
        for v, lk, lv in zip(p, self.level_index(), self.levels):
            if v not in lk:
                raise DesignSpaceError(f"point {p} uses inadmissible level {v}")
            idx = idx * len(lv) + lk[v]
        return idx

    def contains(self, point: Sequence) -> bool:
        try:
            self.index_of(point)
        except DesignSpaceError:
            return False
        return True

    def point(self, index: int) -> Point:
        if self.candidates is not None:
            return self.candidates[index]
        coords = []
        for lv in reversed(self.levels):
            index, r = divmod(index, len(lv))
            coords.append(lv[r])
        return tuple(reversed(coords))

    def to_dict(self) -> dict:
        out = {"levels": [list(lv) for lv in self.levels], "names": list(self.names)}
        if self.candidates is not None:
            out["candidates"] = [list(p) for p in self.candidates]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DesignSpace":
        cands = data.get("candidates")
        return cls(
            levels=data["levels"],
            candidates=None if cands is None else [tuple(p) for p in cands],
            names=tuple(data.get("names", ())),
        )


@dataclass(frozen=True)
class Observation:
    point: Point
    y: float

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(_as_number(v) for v in self.point))
        y = float(self.y)
        if not math.isfinite(y):
            raise DesignSpaceError(f"response at {self.point} is not finite")
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class Dataset:
    """Ordered experiment history; points are unique."""

    observations: tuple = ()

    def __post_init__(self):
        obs = tuple(self.observations)
        if len({o.point for o in obs}) != len(obs):
            raise DesignSpaceError("dataset contains a repeated point")
        object.__setattr__(self, "observations", obs)

    @property
    def n(self) -> int:
        return len(self.observations)

    def __len__(self):
        return len(self.observations)

    @property
    def points(self) -> list:
        return [o.point for o in self.observations]

    @property
    def X(self) -> np.ndarray:
        return np.array([o.point for o in self.observations], dtype=float).reshape(self.n, -1)

    @property
    def y(self) -> np.ndarray:
        return np.array([o.y for o in self.observations], dtype=float)

    def extend(self, new: Iterable[Observation]) -> "Dataset":
        return Dataset(self.observations + tuple(new))

    @classmethod
    def from_arrays(cls, X, y) -> "Dataset":
        return cls(tuple(Observation(tuple(p), v) for p, v in zip(np.asarray(X).tolist(), y)))


def enumerate_candidates(space: DesignSpace) -> list:
    """All admissible points, row-major over factor levels or in explicit-list order."""
    if space.M > space.max_candidates:
        raise DesignSpaceError(
            f"library has M={space.M} candidates, above the enumeration cap {space.max_candidates}"
        )
    if space.candidates is not None:
        return list(space.candidates)
    return list(itertools.product(*space.levels))


def distance(a: Sequence, b: Sequence) -> float:
    """Euclidean distance between two points on their numeric level values."""
    if len(a) != len(b):
        raise DesignSpaceError(f"dimension mismatch: {len(a)} vs {len(b)}")
    return math.sqrt(sum((float(u) - float(v)) ** 2 for u, v in zip(a, b)))


def _sqdist_to(C: np.ndarray, x: np.ndarray) -> np.ndarray:
    diff = C - x
    return np.einsum("ij,ij->i", diff, diff)


def covering_radius(space: DesignSpace, design: Sequence) -> float:
    """Largest distance from any candidate to its nearest design point."""
    C = space.candidate_array()
    near = np.full(len(C), np.inf)
    for p in design:
        np.minimum(near, _sqdist_to(C, np.asarray(p, dtype=float)), out=near)
    return float(np.sqrt(near.max()))


def minimax_design(
    space: DesignSpace,
    n0: int,
    rng: np.random.Generator,
    max_iter: int = 200,
    n_add: int = 16,
) -> list:
    """Random-start point-exchange approximation to a minimax-distance design.

    Starts from ``n0`` distinct random candidates and repeatedly swaps one
    design point for one candidate. A swap is taken when it lowers the
    covering radius, or keeps the radius and lowers the summed squared
    nearest-point distance; up to ``n0`` consecutive sideways swaps (equal
    objective, design not seen before) are allowed to cross plateaus. The best
    design visited is returned, so the result never covers worse than the
    random start. Additions are drawn from the candidates currently farthest
    from the design (all candidates when the library has at most 2000 points).
    """
    M = space.M
    if not 1 <= n0 <= M:
        raise DesignSpaceError(f"n0={n0} must lie in 1..M={M}")
    C = space.candidate_array()
    design = np.sort(rng.choice(M, size=n0, replace=False))
    if n0 == M:
        return [space.point(int(i)) for i in design]

    rows = np.arange(M)
    D = np.stack([_sqdist_to(C, C[i]) for i in design], axis=1)
    try_all = M <= 2000
    seen = {tuple(design)}
    best_design, best_obj = design.copy(), None
    sideways = 0
    for _ in range(max_iter):
        owner = D.argmin(axis=1)
        near = D[rows, owner]
        if n0 > 1:
            masked = D.copy()
            masked[rows, owner] = np.inf
            second = masked.min(axis=1)
        else:
            second = np.full(M, np.inf)
        obj = (near.max(), near.sum())
        if best_obj is None or obj < best_obj:
            best_obj, best_design = obj, design.copy()

        if try_all:
            adds = np.setdiff1d(rows, design)
        else:
            adds = np.flatnonzero(near == obj[0])
            if len(adds) > n_add:
                adds = np.sort(rng.choice(adds, size=n_add, replace=False))
        move = None
        for a in adds:
            if near[a] == 0.0:
                continue
            da = _sqdist_to(C, C[a])
            base = np.minimum(near, da)
            alt = np.minimum(second, da)
            gmax_base = np.full(n0, -np.inf)
            np.maximum.at(gmax_base, owner, base)
            gmax_alt = np.full(n0, -np.inf)
            np.maximum.at(gmax_alt, owner, alt)
            # covering radius after removing design point j, from per-owner maxima
            top = np.argsort(-gmax_base, kind="stable")[:2]
            excl = np.full(n0, gmax_base[top[0]])
            excl[top[0]] = gmax_base[top[1]] if n0 > 1 else -np.inf
            new_radius = np.maximum(excl, gmax_alt)
            new_total = (
                base.sum()
                - np.bincount(owner, weights=base, minlength=n0)
                + np.bincount(owner, weights=alt, minlength=n0)
            )
            for j in np.lexsort((new_total, new_radius)):
                cand = (new_radius[j], new_total[j])
                if move is not None and cand >= move[0]:
                    break
                trial = design.copy()
                trial[j] = a
                key = tuple(np.sort(trial))
                if key in seen:
                    continue
                move = (cand, int(a), int(j), da)
                break
        if move is None:
            break
        improving = move[0] < obj
        if not improving:
            if move[0] > obj or sideways >= n0:
                break
            sideways += 1
        else:
            sideways = 0
        _, a, j, da = move
        design[j] = a
        D[:, j] = da
        seen.add(tuple(np.sort(design)))
    owner = D.argmin(axis=1)
    near = D[rows, owner]
    if (near.max(), near.sum()) < best_obj:
        best_design = design
    return [space.point(int(i)) for i in np.sort(best_design)]


def relabel(space: DesignSpace, factor: int, k: int) -> dict:
    """Cyclic level shift ``l -> mod(l + k - 1, L) + 1`` for a factor with levels ``1..L``."""
    if not 0 <= factor < space.d:
        raise DesignSpaceError(f"factor index {factor} out of range for d={space.d}")
    lv = space.levels[factor]
    L = len(lv)
    if list(lv) != list(range(1, L + 1)):
        raise DesignSpaceError(f"factor {factor} levels are not the integers 1..{L}")
    return {l: (l + k - 1) % L + 1 for l in lv}


def apply_relabel(points: Iterable[Sequence], factor: int, mapping: dict) -> list:
    out = []
    for p in points:
        q = list(p)
        q[factor] = mapping[q[factor]]
        out.append(tuple(q))
    return out


def relabel_dataset(data: Dataset, factor: int, mapping: dict) -> Dataset:
    return Dataset(
        tuple(
            Observation(q, o.y)
            for q, o in zip(apply_relabel((o.point for o in data.observations), factor, mapping), data.observations)
        )
    )
