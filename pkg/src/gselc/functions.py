"""Synthetic response surfaces used as simulated compound libraries."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .space import DesignSpace


def levy4(x) -> float:
    """Four-factor Levy-type surface, maximized on the 1..10 grid at (10, 10, 10, 10)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 4:
        raise ValueError("levy4 takes four coordinates")
    return _levy(x)


def _levy(x: np.ndarray):
    w = (x + 2.0) / 4.0
    v = (x - 2.0) / 4.0
    out = np.sin(np.pi * w[..., 0]) ** 2
    out = out + np.sum(v[..., :-1] ** 2 * (1.0 + 10.0 * np.sin(np.pi * w[..., :-1] + 1.0) ** 2), axis=-1)
    out = out + v[..., -1] ** 2 * (1.0 + np.sin(2.0 * np.pi * (x[..., -1] - 1.0)) ** 2)
    return float(out) if np.ndim(out) == 0 else out


def paviani5(x) -> float:
    """Five-factor Paviani function; coordinates must lie strictly inside (0, 11)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 5:
        raise ValueError("paviani5 takes five coordinates")
    if np.any(x <= 0) or np.any(x >= 11):
        raise ValueError("paviani5 is defined only for 0 < x_i < 11")
    out = np.sum(np.log(x) ** 2 + np.log(11.0 - x) ** 2, axis=-1) - np.prod(x, axis=-1) ** 0.2
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class TestFunction:
    """A named response surface over a design space.

    ``fn`` must accept a single point or an ``(m, d)`` array.
    """

    __test__ = False  # not a pytest class

    name: str
    space: DesignSpace
    fn: Callable

    @property
    def d(self) -> int:
        return self.space.d

    def __call__(self, x) -> float:
        return float(self.fn(np.asarray(x, dtype=float)))

    def values(self) -> np.ndarray:
        """Responses over the whole library, in enumeration order."""
        return np.asarray(self.fn(self.space.candidate_array()), dtype=float)

    def relabeled(self, factor: int, mapping: dict) -> "TestFunction":
        """Surface seen through a level relabeling: ``f'(x) = f(x with x[factor] -> mapping)``."""
        keys = np.array(sorted(mapping), dtype=float)
        vals = np.array([mapping[k] for k in sorted(mapping)], dtype=float)
        base = self.fn

        def fn(x):
            x = np.array(x, dtype=float, copy=True)
            pos = np.searchsorted(keys, x[..., factor])
            x[..., factor] = vals[pos]
            return base(x)

        return TestFunction(f"{self.name}[{factor}:relabel]", self.space, fn)


def make_function(name: str, space: Optional[DesignSpace] = None) -> TestFunction:
    if name == "levy4":
        return TestFunction("levy4", space or DesignSpace.grid(4, 10), _levy)
    if name == "paviani5":
        return TestFunction("paviani5", space or DesignSpace.grid(5, 10), paviani5)
    raise ValueError(f"unknown test function {name!r}")
