"""Improvement, expected improvement and top-m candidate selection (maximization)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.stats import norm

from .gp import GpFit, predict_all
from .space import DesignSpace, Point

EI_FORMS = ("standard", "as_printed")


@dataclass(frozen=True)
class EiScore:
    point: Point
    y_hat: float
    s2: float
    ei: float
    index: int = -1


def improvement(y: float, f_max: float) -> float:
    return max(float(y) - float(f_max), 0.0)


def expected_improvement(y_hat, s2, f_max: float, form: str = "standard"):
    """Expected improvement over ``f_max`` under a normal predictive distribution.

    ``form="standard"`` is ``(y_hat - f_max) Phi(u) + s phi(u)`` with
    ``u = (y_hat - f_max) / s``. ``form="as_printed"`` multiplies the density
    term by ``s**2`` instead of ``s``. Where ``s == 0`` the plain improvement
    ``max(y_hat - f_max, 0)`` is returned. Accepts scalars or arrays.
    """
    if form not in EI_FORMS:
        raise ValueError(f"unknown EI form {form!r}; expected one of {EI_FORMS}")
    y_hat = np.asarray(y_hat, dtype=float)
    s2 = np.maximum(np.asarray(s2, dtype=float), 0.0)
    s = np.sqrt(s2)
    delta = y_hat - f_max
    pos = s > 0
    safe_s = np.where(pos, s, 1.0)
    u = delta / safe_s
    spread = s2 if form == "as_printed" else s
    ei = np.where(pos, delta * norm.cdf(u) + spread * norm.pdf(u), np.maximum(delta, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def ei_ranking(ei: np.ndarray, eligible: np.ndarray) -> np.ndarray:
    """Eligible candidate indices by descending EI; ties keep enumeration order."""
    idx = np.flatnonzero(eligible)
    order = np.argsort(-ei[idx], kind="stable")
    return idx[order]


def select_top_ei(
    fit: GpFit,
    space: DesignSpace,
    sampled: Iterable,
    f_max: float,
    m: int,
    *,
    form: str = "standard",
    forbidden_mask: Optional[np.ndarray] = None,
    predictions: Optional[tuple] = None,
) -> list:
    """The ``m`` unsampled candidates with the largest EI, best first.

    ``forbidden_mask`` (length ``M``) removes further candidates from
    consideration; ``predictions`` may carry precomputed ``(y_hat, s2)`` over
    the whole library.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    eligible = np.ones(space.M, dtype=bool)
    for p in sampled:
        eligible[space.index_of(p)] = False
    if forbidden_mask is not None:
        eligible &= ~forbidden_mask
    if m > eligible.sum():
        raise ValueError(f"only {int(eligible.sum())} eligible candidates remain, {m} requested")
    if m == 0:
        return []
    if predictions is None:
        predictions = predict_all(fit, space.candidate_array())
    y_hat, s2 = predictions
    ei = expected_improvement(y_hat, s2, f_max, form)
    top = ei_ranking(ei, eligible)[:m]
    return [EiScore(space.point(int(i)), float(y_hat[i]), float(s2[i]), float(ei[i]), int(i)) for i in top]
