"""Constant-mean Gaussian process (kriging) surrogate with power-exponential correlation.

The mean and process variance are profiled out analytically; the correlation
scales ``theta`` are estimated by maximizing the profile likelihood over
``log(theta)`` from several random starts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.linalg.lapack import dpotrf, dpotri, dpotrs
from scipy.optimize import minimize

from .space import Dataset

log = logging.getLogger(__name__)


class GpNumericalError(RuntimeError):
    """Correlation matrix could not be factorized even with the largest nugget."""


@dataclass(frozen=True)
class CorrelationParams:
    theta: tuple
    p: tuple

    def __post_init__(self):
        theta = tuple(float(t) for t in self.theta)
        p = tuple(float(v) for v in self.p)
        if len(theta) != len(p):
            raise ValueError("theta and p must have the same length")
        if any(t < 0 for t in theta):
            raise ValueError(f"theta must be nonnegative, got {theta}")
        if any(not 0 < v <= 2 for v in p):
            raise ValueError(f"smoothness exponents must lie in (0, 2], got {p}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "p", p)

    @classmethod
    def gaussian(cls, theta: Sequence[float]) -> "CorrelationParams":
        return cls(tuple(theta), (2.0,) * len(theta))


@dataclass
class FitSettings:
    """Knobs for maximum-likelihood estimation of the correlation scales."""

    starts: int = 8
    max_iter: int = 200
    theta_bounds: tuple = (1e-3, 10.0)
    p: Optional[tuple] = None
    nugget_ladder: tuple = (0.0, 1e-10, 1e-8, 1e-6)
    optimizer: str = "L-BFGS-B"
    warm_start: bool = True
    ftol: float = 1e-9  # relative decrease that stops L-BFGS-B

    def to_dict(self) -> dict:
        return {
            "starts": self.starts,
            "max_iter": self.max_iter,
            "theta_bounds": list(self.theta_bounds),
            "p": None if self.p is None else list(self.p),
            "nugget_ladder": list(self.nugget_ladder),
            "optimizer": self.optimizer,
            "warm_start": self.warm_start,
            "ftol": self.ftol,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FitSettings":
        data = dict(data)
        for key in ("theta_bounds", "nugget_ladder"):
            if key in data:
                data[key] = tuple(data[key])
        if data.get("p") is not None:
            data["p"] = tuple(data["p"])
        return cls(**data)


@dataclass(frozen=True)
class GpFit:
    """A fitted surrogate. ``chol`` is the lower Cholesky factor of ``R + nugget*I``."""

    X: np.ndarray
    y: np.ndarray
    params: CorrelationParams
    mu_hat: float
    sigma2_hat: float
    chol: Optional[np.ndarray]
    nugget: float = 0.0
    degenerate: bool = False
    loglik: float = float("nan")
    _w: Optional[np.ndarray] = field(default=None, repr=False)
    _u: Optional[np.ndarray] = field(default=None, repr=False)
    _one_rinv_one: float = field(default=float("nan"), repr=False)

    @property
    def n(self) -> int:
        return len(self.y)


def correlation(a: Sequence[float], b: Sequence[float], params: CorrelationParams) -> float:
    """Power-exponential correlation ``prod_k exp(-theta_k |a_k - b_k|^p_k)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.shape != (len(params.theta),):
        raise ValueError(f"dimension mismatch: {a.shape}, {b.shape}, d={len(params.theta)}")
    theta = np.asarray(params.theta)
    p = np.asarray(params.p)
    return float(np.exp(-np.sum(theta * np.abs(a - b) ** p)))


def _powdiff(A: np.ndarray, B: np.ndarray, p: np.ndarray) -> np.ndarray:
    """``|A_ik - B_jk|^p_k`` as an ``(len(A), len(B), d)`` array."""
    diff = np.abs(A[:, None, :] - B[None, :, :])
    if np.all(p == 2.0):
        return diff * diff
    return diff**p


def correlation_matrix(A: np.ndarray, B: np.ndarray, params: CorrelationParams) -> np.ndarray:
    theta = np.asarray(params.theta)
    p = np.asarray(params.p)
    if np.all(p == 2.0):
        # scaled squared distances without the (m, n, d) temporary
        s = np.sqrt(theta)
        As, Bs = A * s, B * s
        d2 = (As * As).sum(1)[:, None] + (Bs * Bs).sum(1)[None, :] - 2.0 * As @ Bs.T
        np.maximum(d2, 0.0, out=d2)
        return np.exp(-d2)
    return np.exp(-(_powdiff(A, B, p) @ theta))


def _factorize(R: np.ndarray, ladder: Sequence[float]):
    n = len(R)
    scale = float(np.mean(np.diag(R)))
    for nug in ladder:
        try:
            L = cholesky(R + nug * scale * np.eye(n), lower=True, check_finite=False)
        except LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return L, nug * scale
    raise GpNumericalError(
        f"correlation matrix of {n} points is not positive definite with nuggets {tuple(ladder)}"
    )


def profile_loglik(
    X: np.ndarray,
    y: np.ndarray,
    params: CorrelationParams,
    nugget_ladder: Sequence[float] = (0.0, 1e-10, 1e-8, 1e-6),
) -> float:
    """Concentrated log-likelihood ``-(n log sigma2_hat + log|R|) / 2`` (constants dropped)."""
    val, _ = _loglik_and_grad(X, y, np.asarray(params.theta), np.asarray(params.p), nugget_ladder, False)
    return val


def _chol_ladder(R: np.ndarray, ladder: Sequence[float]):
    """Lower Cholesky factor of ``R + nugget*I`` for the first nugget that works."""
    n = len(R)
    for nug in ladder:
        A = R + nug * np.eye(n) if nug else R
        L, info = dpotrf(A, lower=1, clean=1, overwrite_a=0)
        if info == 0:
            return L, nug
    return None, None


def _pair_powers(X: np.ndarray, p: np.ndarray) -> np.ndarray:
    """``D[k, i, j] = |x_ik - x_jk|^p_k`` restricted to the strict lower triangle ``i > j``."""
    n = len(X)
    D = np.abs(X.T[:, :, None] - X.T[:, None, :]) ** p[:, None, None]
    D *= np.tril(np.ones((n, n), dtype=bool), -1)
    return D


def _loglik_and_grad(X, y, theta, p, ladder, want_grad, D=None):
    """Profile log-likelihood and its gradient in ``theta``.

    ``D`` is the output of :func:`_pair_powers`; only the lower triangle of the
    correlation matrix is formed, which is all the factorization reads.
    """
    n = len(y)
    if D is None:
        D = _pair_powers(X, p)
    R = np.exp(-np.tensordot(theta, D, axes=1))
    L, nug = _chol_ladder(R, ladder)
    if L is None:
        return -np.inf, None
    sol, _ = dpotrs(L, np.column_stack([y, np.ones(n)]), lower=1)
    Ri_y, Ri_1 = sol[:, 0], sol[:, 1]
    mu = Ri_y.sum() / Ri_1.sum()
    alpha = Ri_y - mu * Ri_1
    sigma2 = float((y - mu) @ alpha) / n
    if not sigma2 > 0:
        return -np.inf, None
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    val = -0.5 * (n * np.log(sigma2) + logdet)
    if not want_grad:
        return val, None
    Rinv, _ = dpotri(L, lower=1)
    # d loglik / d theta_k = 0.5 sum_ij D_kij R_ij (Rinv_ij - alpha_i alpha_j / sigma2);
    # the summand is symmetric and D is zero on and above the diagonal
    Rinv -= np.outer(alpha, alpha / sigma2)
    Rinv *= R
    return val, D.reshape(len(theta), -1) @ Rinv.ravel()


def _build(X, y, params, ladder, loglik=float("nan")) -> GpFit:
    n = len(y)
    R = correlation_matrix(X, X, params)
    L, nug = _factorize(R, ladder)
    one = np.ones(n)
    Ri_1 = cho_solve((L, True), one, check_finite=False)
    Ri_y = cho_solve((L, True), y, check_finite=False)
    one_rinv_one = float(Ri_1.sum())
    mu = float(Ri_y.sum() / one_rinv_one)
    w = Ri_y - mu * Ri_1
    sigma2 = max(float((y - mu) @ w) / n, 0.0)
    u = solve_triangular(L, one, lower=True, check_finite=False)
    for arr in (X, y, L, w, u):
        arr.flags.writeable = False
    return GpFit(
        X=X,
        y=y,
        params=params,
        mu_hat=mu,
        sigma2_hat=sigma2,
        chol=L,
        nugget=nug,
        loglik=loglik,
        _w=w,
        _u=u,
        _one_rinv_one=one_rinv_one,
    )


def fit_fixed(data: Dataset, params: CorrelationParams, nugget_ladder=(0.0, 1e-10, 1e-8, 1e-6)) -> GpFit:
    """Fit with given correlation parameters; only the mean and variance are estimated."""
    X = np.array(data.X, dtype=float)
    y = np.array(data.y, dtype=float)
    ll = profile_loglik(X, y, params, nugget_ladder)
    return _build(X, y, params, nugget_ladder, ll)


def constant_fit(data: Dataset, d: Optional[int] = None) -> GpFit:
    """Degenerate zero-variance model predicting the mean response everywhere."""
    X = np.array(data.X, dtype=float)
    y = np.array(data.y, dtype=float)
    d = X.shape[1] if d is None else d
    return GpFit(
        X=X,
        y=y,
        params=CorrelationParams.gaussian([1.0] * d),
        mu_hat=float(np.mean(y)),
        sigma2_hat=0.0,
        chol=None,
        degenerate=True,
    )


def fit(
    data: Dataset,
    settings: Optional[FitSettings] = None,
    rng: Optional[np.random.Generator] = None,
    theta0: Optional[Sequence[float]] = None,
) -> GpFit:
    """Maximum-likelihood fit of the constant-mean GP.

    Parameters
    ----------
    data : Dataset
        Training observations, at least two.
    settings : FitSettings, optional
        Number of random starts, bounds on ``theta``, smoothness and nugget ladder.
    rng : numpy.random.Generator, optional
        Source of the random starts (uniform in ``log theta``).
    theta0 : sequence of float, optional
        Extra starting point tried before the random ones, typically the
        previous round's estimate.

    Returns
    -------
    GpFit
        ``degenerate=True`` with ``sigma2_hat == 0`` when all responses coincide.
    """
    settings = settings or FitSettings()
    rng = rng if rng is not None else np.random.default_rng()
    if data.n < 2:
        raise ValueError("fitting needs at least two observations")
    X = np.array(data.X, dtype=float)
    y = np.array(data.y, dtype=float)
    d = X.shape[1]
    if np.ptp(y) == 0.0:
        return constant_fit(data, d)

    p = np.asarray(settings.p if settings.p is not None else (2.0,) * d, dtype=float)
    lo, hi = np.log(settings.theta_bounds[0]), np.log(settings.theta_bounds[1])
    ladder = settings.nugget_ladder
    # centering keeps the likelihood well scaled; mu is profiled so nothing changes
    yc = (y - y.mean()) / np.std(y)
    D = _pair_powers(X, p)

    def objective(log_theta):
        theta = np.exp(log_theta)
        val, grad = _loglik_and_grad(X, yc, theta, p, ladder, True, D)
        if not np.isfinite(val):
            return 1e300, np.zeros(d)
        return -val, -grad * theta

    starts = []
    if theta0 is not None and settings.warm_start:
        starts.append(np.clip(np.log(np.asarray(theta0, dtype=float)), lo, hi))
    starts.extend(rng.uniform(lo, hi, size=(settings.starts, d)))
    best_x, best_val = None, np.inf
    for x0 in starts:
        if settings.optimizer == "L-BFGS-B":
            res = minimize(
                objective, x0, jac=True, method="L-BFGS-B",
                bounds=[(lo, hi)] * d, options={"maxiter": settings.max_iter, "ftol": settings.ftol},
            )
        else:
            res = minimize(
                lambda z: objective(np.clip(z, lo, hi))[0], x0, method="Nelder-Mead",
                options={"maxiter": settings.max_iter * d, "xatol": 1e-4, "fatol": 1e-8},
            )
        x = np.clip(res.x, lo, hi)
        val = objective(x)[0]
        # strict improvement only: ties keep the earliest start
        if val < best_val:
            best_x, best_val = x, val
    if best_x is None or not np.isfinite(best_val) or best_val >= 1e300:
        raise GpNumericalError("likelihood is not finite at any starting point")
    params = CorrelationParams(tuple(np.exp(best_x)), tuple(p))
    return _build(X, y, params, ladder, profile_loglik(X, y, params, ladder))


def _exact_hits(fit: GpFit, Xs: np.ndarray) -> np.ndarray:
    """Index of the training point equal to each row of ``Xs``, or -1."""
    lookup = {tuple(row): i for i, row in enumerate(fit.X.tolist())}
    return np.array([lookup.get(tuple(row), -1) for row in Xs.tolist()], dtype=int)


def predict_all(fit: GpFit, Xs, chunk: int = 8192, raw: bool = False):
    """BLUP and its mean squared error at every row of ``Xs``.

    With a zero nugget the predictor interpolates, so rows that coincide with
    training points return the observed response and zero error exactly
    (unless ``raw`` is set). Negative round-off in the error is clamped to 0
    unless ``raw`` is set.
    """
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    m = len(Xs)
    if fit.degenerate:
        return np.full(m, fit.mu_hat), np.zeros(m)
    yhat = np.empty(m)
    s2 = np.empty(m)
    for lo in range(0, m, chunk):
        block = Xs[lo : lo + chunk]
        r = correlation_matrix(block, fit.X, fit.params)
        yhat[lo : lo + chunk] = fit.mu_hat + r @ fit._w
        V = solve_triangular(fit.chol, r.T, lower=True, check_finite=False)
        rRr = np.einsum("ij,ij->j", V, V)
        oneRr = fit._u @ V
        s2[lo : lo + chunk] = fit.sigma2_hat * (1.0 - rRr + (1.0 - oneRr) ** 2 / fit._one_rinv_one)
    if raw:
        return yhat, s2
    np.maximum(s2, 0.0, out=s2)
    if fit.nugget == 0.0:
        hits = _exact_hits(fit, Xs)
        mask = hits >= 0
        yhat[mask] = fit.y[hits[mask]]
        s2[mask] = 0.0
    return yhat, s2


def predict(fit: GpFit, x: Sequence[float]) -> float:
    """Best linear unbiased predictor at a single point."""
    return float(predict_all(fit, np.asarray(x, dtype=float)[None, :])[0][0])


def predict_mse(fit: GpFit, x: Sequence[float]) -> float:
    """Mean squared prediction error at a single point (nonnegative)."""
    return float(predict_all(fit, np.asarray(x, dtype=float)[None, :])[1][0])
