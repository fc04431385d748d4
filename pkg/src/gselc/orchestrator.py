"""Batch-sequential driver: initial design, then rounds of fit / mix / propose / ingest.

Three modes share the loop:

* ``gselc`` - ``ceil(alpha * b)`` points by expected improvement, the rest by SELC;
* ``ei``    - the whole batch by expected improvement;
* ``selc``  - the whole batch by SELC, no surrogate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import ei as ei_mod
from . import gp
from .mixing import high_value_region, response_shift
from .selc import (
    ForbiddenArray,
    mutation_weights,
    propose_selc_batch,
    update_forbidden,
)
from .space import Dataset, DesignSpace, Observation, minimax_design

log = logging.getLogger(__name__)

MODES = ("gselc", "ei", "selc")
ORIGINS = ("initial", "ei", "selc", "backfill")


class RunError(RuntimeError):
    """Invalid configuration or an operation out of sequence (budget, pending batch)."""


@dataclass
class RunConfig:
    space: DesignSpace
    n0: int
    b: int
    N: int
    mode: str = "gselc"
    seed: int = 0
    c: float = 0.75
    strength: int = 1
    order: Optional[int] = None
    forbidden_update: str = "round"
    w0: float = 0.25
    p_mut: Optional[float] = None
    significance_alpha: float = 0.05
    retry_factor: int = 50
    ei_form: str = "standard"
    fit: gp.FitSettings = field(default_factory=gp.FitSettings)
    cluster: bool = True
    k_max: int = 5
    silhouette_threshold: float = 0.25
    minimax_iter: int = 200
    prior_forbidden: tuple = ()
    initial_design: Optional[tuple] = None

    def __post_init__(self):
        if self.order is None:
            self.order = max(1, self.space.d - 1)
        self.prior_forbidden = tuple(tuple(p) for p in self.prior_forbidden)
        if self.initial_design is not None:
            self.initial_design = tuple(tuple(p) for p in self.initial_design)
        self.validate()

    def validate(self) -> None:
        M = self.space.M
        if self.mode not in MODES:
            raise RunError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.b < 1:
            raise RunError("batch size b must be at least 1")
        if self.n0 < 1:
            raise RunError("initial design size n0 must be at least 1")
        if not self.n0 <= self.N <= M:
            raise RunError(f"need n0 <= N <= M, got n0={self.n0}, N={self.N}, M={M}")
        if not 0 < self.c < 1:
            raise RunError("threshold fraction c must lie in (0, 1)")
        if not 1 <= self.order <= self.space.d:
            raise RunError(f"forbidden-array order must lie in 1..{self.space.d}")
        if self.strength < 0:
            raise RunError("forbidden-array strength must be nonnegative")
        if self.forbidden_update not in ("round", "cumulative"):
            raise RunError("forbidden_update must be 'round' or 'cumulative'")
        if self.ei_form not in ei_mod.EI_FORMS:
            raise RunError(f"ei_form must be one of {ei_mod.EI_FORMS}")
        for p in self.prior_forbidden:
            if not self.space.contains(p):
                raise RunError(f"prior forbidden entry {p} is not an admissible point")
        if self.initial_design is not None:
            pts = self.initial_design
            if len(pts) != self.n0:
                raise RunError(f"initial design has {len(pts)} points, n0={self.n0}")
            if len(set(pts)) != len(pts) or not all(self.space.contains(p) for p in pts):
                raise RunError("initial design points must be distinct admissible candidates")

    def to_dict(self) -> dict:
        return {
            "space": self.space.to_dict(),
            "n0": self.n0,
            "b": self.b,
            "N": self.N,
            "mode": self.mode,
            "seed": self.seed,
            "c": self.c,
            "strength": self.strength,
            "order": self.order,
            "forbidden_update": self.forbidden_update,
            "w0": self.w0,
            "p_mut": self.p_mut,
            "significance_alpha": self.significance_alpha,
            "retry_factor": self.retry_factor,
            "ei_form": self.ei_form,
            "fit": self.fit.to_dict(),
            "cluster": self.cluster,
            "k_max": self.k_max,
            "silhouette_threshold": self.silhouette_threshold,
            "minimax_iter": self.minimax_iter,
            "prior_forbidden": [list(p) for p in self.prior_forbidden],
            "initial_design": None if self.initial_design is None else [list(p) for p in self.initial_design],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        data["space"] = DesignSpace.from_dict(data["space"])
        data["fit"] = gp.FitSettings.from_dict(data.get("fit", {}))
        data["prior_forbidden"] = tuple(tuple(p) for p in data.get("prior_forbidden", ()))
        if data.get("initial_design") is not None:
            data["initial_design"] = tuple(tuple(p) for p in data["initial_design"])
        return cls(**data)


@dataclass
class BatchProposal:
    points: list
    origins: list
    y_hat: list
    s2: list
    ei: list
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.points)) != len(self.points):
            raise RunError("a batch proposal contains duplicate points")

    def __len__(self):
        return len(self.points)

    def to_dict(self) -> dict:
        return {
            "points": [list(p) for p in self.points],
            "origins": list(self.origins),
            "y_hat": list(self.y_hat),
            "s2": list(self.s2),
            "ei": list(self.ei),
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BatchProposal":
        return cls(
            points=[tuple(p) for p in data["points"]],
            origins=list(data["origins"]),
            y_hat=list(data["y_hat"]),
            s2=list(data["s2"]),
            ei=list(data["ei"]),
            info=dict(data.get("info", {})),
        )


@dataclass
class RunState:
    config: RunConfig
    dataset: Dataset
    forbidden: ForbiddenArray
    rng: np.random.Generator
    round: int = 0
    pending: Optional[BatchProposal] = None
    history: list = field(default_factory=list)
    last_theta: Optional[tuple] = None

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def f_max(self) -> float:
        return float(self.dataset.y.max()) if self.dataset.n else float("-inf")

    @property
    def remaining(self) -> int:
        return self.config.N - self.dataset.n

    def best(self) -> Observation:
        y = self.dataset.y
        return self.dataset.observations[int(np.argmax(y))]


def _stream_seeds(seed: int):
    design_ss, run_ss = np.random.SeedSequence(seed).spawn(2)
    return design_ss, run_ss


def init_run(config: RunConfig) -> RunState:
    """Fresh state whose pending batch is the initial design.

    The design comes from its own random stream derived from ``config.seed``,
    so runs that differ only in mode share the same starting design.
    """
    config.validate()
    design_ss, run_ss = _stream_seeds(config.seed)
    if config.initial_design is not None:
        points = list(config.initial_design)
    else:
        points = minimax_design(
            config.space, config.n0, np.random.default_rng(design_ss), max_iter=config.minimax_iter
        )
    n0 = len(points)
    pending = BatchProposal(
        points=points,
        origins=["initial"] * n0,
        y_hat=[None] * n0,
        s2=[None] * n0,
        ei=[None] * n0,
        info={"round": 0, "kind": "initial"},
    )
    forbidden = ForbiddenArray(config.prior_forbidden, config.strength, config.order)
    return RunState(
        config=config,
        dataset=Dataset(),
        forbidden=forbidden,
        rng=np.random.default_rng(run_ss),
        pending=pending,
    )


def _fit_surrogate(state: RunState):
    cfg = state.config
    data = state.dataset
    if data.n < 2 or np.ptp(data.y) == 0.0:
        return gp.constant_fit(data, cfg.space.d)
    return gp.fit(data, cfg.fit, state.rng, theta0=state.last_theta)


def _backfill(ranking: np.ndarray, taken: set, space: DesignSpace, k: int) -> list:
    out = []
    for i in ranking:
        if len(out) == k:
            break
        p = space.point(int(i))
        if p not in taken:
            out.append(int(i))
            taken.add(p)
    return out


def propose_batch(state: RunState, b: Optional[int] = None) -> BatchProposal:
    """Assemble the next batch and mark it pending on ``state``.

    ``b`` overrides the configured batch size for this round only.
    """
    cfg = state.config
    b = cfg.b if b is None else int(b)
    if b < 1:
        raise RunError("batch size b must be at least 1")
    space = cfg.space
    if state.pending is not None:
        raise RunError("a batch is already pending; ingest its results first")
    if state.dataset.n == 0:
        raise RunError("no data yet; ingest the initial design first")
    if state.remaining <= 0:
        raise RunError(f"budget exhausted: n={state.n}, N={cfg.N}")

    unsampled = space.M - state.n
    b_eff = min(b, state.remaining, unsampled)
    info = {"round": state.round, "b": b_eff}
    if b_eff < min(b, state.remaining):
        info["warning"] = f"only {unsampled} unsampled candidates remain"
        log.warning("truncating batch to %d: library nearly exhausted", b_eff)

    sampled = set(state.dataset.points)
    sampled_idx = np.fromiter((space.index_of(p) for p in sampled), dtype=int, count=len(sampled))
    forb = state.forbidden.mask(space)
    eligible = np.ones(space.M, dtype=bool)
    eligible[sampled_idx] = False
    eligible &= ~forb
    f_max = state.f_max

    y_hat = s2 = ei_vals = None
    ranking = None
    n_ei = 0
    if cfg.mode in ("gselc", "ei"):
        fitted = _fit_surrogate(state)
        info.update(
            theta=list(fitted.params.theta),
            mu_hat=fitted.mu_hat,
            sigma2_hat=fitted.sigma2_hat,
            nugget=fitted.nugget,
            degenerate=fitted.degenerate,
        )
        if not fitted.degenerate:
            state.last_theta = tuple(fitted.params.theta)
        y_hat, s2 = gp.predict_all(fitted, space.candidate_array())
        ei_vals = ei_mod.expected_improvement(y_hat, s2, f_max, cfg.ei_form)
        ranking = ei_mod.ei_ranking(ei_vals, eligible)
        if cfg.mode == "ei":
            n_ei = b_eff
            info.update(alpha=1.0)
        elif fitted.degenerate:
            info.update(alpha=0.0, region_size=0, clusters=None)
        else:
            shift = response_shift(state.dataset.y)
            region = high_value_region(
                fitted, space, y_hat, f_max, cfg.c, shift,
                cluster=cfg.cluster, k_max=cfg.k_max,
                silhouette_threshold=cfg.silhouette_threshold, rng=state.rng,
            )
            n_ei = -(-region.size * b_eff // space.M)
            info.update(alpha=region.alpha, region_size=region.size, clusters=region.k, shift=shift)
    else:
        info.update(alpha=0.0)

    n_ei = min(n_ei, b_eff, int(eligible.sum()))
    chosen = [int(i) for i in ranking[:n_ei]] if n_ei else []
    origins = ["ei"] * len(chosen)

    n_selc = b_eff - len(chosen)
    if n_selc:
        weights = mutation_weights(state.dataset, space, cfg.significance_alpha, cfg.w0)
        exclude = sampled | {space.point(i) for i in chosen}
        offspring = propose_selc_batch(
            state.dataset, state.forbidden, weights, space, n_selc, exclude, state.rng,
            p_mut=cfg.p_mut, retry_factor=cfg.retry_factor,
        )
        chosen += [space.index_of(p) for p in offspring]
        origins += ["selc"] * len(offspring)
        info["selc_main_effects"] = sorted(
            j for j, vec in enumerate(weights.marginals) if not np.allclose(vec, vec[0])
        )

    short = b_eff - len(chosen)
    if short:
        taken = sampled | {space.point(i) for i in chosen}
        if ranking is None:
            ranking = state.rng.permutation(np.flatnonzero(eligible))
        extra = _backfill(ranking, taken, space, short)
        if len(extra) < short:
            # only forbidden candidates are left
            rest = np.flatnonzero(~np.isin(np.arange(space.M), sampled_idx))
            extra += _backfill(rest, taken, space, short - len(extra))
            info["warning"] = "forbidden candidates used to complete the batch"
        chosen += extra
        origins += ["backfill"] * len(extra)
    info.update(n_ei=origins.count("ei"), n_selc=origins.count("selc"), n_backfill=origins.count("backfill"))

    def pick(arr):
        return [None if arr is None else float(arr[i]) for i in chosen]

    proposal = BatchProposal(
        points=[space.point(i) for i in chosen],
        origins=origins,
        y_hat=pick(y_hat),
        s2=pick(s2),
        ei=pick(ei_vals),
        info=info,
    )
    state.pending = proposal
    return proposal


def ingest_results(state: RunState, results) -> RunState:
    """Add responses for exactly the pending points; all-or-nothing.

    ``results`` is an iterable of ``Observation`` (or ``(point, y)`` pairs).
    The forbidden array absorbs the worst runs of this round (or of all data
    when ``forbidden_update == "cumulative"``); in ``ei`` mode it is left as is.
    """
    if state.pending is None:
        raise RunError("no pending batch to ingest")
    obs = [r if isinstance(r, Observation) else Observation(tuple(r[0]), r[1]) for r in results]
    got = {}
    for o in obs:
        if o.point in got:
            raise RunError(f"duplicate result for point {o.point}")
        got[o.point] = o
    expected = list(state.pending.points)
    missing = [p for p in expected if p not in got]
    extra = [p for p in got if p not in set(expected)]
    if missing or extra:
        raise RunError(f"results do not match the pending batch: missing={missing[:5]}, unknown={extra[:5]}")

    new = [got[p] for p in expected]
    cfg = state.config
    before = state.f_max
    dataset = state.dataset.extend(new)
    forbidden = state.forbidden
    if cfg.mode != "ei":
        source = Dataset(tuple(new)) if cfg.forbidden_update == "round" else dataset
        forbidden = update_forbidden(forbidden, source)
    added = [e for e in forbidden.entries if e not in set(state.forbidden.entries)]

    row = dict(state.pending.info)
    row.update(
        round=state.round,
        n=dataset.n,
        f_max=float(dataset.y.max()),
        improved=bool(dataset.y.max() > before),
        origins={o: state.pending.origins.count(o) for o in ORIGINS if o in state.pending.origins},
        new_forbidden=[list(e) for e in added],
    )
    state.dataset = dataset
    state.forbidden = forbidden
    state.history.append(row)
    state.pending = None
    state.round += 1
    return state


def run_to_budget(
    state: RunState,
    oracle: Callable,
    callback: Optional[Callable] = None,
) -> RunState:
    """Alternate propose and ingest until ``N`` runs are observed.

    ``oracle`` maps a point (tuple) to its response. ``callback(state,
    proposal)`` is invoked after every proposal, before its results arrive.
    """
    if state.pending is not None:
        if callback is not None:
            callback(state, state.pending)
        ingest_results(state, [Observation(p, oracle(p)) for p in state.pending.points])
    while state.remaining > 0:
        proposal = propose_batch(state)
        if callback is not None:
            callback(state, proposal)
        ingest_results(state, [Observation(p, oracle(p)) for p in proposal.points])
    return state


def batch_schedule(n0: int, b: int, N: int) -> list:
    """Sizes of the follow-up batches for a budget ``N``; the last may be short."""
    sizes = [b] * ((N - n0) // b)
    if (N - n0) % b:
        sizes.append((N - n0) % b)
    return sizes


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def rng_from_state(state: dict) -> np.random.Generator:
    name = state["bit_generator"]
    bitgen = getattr(np.random, name)()
    bitgen.state = state
    return np.random.Generator(bitgen)


def state_to_dict(state: RunState) -> dict:
    return {
        "config": state.config.to_dict(),
        "observations": [[list(o.point), o.y] for o in state.dataset.observations],
        "forbidden": [list(e) for e in state.forbidden.entries],
        "rng": rng_state(state.rng),
        "round": state.round,
        "pending": None if state.pending is None else state.pending.to_dict(),
        "history": state.history,
        "last_theta": None if state.last_theta is None else list(state.last_theta),
    }


def state_from_dict(data: dict) -> RunState:
    config = RunConfig.from_dict(data["config"])
    dataset = Dataset(tuple(Observation(tuple(p), y) for p, y in data["observations"]))
    forbidden = ForbiddenArray(tuple(tuple(e) for e in data["forbidden"]), config.strength, config.order)
    return RunState(
        config=config,
        dataset=dataset,
        forbidden=forbidden,
        rng=rng_from_state(data["rng"]),
        round=int(data["round"]),
        pending=None if data["pending"] is None else BatchProposal.from_dict(data["pending"]),
        history=list(data["history"]),
        last_theta=None if data.get("last_theta") is None else tuple(data["last_theta"]),
    )
