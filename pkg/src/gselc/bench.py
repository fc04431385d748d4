"""Replicated simulation studies and success-rate reports.

A replication runs one method to budget on a synthetic library and records
whether the best point it sampled is among the top five library values.
Replication ``i`` uses seed ``base_seed + i`` for every method and cell, so
all methods start from the same initial design.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import gp
from .functions import TestFunction, make_function
from .orchestrator import RunConfig, init_run, run_to_budget
from .selc import is_forbidden
from .space import relabel

log = logging.getLogger(__name__)

TOP = 5
METHOD_ORDER = ("ei", "selc", "gselc")
METHOD_LABEL = {"ei": "EI", "selc": "SELC", "gselc": "G-SELC"}


class InvariantViolation(AssertionError):
    pass


@dataclass(frozen=True)
class LibraryRanking:
    """Brute-force ranking of a library: indices by descending value, ties in enumeration order."""

    order: np.ndarray
    values: np.ndarray  # sorted descending
    levels: np.ndarray  # distinct values, descending
    ties: bool
    rtol: float = 1e-9

    def rank_of_value(self, value: float) -> int:
        """1 + number of distinct library values strictly above ``value``."""
        tol = self.rtol * max(1.0, abs(float(value)))
        return int(np.sum(self.levels > value + tol)) + 1


def library_ranking(fn: TestFunction, rtol: float = 1e-9) -> LibraryRanking:
    vals = fn.values()
    order = np.argsort(-vals, kind="stable")
    sorted_vals = vals[order]
    # collapse values equal up to round-off into one level
    levels = [sorted_vals[0]]
    for v in sorted_vals[1:]:
        if levels[-1] - v > rtol * max(1.0, abs(v)):
            levels.append(v)
    levels = np.array(levels)
    return LibraryRanking(order, sorted_vals, levels, len(levels) < len(vals), rtol)


@dataclass
class ReplicationResult:
    method: str
    N: int
    b: int
    seed: int
    best_point: tuple
    best_value: float
    rank: int
    n: int
    seconds: float
    history: list = field(default_factory=list, repr=False)
    points: list = field(default_factory=list, repr=False)


@dataclass
class BenchCell:
    run_size: int
    batch: int
    method: str
    counts: list  # successes at rank 1..TOP
    reps: int
    seed: int
    seconds: float = 0.0

    @property
    def percents(self) -> list:
        return [100.0 * c / self.reps for c in self.counts]

    @property
    def total(self) -> float:
        return 100.0 * sum(self.counts) / self.reps


@dataclass
class BenchReport:
    function: str
    cells: list
    results: list = field(default_factory=list, repr=False)

    def cell(self, run_size: int, batch: int, method: str) -> BenchCell:
        for c in self.cells:
            if (c.run_size, c.batch, c.method) == (run_size, batch, method):
                return c
        raise KeyError((run_size, batch, method))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run_size", "batch", "method"] + [f"r{i}" for i in range(1, TOP + 1)] + ["total", "reps", "seed"])
        for c in self.cells:
            w.writerow(
                [c.run_size, c.batch, c.method]
                + [f"{p:.1f}" for p in c.percents]
                + [f"{c.total:.1f}", c.reps, c.seed]
            )
        return buf.getvalue()

    def to_text(self, timings: bool = False) -> str:
        """Aligned table: ranks 5..1 left to right, then Max and Total, as in the classic layout."""
        head = ["Run size", "Batch", "Method"] + [f"{_ordinal(r)} best" for r in range(TOP, 1, -1)] + ["Max", "Total"]
        if timings:
            head.append("sec/rep")
        rows = []
        last = (None, None)
        for c in self.cells:
            key = (c.run_size, c.batch)
            pct = c.percents
            row = [
                str(c.run_size) if key[0] != last[0] else "",
                str(c.batch) if key != last else "",
                METHOD_LABEL.get(c.method, c.method),
            ] + [f"{pct[r - 1]:.1f}" for r in range(TOP, 0, -1)] + [f"{c.total:.1f}"]
            if timings:
                row.append(f"{c.seconds / c.reps:.2f}")
            rows.append(row)
            last = key
        widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(head)]
        lines = [f"{self.function}: percentage success in identifying the top {TOP} maxima"]
        lines.append("  ".join(h.rjust(wd) for h, wd in zip(head, widths)))
        lines.append("  ".join("-" * wd for wd in widths))
        lines += ["  ".join(v.rjust(wd) for v, wd in zip(r, widths)) for r in rows]
        return "\n".join(lines) + "\n"


def _ordinal(r: int) -> str:
    return {2: "2nd", 3: "3rd"}.get(r, f"{r}th")


def check_run(state, proposals_forbidden: list) -> None:
    """Orchestrator invariants for a finished run; raises InvariantViolation."""
    cfg = state.config
    pts = state.dataset.points
    if state.n != cfg.N:
        raise InvariantViolation(f"final n={state.n} differs from budget N={cfg.N}")
    if len(set(pts)) != len(pts):
        raise InvariantViolation("a point was sampled twice")
    if any(proposals_forbidden):
        raise InvariantViolation("a proposed point was forbidden when proposed")
    fm = [row["f_max"] for row in state.history]
    if any(b < a for a, b in zip(fm, fm[1:])):
        raise InvariantViolation("incumbent decreased between rounds")


def run_replication(
    fn: TestFunction,
    method: str,
    n0: int,
    b: int,
    N: int,
    seed: int,
    ranking: Optional[LibraryRanking] = None,
    initial_design: Optional[Sequence] = None,
    keep_points: bool = False,
    **overrides,
) -> ReplicationResult:
    """One seeded run of ``method`` to budget ``N``, checked against the orchestrator invariants."""
    ranking = ranking or library_ranking(fn)
    config = RunConfig(
        space=fn.space, n0=n0, b=b, N=N, mode=method, seed=seed,
        initial_design=None if initial_design is None else tuple(initial_design),
        **overrides,
    )
    flags = []

    def watch(state, proposal):
        sampled = set(state.dataset.points)
        if "warning" in proposal.info:
            # forbidden points are allowed only once every clean candidate is in the batch
            clean = {p for p in map(fn.space.point, range(fn.space.M)) if p not in sampled and not is_forbidden(state.forbidden, p)}
            flags.append(not clean <= set(proposal.points))
        else:
            flags.extend(is_forbidden(state.forbidden, p) for p in proposal.points)
        if any(p in sampled for p in proposal.points):
            raise InvariantViolation("proposal repeats a sampled point")

    t0 = time.perf_counter()
    state = run_to_budget(init_run(config), fn, callback=watch)
    seconds = time.perf_counter() - t0
    check_run(state, flags)
    best = state.best()
    return ReplicationResult(
        method=method,
        N=N,
        b=b,
        seed=seed,
        best_point=best.point,
        best_value=best.y,
        rank=ranking.rank_of_value(best.y),
        n=state.n,
        seconds=seconds,
        history=state.history,
        points=state.dataset.points if keep_points else [],
    )


def bench_overrides(fit_starts: int = 2, ftol: float = 1e-6, **kwargs) -> dict:
    """Benchmark defaults: two random MLE starts plus a warm start, a looser
    stopping tolerance, and no cluster diagnostics."""
    out = {"fit": gp.FitSettings(starts=fit_starts, ftol=ftol), "cluster": False}
    out.update(kwargs)
    return out


def _task(args):
    fn_spec, method, n0, b, N, seed, design, overrides = args
    fn = _resolve(fn_spec)
    return run_replication(fn, method, n0, b, N, seed, _ranking_cache(fn_spec, fn), design, **overrides)


_RANKINGS: dict = {}


def _ranking_cache(fn_spec, fn):
    if fn_spec not in _RANKINGS:
        _RANKINGS[fn_spec] = library_ranking(fn)
    return _RANKINGS[fn_spec]


def _resolve(fn_spec) -> TestFunction:
    name, relabels = fn_spec
    fn = make_function(name)
    for factor, k in relabels:
        fn = fn.relabeled(factor, relabel(fn.space, factor, k))
    return fn


def run_benchmark(
    fn: str | TestFunction,
    run_sizes: Sequence[int],
    batch_sizes: Sequence[int],
    methods: Sequence[str] = METHOD_ORDER,
    reps: int = 100,
    base_seed: int = 0,
    n0: Optional[int] = None,
    jobs: int = 1,
    relabels: Sequence = (),
    overrides: Optional[dict] = None,
    progress: bool = False,
) -> BenchReport:
    """Success-rate table over run sizes x batch sizes x methods.

    ``fn`` is a registered function name (``levy4``, ``paviani5``) or a
    ``TestFunction`` (single process only). ``relabels`` is a sequence of
    ``(factor, shift)`` applied to a named function's input levels.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if isinstance(fn, str):
        fn_spec = (fn, tuple((int(f), int(k)) for f, k in relabels))
        fn_obj = _resolve(fn_spec)
    else:
        if jobs != 1 or relabels:
            raise ValueError("custom functions run single-process without relabels")
        fn_spec, fn_obj = None, fn
    n0 = n0 if n0 is not None else 10 * fn_obj.d
    overrides = bench_overrides() if overrides is None else overrides
    ranking = library_ranking(fn_obj)
    if fn_spec is not None:
        _RANKINGS[fn_spec] = ranking

    # the initial design depends only on the seed, so compute it once per replication
    from .orchestrator import _stream_seeds
    from .space import minimax_design

    designs = {}
    for i in range(reps):
        seed = base_seed + i
        ds, _ = _stream_seeds(seed)
        designs[seed] = tuple(
            minimax_design(fn_obj.space, n0, np.random.default_rng(ds),
                           max_iter=overrides.get("minimax_iter", 200))
        )

    tasks = []
    for N in run_sizes:
        for b in batch_sizes:
            for method in methods:
                for i in range(reps):
                    seed = base_seed + i
                    tasks.append((fn_spec, method, n0, b, N, seed, designs[seed], overrides))

    results = []
    t_start = time.perf_counter()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_task, tasks, chunksize=1))
    else:
        for k, t in enumerate(tasks):
            if fn_spec is None:
                _, method, n0_, b, N, seed, design, ov = t
                results.append(run_replication(fn_obj, method, n0_, b, N, seed, ranking, design, **ov))
            else:
                results.append(_task(t))
            if progress and (k + 1) % max(1, reps) == 0:
                log.info("%d/%d replications (%.0fs)", k + 1, len(tasks), time.perf_counter() - t_start)

    cells = []
    for N in run_sizes:
        for b in batch_sizes:
            for method in methods:
                rs = [r for r in results if (r.N, r.b, r.method) == (N, b, method)]
                counts = [sum(1 for r in rs if r.rank == k) for k in range(1, TOP + 1)]
                cells.append(BenchCell(N, b, method, counts, len(rs), base_seed, sum(r.seconds for r in rs)))
    name = fn if isinstance(fn, str) else fn_obj.name
    if relabels:
        name += " " + ", ".join(f"factor {f + 1} +{k}" for f, k in relabels)
    return BenchReport(name, cells, results)


def relabel_study(
    fn: str,
    relabelings: Iterable,
    run_sizes: Sequence[int],
    batch_sizes: Sequence[int],
    methods: Sequence[str] = METHOD_ORDER,
    reps: int = 100,
    base_seed: int = 0,
    **kwargs,
) -> dict:
    """One report per ``(factor, shift)`` relabeling, all with the same seeds."""
    out = {}
    for factor, k in relabelings:
        out[(factor, k)] = run_benchmark(
            fn, run_sizes, batch_sizes, methods, reps, base_seed, relabels=[(factor, k)], **kwargs
        )
    return out
