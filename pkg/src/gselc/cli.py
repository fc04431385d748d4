"""Command-line front end.

``gselc bench`` runs replicated simulation studies on the synthetic
libraries. ``init``, ``suggest`` and ``ingest`` drive a real campaign through
a JSON state file and CSV files exchanged with the laboratory.

Exit codes: 0 success, 1 usage or configuration error, 2 state or file
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import gp
from .bench import METHOD_ORDER, bench_overrides, run_benchmark
from .functions import make_function
from .orchestrator import MODES, RunConfig, RunError, init_run, ingest_results, propose_batch
from .space import DesignSpace, DesignSpaceError
from .state import (
    StateError,
    atomic_write,
    load_state,
    locked,
    points_csv,
    proposal_csv,
    read_points,
    read_results,
    save_state,
)

log = logging.getLogger("gselc")

EXIT_OK, EXIT_USAGE, EXIT_STATE, EXIT_NUMERIC = 0, 1, 2, 3

CONFIG_KEYS = (
    "c", "strength", "order", "forbidden_update", "w0", "p_mut", "significance_alpha",
    "retry_factor", "ei_form", "cluster", "k_max", "silhouette_threshold", "minimax_iter",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _num_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _relabel(text: str) -> tuple:
    try:
        f, k = text.split(":")
        return int(f), int(k)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected FACTOR:SHIFT, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gselc", description="Batch-sequential search of discrete compound libraries.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    b = sub.add_parser("bench", help="replicated simulation study on a synthetic library")
    b.add_argument("--function", required=True, choices=("levy4", "paviani5"))
    b.add_argument("--n0", type=int, help="initial design size (default 10 * d)")
    b.add_argument("--batch", type=_int_list, required=True, help="batch size(s), comma separated")
    b.add_argument("--budget", type=_int_list, required=True, help="run size(s) N, comma separated")
    b.add_argument("--reps", type=int, default=100)
    b.add_argument("--method", default="all", choices=MODES + ("all",))
    b.add_argument("--seed", type=int, default=0, help="replication i uses seed + i")
    b.add_argument("--out", required=True, help="output prefix; writes PREFIX.csv and PREFIX.txt")
    b.add_argument("--order", type=int, help="forbidden-array order (default d - 1)")
    b.add_argument("--c", type=float, default=0.75, help="high-value threshold fraction")
    b.add_argument("--ei-form", default="standard", choices=("standard", "as_printed"))
    b.add_argument("--fit-starts", type=int, default=2, help="random MLE starts per fit")
    b.add_argument("--relabel", type=_relabel, action="append", default=[], metavar="FACTOR:SHIFT",
                   help="cyclic level shift applied to a factor (0-based index)")
    b.add_argument("--jobs", type=int, default=1, help="worker processes")

    i = sub.add_parser("init", help="start a campaign and export its initial design")
    i.add_argument("--state", required=True)
    space = i.add_mutually_exclusive_group(required=True)
    space.add_argument("--grid", type=_int_list, help="levels per factor, e.g. 5,34,241 for levels 1..L")
    space.add_argument("--levels", type=_num_list, action="append", help="explicit levels of one factor; repeat per factor")
    space.add_argument("--candidates", help="CSV of admissible points (header = factor names)")
    i.add_argument("--names", help="comma-separated factor names")
    i.add_argument("--n0", type=int, help="initial design size (required without --design)")
    i.add_argument("--design", help="CSV with an explicit initial design")
    i.add_argument("--forbidden", help="CSV of prior forbidden runs")
    i.add_argument("--batch", type=int, required=True)
    i.add_argument("--budget", type=int, required=True, help="total run size N")
    i.add_argument("--method", default="gselc", choices=MODES)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--config", help="YAML file with further run settings")
    i.add_argument("--out", help="pending-design CSV (default STATE.pending.csv)")
    i.add_argument("--force", action="store_true", help="overwrite an existing state file")

    s = sub.add_parser("suggest", help="propose the next batch")
    s.add_argument("--state", required=True)
    s.add_argument("--batch", type=int, help="batch size for this round (default: configured)")
    s.add_argument("--out", help="proposal CSV (default STATE.proposal.csv)")

    g = sub.add_parser("ingest", help="record the responses of the pending batch")
    g.add_argument("--state", required=True)
    g.add_argument("--results", required=True, help="CSV: factor columns plus y")

    st = sub.add_parser("status", help="summarize a campaign")
    st.add_argument("--state", required=True)
    return parser


def _sibling(state_path: str, suffix: str) -> Path:
    p = Path(state_path)
    return p.with_name(p.stem + suffix)


def cmd_bench(args) -> int:
    if args.reps < 1:
        raise UsageError("--reps must be at least 1")
    fn = make_function(args.function)
    n0 = args.n0 if args.n0 is not None else 10 * fn.d
    if n0 < 1:
        raise UsageError("--n0 must be at least 1")
    if any(bs < 1 for bs in args.batch):
        raise UsageError("--batch sizes must be positive")
    if any(not n0 <= N <= fn.space.M for N in args.budget):
        raise UsageError(f"--budget values must lie in [n0={n0}, {fn.space.M}]")
    order = args.order if args.order is not None else max(1, fn.d - 1)
    if not 1 <= order <= fn.d:
        raise UsageError(f"--order must lie in 1..{fn.d}")
    if not 0 < args.c < 1:
        raise UsageError("--c must lie in (0, 1)")
    for f, k in args.relabel:
        if not 0 <= f < fn.d:
            raise UsageError(f"--relabel factor must lie in 0..{fn.d - 1}")
    methods = METHOD_ORDER if args.method == "all" else (args.method,)
    overrides = bench_overrides(args.fit_starts, order=order, c=args.c, ei_form=args.ei_form)
    report = run_benchmark(
        args.function, args.budget, args.batch, methods, args.reps, args.seed, n0,
        jobs=args.jobs, relabels=args.relabel, overrides=overrides, progress=args.verbose,
    )
    out = Path(args.out)
    atomic_write(out.with_name(out.name + ".csv"), report.to_csv())
    atomic_write(out.with_name(out.name + ".txt"), report.to_text(timings=True))
    sys.stdout.write(report.to_text())
    return EXIT_OK


def _load_yaml(path) -> dict:
    import yaml

    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise StateError(f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path}: expected a mapping of settings")
    unknown = set(data) - set(CONFIG_KEYS) - {"fit"}
    if unknown:
        raise UsageError(f"{path}: unknown settings {sorted(unknown)}")
    return data


def _space_from_args(args) -> DesignSpace:
    names = tuple(n.strip() for n in args.names.split(",")) if args.names else ()
    if args.grid:
        if any(L < 2 for L in args.grid):
            raise UsageError("--grid needs at least 2 levels per factor")
        return DesignSpace(tuple(tuple(range(1, L + 1)) for L in args.grid), names=names)
    if args.levels:
        return DesignSpace(tuple(tuple(lv) for lv in args.levels), names=names)
    cols, pts = read_points(args.candidates)
    if not pts:
        raise UsageError(f"{args.candidates} lists no candidates")
    levels = tuple(tuple(sorted({p[j] for p in pts})) for j in range(len(cols)))
    return DesignSpace(levels, candidates=pts, names=names or tuple(cols))


def cmd_init(args) -> int:
    state_path = Path(args.state)
    if state_path.exists() and not args.force:
        raise StateError(f"{state_path} exists; pass --force to overwrite")
    try:
        space = _space_from_args(args)
    except DesignSpaceError as exc:
        raise UsageError(str(exc)) from None
    design = None
    if args.design:
        _, design = read_points(args.design, space.names)
        if args.n0 is not None and args.n0 != len(design):
            raise UsageError(f"--n0 {args.n0} disagrees with the {len(design)}-row design")
    n0 = len(design) if design is not None else args.n0
    if n0 is None:
        raise UsageError("give --n0 or --design")
    prior = ()
    if args.forbidden:
        _, prior = read_points(args.forbidden, space.names)
    settings = _load_yaml(args.config) if args.config else {}
    if "fit" in settings:
        settings["fit"] = gp.FitSettings.from_dict(settings["fit"])
    try:
        config = RunConfig(
            space=space, n0=n0, b=args.batch, N=args.budget, mode=args.method, seed=args.seed,
            prior_forbidden=tuple(prior), initial_design=design, **settings,
        )
        state = init_run(config)
    except (RunError, DesignSpaceError, TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out) if args.out else _sibling(args.state, ".pending.csv")
    with locked(state_path):
        save_state(state_path, state)
        atomic_write(out, points_csv(space, state.pending.points))
    print(f"initialized {state_path}: M={space.M}, n0={n0}, N={config.N}, mode={config.mode}")
    print(f"initial design ({n0} runs) written to {out}")
    return EXIT_OK


def cmd_suggest(args) -> int:
    with locked(args.state):
        state = load_state(args.state)
        try:
            proposal = propose_batch(state, args.batch)
        except RunError as exc:
            raise StateError(str(exc)) from None
        out = Path(args.out) if args.out else _sibling(args.state, ".proposal.csv")
        atomic_write(out, proposal_csv(state.config.space, proposal))
        save_state(args.state, state)
    info = proposal.info
    counts = ", ".join(f"{o}={proposal.origins.count(o)}" for o in ("ei", "selc", "backfill") if o in proposal.origins)
    print(f"round {info.get('round')}: {len(proposal)} runs ({counts}), alpha={info.get('alpha', 0.0):.4g}")
    if "warning" in info:
        print(f"warning: {info['warning']}")
    print(f"proposal written to {out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    with locked(args.state):
        state = load_state(args.state)
        results = read_results(args.results, state.config.space)
        try:
            ingest_results(state, results)
        except (RunError, ValueError) as exc:
            raise StateError(f"ingest rejected, state unchanged: {exc}") from None
        save_state(args.state, state)
    row = state.history[-1]
    print(f"n={state.n} f_max={state.f_max:g} remaining={state.remaining}")
    new = row["new_forbidden"]
    print(f"new forbidden entries: {len(new)}" + (f" {[tuple(e) for e in new]}" if new else ""))
    return EXIT_OK


def cmd_status(args) -> int:
    state = load_state(args.state)
    cfg = state.config
    print(f"mode={cfg.mode} M={cfg.space.M} n={state.n} N={cfg.N} round={state.round}")
    if state.n:
        best = state.best()
        print(f"f_max={best.y:g} at {dict(zip(cfg.space.names, best.point))}")
    print(f"forbidden entries: {len(state.forbidden.entries)}")
    print("pending batch: " + (f"{len(state.pending)} runs" if state.pending else "none"))
    return EXIT_OK


COMMANDS = {"bench": cmd_bench, "init": cmd_init, "suggest": cmd_suggest, "ingest": cmd_ingest, "status": cmd_status}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STATE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STATE
    except gp.GpNumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
