"""State files and CSV exchange for a campaign run through the command line.

A campaign lives in one JSON file holding the configuration, every
observation, the forbidden array, the generator state and the pending batch.
Updates go through :func:`locked` and :func:`save_state`, which writes a
sibling temporary file and renames it over the old one.
"""

from __future__ import annotations

import contextlib
import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .orchestrator import BatchProposal, RunState, state_from_dict, state_to_dict
from .space import DesignSpace, DesignSpaceError, Observation, _as_number

FORMAT = "gselc-state"
VERSION = 1


class StateError(RuntimeError):
    """Unreadable, incompatible or busy state file."""


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_state(state: RunState) -> str:
    doc = {"format": FORMAT, "version": VERSION, "state": state_to_dict(state)}
    return json.dumps(doc, indent=1, default=_json_default, allow_nan=False) + "\n"


def loads_state(text: str) -> RunState:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StateError(f"state file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise StateError("not a gselc state file")
    if doc.get("version") != VERSION:
        raise StateError(f"state file version {doc.get('version')!r} is not supported (expected {VERSION})")
    try:
        return state_from_dict(doc["state"])
    except (KeyError, TypeError, ValueError) as exc:
        raise StateError(f"corrupt state file: {exc}") from None


def load_state(path) -> RunState:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise StateError(f"cannot read state file {path}: {exc.strerror}") from None
    return loads_state(text)


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` so readers see either the old or the new content."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def save_state(path, state: RunState) -> None:
    atomic_write(path, dumps_state(state))


@contextlib.contextmanager
def locked(path):
    """Hold ``<path>.lock`` for the duration; a second holder is refused."""
    lock = Path(str(path) + ".lock")
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise StateError(f"state file {path} is locked by another process ({lock})") from None
    except OSError as exc:
        raise StateError(f"cannot create lock file {lock}: {exc.strerror}") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(OSError):
            os.unlink(lock)


# --- CSV exchange -----------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def points_csv(space: DesignSpace, points: Iterable, extra: Optional[dict] = None) -> str:
    """Factor columns in declaration order, then any ``extra`` columns (name -> values)."""
    points = list(points)
    extra = extra or {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(space.names) + list(extra))
    for i, p in enumerate(points):
        w.writerow([_fmt(v) for v in p] + [_fmt(col[i]) for col in extra.values()])
    return buf.getvalue()


def proposal_csv(space: DesignSpace, proposal: BatchProposal) -> str:
    return points_csv(
        space,
        proposal.points,
        {"origin": proposal.origins, "y_hat": proposal.y_hat, "s2": proposal.s2, "ei": proposal.ei},
    )


def _read_rows(path) -> tuple:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise StateError(f"cannot read {path}: {exc.strerror}") from None
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise StateError(f"{path} is empty; a header row is required")
    header = [h.strip() for h in rows[0]]
    return header, rows[1:]


def _parse_number(cell: str, where: str):
    try:
        return _as_number(cell.strip())
    except (ValueError, DesignSpaceError):
        raise StateError(f"{where}: {cell!r} is not a finite number") from None


def read_points(path, names: Optional[Iterable[str]] = None) -> tuple:
    """Rows of a points CSV as tuples; returns ``(names, points)``.

    With ``names`` given, those columns are read (in that order) and others
    are ignored; otherwise every column is a factor.
    """
    header, rows = _read_rows(path)
    names = list(names) if names is not None else header
    missing = [n for n in names if n not in header]
    if missing:
        raise StateError(f"{path}: missing factor columns {missing}")
    cols = [header.index(n) for n in names]
    pts = []
    for k, r in enumerate(rows, start=2):
        if len(r) < len(header):
            raise StateError(f"{path} line {k}: expected {len(header)} fields")
        pts.append(tuple(_parse_number(r[c], f"{path} line {k}") for c in cols))
    return names, pts


def read_results(path, space: DesignSpace) -> list:
    """Observations from a results CSV: the factor columns plus ``y``."""
    header, _ = _read_rows(path)
    if "y" not in header:
        raise StateError(f"{path}: results need a 'y' column")
    _, pts = read_points(path, list(space.names) + ["y"])
    try:
        return [Observation(p[:-1], float(p[-1])) for p in pts]
    except ValueError as exc:
        raise StateError(f"{path}: {exc}") from None
