"""Tables derived from a run log.  Pure functions: no objective is re-run."""

from __future__ import annotations

from collections import Counter

from .optimizer import RunLog
from .space import SearchSpace, format_value

MARK = "*"


def trace(runlog: RunLog) -> list[tuple[int, float, float]]:
    """(iteration, value, best value so far) per record."""
    if not len(runlog):
        raise ValueError("empty run log")
    best = runlog.best_so_far()
    return [(r.iteration, r.value, float(b)) for r, b in zip(runlog, best)]


def histogram(runlog: RunLog, space: SearchSpace | None = None) -> list[tuple[str, str, int, bool]]:
    """(hyperparameter, option, count, chosen-by-best-record) rows.

    With a space every option is listed in spec order, zero counts included;
    without one, options appear in order of first use.
    """
    if not len(runlog):
        raise ValueError("empty run log")
    best = runlog.best().config
    names = list(space.names) if space is not None else list(runlog[0].config)
    rows = []
    for name in names:
        counts = Counter(format_value(r.config[name]) for r in runlog)
        if space is not None:
            options = list(space[name].labels)
        else:
            options = list(dict.fromkeys(format_value(r.config[name]) for r in runlog))
        chosen = format_value(best[name])
        rows.extend((name, opt, counts.get(opt, 0), opt == chosen) for opt in options)
    return rows


def sensitivity(runlog: RunLog, experiments: list[int]) -> tuple[list[str], list[list[str]]]:
    """Side-by-side comparison of selected records (1-based iteration numbers).

    Returns ``(header, rows)``.  A hyperparameter cell is suffixed with
    ``*`` when it differs from the column to its left; the accuracy row is
    never marked.
    """
    if not experiments:
        raise ValueError("no experiments selected")
    for i in experiments:
        if not 1 <= i <= len(runlog):
            raise IndexError(f"experiment {i} outside 1..{len(runlog)}")
    recs = [runlog[i - 1] for i in experiments]
    header = ["hyperparameter", *(f"exp{i}" for i in experiments)]
    rows = []
    for name in recs[0].config:
        cells = [name]
        prev = None
        for r in recs:
            v = format_value(r.config[name])
            changed = prev is not None and _norm(v) != _norm(prev)
            cells.append(v + (MARK if changed else ""))
            prev = v
        rows.append(cells)
    rows.append(["accuracy", *(repr(r.value) for r in recs)])
    return header, rows


def _norm(v: str):
    try:
        return float(v)
    except ValueError:
        return v.lower()


def count_marks(rows: list[list[str]]) -> int:
    return sum(cell.endswith(MARK) for row in rows for cell in row[1:])


def to_csv(header, rows) -> str:
    lines = [",".join(str(h) for h in header)]
    lines += [",".join(str(c) for c in row) for row in rows]
    return "\n".join(lines) + "\n"
