"""File formats: design, choice data, draw set and trace CSVs, JSON reports."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from importlib import resources
from pathlib import Path

import numpy as np

from .bayes import DrawSet
from .design import DesignSpec, InvalidDesignError
from .mnl import ChoiceData


class DesignFileError(InvalidDesignError):
    """A design CSV could not be parsed; ``row`` is the 1-based line number (header = 1)."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


def design_to_csv(design: np.ndarray) -> str:
    design = np.asarray(design)
    S, J, K = design.shape
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["choice_set", "alternative"] + [f"attr_{k + 1}" for k in range(K)])
    for s in range(S):
        for j in range(J):
            w.writerow([s + 1, j + 1] + [int(v) for v in design[s, j]])
    return buf.getvalue()


def design_from_csv(text: str, spec: DesignSpec | None = None) -> np.ndarray:
    """Parse a design CSV into an ``(S, J, K)`` array of 1-based levels.

    Rows must be sorted by choice set then alternative, with consecutive
    1-based indices and the same number of alternatives per set. With ``spec``
    given, shape and level ranges are checked too.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DesignFileError("empty file") from None
    header = [h.strip() for h in header]
    K = len(header) - 2
    expected = ["choice_set", "alternative"] + [f"attr_{k + 1}" for k in range(K)]
    if K < 1 or header != expected:
        raise DesignFileError(f"bad header {header}, expected {expected}", row=1)

    sets: list[list[list[int]]] = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != K + 2:
            raise DesignFileError(f"expected {K + 2} fields, got {len(row)}", row=line_no)
        try:
            s, j, *levels = (int(c) for c in row)
        except ValueError:
            raise DesignFileError(f"non-integer field in {row}", row=line_no) from None
        if s == len(sets) + 1 and j == 1:
            sets.append([])
        elif not (s == len(sets) and j == len(sets[-1]) + 1):
            raise DesignFileError(f"out-of-order choice_set/alternative ({s}, {j})", row=line_no)
        if spec is not None:
            for k, (lv, n) in enumerate(zip(levels, spec.levels)):
                if not 1 <= lv <= n:
                    raise DesignFileError(f"attr_{k + 1} level {lv} outside 1..{n}", row=line_no)
        elif min(levels) < 1:
            raise DesignFileError(f"levels must be >= 1, got {levels}", row=line_no)
        sets[-1].append(levels)

    if not sets:
        raise DesignFileError("no design rows")
    n_alts = {len(b) for b in sets}
    if len(n_alts) != 1:
        raise DesignFileError(f"choice sets have differing numbers of alternatives {sorted(n_alts)}")
    design = np.array(sets, dtype=np.int64)
    if spec is not None and design.shape != spec.shape:
        raise DesignFileError(f"design shape {design.shape} does not match spec {spec.shape}")
    return design


def read_design(path, spec: DesignSpec | None = None) -> np.ndarray:
    return design_from_csv(Path(path).read_text(), spec)


def load_fixture(name: str, spec: DesignSpec | None = None) -> np.ndarray:
    """A design CSV shipped in the package ``data`` directory."""
    text = resources.files("dcesa").joinpath("data", name).read_text()
    return design_from_csv(text, spec)


def choices_to_csv(data: ChoiceData) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["respondent", "choice_set", "chosen_alternative"])
    R, S = data.choices.shape
    for r in range(R):
        for s in range(S):
            w.writerow([r + 1, s + 1, int(data.choices[r, s])])
    return buf.getvalue()


def drawset_to_csv(draws: DrawSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    m = draws.betas.shape[1]
    w.writerow(["weight"] + [f"beta_{i + 1}" for i in range(m)])
    for wt, beta in zip(draws.weights, draws.betas):
        w.writerow([repr(float(wt))] + [repr(float(b)) for b in beta])
    return buf.getvalue()


def drawset_from_csv(text: str) -> DrawSet:
    arr = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
    return DrawSet(arr[:, 0], arr[:, 1:])


def trace_to_csv(trace) -> str:
    """SA trace rows ``(iteration, temperature, candidate_db, accepted, best_db)``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "temperature", "candidate_db", "accepted", "best_db"])
    for it, T, value, accepted, best in trace:
        w.writerow([it, repr(float(T)), repr(float(value)), int(bool(accepted)), repr(float(best))])
    return buf.getvalue()


def to_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=False, allow_nan=True) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_outputs(files: dict) -> None:
    """Write ``{path: text}`` all-or-nothing.

    Every file is first written to a temporary sibling; only when all of them
    succeeded are they renamed into place. On failure the temporaries are
    removed and the error re-raised, so no partial output is left behind.
    """
    staged: list[tuple[str, Path]] = []
    try:
        for path, text in files.items():
            path = Path(path)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
            staged.append((tmp, path))
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
        for tmp, path in staged:
            os.replace(tmp, path)
    except BaseException:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise
