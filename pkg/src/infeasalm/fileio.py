"""Problem files, trace CSVs and run reports.

Problem file layout (one JSON document, dense row-major matrices)::

    {"n": 1,
     "name": "optional label",
     "objective": {"Q": [[0]], "q": [-1], "r": 0},
     "domain": {"type": "free"},
     "constraints": [
        {"fn": {"Q": [[2]], "q": [0], "r": 1}, "set": {"type": "nonpos"}},
        {"fn": {"A": [[1, 1]], "b": [0]}, "set": {"type": "zero", "dim": 1}}
     ]}

``fn`` is one scalar quadratic, a list of them (one per row of the block),
or an affine map ``{"A", "b"}`` whose rows are ``A x - b``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, fields
from importlib import resources

import numpy as np

from .errors import DimensionError, ModelError, ProblemFileError
from .model import Constraint, ConvexProgram, QuadraticFn
from .sets import DomainSet, SetBlock

TRACE_COLUMNS = (
    "k",
    "gamma_k",
    "eps_k",
    "f_xk",
    "s_norm",
    "dist_s_to_ref",
    "value_gap_to_ref",
    "slack_proj_gap",
    "lambda_norm",
    "inner_iters",
    "inner_residual",
)
INT_COLUMNS = ("k", "inner_iters")

IPPA_COLUMNS = (
    "k",
    "gamma_k",
    "eps_k",
    "err_norm",
    "h_lam_star",
    "s_star_norm",
    "s_norm",
    "dist_s_star_to_sbar",
    "dist_s_to_sbar",
    "sq_gap_s_star",
    "vertical_distance",
    "conj_gap",
    "fenchel_young",
    "increment_excess",
    "lambda_norm",
)

REPORT_KEYS = ("status", "iterations", "problem", "final", "rate_fits", "schedule", "reference", "options")


# ---------------------------------------------------------------- problems


def _field(path, fn, *args):
    try:
        return fn(*args)
    except ProblemFileError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        if isinstance(exc, ModelError):
            raise ProblemFileError(f"{path}: {exc}", field=path, rule=exc.rule) from exc
        msg = f"missing field {exc}" if isinstance(exc, KeyError) else str(exc)
        raise ProblemFileError(f"{path}: {msg}", field=path) from exc


def _quadratic(d, n, path):
    Q = d.get("Q")
    Q = np.zeros((n, n)) if Q is None else np.asarray(Q, dtype=float)
    q = np.asarray(d.get("q", np.zeros(n)), dtype=float)
    if Q.shape != (n, n) or q.shape != (n,):
        raise ProblemFileError(f"{path}: expected Q of shape ({n},{n}) and q of length {n}", field=path)
    return QuadraticFn(Q, q, float(d.get("r", 0.0)))


def _rows(fn, n, path):
    if isinstance(fn, list):
        return tuple(_quadratic(f, n, f"{path}[{i}]") for i, f in enumerate(fn))
    if "A" in fn:
        A = np.atleast_2d(np.asarray(fn["A"], dtype=float))
        b = np.atleast_1d(np.asarray(fn.get("b", np.zeros(A.shape[0])), dtype=float))
        if A.shape[1] != n or b.shape != (A.shape[0],):
            raise ProblemFileError(f"{path}: affine map has the wrong shape", field=path)
        return tuple(QuadraticFn.affine(row, -bi) for row, bi in zip(A, b))
    return (_quadratic(fn, n, path),)


def program_from_dict(d):
    """Validate and build a :class:`ConvexProgram` from a parsed problem file."""
    if not isinstance(d, dict):
        raise ProblemFileError("top level must be a JSON object")
    if "n" not in d:
        raise ProblemFileError("missing field 'n'", field="n")
    n = _field("n", int, d["n"])
    if n < 1:
        raise ProblemFileError("n must be positive", field="n")
    obj = _field("objective", _quadratic, d.get("objective", {}), n, "objective")
    dom = _field("domain", DomainSet.from_dict, d.get("domain", {"type": "free"}), n)
    cons = []
    for i, c in enumerate(d.get("constraints", [])):
        path = f"constraints[{i}]"
        rows = _field(path + ".fn", _rows, c["fn"], n, path + ".fn") if "fn" in c else None
        if rows is None:
            raise ProblemFileError(f"{path}: missing field 'fn'", field=path + ".fn")
        sd = dict(c.get("set", {}))
        if "type" not in sd:
            raise ProblemFileError(f"{path}: missing field 'set.type'", field=path + ".set")
        if sd["type"] in ("zero", "nonpos", "nonneg") and "dim" not in sd:
            sd["dim"] = len(rows)
        block = _field(path + ".set", SetBlock.from_dict, sd)
        try:
            cons.append(Constraint(rows, block))
        except DimensionError as exc:
            raise ProblemFileError(f"{path}: {exc}", field=path) from exc
    try:
        return ConvexProgram(n, obj, dom, tuple(cons), str(d.get("name", "")))
    except ModelError as exc:
        raise ProblemFileError(f"rule violated: {exc.rule}", field="constraints", rule=exc.rule) from exc
    except DimensionError as exc:
        raise ProblemFileError(str(exc)) from exc


def loads_problem(text):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return program_from_dict(d)


def read_problem(path):
    """Read and validate a problem file."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return loads_problem(text)
    except ProblemFileError as exc:
        raise ProblemFileError(f"{path}: {exc}", field=exc.field, rule=exc.rule) from exc


def write_problem(prog, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(prog.to_dict(), fh, indent=2)


def data_path(name):
    """Path of a shipped example problem (``qcqp_infeasible.json`` etc.)."""
    return str(resources.files("infeasalm") / "data" / name)


def list_data():
    return sorted(p.name for p in (resources.files("infeasalm") / "data").iterdir() if p.name.endswith(".json"))


# ---------------------------------------------------------------- traces


@dataclass(frozen=True)
class TraceRow:
    k: int
    gamma_k: float
    eps_k: float
    f_xk: float
    s_norm: float
    dist_s_to_ref: float
    value_gap_to_ref: float
    slack_proj_gap: float
    lambda_norm: float
    inner_iters: int
    inner_residual: float


def trace_rows(run):
    """Rows for an :class:`~infeasalm.ialm.IalmRun`; row ``k`` describes iterate ``k``."""
    eps = run.schedule.epsilons(run.n_iter) if run.n_iter else np.zeros(0)
    lam_norm = np.linalg.norm(run.lam, axis=1) if run.lam.size else np.zeros(run.n_iter)
    nan = np.full(run.n_iter, np.nan)
    dist = run.dist_s_to_ref if run.dist_s_to_ref is not None else nan
    vgap = run.value_gap_to_ref if run.value_gap_to_ref is not None else nan
    return [
        TraceRow(
            k + 1, float(run.gammas[k]), float(eps[k]), float(run.f[k]), float(run.s_norm[k]),
            float(dist[k]), float(vgap[k]), float(run.slack_proj_gap[k]), float(lam_norm[k]),
            int(run.inner_iters[k]), float(run.inner_residual[k]),
        )
        for k in range(run.n_iter)
    ]


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "%.17g" % v


def format_csv(columns, rows, comment=None):
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        vals = [getattr(r, c) for c in columns] if not isinstance(r, (list, tuple)) else r
        w.writerow([_fmt(v) for v in vals])
    return buf.getvalue()


def write_trace(path, rows, comment=None, columns=TRACE_COLUMNS):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_csv(columns, rows, comment))


def parse_trace(text):
    """Parse a trace CSV (either schema) into a list of :class:`TraceRow` or dicts."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(lines)
    header = tuple(next(reader))
    out = []
    for rec in reader:
        vals = {h: (int(v) if h in INT_COLUMNS else float(v)) for h, v in zip(header, rec)}
        out.append(TraceRow(**vals) if header == TRACE_COLUMNS else vals)
    return out


def read_trace(path):
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh.read())


def rows_equal(a, b):
    """Exact equality treating ``nan`` as equal to itself."""
    if len(a) != len(b):
        return False
    for ra, rb in zip(a, b):
        for f in fields(TraceRow):
            va, vb = getattr(ra, f.name), getattr(rb, f.name)
            if va != vb and not (isinstance(va, float) and math.isnan(va) and math.isnan(vb)):
                return False
    return True


# ---------------------------------------------------------------- reports


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_report(path, report):
    missing = [k for k in REPORT_KEYS if k not in report]
    if missing:
        raise ValueError(f"report lacks keys {missing}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(report), fh, indent=2, sort_keys=False)
        fh.write("\n")
