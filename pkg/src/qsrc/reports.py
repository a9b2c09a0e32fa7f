"""Result records shared by codecs, bound checks and the CLI."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

PASS_TOL = 1e-9

PASS = "pass"
VIOLATION = "violation"
PRECONDITION = "precondition"


def digest(*parts: Any) -> str:
    """Short stable hash of arrays, numbers and strings."""
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, np.ndarray):
            h.update(np.ascontiguousarray(p).tobytes())
            h.update(str(p.shape).encode())
        else:
            h.update(repr(p).encode())
    return h.hexdigest()[:16]


@dataclass
class BoundReport:
    """One evaluated inequality.

    ``slack`` is oriented so that nonnegative means the bound holds; for
    upper bounds (lhs <= rhs) it is rhs - lhs, for lower bounds lhs - rhs.
    """

    name: str
    lhs: float
    rhs: float
    slack: float
    inputs_digest: str = ""
    status: str = ""
    tol: float = PASS_TOL
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.status:
            self.status = PASS if self.slack >= -self.tol else VIOLATION

    @property
    def passed(self) -> bool:
        return self.status != VIOLATION

    @classmethod
    def upper(cls, name, lhs, rhs, **kw) -> "BoundReport":
        return cls(name, float(lhs), float(rhs), float(rhs - lhs), **kw)

    @classmethod
    def lower(cls, name, lhs, rhs, **kw) -> "BoundReport":
        return cls(name, float(lhs), float(rhs), float(lhs - rhs), **kw)


@dataclass
class SchemeReport:
    scheme: str
    n: int
    F_bar: float
    supp_bar: float
    I_bits: float
    classical_bits: float
    source_entropy: float
    dim: int
    mode: str = "exact"
    rate: float = math.nan
    eps_typ: float = math.nan
    seed: int | None = None
    samples: int | None = None
    stderr: float = 0.0

    @property
    def eps(self) -> float:
        return max(1.0 - self.F_bar, 0.0)

    @property
    def I_per_n(self) -> float:
        return self.I_bits / self.n

    def row(self) -> dict:
        return {
            "scheme": self.scheme, "n": self.n, "rate": _fmt(self.rate), "eps_typ": _fmt(self.eps_typ),
            "F_bar": _fmt(self.F_bar), "eps": _fmt(self.eps), "supp_bar": _fmt(self.supp_bar),
            "I_bits": _fmt(self.I_bits), "I_per_n": _fmt(self.I_per_n),
            "classical_bits": _fmt(self.classical_bits), "mode": self.mode,
            "seed": "" if self.seed is None else self.seed, "stderr": _fmt(self.stderr),
        }


SCHEME_COLUMNS = ["scheme", "n", "rate", "eps_typ", "F_bar", "eps", "supp_bar", "I_bits",
                  "I_per_n", "classical_bits", "mode", "seed", "stderr"]
BOUND_COLUMNS = ["check", "trial", "lhs", "rhs", "slack", "status", "seed"]


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{float(x) + 0.0:.12g}"


def bound_row(r: BoundReport, trial: int, seed: int | None, extra_cols: Sequence[str] = ()) -> dict:
    row = {"check": r.name, "trial": trial, "lhs": _fmt(r.lhs), "rhs": _fmt(r.rhs),
           "slack": _fmt(r.slack), "status": r.status, "seed": "" if seed is None else seed}
    for c in extra_cols:
        v = r.extra.get(c, "")
        row[c] = _fmt(v) if isinstance(v, (float, int, np.floating)) and not isinstance(v, bool) else v
    return row


def csv_text(rows: Iterable[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def summarize(reports: Sequence[BoundReport]) -> dict:
    counts = {PASS: 0, VIOLATION: 0, PRECONDITION: 0}
    for r in reports:
        counts[r.status] = counts.get(r.status, 0) + 1
    slacks = [r.slack for r in reports if r.status != PRECONDITION]
    return {
        "trials": len(reports),
        "violations": counts[VIOLATION],
        "precondition_unmet": counts[PRECONDITION],
        "passed": counts[PASS],
        "min_slack": min(slacks) if slacks else None,
    }


def to_json(obj) -> str:
    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o))
    return json.dumps(obj, indent=2, sort_keys=True, default=default)
