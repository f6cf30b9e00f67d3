"""Line-oriented record files and their tabular summaries.

A record file has one header line followed by one tab-separated record per
line::

    #pnl-records {"kind": "monte-carlo", "columns": [...], "config": {...}}
    dlt_lines\t100\t2.0\t0\t...

The header is JSON after a fixed tag, so a file describes its own columns,
the effective configuration and the seed. Floats are written with ``repr``
so values survive a round trip exactly and identical runs give identical
bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

TAG = "#pnl-records"


@dataclass
class RecordFile:
    kind: str
    columns: list
    rows: list = field(default_factory=list)  # list of tuples, aligned with columns
    config: dict = field(default_factory=dict)

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def dicts(self):
        return [dict(zip(self.columns, r)) for r in self.rows]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    s = str(v)
    if "\t" in s or "\n" in s:
        raise ValueError(f"field contains a tab or newline: {s!r}")
    return s


def _parse(s):
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def dumps(rec):
    header = {"kind": rec.kind, "columns": list(rec.columns), "config": rec.config}
    out = [f"{TAG} {json.dumps(header, sort_keys=True)}"]
    for row in rec.rows:
        if len(row) != len(rec.columns):
            raise ValueError("record length does not match the columns")
        out.append("\t".join(_fmt(v) for v in row))
    return "\n".join(out) + "\n"


def loads(text):
    lines = text.splitlines()
    if not lines or not lines[0].startswith(TAG + " "):
        raise ValueError("not a record file (missing header)")
    header = json.loads(lines[0][len(TAG) + 1:])
    cols = header["columns"]
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != len(cols):
            raise ValueError(f"line {i}: expected {len(cols)} fields, got {len(parts)}")
        rows.append(tuple(_parse(p) for p in parts))
    return RecordFile(header["kind"], cols, rows, header.get("config", {}))


def write_records(path, rec):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(rec))


def read_records(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------


def _finite(xs):
    return [x for x in xs if isinstance(x, (int, float)) and math.isfinite(x)]


def _median(xs):
    xs = _finite(xs)
    return float(np.median(xs)) if xs else float("nan")


def _mean(xs):
    xs = _finite(xs)
    return float(np.mean(xs)) if xs else float("nan")


def _group(rows, keys):
    out = {}
    for r in rows:
        out.setdefault(tuple(r[k] for k in keys), []).append(r)
    return out


def _improvement(prev, cur):
    if not (math.isfinite(prev) and math.isfinite(cur)) or prev == 0:
        return float("nan")
    return 100.0 * (prev - cur) / prev


def summarize(rec):
    """Aggregate a record file into ``(columns, rows)`` according to its kind."""
    rows = rec.dicts()
    metrics = ("orientation_deg", "position", "reprojection")
    if rec.kind == "monte-carlo":
        cols = ["method", "lines", "sigma", "trials", "failures"]
        cols += [f"median_{m}" for m in metrics] + [f"mean_{m}" for m in metrics]
        has_rt = "runtime_ms" in rec.columns
        if has_rt:
            cols += ["median_runtime_ms", "mean_runtime_ms"]
        out = []
        for key, grp in _group(rows, ("method", "lines", "sigma")).items():
            ok = [r for r in grp if r["status"] == "ok"]
            line = list(key) + [len(grp), len(grp) - len(ok)]
            line += [_median([r[m] for r in ok]) for m in metrics]
            line += [_mean([r[m] for r in ok]) for m in metrics]
            if has_rt:
                line += [_median([r["runtime_ms"] for r in ok]), _mean([r["runtime_ms"] for r in ok])]
            out.append(line)
        return cols, out
    if rec.kind == "ablation":
        cols = ["stages", "trials", "failures"] + [f"median_{m}" for m in metrics]
        cols += [f"improvement_{m}_pct" for m in metrics]
        out = []
        prev = None
        order = []
        for r in rows:
            if r["stages"] not in order:
                order.append(r["stages"])
        groups = _group(rows, ("stages",))
        for st in order:
            grp = groups[(st,)]
            ok = [r for r in grp if r["status"] == "ok"]
            med = [_median([r[m] for r in ok]) for m in metrics]
            imp = [float("nan")] * 3 if prev is None else [_improvement(a, b) for a, b in zip(prev, med)]
            out.append([st, len(grp), len(grp) - len(ok)] + med + imp)
            prev = med
        return cols, out
    if rec.kind == "outliers":
        cols = ["method", "fraction", "trials", "success_rate"] + [f"mean_{m}" for m in metrics]
        cols += ["mean_runtime_ms", "mean_iterations"]
        out = []
        for key, grp in _group(rows, ("method", "fraction")).items():
            ok = [r for r in grp if r["status"] == "ok"]
            line = list(key) + [len(grp), float(np.mean([r["success"] for r in grp]))]
            line += [_mean([r[m] for r in ok]) for m in metrics]
            line += [_mean([r["runtime_ms"] for r in grp]), _mean([r["iterations"] for r in ok])]
            out.append(line)
        return cols, out
    if rec.kind == "runtime":
        cols = ["method", "lines", "trials", "mean_ms", "std_ms", "median_ms"]
        out = []
        for key, grp in _group(rows, ("method", "lines")).items():
            t = [r["runtime_ms"] for r in grp]
            out.append(list(key) + [len(t), _mean(t), float(np.std(t)), _median(t)])
        return cols, out
    if rec.kind == "estimate":
        cols = ["method", "images", "evaluated", "skipped", "failed"] + [f"mean_{m}" for m in metrics]
        out = []
        for key, grp in _group(rows, ("method",)).items():
            ok = [r for r in grp if r["status"] == "ok"]
            line = list(key) + [len(grp), len(ok),
                                sum(r["status"] == "skipped" for r in grp),
                                sum(r["status"] == "failed" for r in grp)]
            line += [_mean([r[m] for r in ok]) for m in metrics]
            out.append(line)
        return cols, out
    return list(rec.columns), [list(r) for r in rec.rows]


def _cell(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.6g}"
    return str(v)


def render(rec, fmt="text"):
    """Summary table of ``rec`` as aligned text (``"text"``) or CSV (``"csv"``)."""
    cols, rows = summarize(rec)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(v) for v in r])
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    cells = [cols] + [[_cell(v) for v in r] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(cols))]
    lines = []
    for j, c in enumerate(cells):
        lines.append("  ".join(s.rjust(w) if j and _numeric(s) else s.ljust(w) for s, w in zip(c, widths)).rstrip())
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _numeric(s):
    try:
        float(s)
        return True
    except ValueError:
        return False
