"""Per-run metrics CSV and the multi-seed aggregate.

Run files use the fixed header ``CSV_HEADER``; diagnostic cells are empty at
iterations without a checkpoint. Floats are written with ``repr`` so that
reruns are byte-identical.
"""
from __future__ import annotations

import csv
import io
import math
import os

import numpy as np

CSV_HEADER = ("algo", "problem", "seed", "iter", "ifo", "gamma", "f_norm", "step_norm",
              "obj_gap", "grad_norm", "est_err_f", "est_err_g", "est_err_G")
AGGREGATE_HEADER = ("algo", "ifo", "n_runs",
                    "obj_gap_q25", "obj_gap_median", "obj_gap_q75",
                    "grad_norm_q25", "grad_norm_median", "grad_norm_q75")
_FLOAT_COLUMNS = CSV_HEADER[5:]


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def record_rows(record, include_diagnostics_ifo=False):
    ifo = record.column("ifo")
    if include_diagnostics_ifo:
        ifo = ifo + record.column("diag_ifo")
    cols = {name: record.column(name) for name in _FLOAT_COLUMNS}
    seed = "" if record.seed is None else record.seed
    for t in range(len(record)):
        yield [record.algo, record.problem, seed, t, int(ifo[t])] + [
            cols[name][t] for name in _FLOAT_COLUMNS
        ]


def render_csv(rows, header):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def write_record(record, path, include_diagnostics_ifo=False):
    text = render_csv(record_rows(record, include_diagnostics_ifo), CSV_HEADER)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def read_metrics(path):
    """Load a run CSV back into a list of dicts with NaN for empty cells."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {"algo": row["algo"], "problem": row["problem"],
                      "seed": int(row["seed"]) if row["seed"] else None,
                      "iter": int(row["iter"]), "ifo": int(row["ifo"])}
            for name in _FLOAT_COLUMNS:
                parsed[name] = float(row[name]) if row[name] else math.nan
            out.append(parsed)
    return out


def run_filename(algo, problem, seed):
    return f"{algo}_{problem}_seed{seed}.csv"


def aggregate(records, include_diagnostics_ifo=False):
    """Median and quartiles of obj_gap and grad_norm per algorithm and IFO value.

    Only checkpoint rows contribute. Every run of one algorithm shares the
    same IFO schedule, so the IFO value itself is the bin. Rows are sorted
    by algorithm then IFO.
    """
    groups = {}
    for rec in sorted(records, key=lambda r: (r.algo, r.seed is None, r.seed)):
        ifo = rec.column("ifo")
        if include_diagnostics_ifo:
            ifo = ifo + rec.column("diag_ifo")
        gap, gn = rec.column("obj_gap"), rec.column("grad_norm")
        for t in rec.checkpoints():
            groups.setdefault((rec.algo, int(ifo[t])), []).append((gap[t], gn[t]))
    rows = []
    for (algo, ifo), vals in sorted(groups.items()):
        arr = np.asarray(vals, dtype=np.float64)
        row = [algo, ifo, len(vals)]
        for col in (arr[:, 0], arr[:, 1]):
            col = col[np.isfinite(col)]
            if col.size:
                row += [float(v) for v in np.percentile(col, [25, 50, 75])]
            else:
                row += [math.nan] * 3
        rows.append(row)
    return rows


def write_aggregate(rows, path):
    text = render_csv(rows, AGGREGATE_HEADER)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path
