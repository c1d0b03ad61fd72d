"""Campaign report files: a long-format trial CSV and a per-kernel JSON summary.

The summary is always computed from trial rows, so a summary rebuilt from
the CSV alone matches the one written next to it.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np
from scipy import stats

from dogbo.errors import FormatError, InvalidArgument
from dogbo.harness.campaign import CampaignReport, TrialRow

CSV_COLUMNS = ("run", "kernel", "trial", "cost", "best_so_far", "fell", "phi_sim")
TRIALS_FILE = "trials.csv"
SUMMARY_FILE = "summary.json"


def mean_ci(values, level: float = 0.95) -> tuple[float | None, float | None]:
    """Sample mean and Student-t half-width; (None, None) when empty."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return None, None
    if x.size == 1:
        return float(x[0]), 0.0
    half = stats.t.ppf(0.5 + level / 2, x.size - 1) * x.std(ddof=1) / math.sqrt(x.size)
    return float(x.mean()), float(half)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r.run, r.kernel, r.trial, repr(float(r.cost)), repr(float(r.best_so_far)),
                    int(r.fell), repr(float(r.phi_sim))])
    return buf.getvalue()


def read_rows(path: str | Path) -> list[TrialRow]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read trial report: {exc}") from None
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != CSV_COLUMNS:
        raise FormatError(f"unexpected trial report header {header}")
    rows = []
    for lineno, rec in enumerate(reader, 2):
        if len(rec) != len(CSV_COLUMNS):
            raise FormatError(f"line {lineno}: expected {len(CSV_COLUMNS)} fields")
        try:
            rows.append(TrialRow(int(rec[0]), rec[1], int(rec[2]), float(rec[3]),
                                 float(rec[4]), rec[5] == "1", float(rec[6])))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    return rows


def summarize(rows, trials_per_run: int | None = None) -> dict:
    """Per-kernel aggregates keyed by kernel name, kernels in first-seen order.

    A run that never walks counts as ``trials_per_run + 1`` trials to first
    walk; ``trials_per_run`` defaults to the longest run in ``rows``.
    """
    runs: dict[str, dict[int, list[TrialRow]]] = {}
    for r in rows:
        runs.setdefault(r.kernel, {}).setdefault(r.run, []).append(r)
    if trials_per_run is None:
        trials_per_run = max((len(v) for k in runs.values() for v in k.values()), default=0)
    out = {}
    for kernel, by_run in runs.items():
        first_walk, finals, best_walk, curves = [], [], [], []
        for run in sorted(by_run):
            trials = sorted(by_run[run], key=lambda r: r.trial)
            walks = [t for t in trials if not t.fell]
            first_walk.append(walks[0].trial if walks else trials_per_run + 1)
            finals.append(trials[-1].best_so_far)
            if walks:
                best_walk.append(min(t.cost for t in walks))
            curves.append([t.best_so_far for t in trials])
        n = len(by_run)
        mean_best, ci_best = mean_ci(finals)
        mean_walk, ci_walk = mean_ci(best_walk)
        depth = min(len(c) for c in curves)
        curve = [mean_ci([c[i] for c in curves]) for i in range(depth)]
        out[kernel] = {
            "runs": n,
            "trials_per_run": trials_per_run,
            "success_rate_at_N": len(best_walk) / n,
            "median_trials_to_first_walk": float(np.median(first_walk)),
            "mean_best_cost": mean_best,
            "mean_best_cost_ci95": ci_best,
            "mean_best_walking_cost": mean_walk,
            "mean_best_walking_cost_ci95": ci_walk,
            "best_so_far_curve": [m for m, _ in curve],
            "best_so_far_curve_ci95": [h for _, h in curve],
        }
    return out


def report_summary(report: CampaignReport) -> dict:
    summary = {
        "kernels": summarize(report.rows(), report.config.trials_per_run),
        "signal_variance": report.signal_variance,
        "table_fingerprint": report.table_fingerprint,
        "excluded_runs": [{"kernel": r.kernel, "run": r.run, "error": r.error}
                          for r in report.failures()],
    }
    summary.update(report.extras)
    return summary


def summary_to_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"


def summary_to_csv(summary: dict) -> str:
    """Flat per-kernel table of the scalar summary fields."""
    kernels = summary.get("kernels", summary)
    cols = ("kernel", "runs", "success_rate_at_N", "median_trials_to_first_walk",
            "mean_best_cost", "mean_best_cost_ci95", "mean_best_walking_cost",
            "mean_best_walking_cost_ci95")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for name, s in kernels.items():
        w.writerow([name] + ["" if s[c] is None else repr(s[c]) for c in cols[1:]])
    return buf.getvalue()


def emit_report(report: CampaignReport, fmt: str, out_dir: str | Path) -> Path:
    """Write the trial CSV (``csv``) or the JSON summary (``json``) into ``out_dir``."""
    if not report.rows() and not report.failures():
        raise InvalidArgument("report is empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        path, text = out / TRIALS_FILE, rows_to_csv(report.rows())
    elif fmt == "json":
        path, text = out / SUMMARY_FILE, summary_to_json(report_summary(report))
    else:
        raise InvalidArgument(f"unknown report format {fmt!r}")
    path.write_text(text)
    return path
