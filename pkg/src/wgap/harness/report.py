"""CSV outputs: evaluation report, per-sample budgets, training loss log."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from ..metrics import EvalReport

REPORT_HEADER = ("model", "defense", "fooling_ratio", "fool_vs_truth", "mean_rel_l2", "mean_ssim_d", "n")
SAMPLE_HEADER = ("index", "label", "rel_l2", "ssim_d")
LOSS_HEADER = ("epoch", "iteration", "loss", "branch_taken", "mean_rel_l2")


def _fmt(v) -> str:
    # fixed repr so reruns are byte-identical
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write(path, header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def report_rows(reports: list[EvalReport]) -> list[tuple]:
    return [
        (r.model_name, r.defense, r.fooling_ratio, r.fool_vs_truth, r.mean_rel_l2, r.mean_ssim_d, r.n_samples)
        for r in reports
    ]


def write_report(path, reports: list[EvalReport]) -> str:
    return _write(path, REPORT_HEADER, report_rows(reports))


def write_samples(path, labels, rel_l2, ssim_d) -> str:
    """One row per evaluated sample with its realized budget."""
    rows = [(i, int(l), float(r), float(s)) for i, (l, r, s) in enumerate(zip(labels, rel_l2, ssim_d))]
    return _write(path, SAMPLE_HEADER, rows)


def write_loss_log(path, rows: list[dict]) -> str:
    return _write(path, LOSS_HEADER, [tuple(r[k] for k in LOSS_HEADER) for r in rows])


def read_report(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return list(reader)


def summarize(rows: list[dict]) -> str:
    """Aligned plain-text table of a report."""
    lines = [f"{'model':24s} {'defense':16s} {'fool':>7s} {'truth':>7s} {'rel_l2':>8s} {'ssim_d':>8s} {'n':>5s}"]
    for r in rows:
        lines.append(
            f"{r['model']:24s} {r['defense']:16s} {float(r['fooling_ratio']):7.3f} "
            f"{float(r['fool_vs_truth']):7.3f} {float(r['mean_rel_l2']):8.4f} "
            f"{float(r['mean_ssim_d']):8.4f} {int(r['n']):5d}"
        )
    return "\n".join(lines)
