"""Consolidate ``results.json`` files into one table and SVG plots."""

from __future__ import annotations

import glob
import json
from pathlib import Path

import numpy as np

from .experiment import write_results_csv

__all__ = ["REFERENCE_ACCURACY", "collect_results", "write_report"]

# Published 14-class balanced accuracies (%) on the real recordings, keyed by
# (model, paradigm, window seconds). Shown next to local results for context;
# they are not targets for the synthetic data.
REFERENCE_ACCURACY = {
    ("EegCnn", "LOSO", 1.0): 8.68, ("EegCnn", "LOSO", 10.0): 9.07,
    ("EegCnn", "LOTO", 1.0): 10.25, ("EegCnn", "LOTO", 10.0): 13.05,
    ("SpEegCnn", "LOSO", 1.0): 47.52, ("SpEegCnn", "LOSO", 10.0): 22.92,
    ("SpEegCnn", "LOTO", 1.0): 58.33, ("SpEegCnn", "LOTO", 10.0): 21.76,
    ("EegLsmCnn", "LOSO", 1.0): 8.98, ("EegLsmCnn", "LOSO", 10.0): 9.83,
    ("EegLsmCnn", "LOTO", 1.0): 6.14, ("EegLsmCnn", "LOTO", 10.0): 7.32,
    ("SpEegLsmCnn", "LOSO", 1.0): 53.50, ("SpEegLsmCnn", "LOSO", 10.0): 53.12,
    ("SpEegLsmCnn", "LOTO", 1.0): 55.69, ("SpEegLsmCnn", "LOTO", 10.0): 50.05,
    ("EEG-Deformer", "LOSO", 1.0): 8.32, ("EEG-Deformer", "LOSO", 10.0): 9.44,
    ("EEG-Deformer", "LOTO", 1.0): 8.02, ("EEG-Deformer", "LOTO", 10.0): 9.22,
    ("Sp-EEG-Deformer", "LOSO", 1.0): 55.35, ("Sp-EEG-Deformer", "LOSO", 10.0): 52.99,
    ("Sp-EEG-Deformer", "LOTO", 1.0): 57.19, ("Sp-EEG-Deformer", "LOTO", 10.0): 51.61,
}


def collect_results(patterns) -> list[dict]:
    """Load every ``results.json`` matched by the glob patterns (or directories).

    Results are sorted by (model, paradigm, n_class, window) so the output
    does not depend on the file system order.
    """
    if isinstance(patterns, (str, Path)):
        patterns = [patterns]
    paths = set()
    for pat in patterns:
        p = Path(pat)
        if p.is_dir():
            paths.update(p.rglob("results.json"))
        else:
            paths.update(Path(m) for m in glob.glob(str(pat), recursive=True))
    results = []
    for path in sorted(paths):
        r = json.loads(path.read_text())
        if "balanced_acc_mean" not in r:
            raise ValueError(f"{path} is not a results file")
        r["source"] = str(path)
        results.append(r)
    results.sort(key=lambda r: (r["model"], r["paradigm"], r["n_class"], r["window_seconds"], r["name"]))
    return results


def _reference(r: dict):
    if r["n_class"] != 14:
        return None
    return REFERENCE_ACCURACY.get((r["model"], r["paradigm"], float(r["window_seconds"])))


def _series(results, x_key, filt):
    groups: dict[tuple, list] = {}
    for r in results:
        if filt(r):
            groups.setdefault((r["model"], r["paradigm"]), []).append((r[x_key], r["balanced_acc_mean"]))
    return {k: sorted(v) for k, v in sorted(groups.items())}


def _plot(path: Path, series: dict, xlabel: str, title: str, chance=None, logx=False) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for (model, paradigm), pts in series.items():
        x, y = np.array(pts).T
        ax.plot(x, 100 * y, marker="o", label=f"{model} {paradigm}")
    if chance is not None:
        x, y = chance
        ax.plot(x, 100 * np.asarray(y), "k--", lw=1, label="chance")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("balanced accuracy (%)")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    # fixed hash salt and no date keep the SVG reproducible
    matplotlib.rcParams["svg.hashsalt"] = "dirfocus"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_report(results: list[dict], out_dir, plots: bool = True) -> dict:
    """Write ``report.csv``, ``report.json`` and, optionally, two SVG plots.

    Returns a mapping of artifact name to path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not results:
        raise ValueError("no results to report")
    written = {}
    write_results_csv(out / "report.csv", results)
    written["csv"] = out / "report.csv"

    rows = []
    for r in results:
        ref = _reference(r)
        rows.append({
            "name": r["name"], "model": r["model"], "paradigm": r["paradigm"], "n_class": r["n_class"],
            "window_seconds": r["window_seconds"], "balanced_acc_mean": r["balanced_acc_mean"],
            "p95": r.get("p95"), "stars": r.get("stars", ""), "n_folds": len(r["folds"]),
            "reference_acc_percent": ref,
        })
    summary = {
        "rows": rows,
        "reference_note": "reference_acc_percent is the published accuracy on real recordings, shown for context only",
    }
    (out / "report.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    written["json"] = out / "report.json"

    if plots:
        win = _series(results, "window_seconds", lambda r: r["n_class"] == 14)
        if win:
            _plot(out / "accuracy_vs_window.svg", win, "window length (s)",
                  "14-class accuracy vs window length", logx=True)
            written["window_plot"] = out / "accuracy_vs_window.svg"
        ncls = _series(results, "n_class", lambda r: True)
        if ncls:
            xs = sorted({r["n_class"] for r in results})
            _plot(out / "accuracy_vs_nclass.svg", ncls, "number of classes",
                  "accuracy vs number of classes", chance=(xs, [1 / x for x in xs]))
            written["nclass_plot"] = out / "accuracy_vs_nclass.svg"
    return written
