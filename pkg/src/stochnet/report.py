"""Figure rendering for run outputs: learning curves from metrics CSVs and
degradation curves from noise-sweep CSVs, written as PNG files next to the
delimited data they come from."""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["plot_learning_curves", "plot_noise_curves"]

_COLORS = {"ebp": "tab:red", "bn": "tab:blue"}


def _read_csv(path: str) -> list[dict]:
    with open(path, "r", encoding="ascii") as fh:
        return list(csv.DictReader(fh))


def plot_learning_curves(csv_paths: dict[str, str], out_png: str,
                         metric_name: str = "metric") -> None:
    """One panel: train (dashed) and test (solid) metric per labeled run."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, path in csv_paths.items():
        rows = _read_csv(path)
        iters = [int(r["iter"]) for r in rows]
        color = _COLORS.get(label.lower())
        ax.plot(iters, [float(r["train_metric"]) for r in rows],
                "--", color=color, label=f"{label} train")
        test = [float(r["test_metric"]) for r in rows]
        if not all(v != v for v in test):  # skip all-NaN test columns
            ax.plot(iters, test, "-", color=color, label=f"{label} test")
    ax.set_xlabel("iteration")
    ax.set_ylabel(metric_name)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)


def plot_noise_curves(csv_paths: dict[str, str], out_png: str) -> None:
    """IoU against corruption level, one line per (run label, noise kind)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, path in csv_paths.items():
        rows = _read_csv(path)
        kinds = sorted({r["kind"] for r in rows})
        for kind in kinds:
            sub = [r for r in rows if r["kind"] == kind]
            ax.plot([float(r["level"]) for r in sub],
                    [float(r["iou"]) for r in sub],
                    marker="o",
                    linestyle="-" if kind == "sigma" else "--",
                    color=_COLORS.get(label.lower()),
                    label=f"{label} {kind}")
    ax.set_xlabel("corruption level")
    ax.set_ylabel("IoU")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
