"""Render figures from ggnscore experiment CSV logs.

This package consumes the versioned CSV schema only; it never imports the
training library. Plotted series carry the CSV values untransformed (log
scaling happens on the axes), so tests can read the numbers straight back
off the artists.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

SCHEMAS = {
    "runlog": "ggnscore-runlog-v1",
    "summary": "ggnscore-summary-v1",
    "sweep": "ggnscore-sweep-v1",
    "compare": "ggnscore-compare-v1",
}

KINDS = ("sweep", "trajectory", "bars")

# deterministic styling so figure diffs stay meaningful
COLOR_CYCLE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
DPI = 150


class SchemaError(ValueError):
    pass


@dataclass
class PlotSpec:
    inputs: list
    kind: str
    out_path: str
    log_y: bool = True
    log_x: bool = False
    title: str = ""
    bar_columns: list = field(default_factory=lambda: ["final_accuracy"])

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.inputs:
            raise ValueError("at least one input CSV is required")


def read_csv_checked(path, expected_schema):
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("# schema:"):
            raise SchemaError(f"{path}: missing schema header line")
        schema = first.split(":", 1)[1].strip()
        if schema != expected_schema:
            raise SchemaError(
                f"{path}: schema {schema!r}, this tool expects {expected_schema!r}")
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = [r for r in reader]
    if header is None or not rows:
        raise ValueError(f"{path}: no data rows")
    return header, rows


def column(header, rows, name, cast=float):
    idx = header.index(name)
    out = []
    for row in rows:
        cell = row[idx]
        out.append(None if cell == "" else cast(cell))
    return out


def _fig_axes():
    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=DPI)
    ax.set_prop_cycle(color=COLOR_CYCLE)
    return fig, ax


def render_sweep(spec):
    """Loss-vs-parameter curves with a zero-count overlay."""
    fig, ax = _fig_axes()
    overlay = ax.twinx()
    for path in spec.inputs:
        header, rows = read_csv_checked(path, SCHEMAS["sweep"])
        param = rows[0][header.index("param")]
        x = column(header, rows, "value")
        for col, style in (("train_loss_mean", "-o"), ("test_loss_mean", "-s")):
            y = column(header, rows, col)
            pairs = [(a, b) for a, b in zip(x, y) if b is not None]
            if pairs:
                ax.plot(*zip(*pairs), style, label=f"{col} ({Path(path).stem})",
                        markersize=4)
        nnz = column(header, rows, "nnz_mean")
        pairs = [(a, b) for a, b in zip(x, nnz) if b is not None]
        if pairs:
            overlay.plot(*zip(*pairs), ":^", color="#7f7f7f",
                         label="zero count", markersize=4)
        ax.set_xlabel(param)
    if spec.log_y:
        ax.set_yscale("log")
    if spec.log_x:
        ax.set_xscale("log")
    ax.set_ylabel("loss")
    overlay.set_ylabel("zero count")
    ax.legend(fontsize=7)
    return fig


def render_trajectory(spec):
    """Loss per iteration from run logs or merged comparison files."""
    fig, ax = _fig_axes()
    for path in spec.inputs:
        with open(path, encoding="utf-8") as fh:
            schema_line = fh.readline()
        if SCHEMAS["compare"] in schema_line:
            header, rows = read_csv_checked(path, SCHEMAS["compare"])
            x = column(header, rows, "iter")
            series = ["ggn_train_loss", "gd_train_loss",
                      "ggn_test_loss", "gd_test_loss"]
        else:
            header, rows = read_csv_checked(path, SCHEMAS["runlog"])
            x = column(header, rows, "iter")
            series = ["train_loss", "test_loss"]
        for col in series:
            y = column(header, rows, col)
            pairs = [(a, b) for a, b in zip(x, y) if b is not None]
            if pairs:
                ax.plot(*zip(*pairs), label=f"{col} ({Path(path).stem})", lw=1.2)
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend(fontsize=7)
    return fig


def render_bars(spec):
    """Bar chart of summary metrics (accuracy, activation stability)."""
    fig, ax = _fig_axes()
    labels, groups = [], {col: [] for col in spec.bar_columns}
    for path in spec.inputs:
        header, rows = read_csv_checked(path, SCHEMAS["summary"])
        labels.append(Path(path).stem)
        for col in spec.bar_columns:
            val = column(header, rows, col)[0]
            groups[col].append(0.0 if val is None else val)
    width = 0.8 / max(len(groups), 1)
    for k, (col, vals) in enumerate(groups.items()):
        xs = [i + k * width for i in range(len(labels))]
        ax.bar(xs, vals, width=width, label=col, color=COLOR_CYCLE[k % len(COLOR_CYCLE)])
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(labels))])
    ax.set_xticklabels(labels, fontsize=7)
    ax.legend(fontsize=7)
    return fig


_RENDERERS = {"sweep": render_sweep, "trajectory": render_trajectory,
              "bars": render_bars}


def render(spec):
    """Render the figure and write it to spec.out_path; returns the figure."""
    fig = _RENDERERS[spec.kind](spec)
    if spec.title:
        fig.suptitle(spec.title)
    fig.savefig(spec.out_path, dpi=DPI, bbox_inches="tight")
    plt.close(fig)
    return fig
