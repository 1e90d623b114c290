"""Per-iteration run records and the versioned CSV schema.

CSV files start with a ``# schema: <token>`` line followed by a fixed header.
Float cells are written with repr() so identical runs produce identical bytes;
cells that were not computed at a given iteration are empty.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

RUNLOG_SCHEMA = "ggnscore-runlog-v1"
SUMMARY_SCHEMA = "ggnscore-summary-v1"
SWEEP_SCHEMA = "ggnscore-sweep-v1"
COMPARE_SCHEMA = "ggnscore-compare-v1"

RUNLOG_COLUMNS = [
    "iter", "elapsed_s", "train_loss", "test_loss", "alpha", "eta",
    "step_norm", "LD_bound", "nnz", "p1_frob", "p1_block", "g22_pos",
    "g11_pd", "p2_ok", "accuracy",
]


@dataclass
class RunRow:
    iteration: int
    elapsed_s: float
    train_loss: float
    test_loss: float | None = None
    alpha: float | None = None
    eta: float | None = None
    step_norm: float | None = None
    ld_bound: float | None = None
    nnz: int = 0
    p1_frob: bool | None = None
    p1_block: bool | None = None
    g22_pos: bool | None = None
    g11_pd: bool | None = None
    p2_ok: bool | None = None
    accuracy: float | None = None
    # not part of the CSV schema
    objective: float | None = None
    reg_value: float | None = None
    d_nu: float | None = None
    d_nu_lt_1: bool | None = None
    phi_degenerate: bool | None = None
    diag_s: float = 0.0

    def csv_cells(self):
        return [
            self.iteration, self.elapsed_s, self.train_loss, self.test_loss,
            self.alpha, self.eta, self.step_norm, self.ld_bound, self.nnz,
            self.p1_frob, self.p1_block, self.g22_pos, self.g11_pd,
            self.p2_ok, self.accuracy,
        ]


@dataclass
class RunLog:
    method: str
    seed: int
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list, repr=False)
    final_theta: np.ndarray | None = field(default=None, repr=False)

    def to_csv(self, path):
        write_rows_csv(path, RUNLOG_SCHEMA, RUNLOG_COLUMNS, (r.csv_cells() for r in self.rows))

    def summary_to_csv(self, path):
        keys = list(self.summary)
        write_rows_csv(path, SUMMARY_SCHEMA, keys, [[self.summary[k] for k in keys]])


def format_cell(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_rows_csv(path, schema, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema: {schema}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(c) for c in row])


def read_csv(path):
    """Returns (schema token, header, rows as lists of strings)."""
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("# schema:"):
            raise ValueError(f"{path}: missing schema header line")
        schema = first.split(":", 1)[1].strip()
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader]
    return schema, header, rows
