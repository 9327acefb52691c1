"""Per-step order-parameter records and the shared CSV format."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CSV_HEADER = "t,m,q,Q,D,mse_in,mse_out"
COLUMNS = CSV_HEADER.split(",")


def error_metrics(m: float, q: float, lam: float, p: int) -> tuple[float, float]:
    return 1.0 - 2.0 * m + q, lam**2 * (1.0 - 2.0 * m**p + q**p)


def fmt(x) -> str:
    """12 significant digits, locale independent; empty for missing values."""
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


@dataclass
class Trajectory:
    records: list = field(default_factory=list)  # tuples (t, m, q, Q, D, mse_in, mse_out)
    converged: bool = False
    diverged: bool = False
    diverged_step: int | None = None
    message: str = ""

    def append(self, t, m, q, Q, D, lam, p):
        mse_in, mse_out = error_metrics(m, q, lam, p)
        self.records.append((int(t), float(m), float(q), float(Q), float(D), mse_in, mse_out))

    @property
    def steps(self) -> int:
        return self.records[-1][0] if self.records else 0

    def column(self, name: str) -> np.ndarray:
        k = COLUMNS.index(name)
        return np.array([r[k] for r in self.records])

    @property
    def final(self):
        return self.records[-1]


def metadata_lines(meta: dict) -> list[str]:
    return [f"# {k} = {v}" for k, v in meta.items()]


def write_csv(path, header: str, rows, meta: dict | None = None) -> None:
    with open(path, "w", newline="\n") as fh:
        for line in metadata_lines(meta or {}):
            fh.write(line + "\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(fmt(x) for x in row) + "\n")


def write_trajectory(path, traj: Trajectory, meta: dict | None = None) -> None:
    meta = dict(meta or {})
    meta.setdefault("converged", traj.converged)
    meta.setdefault("diverged", traj.diverged)
    if traj.diverged:
        meta.setdefault("diverged_step", traj.diverged_step)
    write_csv(path, CSV_HEADER, traj.records, meta)


def read_csv(path) -> tuple[dict, list[str], np.ndarray]:
    meta, header, rows = {}, None, []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                k, _, v = line[1:].partition("=")
                meta[k.strip()] = v.strip()
            elif header is None:
                header = line.split(",")
            elif line:
                rows.append([float(x) if x else np.nan for x in line.split(",")])
    return meta, header or [], np.array(rows)
