"""Reading and validating safesdre trajectory CSVs.

This package deliberately reimplements the documented file interface
instead of importing the simulator: the CSV schema and the scenario YAML
are the contract, and nothing here recomputes dynamics.

Schema v1::

    # safesdre-trajectory v1
    t,x1..xn,z1..zq,u1..um,h_min,z_consistency[,W,W_dot,min_eig_Q_hat],K*,status

Floats are written with 17 significant digits; the ``status`` column holds
the rollout's terminal status on every row.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

SCHEMA_TAG = "# safesdre-trajectory v1"

_HEADER_RE = re.compile(
    r"^t(,x\d+)+(,z\d+)*(,u\d+)+,h_min,z_consistency"
    r"(,W,W_dot,min_eig_Q_hat)?(,K\d+_\d+)*,status$"
)


class SchemaMismatch(Exception):
    """File is not a v1 trajectory CSV."""


class MissingColumns(Exception):
    """The figure needs columns this file does not carry."""


@dataclass
class TrajectoryLog:
    """Parsed trajectory columns, untyped beyond what plotting needs."""

    path: Path
    t: np.ndarray
    x: np.ndarray  # (N, n) plant states
    z: np.ndarray  # (N, q) barrier states
    u: np.ndarray  # (N, m)
    h_min: np.ndarray
    z_consistency: np.ndarray
    gains: np.ndarray  # (N, m*(n+q)), possibly zero columns
    W: np.ndarray | None
    W_dot: np.ndarray | None
    min_eig_Q_hat: np.ndarray | None
    status: str
    controller: str = ""

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def q(self) -> int:
        return self.z.shape[1]


def read_trajectory(path) -> TrajectoryLog:
    """Parse one CSV, enforcing the schema tag and header shape.

    Raises
    ------
    SchemaMismatch
        Wrong tag, malformed header, or no data rows.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        tag = fh.readline().strip()
        if tag != SCHEMA_TAG:
            raise SchemaMismatch(f"{path.name}: expected tag {SCHEMA_TAG!r}, got {tag!r}")
        header_line = fh.readline().strip()
        if not _HEADER_RE.match(header_line):
            raise SchemaMismatch(f"{path.name}: header does not match schema v1")
        header = header_line.split(",")
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise SchemaMismatch(f"{path.name}: no data rows")

    n = sum(1 for c in header if re.fullmatch(r"x\d+", c))
    q = sum(1 for c in header if re.fullmatch(r"z\d+", c))
    m = sum(1 for c in header if re.fullmatch(r"u\d+", c))
    has_cert = "W" in header
    data = np.array([[float(v) for v in row[:-1]] for row in rows])
    status = rows[-1][-1]

    i = 1
    x = data[:, i : i + n]
    i += n
    z = data[:, i : i + q]
    i += q
    u = data[:, i : i + m]
    i += m
    h_min = data[:, i]
    zc = data[:, i + 1]
    i += 2
    W = Wd = Qh = None
    if has_cert:
        W, Wd, Qh = data[:, i], data[:, i + 1], data[:, i + 2]
        i += 3
    gains = data[:, i:]

    controller = ""
    match = re.match(r".*__(?P<kind>[a-z_]+)__ic\d+$", path.stem)
    if match:
        controller = match.group("kind")
    return TrajectoryLog(
        path=path, t=data[:, 0], x=x, z=z, u=u, h_min=h_min, z_consistency=zc,
        gains=gains, W=W, W_dot=Wd, min_eig_Q_hat=Qh, status=status,
        controller=controller,
    )


@dataclass
class Obstacle:
    center: np.ndarray
    radius: float


@dataclass
class PlotSpec:
    """Everything one figure needs: inputs, kind, overlays, destination."""

    csv_paths: list
    kind: str  # phase | timeseries | gains | quadrotor-course
    out_path: Path
    obstacles: list = field(default_factory=list)
    title: str = ""

    def load(self) -> list:
        return [read_trajectory(p) for p in self.csv_paths]


def obstacles_from_scenario(path) -> list:
    """Obstacle disks from a scenario YAML (center/radius entries only)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    out = []
    for entry in raw.get("obstacles", []) or []:
        out.append(
            Obstacle(center=np.asarray(entry["center"], dtype=float),
                     radius=float(entry["radius"]))
        )
    return out
