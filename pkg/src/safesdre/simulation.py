"""Closed-loop simulation with safety monitoring and structured logging.

The integrator is fixed-step RK4 on the full nonlinear augmented dynamics:
the plant uses its direct drift and the barrier states use their exact
nonlinear equation (never the factorized coefficient form, which is a
synthesis-side object). Control is held constant over each step by default.

Every rollout produces a :class:`Trajectory` whose rows can be streamed to
a CSV with a stable, versioned schema::

    # safesdre-trajectory v1
    t,x1..xn,z1..zq,u1..um,h_min,z_consistency[,W,W_dot,min_eig_Q_hat][,K*],status

Floats are written with 17 significant digits so files round-trip exactly
and identical runs are byte-identical.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .barriers import barrier_state_rhs, barrier_value
from .certificates import check_condition
from .config import ScenarioConfig
from .controllers import make_controller
from .exceptions import EmptyTrajectory, SafeSdreError

__all__ = [
    "Trajectory",
    "Metrics",
    "SummaryRow",
    "ScenarioSummary",
    "rollout",
    "run_scenario",
    "convergence_and_safety_metrics",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "CSV_SCHEMA_TAG",
]

CSV_SCHEMA_TAG = "# safesdre-trajectory v1"

STATUS_CONVERGED = "Converged"
STATUS_UNSAFE = "Unsafe"
STATUS_CONTROLLER_FAILURE = "ControllerFailure"
STATUS_TIMEOUT = "Timeout"


@dataclass
class Trajectory:
    """Time-indexed log of one rollout."""

    t: np.ndarray  # (N,)
    x_bar: np.ndarray  # (N, n + q)
    u: np.ndarray  # (N, m); NaN where no control was computable
    gains: np.ndarray  # (N, m * (n + q)); flattened row-major
    h_min: np.ndarray  # (N,)
    z_consistency: np.ndarray  # (N,)
    W: Optional[np.ndarray]
    W_dot: Optional[np.ndarray]
    min_eig_Q_hat: Optional[np.ndarray]
    status: str
    n: int
    q: int
    m: int
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.t.size

    @property
    def x(self) -> np.ndarray:
        return self.x_bar[:, : self.n]

    @property
    def z(self) -> np.ndarray:
        return self.x_bar[:, self.n :]

    def has_certificate(self) -> bool:
        return self.W is not None


@dataclass
class Metrics:
    """Convergence and safety summary of one trajectory."""

    status: str
    min_h: float
    t_min_h: float
    final_norm: float
    settling_time: float  # NaN when never settled
    peak_abs_z: float
    t_peak_z: float
    peak_u: float
    gain_rate: float  # max ||K(t+dt)-K(t)|| / dt over the log
    gain_flagged: bool
    certified_fraction: float  # NaN without certificate columns


def convergence_and_safety_metrics(
    traj: Trajectory,
    eps: Optional[float] = None,
    gain_rate_bound: Optional[float] = None,
) -> Metrics:
    """Summarize a trajectory; raises :class:`EmptyTrajectory` on empty logs."""
    if len(traj) == 0:
        raise EmptyTrajectory("no logged steps")
    eps = traj.meta.get("convergence_eps", 1e-2) if eps is None else eps

    norms = np.linalg.norm(traj.x_bar, axis=1)
    below = norms <= eps
    # Settled at the first index from which the norm never leaves the ball.
    settled_from = None
    stay = True
    for i in range(len(traj) - 1, -1, -1):
        stay = stay and below[i]
        if stay:
            settled_from = i
    settling_time = float(traj.t[settled_from]) if settled_from is not None else np.nan

    i_hmin = int(np.argmin(traj.h_min))
    if traj.q:
        abs_z = np.max(np.abs(traj.z), axis=1)
        i_zpeak = int(np.nanargmax(abs_z))
        peak_z, t_zpeak = float(abs_z[i_zpeak]), float(traj.t[i_zpeak])
    else:
        peak_z, t_zpeak = 0.0, np.nan

    with np.errstate(invalid="ignore"):
        u_norms = np.linalg.norm(traj.u, axis=1)
    peak_u = float(np.nanmax(u_norms)) if np.any(np.isfinite(u_norms)) else np.nan

    gain_rate = 0.0
    if len(traj) > 1:
        dk = np.diff(traj.gains, axis=0)
        dts = np.diff(traj.t)
        good = dts > 0
        rates = np.linalg.norm(dk[good], axis=1) / dts[good]
        rates = rates[np.isfinite(rates)]
        gain_rate = float(np.max(rates)) if rates.size else 0.0
    flagged = bool(gain_rate_bound is not None and gain_rate > gain_rate_bound)

    cert_frac = np.nan
    if traj.has_certificate():
        vals = traj.min_eig_Q_hat
        ok = np.isfinite(vals)
        cert_frac = float(np.mean(vals[ok] > 0.0)) if ok.any() else np.nan

    return Metrics(
        status=traj.status,
        min_h=float(traj.h_min[i_hmin]),
        t_min_h=float(traj.t[i_hmin]),
        final_norm=float(norms[-1]),
        settling_time=settling_time,
        peak_abs_z=peak_z,
        t_peak_z=t_zpeak,
        peak_u=peak_u,
        gain_rate=gain_rate,
        gain_flagged=flagged,
        certified_fraction=cert_frac,
    )


class _RowLog:
    def __init__(self, certificate: bool):
        self.certificate = certificate
        self.t, self.xb, self.u, self.K = [], [], [], []
        self.h, self.zc = [], []
        self.W, self.Wd, self.Qh = [], [], []

    def append(self, t, xb, u, K, h, zc, cert):
        self.t.append(t)
        self.xb.append(xb.copy())
        self.u.append(u)
        self.K.append(K)
        self.h.append(h)
        self.zc.append(zc)
        if self.certificate:
            self.W.append(cert[0])
            self.Wd.append(cert[1])
            self.Qh.append(cert[2])


def _z_consistency(aug, x_bar) -> float:
    if aug.q == 0:
        return 0.0
    x, z = aug.split(x_bar)
    try:
        beta = barrier_value(aug.safety, aug.barrier, x)
    except SafeSdreError:
        return np.nan
    return float(np.max(np.abs(z + aug.beta0 - beta)))


def rollout(config: ScenarioConfig, controller, x0, aug=None, cost=None) -> Trajectory:
    """Integrate the closed loop from ``x0`` until convergence or failure.

    Termination, checked in this order at every step:

    * ``Unsafe``            - some raw margin fell to ``h_floor`` or below.
    * ``Timeout``           - state diverged past ``diverge_norm`` / went
      non-finite, or the horizon ended without convergence.
    * ``Converged``         - ``||x_bar|| <= convergence_eps`` (halts early).
    * ``ControllerFailure`` - the feedback law raised (unsafe query, CARE
      failure, undefined chord factorization, ...).

    The barrier state integrates the exact nonlinear dynamics with the raw
    margins clamped at ``h_floor`` purely as an arithmetic overflow guard;
    any state needing the clamp is already terminal.
    """
    aug = config.build_augmented() if aug is None else aug
    if cost is None:
        cost, _ = config.build_costs(aug)
    dt = config.dt
    n_steps = int(round(config.t_final / dt))
    log_every = config.log_every
    eps = config.convergence_eps
    h_floor = config.h_floor
    continuous = config.control_update == "continuous"
    m, n_bar = aug.m, aug.n_bar

    floor_arith = max(h_floor, 1e-300)

    def f_aug(xb, u):
        x, _ = aug.split(xb)
        xdot = aug.base.rhs(x, u)
        if aug.q == 0:
            return xdot
        zdot = barrier_state_rhs(aug, xb, u, floor=floor_arith, xdot=xdot)
        return np.concatenate([xdot, zdot])

    def f_closed(xb):
        return f_aug(xb, controller(xb).u)

    log = _RowLog(config.certificate)
    nan_u = np.full(m, np.nan)
    nan_K = np.full(m * n_bar, np.nan)

    def cert_at(xb):
        if not config.certificate:
            return (np.nan, np.nan, np.nan)
        try:
            rep = check_condition(aug, cost, xb, check_care=False)
            return (rep.W, rep.W_dot, rep.min_eig_Q_hat)
        except SafeSdreError:
            return (np.nan, np.nan, np.nan)

    def log_row(k, xb, result):
        t = k * dt
        if result is None:
            try:
                result = controller(xb)
            except SafeSdreError:
                result = None
        u = result.u if result is not None else nan_u
        K = result.gain.reshape(-1) if result is not None else nan_K
        log.append(t, xb, np.atleast_1d(u).astype(float), np.asarray(K, dtype=float),
                   aug.safety.min_margin(aug.split(xb)[0]), _z_consistency(aug, xb),
                   cert_at(xb))

    x_bar = aug.initial_state(x0)
    status = None
    meta_error = ""
    terminal_result = None
    k = 0
    while status is None:
        x, _ = aug.split(x_bar)
        finite = bool(np.all(np.isfinite(x_bar)))
        if finite and aug.safety.min_margin(x) <= h_floor:
            status = STATUS_UNSAFE
            break
        if not finite or np.linalg.norm(x_bar) > config.diverge_norm:
            status = STATUS_TIMEOUT
            break
        if np.linalg.norm(x_bar) <= eps:
            status = STATUS_CONVERGED
            break
        try:
            result = controller(x_bar)
        except SafeSdreError as exc:
            status = STATUS_CONTROLLER_FAILURE
            meta_error = str(exc)
            break
        if k % log_every == 0:
            log_row(k, x_bar, result)
        if k == n_steps:
            status = STATUS_TIMEOUT
            terminal_result = result
            break
        # One RK4 step; zero-order hold on u unless continuous update asked.
        try:
            if continuous:
                k1 = f_closed(x_bar)
                k2 = f_closed(x_bar + 0.5 * dt * k1)
                k3 = f_closed(x_bar + 0.5 * dt * k2)
                k4 = f_closed(x_bar + dt * k3)
            else:
                u = result.u
                k1 = f_aug(x_bar, u)
                k2 = f_aug(x_bar + 0.5 * dt * k1, u)
                k3 = f_aug(x_bar + 0.5 * dt * k2, u)
                k4 = f_aug(x_bar + dt * k3, u)
        except SafeSdreError as exc:
            status = STATUS_CONTROLLER_FAILURE
            meta_error = str(exc)
            terminal_result = result
            break
        x_bar = x_bar + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        k += 1

    # Always log the terminal state (deduplicated against the regular grid).
    if not log.t or log.t[-1] != k * dt:
        log_row(k, x_bar, terminal_result)

    meta = {
        "scenario": config.name,
        "controller": getattr(controller, "kind", "custom"),
        "dt": dt,
        "t_final": config.t_final,
        "convergence_eps": eps,
        "h_floor": h_floor,
        "x0": np.asarray(x0, dtype=float).tolist(),
        "steps_taken": k,
    }
    if meta_error:
        meta["error"] = meta_error

    def col(values):
        return np.asarray(values, dtype=float)

    return Trajectory(
        t=col(log.t),
        x_bar=np.vstack(log.xb) if log.xb else np.zeros((0, n_bar)),
        u=np.vstack(log.u) if log.u else np.zeros((0, m)),
        gains=np.vstack(log.K) if log.K else np.zeros((0, m * n_bar)),
        h_min=col(log.h),
        z_consistency=col(log.zc),
        W=col(log.W) if config.certificate else None,
        W_dot=col(log.Wd) if config.certificate else None,
        min_eig_Q_hat=col(log.Qh) if config.certificate else None,
        status=status,
        n=aug.n,
        q=aug.q,
        m=m,
        meta=meta,
    )


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def _header(traj: Trajectory) -> list:
    cols = ["t"]
    cols += [f"x{i + 1}" for i in range(traj.n)]
    cols += [f"z{i + 1}" for i in range(traj.q)]
    cols += [f"u{i + 1}" for i in range(traj.m)]
    cols += ["h_min", "z_consistency"]
    if traj.has_certificate():
        cols += ["W", "W_dot", "min_eig_Q_hat"]
    cols += [f"K{i + 1}_{j + 1}" for i in range(traj.m) for j in range(traj.n + traj.q)]
    cols.append("status")
    return cols


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write(CSV_SCHEMA_TAG + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_header(traj))
    for i in range(len(traj)):
        row = [_fmt(traj.t[i])]
        row += [_fmt(v) for v in traj.x_bar[i]]
        row += [_fmt(v) for v in traj.u[i]]
        row += [_fmt(traj.h_min[i]), _fmt(traj.z_consistency[i])]
        if traj.has_certificate():
            row += [_fmt(traj.W[i]), _fmt(traj.W_dot[i]), _fmt(traj.min_eig_Q_hat[i])]
        row += [_fmt(v) for v in traj.gains[i]]
        row.append(traj.status)
        writer.writerow(row)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


_HEADER_RE = re.compile(
    r"^t(,x\d+)+(,z\d+)*(,u\d+)+,h_min,z_consistency"
    r"(,W,W_dot,min_eig_Q_hat)?(,K\d+_\d+)*,status$"
)


def read_trajectory_csv(path) -> Trajectory:
    """Parse a trajectory CSV written by :func:`write_trajectory_csv`.

    Raises
    ------
    EmptyTrajectory
        Missing schema tag, malformed header, or no data rows.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if first != CSV_SCHEMA_TAG:
            raise EmptyTrajectory(f"{path}: missing schema tag {CSV_SCHEMA_TAG!r}")
        header_line = fh.readline().strip()
        if not _HEADER_RE.match(header_line):
            raise EmptyTrajectory(f"{path}: header does not match schema v1")
        header = header_line.split(",")
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise EmptyTrajectory(f"{path}: no data rows")

    n = sum(1 for c in header if re.fullmatch(r"x\d+", c))
    q = sum(1 for c in header if re.fullmatch(r"z\d+", c))
    m = sum(1 for c in header if re.fullmatch(r"u\d+", c))
    has_cert = "W" in header
    data = np.array([[float(v) for v in row[:-1]] for row in rows])
    status = rows[-1][-1]

    idx = 1
    x_bar = data[:, idx : idx + n + q]
    idx += n + q
    u = data[:, idx : idx + m]
    idx += m
    h_min = data[:, idx]
    zc = data[:, idx + 1]
    idx += 2
    W = Wd = Qh = None
    if has_cert:
        W, Wd, Qh = data[:, idx], data[:, idx + 1], data[:, idx + 2]
        idx += 3
    gains = data[:, idx:]
    return Trajectory(
        t=data[:, 0], x_bar=x_bar, u=u, gains=gains, h_min=h_min,
        z_consistency=zc, W=W, W_dot=Wd, min_eig_Q_hat=Qh, status=status,
        n=n, q=q, m=m, meta={"source": str(path)},
    )


# ---------------------------------------------------------------------------
# Scenario driver
# ---------------------------------------------------------------------------


@dataclass
class SummaryRow:
    scenario: str
    controller: str
    ic_index: int
    x0: list
    status: str
    steps: int
    t_end: float
    min_h: float
    final_norm: float
    settling_time: float
    peak_abs_z: float
    peak_u: float
    certified_fraction: float
    csv_path: str

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ScenarioSummary:
    scenario: str
    rows: list
    out_dir: Optional[Path]
    summary_csv: Optional[Path] = None
    summary_txt: Optional[Path] = None
    trajectories: dict = field(default_factory=dict)  # filled on request only

    @property
    def all_converged_safe(self) -> bool:
        return all(r.status == STATUS_CONVERGED and r.min_h > 0 for r in self.rows)


_SUMMARY_FIELDS = [
    "scenario", "controller", "ic_index", "x0", "status", "steps", "t_end",
    "min_h", "final_norm", "settling_time", "peak_abs_z", "peak_u",
    "certified_fraction", "csv_path",
]


def _summary_cell(value) -> str:
    if isinstance(value, float):
        return _fmt(value)
    if isinstance(value, list):
        return ";".join(_fmt(v) for v in value)
    return str(value)


def _run_one(config: ScenarioConfig, aug, cost, plant_cost, kind, i, x0, out_dir):
    controller = make_controller(kind, aug, cost, plant_cost, check_care=False)
    traj = rollout(config, controller, x0, aug=aug, cost=cost)
    csv_path = ""
    if out_dir is not None:
        csv_path = str(
            Path(out_dir) / f"{config.name}__{kind}__ic{i:02d}.csv"
        )
        write_trajectory_csv(traj, csv_path)
    met = convergence_and_safety_metrics(traj)
    return SummaryRow(
        scenario=config.name,
        controller=kind,
        ic_index=i,
        x0=list(np.asarray(x0, dtype=float)),
        status=traj.status,
        steps=traj.meta["steps_taken"],
        t_end=float(traj.t[-1]) if len(traj) else 0.0,
        min_h=met.min_h,
        final_norm=met.final_norm,
        settling_time=met.settling_time,
        peak_abs_z=met.peak_abs_z,
        peak_u=met.peak_u,
        certified_fraction=met.certified_fraction,
        csv_path=csv_path,
    ), traj


def _rollout_task(raw_config, kind, ic_index, out_dir):
    # Worker entry point: rebuild everything from plain data for pickling.
    from .config import load_config

    config = load_config(raw_config)
    aug = config.build_augmented()
    cost, plant_cost = config.build_costs(aug)
    x0 = config.initial_conditions(aug)[ic_index]
    row, _ = _run_one(config, aug, cost, plant_cost, kind, ic_index, x0, out_dir)
    return row


def run_scenario(
    config: ScenarioConfig,
    out_dir=None,
    jobs: int = 1,
    keep_trajectories: bool = False,
):
    """Run every (controller, initial condition) pair of a scenario.

    Writes one trajectory CSV per rollout plus ``summary.csv`` and a
    human-readable ``summary.txt`` when ``out_dir`` is given (default: the
    scenario's ``outputs`` entry; pass ``out_dir=False`` to skip writing).
    Rollouts are independent; ``jobs > 1`` runs them in worker processes.
    """
    if out_dir is None:
        out_dir = config.outputs
    if out_dir is False:
        out_path = None
    else:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)

    aug = config.build_augmented()
    cost, plant_cost = config.build_costs(aug)
    ics = config.initial_conditions(aug)
    tasks = [(kind, i) for kind in config.controllers for i in range(len(ics))]

    rows = []
    trajectories = {}
    if jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_rollout_task, config.raw, kind, i,
                            str(out_path) if out_path else None)
                for kind, i in tasks
            ]
            rows = [f.result() for f in futures]
    else:
        for kind, i in tasks:
            row, traj = _run_one(
                config, aug, cost, plant_cost, kind, i, ics[i],
                str(out_path) if out_path else None,
            )
            rows.append(row)
            if keep_trajectories:
                trajectories[(kind, i)] = traj

    rows.sort(key=lambda r: (r.controller, r.ic_index))
    summary = ScenarioSummary(
        scenario=config.name, rows=rows, out_dir=out_path, trajectories=trajectories
    )
    if out_path is not None:
        summary.summary_csv = out_path / "summary.csv"
        with open(summary.summary_csv, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(_SUMMARY_FIELDS)
            for r in rows:
                writer.writerow([_summary_cell(getattr(r, f)) for f in _SUMMARY_FIELDS])
        summary.summary_txt = out_path / "summary.txt"
        summary.summary_txt.write_text(_format_table(rows), encoding="utf-8")
    return summary


def _format_table(rows) -> str:
    cols = ["controller", "ic", "status", "min_h", "settle", "peak|z|", "final"]
    lines = []
    data = [
        [
            r.controller,
            str(r.ic_index),
            r.status,
            f"{r.min_h:.4g}",
            f"{r.settling_time:.3g}" if np.isfinite(r.settling_time) else "-",
            f"{r.peak_abs_z:.4g}",
            f"{r.final_norm:.3g}",
        ]
        for r in rows
    ]
    widths = [max(len(c), *(len(d[i]) for d in data)) if data else len(c)
              for i, c in enumerate(cols)]
    lines.append("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
    lines.append("  ".join("-" * w for w in widths))
    for d in data:
        lines.append("  ".join(v.ljust(w) for v, w in zip(d, widths)))
    return "\n".join(lines) + "\n"
