"""Figure rendering from trajectory logs.

Four figure kinds, mirroring the benchmark studies:

* ``phase``            - 2-state phase portrait with obstacle disks, one
  curve per rollout, start markers.
* ``quadrotor-course`` - (x, y) projection of the quadrotor runs over the
  obstacle course.
* ``timeseries``       - stacked panels: barrier states, safety margin,
  and (when logged) the Lyapunov candidate.
* ``gains``            - feedback-gain components over time, one panel per
  rollout source.

Styling is fixed and file metadata is stripped, so identical inputs render
byte-identical images.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .schema import MissingColumns, PlotSpec, TrajectoryLog

_STYLE = {
    "figure.dpi": 130,
    "savefig.dpi": 130,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "svg.hashsalt": "safesdre",
}

_CONTROLLER_STYLE = {
    "bas_sdre": {"color": "#1f77b4", "linestyle": "-", "label": "BaS-SDRE"},
    "vanilla_sdre": {"color": "#2ca02c", "linestyle": "-.", "label": "vanilla SDRE"},
    "bas_lqr": {"color": "#d62728", "linestyle": ":", "label": "BaS-LQR"},
    "": {"color": "#7f7f7f", "linestyle": "-", "label": "rollout"},
}


def _style_for(log: TrajectoryLog) -> dict:
    return dict(_CONTROLLER_STYLE.get(log.controller, _CONTROLLER_STYLE[""]))


def _save(fig, out_path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    kind = out_path.suffix.lstrip(".").lower() or "png"
    metadata = {"Date": None} if kind == "svg" else {"Software": "safesdre-plot"}
    fig.savefig(out_path, format=kind, metadata=metadata)
    plt.close(fig)
    return out_path


def _draw_obstacles(ax, obstacles):
    for ob in obstacles:
        ax.add_patch(
            plt.Circle(ob.center, ob.radius, facecolor="#8b0000", alpha=0.85,
                       edgecolor="black", linewidth=0.6, zorder=3)
        )


def _dedupe_legend(ax):
    handles, labels = ax.get_legend_handles_labels()
    seen = {}
    for h, l in zip(handles, labels):
        seen.setdefault(l, h)
    if seen:
        ax.legend(seen.values(), seen.keys(), loc="best", fontsize=8)


def plot_phase(spec: PlotSpec) -> Path:
    """Overlay rollout curves in the plane with obstacles and start marks.

    Uses the first two plant states; raises :class:`MissingColumns` when a
    log has fewer than two.
    """
    logs = spec.load()
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 4.6))
        _draw_obstacles(ax, spec.obstacles)
        for log in logs:
            if log.n < 2:
                raise MissingColumns(f"{log.path.name}: needs at least 2 state columns")
            sty = _style_for(log)
            ax.plot(log.x[:, 0], log.x[:, 1], zorder=2, **sty)
            ax.plot(log.x[0, 0], log.x[0, 1], "o", color="black", markersize=5,
                    markerfacecolor="none", zorder=4)
        ax.plot(0.0, 0.0, "*", color="black", markersize=9, zorder=4)
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        ax.set_title(spec.title or "closed-loop trajectories")
        ax.set_aspect("equal", adjustable="datalim")
        _dedupe_legend(ax)
        fig.tight_layout()
        return _save(fig, spec.out_path)


def plot_quadrotor_course(spec: PlotSpec) -> Path:
    """(x, y) projection of quadrotor runs over the obstacle course."""
    logs = spec.load()
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.6, 4.6))
        _draw_obstacles(ax, spec.obstacles)
        for log in logs:
            if log.n < 2:
                raise MissingColumns(f"{log.path.name}: needs position columns")
            sty = _style_for(log)
            ax.plot(log.x[:, 0], log.x[:, 1], zorder=2, **sty)
            ax.plot(log.x[0, 0], log.x[0, 1], "o", color="black", markersize=5,
                    markerfacecolor="none", zorder=4)
        ax.plot(0.0, 0.0, "*", color="black", markersize=10, zorder=4,
                label="target")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_title(spec.title or "quadrotor obstacle course")
        ax.set_aspect("equal", adjustable="datalim")
        _dedupe_legend(ax)
        fig.tight_layout()
        return _save(fig, spec.out_path)


def plot_timeseries(spec: PlotSpec) -> Path:
    """Stacked panels: barrier states, worst margin, Lyapunov candidate.

    The candidate panel appears only when every input carries certificate
    columns; barrier-state panels require ``q >= 1`` in at least one log.
    """
    logs = spec.load()
    if not any(log.q for log in logs):
        raise MissingColumns("no barrier-state columns in any input")
    with_cert = all(log.W is not None for log in logs)
    rows = 3 if with_cert else 2
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(rows, 1, figsize=(5.6, 2.1 * rows), sharex=True)
        ax_z, ax_h = axes[0], axes[1]
        for log in logs:
            sty = _style_for(log)
            plain = {k: v for k, v in sty.items() if k != "label"}
            for j in range(log.q):
                ax_z.plot(log.t, log.z[:, j], **(sty if j == 0 else plain))
            ax_h.plot(log.t, log.h_min, **plain)
        ax_z.set_ylabel("barrier state z")
        ax_h.set_ylabel("min margin h")
        ax_h.axhline(0.0, color="black", linewidth=0.8)
        if with_cert:
            for log in logs:
                plain = {k: v for k, v in _style_for(log).items() if k != "label"}
                axes[2].plot(log.t, log.W, **plain)
            axes[2].set_ylabel("W")
        axes[-1].set_xlabel("t [s]")
        _dedupe_legend(ax_z)
        fig.suptitle(spec.title or "barrier state and safety margin")
        fig.tight_layout()
        return _save(fig, spec.out_path)


def plot_gains(spec: PlotSpec) -> Path:
    """Feedback-gain components over time, one panel per rollout."""
    logs = spec.load()
    for log in logs:
        if log.gains.shape[1] == 0:
            raise MissingColumns(f"{log.path.name}: no gain columns")
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(
            len(logs), 1, figsize=(5.6, 2.3 * len(logs)), sharex=True, squeeze=False
        )
        for ax, log in zip(axes[:, 0], logs):
            for j in range(log.gains.shape[1]):
                ax.plot(log.t, log.gains[:, j], linewidth=1.0)
            label = _style_for(log)["label"]
            ax.set_ylabel(f"{label}\ngain entries")
        axes[-1, 0].set_xlabel("t [s]")
        fig.suptitle(spec.title or "feedback gains over time")
        fig.tight_layout()
        return _save(fig, spec.out_path)


KINDS = {
    "phase": plot_phase,
    "quadrotor-course": plot_quadrotor_course,
    "timeseries": plot_timeseries,
    "gains": plot_gains,
}


def render(spec: PlotSpec) -> Path:
    try:
        fn = KINDS[spec.kind]
    except KeyError:
        raise ValueError(f"unknown figure kind {spec.kind!r}; available: {sorted(KINDS)}")
    return fn(spec)
