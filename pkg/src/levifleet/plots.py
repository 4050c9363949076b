"""Figure rendering for run and scan outputs.

Every CLI report path writes a PNG next to its delimited output: trajectory
plots from trace files, outcome summaries from metrics, and magnitude
profiles from scan CSVs.  Agg backend only; nothing here opens a window.
"""

from __future__ import annotations

from typing import Any, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .config import AppConfig


def plot_trajectories(trace: list[dict[str, Any]], cfg: AppConfig, path: str) -> None:
    """Top-down arena view: robot paths, start markers, objects, locations."""
    fig, ax = plt.subplots(figsize=(6, 6))
    arena = cfg.arena
    ax.set_xlim(0, arena.width)
    ax.set_ylim(0, arena.height)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")

    by_robot: dict[str, tuple[list[float], list[float]]] = {}
    for entry in trace:
        if entry["kind"] == "pose":
            xs, ys = by_robot.setdefault(entry["robot"], ([], []))
            xs.append(entry["x"])
            ys.append(entry["y"])
    for i, (robot, (xs, ys)) in enumerate(sorted(by_robot.items())):
        color = f"C{i}"
        ax.plot(xs, ys, color=color, lw=1.2, label=robot)
        if xs:
            ax.plot(xs[0], ys[0], marker="o", color=color, ms=6)
            ax.plot(xs[-1], ys[-1], marker="s", color=color, ms=6)

    for name, p in sorted(arena.named_locations.items()):
        ax.plot(p.x, p.y, marker="+", color="k", ms=8)
        ax.annotate(name, (p.x, p.y), textcoords="offset points", xytext=(4, 4), fontsize=7)
    for name, p in sorted(arena.objects.items()):
        ax.plot(p.x, p.y, marker="*", color="darkorange", ms=9)
        ax.annotate(name, (p.x, p.y), textcoords="offset points", xytext=(4, -8), fontsize=7)

    ax.legend(loc="upper right", fontsize=8)
    ax.set_title("robot trajectories")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_success_rates(report, path: str) -> None:
    """Per-seed outcome strip plus the aggregate success rate."""
    runs = report.runs
    fig, ax = plt.subplots(figsize=(7, 2.4))
    xs = list(range(len(runs)))
    colors = ["tab:green" if r.success else "tab:red" for r in runs]
    ax.bar(xs, [1] * len(runs), color=colors, width=0.9)
    ax.set_yticks([])
    ax.set_xlabel("run index (one bar per seed)")
    ax.set_title(
        f"{report.scenario}: success {report.success_rate:.0f}%  "
        f"parse {report.parse_success_rate:.0f}%  "
        f"latency {report.mean_latency if report.mean_latency is None else round(report.mean_latency, 3)} s"
    )
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_scan_profile(samples: Sequence, path: str, title: str = "pressure magnitude") -> None:
    """Magnitude-vs-arclength profile of a line scan."""
    import numpy as np

    fig, ax = plt.subplots(figsize=(7, 3.2))
    origin = np.asarray(samples[0].point)
    s = [float(np.linalg.norm(np.asarray(smpl.point) - origin)) for smpl in samples]
    ax.plot(s, [smpl.magnitude for smpl in samples], lw=1.3)
    ax.set_xlabel("distance along scan [m]")
    ax.set_ylabel("|P| [Pa]")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
