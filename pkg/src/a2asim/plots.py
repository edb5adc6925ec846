"""Sweep figures: log-log polylines of predicted time, rendered to SVG.

Output is byte-reproducible: the SVG hash salt is pinned and the creation
date is stripped, so identical sweeps give identical files.
"""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_RC = {
    "svg.hashsalt": "a2asim",
    "figure.figsize": (6.4, 4.2),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 7,
}


def read_rows(csv_path) -> list[dict]:
    """Sweep CSV rows with numeric fields coerced."""
    rows = []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            for key in ("n_nodes", "ppn", "group_size", "block_bytes",
                        "total_bytes_per_rank", "steps", "msgs_l0", "msgs_l1",
                        "msgs_l2", "bytes_l0", "bytes_l1", "bytes_l2"):
                row[key] = int(row[key])
            for key in ("predicted_total_s", "predicted_l2_s"):
                row[key] = float(row[key])
            rows.append(row)
    return rows


def _series_label(key: tuple, multi_group: bool) -> str:
    alg, impl, gs = key
    label = alg if impl in ("-", "") else f"{alg}/{impl}"
    if multi_group:
        label += f" g={gs}"
    return label


def _collect(rows, x_field):
    """{series key: sorted [(x, seconds)]}, series = (algorithm, impl, group)."""
    series: dict[tuple, list] = {}
    for r in rows:
        key = (r["algorithm"], r["impl"], r["group_size"])
        series.setdefault(key, []).append((r[x_field], r["predicted_total_s"]))
    for pts in series.values():
        pts.sort()
    return dict(sorted(series.items()))


def _render(rows, x_field, x_label, title, path) -> None:
    groups_per_alg: dict[str, set] = {}
    for r in rows:
        groups_per_alg.setdefault(r["algorithm"], set()).add(r["group_size"])
    multi_group = any(len(g) > 1 for g in groups_per_alg.values())
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for key, pts in _collect(rows, x_field).items():
            xs = [p[0] for p in pts]
            ys = [p[1] for p in pts]
            ax.plot(xs, ys, marker="o", markersize=3,
                    label=_series_label(key, multi_group))
        ax.set_xscale("log", base=2)
        ax.set_yscale("log")
        ax.set_xlabel(x_label)
        ax.set_ylabel("predicted time (s)")
        ax.set_title(title)
        if rows:
            ax.legend(loc="best")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def render_sweep_plots(rows: list[dict], out_dir) -> list[Path]:
    """Three views: time vs bytes at the largest node count, and time vs
    nodes at the smallest and largest byte sizes."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    if not rows:
        return paths
    nodes = sorted({r["n_nodes"] for r in rows})
    sizes = sorted({r["block_bytes"] for r in rows})

    n_max = nodes[-1]
    sel = [r for r in rows if r["n_nodes"] == n_max]
    path = out_dir / f"time_vs_bytes_nodes{n_max}.svg"
    _render(sel, "block_bytes", "block bytes per peer",
            f"predicted time vs size, {n_max} nodes", path)
    paths.append(path)

    for s in dict.fromkeys([sizes[0], sizes[-1]]):
        sel = [r for r in rows if r["block_bytes"] == s]
        path = out_dir / f"time_vs_nodes_bytes{s}.svg"
        _render(sel, "n_nodes", "nodes",
                f"predicted time vs nodes, {s} B blocks", path)
        paths.append(path)
    return paths
