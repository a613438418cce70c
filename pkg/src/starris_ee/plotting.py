"""Figure rendering for sweep results and solve traces.

Figures are written next to the delimited output as PNG files; the CSV
remains the machine-readable contract. Uses the Agg backend so rendering
works headless.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  backend must be set first

MODE_STYLE = {
    "star_es": dict(color="tab:blue", marker="o", label="STAR (energy splitting)"),
    "reflect_only": dict(color="tab:orange", marker="s", label="reflect-only panels"),
    "transmit_only": dict(color="tab:green", marker="^", label="transmit-only panels"),
}

_XLABELS = {
    "pmax_dbm": "transmit power budget (dBm)",
    "ris_elements": "surface elements",
    "static_power_dbm": "static power (dBm)",
    "noise_dbm": "noise power (dBm)",
}


def _summary_series(rows, metric):
    """Per-mode (values, metric means) taken from the summary rows."""
    series = {}
    for r in rows:
        if r.seed != "mean":
            continue
        series.setdefault(r.mode, []).append((r.value, getattr(r, metric)))
    for mode in series:
        series[mode].sort()
    return series


def render_sweep_figures(rows, out_dir, prefix="sweep"):
    """Render min-EE and average-SE curves versus the swept parameter.

    Returns the list of files written.
    """
    if not rows:
        return []
    os.makedirs(out_dir, exist_ok=True)
    sweep_param = rows[0].sweep_param
    written = []
    for metric, ylabel, suffix in [
        ("min_ee", "worst-user energy efficiency (bit/s/Hz/W)", "min_ee"),
        ("avg_se", "average spectral efficiency (bit/s/Hz)", "avg_se"),
    ]:
        series = _summary_series(rows, metric)
        fig, ax = plt.subplots(figsize=(6, 4))
        for mode, pts in series.items():
            xs = [p[0] for p in pts]
            ys = [p[1] for p in pts]
            style = MODE_STYLE.get(mode, dict(marker="x", label=mode))
            ax.plot(xs, ys, **style)
        ax.set_xlabel(_XLABELS.get(sweep_param, sweep_param))
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.4)
        ax.legend()
        fig.tight_layout()
        path = os.path.join(out_dir, f"{prefix}_{suffix}.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def render_convergence_figure(report, path):
    """Plot the outer min-EE trajectory and the Dinkelbach parameter trace."""
    outer = report.trace.outer
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot([row.i for row in outer], [row.min_ee for row in outer],
             "o-", color="tab:blue")
    ax1.set_xlabel("outer iteration")
    ax1.set_ylabel("worst-user EE (bit/s/Hz/W)")
    ax1.grid(True, alpha=0.4)

    xs, ys = [], []
    offset = 0
    for row in outer:
        for d in row.dinkelbach_rows:
            xs.append(offset + d.n)
            ys.append(d.lam)
        offset = xs[-1] if xs else offset
    ax2.plot(xs, ys, ".-", color="tab:red")
    ax2.set_xlabel("cumulative Dinkelbach iteration")
    ax2.set_ylabel("EE parameter")
    ax2.grid(True, alpha=0.4)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
