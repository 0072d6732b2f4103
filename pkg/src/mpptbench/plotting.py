"""Static SVG figures with byte-stable output."""

from __future__ import annotations

import matplotlib

matplotlib.use("svg")

from matplotlib import rc_context  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

_RC = {"svg.hashsalt": "mpptbench", "svg.fonttype": "path", "path.simplify": False}


def _save(fig, path):
    with rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})


def curve_svg(table, path, title=""):
    """P-V and I-V panels with every local maximum marked and the global one highlighted."""
    peaks = table.local_maxima()
    k_best = int(table.power.argmax())
    fig = Figure(figsize=(6.4, 6.0))
    ax_p, ax_i = fig.subplots(2, 1, sharex=True)
    ax_p.plot(table.voltage, table.power * 1e3, color="tab:blue", lw=1.2)
    ax_p.plot(table.voltage[peaks], table.power[peaks] * 1e3, "o", color="tab:orange",
              ms=5, label=f"local maxima ({len(peaks)})")
    ax_p.plot([table.voltage[k_best]], [table.power[k_best] * 1e3], "*", color="tab:red",
              ms=12, label="GMPP")
    ax_p.set_ylabel("P (mW)")
    ax_p.legend(loc="best", fontsize=8)
    ax_i.plot(table.voltage, table.current * 1e3, color="tab:green", lw=1.2)
    ax_i.set_ylabel("I (mA)")
    ax_i.set_xlabel("V (V)")
    if title:
        ax_p.set_title(title)
    for ax in (ax_p, ax_i):
        ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
    return len(peaks)


def run_svg(log, path, title=""):
    """Harvested vs available power, and the duty command, against time."""
    fig = Figure(figsize=(7.0, 5.5))
    ax_p, ax_d = fig.subplots(2, 1, sharex=True)
    t_ms = log.t * 1e3
    ax_p.plot(t_ms, log.p_max * 1e3, color="0.4", lw=1.0, ls="--", label="P_max")
    ax_p.plot(t_ms, log.p_pv * 1e3, color="tab:blue", lw=1.0, label="P_pv")
    ax_p.set_ylabel("P (mW)")
    ax_p.legend(loc="best", fontsize=8)
    ax_d.plot(t_ms, log.duty, color="tab:purple", lw=1.0)
    ax_d.set_ylabel("duty")
    ax_d.set_xlabel("t (ms)")
    if title:
        ax_p.set_title(title)
    for ax in (ax_p, ax_d):
        ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def heatmap_svg(rows, path, value="eta_pct", title=""):
    """Algorithm x scenario grid of one bench column (first converter per pair)."""
    algos = sorted({r["algorithm"] for r in rows})
    scens = sorted({r["scenario"] for r in rows})
    grid = [[float("nan")] * len(scens) for _ in algos]
    for r in rows:
        a, s = algos.index(r["algorithm"]), scens.index(r["scenario"])
        v = r.get(value)
        if grid[a][s] != grid[a][s] and v not in (None, ""):
            grid[a][s] = float(v)
    fig = Figure(figsize=(1.2 + 1.1 * len(scens), 1.0 + 0.5 * len(algos)))
    ax = fig.subplots()
    im = ax.imshow(grid, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(scens)), scens, rotation=30, ha="right", fontsize=8)
    ax.set_yticks(range(len(algos)), algos, fontsize=8)
    for a, line in enumerate(grid):
        for s, v in enumerate(line):
            if v == v:
                ax.text(s, a, f"{v:.2f}", ha="center", va="center", fontsize=7, color="w")
    fig.colorbar(im, ax=ax, label=value)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
