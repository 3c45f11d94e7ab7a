"""Figure rendering for runs, sweeps and verification reports.

All figures are written as PNG files next to the delimited output; the Agg
backend keeps the CLI headless.
"""

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

FIGSIZE = (7.0, 4.2)


def _save(fig, path, meta=""):
    """Save a PNG; the scenario hash rides in the Software text chunk."""
    fig.savefig(path, dpi=130, metadata={"Software": f"slabmhd {meta}".strip()})
    plt.close(fig)


def _finite(xs, ys):
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    keep = np.isfinite(ys)
    return xs[keep], ys[keep]


def energy_figure(rows, path, meta=""):
    t = [r["t"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=FIGSIZE)
    for key, label in (("E_total", "total"), ("E_kinetic", "kinetic"),
                       ("E_magnetic_plus", "magnetic (plasma)"),
                       ("E_magnetic_vacuum", "magnetic (vacuum)"),
                       ("E_surface", "surface")):
        xs, ys = _finite(t, [r[key] for r in rows])
        if len(xs):
            ax1.plot(xs, ys, label=label, lw=1.2)
    ax1.set_xlabel("t")
    ax1.set_ylabel("energy")
    ax1.legend(fontsize=7)
    e0 = rows[0]["E_total"]
    drift = [abs(r["E_total"] - e0) / max(abs(e0), 1e-300) for r in rows]
    ax2.semilogy(t, np.maximum(drift, 1e-18), lw=1.2)
    ax2.set_xlabel("t")
    ax2.set_ylabel("|E - E0| / E0")
    fig.tight_layout()
    _save(fig, path, meta)


def monitors_figure(rows, path, meta=""):
    t = [r["t"] for r in rows]
    fig, axes = plt.subplots(2, 2, figsize=(7.0, 5.2))
    panels = (("rt_min", axes[0, 0]), ("upsilon", axes[0, 1]),
              ("wall_gap", axes[1, 0]), ("chart_margin", axes[1, 1]))
    for key, ax in panels:
        xs, ys = _finite(t, [r[key] for r in rows])
        if len(xs):
            ax.plot(xs, ys, lw=1.2)
        ax.set_title(key, fontsize=9)
        ax.set_xlabel("t")
    fig.tight_layout()
    _save(fig, path, meta)


def divergence_figure(rows, path, meta=""):
    t = [r["t"] for r in rows]
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for key in ("max_div_v", "max_div_h", "budget_residual"):
        xs, ys = _finite(t, [abs(r[key]) for r in rows])
        if len(xs):
            ax.semilogy(xs, np.maximum(ys, 1e-18), label=key, lw=1.2)
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path, meta)


def interface_figure(gamma, path, z0=0.0, meta=""):
    eta = z0 - gamma
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    im = ax.imshow(eta.T, origin="lower", extent=(0, 2 * np.pi, 0, 2 * np.pi),
                   cmap="RdBu_r")
    fig.colorbar(im, ax=ax, label="interface height z(u, v)")
    ax.set_xlabel("u")
    ax.set_ylabel("v")
    fig.tight_layout()
    _save(fig, path, meta)


def run_figures(rows, snaps, out_dir, meta=""):
    import os

    if not rows:
        return
    energy_figure(rows, os.path.join(out_dir, "energy.png"), meta)
    monitors_figure(rows, os.path.join(out_dir, "monitors.png"), meta)
    divergence_figure(rows, os.path.join(out_dir, "constraints.png"), meta)
    interface_figure(snaps[-1].gamma, os.path.join(out_dir, "interface.png"),
                     meta=meta)


def sweep_figure(alphas, dists, path, meta=""):
    fig, ax = plt.subplots(figsize=FIGSIZE)
    labels = [f"{a1:g}->{a2:g}" for a1, a2 in zip(alphas, alphas[1:])]
    ax.semilogy(range(len(dists)), dists, "o-")
    ax.set_xticks(range(len(dists)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("interface L2 distance at t_end")
    ax.set_xlabel("consecutive surface-tension pair")
    fig.tight_layout()
    _save(fig, path, meta)


def verify_figure(checks, path, meta=""):
    names = [c["name"] for c in checks]
    vals = [max(c["value"], 1e-18) for c in checks]
    ths = [c["threshold"] for c in checks]
    ok = [c["passed"] for c in checks]
    fig, ax = plt.subplots(figsize=(7.5, 0.45 * len(names) + 1.2))
    y = np.arange(len(names))
    ax.barh(y, vals, color=["tab:green" if p else "tab:red" for p in ok])
    for yi, th in zip(y, ths):
        ax.plot([th, th], [yi - 0.4, yi + 0.4], "k--", lw=1.0)
    ax.set_yticks(y)
    ax.set_yticklabels(names, fontsize=8)
    ax.set_xscale("log")
    ax.set_xlabel("residual (dashed: threshold)")
    fig.tight_layout()
    _save(fig, path, meta)
