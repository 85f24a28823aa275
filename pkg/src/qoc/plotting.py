"""Figures for run, sweep and audit outputs (headless Agg backend)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_series(points, path, xlabel="x", ylabel="y", title=None):
    """Line plot of ``(x, y, series)`` triples, one line per series."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    names = list(dict.fromkeys(p[2] for p in points))
    for name in names:
        xy = sorted((p[0], p[1]) for p in points if p[2] == name)
        ax.plot([a for a, _ in xy], [b for _, b in xy], marker="o", ms=3, label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_comparison(rows, path):
    """Q vs MC estimates with 2-SE bars, one panel row per OC name."""
    keyed = {}
    for r in rows:
        keyed.setdefault((r["scenario_id"], r["oc"]), {})[r["engine"]] = r
    pairs = [(k, v) for k, v in keyed.items() if "q" in v and "mc" in v]
    if not pairs:
        return False
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    q = np.array([v["q"]["estimate"] for _, v in pairs])
    m = np.array([v["mc"]["estimate"] for _, v in pairs])
    ax.errorbar(q, m, xerr=2 * np.array([v["q"]["se"] for _, v in pairs]),
                yerr=2 * np.array([v["mc"]["se"] for _, v in pairs]), fmt="o", ms=3, lw=0.8)
    lo, hi = min(q.min(), m.min()), max(q.max(), m.max())
    ax.plot([lo, hi], [lo, hi], "k--", lw=0.8)
    ax.set_xlabel("Q estimate")
    ax.set_ylabel("MC estimate")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def plot_audit(records, fit, path):
    """Per-scenario discrepancies with 2-SE bars and the fitted mean discrepancy."""
    d = np.array([r.delta for r in records])
    s = np.sqrt([r.variance for r in records])
    x = np.arange(d.size)
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.errorbar(x, d, yerr=2 * s, fmt="o", ms=2.5, lw=0.6, alpha=0.7)
    ax.axhline(0.0, color="k", lw=0.6)
    ax.axhline(fit.delta, color="C3", lw=1.2, label=f"mean discrepancy {fit.delta:.4f}")
    ax.axhspan(*fit.delta_interval, color="C3", alpha=0.15)
    ax.set_xlabel("scenario")
    ax.set_ylabel("Q - MC")
    ax.set_title(f"tau = {fit.tau:.4f}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
