"""SVG figures: valid-time sweeps, error curves and space-time error maps."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import TrialSummary  # noqa: E402

COLORS = {"hybrid": "tab:red", "reservoir": "black", "knowledge": "tab:blue"}
LABELS = {"hybrid": "hybrid", "reservoir": "reservoir only", "knowledge": "knowledge-based model"}

# deterministic SVG output (no random ids, no timestamps)
matplotlib.rcParams["svg.hashsalt"] = "hyfc"
_SVG_META = {"Date": None}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_SVG_META, bbox_inches="tight")
    plt.close(fig)


def _errorbar(ax, xs, summaries, method):
    med = np.array([s.median for s in summaries])
    lo = med - np.array([s.q1 for s in summaries])
    hi = np.array([s.q3 for s in summaries]) - med
    ax.errorbar(xs, med, yerr=np.vstack([lo, hi]), color=COLORS.get(method), marker="o", capsize=3,
                label=LABELS.get(method, method))


def plot_valid_time_vs_reservoir_size(summaries: dict[tuple[str, int, float], TrialSummary],
                                      epsilon: float, path) -> None:
    """Median valid time (with quartile bars) against D_r, one curve per method."""
    sizes = sorted({d for (m, d, e) in summaries if m != "knowledge"})
    fig, ax = plt.subplots(figsize=(5, 4))
    for method in ("hybrid", "reservoir"):
        pts = [(d, summaries[(method, d, e)]) for (m, d, e) in summaries
               if m == method and (method == "reservoir" or e == epsilon)]
        pts.sort(key=lambda p: p[0])
        if pts:
            _errorbar(ax, [p[0] for p in pts], [p[1] for p in pts], method)
    k = summaries.get(("knowledge", 0, epsilon))
    if k is not None and sizes:
        _errorbar(ax, sizes, [k] * len(sizes), "knowledge")
    ax.set_xlabel("reservoir size $D_r$")
    ax.set_ylabel(r"median valid time $\lambda_{max} t_v$")
    ax.set_title(f"epsilon = {epsilon:g}")
    ax.legend()
    _save(fig, path)


def plot_valid_time_vs_epsilon(summaries: dict[tuple[str, int, float], TrialSummary],
                               D_r: int, path) -> None:
    epsilons = sorted({e for (m, d, e) in summaries if m != "reservoir"})
    fig, ax = plt.subplots(figsize=(5, 4))
    for method in ("hybrid", "knowledge"):
        d = D_r if method == "hybrid" else 0
        pts = sorted((e, summaries[(m, dd, e)]) for (m, dd, e) in summaries if m == method and dd == d)
        if pts:
            _errorbar(ax, [p[0] for p in pts], [p[1] for p in pts], method)
    r = summaries.get(("reservoir", D_r, 0.0))
    if r is not None and epsilons:
        _errorbar(ax, epsilons, [r] * len(epsilons), "reservoir")
    ax.set_xscale("log")
    ax.set_xlabel(r"model error $\epsilon$")
    ax.set_ylabel(r"median valid time $\lambda_{max} t_v$")
    ax.set_title(f"D_r = {D_r}")
    ax.legend()
    _save(fig, path)


def plot_error_curves(lyap_times: np.ndarray, errors: dict[str, np.ndarray], f: float,
                      valid_times: dict[str, float], path) -> None:
    """Normalized error ``E(t)`` of one trial per method, threshold and valid times marked."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for method, E in errors.items():
        color = COLORS.get(method)
        ax.plot(lyap_times[: len(E)], E, color=color, label=LABELS.get(method, method))
        if method in valid_times:
            ax.axvline(valid_times[method], color=color, linestyle="--", linewidth=0.8)
    ax.axhline(f, color="gray", linestyle=":")
    ax.set_ylim(0, max(2 * f, 1.0))
    ax.set_xlabel(r"$\lambda_{max} t$")
    ax.set_ylabel("E(t)")
    ax.legend()
    _save(fig, path)


def plot_spacetime_errors(lyap_times: np.ndarray, grid: np.ndarray, truth: np.ndarray,
                          errors: dict[str, np.ndarray], valid_times: dict[str, float],
                          path) -> None:
    """True field on top, then prediction minus truth per method.

    Error panels share a colour scale symmetric about zero, so green marks
    small error and red/blue the large positive/negative deviations.
    """
    n = 1 + len(errors)
    fig, axes = plt.subplots(n, 1, figsize=(7, 1.6 * n), sharex=True)
    axes = np.atleast_1d(axes)
    ext = [lyap_times[0], lyap_times[-1], grid[0], grid[-1]]
    vmax = float(np.max(np.abs(truth)))
    axes[0].imshow(truth.T, aspect="auto", origin="lower", extent=ext, cmap="jet",
                   vmin=-vmax, vmax=vmax)
    axes[0].set_ylabel("truth")
    for ax, (method, err) in zip(axes[1:], errors.items()):
        err = np.where(np.isfinite(err), err, np.nan)
        im = ax.imshow(err.T, aspect="auto", origin="lower", extent=ext, cmap="jet",
                       vmin=-vmax, vmax=vmax)
        if method in valid_times:
            ax.axvline(valid_times[method], color="black", linewidth=1.0)
        ax.set_ylabel(method)
    axes[-1].set_xlabel(r"$\lambda_{max} t$")
    fig.colorbar(im, ax=axes.tolist(), shrink=0.8)
    _save(fig, path)
