"""Figures written next to the CSV/JSON outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def ground_state_figure(d: Path, Q, window: float = 20.0) -> Path:
    g = Q.grid
    q = Q.values.real
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    m = np.abs(g.x) <= window
    ax1.plot(g.x[m], q[m])
    ax1.set_xlabel("x")
    ax1.set_ylabel("Q")
    pos = g.x > 1
    ax2.loglog(g.x[pos], q[pos], label="Q")
    ax2.loglog(g.x[pos], q[pos][0] * g.x[pos][0] ** 2 / g.x[pos] ** 2, "--", label="x^-2")
    ax2.set_xlabel("x")
    ax2.legend()
    return _save(fig, Path(d) / "ground_state.png")


def profile_scan_figure(d: Path, rows: list[dict]) -> Path:
    b = np.array([r["b"] for r in rows])
    phi = np.array([r["phi_l2"] for r in rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(b, phi, "o-", label="||Phi_P||")
    ax.loglog(b, phi[-1] * (b / b[-1]) ** 5, "--", label="b^5")
    ax.set_xlabel("b")
    ax.legend()
    return _save(fig, Path(d) / "profile_scan.png")


def series_figure(d: Path, series) -> Path:
    t = series.column("t")
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    axes[0].semilogy(t, series.column("lambda_est") ** 2)
    axes[0].set_ylabel("lambda_est^2")
    axes[1].plot(t, series.column("halfnorm") * np.abs(t))
    axes[1].set_ylabel("||D^1/2 u|| |t|")
    m = series.column("mass")
    e = series.column("energy")
    axes[2].plot(t, e, label="energy")
    axes[2].plot(t, (m - m[0]) / m[0] * 1e8, label="mass drift x 1e8")
    axes[2].legend()
    for ax in axes:
        ax.set_xlabel("t")
    return _save(fig, Path(d) / "timeseries.png")


def experiment_figures(d: Path, series, mt, report) -> list[Path]:
    out = [series_figure(d, series)]
    ok = mt.ok()
    if len(ok) < 2:
        return out
    t = np.array([r["t"] for r in ok])
    lam = np.array([r["lambda"] for r in ok])
    b = np.array([r["b"] for r in ok])
    A0 = report.run.get("A0")
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    axes[0].loglog(np.abs(t), lam, "o", ms=3, label="lambda")
    if A0:
        axes[0].loglog(np.abs(t), t**2 / (4 * A0**2), "--", label="t^2 / (4 A0^2)")
        axes[1].axhline(1 / A0, ls="--", color="k", label="1 / A0")
    axes[0].set_xlabel("|t|")
    axes[0].legend()
    axes[1].plot(t, b / np.sqrt(lam), "o", ms=3, label="b / sqrt(lambda)")
    axes[1].set_xlabel("t")
    axes[1].legend()
    out.append(_save(fig, Path(d) / "modulation.png"))
    return out


def biharmonic_figure(d: Path, As, ratios) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(As, ratios, "o-", label="lhs A / ||u||^2")
    ax.loglog(As, ratios[0] * As[0] / np.asarray(As), "--", label="1/A")
    ax.set_xlabel("A")
    ax.legend()
    return _save(fig, Path(d) / "biharmonic.png")
