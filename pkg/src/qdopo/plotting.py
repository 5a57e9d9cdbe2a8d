"""Matplotlib figures written next to the CSV outputs (non-interactive backend)."""
from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .engine import read_checkpoint  # noqa: E402


def _finish(fig, path, config_hash=None):
    fig.tight_layout()
    meta = {"Description": f"config_hash={config_hash}"} if config_hash else None
    fig.savefig(path, dpi=120, metadata=meta)
    plt.close(fig)


def plot_spectra(report, path, k_max=None, title=None, config_hash=None):
    """Mean far-field occupations (log scale) and twin-beam variance ``V(k)``."""
    k = report.k
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for name, label, color in (("mean_N1", "signal", "C0"), ("mean_N0", "pump", "C3")):
        y = np.where(report[name] > 0, report[name], np.nan)
        ax0.semilogy(k, y, "o-", ms=3, color=color, label=label)
    ax0.set_ylabel(r"$\langle N(k)\rangle$")
    ax0.legend(frameon=False)
    pos = k > 0
    ax1.errorbar(k[pos], report["v_twin"][pos], yerr=report["v_twin_err"][pos], fmt="o-",
                 ms=3, capsize=2, color="C0", label="signal")
    ax1.errorbar(k[pos], report["v_twin_pump"][pos], yerr=report["v_twin_pump_err"][pos],
                 fmt="s", ms=2, capsize=2, color="C3", alpha=0.6, label="pump")
    ax1.axhline(0.0, color="0.5", ls=":", lw=1)
    ax1.axhline(-0.5, color="0.5", ls="--", lw=1)
    ax1.set_ylabel("V(k)")
    ax1.set_xlabel("k")
    ax1.legend(frameon=False)
    if k_max:
        ax1.set_xlim(-k_max if k.min() < 0 else 0, k_max)
    if title:
        ax0.set_title(title)
    _finish(fig, path, config_hash)


def plot_spatiotemporal(snapshot_path, path, params=None, config_hash=None):
    """Near-field and far-field intensity diagrams (space or k horizontal, time vertical)."""
    header, times, a0, a1 = read_checkpoint(snapshot_path)
    n = a1.shape[1]
    length = header["params"]["length_L"]
    x = np.arange(n) * length / n
    k = np.fft.fftshift(np.fft.fftfreq(n, length / n) * 2 * np.pi)
    far1 = np.fft.fftshift(np.abs(np.fft.fft(a1, axis=1, norm="ortho")) ** 2, axes=1)
    far0 = np.fft.fftshift(np.abs(np.fft.fft(a0, axis=1, norm="ortho")) ** 2, axes=1)
    fig, axes = plt.subplots(1, 4, figsize=(12, 4), sharey=True)
    extent_x = (x[0], x[-1], times[0], times[-1])
    extent_k = (k[0], k[-1], times[0], times[-1])
    panels = (
        (a1.real, extent_x, "signal Re(α₁), near field", "x", "RdBu_r"),
        (np.abs(a0) ** 2, extent_x, "pump |α₀|², near field", "x", "viridis"),
        (np.log10(far1 + 1e-30), extent_k, "signal far field (log)", "k", "magma"),
        (np.log10(far0 + 1e-30), extent_k, "pump far field (log)", "k", "magma"),
    )
    for ax, (img, ext, title, xl, cmap) in zip(axes, panels):
        ax.imshow(img, aspect="auto", origin="lower", extent=ext, cmap=cmap,
                  interpolation="nearest")
        ax.set_title(title, fontsize=9)
        ax.set_xlabel(xl)
    axes[0].set_ylabel("t")
    _finish(fig, path, config_hash or header.get("config_hash"))


def plot_summary(rows, path, title=None, config_hash=None):
    """``k_c`` observables across the variants of a sweep."""
    labels = [r["variant"] for r in rows]
    pump = np.array([r["pump_E"] for r in rows])
    use_pump = len(set(pump)) == len(pump)
    xs = pump if use_pump else np.arange(len(rows))
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
    for ax, (name, label) in zip(axes, (("xminus_var", r"$X_-$"), ("xplus_var", r"$X_+$"),
                                        ("v_twin", r"V($k_c$)"))):
        y = np.array([r[name] for r in rows])
        e = np.array([r[name + "_err"] for r in rows])
        ax.errorbar(xs, y, yerr=e, fmt="o", capsize=3)
        ax.set_title(label)
        ax.set_xlabel("E" if use_pump else "variant")
        if not use_pump:
            ax.set_xticks(xs, labels, rotation=30, ha="right", fontsize=7)
    if use_pump and pump.max() < 1:
        e = np.linspace(pump.min(), pump.max(), 200)
        axes[0].plot(e, -e / (1 + e), "k-", lw=1)
        axes[1].plot(e, e / (1 - e), "k-", lw=1)
    axes[2].axhline(-0.5, color="0.5", ls="--", lw=1)
    if title:
        fig.suptitle(title)
    _finish(fig, path, config_hash)
