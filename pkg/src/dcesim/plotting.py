"""Matplotlib renderings of the exported data.

Figures are built on :class:`matplotlib.figure.Figure` directly, so no
pyplot state or interactive backend is involved.
"""

from __future__ import annotations

import numpy as np
from matplotlib.colors import LogNorm
from matplotlib.figure import Figure

MODE_COLORS = ("tab:blue", "tab:orange", "tab:green", "tab:red", "tab:purple")
RC = {"dpi": 110}


def _color(k):
    return MODE_COLORS[k % len(MODE_COLORS)]


def save(fig, path):
    # no Software/date metadata keeps the bytes reproducible
    fig.savefig(path, dpi=RC["dpi"], metadata={"Software": None})
    return path


def soliton_figure(theta, envelope, peak_reference):
    fig = Figure(figsize=(9, 3.4), layout="constrained")
    ax1, ax2 = fig.subplots(1, 2)
    x = (theta + np.pi) % (2 * np.pi) - np.pi
    order = np.argsort(x)
    ax1.plot(x[order], np.abs(envelope[order]) ** 2, lw=1.2)
    ax1.axhline(peak_reference, color="0.5", ls="--", lw=0.8, label=r"$2\alpha$")
    ax1.set_xlabel(r"$\theta$ (rad)")
    ax1.set_ylabel(r"$|\psi|^2$")
    ax1.legend(frameon=False)
    n = envelope.size
    m = np.fft.fftshift(np.fft.fftfreq(n, 1.0 / n))
    power = np.fft.fftshift(np.abs(np.fft.fft(envelope) / n) ** 2)
    ax2.plot(m, 10 * np.log10(np.maximum(power, 1e-300)), ".", ms=2)
    ax2.set_xlim(-n / 8, n / 8)
    ax2.set_ylim(bottom=max(10 * np.log10(power.max()) - 120, -300))
    ax2.set_xlabel("comb line $m$")
    ax2.set_ylabel("power (dB)")
    return fig


def modulation_figure(times, path_lengths, index_profiles, theta):
    fig = Figure(figsize=(9, 3.4), layout="constrained")
    ax1, ax2 = fig.subplots(1, 2)
    period = times[1] - times[0]
    t = np.append(times, times[-1] + period)
    L = np.append(path_lengths, path_lengths[0])
    ax1.plot(t * 1e12, (L / L.mean() - 1.0), lw=1.2)
    ax1.set_xlabel("t (ps)")
    ax1.set_ylabel(r"$L(t)/\bar L - 1$")
    dn = index_profiles - index_profiles.mean()
    im = ax2.imshow(
        dn, aspect="auto", origin="lower", cmap="viridis",
        extent=(theta[0], theta[-1], times[0] * 1e12, times[-1] * 1e12),
    )
    ax2.set_xlabel(r"$\theta$ (rad)")
    ax2.set_ylabel("t (ps)")
    fig.colorbar(im, ax=ax2, label=r"$n - \langle n \rangle$")
    return fig


def _tomography_axes(ax, block, labels, title, decades=10):
    # log scale: the vacuum entry would otherwise hide everything else
    mag = np.abs(block)
    top = max(mag.max(), 1e-300)
    im = ax.imshow(np.maximum(mag, top * 10.0**-decades), cmap="magma", origin="upper",
                   norm=LogNorm(vmin=top * 10.0**-decades, vmax=top))
    step = max(1, len(labels) // 8)
    ticks = np.arange(0, len(labels), step)
    ax.set_xticks(ticks, [labels[i] for i in ticks], rotation=90, fontsize=6)
    ax.set_yticks(ticks, [labels[i] for i in ticks], fontsize=6)
    ax.set_title(title, fontsize=9)
    return im


def photon_figure(pure_t, pure_n, decay_t, decay_n, tomographies):
    """Mean photon numbers of both runs plus |rho| blocks (label, block, labels) below them."""
    fig = Figure(figsize=(9, 7.5), layout="constrained")
    axes = fig.subplots(2, 2)
    for ax, t, n, title in ((axes[0, 0], pure_t, pure_n, "zero decay"), (axes[0, 1], decay_t, decay_n, "with decay")):
        for k in range(n.shape[1]):
            ax.plot(t * 1e6, n[:, k], color=_color(k), label=f"mode {k}")
        ax.set_xlabel(r"t ($\mu$s)")
        ax.set_ylabel(r"$\langle n_k \rangle$")
        ax.set_title(title, fontsize=9)
        ax.legend(frameon=False, fontsize=8)
    for ax, (title, block, labels) in zip(axes[1], tomographies):
        im = _tomography_axes(ax, block, labels, title)
        fig.colorbar(im, ax=ax, label=r"$|\rho|$")
    return fig


def concurrence_figure(times, full, reduced, pair_labels):
    fig = Figure(figsize=(5.5, 3.8), layout="constrained")
    ax = fig.subplots()
    ax.plot(times * 1e6, full, color="k", lw=1.5, label="$C_3$")
    for k in range(reduced.shape[1]):
        ax.plot(times * 1e6, reduced[:, k], color=_color(k), lw=1.0, label=f"$C_2$ ({pair_labels[k]})")
    ax.set_xlabel(r"t ($\mu$s)")
    ax.set_ylabel("concurrence")
    ax.legend(frameon=False, fontsize=8)
    return fig


def projection_figure(records):
    """``records`` holds dicts with mode, kind, probability, concurrence, block, labels."""
    modes = sorted({r["mode"] for r in records})
    kinds = sorted({r["kind"] for r in records}, key=lambda k: k != "zero")
    fig = Figure(figsize=(3.2 * len(modes), 3.0 * len(kinds)), layout="constrained")
    axes = np.atleast_2d(fig.subplots(len(kinds), len(modes), squeeze=False))
    for r in records:
        ax = axes[kinds.index(r["kind"]), modes.index(r["mode"])]
        if r["block"] is None:
            ax.set_axis_off()
            ax.set_title(f"mode {r['mode']}, {r['kind']}: impossible", fontsize=8)
            continue
        title = f"mode {r['mode']} {r['kind']}: p={r['probability']:.2e}, C={r['concurrence']:.3g}"
        _tomography_axes(ax, r["block"], r["labels"], title)
    return fig


def persistency_figure(values, modes):
    fig = Figure(figsize=(7, 1.2 + 0.8 * len(modes)), layout="constrained")
    ax = fig.subplots()
    masked = np.ma.masked_invalid(values)
    im = ax.imshow(masked, cmap="cividis", aspect="auto")
    for (i, j), v in np.ndenumerate(values):
        text = "n/a" if np.isnan(v) else f"{v:.3f}"
        ax.text(j, i, text, ha="center", va="center", fontsize=7, color="w" if not np.isnan(v) else "k")
    ax.set_xticks(range(values.shape[1]), [str(j) for j in range(values.shape[1])])
    ax.set_yticks(range(len(modes)), [f"mode {m}" for m in modes])
    ax.set_xlabel("measured photon number")
    fig.colorbar(im, ax=ax, label="remaining concurrence")
    return fig
