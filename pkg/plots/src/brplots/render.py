"""Deterministic figure rendering with in-pipeline data checks.

Rendering is pure: the same CSV and spec give byte-identical PNG and SVG
(fixed style, fixed svg hash salt, no timestamps).  All collapse parameters
come from the fit-summary JSON; nothing is refit here.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .figspec import (
    CheckError,
    FigureSpec,
    SchemaError,
    load_overlay,
    load_rows,
    pairwise_crossing,
    series,
)

STYLE = {
    "figure.figsize": (4.6, 3.4),
    "figure.dpi": 130,
    "savefig.dpi": 130,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.25,
    "svg.hashsalt": "brplots",
    "lines.linewidth": 1.4,
}

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]

LN2 = np.log(2.0)


def _color(i):
    return PALETTE[i % len(PALETTE)]


def _save(fig, spec: FigureSpec) -> list[str]:
    written = []
    for ext in spec.formats:
        path = f"{spec.output}.{ext}"
        meta = {"Date": None} if ext == "svg" else {}
        fig.savefig(path, metadata=meta)
        written.append(path)
    plt.close(fig)
    return written


def _inset(ax):
    return ax.inset_axes([0.52, 0.5, 0.45, 0.45])


# ---------------------------------------------------------------------------
# figure builders: each returns a matplotlib figure after checking the data


def _fig2a(rows, overlay):
    data = series(rows, "collision_log2_z")
    fig, ax = plt.subplots()
    for i, (n, (t, l2z)) in enumerate(data.items()):
        two_nz = 2.0 ** (n + l2z)
        x = t / np.log(n)
        ax.plot(x, two_nz, "o-", ms=2.5, color=_color(i), label=f"N={int(n)}")
        if not np.all(np.diff(two_nz) <= 1e-8):
            raise CheckError(f"2^N Z not monotone for N={n}")
        if two_nz[-1] > 3.0:
            raise CheckError(f"N={n} trace does not reach the 2^N Z <= 3 region")
    # crossing region: all curves pass 2^N Z = 3 in a narrow t/log N band
    taus = []
    for n, (t, l2z) in data.items():
        two_nz = 2.0 ** (n + l2z)
        idx = np.nonzero(two_nz <= 3.0)[0]
        taus.append(t[idx[0]] / np.log(n))
    if max(taus) - min(taus) > 1.2:
        raise CheckError(f"threshold band too wide: {taus}")
    ax.axhline(2.0, color="k", lw=0.7, ls=":")
    ax.set_yscale("log")
    ax.set_xlabel(r"$t/\ln N$")
    ax.set_ylabel(r"$2^N Z$")
    ax.legend(fontsize=7)
    ax.set_title("collision probability")
    return fig


def _fig2b(rows, overlay):
    tau = overlay.get("tau_star")
    if tau is None:
        raise SchemaError("fig2b needs tau_star in the overlay summary")
    data = series(rows, "collision_log2_z")
    fig, ax = plt.subplots()
    for i, (n, (t, l2z)) in enumerate(data.items()):
        resid = 2.0 ** (n + l2z) - 2.0
        keep = resid > 1e-4
        ax.plot(t[keep] - tau * np.log(n), resid[keep], "o", ms=2.5,
                color=_color(i), label=f"N={int(n)}")
    ax.set_yscale("log")
    ax.set_xlabel(r"$t - \tau^* \ln N$")
    ax.set_ylabel(r"$2^N Z - 2$")
    ax.legend(fontsize=7)
    ax.set_title(f"collapse, tau* = {tau:.2f}")
    return fig


def _fig3(rows, overlay):
    data = series(rows, "cmi_bits")
    fig, ax = plt.subplots()
    for i, (n, (t, bits)) in enumerate(data.items()):
        ax.plot(t / np.log(n), bits * LN2, "o-", ms=2.5, color=_color(i),
                label=f"N={int(n)}")
        if not abs(bits[-1] * LN2 / LN2 - 1.0) < 0.05:
            raise CheckError(f"CMI plateau for N={n} is not near log 2")
    ax.axhline(LN2, color="k", lw=0.7, ls=":")
    ax.set_xlabel(r"$t/\ln N$")
    ax.set_ylabel(r"$I^{(2)}(A:C|B)$")
    tau = overlay.get("tau_star")
    if tau is not None:
        ins = _inset(ax)
        for i, (n, (t, bits)) in enumerate(data.items()):
            keep = bits * LN2 > 1e-8
            ins.semilogy(t[keep] - tau * np.log(n), bits[keep] * LN2, "o",
                         ms=1.5, color=_color(i))
        ins.set_xlabel(r"$t-\tau^*\ln N$", fontsize=6)
        ins.tick_params(labelsize=5)
    ax.legend(fontsize=7, loc="lower right")
    ax.set_title("Renyi-2 CMI")
    return fig


def _fig5(rows, overlay):
    chi = series(rows, "log2_chi")
    fid = series(rows, "log2_fidelity")
    fig, ax = plt.subplots()
    for i, n in enumerate(chi):
        t, l2c = chi[n]
        ax.semilogy(t[1:], 2.0 ** l2c[1:], "-", color=_color(i), label=f"N={int(n)}")
        tf, l2f = fid[n]
        ax.semilogy(tf[1:], 2.0 ** l2f[1:], "--", color=_color(i), lw=1.0)
        # late time: chi tracks fidelity (fixed weak noise)
        if abs(l2c[-1] - l2f[-1]) > 1.0:
            raise CheckError(f"chi does not track F at late times for N={n}")
    ax.set_xlabel(r"$t$")
    ax.set_ylabel(r"$\chi$ (solid), $F$ (dashed)")
    ax.legend(fontsize=7)
    ax.set_title("fixed noise: XEB vs fidelity")
    return fig


def _fig6a(rows, overlay):
    chi = {}
    fid = {}
    for row in rows:
        if row["observable"] not in ("log2_chi", "log2_fidelity"):
            continue
        key = (float(row["N"]), float(row["lambda"]))
        d = chi if row["observable"] == "log2_chi" else fid
        d.setdefault(key, []).append((float(row["t"]), float(row["log2_value"])))
    if not chi:
        raise SchemaError("fig6a needs log2_chi rows")
    n_max = max(k[0] for k in chi)
    fig, ax = plt.subplots()
    lams = sorted({k[1] for k in chi if k[0] == n_max})
    for i, lam in enumerate(lams):
        pts = sorted(chi[(n_max, lam)])
        t = np.array([p[0] for p in pts])
        v = np.array([p[1] for p in pts])
        ax.semilogy(t[1:], 2.0 ** v[1:], "-", color=_color(i),
                    label=f"$\\lambda N$={lam * n_max:.2f}")
        fpts = sorted(fid[(n_max, lam)])
        fv = np.array([p[1] for p in fpts])
        ax.semilogy(t[1:], 2.0 ** fv[1:], "--", color=_color(i), lw=0.9)
    ax.set_xlabel(r"$t$")
    ax.set_ylabel(r"$\chi$ (solid), $F$ (dashed)")
    ax.legend(fontsize=6)
    ax.set_title(f"scaled noise, N={int(n_max)}")
    return fig


def _fig6b(rows, overlay):
    ratio = series(rows, "log2_f_over_chi", x_column="lambda")
    fig, ax = plt.subplots()
    curves = {}
    for i, (n, (lam, l2r)) in enumerate(ratio.items()):
        x = lam * n
        y = 2.0 ** l2r
        curves[n] = (x, y)
        ax.plot(x, y, "o-", ms=3, color=_color(i), label=f"N={int(n)}")
    ns = sorted(curves)
    crossings = []
    for a in range(len(ns)):
        for b in range(a + 1, len(ns)):
            xc = pairwise_crossing(*curves[ns[a]], *curves[ns[b]])
            if xc is not None:
                crossings.append(xc)
    if not crossings:
        raise CheckError("F/chi curves exhibit no size crossing")
    ax.axvline(float(np.mean(crossings)), color="k", lw=0.7, ls=":")
    ax.set_xlabel(r"$\lambda N$")
    ax.set_ylabel(r"$F/\chi$")
    ax.legend(fontsize=7)
    lam_star = overlay.get("lambda_star")
    nu = overlay.get("nu")
    if lam_star is not None and nu:
        ins = _inset(ax)
        for i, (n, (x, y)) in enumerate(curves.items()):
            ins.plot((x / n - lam_star) * n ** (1.0 / nu), y, "o", ms=1.5,
                     color=_color(i))
        ins.set_xlabel(r"$(\lambda-\lambda^*)N^{1/\nu}$", fontsize=6)
        ins.tick_params(labelsize=5)
    ax.set_title("noise-induced transition")
    return fig


def _fig4b(rows, overlay):
    data = series(rows, "log2_f_re")
    fig, ax = plt.subplots()
    for i, (n, (t, l2f)) in enumerate(data.items()):
        keep = (t >= 0) & np.isfinite(l2f)
        ax.semilogy(t[keep], 2.0 ** l2f[keep], "o-", ms=2.5, color=_color(i),
                    label=f"N={int(n)}")
        late = l2f[keep][-3:]
        if not np.all(np.diff(2.0 ** l2f[keep][:5]) < 0):
            raise CheckError(f"mutual purity does not decay initially for N={n}")
        if np.ptp(late) > 0.5:
            raise CheckError(f"mutual purity has not saturated for N={n}")
    ax.set_xlabel(r"$t$")
    ax.set_ylabel(r"$\mathcal{F}_{RE}$")
    ax.legend(fontsize=7)
    ax.set_title("mutual purity vs depth")
    return fig


def _haar_reference(rows):
    haar = {}
    for row in rows:
        if row["observable"] == "log2_f_haar":
            haar[float(row["N"])] = float(row["log2_value"])
    if not haar:
        raise SchemaError("needs log2_f_haar reference rows")
    return haar


def _fig4c(rows, overlay):
    data = series(rows, "log2_f_re")
    haar = _haar_reference(rows)
    fig, ax = plt.subplots()
    for i, (n, (t, l2f)) in enumerate(data.items()):
        keep = (t >= 0) & np.isfinite(l2f)
        y = 2.0 ** (l2f[keep] - haar[n])
        ax.semilogy(t[keep] / n, y, "o-", ms=2.5, color=_color(i),
                    label=f"N={int(n)}")
        if abs(y[-1] - 1.0) > 0.2:
            raise CheckError(f"F/F_Haar does not saturate near 1 for N={n}")
    ax.axhline(1.0, color="k", lw=0.7, ls=":")
    ax.set_xlabel(r"$t/N$")
    ax.set_ylabel(r"$\mathcal{F}/\mathcal{F}_{\rm Haar}$")
    tau = overlay.get("tau_star")
    if tau is not None:
        ins = _inset(ax)
        for i, (n, (t, l2f)) in enumerate(data.items()):
            keep = (t >= 0) & np.isfinite(l2f)
            ins.semilogy(t[keep] - tau * n, 2.0 ** (l2f[keep] - haar[n]), "o",
                         ms=1.5, color=_color(i))
        ins.set_xlabel(r"$t-\tau^*N$", fontsize=6)
        ins.tick_params(labelsize=5)
    ax.legend(fontsize=7)
    ax.set_title("2-design transition")
    return fig


def _fig4d(rows, overlay):
    by_n: dict[float, list[tuple[float, float]]] = {}
    for row in rows:
        if not row["observable"].startswith("log2_bound_p"):
            continue
        p = float(row["observable"].removeprefix("log2_bound_p"))
        by_n.setdefault(float(row["N"]), []).append((p, float(row["log2_value"])))
    if not by_n:
        raise SchemaError("fig4d needs log2_bound_p* rows")
    fig, ax = plt.subplots()
    stars = []
    for i, (n, pts) in enumerate(sorted(by_n.items())):
        pts.sort()
        p = np.array([q[0] for q in pts])
        b = np.array([q[1] for q in pts])
        ax.plot(p, b, "o-", ms=3, color=_color(i), label=f"N={int(n)}")
        if not np.all(np.diff(b) > -1e-9):
            raise CheckError(f"bound not monotone in p for N={n}")
        cross = pairwise_crossing(p, b, p, np.zeros_like(b))
        if cross is None:
            raise CheckError(f"bound never crosses O(1) for N={n}")
        stars.append(cross)
    p_star = float(np.mean(stars))
    if not 0.05 <= p_star <= 0.3:
        raise CheckError(f"threshold {p_star:.3f} far from the documented region")
    ax.axhline(0.0, color="k", lw=0.7, ls=":")
    ax.axvline(p_star, color="k", lw=0.7, ls=":")
    ax.set_xlabel(r"$p$")
    ax.set_ylabel(r"$\log_2$ recovery bound")
    ax.legend(fontsize=7)
    ax.set_title(f"threshold p* = {p_star:.3f}")
    return fig


def _figS_random(rows, overlay):
    data = {}
    for row in rows:
        if row["observable"] != "log2_f_re" or float(row["t"]) < 0:
            continue
        key = (float(row["N"]), float(row["t"]))
        v = float(row["log2_value"])
        if np.isfinite(v):
            data.setdefault(key, []).append(v)
    if not data:
        raise SchemaError("figS-random needs log2_f_re rows")
    fig, ax = plt.subplots()
    ns = sorted({k[0] for k in data})
    for i, n in enumerate(ns):
        ts = sorted(k[1] for k in data if k[0] == n)
        mean = [np.mean(data[(n, t)]) for t in ts]
        ax.semilogy(ts, [2.0 ** m for m in mean], "o-", ms=2.5, color=_color(i),
                    label=f"N={int(n)}")
    ax.set_xlabel(r"$t$")
    ax.set_ylabel(r"$\overline{\mathcal{F}_{RE}}$")
    ax.legend(fontsize=7)
    ax.set_title("random noise placement")
    return fig


def _figS_lightcone(rows, overlay):
    data = series(rows, "log2_f_re")
    haar = _haar_reference(rows)
    tau = overlay.get("tau_star")
    if tau is None:
        raise SchemaError("figS-lightcone needs tau_star in the overlay summary")
    fig, ax = plt.subplots()
    for i, (n, (t, l2f)) in enumerate(data.items()):
        keep = (t >= 0) & np.isfinite(l2f)
        x = (t[keep] - tau * n) / np.sqrt(n)
        ax.semilogy(x, 2.0 ** (l2f[keep] - haar[n]), "o", ms=2.5,
                    color=_color(i), label=f"N={int(n)}")
    ax.set_xlabel(r"$(t-\tau^*N)/\sqrt{N}$")
    ax.set_ylabel(r"$\mathcal{F}/\mathcal{F}_{\rm Haar}$")
    ax.legend(fontsize=7)
    ax.set_title("light-cone collapse")
    return fig


_BUILDERS = {
    "fig2a": _fig2a,
    "fig2b": _fig2b,
    "fig3": _fig3,
    "fig5": _fig5,
    "fig6a": _fig6a,
    "fig6b": _fig6b,
    "fig4b": _fig4b,
    "fig4c": _fig4c,
    "fig4d": _fig4d,
    "figS-random": _figS_random,
    "figS-lightcone": _figS_lightcone,
}


def render(spec: FigureSpec) -> list[str]:
    """Render one figure; returns the written file paths.

    Raises SchemaError before any file is produced if the CSV is empty or
    lacks required columns/observables, and CheckError if the plotted series
    violate the documented crossings or monotonicity."""
    rows = load_rows(spec.csv_paths)
    overlay = load_overlay(spec.overlay)
    builder = _BUILDERS[spec.figure]
    with plt.rc_context(STYLE):
        fig = builder(rows, overlay)
        return _save(fig, spec)
