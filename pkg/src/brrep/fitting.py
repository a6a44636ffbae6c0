"""Crossing detection and finite-size data-collapse fitting.

Collapse objective: transform each curve's x axis by the ansatz, resample
every curve onto a common grid in the overlapping range, and score the
mean-squared spread of each curve against the pooled interpolant of the
others.  Optimized by coordinate descent with golden-section line search
and multiple starts (objectives here are 1-2 dimensional).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .observables import DiagnosticsFit

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0

ANSATZE = ("shift_log", "shift_linear", "field_first_order", "sqrt_width")


@dataclass
class Curve:
    """One finite-size trace: y(x) at size N."""

    n: float
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        keep = np.isfinite(self.x) & np.isfinite(self.y)
        self.x = self.x[keep]
        self.y = self.y[keep]
        order = np.argsort(self.x)
        self.x = self.x[order]
        self.y = self.y[order]


@dataclass
class CrossingResult:
    x_star: float | None
    uncertainty: float | None
    pair_crossings: list[tuple[float, float, float]]  # (n1, n2, x)

    @property
    def found(self) -> bool:
        return self.x_star is not None


def _pair_crossings(c1: Curve, c2: Curve, atol: float = 1e-12) -> list[float]:
    lo = max(c1.x.min(), c2.x.min())
    hi = min(c1.x.max(), c2.x.max())
    if hi <= lo:
        raise ValueError(f"curves N={c1.n} and N={c2.n} have no overlapping x range")
    grid = np.linspace(lo, hi, 512)
    d = np.interp(grid, c1.x, c1.y) - np.interp(grid, c2.x, c2.y)
    if np.all(np.abs(d) < atol):
        return []  # identical curves: no crossing, not a number
    roots = []
    for i in range(len(grid) - 1):
        a, b = d[i], d[i + 1]
        if a == 0.0 and not roots:
            roots.append(grid[i])
        elif a * b < 0:
            roots.append(grid[i] - a * (grid[i + 1] - grid[i]) / (b - a))
    return roots


def find_crossing(curves: list[Curve]) -> CrossingResult:
    """Mean and spread of pairwise intersections of linearly interpolated curves."""
    if len(curves) < 2:
        raise ValueError("need at least two sizes to find a crossing")
    pairs = []
    for i in range(len(curves)):
        for j in range(i + 1, len(curves)):
            roots = _pair_crossings(curves[i], curves[j])
            if len(roots) == 1:
                pairs.append((curves[i].n, curves[j].n, roots[0]))
            elif len(roots) > 1:
                # keep the crossing nearest the median of all candidates
                med = float(np.median(roots))
                pairs.append((curves[i].n, curves[j].n,
                              min(roots, key=lambda r: abs(r - med))))
    if not pairs:
        return CrossingResult(None, None, [])
    xs = np.array([p[2] for p in pairs])
    return CrossingResult(float(np.mean(xs)),
                          float(np.std(xs)) if len(xs) > 1 else 0.0,
                          pairs)


# ---------------------------------------------------------------------------
# collapse machinery

def _transform(curves: list[Curve], ansatz: str, params: dict) -> list[Curve]:
    out = []
    for c in curves:
        if ansatz == "shift_log":
            x = c.x - params["tau_star"] * np.log(c.n)
        elif ansatz == "shift_linear":
            x = c.x - params["tau_star"] * c.n
        elif ansatz == "sqrt_width":
            x = (c.x - params["tau_star"] * c.n) / np.sqrt(c.n)
        elif ansatz == "field_first_order":
            x = (c.x - params["lambda_star"]) * c.n ** (1.0 / params["nu"])
        else:
            raise ValueError(f"unknown ansatz {ansatz!r}")
        out.append(Curve(c.n, x, c.y))
    return out


def pooled_spread(curves: list[Curve], n_grid: int = 200) -> float:
    """Mean-squared distance of each curve from the pooled interpolant of the others."""
    lo = max(c.x.min() for c in curves)
    hi = min(c.x.max() for c in curves)
    if hi <= lo:
        return np.inf
    grid = np.linspace(lo, hi, n_grid)
    ys = np.array([np.interp(grid, c.x, c.y) for c in curves])
    total = 0.0
    m = len(curves)
    for i in range(m):
        others = np.mean(np.delete(ys, i, axis=0), axis=0)
        total += float(np.mean((ys[i] - others) ** 2))
    return total / m


def golden_section(f, lo: float, hi: float, tol: float = 1e-5, max_iter: int = 120) -> float:
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _coordinate_descent(objective, bounds: dict, n_starts: int = 8, sweeps: int = 12,
                        seed: int = 0):
    """Multi-start coordinate descent with golden-section line searches."""
    rng = np.random.default_rng(seed)
    names = list(bounds)
    best = None
    for start in range(n_starts):
        params = {k: bounds[k][0] + (bounds[k][1] - bounds[k][0]) *
                  ((start + 0.5) / n_starts if start < n_starts // 2 else rng.random())
                  for k in names}
        val = objective(params)
        for _ in range(sweeps):
            improved = False
            for k in names:
                lo, hi = bounds[k]
                span = hi - lo
                w = max(span / 8.0, 1e-4 * span)
                a = max(lo, params[k] - w)
                b = min(hi, params[k] + w)

                def line(v, k=k):
                    trial = dict(params)
                    trial[k] = v
                    return objective(trial)

                cand = golden_section(line, a, b, tol=1e-5 * span)
                cval = line(cand)
                if cval < val - 1e-14:
                    params[k] = cand
                    val = cval
                    improved = True
            if not improved:
                break
        if best is None or val < best[1]:
            best = (dict(params), val)
    return best


def _exp_form_fit(curves: list[Curve], tau_star: float, log_base_n: bool = True):
    """(c1, c2) of y = log(c1) - c2 * (x - tau* log N), pooled linear fit."""
    xs, ys = [], []
    for c in curves:
        shift = tau_star * (np.log(c.n) if log_base_n else c.n)
        xs.append(c.x - shift)
        ys.append(c.y)
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    slope, intercept = np.polyfit(x, y, 1)
    return float(np.exp(intercept)), float(-slope)


def collapse_fit(curves: list[Curve], ansatz: str, bounds: dict | None = None,
                 nu_fixed: float | None = None, seed: int = 0) -> DiagnosticsFit:
    """Fit collapse parameters by minimizing inter-curve spread.

    shift_log:          x -> x - tau* ln N        (also refits c1, c2)
    shift_linear:       x -> x - tau* N
    sqrt_width:         x -> (x - tau* N)/sqrt(N)
    field_first_order:  x -> (x - lambda*) N^{1/nu}   (nu fitted unless fixed)
    """
    if ansatz not in ANSATZE:
        raise ValueError(f"ansatz must be one of {ANSATZE}")
    if len(curves) < 3:
        raise ValueError("collapse fit needs at least 3 sizes")
    uncollapsed = pooled_spread(curves)

    if bounds is None:
        if ansatz == "shift_log":
            bounds = {"tau_star": (0.2, 4.0)}
        elif ansatz in ("shift_linear", "sqrt_width"):
            bounds = {"tau_star": (0.1, 2.0)}
        else:
            xlo = min(c.x.min() for c in curves)
            xhi = max(c.x.max() for c in curves)
            bounds = {"lambda_star": (xlo, xhi)}
            if nu_fixed is None:
                bounds["nu"] = (0.25, 1.5)

    def objective(params):
        p = dict(params)
        if ansatz == "field_first_order" and nu_fixed is not None:
            p["nu"] = nu_fixed
        try:
            return pooled_spread(_transform(curves, ansatz, p))
        except (ValueError, FloatingPointError):
            return np.inf

    (params, residual) = _coordinate_descent(objective, bounds, seed=seed)
    converged = np.isfinite(residual)

    # leave-one-curve-out spread of the headline parameter
    head = "lambda_star" if ansatz == "field_first_order" else "tau_star"
    jack = []
    if len(curves) > 3:
        for i in range(len(curves)):
            sub = curves[:i] + curves[i + 1:]

            def obj_sub(p, sub=sub):
                q = dict(p)
                if ansatz == "field_first_order" and nu_fixed is not None:
                    q["nu"] = nu_fixed
                try:
                    return pooled_spread(_transform(sub, ansatz, q))
                except (ValueError, FloatingPointError):
                    return np.inf

            jp, _ = _coordinate_descent(obj_sub, bounds, n_starts=4, seed=seed + 1 + i)
            jack.append(jp[head])
    uncertainty = float(np.std(jack)) if jack else None

    fit = DiagnosticsFit(residual=residual, uncollapsed_residual=uncollapsed,
                         uncertainty=uncertainty, converged=converged, ansatz=ansatz)
    if ansatz == "field_first_order":
        fit.lambda_star = params["lambda_star"]
        fit.nu = nu_fixed if nu_fixed is not None else params["nu"]
    else:
        fit.tau_star = params["tau_star"]
    if ansatz == "shift_log":
        c1, c2 = _exp_form_fit(curves, fit.tau_star)
        fit.c1, fit.c2 = c1, c2
        fit.delta = c2
    return fit


def threshold_crossing_time(t: np.ndarray, y: np.ndarray, level: float,
                            descending: bool = True) -> float | None:
    """First time y crosses the level, linearly interpolated."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    for i in range(len(t) - 1):
        a, b = y[i] - level, y[i + 1] - level
        if (a > 0 >= b) if descending else (a < 0 <= b):
            if a == b:
                return float(t[i])
            return float(t[i] - a * (t[i + 1] - t[i]) / (b - a))
    return None
