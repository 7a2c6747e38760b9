"""Rate-distortion dimension as twice the slope of R against log2(1/D).

The fit window starts ``safety_factor`` cell widths squared above zero, where
the discretized curve still tracks the analog one, and grows toward larger D
while the local slope stays stable.

For block length m > 1 the default estimate uses the rate increment
``m R^(m)(D) - (m-1) R^(m-1)(D)``.  Its slope isolates the information added
by one more coordinate given the previous ones, which is the conditional
quantity the process dimension measures; the block average
``R^(m)`` alone mixes in the first coordinate's full dimension.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .id_estimator import DimensionEstimate
from .process_models import ProcessSpec
from .rd_solver import RDCurve, RDPoint, rd_curve

DEFAULT_SAFETY = 100.0
# window top as a fraction of the marginal variance (below the zero-rate knee)
KNEE_FRACTION = 0.1


class WindowError(ValueError):
    """No stable log-slope regime in the curve."""


@dataclass(frozen=True)
class FitWindow:
    D_min: float
    D_max: float
    rationale: str = "auto"
    excluded_points: int = 0

    def __post_init__(self):
        if not 0 < self.D_min < self.D_max:
            raise ValueError("window needs 0 < D_min < D_max")
        if self.rationale not in ("auto", "manual"):
            raise ValueError("rationale must be 'auto' or 'manual'")

    def contains(self, D) -> np.ndarray:
        D = np.asarray(D)
        return (D >= self.D_min) & (D <= self.D_max)


def _xy(curve) -> tuple[np.ndarray, np.ndarray]:
    pos = curve.positive() if hasattr(curve, "positive") else curve
    return np.asarray(pos.D, dtype=float), np.asarray(pos.R, dtype=float)


def select_window(curve: RDCurve, cell_width: float | None = None,
                  safety_factor: float = DEFAULT_SAFETY, slope_tol: float = 0.1,
                  min_points: int = 4) -> FitWindow:
    """Low-distortion window with a stable log-slope.

    D_min is ``safety_factor * cell_width**2`` (the smallest solved D for a
    purely discrete grid).  Points are added upward from D_min while each
    consecutive local slope differs from the previous one by less than
    ``slope_tol`` of the largest slope seen (plus a small absolute floor for
    flat curves), and never above ``KNEE_FRACTION`` of the curve's variance.
    """
    D, R = _xy(curve)
    if len(curve.points) < 6:
        raise WindowError("need at least 6 curve points to select a window")
    if cell_width is None:
        cell_width = getattr(curve, "cell_width", 0.0)
    D_floor = safety_factor * cell_width**2 if cell_width > 0 else float(D.min())
    ceiling = float(D.max())
    var = getattr(curve, "variance", float("nan"))
    if math.isfinite(var) and var > 0:
        ceiling = min(ceiling, KNEE_FRACTION * var)

    keep = (D >= D_floor) & (D <= ceiling)
    Dw, Rw = D[keep], R[keep]
    if len(Dw) < min_points:
        raise WindowError("no log-slope regime: too few points above the discretization floor")
    x = np.log2(1.0 / Dw)
    local = np.diff(Rw) / np.diff(x)
    # Dw increases so x decreases; the pairwise ratio is still dR/dx
    top = 1
    biggest = abs(local[0])
    for j in range(1, len(local)):
        biggest = max(biggest, abs(local[j]))
        if abs(local[j] - local[j - 1]) > slope_tol * biggest + 0.005:
            break
        top = j + 1
    n_used = top + 1
    if n_used < min_points:
        raise WindowError("no log-slope regime: local slope never stabilizes")
    excluded = int(len(D) - n_used)
    return FitWindow(float(Dw[0]), float(Dw[top]), "auto", excluded)


def fit_rdd(curve, window: FitWindow, min_points: int = 3) -> DimensionEstimate:
    """Twice the OLS slope of R (bits) against log2(1/D) inside the window."""
    D, R = _xy(curve)
    sel = window.contains(D)
    if sel.sum() < min_points:
        raise WindowError(f"only {int(sel.sum())} points in the fit window")
    x = np.log2(1.0 / D[sel])
    y = R[sel]
    if np.ptp(x) == 0:
        raise WindowError("fit window spans a single distortion")
    fit = stats.linregress(x, y)
    resid = y - (fit.intercept + fit.slope * x)
    stderr = float(fit.stderr) if np.isfinite(fit.stderr) else 0.0
    return DimensionEstimate(
        value=2.0 * float(fit.slope),
        stderr=2.0 * stderr,
        method="rdd_fit",
        window={"D_min": window.D_min, "D_max": window.D_max},
        diagnostics={"points_used": int(sel.sum()), "residual_max": float(np.max(np.abs(resid))),
                     "slope": float(fit.slope), "intercept": float(fit.intercept)},
    )


def increment_curve(curve_m: RDCurve, curve_prev: RDCurve) -> RDCurve:
    """Points ``m R^(m)(D) - (m-1) R^(m-1)(D)`` at the D values of ``curve_m``.

    ``R^(m-1)`` is interpolated linearly in log D; points outside its solved
    range are dropped.  Gaps add with the same weights.
    """
    m = curve_m.m
    if curve_prev.m != m - 1:
        raise ValueError("increment needs curves of block lengths m and m-1")
    lo, hi = curve_prev.D_range()
    pts = []
    for p in curve_m.positive().points:
        if not lo <= p.D <= hi:
            continue
        R = m * p.R - (m - 1) * curve_prev.rate_at(p.D)
        # neighbouring gap of the interpolated curve bounds its error
        j = int(np.argmin(np.abs(np.log(curve_prev.D) - math.log(p.D))))
        gap = m * p.gap + (m - 1) * curve_prev.points[j].gap
        pts.append(RDPoint(p.s, p.D, R, p.iterations, gap, p.converged))
    return RDCurve(pts, m, curve_m.N, curve_m.source_entropy, curve_m.cell_width,
                   curve_m.variance, label=f"increment_{m}")


def fit_report(est: DimensionEstimate, m: int, N: int) -> dict:
    return {"value": est.value, "stderr": est.stderr,
            "window": {"D_min": est.window["D_min"], "D_max": est.window["D_max"]},
            "points_used": est.diagnostics["points_used"],
            "residual_max": est.diagnostics["residual_max"], "m": m, "N": N}


def rdd_of_process(spec: ProcessSpec, m: int, N: int, s_grid, tol: float = 1e-3,
                   safety_factor: float = DEFAULT_SAFETY, form: str = "increment",
                   max_iter: int = 20000, curves: dict | None = None) -> DimensionEstimate:
    """RD curve(s) -> window -> slope fit, with m/N metadata attached.

    ``form="increment"`` (default) fits the rate increment between block
    lengths m-1 and m; ``form="block"`` fits R^(m) directly.  The two agree
    for m = 1.  Solved curves are stored in ``curves`` when a dict is given.
    """
    if form not in ("increment", "block"):
        raise ValueError("form must be 'increment' or 'block'")
    curve = rd_curve(spec, m, N, s_grid, tol=tol, max_iter=max_iter)
    store = {} if curves is None else curves
    store[m] = curve
    target = curve
    if form == "increment" and m > 1:
        # steeper slopes so R^(m-1) reaches the smallest D of R^(m)
        s_sorted = sorted(float(s) for s in s_grid)
        extra = [s_sorted[0] * 10.0 ** (0.25 * j) for j in (4, 3, 2, 1)]
        prev = rd_curve(spec, m - 1, N, extra + s_sorted, tol=tol, max_iter=max_iter)
        store[m - 1] = prev
        target = increment_curve(curve, prev)
    window = select_window(target, curve.cell_width, safety_factor)
    est = fit_rdd(target, window)
    est.window.update({"m": m, "N": N, "form": form})
    est.diagnostics.update({"converged": curve.all_converged,
                            "max_gap": float(curve.gaps.max()),
                            "curve_issues": curve.validate()})
    return est


def report_json(est: DimensionEstimate) -> str:
    return json.dumps(fit_report(est, est.window.get("m", 1), est.window.get("N", 0)),
                      sort_keys=True)
