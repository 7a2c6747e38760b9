"""Closed-form reference curves and the piecewise-constant sandwich bounds.

Rates are in bits per symbol, distortions in squared value units.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI_E = 2.0 * math.pi * math.e


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if p in (0.0, 1.0):
        return 0.0
    return -(p * math.log2(p) + (1.0 - p) * math.log2(1.0 - p))


def gaussian_rd(variance: float, D: float) -> float:
    if D <= 0:
        raise ValueError("distortion must be positive")
    return max(0.0, 0.5 * math.log2(variance / D))


def binary_hamming_rd(D: float, p: float = 0.5) -> float:
    """R(D) = H(p) - H(D) for a Bern(p) source under Hamming distortion."""
    if D < 0:
        raise ValueError("distortion must be nonnegative")
    if D >= min(p, 1.0 - p):
        return 0.0
    return binary_entropy(p) - binary_entropy(D)


def uniform_slb(D: float, width: float = 1.0) -> float:
    """Shannon lower bound for a uniform source of the given width.

    ``h(U) - 0.5 log2(2 pi e D)`` with ``h(U) = log2(width)``; zero outside
    ``0 < D < width**2 / (2 pi e)``.
    """
    if not 0.0 < D < width * width / TWO_PI_E:
        return 0.0
    return 0.5 * math.log2(width * width / (TWO_PI_E * D))


@dataclass
class OracleCurve:
    """Named closed-form R(D) curve, evaluable on ``[D_low, D_high]``."""

    kind: str
    params: dict = field(default_factory=dict)
    D_low: float = 0.0
    D_high: float = math.inf

    def __call__(self, D: float) -> float:
        if not self.D_low < D <= self.D_high:
            raise ValueError(f"D={D:g} outside validity range ({self.D_low:g}, {self.D_high:g}]")
        kind, prm = self.kind, self.params
        if kind == "gaussian_rd":
            return gaussian_rd(prm["variance"], D)
        if kind == "binary_hamming_rd":
            return binary_hamming_rd(D, prm.get("p", 0.5))
        if kind == "uniform_slb":
            return uniform_slb(D, prm.get("width", 1.0))
        if kind in ("mixture_lower", "mixture_upper"):
            lower, upper = mixture_bounds(prm["p"], prm["base"], D)
            return lower if kind == "mixture_lower" else upper
        raise ValueError(f"unknown oracle kind {kind!r}")

    def evaluate(self, D) -> np.ndarray:
        return np.array([self(float(d)) for d in np.atleast_1d(D)])

    def rate_at(self, D: float) -> float:
        return self(D)

    def csv_rows(self, D_values) -> list[dict]:
        """Rows in the RDCurve CSV schema with solver columns zeroed."""
        return [{"s": 0.0, "D": float(d), "R_bits": self(float(d)), "iterations": 0,
                 "gap": 0.0, "m": 1, "N": 0} for d in D_values]


def gaussian_curve(variance: float) -> OracleCurve:
    return OracleCurve("gaussian_rd", {"variance": variance}, 0.0, variance)


def uniform_slb_curve(width: float = 1.0) -> OracleCurve:
    return OracleCurve("uniform_slb", {"width": width}, 0.0, width * width / TWO_PI_E)


def mixture_curves(p: float, base) -> tuple[OracleCurve, OracleCurve]:
    """Lower/upper sandwich curves ``p R_fc`` and ``H(p) + p R_fc``."""
    lo = getattr(base, "D_low", None)
    hi = getattr(base, "D_high", None)
    if lo is None:
        lo, hi = base.D_range()
        lo = np.nextafter(lo, -np.inf)
    prm = {"p": p, "base": base}
    return (OracleCurve("mixture_lower", prm, lo, hi), OracleCurve("mixture_upper", prm, lo, hi))


def mixture_bounds(p: float, R_fc, D: float) -> tuple[float, float]:
    """Bounds ``(p R_fc(D), H(p) + p R_fc(D))`` on the piecewise-constant source rate.

    ``R_fc`` is anything with ``rate_at(D)`` (an OracleCurve or RDCurve) or a
    plain callable; out-of-range D raises ValueError.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    rate = R_fc.rate_at(D) if hasattr(R_fc, "rate_at") else R_fc(D)
    lower = p * rate
    return lower, binary_entropy(p) + lower


def mixture_bbit_entropy(p: float, b: int) -> float:
    """Exact H([X]_b) for ``(1-p) delta_0 + p Unif(0,1)``.

    Code 0 holds the atom plus one uniform cell; the remaining ``2**b - 1``
    cells hold ``p 2**-b`` each.
    """
    cell = p * 2.0 ** -b
    first = (1.0 - p) + cell
    h = -first * math.log2(first) if first > 0 else 0.0
    if cell > 0:
        h -= (2**b - 1) * cell * math.log2(cell)
    return h
