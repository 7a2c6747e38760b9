"""Information dimension estimates from conditional-entropy sweeps.

``d_k`` is read off as the least-squares slope of ``H([X_{k+1}]_b | [X^k]_b)``
against ``b``; the affine offset (e.g. the binary-entropy term of a mixture)
drops out of the slope.  ``d_o`` is reported as ``d_{k_max}``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .entropy_lab import UndersamplingWarning, conditional_entropy
from .process_models import ProcessSpec, sample_path
from .quantizer import QuantScheme, quantize_path

METHODS = ("ratio_fit", "slope_fit", "rdd_fit")


@dataclass
class SweepRow:
    k: int
    b: int
    H_cond: float
    undersampled: bool = False


@dataclass
class IDSweep:
    rows: list
    spec: ProcessSpec | None
    n: int
    seed: int
    scheme: str = "bbit"
    estimator: str = "plugin"

    def ks(self) -> list[int]:
        return sorted({r.k for r in self.rows})

    def at(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        sel = sorted((r for r in self.rows if r.k == k), key=lambda r: r.b)
        return np.array([r.b for r in sel], dtype=float), np.array([r.H_cond for r in sel])

    def is_rectangular(self) -> bool:
        grids = {tuple(self.at(k)[0]) for k in self.ks()}
        return len(grids) == 1

    def to_dict(self) -> dict:
        return {"spec": None if self.spec is None else self.spec.to_dict(), "n": self.n,
                "seed": self.seed, "scheme": self.scheme, "estimator": self.estimator,
                "rows": [[r.k, r.b, r.H_cond, r.undersampled] for r in self.rows]}


@dataclass
class DimensionEstimate:
    value: float
    stderr: float
    method: str
    window: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "method": self.method,
                "window": self.window, "diagnostics": self.diagnostics}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def id_sweep(spec: ProcessSpec, k_max: int, b_grid, n: int, seed: int,
             scheme: str = "bbit", estimator: str = "plugin") -> IDSweep:
    """Conditional entropies on the (k, b) grid from one sampled path.

    Grid points whose block support exceeds total/10 are kept but flagged.
    """
    b_grid = sorted({int(b) for b in b_grid})
    if not b_grid:
        raise ValueError("b_grid must be nonempty")
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    path = sample_path(spec, n, seed)
    rows = []
    for b in b_grid:
        qpath = quantize_path(path, QuantScheme(scheme, b))
        for k in range(k_max + 1):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UndersamplingWarning)
                est = conditional_entropy(qpath, k, estimator)
            rows.append(SweepRow(k, b, max(est.value, 0.0), est.undersampled))
    rows.sort(key=lambda r: (r.k, r.b))
    return IDSweep(rows=rows, spec=spec, n=n, seed=seed, scheme=scheme, estimator=estimator)


def _resolution_axis(b: np.ndarray, scheme: str) -> np.ndarray:
    # blevel resolution b corresponds to log2(b) bits
    return b if scheme == "bbit" else np.log2(b)


def fit_dk(sweep: IDSweep, k: int) -> DimensionEstimate:
    b, H = sweep.at(k)
    if len(b) < 3:
        raise ValueError(f"need at least 3 resolutions for k={k}, got {len(b)}")
    x = _resolution_axis(b, sweep.scheme)
    if np.ptp(x) == 0:
        raise ValueError("degenerate resolution grid")
    fit = stats.linregress(x, H)
    resid = H - (fit.intercept + fit.slope * x)
    flagged = [int(r.b) for r in sweep.rows if r.k == k and r.undersampled]
    return DimensionEstimate(
        value=max(float(fit.slope), 0.0),
        stderr=float(fit.stderr),
        method="slope_fit",
        window={"k": k, "b": [int(v) for v in b]},
        diagnostics={"raw_slope": float(fit.slope), "intercept": float(fit.intercept),
                     "residual_max": float(np.max(np.abs(resid))),
                     "undersampled_b": flagged},
    )


def fit_do(sweep: IDSweep) -> DimensionEstimate:
    """Process ID as d_{k_max}; flags a sequence that rises beyond 2 stderr."""
    ests = [fit_dk(sweep, k) for k in sweep.ks()]
    monotone = True
    for a, c in zip(ests, ests[1:]):
        if c.value > a.value + 2.0 * math.hypot(a.stderr, c.stderr):
            monotone = False
    last = ests[-1]
    diag = dict(last.diagnostics)
    diag.update({"d_k": [e.value for e in ests], "d_k_stderr": [e.stderr for e in ests],
                 "monotone": monotone})
    return DimensionEstimate(value=last.value, stderr=last.stderr, method="slope_fit",
                             window={"k_max": sweep.ks()[-1], "b": last.window["b"]},
                             diagnostics=diag)
