"""Blahut-Arimoto rate-distortion curves for discretized m-blocks.

A source is replaced by an exactly discretized block ``X^m`` on a 1-D grid
(cell midpoints plus the source's atoms).  The per-symbol squared error

    d_m(x, y) = (1/m) * sum_t (x_t - y_t)**2

is separable across coordinates, so the BA kernel ``exp(beta * d_m)`` factors
into a product of ``G x G`` matrices and every BA sweep is a sequence of mode
products instead of a dense ``G**m x G**m`` matrix product.

The solver is the slope-parameterized BA iteration, accelerated with a
safeguarded squared extrapolation step (SQUAREM) on the log reproduction
weights.  An extrapolated point is only accepted when it does not raise the
free energy, so the free energy stays nonincreasing.
"""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .process_models import ProcessSpec, require_valid

LN2 = math.log(2.0)
MAX_STATES = 2**20
# log-weight floor relative to the max; keeps Z > 0 without underflow
LOG_FLOOR = 600.0


class IntractableBlockError(ValueError):
    """Requested (N, m) discretization exceeds the state budget."""


@dataclass
class DiscretizedBlock:
    m: int
    grid: np.ndarray
    pmf: np.ndarray  # shape (G,) * m
    cell_width: float = 0.0
    atoms: tuple = ()

    @property
    def marginal(self) -> np.ndarray:
        axes = tuple(range(1, self.m))
        return self.pmf.sum(axis=axes) if axes else self.pmf

    @property
    def variance(self) -> float:
        w = self.marginal
        mean = float(w @ self.grid)
        return float(w @ (self.grid - mean) ** 2)

    def entropy_bits(self) -> float:
        """Block entropy H(X^m) in bits (not normalized by m)."""
        w = self.pmf[self.pmf > 0]
        return float(-np.sum(w * np.log2(w)))

    def sparse(self) -> list[tuple[tuple[int, ...], float]]:
        idx = np.argwhere(self.pmf > 0)
        return [(tuple(int(i) for i in row), float(self.pmf[tuple(row)])) for row in idx]


def _continuous_cells(cont, N: int):
    edges = np.linspace(cont.support_low, cont.support_high, N + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    masses = np.diff(cont.cdf(edges))
    return mids, masses / masses.sum(), edges[1] - edges[0]


def _merge_points(points: list[tuple[float, float]]):
    pts = sorted(points)
    grid, mass = [], []
    for x, w in pts:
        if grid and x == grid[-1]:
            mass[-1] += w
        else:
            grid.append(x)
            mass.append(w)
    return np.array(grid), np.array(mass)


def discretize_source(spec: ProcessSpec, m: int, N: int, max_states: int = MAX_STATES) -> DiscretizedBlock:
    """Exact block pmf of the grid-quantized source.

    Continuous mass falls on N equal cells (represented by their midpoints);
    atoms keep their exact location and mass.
    """
    require_valid(spec)
    if m not in (1, 2, 3):
        raise IntractableBlockError("block length m must be 1, 2 or 3")
    if not 1 <= N <= 1024:
        raise IntractableBlockError("grid size N must be in [1, 1024]")

    cell = 0.0
    if spec.kind == "iid_discrete":
        grid, marg = _merge_points([(v, w) for v, w in spec.discrete_pmf if w > 0])
    else:
        mids, masses, cell = _continuous_cells(spec.continuous, N)
        if spec.kind == "iid_mixture":
            pts = [(x, spec.p * w) for x, w in zip(mids, masses)]
            if spec.p < 1:
                pts.append((spec.atom, 1.0 - spec.p))
            grid, marg = _merge_points([(x, w) for x, w in pts if w > 0])
        else:
            grid, marg = mids, masses

    G = len(grid)
    if G**m > max_states:
        raise IntractableBlockError(f"{G}**{m} states exceed the budget of {max_states}")

    jump = spec.p if spec.kind == "piecewise_constant_markov" else 1.0
    pmf = _copy_or_redraw_pmf(marg, jump, m)
    return DiscretizedBlock(m=m, grid=grid, pmf=pmf, cell_width=cell, atoms=tuple(spec.atoms()))


def _copy_or_redraw_pmf(marg: np.ndarray, jump: float, m: int) -> np.ndarray:
    pmf = marg.copy()
    diag = np.arange(len(marg))
    for _ in range(1, m):
        # redraw from the marginal w.p. jump, else repeat the last coordinate
        nxt = pmf[..., None] * (jump * marg)
        if jump < 1.0:
            nxt[..., diag, diag] += (1.0 - jump) * pmf
        pmf = nxt
    return pmf / pmf.sum()


def markov_block(grid, marginal, p: float, m: int) -> DiscretizedBlock:
    """Block pmf of a stationary copy-or-redraw chain on a finite alphabet."""
    grid = np.asarray(grid, dtype=float)
    marginal = np.asarray(marginal, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p out of [0,1]")
    if len(grid) ** m > MAX_STATES:
        raise IntractableBlockError("block too large")
    return DiscretizedBlock(m=m, grid=grid, pmf=_copy_or_redraw_pmf(marginal / marginal.sum(), p, m))


@dataclass
class DistortionTable:
    """Squared-error distortion between grid tuples, or an explicit matrix.

    For grid blocks only the per-coordinate factor ``(g_i - g_j)**2`` is
    stored; ``matrix`` holds an arbitrary source x reproduction table.
    """

    m: int
    factor: np.ndarray | None = None
    matrix: np.ndarray | None = None

    @classmethod
    def from_matrix(cls, matrix) -> "DistortionTable":
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or np.any(matrix < 0):
            raise ValueError("distortion matrix must be 2-D and nonnegative")
        return cls(m=1, matrix=matrix)

    def __call__(self, i, j) -> float:
        if self.matrix is not None:
            return float(self.matrix[i, j])
        i, j = np.atleast_1d(i), np.atleast_1d(j)
        return float(np.mean(self.factor[i, j]))

    def dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        G = self.factor.shape[0]
        if G ** (2 * self.m) > 2**26:
            raise IntractableBlockError("dense distortion table too large")
        out = np.zeros((G,) * (2 * self.m))
        for t in range(self.m):
            shape = [1] * (2 * self.m)
            shape[t], shape[self.m + t] = G, G
            out = out + self.factor.reshape(shape)
        return (out / self.m).reshape(G**self.m, G**self.m)


def build_distortion(block: DiscretizedBlock) -> DistortionTable:
    g = block.grid
    return DistortionTable(m=block.m, factor=(g[:, None] - g[None, :]) ** 2)


def _mode_apply(T: np.ndarray, mats) -> np.ndarray:
    """Contract axis t of T with mats[t]: out[..i..] = sum_j mats[t][i, j] T[..j..]."""
    if T.ndim == 1:
        return mats[0] @ T
    if T.ndim == 2:
        return mats[0] @ T @ mats[1].T
    for ax, M in enumerate(mats):
        T = np.moveaxis(np.tensordot(M, T, axes=([1], [ax])), 0, ax)
    return T


class _Kernel:
    """exp(beta * d) for beta = s * m * ln 2 and its distortion-weighted variant."""

    def __init__(self, table: DistortionTable, s: float):
        self.m = table.m
        if table.matrix is not None:
            self.dense = True
            self.K = np.exp(s * LN2 * table.matrix)
            self.KD = self.K * table.matrix
        else:
            self.dense = False
            # beta * d_m = s * ln2 * sum_t A[i_t, j_t]
            self.K = np.exp(s * LN2 * table.factor)
            self.KA = self.K * table.factor

    def forward(self, q):
        if self.dense:
            return self.K @ q
        return _mode_apply(q, [self.K] * self.m)

    def backward(self, r):
        if self.dense:
            return self.K.T @ r
        return _mode_apply(r, [self.K.T] * self.m)

    def weighted(self, q):
        """sum_j q_j K_ij d_ij."""
        if self.dense:
            return self.KD @ q
        total = 0.0
        for t in range(self.m):
            mats = [self.KA if a == t else self.K for a in range(self.m)]
            total = total + _mode_apply(q, mats)
        return total / self.m


@dataclass
class BAResult:
    D: float
    R: float
    iterations: int
    gap: float
    converged: bool
    log_q: np.ndarray = field(repr=False, default=None)
    free_energy: list = field(repr=False, default_factory=list)
    monotone_violations: int = 0


def _normalize_log(lq):
    lq = lq - lq.max()
    lq = np.maximum(lq, -LOG_FLOOR)
    q = np.exp(lq)
    return q / q.sum()


def blahut_arimoto(block, table: DistortionTable, s: float, tol: float = 1e-3,
                   max_iter: int = 20000, init=None, accelerate: bool = True,
                   trace: bool = False) -> BAResult:
    """Solve one slope point of the rate-distortion curve.

    ``block`` is a DiscretizedBlock or a raw source pmf (with a matrix table).
    ``s < 0`` is the curve slope in bits per unit distortion.  Iteration stops
    once the Blahut duality gap (bits/symbol) drops below ``tol``;
    ``iterations`` counts BA map evaluations.  Returns per-symbol distortion
    and the mutual information of the final test channel in bits/symbol.
    """
    if not s < 0:
        raise ValueError("slope parameter s must be negative")
    if tol <= 0:
        raise ValueError("tol must be positive")
    P = np.asarray(getattr(block, "pmf", block), dtype=float)
    m = table.m
    ker = _Kernel(table, s)
    mask = P > 0
    Pm = P[mask]
    if table.matrix is not None:
        ny = table.matrix.shape[1]
        if P.ndim != 1 or table.matrix.shape[0] != P.size:
            raise ValueError("pmf and distortion matrix shapes disagree")
        shape = (ny,)
    else:
        shape = P.shape

    if init is None:
        lq = np.full(shape, -math.log(math.prod(shape)))
    else:
        lq = np.log(_normalize_log(np.asarray(init, dtype=float)))

    def bamap(lq):
        q = _normalize_log(lq)
        Z = ker.forward(q)
        Zm = Z[mask]
        r = np.zeros_like(P)
        r[mask] = Pm / Zm
        c = ker.backward(r)
        F = -float(Pm @ np.log(Zm))
        nxt = np.log(q) + np.log(np.maximum(c, 1e-300))
        return nxt, F, q, c

    fe: list[float] = []
    violations = 0

    def record(F):
        nonlocal violations
        if fe and F > fe[-1] + 1e-12 * max(1.0, abs(fe[-1])):
            violations += 1
        fe.append(F)

    evals = 0
    while True:
        l1, F0, q, c = bamap(lq)
        evals += 1
        record(F0)
        lc = np.log(np.maximum(c, 1e-300))
        gap = float(lc.max() - np.sum(q * c * lc)) / (m * LN2)
        if gap < tol or evals >= max_iter:
            break
        if not accelerate:
            lq = l1
            continue
        l2, F1, _, _ = bamap(l1)
        evals += 1
        record(F1)
        r = l1 - lq
        v = l2 - 2.0 * l1 + lq
        vv = float(np.sum(v * v))
        alpha = -math.sqrt(float(np.sum(r * r)) / vv) if vv > 0 else -1.0
        alpha = min(alpha, -1.0)
        lx = lq - 2.0 * alpha * r + alpha * alpha * v
        lx = np.maximum(lx, lx.max() - LOG_FLOOR)
        l3, Fx, _, _ = bamap(lx)
        evals += 1
        if Fx <= F1:
            lq = l3
        else:
            lq = l2

    q = _normalize_log(lq)
    Z = ker.forward(q)
    W = ker.weighted(q)
    Zm = Z[mask]
    D = float(Pm @ (W[mask] / Zm))
    r = np.zeros_like(P)
    r[mask] = Pm / Zm
    c = ker.backward(r)
    qc = q * c
    lc = np.log(np.maximum(c, 1e-300))
    beta = s * m * LN2
    # exact I(X; Y) of the test channel q_j K_ij / Z_i
    info = beta * D - float(Pm @ np.log(Zm)) - float(np.sum(qc * lc))
    R = max(info, 0.0) / (m * LN2)
    return BAResult(D=D, R=R, iterations=evals, gap=gap, converged=gap < tol,
                    log_q=np.log(q), free_energy=fe if trace else [],
                    monotone_violations=violations)


@dataclass
class RDPoint:
    s: float
    D: float
    R: float
    iterations: int
    gap: float
    converged: bool = True


@dataclass
class RDCurve:
    points: list
    m: int
    N: int
    source_entropy: float  # bits per symbol
    cell_width: float = 0.0
    variance: float = float("nan")
    label: str = ""

    def __post_init__(self):
        self.points = sorted(self.points, key=lambda p: (p.D, -p.R))

    @property
    def D(self) -> np.ndarray:
        return np.array([p.D for p in self.points])

    @property
    def R(self) -> np.ndarray:
        return np.array([p.R for p in self.points])

    @property
    def gaps(self) -> np.ndarray:
        return np.array([p.gap for p in self.points])

    @property
    def all_converged(self) -> bool:
        return all(p.converged for p in self.points)

    def positive(self) -> "RDCurve":
        """Copy restricted to points with D > 0 (needed for log coordinates)."""
        return RDCurve([p for p in self.points if p.D > 0], self.m, self.N,
                       self.source_entropy, self.cell_width, self.variance, self.label)

    def D_range(self) -> tuple[float, float]:
        D = self.positive().D
        return float(D.min()), float(D.max())

    def rate_at(self, D: float) -> float:
        """Linear interpolation of R against log D between solved points."""
        pos = self.positive()
        Ds = pos.D
        if not Ds.min() <= D <= Ds.max():
            raise ValueError(f"D={D:g} outside solved range [{Ds.min():g}, {Ds.max():g}]")
        logD, idx = np.unique(np.log(Ds), return_index=True)
        return float(np.interp(math.log(D), logD, pos.R[idx]))

    def validate(self, conv_tol: float = 1e-6) -> list[str]:
        """Monotonicity and convexity problems, allowing for solver gaps."""
        issues = []
        pts = self.points
        for a, b in zip(pts, pts[1:]):
            if b.R > a.R + a.gap + b.gap + 1e-9:
                issues.append(f"R increases between D={a.D:.4g} and D={b.D:.4g}")
        for a, b, c in zip(pts, pts[1:], pts[2:]):
            if c.D <= a.D:
                continue
            w = (b.D - a.D) / (c.D - a.D)
            chord = (1 - w) * a.R + w * c.R
            if b.R > chord + conv_tol + b.gap:
                issues.append(f"convexity violated at D={b.D:.4g}")
        if any(p.R < 0 for p in pts):
            issues.append("negative rate")
        for p in pts:
            if p.R > self.source_entropy + p.gap + 1e-9:
                issues.append(f"rate above source entropy at D={p.D:.4g}")
        return issues

    def csv_rows(self) -> list[dict]:
        return [{"s": p.s, "D": p.D, "R_bits": p.R, "iterations": p.iterations,
                 "gap": p.gap, "m": self.m, "N": self.N} for p in self.points]

    def to_csv(self, fh=None) -> str | None:
        out = io.StringIO() if fh is None else fh
        cols = ["s", "D", "R_bits", "iterations", "gap", "m", "N"]
        w = csv.DictWriter(out, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in self.csv_rows():
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return out.getvalue() if fh is None else None


def log_s_grid(start_exponent: float, stop_exponent: float, count: int) -> list[float]:
    """Slopes ``-10**e`` for e on a linear grid, steepest first."""
    exps = np.linspace(start_exponent, stop_exponent, int(count))
    s = -(10.0 ** exps)
    return sorted(s.tolist())


def _thread_budget() -> int:
    try:
        return max(1, int(os.environ.get("DIMLAB_THREADS", "1")))
    except ValueError:
        return 1


def rd_curve(spec: ProcessSpec | None, m: int, N: int, s_grid, tol: float = 1e-3,
             max_iter: int = 20000, warm_start: bool = False,
             block: DiscretizedBlock | None = None) -> RDCurve:
    """Trace R^(m)(D) by one BA solve per slope in ``s_grid``.

    Each slope is solved from a uniform start unless ``warm_start`` is set;
    cold starts are independent and may run on DIMLAB_THREADS threads.
    """
    s_list = [float(s) for s in s_grid]
    if any(s >= 0 for s in s_list):
        raise ValueError("all slopes must be negative")
    if any(abs(a) < abs(b) for a, b in zip(s_list, s_list[1:])):
        raise ValueError("s_grid must be sorted by decreasing |s|")
    if block is None:
        block = discretize_source(spec, m, N)
    table = build_distortion(block)

    def solve(s, init=None):
        return blahut_arimoto(block, table, s, tol=tol, max_iter=max_iter, init=init)

    results = []
    if warm_start:
        init = None
        for s in s_list:
            res = solve(s, init)
            # blend with uniform mass: points driven to the log floor
            # would otherwise take thousands of sweeps to revive
            q = np.exp(res.log_q)
            init = np.log(0.5 * q + 0.5 / q.size)
            results.append(res)
    else:
        workers = _thread_budget()
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(solve, s_list))
        else:
            results = [solve(s) for s in s_list]

    points = [RDPoint(s, r.D, r.R, r.iterations, r.gap, r.converged)
              for s, r in zip(s_list, results)]
    return RDCurve(points=points, m=block.m, N=N,
                   source_entropy=block.entropy_bits() / block.m,
                   cell_width=block.cell_width, variance=block.variance,
                   label=spec.kind if spec is not None else "")
