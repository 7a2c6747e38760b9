"""Source models and reproducible sample paths.

Four source families are supported:

* ``iid_mixture``: i.i.d. draws from ``(1 - p) * delta_atom + p * f_c``
* ``iid_continuous``: i.i.d. draws from ``f_c``
* ``iid_discrete``: i.i.d. draws from a finite pmf
* ``piecewise_constant_markov``: ``X_1 ~ f_c``; afterwards each step redraws
  from ``f_c`` with probability ``p`` and otherwise repeats the previous value.

``f_c`` is a bounded-support density (uniform or truncated Gaussian).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.special import ndtr

KINDS = ("iid_mixture", "iid_continuous", "iid_discrete", "piecewise_constant_markov")
FAMILIES = ("uniform", "truncated_gaussian")


@dataclass(frozen=True)
class ContinuousSpec:
    """Bounded-support density on ``(support_low, support_high)``."""

    family: str = "uniform"
    support_low: float = 0.0
    support_high: float = 1.0
    params: dict = field(default_factory=dict)

    def problems(self) -> list[str]:
        errs = []
        if self.family not in FAMILIES:
            return [f"continuous.family: unknown family {self.family!r}"]
        lo, hi = self.support_low, self.support_high
        if not (math.isfinite(lo) and math.isfinite(hi)):
            errs.append("continuous.support: bounds must be finite")
        elif not lo < hi:
            errs.append(f"continuous.support: need support_low < support_high, got ({lo}, {hi})")
        if self.family == "truncated_gaussian":
            for key in ("mean", "std"):
                if key not in self.params:
                    errs.append(f"continuous.params: truncated_gaussian requires {key!r}")
            if not errs and not self.params["std"] > 0:
                errs.append("continuous.params: std must be positive")
        if errs:
            return errs
        total, _ = integrate.quad(self.pdf, lo, hi, limit=200, epsabs=1e-13, epsrel=1e-13)
        if abs(total - 1.0) > 1e-9:
            errs.append(f"continuous: density integrates to {total:.12g}, not 1")
        return errs

    def _std_bounds(self) -> tuple[float, float, float, float]:
        mu, sd = float(self.params["mean"]), float(self.params["std"])
        a = (self.support_low - mu) / sd
        b = (self.support_high - mu) / sd
        return mu, sd, a, b

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x > self.support_low) & (x < self.support_high)
        if self.family == "uniform":
            dens = np.full(x.shape, 1.0 / (self.support_high - self.support_low))
        else:
            mu, sd, a, b = self._std_bounds()
            z = (x - mu) / sd
            dens = np.exp(-0.5 * z * z) / (math.sqrt(2 * math.pi) * sd * (ndtr(b) - ndtr(a)))
        return np.where(inside, dens, 0.0)

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.support_low, self.support_high)
        if self.family == "uniform":
            return (x - self.support_low) / (self.support_high - self.support_low)
        mu, sd, a, b = self._std_bounds()
        za = ndtr(a)
        return (ndtr((x - mu) / sd) - za) / (ndtr(b) - za)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        lo, hi = self.support_low, self.support_high
        if self.family == "uniform":
            # inverse CDF of the uniform law; rejects the closed endpoint
            out = lo + (hi - lo) * rng.random(size)
            bad = out <= lo
            while bad.any():
                out[bad] = lo + (hi - lo) * rng.random(int(bad.sum()))
                bad = out <= lo
            return out
        mu, sd, _, _ = self._std_bounds()
        out = np.empty(size)
        filled = 0
        while filled < size:
            need = size - filled
            draw = rng.normal(mu, sd, size=max(2 * need, 64))
            draw = draw[(draw > lo) & (draw < hi)][:need]
            out[filled:filled + draw.size] = draw
            filled += draw.size
        return out

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "support_low": self.support_low,
            "support_high": self.support_high,
            "params": dict(self.params),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ContinuousSpec":
        return cls(
            family=d.get("family", "uniform"),
            support_low=float(d.get("support_low", 0.0)),
            support_high=float(d.get("support_high", 1.0)),
            params={k: float(v) for k, v in d.get("params", {}).items()},
        )


@dataclass(frozen=True)
class ProcessSpec:
    kind: str
    p: float = 1.0
    continuous: ContinuousSpec | None = None
    discrete_pmf: tuple = ()
    atom: float = 0.0

    def atoms(self) -> list[float]:
        """Locations carrying positive probability mass."""
        if self.kind == "iid_mixture":
            return [self.atom] if self.p < 1 else []
        if self.kind == "iid_discrete":
            return [float(v) for v, w in self.discrete_pmf if w > 0]
        return []

    def value_range(self) -> tuple[float, float]:
        pts = list(self.atoms())
        if self.continuous is not None and self.kind != "iid_discrete":
            pts += [self.continuous.support_low, self.continuous.support_high]
        return min(pts), max(pts)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "p": self.p,
            "continuous": None if self.continuous is None else self.continuous.to_dict(),
            "discrete_pmf": [[float(v), float(w)] for v, w in self.discrete_pmf],
            "atom": self.atom,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessSpec":
        cont = d.get("continuous")
        return cls(
            kind=d["kind"],
            p=float(d.get("p", 1.0)),
            continuous=None if cont is None else ContinuousSpec.from_dict(cont),
            discrete_pmf=tuple((float(v), float(w)) for v, w in d.get("discrete_pmf", [])),
            atom=float(d.get("atom", 0.0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "ProcessSpec":
        return cls.from_dict(json.loads(text))


@dataclass
class ValidationReport:
    errors: list[str]

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self) -> bool:
        return self.ok


class SpecError(ValueError):
    """Raised when an invalid ProcessSpec is used for computation."""


def validate_spec(spec: ProcessSpec) -> ValidationReport:
    errs: list[str] = []
    if spec.kind not in KINDS:
        return ValidationReport([f"kind: unknown kind {spec.kind!r}"])
    if not (0.0 <= spec.p <= 1.0):
        errs.append(f"p: p out of [0,1] (got {spec.p})")
    if spec.kind == "iid_discrete":
        if not spec.discrete_pmf:
            errs.append("discrete_pmf: required for iid_discrete")
        else:
            vals = [v for v, _ in spec.discrete_pmf]
            probs = [w for _, w in spec.discrete_pmf]
            if any(w < 0 for w in probs):
                errs.append("discrete_pmf: negative probability")
            total = math.fsum(probs)
            if abs(total - 1.0) > 1e-12:
                errs.append(f"discrete_pmf: pmf sums to {total:.12g}")
            if len(set(vals)) != len(vals):
                errs.append("discrete_pmf: atom values must be distinct")
            if not all(math.isfinite(v) for v in vals):
                errs.append("discrete_pmf: atom values must be finite")
    else:
        if spec.continuous is None:
            errs.append(f"continuous: required for kind {spec.kind}")
        else:
            errs.extend(spec.continuous.problems())
    if not math.isfinite(spec.atom):
        errs.append("atom: must be finite")
    return ValidationReport(errs)


def require_valid(spec: ProcessSpec) -> None:
    report = validate_spec(spec)
    if not report.ok:
        raise SpecError("; ".join(report.errors))


@dataclass
class SamplePath:
    values: np.ndarray
    spec: ProcessSpec
    seed: int
    jump_indicators: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.values)

    def to_csv(self, fh=None) -> str | None:
        """Write ``index,value[,jump]`` rows; returns the text when ``fh`` is None."""
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        if self.jump_indicators is None:
            w.writerow(["index", "value"])
            for i, v in enumerate(self.values):
                w.writerow([i, repr(float(v))])
        else:
            w.writerow(["index", "value", "jump"])
            for i, (v, j) in enumerate(zip(self.values, self.jump_indicators)):
                w.writerow([i, repr(float(v)), int(j)])
        return out.getvalue() if fh is None else None


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator keyed by ``seed`` and an optional child-stream path."""
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *stream])))


def sample_path(spec: ProcessSpec, n: int, seed: int) -> SamplePath:
    require_valid(spec)
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    jumps = None
    if spec.kind == "iid_continuous":
        values = spec.continuous.sample(rng, n)
    elif spec.kind == "iid_discrete":
        atoms = np.array([v for v, _ in spec.discrete_pmf])
        probs = np.array([w for _, w in spec.discrete_pmf])
        values = atoms[rng.choice(len(atoms), size=n, p=probs / probs.sum())]
    elif spec.kind == "iid_mixture":
        active = rng.random(n) < spec.p
        values = np.full(n, spec.atom, dtype=float)
        values[active] = spec.continuous.sample(rng, int(active.sum()))
    else:
        jumps = rng.random(n) < spec.p
        jumps[0] = False
        fresh = jumps.copy()
        fresh[0] = True
        draws = spec.continuous.sample(rng, int(fresh.sum()))
        # forward-fill each fresh draw until the next jump
        run_id = np.cumsum(fresh) - 1
        values = draws[run_id]
    return SamplePath(values=values, spec=spec, seed=seed, jump_indicators=jumps)


def jump_statistics(path: SamplePath) -> tuple[int, float]:
    kind = path.spec.kind
    n = len(path.values)
    if kind == "piecewise_constant_markov":
        if path.jump_indicators is None:
            raise ValueError("Markov path is missing jump indicators")
        count = int(np.count_nonzero(path.jump_indicators[1:]))
        return count, (count / (n - 1) if n > 1 else 0.0)
    if kind == "iid_mixture":
        count = int(np.count_nonzero(path.values != path.spec.atom))
        return count, count / n
    raise ValueError(f"jump statistics are defined for Markov or mixture paths, not {kind}")


def uniform_spec(kind: str = "iid_continuous", p: float = 1.0, low: float = 0.0,
                 high: float = 1.0) -> ProcessSpec:
    return ProcessSpec(kind=kind, p=p, continuous=ContinuousSpec("uniform", low, high))


def discrete_spec(pmf: Sequence[tuple[float, float]]) -> ProcessSpec:
    return ProcessSpec(kind="iid_discrete", discrete_pmf=tuple((float(v), float(w)) for v, w in pmf))

