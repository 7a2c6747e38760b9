"""Scalar quantizers: ``[x]_b = floor(2**b x) / 2**b`` and ``<x>_b = floor(b x) / b``.

Codes are the canonical symbols; a code ``c`` stands for ``c * 2**-b`` (bbit)
or ``c / b`` (blevel).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

MAX_BBIT = 52
# largest code magnitude that survives the int64 cast
CODE_LIMIT = 2**62


@dataclass(frozen=True)
class QuantScheme:
    scheme: str
    b: int

    def __post_init__(self):
        if self.scheme not in ("bbit", "blevel"):
            raise ValueError(f"unknown quantization scheme {self.scheme!r}")
        if int(self.b) != self.b or self.b < 1:
            raise ValueError("b must be a positive integer")
        if self.scheme == "bbit" and self.b > MAX_BBIT:
            raise ValueError(f"bbit resolution capped at b={MAX_BBIT}")

    @property
    def step(self) -> float:
        return math.ldexp(1.0, -self.b) if self.scheme == "bbit" else 1.0 / self.b

    def value_of(self, code):
        """Reconstruction value for integer code(s)."""
        if self.scheme == "bbit":
            return np.ldexp(np.asarray(code, dtype=float), -self.b)
        return np.asarray(code, dtype=float) / self.b


@dataclass
class QuantizedPath:
    codes: np.ndarray
    scheme: QuantScheme
    source_meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.codes)

    def values(self) -> np.ndarray:
        return self.scheme.value_of(self.codes)

    def to_csv(self, fh=None) -> str | None:
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["index", "code"])
        for i, c in enumerate(self.codes):
            w.writerow([i, int(c)])
        return out.getvalue() if fh is None else None


def _blevel_codes(x: np.ndarray, b: int) -> np.ndarray:
    code = np.floor(x * b)
    # b*x can round across an integer; enforce code/b <= x < (code+1)/b
    code = np.where(code / b > x, code - 1, code)
    code = np.where((code + 1) / b <= x, code + 1, code)
    return code


def quantize_array(x, scheme: QuantScheme) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot quantize non-finite values")
    if scheme.scheme == "bbit":
        with np.errstate(over="ignore"):
            code = np.floor(np.ldexp(x, scheme.b))
    else:
        code = _blevel_codes(x, scheme.b)
    if code.size and np.max(np.abs(code)) >= CODE_LIMIT:
        raise OverflowError("quantization code exceeds the integer code range")
    return code.astype(np.int64)


def quantize_scalar(x: float, scheme: QuantScheme) -> tuple[int, float]:
    code = int(quantize_array(np.array([x]), scheme)[0])
    return code, float(scheme.value_of(code))


def quantize_path(path, scheme: QuantScheme) -> QuantizedPath:
    """Componentwise quantization of a SamplePath (or a raw array)."""
    values = getattr(path, "values", path)
    meta = {}
    if hasattr(path, "seed"):
        meta = {"seed": int(path.seed), "n": len(values), "spec": path.spec.to_dict()}
    return QuantizedPath(codes=quantize_array(values, scheme), scheme=scheme, source_meta=meta)


def requantize(codes, fine: QuantScheme, coarse: QuantScheme) -> np.ndarray:
    """Map bbit codes at ``fine.b`` to bbit codes at ``coarse.b <= fine.b``."""
    if fine.scheme != "bbit" or coarse.scheme != "bbit" or coarse.b > fine.b:
        raise ValueError("requantize needs bbit schemes with coarse.b <= fine.b")
    return np.right_shift(np.asarray(codes, dtype=np.int64), fine.b - coarse.b)
