"""Plug-in block entropies of quantized paths.

All entropies are in bits.  Block keys are exact integer code tuples; when the
code range allows it the tuples are packed into a single int64 before counting.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)


class UndersamplingWarning(UserWarning):
    """More distinct blocks were seen than total/10; plug-in bias is large."""


@dataclass
class BlockCounts:
    k: int
    keys: np.ndarray  # shape (support, k), one row per distinct block
    counts: np.ndarray
    total: int

    @property
    def support(self) -> int:
        return len(self.counts)

    def as_dict(self) -> dict[tuple[int, ...], int]:
        return {tuple(int(c) for c in row): int(n) for row, n in zip(self.keys, self.counts)}

    def merge(self, other: "BlockCounts") -> "BlockCounts":
        """Combine counts from two shards (associative and commutative)."""
        if other.k != self.k:
            raise ValueError("cannot merge counts of different block lengths")
        keys = np.concatenate([self.keys, other.keys])
        counts = np.concatenate([self.counts, other.counts])
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        merged = np.bincount(inv.ravel(), weights=counts, minlength=len(uniq)).astype(np.int64)
        return BlockCounts(self.k, uniq, merged, self.total + other.total)


@dataclass
class EntropyEstimate:
    value: float
    estimator: str
    support_seen: int
    total: int

    @property
    def undersampled(self) -> bool:
        return self.support_seen > self.total / 10


def _codes_of(qpath) -> np.ndarray:
    return np.asarray(getattr(qpath, "codes", qpath), dtype=np.int64)


def count_blocks(qpath, k: int) -> BlockCounts:
    codes = _codes_of(qpath)
    n = len(codes)
    if k < 1:
        raise ValueError("block length k must be >= 1")
    if k > n:
        raise ValueError(f"block length k={k} exceeds path length n={n}")
    total = n - k + 1
    lo = int(codes.min())
    radix = int(codes.max()) - lo + 1
    if radix ** k < 2**62:
        shifted = codes - lo
        packed = np.zeros(total, dtype=np.int64)
        for t in range(k):
            packed = packed * radix + shifted[t:t + total]
        uniq, counts = np.unique(packed, return_counts=True)
        keys = np.empty((len(uniq), k), dtype=np.int64)
        rest = uniq.copy()
        for t in range(k - 1, -1, -1):
            keys[:, t] = rest % radix + lo
            rest //= radix
    else:
        windows = np.lib.stride_tricks.sliding_window_view(codes, k)
        keys, counts = np.unique(windows, axis=0, return_counts=True)
    return BlockCounts(k=k, keys=keys, counts=counts.astype(np.int64), total=total)


def entropy_plugin(counts: BlockCounts) -> EntropyEstimate:
    if counts.total < 1 or counts.support == 0:
        raise ValueError("empty block counts")
    c = counts.counts[counts.counts > 0].astype(float)
    prob = c / counts.total
    h = float(-np.sum(prob * np.log2(prob)))
    # rounding can leave -0.0 or a hair above log2(support)
    h = min(max(h, 0.0), math.log2(len(c)))
    return EntropyEstimate(h, "plugin", len(c), counts.total)


def miller_madow_correct(est: EntropyEstimate, counts: BlockCounts | None = None) -> EntropyEstimate:
    support = est.support_seen if counts is None else counts.support
    total = est.total if counts is None else counts.total
    bias = (support - 1) / (2.0 * total * LN2)
    return EntropyEstimate(est.value + bias, "miller_madow", support, total)


def block_entropy(qpath, k: int, estimator: str = "plugin") -> EntropyEstimate:
    """Entropy of length-k blocks; k = 0 is the empty block with entropy 0."""
    if k == 0:
        n = len(_codes_of(qpath))
        return EntropyEstimate(0.0, estimator, 1, n + 1)
    counts = count_blocks(qpath, k)
    est = entropy_plugin(counts)
    if estimator == "miller_madow":
        est = miller_madow_correct(est, counts)
    elif estimator != "plugin":
        raise ValueError(f"unknown estimator {estimator!r}")
    return est


def conditional_entropy(qpath, k: int, estimator: str = "plugin", *,
                        warn: bool = True) -> EntropyEstimate:
    """H(next symbol | previous k symbols) as H(k+1 blocks) - H(k blocks)."""
    n = len(_codes_of(qpath))
    if k < 0:
        raise ValueError("k must be nonnegative")
    if n < k + 1:
        raise ValueError(f"path length {n} is too short for conditioning depth k={k}")
    joint = block_entropy(qpath, k + 1, estimator)
    context = block_entropy(qpath, k, estimator)
    est = EntropyEstimate(joint.value - context.value, estimator, joint.support_seen, joint.total)
    if warn and est.undersampled:
        warnings.warn(
            f"{est.support_seen} distinct blocks from {est.total} windows (k={k})",
            UndersamplingWarning, stacklevel=2)
    return est

