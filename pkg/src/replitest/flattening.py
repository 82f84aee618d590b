"""Randomized flattening: splitting heavy domain elements into sub-bins.

A random subset of the samples (the "flattening" samples, marked by a
binary vector F) act as dividers: under a random order, each kept
sample is tagged with the number of flattening samples of the same
element that precede it. Two kept samples collide only if they share
the element and the tag, so heavy elements are diluted into sub-bins
while distinct elements are never merged. The 2D variant flattens the
row and column coordinates independently and keeps a sample only if it
was selected on neither axis.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .rng import RngStream


@dataclass(frozen=True)
class FlattenAssignment:
    """Flattening selector ``F`` and sample order ``sigma``.

    ``sigma[l]`` is the position of sample ``l`` in the random order;
    it must be a permutation of ``range(len(F))``.
    """

    flags: np.ndarray
    sigma: np.ndarray

    def __post_init__(self) -> None:
        flags = np.asarray(self.flags, dtype=np.int8)
        sigma = np.asarray(self.sigma, dtype=np.int64)
        if flags.shape != sigma.shape or flags.ndim != 1:
            raise ValueError("flags and sigma must be 1D of equal length")
        if not np.all((flags == 0) | (flags == 1)):
            raise ValueError("flags must be binary")
        check = np.zeros(sigma.size, dtype=bool)
        check[sigma] = True
        if not check.all():
            raise ValueError("sigma must be a permutation")
        object.__setattr__(self, "flags", flags)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def random(cls, size: int, alpha: float, rng: RngStream) -> "FlattenAssignment":
        gen = rng.generator()
        flags = (gen.random(size) < alpha).astype(np.int8)
        sigma = gen.permutation(size)
        return cls(flags, sigma)


def subbin_indices(values: np.ndarray, flags: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Per-sample tag: flattening samples with the same value strictly before it."""
    values = np.asarray(values)
    k = values.size
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    by_pos = np.argsort(sigma, kind="stable")
    v = values[by_pos]
    f = np.asarray(flags, dtype=np.int64)[by_pos]
    by_val = np.argsort(v, kind="stable")
    v2 = v[by_val]
    f2 = f[by_val]
    inclusive = np.cumsum(f2)
    new_group = np.r_[True, v2[1:] != v2[:-1]]
    starts = np.flatnonzero(new_group)
    base_at_start = np.where(starts > 0, inclusive[starts - 1], 0)
    base = base_at_start[np.cumsum(new_group) - 1]
    sub_sorted = inclusive - f2 - base
    out = np.empty(k, dtype=np.int64)
    out[by_pos[by_val]] = sub_sorted
    return out


def flatten_1d(samples, assignment: FlattenAssignment) -> list[tuple[int, int]]:
    """Flatten a 1D multiset; returns kept ``(element, sub_bin)`` pairs in input order."""
    values = np.asarray(samples, dtype=np.int64)
    if values.size != assignment.flags.size:
        raise ValueError("assignment length must match the number of samples")
    subs = subbin_indices(values, assignment.flags, assignment.sigma)
    keep = assignment.flags == 0
    return [(int(v), int(s)) for v, s in zip(values[keep], subs[keep])]


@dataclass(frozen=True)
class Flattened2D:
    """Result of a 2D flattening pass, aligned with the input samples."""

    keep: np.ndarray        # bool, True where F^x = F^y = 0
    rows: np.ndarray
    row_subs: np.ndarray
    cols: np.ndarray
    col_subs: np.ndarray
    fx: np.ndarray
    fy: np.ndarray

    def kept_count(self) -> int:
        return int(self.keep.sum())

    def kept_keys(self) -> np.ndarray:
        """Collision keys of kept samples, in input order.

        Keys are equal iff the flattened pairs ``((row, row_sub),
        (col, col_sub))`` are equal.
        """
        return pack_keys(
            self.rows[self.keep],
            self.row_subs[self.keep],
            self.cols[self.keep],
            self.col_subs[self.keep],
        )

    def kept_tuples(self) -> list[tuple[tuple[int, int], tuple[int, int]]]:
        return [
            ((int(r), int(rs)), (int(c), int(cs)))
            for r, rs, c, cs in zip(
                self.rows[self.keep],
                self.row_subs[self.keep],
                self.cols[self.keep],
                self.col_subs[self.keep],
            )
        ]


def pack_keys(*columns: np.ndarray) -> np.ndarray:
    """Pack parallel non-negative integer columns into single int64 keys."""
    if not columns:
        raise ValueError("need at least one column")
    size = columns[0].size
    if size == 0:
        return np.zeros(0, dtype=np.int64)
    key = np.zeros(size, dtype=np.int64)
    for col in columns:
        col = np.asarray(col, dtype=np.int64)
        radix = int(col.max()) + 1 if col.size else 1
        if radix <= 0:
            raise ValueError("columns must be non-negative")
        if key.max(initial=0) > (2**62) // max(radix, 1):
            raise OverflowError("key does not fit in int64; domain too large")
        key = key * radix + col
    return key


def flatten_2d(
    samples: np.ndarray, alpha: float, beta: float, rng: RngStream
) -> Flattened2D:
    """Flatten ``(row, col)`` samples with per-axis rates ``alpha`` and ``beta``.

    Selectors are i.i.d. Bernoulli per axis and the two axes use
    independent random orders. A sample survives iff unselected on
    both axes.
    """
    samples = np.asarray(samples, dtype=np.int64)
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise ValueError("samples must be a (k, 2) array of (row, col)")
    if not (0 <= alpha <= 1 and 0 <= beta <= 1):
        raise ValueError("alpha and beta must lie in [0, 1]")
    k = samples.shape[0]
    gen = rng.generator()
    fx = (gen.random(k) < alpha).astype(np.int8)
    fy = (gen.random(k) < beta).astype(np.int8)
    sigma_x = gen.permutation(k)
    sigma_y = gen.permutation(k)
    rows = samples[:, 0]
    cols = samples[:, 1]
    row_subs = subbin_indices(rows, fx, sigma_x)
    col_subs = subbin_indices(cols, fy, sigma_y)
    keep = (fx == 0) & (fy == 0)
    return Flattened2D(keep, rows, row_subs, cols, col_subs, fx, fy)


def non_singleton_count(samples) -> int:
    """Number of samples whose element appears at least twice.

    ``N = sum over elements with multiplicity c >= 2 of c``.
    """
    if isinstance(samples, np.ndarray):
        if samples.size == 0:
            return 0
        _, counts = np.unique(samples, return_counts=True)
        return int(counts[counts >= 2].sum())
    counts = Counter(samples)
    return sum(c for c in counts.values() if c >= 2)


def max_subbin_count(samples) -> int:
    """Largest multiplicity of any flattened element (0 for empty input)."""
    if isinstance(samples, np.ndarray):
        if samples.size == 0:
            return 0
        _, counts = np.unique(samples, return_counts=True)
        return int(counts.max())
    counter = Counter(samples)
    return max(counter.values(), default=0)
