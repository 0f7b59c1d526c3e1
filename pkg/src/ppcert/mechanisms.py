"""Finite and deterministic data-release mechanisms.

A :class:`FiniteMechanism` is a row-stochastic kernel: rows are datasets
(or ``(dataset, previous output)`` pairs for second-stage mechanisms),
columns are outputs. Kernels hold floats, or :class:`fractions.Fraction`
objects when exact arithmetic is needed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

from .errors import IndexMismatch, PreconditionError

ROW_SUM_TOL = 1e-12


class KernelRowError(PreconditionError):
    """A kernel row is not a probability vector; ``row`` is its index."""

    def __init__(self, message, row):
        super().__init__(message)
        self.row = row


def _as_kernel(kernel) -> np.ndarray:
    arr = np.array(kernel, dtype=object)
    if arr.ndim != 2:
        raise PreconditionError("kernel must be a 2-d array")
    if all(isinstance(v, (Fraction, int)) and not isinstance(v, bool) for v in arr.flat):
        return np.vectorize(Fraction, otypes=[object])(arr) if arr.size else arr
    return np.array(kernel, dtype=float)


@dataclass(frozen=True, eq=False)
class FiniteMechanism:
    universe: tuple
    alphabet: tuple
    kernel: np.ndarray

    def __post_init__(self):
        universe = tuple(self.universe)
        alphabet = tuple(self.alphabet)
        kernel = _as_kernel(self.kernel)
        if kernel.shape != (len(universe), len(alphabet)):
            raise IndexMismatch(
                f"kernel shape {kernel.shape} does not match {len(universe)} rows x {len(alphabet)} outputs"
            )
        if len(set(universe)) != len(universe) or len(set(alphabet)) != len(alphabet):
            raise PreconditionError("dataset and output ids must be distinct")
        if kernel.dtype != object and not np.isfinite(kernel).all():
            bad = int(np.argwhere(~np.isfinite(kernel))[0][0])
            raise KernelRowError(f"kernel row {bad} has a non-finite entry", bad)
        for r in range(kernel.shape[0]):
            row = kernel[r]
            if any(v < 0 for v in row):
                raise KernelRowError(f"kernel row {r} has a negative entry", r)
            total = sum(row)
            if abs(total - 1) > ROW_SUM_TOL:
                raise KernelRowError(f"kernel row {r} sums to {float(total)!r}, not 1", r)
        kernel.setflags(write=False)
        object.__setattr__(self, "universe", universe)
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "_row", {z: i for i, z in enumerate(universe)})
        object.__setattr__(self, "_col", {t: j for j, t in enumerate(alphabet)})

    @property
    def is_exact(self) -> bool:
        return self.kernel.dtype == object

    def dataset_index(self, x: Hashable) -> int:
        try:
            return self._row[x]
        except KeyError:
            raise IndexMismatch(f"{x!r} is not a row of this mechanism") from None

    def output_index(self, t: Hashable) -> int:
        try:
            return self._col[t]
        except KeyError:
            raise IndexMismatch(f"{t!r} is not an output of this mechanism") from None

    def prob(self, x, t):
        return self.kernel[self.dataset_index(x), self.output_index(t)]

    def row(self, x) -> np.ndarray:
        return self.kernel[self.dataset_index(x)]

    def as_float(self) -> "FiniteMechanism":
        if not self.is_exact:
            return self
        return FiniteMechanism(self.universe, self.alphabet, self.kernel.astype(float))

    def restrict(self, rows: Sequence) -> "FiniteMechanism":
        """Sub-kernel over the given row ids (order preserved)."""
        idx = [self.dataset_index(r) for r in rows]
        return FiniteMechanism(tuple(rows), self.alphabet, self.kernel[idx])

    def __repr__(self):
        return f"FiniteMechanism(universe={self.universe!r}, alphabet={self.alphabet!r})"


def identity_mechanism(universe: Sequence) -> FiniteMechanism:
    universe = tuple(universe)
    return FiniteMechanism(universe, universe, np.eye(len(universe)))


def constant_mechanism(universe: Sequence, alphabet: Sequence, probs: Sequence) -> FiniteMechanism:
    """Data-independent kernel: every row equals ``probs``."""
    universe, alphabet = tuple(universe), tuple(alphabet)
    return FiniteMechanism(universe, alphabet, [list(probs)] * len(universe))


def randomized_response(eps: float, k: int, universe: Sequence | None = None) -> FiniteMechanism:
    """k-ary randomized response; datasets and outputs are ``0..k-1``."""
    if k < 2:
        raise PreconditionError("randomized response needs k >= 2")
    if eps < 0:
        raise PreconditionError("eps must be nonnegative")
    universe = tuple(universe) if universe is not None else tuple(range(k))
    if len(universe) != k:
        raise PreconditionError("universe size must equal k")
    # divide by e^eps first so large eps does not overflow
    keep = 1.0 / (1.0 + (k - 1) * math.exp(-eps))
    other = (1.0 - keep) / (k - 1)
    kernel = np.full((k, k), other)
    np.fill_diagonal(kernel, keep)
    return FiniteMechanism(universe, universe, kernel)


def truncated_geometric(eps: float, k: int) -> FiniteMechanism:
    """Geometric noise on ``0..k-1`` with the tails folded onto the ends.

    Output probabilities are proportional to ``exp(-eps * |x - t|)`` on the
    interior with the mass beyond the boundary collapsed onto ``0`` and
    ``k - 1``; the result is ``eps``-DP for neighbours ``|x - x'| = 1``.
    """
    a = math.exp(-eps)
    kernel = np.zeros((k, k))
    for x in range(k):
        for t in range(k):
            kernel[x, t] = (1 - a) / (1 + a) * a ** abs(x - t)
        kernel[x, 0] = a**x / (1 + a)
        kernel[x, k - 1] = a ** (k - 1 - x) / (1 + a)
    kernel /= kernel.sum(axis=1, keepdims=True)
    return FiniteMechanism(tuple(range(k)), tuple(range(k)), kernel)


def _pair_rows(m1: FiniteMechanism, m2: FiniteMechanism, rows: str) -> np.ndarray:
    """Row index into ``m2`` for every ``(dataset, m1 output)`` pair.

    Returned array has shape ``(len(m1.universe), len(m1.alphabet))``.
    """
    if rows == "auto":
        pairs = set(itertools.product(m1.universe, m1.alphabet))
        if set(m2.universe) == pairs:
            rows = "pair"
        elif m2.universe == m1.universe and m1.universe != m1.alphabet:
            rows = "dataset"
        elif m2.universe == m1.alphabet and m1.universe != m1.alphabet:
            rows = "output"
        else:
            raise IndexMismatch(
                "cannot infer how the second kernel is indexed; pass rows='pair', 'dataset' or 'output'"
            )
    out = np.empty((len(m1.universe), len(m1.alphabet)), dtype=int)
    for i, x in enumerate(m1.universe):
        for j, t in enumerate(m1.alphabet):
            if rows == "pair":
                out[i, j] = m2.dataset_index((x, t))
            elif rows == "dataset":
                out[i, j] = m2.dataset_index(x)
            elif rows == "output":
                out[i, j] = m2.dataset_index(t)
            else:
                raise PreconditionError(f"unknown row indexing {rows!r}")
    return out


def _common_dtype(*mechs):
    return object if all(m.is_exact for m in mechs) else float


def tensor(m1: FiniteMechanism, m2: FiniteMechanism, rows: str = "auto") -> FiniteMechanism:
    """Joint release ``(t1, t2)`` with ``t1 ~ m1(x)`` and ``t2 ~ m2((x, t1))``.

    ``rows`` says how ``m2`` is indexed: by ``(dataset, t1)`` pairs, by
    dataset only (broadcast over ``t1``) or by ``t1`` only (data
    independent).
    """
    idx = _pair_rows(m1, m2, rows)
    dtype = _common_dtype(m1, m2)
    a1, a2 = len(m1.alphabet), len(m2.alphabet)
    kernel = np.empty((len(m1.universe), a1 * a2), dtype=dtype)
    k1 = m1.kernel if dtype is object else m1.kernel.astype(float)
    k2 = m2.kernel if dtype is object else m2.kernel.astype(float)
    for i in range(len(m1.universe)):
        for j in range(a1):
            kernel[i, j * a2 : (j + 1) * a2] = k1[i, j] * k2[idx[i, j]]
    alphabet = tuple(itertools.product(m1.alphabet, m2.alphabet))
    return FiniteMechanism(m1.universe, alphabet, kernel)


def marginalize_first(mech: FiniteMechanism) -> FiniteMechanism:
    """Drop the first component of a tensor alphabet of ``(t1, t2)`` pairs."""
    seconds = []
    for _, t2 in mech.alphabet:
        if t2 not in seconds:
            seconds.append(t2)
    col = {t: j for j, t in enumerate(seconds)}
    kernel = np.zeros((len(mech.universe), len(seconds)), dtype=mech.kernel.dtype)
    if mech.is_exact:
        kernel[:] = Fraction(0)
    for j, (_, t2) in enumerate(mech.alphabet):
        kernel[:, col[t2]] = kernel[:, col[t2]] + mech.kernel[:, j]
    return FiniteMechanism(mech.universe, tuple(seconds), kernel)


def chain(m: FiniteMechanism, k: FiniteMechanism, x_independent: bool = True) -> FiniteMechanism:
    """Release only ``t2`` where ``t1 ~ m(x)`` and ``t2 ~ k(t1)``.

    With ``x_independent`` the rows of ``k`` are outputs of ``m``;
    otherwise they are ``(dataset, output)`` pairs or datasets.
    """
    if x_independent:
        idx = _pair_rows(m, k, "output")
        dtype = _common_dtype(m, k)
        km = k.kernel if dtype is object else k.kernel.astype(float)
        mm = m.kernel if dtype is object else m.kernel.astype(float)
        # rows of k are aligned to m's alphabet order
        kk = km[idx[0]]
        return FiniteMechanism(m.universe, k.alphabet, mm.dot(kk))
    return marginalize_first(tensor(m, k))


def is_x_independent(k: FiniteMechanism, universe: Sequence, alphabet: Sequence) -> bool:
    """True when a pair-indexed ``k`` has identical rows across datasets."""
    for t in alphabet:
        rows = [k.row((x, t)) for x in universe]
        first = rows[0]
        for r in rows[1:]:
            if any(a != b for a, b in zip(first, r)):
                return False
    return True


@dataclass(frozen=True)
class NeighborRelation:
    """Symmetric, irreflexive relation stored as unordered pairs."""

    pairs: frozenset

    def __post_init__(self):
        norm = set()
        for pair in self.pairs:
            if len(pair) != 2:
                raise PreconditionError(f"neighbour relation must be irreflexive, got {tuple(pair)!r}")
            norm.add(frozenset(pair))
        object.__setattr__(self, "pairs", frozenset(norm))

    @classmethod
    def from_pairs(cls, pairs: Iterable) -> "NeighborRelation":
        norm = []
        for a, b in pairs:
            if a == b:
                raise PreconditionError(f"neighbour relation must be irreflexive, got ({a!r}, {b!r})")
            norm.append(frozenset((a, b)))
        return cls(frozenset(norm))

    def __contains__(self, pair) -> bool:
        return frozenset(pair) in self.pairs

    def __len__(self):
        return len(self.pairs)

    def neighbors_of(self, x) -> list:
        return [next(iter(p - {x})) for p in self.pairs if x in p]

    def ordered_pairs(self, universe: Sequence) -> list:
        """Both orientations of every pair, in universe order."""
        universe = tuple(universe)
        pos = {z: i for i, z in enumerate(universe)}
        out = []
        for a in universe:
            for b in universe:
                if a != b and frozenset((a, b)) in self.pairs:
                    out.append((a, b))
        out.sort(key=lambda p: (pos[p[0]], pos[p[1]]))
        return out


def complete_neighbors(universe: Sequence) -> NeighborRelation:
    return NeighborRelation.from_pairs(itertools.combinations(tuple(universe), 2))


def hamming_neighbors(universe: Sequence, distance: int = 1) -> NeighborRelation:
    """Pairs of equal-length tuples differing in exactly ``distance`` places."""
    universe = [tuple(u) for u in universe]
    lengths = {len(u) for u in universe}
    if len(lengths) > 1:
        raise PreconditionError("Hamming neighbours need equal-length tuples")
    pairs = [
        (a, b)
        for a, b in itertools.combinations(universe, 2)
        if sum(ai != bi for ai, bi in zip(a, b)) == distance
    ]
    return NeighborRelation.from_pairs(pairs)


@dataclass(frozen=True, eq=False)
class DeterministicMechanism:
    """Point-mass mechanism ``x -> f(x)``."""

    fn: Callable
    name: str = "deterministic"

    @classmethod
    def from_mapping(cls, mapping: dict, name: str = "deterministic") -> "DeterministicMechanism":
        frozen = dict(mapping)
        return cls(frozen.__getitem__, name)

    def __call__(self, x):
        return self.fn(x)

    def as_kernel(self, universe: Sequence) -> FiniteMechanism:
        universe = tuple(universe)
        outputs = []
        for x in universe:
            t = self.fn(x)
            if t not in outputs:
                outputs.append(t)
        kernel = np.zeros((len(universe), len(outputs)))
        for i, x in enumerate(universe):
            kernel[i, outputs.index(self.fn(x))] = 1.0
        return FiniteMechanism(universe, tuple(outputs), kernel)


def average_mechanism(x) -> float:
    """Empirical average of a real vector of length at least 2."""
    x = [float(v) for v in np.asarray(x, dtype=float).reshape(-1)]
    if len(x) < 2:
        raise PreconditionError("the average mechanism needs n >= 2")
    return math.fsum(x) / len(x)


AVERAGE = DeterministicMechanism(average_mechanism, "average")
