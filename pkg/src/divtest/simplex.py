"""Probability vectors, empirical types and type-class combinatorics.

Everything that accumulates probability mass works in the natural-log domain;
type-II errors decay exponentially in ``n`` and underflow quickly otherwise.
"""
from __future__ import annotations

import json
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammaln

SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Distribution:
    """A probability vector on a ``k``-letter alphabet."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=np.float64)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        if p.ndim != 1 or p.size < 2:
            raise ValueError("a distribution needs k >= 2 entries")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"probabilities sum to {p.sum():.17g}, not 1")

    @property
    def k(self) -> int:
        return int(self.probs.size)

    @property
    def interior(self) -> bool:
        return bool(self.probs.min() > 0)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Distribution):
            return NotImplemented
        return self.k == other.k and bool(np.array_equal(self.probs, other.probs))

    def __hash__(self) -> int:
        return hash(self.probs.tobytes())

    def __repr__(self) -> str:
        return f"Distribution({self.probs.tolist()})"

    def to_json(self) -> str:
        return json.dumps(self.probs.tolist())

    @classmethod
    def from_json(cls, text: str) -> Distribution:
        return make_distribution(json.loads(text))


@dataclass(frozen=True, eq=False)
class TypeDistribution:
    """Empirical type of a length-``n`` sequence, stored as integer counts."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        c = np.array(self.counts)
        if c.dtype.kind not in "iu":
            if not np.all(c == np.round(c)):
                raise ValueError("type counts must be integers")
        c = c.astype(np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        if c.ndim != 1 or c.size < 2:
            raise ValueError("a type needs k >= 2 counts")
        if np.any(c < 0):
            raise ValueError("type counts must be nonnegative")
        if c.sum() < 1:
            raise ValueError("a type needs n >= 1")

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def k(self) -> int:
        return int(self.counts.size)

    @property
    def probs(self) -> np.ndarray:
        return self.counts / self.n

    def as_distribution(self) -> Distribution:
        return Distribution(self.probs)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TypeDistribution):
            return NotImplemented
        return bool(np.array_equal(self.counts, other.counts))

    def __hash__(self) -> int:
        return hash(self.counts.tobytes())

    def __repr__(self) -> str:
        return f"TypeDistribution({self.counts.tolist()})"

    def to_json(self) -> str:
        return json.dumps(self.counts.tolist())


def make_distribution(weights: Sequence[float] | np.ndarray) -> Distribution:
    """Normalize nonnegative weights into a :class:`Distribution`."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size < 2:
        raise ValueError("need a flat vector of k >= 2 weights")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise ValueError("at least one weight must be positive")
    p = w / total
    # push the rounding residue onto the largest entry so the sum is 1 to ~1 ulp
    p[np.argmax(p)] += 1.0 - p.sum()
    return Distribution(p)


def type_of_sample(sample: Sequence[int] | np.ndarray, k: int) -> TypeDistribution:
    s = np.asarray(sample)
    if s.size == 0:
        raise ValueError("empty sample")
    if s.dtype.kind not in "iu":
        raise ValueError("sample entries must be integer symbol indices")
    if s.min() < 0 or s.max() >= k:
        raise ValueError(f"symbol index outside 0..{k - 1}")
    return TypeDistribution(np.bincount(s.ravel(), minlength=k))


def num_types(n: int, k: int) -> int:
    """Number of compositions of ``n`` into ``k`` nonnegative parts."""
    return math.comb(n + k - 1, k - 1)


def type_matrix(n: int, k: int) -> np.ndarray:
    """All types with denominator ``n`` as rows of a count matrix.

    Rows come in lexicographic (descending-first-coordinate) order, the same
    order :func:`enumerate_types` yields.
    """
    if n < 1 or k < 2:
        raise ValueError("need n >= 1 and k >= 2")
    if k == 2:
        first = np.arange(n, -1, -1, dtype=np.int64)
        return np.column_stack([first, n - first])
    blocks = []
    for head in range(n, -1, -1):
        tail = type_matrix(n - head, k - 1) if head < n else np.zeros((1, k - 1), np.int64)
        blocks.append(np.column_stack([np.full(len(tail), head, np.int64), tail]))
    return np.vstack(blocks)


def enumerate_types(n: int, k: int) -> Iterator[TypeDistribution]:
    """Yield every type with denominator ``n`` over ``k`` letters exactly once.

    Order is lexicographic on the count vector read from the first letter,
    largest first: ``(n, 0, ..., 0)`` comes first and ``(0, ..., 0, n)`` last.
    """
    if n < 1 or k < 2:
        raise ValueError("need n >= 1 and k >= 2")
    counts = [0] * k

    def rec(pos: int, remaining: int) -> Iterator[TypeDistribution]:
        if pos == k - 1:
            counts[pos] = remaining
            yield TypeDistribution(np.array(counts, dtype=np.int64))
            return
        for c in range(remaining, -1, -1):
            counts[pos] = c
            yield from rec(pos + 1, remaining - c)

    yield from rec(0, n)


def log_type_class_probs(counts: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Vectorized log-probability of type classes (rows of ``counts``) under ``probs``."""
    counts = np.atleast_2d(counts)
    n = counts.sum(axis=1)
    log_coef = gammaln(n + 1.0) - gammaln(counts + 1.0).sum(axis=1)
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    terms = np.where(counts > 0, counts * logp, 0.0)
    return log_coef + terms.sum(axis=1)


def log_type_class_prob(t: TypeDistribution, p: Distribution) -> float:
    """Natural log of ``P^n(T(t))``, the exact probability of the type class.

    Returns ``-inf`` when ``t`` puts mass on a letter that ``p`` does not.
    """
    if t.k != p.k:
        raise ValueError("type and distribution live on different alphabets")
    return float(log_type_class_probs(t.counts[None, :], p.probs)[0])


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator addressed by ``(seed, stream)``.

    Streams with different ids are statistically independent and do not
    depend on how work is scheduled across threads or processes.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def sample_iid(p: Distribution, n: int, stream: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. symbols from ``p`` by inverting the cumulative vector."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cdf = np.cumsum(p.probs)
    cdf[-1] = 1.0
    u = stream.random(n)
    return np.searchsorted(cdf, u, side="right").astype(np.int64)


def write_sample(path: str | Path, sample: Sequence[int] | np.ndarray) -> None:
    Path(path).write_text("".join(f"{int(s)}\n" for s in sample))


def read_sample(path: str | Path) -> np.ndarray:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    return np.array([int(ln) for ln in lines if ln], dtype=np.int64)
