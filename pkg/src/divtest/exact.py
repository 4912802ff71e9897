"""Exact finite-n error probabilities by enumerating pairs of types.

For ``X^n, Y^n`` i.i.d. the divergence statistic depends on the samples only
through their types, so every probability of interest is a finite sum over
ordered type pairs ``(T, R)`` weighted by ``P_1^n(T(T)) * P_2^n(T(R))``.
Accumulation is in the log domain throughout.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .divergence import DivergenceSpec, evaluate, local_eigenvalues
from .genchisq import GenChiSq, genchisq_tail
from .simplex import Distribution, log_type_class_probs, num_types, type_matrix

DEFAULT_PAIR_BUDGET = 10**8
MERGE_TOL = 1e-12
# statistic evaluations per chunk; fixed so that chunking never depends on the worker count
CHUNK_PAIRS = 1 << 20
_CACHE_MAX_PAIRS = 4_000_000
_CACHE_SLOTS = 8


class BudgetExceeded(RuntimeError):
    """The number of type pairs exceeds the configured enumeration budget."""


@dataclass(frozen=True, eq=False)
class StatDistribution:
    """Exact law of ``D(T_X||T_Y)`` under ``X, Y`` i.i.d. from ``null``.

    ``values`` are ascending and distinct (``+inf`` may close the list);
    ``log_probs`` are the matching natural-log probabilities.
    """

    values: np.ndarray
    log_probs: np.ndarray
    n: int
    k: int
    divergence: str
    null: Distribution

    def log_tails(self) -> np.ndarray:
        """``log P(stat >= values[i])`` for every ``i``."""
        return np.logaddexp.accumulate(self.log_probs[::-1])[::-1]

    def log_tail(self, r: float) -> float:
        mask = self.values >= r
        if not mask.any():
            return -np.inf
        return float(logsumexp(self.log_probs[mask]))

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["value", "probability"])
        for v, lp in zip(self.values, self.log_probs):
            writer.writerow([repr(float(v)), repr(float(np.exp(lp)))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass(frozen=True)
class ErrorReport:
    log_alpha: float
    log_beta: float
    threshold: float
    n: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha"] = float(np.exp(self.log_alpha))
        d["beta"] = float(np.exp(self.log_beta))
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _check_budget(n: int, k: int, budget: int) -> int:
    count = num_types(n, k)
    if count * count > budget:
        raise BudgetExceeded(
            f"{count}^2 = {count * count} type pairs for n={n}, k={k} exceeds the budget of {budget}"
        )
    return count


def _workers(workers: int | None) -> int:
    return max(1, workers if workers is not None else (os.cpu_count() or 1))


def _row_chunks(count: int) -> list[tuple[int, int]]:
    rows = max(1, CHUNK_PAIRS // count)
    return [(a, min(a + rows, count)) for a in range(0, count, rows)]


_stat_cache: OrderedDict[tuple, np.ndarray] = OrderedDict()


def _stat_rows(d: DivergenceSpec, n: int, k: int, a: int, b: int, probs: np.ndarray) -> np.ndarray:
    return np.asarray(evaluate(d, probs[a:b, None, :], probs[None, :, :]))


def _stat_matrix(d: DivergenceSpec, n: int, k: int, workers: int | None) -> np.ndarray | None:
    """Full statistic table over type pairs when small enough to memoize, else ``None``."""
    count = num_types(n, k)
    if count * count > _CACHE_MAX_PAIRS:
        return None
    key = (d, n, k)
    if key in _stat_cache:
        _stat_cache.move_to_end(key)
        return _stat_cache[key]
    probs = type_matrix(n, k) / n
    chunks = _row_chunks(count)
    with ThreadPoolExecutor(_workers(workers)) as pool:
        parts = list(pool.map(lambda ab: _stat_rows(d, n, k, ab[0], ab[1], probs), chunks))
    table = np.vstack(parts)
    table.setflags(write=False)
    _stat_cache[key] = table
    if len(_stat_cache) > _CACHE_SLOTS:
        _stat_cache.popitem(last=False)
    return table


def _merge(values: np.ndarray, logp: np.ndarray, tol: float = MERGE_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Collapse values within ``tol`` of their predecessor; each group keeps its smallest value."""
    keep = logp > -np.inf
    values, logp = values[keep], logp[keep]
    if values.size == 0:
        return values, logp
    order = np.argsort(values, kind="stable")
    v, lp = values[order], logp[order]
    with np.errstate(invalid="ignore"):
        gaps = np.diff(v)
    starts = np.concatenate([[0], np.flatnonzero(gaps > tol) + 1])
    peak = np.maximum.reduceat(lp, starts)
    group = np.repeat(np.arange(starts.size), np.diff(np.append(starts, v.size)))
    sums = np.add.reduceat(np.exp(lp - peak[group]), starts)
    return v[starts], peak + np.log(sums)


def _pair_chunks(d: DivergenceSpec, n: int, k: int, workers: int | None):
    """Yield ``(a, b, stat_rows)`` for fixed row chunks of the pair table, in order."""
    table = _stat_matrix(d, n, k, workers)
    count = num_types(n, k)
    if table is not None:
        for a, b in _row_chunks(count):
            yield a, b, table[a:b]
        return
    probs = type_matrix(n, k) / n
    chunks = _row_chunks(count)
    nw = _workers(workers)
    with ThreadPoolExecutor(nw) as pool:
        # bounded look-ahead keeps memory flat while workers stay busy
        for start in range(0, len(chunks), nw):
            batch = chunks[start : start + nw]
            stats = pool.map(lambda ab: _stat_rows(d, n, k, ab[0], ab[1], probs), batch)
            for (a, b), rows in zip(batch, stats):
                yield a, b, rows


def statistic_distribution(
    d: DivergenceSpec,
    p: Distribution,
    n: int,
    budget: int = DEFAULT_PAIR_BUDGET,
    workers: int | None = None,
) -> StatDistribution:
    """Exact law of ``D(T_X||T_Y)`` for ``X^n, Y^n`` i.i.d. from ``p``."""
    k = p.k
    _check_budget(n, k, budget)
    logw = log_type_class_probs(type_matrix(n, k), p.probs)
    vals, lps = [], []
    for a, b, rows in _pair_chunks(d, n, k, workers):
        lp = logw[a:b, None] + logw[None, :]
        v, l = _merge(rows.ravel(), lp.ravel())
        vals.append(v)
        lps.append(l)
    v, l = _merge(np.concatenate(vals), np.concatenate(lps))
    return StatDistribution(v, l, n, k, d.name, p)


def exact_type1(
    d: DivergenceSpec, r: float, p: Distribution, n: int,
    budget: int = DEFAULT_PAIR_BUDGET, workers: int | None = None,
) -> float:
    """``log alpha_n``: log-probability under ``p`` that the statistic is ``>= r``."""
    if not r > 0:
        raise ValueError("threshold must be positive")
    return statistic_distribution(d, p, n, budget, workers).log_tail(r)


def exact_type2(
    d: DivergenceSpec, r: float, p1: Distribution, p2: Distribution, n: int,
    budget: int = DEFAULT_PAIR_BUDGET, workers: int | None = None,
) -> float:
    """``log beta_n``: log-probability under ``(p1, p2)`` that the statistic is ``< r``."""
    if not r > 0:
        raise ValueError("threshold must be positive")
    if p1.k != p2.k:
        raise ValueError("alphabet mismatch")
    k = p1.k
    _check_budget(n, k, budget)
    types = type_matrix(n, k)
    logw1 = log_type_class_probs(types, p1.probs)
    logw2 = log_type_class_probs(types, p2.probs)
    parts = []
    for a, b, rows in _pair_chunks(d, n, k, workers):
        lp = logw1[a:b, None] + logw2[None, :]
        sel = lp[rows < r]
        parts.append(logsumexp(sel) if sel.size else -np.inf)
    return float(logsumexp(parts))


def calibrate_exact(
    d: DivergenceSpec, p: Distribution, n: int, eps: float,
    budget: int = DEFAULT_PAIR_BUDGET, workers: int | None = None,
) -> float:
    """Smallest achievable statistic value ``v`` with ``P(stat >= v) <= eps``.

    Every threshold in ``(v_prev, v]`` defines the same test; ``v`` is the
    representative returned. A relative slack of ``1e-12`` absorbs rounding
    in the tail sums. When the atom at ``+inf`` alone exceeds ``eps`` no
    threshold is feasible and ``+inf`` (the infimum of the empty set) is
    returned; the test then rejects only infinite statistics.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    sd = statistic_distribution(d, p, n, budget, workers)
    tails = sd.log_tails()
    ok = np.flatnonzero((tails <= np.log(eps) + 1e-12) & (sd.values > 0))
    if ok.size:
        return float(sd.values[ok[0]])
    top = sd.values[-1]
    if np.isinf(top):
        return math.inf
    return float(np.nextafter(top, np.inf))


def error_report(
    d: DivergenceSpec, r: float, p: Distribution, p1: Distribution, p2: Distribution, n: int,
    budget: int = DEFAULT_PAIR_BUDGET, workers: int | None = None,
) -> ErrorReport:
    return ErrorReport(
        log_alpha=exact_type1(d, r, p, n, budget, workers),
        log_beta=exact_type2(d, r, p1, p2, n, budget, workers),
        threshold=float(r),
        n=n,
    )


def lemma1_sup_gap_exact(
    d: DivergenceSpec, p: Distribution, n: int,
    budget: int = DEFAULT_PAIR_BUDGET, workers: int | None = None,
) -> float:
    """Largest gap between the exact tail of ``(n/2) D(T_X||T_Y)`` and its generalized chi-square limit.

    The supremum runs over the positive finite achievable values of the scaled statistic.
    """
    g = GenChiSq(local_eigenvalues(d, p))
    sd = statistic_distribution(d, p, n, budget, workers)
    tails = np.exp(sd.log_tails())
    c = 0.5 * n * sd.values
    mask = (sd.values > 0) & np.isfinite(sd.values)
    gaps = [abs(t - genchisq_tail(g, ci)) for t, ci in zip(tails[mask], c[mask])]
    return float(max(gaps)) if gaps else 0.0
