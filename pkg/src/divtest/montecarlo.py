"""Monte Carlo error probabilities, thresholds and statistic ECDFs.

Trials are split into fixed-size blocks; block ``b`` draws from the
counter-based stream ``(seed, b)``. Results therefore do not depend on how
blocks are scheduled across workers.
"""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import gammaincc

from .divergence import DivergenceSpec, evaluate, local_eigenvalues
from .genchisq import GenChiSq, genchisq_tail
from .simplex import Distribution, rng_stream

BLOCK_SIZE = 10_000
MIN_TAIL_HITS = 50
# above this many distinct statistic values the limit CDF is interpolated
EXACT_CDF_POINTS = 256


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    std_error: float
    trials: int
    seed: int
    block_trials: tuple[int, ...] = field(default=(), repr=False)
    block_counts: tuple[int, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "std_error": self.std_error, "trials": self.trials, "seed": self.seed}

    def blocks_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["block", "trials", "count"])
        for b, (t, c) in enumerate(zip(self.block_trials, self.block_counts)):
            w.writerow([b, t, c])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _block_sizes(trials: int, block_size: int) -> list[int]:
    full, rest = divmod(trials, block_size)
    return [block_size] * full + ([rest] if rest else [])


def _map_blocks(fn, sizes: list[int], workers: int | None) -> list:
    nw = max(1, workers if workers is not None else (os.cpu_count() or 1))
    if nw == 1 or len(sizes) == 1:
        return [fn(b, s) for b, s in enumerate(sizes)]
    with ThreadPoolExecutor(nw) as pool:
        return list(pool.map(fn, range(len(sizes)), sizes))


def _stat_block(d: DivergenceSpec, p1: Distribution, p2: Distribution, n: int, seed: int, block: int, size: int) -> np.ndarray:
    # the test only sees the types, so drawing the two count vectors directly
    # has the same law as drawing the sequences and tallying them
    rng = rng_stream(seed, block)
    tx = rng.multinomial(n, p1.probs, size=size) / n
    ty = rng.multinomial(n, p2.probs, size=size) / n
    return np.asarray(evaluate(d, tx, ty))


def simulate_statistic(
    d: DivergenceSpec, p1: Distribution, p2: Distribution, n: int, trials: int, seed: int,
    workers: int | None = None, block_size: int = BLOCK_SIZE,
) -> np.ndarray:
    """``trials`` draws of ``D(T_X||T_Y)`` with ``X^n ~ p1``, ``Y^n ~ p2``, in block order."""
    if trials < 1 or n < 1:
        raise ValueError("need trials >= 1 and n >= 1")
    if p1.k != p2.k:
        raise ValueError("alphabet mismatch")
    sizes = _block_sizes(trials, block_size)
    parts = _map_blocks(lambda b, s: _stat_block(d, p1, p2, n, seed, b, s), sizes, workers)
    return np.concatenate(parts)


def mc_error(
    d: DivergenceSpec, r: float, p1: Distribution, p2: Distribution, n: int, trials: int, seed: int,
    which: str = "type2", workers: int | None = None, block_size: int = BLOCK_SIZE,
) -> McEstimate:
    """Estimate ``alpha_n`` (``which="type1"``, needs ``p1 == p2``) or ``beta_n`` (``"type2"``)."""
    if which not in ("type1", "type2"):
        raise ValueError("which must be 'type1' or 'type2'")
    if which == "type1" and p1 != p2:
        raise ValueError("type-I error is defined under the null; pass P1 == P2")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    sizes = _block_sizes(trials, block_size)

    def count(b: int, s: int) -> int:
        stat = _stat_block(d, p1, p2, n, seed, b, s)
        hits = stat >= r if which == "type1" else stat < r
        return int(np.count_nonzero(hits))

    counts = _map_blocks(count, sizes, workers)
    est = sum(counts) / trials
    return McEstimate(
        estimate=est,
        std_error=math.sqrt(est * (1.0 - est) / trials),
        trials=trials,
        seed=seed,
        block_trials=tuple(sizes),
        block_counts=tuple(counts),
    )


def mc_calibrate(
    d: DivergenceSpec, p: Distribution, n: int, eps: float, trials: int, seed: int,
    workers: int | None = None, block_size: int = BLOCK_SIZE,
) -> float:
    """Smallest simulated positive value ``v`` whose empirical tail ``P(stat >= v)`` is at most ``eps``."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if trials * eps < MIN_TAIL_HITS:
        raise ValueError(f"trials * eps = {trials * eps:g} < {MIN_TAIL_HITS}; the tail is not resolved")
    s = np.sort(simulate_statistic(d, p, p, n, trials, seed, workers, block_size))
    vals = np.unique(s)
    tail_counts = trials - np.searchsorted(s, vals, side="left")
    ok = np.flatnonzero((tail_counts <= eps * trials) & (vals > 0))
    if ok.size:
        return float(vals[ok[0]])
    return float(np.nextafter(vals[-1], np.inf))


def _limit_cdf(g: GenChiSq, x: np.ndarray) -> np.ndarray:
    """CDF of the generalized chi-square at sorted nonnegative ``x``."""
    eta = g.common_weight()
    if eta is not None:
        return 1.0 - gammaincc(0.5 * g.m, 0.5 * x / eta)
    if x.size <= EXACT_CDF_POINTS:
        return np.array([1.0 - genchisq_tail(g, float(c)) for c in x])
    # square-root spacing resolves the steep start of the CDF near zero
    top = float(x[-1])
    grid = (np.linspace(0.0, 1.0, EXACT_CDF_POINTS) ** 2) * top
    vals = np.array([1.0 - genchisq_tail(g, float(c)) for c in grid])
    return np.clip(PchipInterpolator(grid, vals)(x), 0.0, 1.0)


def statistic_ecdf_gap(
    d: DivergenceSpec, p: Distribution, n: int, trials: int, seed: int,
    workers: int | None = None, block_size: int = BLOCK_SIZE,
) -> float:
    """Kolmogorov-Smirnov distance between the ECDF of ``(n/2) D(T_X||T_Y)`` under ``p`` and its limit law."""
    if trials < 10_000:
        raise ValueError("need at least 10^4 trials")
    g = GenChiSq(local_eigenvalues(d, p))
    x = np.sort(0.5 * n * simulate_statistic(d, p, p, n, trials, seed, workers, block_size))
    x = x[np.isfinite(x)]
    vals, counts = np.unique(x, return_counts=True)
    above = np.cumsum(counts) / trials
    below = above - counts / trials
    f = _limit_cdf(g, vals)
    # both one-sided limits of the ECDF at every jump
    return float(max(np.max(np.abs(above - f)), np.max(np.abs(below - f))))
