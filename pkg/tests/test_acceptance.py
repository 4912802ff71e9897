"""End-to-end acceptance criteria, each checked at its stated tolerance and time budget.

Run under pytest, or directly with ``python tests/test_acceptance.py`` for the
one-line-per-criterion report alone.
"""
from __future__ import annotations

import math
import time
from typing import Callable

import numpy as np
import pytest

from divtest.asymptotics import (
    ell_linear,
    ell_star_numeric,
    glrt_statistic,
    kkt_minimizer,
    nearest_type_pair,
    p_star,
    prediction,
    robust_gof_numeric,
    robust_gof_statistic,
)
from divtest.divergence import (
    CHI2,
    JS,
    KL,
    SQL2,
    common_invariance_constant,
    evaluate,
    invariance_constant,
    parse_divergence,
    sigma_matrix,
)
from divtest.exact import calibrate_exact, exact_type1, exact_type2, lemma1_sup_gap_exact
from divtest.genchisq import GenChiSq, chisq_inv_tail, chisq_tail, genchisq_sample, genchisq_tail
from divtest.montecarlo import mc_error, statistic_ecdf_gap
from divtest.simplex import TypeDistribution, make_distribution, rng_stream

RESULTS: list[str] = []

HALF = make_distribution([0.5, 0.5])
SKEW = make_distribution([0.9, 0.1])


def fd_local_matrix(d, p: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Plain central-difference half Hessian of D(P + e || P) in reduced coordinates."""
    m = p.size - 1

    def f(e: np.ndarray) -> float:
        return evaluate(d, p + np.append(e, -e.sum()), p)

    out = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            ei, ej = np.eye(m)[i] * h, np.eye(m)[j] * h
            out[i, j] = (f(ei + ej) - f(ei - ej) - f(ej - ei) + f(-ei - ej)) / (4 * h * h)
    return out / 2


def criterion_1() -> tuple[bool, str]:
    rng = np.random.default_rng(101)
    gap_id = gap_num = 0.0
    for _ in range(200):
        n, k = int(rng.integers(1, 51)), int(rng.integers(2, 6))
        tx = TypeDistribution(rng.multinomial(n, rng.dirichlet(np.ones(k))))
        ty = TypeDistribution(rng.multinomial(n, rng.dirichlet(np.ones(k))))
        closed = robust_gof_statistic(tx, ty)
        gap_id = max(gap_id, abs(closed - glrt_statistic(tx, ty)) / n)
        gap_num = max(gap_num, abs(robust_gof_numeric(tx, ty) - closed))
    ok = gap_id <= 1e-8 and gap_num <= 1e-6
    return ok, f"max |robust-glrt|/n={gap_id:.2e}, max |numeric-closed|={gap_num:.2e}"


def criterion_2() -> tuple[bool, str]:
    rng = np.random.default_rng(202)
    ps = []
    for i in range(50):
        k = 2 + i % 4
        ps.append(make_distribution(rng.dirichlet(2 * np.ones(k)) + 0.02))
    js = [invariance_constant(JS, p) for p in ps]
    js_ok = all(e is not None and abs(e - 0.125) <= 1e-4 for e in js)
    details = [f"JS max|eta-0.125|={max(abs(e - 0.125) for e in js if e is not None):.1e}"]
    spread_ok = True
    for d in (KL, parse_divergence("renyi:0.5"), CHI2):
        etas = np.array([invariance_constant(d, p) or np.nan for p in ps])
        spread = float((etas.max() - etas.min()) / abs(etas.max())) if np.all(np.isfinite(etas)) else math.inf
        # independent oracle: raw central differences at one P, compared against eta * Sigma
        p = ps[7].probs
        fd = fd_local_matrix(d, p)
        oracle_err = float(np.max(np.abs(fd - etas.mean() * sigma_matrix(p))) / np.max(np.abs(fd)))
        spread_ok &= spread <= 1e-4 and oracle_err <= 1e-4
        details.append(f"{d.name} eta={etas.mean():.6f} spread={spread:.1e} fd={oracle_err:.1e}")
    uniform = {k: make_distribution(np.ones(k)) for k in range(2, 6)}
    sql2_ok = True
    for p in ps:
        if p.k == 2:
            # any 1x1 matrix is a multiple of Sigma, so compare the constant across P
            sql2_ok &= common_invariance_constant(SQL2, [p, uniform[2]]) is None
        else:
            sql2_ok &= invariance_constant(SQL2, p) is None
    details.append(f"SqL2 non-invariant at all 50: {sql2_ok}")
    return js_ok and spread_ok and sql2_ok, "; ".join(details)


def criterion_3() -> tuple[bool, str]:
    worst = 0.0
    for eta in (0.125, 0.5, 1.0):
        for m in range(1, 7):
            g = GenChiSq([eta] * m)
            for c in np.linspace(0.05, 8 * eta * m, 20):
                worst = max(worst, abs(genchisq_tail(g, c) - chisq_tail(m, c / eta)))
    rng = np.random.default_rng(303)
    worst_z = 0.0
    for case in range(20):
        m = int(rng.integers(2, 7))
        w = rng.uniform(0.05, 2.0, m)
        g = GenChiSq(w)
        c = float(w.sum() * rng.uniform(0.5, 2.5))
        s = genchisq_sample(g, rng_stream(3030, case), size=10**6)
        e = float((s >= c).mean())
        tail = genchisq_tail(g, c)
        se = math.sqrt(tail * (1 - tail) / s.size)
        worst_z = max(worst_z, abs(e - tail) / se)
    return worst <= 1e-8 and worst_z <= 3, f"reduction err={worst:.1e}, Imhof vs MC worst z={worst_z:.2f}"


def criterion_4() -> tuple[bool, str]:
    gaps = [lemma1_sup_gap_exact(JS, HALF, n) for n in (10, 20, 40, 80)]
    decreasing = all(b < a for a, b in zip(gaps, gaps[1:]))
    sql2 = statistic_ecdf_gap(SQL2, make_distribution([0.7, 0.3]), 1000, 10**5, 404)
    ok = decreasing and gaps[-1] <= 0.05 and sql2 <= 0.05
    return ok, f"JS gaps n=10,20,40,80: {', '.join(f'{g:.4f}' for g in gaps)}; SqL2 ecdf gap n=1000: {sql2:.4f}"


def criterion_5() -> tuple[bool, str]:
    q = 2 * 0.125 * chisq_inv_tail(1, 0.2)
    ratios = [n * calibrate_exact(JS, HALF, n, 0.2) / q for n in (25, 50, 100, 200)]
    dist = [abs(r - 1) for r in ratios]
    monotone = all(b <= a for a, b in zip(dist, dist[1:]))
    ok = monotone and 0.85 <= ratios[-1] <= 1.15
    return ok, f"ratios n=25,50,100,200: {', '.join(f'{r:.4f}' for r in ratios)}"


def criterion_6() -> tuple[bool, str]:
    pred = prediction(HALF, SKEW, 0.2)
    res = []
    for n in (40, 80, 160, 320):
        r = calibrate_exact(JS, HALF, n, 0.2)
        res.append((-exact_type2(JS, r, HALF, SKEW, n) - pred.predicted_neg_log_beta(n)) / math.sqrt(n))
    ok = all(abs(b) < abs(a) for a, b in zip(res, res[1:]))
    return ok, f"residual/sqrt(n) n=40,80,160,320: {', '.join(f'{x:.4f}' for x in res)}"


def criterion_7() -> tuple[bool, str]:
    n = 300
    r = n**-0.5
    target = 2 * 0.11157177565710485
    beta = mc_error(SQL2, r, HALF, SKEW, n, 10**5, 707, "type2")
    alpha = mc_error(SQL2, r, HALF, HALF, n, 10**5, 708, "type1")
    rate = -math.log(beta.estimate) / n if beta.estimate > 0 else math.inf
    ok = abs(rate - target) <= 0.15 * target and alpha.estimate <= 0.05
    return ok, (f"MC beta={beta.estimate:.3g} ({beta.trials} trials), -ln(beta)/n={rate:.4f} vs {target:.5f}; "
                f"alpha={alpha.estimate:.3g}")


def criterion_8() -> tuple[bool, str]:
    rng = np.random.default_rng(808)
    worst = worst_c = 0.0
    for _ in range(50):
        k = int(rng.integers(2, 6))
        p, p1, p2 = (make_distribution(rng.dirichlet(np.ones(k))) for _ in range(3))
        r = float(rng.uniform(1e-3, 0.5))
        sol = kkt_minimizer(p, p1, p2, r)
        worst = max(worst, abs(sol.ell_star - ell_star_numeric(p, p1, p2, r)))
        worst_c = max(worst_c, abs(sol.constraint_value(sigma_matrix(p)) - r))
    return worst <= 1e-6 and worst_c <= 1e-10, f"max |closed-numeric|={worst:.1e}, constraint err={worst_c:.1e}"


def criterion_9() -> tuple[bool, str]:
    p = p_star(HALF, SKEW)

    def scaled_gap(n: int):
        pair = nearest_type_pair(p, HALF, SKEW, n, 0.96 / n)
        gx = np.append(pair.kkt.x_star, -pair.kkt.x_star.sum())
        gy = np.append(pair.kkt.y_star, -pair.kkt.y_star.sum())
        cont = ell_linear(p, p.probs + gx, p.probs + gy, HALF, SKEW)
        rounded = ell_linear(p, pair.tx.probs, pair.ty.probs, HALF, SKEW)
        return pair, n * abs(cont - rounded)

    # constant fit once at the first grid point: per-count rounding plus the shrink term
    n0 = 100
    pair0, _ = scaled_gap(n0)
    kappa = float(np.abs(pair0.kkt.c).sum() + np.abs(pair0.kkt.d).sum() + n0 * pair0.alpha_bar * abs(pair0.kkt.ell_star))
    inside, worst = True, 0.0
    for n in range(100, 1601):
        pair, g = scaled_gap(n)
        inside &= pair.tx.n == n and pair.ty.n == n and pair.quad_form <= 0.96 / n
        worst = max(worst, g)
    return inside and worst <= kappa, f"all inside={inside}, max scaled gap={worst:.3f}, kappa={kappa:.3f}"


def criterion_10() -> tuple[bool, str]:
    # configuration stream fixed before any result was seen
    rng = np.random.default_rng(2026)
    names = ["js", "kl", "sql2", "chi2", "renyi:0.5", "fdiv:hellinger"]
    worst, fails = 0.0, 0
    for i in range(30):
        k, n = int(rng.integers(2, 4)), int(rng.integers(5, 31))
        d = parse_divergence(names[i % len(names)])
        p1 = make_distribution(rng.dirichlet(2 * np.ones(k)))
        p2 = make_distribution(0.5 * p1.probs + 0.5 * rng.dirichlet(2 * np.ones(k)))
        eps = float(rng.uniform(0.05, 0.3))
        r = calibrate_exact(d, p1, n, eps)
        cases = (("type1", p1, math.exp(exact_type1(d, r, p1, n))), ("type2", p2, math.exp(exact_type2(d, r, p1, p2, n))))
        for which, alt, exact in cases:
            est = mc_error(d, r, p1, alt, n, 10**5, 1000 + i, which)
            se = math.sqrt(exact * (1 - exact) / est.trials)
            z = abs(est.estimate - exact) / se if se > 0 else (0.0 if est.estimate == exact else math.inf)
            worst = max(worst, z)
            fails += z > 3
    return fails == 0, f"60 comparisons, worst z={worst:.2f}, beyond 3 SE: {fails}"


CRITERIA: dict[int, tuple[str, Callable[[], tuple[bool, str]], float]] = {
    1: ("GLRT identity", criterion_1, 10),
    2: ("invariance constants", criterion_2, 30),
    3: ("generalized chi-square", criterion_3, 60),
    4: ("statistic law convergence", criterion_4, 120),
    5: ("threshold expansion", criterion_5, 60),
    6: ("second-order prediction", criterion_6, 120),
    7: ("first-order universality", criterion_7, 120),
    8: ("KKT closed form", criterion_8, 30),
    9: ("type rounding", criterion_9, 10),
    10: ("exact/MC cross-validation", criterion_10, 180),
}


def run_criterion(number: int) -> tuple[bool, str]:
    name, fn, limit = CRITERIA[number]
    start = time.perf_counter()
    ok, detail = fn()
    elapsed = time.perf_counter() - start
    in_time = elapsed < limit
    passed = ok and in_time
    line = (f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {name}: {detail} "
            f"[{elapsed:.1f}s / {limit:.0f}s{'' if in_time else ' OVER BUDGET'}]")
    RESULTS.append(line)
    print(line)
    return passed, line


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    passed, line = run_criterion(number)
    assert passed, line


if __name__ == "__main__":
    for number in sorted(CRITERIA):
        run_criterion(number)
