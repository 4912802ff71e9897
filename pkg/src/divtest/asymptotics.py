"""Closed-form asymptotics of divergence tests and the optimization behind them.

Covers the Bhattacharyya geometry of the type-II exponent, the
second-order correction, the threshold expansion, the closed-form minimizer
of a linear functional over a ``Sigma_P`` ellipsoid with an independent
numeric oracle, the GLRT identity, and rounding of continuous minimizers to
nearby types.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .divergence import JS, KL, evaluate, sigma_matrix
from .genchisq import chisq_inv_tail
from .simplex import Distribution, TypeDistribution, rng_stream


def _as_probs(x: Distribution | np.ndarray) -> np.ndarray:
    return x.probs if isinstance(x, Distribution) else np.asarray(x, dtype=np.float64)


def bhattacharyya(p1: Distribution, p2: Distribution) -> float:
    """``-ln sum_z sqrt(P1(z) P2(z))``; ``+inf`` for disjoint supports."""
    a, b = _as_probs(p1), _as_probs(p2)
    if a.size != b.size:
        raise ValueError("alphabet mismatch")
    bc = float(np.sqrt(a * b).sum())
    if bc <= 0:
        return math.inf
    return max(0.0, -math.log(bc))


def p_star(p1: Distribution, p2: Distribution) -> Distribution:
    """Normalized pointwise geometric mean, the minimizer of ``KL(P||P1) + KL(P||P2)``."""
    g = np.sqrt(_as_probs(p1) * _as_probs(p2))
    total = g.sum()
    if total <= 0:
        raise ValueError("P1 and P2 have disjoint supports")
    return Distribution(g / total)


def kl_variance(p: Distribution, q: Distribution) -> float:
    """Variance under ``p`` of the log-likelihood ratio ``ln(p/q)``."""
    a, b = _as_probs(p), _as_probs(q)
    supp = a > 0
    if np.any(b[supp] <= 0):
        raise ValueError("P is not absolutely continuous with respect to Q")
    llr = np.log(a[supp] / b[supp])
    mean = float(np.dot(a[supp], llr))
    return float(np.dot(a[supp], (llr - mean) ** 2))


@dataclass(frozen=True)
class Prediction:
    """Two-term expansion ``-ln beta_n ~ n * first_order - sqrt(n) * second_order_coeff``."""

    bhattacharyya: float
    v1: float
    v2: float
    quantile: float
    eps: float
    k: int

    @property
    def first_order(self) -> float:
        return 2.0 * self.bhattacharyya

    @property
    def second_order_coeff(self) -> float:
        return math.sqrt(self.v1 + self.v2) * math.sqrt(self.quantile)

    def predicted_neg_log_beta(self, n: float) -> float:
        return n * self.first_order - math.sqrt(n) * self.second_order_coeff

    def to_dict(self) -> dict:
        d = asdict(self)
        d["first_order"] = self.first_order
        d["second_order_coeff"] = self.second_order_coeff
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def prediction(p1: Distribution, p2: Distribution, eps: float) -> Prediction:
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if p1.k != p2.k:
        raise ValueError("alphabet mismatch")
    if not (p1.interior and p2.interior):
        raise ValueError("the expansion needs interior P1 and P2")
    ps = p_star(p1, p2)
    return Prediction(
        bhattacharyya=bhattacharyya(p1, p2),
        v1=kl_variance(ps, p1),
        v2=kl_variance(ps, p2),
        quantile=chisq_inv_tail(p1.k - 1, eps),
        eps=float(eps),
        k=p1.k,
    )


def predict_neg_log_beta(p1: Distribution, p2: Distribution, eps: float, n: float) -> float:
    """``2 n D_B - sqrt(n (V1 + V2)) sqrt(Q^{-1}_{k-1}(eps))``; zero when ``P1 = P2``."""
    return prediction(p1, p2, eps).predicted_neg_log_beta(n)


def threshold_asymptotic(eta: float, k: int, eps: float, n: float) -> float:
    """Leading-order calibrated threshold ``(2 eta / n) Q^{-1}_{k-1}(eps)``."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    return 2.0 * eta / n * chisq_inv_tail(k - 1, eps)


def _log_ratio_vectors(p: np.ndarray, p1: np.ndarray, p2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    l1, l2 = np.log(p / p1), np.log(p / p2)
    return l1[:-1] - l1[-1], l2[:-1] - l2[-1]


@dataclass(frozen=True, eq=False)
class KktSolution:
    x_star: np.ndarray
    y_star: np.ndarray
    mu0: float
    ell_star: float
    c: np.ndarray
    d: np.ndarray

    def constraint_value(self, sigma: np.ndarray) -> float:
        return float(self.x_star @ sigma @ self.x_star + self.y_star @ sigma @ self.y_star)


def kkt_minimizer(p: Distribution, p1: Distribution, p2: Distribution, r: float) -> KktSolution:
    """Minimize ``c.x + d.y`` subject to ``x' Sigma x + y' Sigma y <= r`` in closed form.

    ``c`` and ``d`` are the reduced log-likelihood-ratio vectors of ``P``
    against ``P1`` and ``P2``; ``Sigma = sigma_matrix(P)``.
    """
    if not p.interior:
        raise ValueError("P must be interior")
    if r < 0:
        raise ValueError("r must be nonnegative")
    pp, a, b = p.probs, _as_probs(p1), _as_probs(p2)
    c, d = _log_ratio_vectors(pp, a, b)
    sigma = sigma_matrix(pp)
    sc, sd = np.linalg.solve(sigma, c), np.linalg.solve(sigma, d)
    q = float(c @ sc + d @ sd)
    if q <= 0:
        raise ValueError("c and d both vanish; the objective is constant")
    if r == 0:
        z = np.zeros_like(c)
        return KktSolution(z, z.copy(), math.inf, 0.0, c, d)
    scale = math.sqrt(r / q)
    x, y = -scale * sc, -scale * sd
    mu0 = math.sqrt(q) / (2.0 * math.sqrt(r))
    ell = -math.sqrt(r) * math.sqrt(kl_variance(pp, a) + kl_variance(pp, b))
    return KktSolution(x, y, mu0, ell, c, d)


def _sqrt_and_inv_sqrt(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(w)) @ v.T, (v / np.sqrt(w)) @ v.T


def ell_star_numeric(
    p: Distribution, p1: Distribution, p2: Distribution, r: float,
    restarts: int = 20, seed: int = 0, tol: float = 1e-10, max_iter: int = 10_000,
) -> float:
    """Projected-gradient oracle for the minimum of ``c.x + d.y`` over the ellipsoid.

    Works in whitened coordinates ``z = Sigma^{1/2} (x, y)`` where the feasible
    set is a ball of radius ``sqrt(r)``. For ``k = 2`` the boundary ellipse is
    also scanned by angle. Returns the best value found.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    pp = p.probs
    c, d = _log_ratio_vectors(pp, _as_probs(p1), _as_probs(p2))
    m = c.size
    sigma = sigma_matrix(pp)
    half, inv_half = _sqrt_and_inv_sqrt(sigma)
    g = np.concatenate([inv_half @ c, inv_half @ d])
    radius = math.sqrt(r)

    def obj(z: np.ndarray) -> float:
        return float(g @ z)

    def project(z: np.ndarray) -> np.ndarray:
        nz = np.linalg.norm(z)
        return z if nz <= radius else z * (radius / nz)

    best = 0.0
    rng = rng_stream(seed, 0)
    for _ in range(restarts):
        z = project(rng.standard_normal(2 * m) * radius)
        step = radius / max(np.linalg.norm(g), 1e-300)
        for _ in range(max_iter):
            f0 = obj(z)
            # Armijo backtracking on the projected step
            t = step
            while True:
                cand = project(z - t * g)
                if obj(cand) <= f0 + 1e-4 * g @ (cand - z) or t < 1e-16:
                    break
                t *= 0.5
            moved = np.linalg.norm(cand - z)
            z = cand
            step = min(2.0 * t, 1e6 * radius)
            if moved <= tol * max(radius, 1e-300):
                break
        best = min(best, obj(z))

    if m == 1:
        # x = sqrt(r/s) cos(theta), y = sqrt(r/s) sin(theta) traces the boundary
        s = float(sigma[0, 0])
        amp = math.sqrt(r / s)

        def edge(theta: float) -> float:
            return amp * (c[0] * math.cos(theta) + d[0] * math.sin(theta))

        thetas = np.linspace(0.0, 2 * math.pi, 721)
        i = int(np.argmin([edge(t) for t in thetas]))
        res = minimize_scalar(edge, bounds=(thetas[max(i - 1, 0)], thetas[min(i + 1, 720)]),
                              method="bounded", options={"xatol": 1e-12})
        best = min(best, float(res.fun))
    return best


def ell_linear(
    p: Distribution, t: Distribution | np.ndarray, r: Distribution | np.ndarray,
    p1: Distribution, p2: Distribution,
) -> float:
    """``sum (T - P) ln(P/P1) + sum (R - P) ln(P/P2)``."""
    pp = _as_probs(p)
    a, b = _as_probs(p1), _as_probs(p2)
    if min(pp.min(), a.min(), b.min()) <= 0:
        raise ValueError("P, P1 and P2 must be interior")
    tt, rr = _as_probs(t), _as_probs(r)
    return float(np.dot(tt - pp, np.log(pp / a)) + np.dot(rr - pp, np.log(pp / b)))


def _check_same_n(tx: TypeDistribution, ty: TypeDistribution) -> int:
    if tx.n != ty.n:
        raise ValueError(f"sample sizes differ: {tx.n} vs {ty.n}")
    if tx.k != ty.k:
        raise ValueError("alphabet mismatch")
    return tx.n


def glrt_statistic(tx: TypeDistribution, ty: TypeDistribution) -> float:
    """``4 n JS(T_X||T_Y)``."""
    n = _check_same_n(tx, ty)
    return 4.0 * n * evaluate(JS, tx.probs, ty.probs)


def robust_gof_statistic(tx: TypeDistribution, ty: TypeDistribution) -> float:
    """``-2 ln`` of the two-sample likelihood ratio, ``2n inf_P [KL(T_X||P) + KL(T_Y||P)]``.

    The infimum sits at the midpoint of the two types.
    """
    n = _check_same_n(tx, ty)
    s, t = tx.probs, ty.probs
    m = 0.5 * (s + t)
    return 2.0 * n * (evaluate(KL, s, m) + evaluate(KL, t, m))


def robust_gof_numeric(
    tx: TypeDistribution, ty: TypeDistribution, gap_tol: float = 1e-10, max_iter: int = 100_000
) -> float:
    """The same statistic with the infimum found iteratively instead of in closed form.

    Damped multiplicative-weights steps ``P <- P^{1/2} w^{1/2}`` (renormalized)
    from the uniform vector, stopped when the Frank-Wolfe duality gap of the
    convex objective falls below ``gap_tol``.
    """
    n = _check_same_n(tx, ty)
    s, t = tx.probs, ty.probs
    w = 0.5 * (s + t)
    supp = w > 0
    p = np.full(s.size, 1.0 / s.size)

    def objective(q: np.ndarray) -> float:
        out = 0.0
        for a in (s, t):
            mask = a > 0
            out += float(np.dot(a[mask], np.log(a[mask] / q[mask])))
        return out

    for _ in range(max_iter):
        # gradient of the objective is -2 w / p; the gap vs the best vertex is max(2w/p) - 2
        gap = float(np.max(2.0 * w[supp] / p[supp])) - 2.0
        if gap <= gap_tol:
            break
        p = np.sqrt(p * w)
        p /= p.sum()
    return 2.0 * n * objective(p)


@dataclass(frozen=True, eq=False)
class RoundedPair:
    tx: TypeDistribution
    ty: TypeDistribution
    alpha_bar: float
    quad_form: float
    kkt: KktSolution


def nearest_type_pair(
    p: Distribution, p1: Distribution, p2: Distribution, n: int, r_tilde: float
) -> RoundedPair:
    """Round the shrunk ellipsoid minimizer ``P + (1 - alpha_bar) x*`` to types with denominator ``n``.

    Coordinate ``i < k`` is floored when ``(Sigma x*)_i > 0`` and ceiled
    otherwise, so the rounding error never points along ``Sigma x*``; the last
    count restores the total ``n``. The shrink factor is
    ``min(1/2, 4 lambda_max(Sigma) (k - 1) / (n^2 r_tilde))``.
    """
    if n < 1 or not r_tilde > 0:
        raise ValueError("need n >= 1 and r_tilde > 0")
    sol = kkt_minimizer(p, p1, p2, r_tilde)
    sigma = sigma_matrix(p)
    k = p.k
    lam_max = float(np.linalg.eigvalsh(sigma)[-1])
    alpha_bar = min(0.5, 4.0 * lam_max * (k - 1) / (n * n * r_tilde))

    def round_one(v: np.ndarray) -> np.ndarray:
        target = n * (p.probs[:-1] + (1.0 - alpha_bar) * v)
        direction = sigma @ v
        head = np.where(direction > 0, np.floor(target), np.ceil(target)).astype(np.int64)
        counts = np.append(head, n - head.sum())
        if counts.min() < 0:
            raise ValueError(f"rounding left the simplex at n={n}; n is too small for this configuration")
        return counts

    tx = TypeDistribution(round_one(sol.x_star))
    ty = TypeDistribution(round_one(sol.y_star))
    xb = tx.probs[:-1] - p.probs[:-1]
    yb = ty.probs[:-1] - p.probs[:-1]
    quad = float(xb @ sigma @ xb + yb @ sigma @ yb)
    return RoundedPair(tx, ty, alpha_bar, quad, sol)
