"""Divergence registry, local quadratic structure and invariance detection.

A divergence here is any smooth discrepancy ``D(S||R)`` on the probability
simplex that vanishes only on the diagonal. Near the diagonal it behaves like
a quadratic form ``(S - R)^T A (S - R)`` in the first ``k - 1`` coordinates,
and it is *invariant* when ``A`` is a fixed multiple ``eta`` of the inverse
multinomial covariance ``Sigma_P``.

All evaluation routines broadcast over leading axes: ``S`` and ``R`` may be
arrays of shape ``(..., k)``.
"""
from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .simplex import Distribution

KINDS = ("KL", "JS", "Renyi", "FDiv", "ChiSq", "SqL2")


@dataclass(frozen=True)
class FGenerator:
    """Convex generator ``f`` of an f-divergence ``sum_i R_i f(S_i / R_i)``.

    ``f`` must accept numpy arrays. ``f2_at_1`` is ``f''(1)`` when known in
    closed form; otherwise it is differentiated numerically.
    ``slope_at_inf`` is ``lim f(t)/t`` and fixes the value of terms where
    ``R_i = 0 < S_i``; ``None`` means that limit is infinite.
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    f2_at_1: float | None = None
    slope_at_inf: float | None = None

    def second_derivative_at_1(self) -> float:
        if self.f2_at_1 is not None:
            return self.f2_at_1
        h = 1e-4
        f = self.f
        vals = [float(f(np.array(1.0 + s * h))) for s in (-2, -1, 0, 1, 2)]
        # five-point stencil, O(h^4)
        return (-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) / (12 * h * h)


def _hellinger(t: np.ndarray) -> np.ndarray:
    return (np.sqrt(t) - 1.0) ** 2


def _triangular(t: np.ndarray) -> np.ndarray:
    return (t - 1.0) ** 2 / (t + 1.0)


# total variation is deliberately absent: |t - 1| is not twice differentiable
GENERATORS: dict[str, FGenerator] = {
    "hellinger": FGenerator("hellinger", _hellinger, f2_at_1=0.5, slope_at_inf=1.0),
    "triangular": FGenerator("triangular", _triangular, f2_at_1=1.0, slope_at_inf=1.0),
}


@dataclass(frozen=True)
class DivergenceSpec:
    kind: str
    alpha: float | None = None
    generator: FGenerator | None = field(default=None, compare=True)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown divergence kind {self.kind!r}")
        if self.kind == "Renyi":
            if self.alpha is None:
                raise ValueError("Renyi divergence needs an order alpha")
            if not (self.alpha > 0) or self.alpha == 1 or not math.isfinite(self.alpha):
                raise ValueError("Renyi order must be positive, finite and != 1")
        elif self.alpha is not None:
            raise ValueError(f"{self.kind} takes no alpha parameter")
        if self.kind == "FDiv":
            if self.generator is None:
                raise ValueError("f-divergence needs a generator")
        elif self.generator is not None:
            raise ValueError(f"{self.kind} takes no generator")

    @property
    def name(self) -> str:
        if self.kind == "Renyi":
            return f"renyi:{self.alpha:g}"
        if self.kind == "FDiv":
            return f"fdiv:{self.generator.name}"
        return {"KL": "kl", "JS": "js", "ChiSq": "chi2", "SqL2": "sql2"}[self.kind]

    @property
    def symmetric(self) -> bool:
        return self.kind in ("JS", "SqL2") or (
            self.kind == "FDiv" and self.generator.name in ("hellinger", "triangular")
        )

    def __str__(self) -> str:
        return self.name


def parse_divergence(text: str) -> DivergenceSpec:
    """Parse ``kl``, ``js``, ``renyi:<alpha>``, ``chi2``, ``sql2`` or ``fdiv:<name>``."""
    key, _, arg = text.strip().lower().partition(":")
    simple = {"kl": "KL", "js": "JS", "chi2": "ChiSq", "sql2": "SqL2"}
    if key in simple:
        if arg:
            raise ValueError(f"{key} takes no parameter")
        return DivergenceSpec(simple[key])
    if key == "renyi":
        try:
            alpha = float(arg)
        except ValueError:
            raise ValueError(f"bad Renyi order in {text!r}") from None
        return DivergenceSpec("Renyi", alpha=alpha)
    if key == "fdiv":
        if arg not in GENERATORS:
            raise ValueError(f"unknown f-divergence generator {arg!r}; known: {sorted(GENERATORS)}")
        return DivergenceSpec("FDiv", generator=GENERATORS[arg])
    raise ValueError(f"cannot parse divergence {text!r}")


KL = DivergenceSpec("KL")
JS = DivergenceSpec("JS")
CHI2 = DivergenceSpec("ChiSq")
SQL2 = DivergenceSpec("SqL2")


def _probs(x: Distribution | np.ndarray) -> np.ndarray:
    return x.probs if isinstance(x, Distribution) else np.asarray(x, dtype=np.float64)


def _kl(s: np.ndarray, r: np.ndarray) -> np.ndarray:
    # log1p of the relative gap keeps near-diagonal values accurate to ~1 ulp
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(r > 0, (s - r) / r, np.inf)
        terms = np.where(s > 0, s * np.log1p(rel), 0.0)
    return terms.sum(axis=-1)


def _js(s: np.ndarray, r: np.ndarray) -> np.ndarray:
    m = 0.5 * (s + r)
    return 0.5 * _kl(s, m) + 0.5 * _kl(r, m)


def _renyi(s: np.ndarray, r: np.ndarray, alpha: float) -> np.ndarray:
    # sum_i S^a R^(1-a) - 1 accumulated as sum_i R_i expm1(a log1p((S_i - R_i)/R_i))
    # so that nearly equal arguments do not cancel catastrophically
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(r > 0, (s - r) / r, 0.0)
        terms = np.where(r > 0, r * np.expm1(alpha * np.log1p(rel)), 0.0)
    excess = terms.sum(axis=-1)
    if alpha > 1:
        blowup = np.any((r == 0) & (s > 0), axis=-1)
        excess = np.where(blowup, np.inf, excess)
    with np.errstate(divide="ignore"):
        out = np.log1p(excess) / (alpha - 1.0)
    # log1p(-1) = -inf happens exactly for disjoint supports when alpha < 1
    return np.where(np.isnan(out), np.inf, np.maximum(out, 0.0))


def _chisq(s: np.ndarray, r: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(r > 0, (s - r) ** 2 / r, np.where(s > 0, np.inf, 0.0))
    return terms.sum(axis=-1)


def _fdiv(s: np.ndarray, r: np.ndarray, gen: FGenerator) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = np.where(r > 0, r * gen.f(np.where(r > 0, s / r, 1.0)), 0.0)
        slope = np.inf if gen.slope_at_inf is None else gen.slope_at_inf
        edge = np.where((r == 0) & (s > 0), s * slope, 0.0)
    return (inner + edge).sum(axis=-1)


def _sql2(s: np.ndarray, r: np.ndarray) -> np.ndarray:
    return ((s - r) ** 2).sum(axis=-1)


def evaluate(
    d: DivergenceSpec, s: Distribution | np.ndarray, r: Distribution | np.ndarray
) -> float | np.ndarray:
    """Evaluate ``D(S||R)``; ``+inf`` is a legitimate value on the boundary.

    Conventions: ``0 ln(0/q) = 0``; ``p ln(p/0) = +inf`` for KL, chi-square and
    Renyi orders above one; JS and squared L2 are always finite; Renyi orders
    below one are infinite only for disjoint supports.
    """
    sp, rp = _probs(s), _probs(r)
    if sp.shape[-1] != rp.shape[-1]:
        raise ValueError(f"alphabet mismatch: {sp.shape[-1]} vs {rp.shape[-1]}")
    if d.kind == "KL":
        out = _kl(sp, rp)
    elif d.kind == "JS":
        out = _js(sp, rp)
    elif d.kind == "Renyi":
        out = _renyi(sp, rp, d.alpha)
    elif d.kind == "ChiSq":
        out = _chisq(sp, rp)
    elif d.kind == "FDiv":
        out = _fdiv(sp, rp, d.generator)
    else:
        out = _sql2(sp, rp)
    if np.ndim(out) == 0:
        return float(out)
    return out


def sigma_matrix(p: Distribution | np.ndarray) -> np.ndarray:
    """Inverse reduced multinomial covariance: ``1/P_i + 1/P_k`` on the diagonal, ``1/P_k`` off it."""
    probs = _probs(p)
    if probs.min() <= 0:
        raise ValueError("Sigma_P needs an interior distribution")
    k = probs.size
    return np.full((k - 1, k - 1), 1.0 / probs[-1]) + np.diag(1.0 / probs[:-1])


def _hessian_fd(g: Callable[[np.ndarray], np.ndarray], m: int, h: float) -> np.ndarray:
    """Central second differences of ``g`` at the origin of R^m (``g`` is batched)."""
    eye = np.eye(m)
    pts = [np.zeros(m)]
    for i in range(m):
        pts += [h * eye[i], -h * eye[i]]
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    for i, j in pairs:
        pts += [h * (eye[i] + eye[j]), h * (eye[i] - eye[j]), h * (eye[j] - eye[i]), -h * (eye[i] + eye[j])]
    vals = np.asarray(g(np.array(pts)), dtype=np.float64)
    f0 = vals[0]
    hess = np.empty((m, m))
    for i in range(m):
        hess[i, i] = (vals[1 + 2 * i] - 2.0 * f0 + vals[2 + 2 * i]) / (h * h)
    base = 1 + 2 * m
    for idx, (i, j) in enumerate(pairs):
        pp, pm, mp, mm = vals[base + 4 * idx : base + 4 * idx + 4]
        hess[i, j] = hess[j, i] = (pp - pm - mp + mm) / (4.0 * h * h)
    return hess


def local_matrix(d: DivergenceSpec, p: Distribution | np.ndarray, step: float | None = None) -> np.ndarray:
    """Half the Hessian of ``S -> D(S||P)`` at ``S = P`` in reduced coordinates.

    Coordinate ``i < k`` is perturbed by adding to ``S_i`` and subtracting the
    same amount from ``S_k``. Central differences at steps ``h`` and ``h/2``
    are combined by one Richardson extrapolation level.
    """
    probs = _probs(p)
    if probs.min() <= 0:
        raise ValueError("local matrix needs an interior distribution")
    k = probs.size
    h = 1e-4 * probs.min() if step is None else float(step)
    if h <= 0:
        raise ValueError("step must be positive")
    if 2 * h >= probs.min():
        raise ValueError("finite-difference perturbation leaves the simplex interior")

    def g(reduced: np.ndarray) -> np.ndarray:
        full = np.concatenate([reduced, -reduced.sum(axis=-1, keepdims=True)], axis=-1)
        return evaluate(d, probs + full, probs)

    coarse = _hessian_fd(g, k - 1, h)
    fine = _hessian_fd(g, k - 1, h / 2)
    hess = (4.0 * fine - coarse) / 3.0
    a = 0.5 * hess
    return 0.5 * (a + a.T)


def invariance_constant(
    d: DivergenceSpec, p: Distribution | np.ndarray, tol: float = 1e-5
) -> float | None:
    """Return ``eta`` if ``A_{D,P} = eta * Sigma_P`` up to relative Frobenius ``tol``, else ``None``."""
    a = local_matrix(d, p)
    sigma = sigma_matrix(p)
    eta = float(np.trace(np.linalg.solve(sigma, a)) / a.shape[0])
    resid = np.linalg.norm(a - eta * sigma)
    return eta if resid <= tol * np.linalg.norm(a) else None


def common_invariance_constant(
    d: DivergenceSpec, ps: list[Distribution] | list[np.ndarray], tol: float = 1e-5
) -> float | None:
    """Shared ``eta`` across all ``ps``, or ``None``.

    For ``k = 2`` every local matrix is a multiple of ``Sigma_P``, so only the
    comparison across distributions can reveal a non-invariant divergence.
    """
    etas = [invariance_constant(d, p, tol) for p in ps]
    if not etas or any(e is None for e in etas):
        return None
    lo, hi = min(etas), max(etas)
    if hi - lo > tol * abs(hi):
        return None
    return float(np.mean(etas))


def _inv_sqrt_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v / np.sqrt(w)) @ v.T


def weight_eigenvalues(a: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Eigenvalues of ``Sigma^{-1/2} A Sigma^{-1/2}``, sorted descending."""
    s = _inv_sqrt_psd(sigma)
    lam = np.linalg.eigvalsh(s @ a @ s)[::-1]
    if lam.min() <= 0:
        raise ValueError("local matrix is not positive definite; finite-difference step is probably off")
    return lam


def local_eigenvalues(d: DivergenceSpec, p: Distribution | np.ndarray) -> np.ndarray:
    """Weights of the generalized chi-square limit of ``(n/2) D(T_X||T_Y)`` under ``P``."""
    return weight_eigenvalues(local_matrix(d, p), sigma_matrix(p))
