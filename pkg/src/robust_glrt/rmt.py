"""Scalar random-matrix fixed points and the limiting false-alarm variance.

All integrals against the spectral measure of ``C`` are eigenvalue averages,
which is exact since that measure is the empirical eigenvalue distribution.
Both scalar equations are solved by bisection on a strictly monotone map.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from .errors import BracketFailure, DegenerateDenominator, RhoOutOfRange
from .estimators import rho_lower_bound, shrinkage_alpha
from .model import CovarianceModel

RESIDUAL_TOL = 1e-12
_XTOL = 1e-300
_RTOL = 4 * np.finfo(float).eps


def _bisect_increasing(f, lo: float, hi: float, what: str) -> float:
    """Root of an increasing ``f`` with ``f(lo) < 0``; ``hi`` is grown
    geometrically until the sign changes."""
    if f(lo) > 0:
        raise BracketFailure(f"{what}: f(lo={lo:.3e}) > 0")
    for _ in range(2000):
        if f(hi) >= 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BracketFailure(f"{what}: no sign change found up to {hi:.3e}")
    root = bisect(f, lo, hi, xtol=_XTOL, rtol=_RTOL, maxiter=4000)
    if abs(f(root)) > RESIDUAL_TOL:
        raise BracketFailure(f"{what}: residual {abs(f(root)):.3e} exceeds {RESIDUAL_TOL}")
    return float(root)


def _eigenvalues(model) -> np.ndarray:
    if isinstance(model, CovarianceModel):
        return model.eigenvalues
    return np.asarray(model, dtype=float)


def gamma_equation(lam: np.ndarray, rho: float, gamma: float) -> float:
    """``(1/N) sum lam / (gamma rho + (1 - rho) lam) - 1``; decreasing in gamma."""
    return float(np.mean(lam / (gamma * rho + (1.0 - rho) * lam)) - 1.0)


def solve_gamma(model, rho: float) -> float:
    """Unique positive ``gamma_N(rho)`` balancing ``1 = int t/(gamma rho + (1-rho)t)``.

    ``model`` may be a :class:`CovarianceModel` or a raw eigenvalue array.
    """
    lam = _eigenvalues(model)
    if not 0.0 < rho <= 1.0:
        raise RhoOutOfRange(f"rho={rho} must lie in (0, 1]")
    if rho == 1.0:
        return float(np.mean(lam))
    if np.all(lam == lam[0]):
        # single atom: t/(gamma rho + (1-rho) t) = 1  <=>  gamma = t
        return float(lam[0])
    lo = lam.min() * np.finfo(float).tiny
    return _bisect_increasing(lambda g: -gamma_equation(lam, rho, g), lo, 1.0, "gamma_N")


def rho_bar(rho: float, c: float, gamma: float) -> float:
    """Effective shrinkage ``rho / (rho + alpha(rho) / gamma)``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return float(rho / (rho + shrinkage_alpha(rho, c) / gamma))


def stieltjes_equation(lam: np.ndarray, rb: float, c: float, m: float) -> float:
    """``m (rb + c (1/N) sum (1-rb) lam / (1 + (1-rb) lam m)) - 1``; increasing in m > 0."""
    t = (1.0 - rb) * lam
    return float(m * (rb + c * np.mean(t / (1.0 + t * m))) - 1.0)


def solve_stieltjes(model, rb: float, c: float, max_halvings: int | None = None) -> float:
    """Positive solution ``m(-rho_bar)`` of the Stieltjes fixed point on the
    negative real axis."""
    lam = _eigenvalues(model)
    if not 0.0 < rb <= 1.0:
        raise ValueError(f"rho_bar={rb} must lie in (0, 1]")
    if rb == 1.0:
        return 1.0
    f = lambda m: stieltjes_equation(lam, rb, c, m)  # noqa: E731
    if max_halvings is None:
        return _bisect_increasing(f, 0.0, 1.0 / rb, "m(-rho_bar)")
    lo, hi = 0.0, 1.0 / rb
    # g(1/rb) >= 0 always, so [0, 1/rb] brackets the root
    for _ in range(max_halvings):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _steering_weights(model: CovarianceModel, p) -> np.ndarray:
    """``|U^* p|^2``: the steering vector's energy in each eigendirection."""
    q = model.eigenvectors.conj().T @ np.asarray(p, dtype=complex)
    return q.real ** 2 + q.imag ** 2


def theoretical_sigma2(model: CovarianceModel, p, rb: float, m: float, c: float) -> float:
    """Limiting Rayleigh variance of ``sqrt(N) T_N`` under H0.

    With ``Q = (I + (1 - rb) m C)^{-1}``::

        sigma2 = 0.5 * p^* C Q^2 p
                 / (p^* Q p * tr(C Q)/N * (1 - c (1-rb)^2 m^2 tr(C^2 Q^2)/N))

    Everything is evaluated in the eigenbasis of ``C``.
    """
    lam = model.eigenvalues
    w = _steering_weights(model, p)
    qd = 1.0 / (1.0 + (1.0 - rb) * m * lam)
    bracket = 1.0 - c * (1.0 - rb) ** 2 * m ** 2 * np.mean(lam ** 2 * qd ** 2)
    if not 0.0 < bracket <= 1.0:
        raise DegenerateDenominator(f"1 - c(1-rho_bar)^2 m^2 tr(C^2Q^2)/N = {bracket:.3e}")
    num = np.sum(w * lam * qd ** 2)
    den = np.sum(w * qd) * np.mean(lam * qd) * bracket
    return float(0.5 * num / den)


def rayleigh_tail(threshold, sigma2):
    """``P(R > threshold) = exp(-threshold^2 / (2 sigma2))`` for Rayleigh(sigma)."""
    threshold = np.asarray(threshold, dtype=float)
    out = np.exp(-threshold ** 2 / (2.0 * np.asarray(sigma2, dtype=float)))
    return float(out) if out.ndim == 0 else out


def rayleigh_cdf(t, sigma2):
    t = np.maximum(np.asarray(t, dtype=float), 0.0)
    return -np.expm1(-t ** 2 / (2.0 * sigma2))


def rayleigh_pdf(t, sigma2):
    t = np.maximum(np.asarray(t, dtype=float), 0.0)
    return t / sigma2 * np.exp(-t ** 2 / (2.0 * sigma2))


@dataclass(frozen=True)
class TheoryContext:
    c: float
    rho: float
    gamma: float
    alpha: float
    rho_bar: float
    m: float
    sigma2: float
    resolvent_diag: np.ndarray  # eigenvalues of Q_N(rho_bar) in the eigenbasis of C

    def far(self, gammas):
        """Predicted ``P(sqrt(N) T_N > gamma)`` for each threshold."""
        return rayleigh_tail(gammas, self.sigma2)


def theory_context(model: CovarianceModel, p, rho: float, c: float) -> TheoryContext:
    """Every limiting quantity for one shrinkage value."""
    if not rho_lower_bound(c) < rho <= 1.0:
        raise RhoOutOfRange(f"rho={rho} outside ({rho_lower_bound(c)}, 1] for c={c}")
    g = solve_gamma(model, rho)
    a = shrinkage_alpha(rho, c)
    rb = rho_bar(rho, c, g)
    m = solve_stieltjes(model, rb, c)
    s2 = theoretical_sigma2(model, p, rb, m, c)
    qd = 1.0 / (1.0 + (1.0 - rb) * m * model.eigenvalues)
    return TheoryContext(c=c, rho=rho, gamma=g, alpha=a, rho_bar=rb, m=m, sigma2=s2, resolvent_diag=qd)
