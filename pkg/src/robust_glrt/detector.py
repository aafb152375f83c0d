"""GLRT statistic, plug-in false-alarm variance, and shrinkage selection.

The detector compares

    T_N(rho) = |y^* C^{-1} p| / sqrt(y^* C^{-1} y * p^* C^{-1} p)

to a threshold, with ``C`` the robust shrinkage estimate built on noise-only
secondary data. Under H0, ``sqrt(N) T_N`` is close to Rayleigh with a variance
that can be estimated from ``C`` alone, which is what the selector minimizes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (AllPointsFailed, DegenerateDenominator, GlrtError,
                     MissingTruth, SingularEstimate, ZeroSample)
from .estimators import (ScatterEstimate, SolverConfig, check_rho,
                         robust_shrinkage_fit)
from .model import Dataset


def _matrix(est) -> np.ndarray:
    return est.matrix if isinstance(est, ScatterEstimate) else np.asarray(est)


def _cholesky(C: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError as exc:
        raise SingularEstimate("scatter estimate is not positive definite") from exc


@dataclass(frozen=True)
class GlrtStatistic:
    rho: Optional[float]
    value: float
    y_Cinv_p: complex
    y_Cinv_y: float
    p_Cinv_p: float


def glrt_statistic(y, p, est: Union[ScatterEstimate, np.ndarray]) -> GlrtStatistic:
    """Evaluate ``T_N`` for one observation ``y`` and steering vector ``p``."""
    C = _matrix(est)
    L = _cholesky(C)
    u = solve_triangular(L, np.asarray(y, dtype=complex), lower=True)
    v = solve_triangular(L, np.asarray(p, dtype=complex), lower=True)
    ycp = complex(np.vdot(u, v))
    ycy = float(np.vdot(u, u).real)
    pcp = float(np.vdot(v, v).real)
    T = abs(ycp) / np.sqrt(ycy * pcp)
    rho = est.rho if isinstance(est, ScatterEstimate) else None
    return GlrtStatistic(rho=rho, value=float(min(T, 1.0)), y_Cinv_p=ycp, y_Cinv_y=ycy, p_Cinv_p=pcp)


def glrt_values(L: np.ndarray, Y: np.ndarray, p: np.ndarray) -> np.ndarray:
    """``T_N`` for every column of ``Y`` given the Cholesky factor ``L``."""
    U = solve_triangular(L, Y, lower=True)
    v = solve_triangular(L, p, lower=True)
    num = np.abs(v.conj() @ U)
    den = np.sqrt(np.sum(U.real ** 2 + U.imag ** 2, axis=0) * np.vdot(v, v).real)
    return np.minimum(num / den, 1.0)


def decide(stat, threshold: float) -> bool:
    """True (declare H1) iff the statistic strictly exceeds the threshold."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    value = stat.value if isinstance(stat, GlrtStatistic) else float(stat)
    return value > threshold


def empirical_rho_bar(est: ScatterEstimate) -> float:
    """Data-driven effective shrinkage ``rho / (tr(C_hat)/N)``."""
    C = est.matrix
    return float(est.rho / (np.trace(C).real / C.shape[0]))


def plugin_terms(C: np.ndarray, p: np.ndarray):
    """Spectral functionals needed by the plug-in variance, from one Cholesky
    factorization. Accepts a single matrix or a stack.

    Returns ``(p^* C^{-1} p, p^* C^{-2} p, tr(C^{-1})/N, tr(C)/N)``.
    """
    N = C.shape[-1]
    L = np.linalg.cholesky(C)
    Linv = np.linalg.inv(L)
    v = Linv @ p
    w = np.conj(np.swapaxes(Linv, -1, -2)) @ v[..., None]
    pc1p = np.sum(v.real ** 2 + v.imag ** 2, axis=-1)
    pc2p = np.sum(w.real ** 2 + w.imag ** 2, axis=(-2, -1))
    tr_inv = np.sum(Linv.real ** 2 + Linv.imag ** 2, axis=(-2, -1)) / N
    tr = np.trace(C, axis1=-2, axis2=-1).real / N
    return pc1p, pc2p, tr_inv, tr


def _plugin_sigma2(pc1p, pc2p, tr_inv, tr, rb, c):
    num = 1.0 - rb * (pc2p / pc1p) * tr
    d1 = 1.0 - c + c * rb * tr_inv * tr
    d2 = 1.0 - rb * tr_inv * tr
    return 0.5 * num / (d1 * d2), d1 * d2


def empirical_sigma2(est: ScatterEstimate, p, rb: float, c: float) -> float:
    """Consistent estimate of the limiting Rayleigh variance for ``rho < 1``.

    ``rb`` is normally :func:`empirical_rho_bar` of the same estimate; ``c``
    is ``N/n`` of the secondary data.
    """
    if est.rho >= 1.0:
        raise ValueError("rho = 1 has a removable singularity; use empirical_sigma2_at_one")
    terms = plugin_terms(est.matrix, np.asarray(p, dtype=complex))
    s2, den = _plugin_sigma2(*terms, rb, c)
    if not den > 0:
        raise DegenerateDenominator(f"plug-in variance denominator {den:.3e} <= 0")
    return float(s2)


def normalized_samples(X: np.ndarray) -> np.ndarray:
    """``sqrt(N) x_i / ||x_i||``: texture-free proxies of the ``z_i``."""
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0):
        raise ZeroSample("at least one observation is the zero vector")
    return X * (np.sqrt(X.shape[0]) / norms)


def empirical_sigma2_at_one(data: Union[Dataset, np.ndarray], p, use_truth: bool = False) -> float:
    """Plug-in variance at ``rho = 1``: ``0.5 p^* G p / (tr(G)/N)`` with ``G``
    the Gram average of normalized samples (or of the true ``z_i``)."""
    if use_truth:
        Z = data.Z if isinstance(data, Dataset) else None
        if Z is None:
            raise MissingTruth("use_truth requires a dataset with ground truth")
    else:
        X = data.X if isinstance(data, Dataset) else np.asarray(data)
        Z = normalized_samples(X)
    p = np.asarray(p, dtype=complex)
    N = Z.shape[0]
    proj = p.conj() @ Z
    num = np.mean(proj.real ** 2 + proj.imag ** 2)
    tr = np.mean(np.sum(Z.real ** 2 + Z.imag ** 2, axis=0)) / N
    return float(0.5 * num / tr)


@dataclass
class RhoSweepResult:
    grid: np.ndarray
    rho_bar_hat: np.ndarray
    sigma2_hat: np.ndarray
    rho_star: float
    index: int
    failures: dict = field(default_factory=dict)

    def predicted_far(self, gammas) -> np.ndarray:
        """``exp(-gamma^2 / (2 sigma2_hat))``, shape ``(len(grid), len(gammas))``."""
        g = np.atleast_1d(np.asarray(gammas, dtype=float))
        return np.exp(-g[None, :] ** 2 / (2.0 * self.sigma2_hat[:, None]))


def select_rho_star(data: Union[Dataset, np.ndarray], p, grid: Sequence[float],
                    cfg: SolverConfig = SolverConfig(), warm_start: bool = True) -> RhoSweepResult:
    """Fit the estimator over ``grid`` and pick the minimizer of the plug-in
    variance (ties go to the smallest ``rho``).

    Points where the fit fails are recorded in ``failures`` and skipped.
    Fits run from the largest ``rho`` down, each started from the previous
    solution when ``warm_start`` is set.
    """
    X = data.X if isinstance(data, Dataset) else np.asarray(data)
    N, n = X.shape
    c = N / n
    grid = np.sort(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("rho grid is empty")
    for r in grid:
        check_rho(r, c)
    p = np.asarray(p, dtype=complex)
    rbh = np.full(grid.size, np.nan)
    s2 = np.full(grid.size, np.nan)
    failures = {}
    init = None
    for k in range(grid.size - 1, -1, -1):
        r = grid[k]
        try:
            if r == 1.0:
                rbh[k] = 1.0
                s2[k] = empirical_sigma2_at_one(X, p)
                continue
            est = robust_shrinkage_fit(X, r, cfg, init=init)
            init = est.matrix if warm_start else None
            rbh[k] = empirical_rho_bar(est)
            s2[k] = empirical_sigma2(est, p, rbh[k], c)
        except GlrtError as exc:
            failures[float(r)] = str(exc)
    if np.all(np.isnan(s2)):
        raise AllPointsFailed(f"every grid point failed: {failures}")
    idx = int(np.nanargmin(s2))
    return RhoSweepResult(grid=grid, rho_bar_hat=rbh, sigma2_hat=s2, rho_star=float(grid[idx]),
                          index=idx, failures=failures)
