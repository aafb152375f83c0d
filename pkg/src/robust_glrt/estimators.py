"""Robust shrinkage (regularized Tyler) scatter estimator and its companions.

The estimator is the unique solution of

    C = (1 - rho) * (1/n) sum_i x_i x_i^* / ((1/N) x_i^* C^{-1} x_i) + rho * I

for ``rho`` in ``(max(0, 1 - 1/c), 1]`` with ``c = N/n``. It is computed by
plain Picard iteration from the identity, optionally with Anderson mixing on
the vector of quadratic forms ``(1/N) x_i^* C^{-1} x_i``. The same iteration
runs on stacks of independent problems (leading batch axis) for the Monte
Carlo engine; each problem freezes as soon as it meets the tolerance, so a
result never depends on what else was in its batch.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import MissingTruth, NonConvergence, RhoOutOfRange, ZeroSample
from .model import Dataset


@dataclass(frozen=True)
class SolverConfig:
    """Stopping rule for the fixed-point iteration.

    ``anderson_depth = 0`` is plain Picard iteration. A positive depth mixes
    that many previous iterates, which typically cuts the iteration count by
    a factor of five or more for small ``rho``; the fixed point and the
    stopping test are unchanged.
    """

    tolerance: float = 1e-9
    max_iterations: int = 1000
    anderson_depth: int = 0

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.anderson_depth < 0:
            raise ValueError("anderson_depth must be >= 0")


def rho_lower_bound(c: float) -> float:
    """Infimum ``max(0, 1 - 1/c)`` of admissible shrinkage values."""
    return max(0.0, 1.0 - 1.0 / c)


def check_rho(rho: float, c: float, kappa: float = 0.0) -> float:
    """Return ``rho`` if it lies in ``[lower + kappa, 1]`` (lower end open when
    ``kappa == 0``), otherwise raise :class:`RhoOutOfRange`."""
    rho = float(rho)
    lo = rho_lower_bound(c)
    ok = (lo + kappa <= rho <= 1.0) if kappa > 0 else (lo < rho <= 1.0)
    if not ok or not np.isfinite(rho):
        raise RhoOutOfRange(f"rho={rho} outside admissible range ({lo} + {kappa}, 1] for c={c:.6g}")
    return rho


def rho_grid(c: float, num: int = 50, kappa: float = 0.01) -> np.ndarray:
    """Uniform grid on ``R_kappa = [kappa + max(0, 1 - 1/c), 1]``."""
    lo = rho_lower_bound(c) + kappa
    if lo > 1.0:
        raise RhoOutOfRange(f"kappa={kappa} leaves an empty range for c={c}")
    return np.linspace(lo, 1.0, num)


@dataclass(frozen=True)
class ScatterEstimate:
    rho: float
    matrix: np.ndarray
    iterations: int
    final_residual: float

    @property
    def N(self) -> int:
        return self.matrix.shape[0]


def _as_samples(data) -> np.ndarray:
    X = data.X if isinstance(data, Dataset) else np.asarray(data)
    if X.ndim != 2:
        raise ValueError(f"samples must be an N x n array, got shape {X.shape}")
    return X


def _check_nonzero(X: np.ndarray) -> None:
    norms = np.sum(np.abs(X) ** 2, axis=-2)
    if np.any(norms == 0):
        raise ZeroSample("at least one observation is the zero vector")


def _hermitian_part(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def quadratic_forms(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """``(1/N) x_i^* C^{-1} x_i`` for every column, via one Cholesky factor."""
    N = X.shape[-2]
    Y = np.linalg.inv(np.linalg.cholesky(C)) @ X
    return np.sum(Y.real ** 2 + Y.imag ** 2, axis=-2) / N


def weighted_scatter(X: np.ndarray, q: np.ndarray, rho: float) -> np.ndarray:
    """``(1 - rho) (1/n) sum_i x_i x_i^* / q_i + rho I``."""
    N, n = X.shape[-2], X.shape[-1]
    out = (1.0 - rho) * ((X / q[..., None, :]) @ np.conj(np.swapaxes(X, -1, -2))) / n
    idx = np.arange(N)
    out[..., idx, idx] += rho
    return _hermitian_part(out)


def fixed_point_map(X: np.ndarray, C: np.ndarray, rho: float) -> np.ndarray:
    """One application of the estimator's right-hand side. Works on stacks."""
    return weighted_scatter(X, quadratic_forms(X, C), rho)


def fixed_point_residual(X: np.ndarray, C: np.ndarray, rho: float) -> float:
    """Relative Frobenius residual ``||C - RHS(C)|| / ||C||``."""
    return float(np.linalg.norm(C - fixed_point_map(X, C, rho)) / np.linalg.norm(C))


def _start(B: int, N: int, init: Optional[np.ndarray]) -> np.ndarray:
    if init is None:
        return np.broadcast_to(np.eye(N, dtype=complex), (B, N, N)).copy()
    return np.array(np.broadcast_to(init, (B, N, N)), dtype=complex)


def _relative_change(new: np.ndarray, old: np.ndarray) -> np.ndarray:
    return np.linalg.norm(new - old, axis=(-2, -1)) / np.linalg.norm(new, axis=(-2, -1))


def fit_batch(X: np.ndarray, rho: float, cfg: SolverConfig = SolverConfig(),
              init: Optional[np.ndarray] = None):
    """Fixed-point iteration on a stack ``X`` of shape ``(B, N, n)``.

    Returns ``(C, iterations, residual, converged)``; problems that do not
    converge keep their last iterate and are flagged instead of raising.
    """
    if cfg.anderson_depth > 0:
        return _fit_batch_anderson(X, rho, cfg, init)
    B, N, n = X.shape
    C = _start(B, N, init)
    iters = np.zeros(B, dtype=int)
    resid = np.full(B, np.inf)
    active = np.ones(B, dtype=bool)
    for k in range(1, cfg.max_iterations + 1):
        ids = np.flatnonzero(active)
        if ids.size == 0:
            break
        C_old = C[ids]
        C_new = fixed_point_map(X[ids], C_old, rho)
        r = _relative_change(C_new, C_old)
        C[ids] = C_new
        iters[ids] = k
        resid[ids] = r
        active[ids[r < cfg.tolerance]] = False
    return C, iters, resid, ~active


def _fit_batch_anderson(X: np.ndarray, rho: float, cfg: SolverConfig,
                        init: Optional[np.ndarray]):
    """Anderson-mixed iteration on the quadratic forms ``q``.

    Any ``q > 0`` gives a positive definite ``C(q)``. The mixed iterate is
    accepted when it stays within a factor two of the plain image ``F(q)``
    entrywise, which keeps it positive and stops the overall scale drifting;
    otherwise the plain step is taken.
    A problem whose residual climbs far above its best value so far drops
    back to plain iteration for good.
    Each step also forms the plain image ``RHS(C(q))``; that image is what is
    returned, and its relative change from ``C(q)`` is the stopping residual,
    exactly as in plain iteration.
    """
    B, N, n = X.shape
    depth = cfg.anderson_depth
    # Frobenius norms of weighted scatters come from the n x n kernel
    # |x_i^* x_j|^2, so the plain image never has to be formed explicitly.
    K = np.abs(np.conj(np.swapaxes(X, -1, -2)) @ X) ** 2
    energy = np.diagonal(K, axis1=-2, axis2=-1) ** 0.5
    weight = (1.0 - rho) / n

    def frob(Kb, d):
        return np.einsum("bi,bij,bj->b", d, Kb, d)

    q = quadratic_forms(X, _start(B, N, init))
    iters = np.zeros(B, dtype=int)
    resid = np.full(B, np.inf)
    active = np.ones(B, dtype=bool)
    plain = np.zeros(B, dtype=bool)
    best = np.full(B, np.inf)
    image = np.empty((B, n))
    hist_f, hist_g = [], []  # images F(q) and residuals F(q) - q, full batch rows
    for k in range(1, cfg.max_iterations + 1):
        ids = np.flatnonzero(active)
        if ids.size == 0:
            break
        Xa, qa, Ka = X[ids], q[ids], K[ids]
        fq = quadratic_forms(Xa, weighted_scatter(Xa, qa, rho))
        image[ids] = fq
        w = 1.0 / fq
        gap = weight * np.sqrt(np.maximum(frob(Ka, w - 1.0 / qa), 0.0))
        size = np.sqrt(weight ** 2 * frob(Ka, w) + 2.0 * weight * rho * np.sum(w * energy[ids], axis=1) + rho * rho * N)
        r = gap / size
        plain[ids] |= ~(r <= 100.0 * best[ids])
        best[ids] = np.minimum(best[ids], r)
        f_full, g_full = np.zeros((B, n)), np.zeros((B, n))
        f_full[ids], g_full[ids] = fq, fq - qa
        hist_f, hist_g = (hist_f + [f_full])[-depth - 1:], (hist_g + [g_full])[-depth - 1:]
        q_new = fq
        if len(hist_g) > 1:
            dG = np.stack([b[ids] - a[ids] for a, b in zip(hist_g, hist_g[1:])], axis=-1)
            dF = np.stack([b[ids] - a[ids] for a, b in zip(hist_f, hist_f[1:])], axis=-1)
            gram = np.swapaxes(dG, -1, -2) @ dG
            eye = np.eye(gram.shape[-1])
            scale = np.trace(gram, axis1=-2, axis2=-1)[:, None, None]
            gram = gram + (1e-12 * scale + np.finfo(float).tiny) * eye
            coef = np.linalg.solve(gram, np.swapaxes(dG, -1, -2) @ (fq - qa)[..., None])[..., 0]
            mixed = fq - np.einsum("bnm,bm->bn", dF, coef)
            ratio = mixed / fq
            good = np.all((ratio > 0.5) & (ratio < 2.0), axis=1) & ~plain[ids]
            q_new = np.where(good[:, None], mixed, fq)
        done = r < cfg.tolerance
        q[ids] = q_new
        iters[ids] = k
        resid[ids] = r
        active[ids[done]] = False
    # the plain image C(F(q)) of the last evaluated point, as in plain iteration
    C = weighted_scatter(X, image, rho)
    return C, iters, resid, ~active


def robust_shrinkage_fit(data: Union[Dataset, np.ndarray], rho: float,
                         cfg: SolverConfig = SolverConfig(),
                         init: Optional[np.ndarray] = None) -> ScatterEstimate:
    """Regularized Tyler estimate ``C_hat(rho)`` of the scatter of ``data``.

    Parameters
    ----------
    data : Dataset or ndarray of shape (N, n)
        Observations as columns.
    rho : float
        Shrinkage toward identity, in ``(max(0, 1 - n/N), 1]``.
    cfg : SolverConfig
        Relative Frobenius-change tolerance and iteration cap.
    init : ndarray, optional
        Starting point; identity by default. The fixed point is unique, so
        this only affects speed.

    Raises
    ------
    RhoOutOfRange, ZeroSample, NonConvergence
    """
    X = _as_samples(data)
    N, n = X.shape
    rho = check_rho(rho, N / n)
    _check_nonzero(X)
    C, iters, resid, ok = fit_batch(X[None], rho, cfg, None if init is None else init[None])
    if not ok[0]:
        raise NonConvergence(cfg.max_iterations, float(resid[0]))
    return ScatterEstimate(rho=rho, matrix=C[0], iterations=int(iters[0]), final_residual=float(resid[0]))


def sample_covariance(data: Union[Dataset, np.ndarray]) -> np.ndarray:
    """``(1/n) sum_i x_i x_i^*``."""
    X = _as_samples(data)
    S = X @ X.conj().T / X.shape[1]
    return 0.5 * (S + S.conj().T)


def deterministic_equivalent_S(truth, gamma: float, rho: float, c: float,
                               normalized: bool = False) -> np.ndarray:
    """Random-matrix surrogate of the robust estimator built from ground truth.

    With ``normalized=False`` returns
    ``(1/gamma) * (1-rho)/(1-(1-rho)c) * (1/n) sum z_i z_i^* + rho I``.
    With ``normalized=True`` returns ``(1-rho) (1/n) sum z_i z_i^* + rho I``;
    pass ``rho_bar`` as ``rho`` to obtain the rescaled equivalent (``gamma``
    and ``c`` are then unused).
    """
    if isinstance(truth, Dataset):
        if truth.Z is None:
            raise MissingTruth("dataset carries no ground-truth z_i")
        Z = truth.Z
    elif truth is None:
        raise MissingTruth("ground-truth z_i required")
    else:
        Z = np.asarray(truth)
    N, n = Z.shape
    G = Z @ Z.conj().T / n
    G = 0.5 * (G + G.conj().T)
    if normalized:
        coef = 1.0 - rho
    else:
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        denom = 1.0 - (1.0 - rho) * c
        if denom <= 0:
            raise RhoOutOfRange(f"1 - (1 - rho) c = {denom} <= 0")
        coef = (1.0 - rho) / denom / gamma
    return coef * G + rho * np.eye(N)


def shrinkage_alpha(rho: float, c: float) -> float:
    """``(1 - rho) / (1 - (1 - rho) c)``."""
    denom = 1.0 - (1.0 - rho) * c
    if denom <= 0:
        raise RhoOutOfRange(f"1 - (1 - rho) c = {denom} <= 0 for rho={rho}, c={c}")
    return (1.0 - rho) / denom
