"""Elliptical data model: population scatter, textures, and dataset synthesis.

Observations follow ``x_i = sqrt(tau_i) * C^{1/2} w_i`` with ``w_i`` standard
circular complex Gaussian and the scatter normalized to ``tr(C)/N = 1``.
Samples are stored column-wise, so a dataset is an ``N x n`` complex array.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

HERMITIAN_TOL = 1e-12


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for the stream identified by ``(seed, *key)``.

    Streams with distinct keys are statistically independent, and each one
    depends only on its key, so trials can run in any order or in parallel.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *key])))


@dataclass(frozen=True)
class CovarianceModel:
    """Trace-normalized Hermitian positive-definite scatter matrix.

    Use :meth:`from_matrix` (or the named constructors) rather than the raw
    initializer; it enforces ``tr(C)/N = 1`` and computes the spectrum.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    label: str = "custom"

    @classmethod
    def from_matrix(cls, matrix, label: str = "custom") -> "CovarianceModel":
        C = np.array(matrix, dtype=complex)
        if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] == 0:
            raise ValueError(f"covariance must be a non-empty square matrix, got shape {C.shape}")
        scale = np.max(np.abs(C))
        if np.max(np.abs(C - C.conj().T)) > HERMITIAN_TOL * max(scale, 1.0):
            raise ValueError("covariance matrix is not Hermitian")
        C = 0.5 * (C + C.conj().T)
        N = C.shape[0]
        trace = np.trace(C).real / N
        if trace <= 0:
            raise ValueError("covariance matrix must have positive trace")
        C = C / trace
        lam, U = np.linalg.eigh(C)
        if lam[0] <= 0:
            raise ValueError(f"covariance matrix is not positive definite (min eigenvalue {lam[0]:.3e})")
        return cls(matrix=C, eigenvalues=lam, eigenvectors=U, label=label)

    @property
    def N(self) -> int:
        return self.matrix.shape[0]

    def sqrt(self) -> np.ndarray:
        """Symmetric square root ``C^{1/2}``."""
        U = self.eigenvectors
        return (U * np.sqrt(self.eigenvalues)) @ U.conj().T

    def is_identity(self) -> bool:
        return bool(np.all(self.eigenvalues == 1.0))


def identity_model(N: int) -> CovarianceModel:
    if N < 1:
        raise ValueError("N must be >= 1")
    eye = np.eye(N, dtype=complex)
    return CovarianceModel(matrix=eye, eigenvalues=np.ones(N), eigenvectors=eye.copy(), label="identity")


def build_toeplitz_ar(a: float, N: int) -> CovarianceModel:
    """AR(1)-type Toeplitz scatter ``[C]_ij = a^|i-j|``.

    The diagonal is already one, so the trace normalization is a no-op.
    """
    if not 0.0 < a < 1.0:
        raise ValueError(f"AR coefficient must lie in (0, 1), got {a}")
    if N < 1:
        raise ValueError("N must be >= 1")
    idx = np.arange(N)
    C = a ** np.abs(idx[:, None] - idx[None, :])
    return CovarianceModel.from_matrix(C, label=f"toeplitz({a})")


@dataclass(frozen=True)
class TextureModel:
    """Law of the positive texture scalars ``tau_i``.

    ``law`` is one of ``"unit"`` (all ones), ``"inverse-gamma"`` (``1/tau`` is
    Gamma distributed with mean one, controlled by ``shape``), or
    ``"discrete"`` (``values`` drawn with probabilities ``weights``).
    """

    law: str = "unit"
    shape: float = 2.0
    values: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        if self.law not in ("unit", "inverse-gamma", "discrete"):
            raise ValueError(f"unknown texture law {self.law!r}")
        if self.law == "inverse-gamma" and not self.shape > 0:
            raise ValueError("inverse-gamma shape must be positive")
        if self.law == "discrete":
            if len(self.values) == 0 or len(self.values) != len(self.weights):
                raise ValueError("discrete texture needs matching non-empty values and weights")
            if min(self.values) <= 0:
                raise ValueError("discrete texture values must be positive")
            if min(self.weights) < 0 or not np.isclose(sum(self.weights), 1.0):
                raise ValueError("discrete texture weights must be a probability vector")

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.law == "unit":
            return np.ones(size)
        if self.law == "inverse-gamma":
            return 1.0 / rng.gamma(self.shape, 1.0 / self.shape, size=size)
        return rng.choice(np.asarray(self.values, dtype=float), size=size, p=np.asarray(self.weights))

    def describe(self) -> dict:
        if self.law == "unit":
            return {"law": "unit"}
        if self.law == "inverse-gamma":
            return {"law": "inverse-gamma", "shape": self.shape}
        return {"law": "discrete", "values": list(self.values), "weights": list(self.weights)}


@dataclass(frozen=True)
class Dataset:
    """``n`` observations stacked as columns of ``X``.

    ``Z`` and ``tau`` hold the simulation ground truth (``X = sqrt(tau) Z``)
    and are ``None`` for data of unknown origin.
    """

    X: np.ndarray
    Z: Optional[np.ndarray] = None
    tau: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def c(self) -> float:
        return self.N / self.n

    @property
    def has_truth(self) -> bool:
        return self.Z is not None


def circular_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard circular complex Gaussian entries, ``E|w|^2 = 1``."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) * np.sqrt(0.5)


def sample_dataset(
    model: CovarianceModel,
    n: int,
    texture: Optional[TextureModel] = None,
    seed: int = 0,
    key: Sequence[int] = (),
) -> Dataset:
    """Draw ``n`` elliptical observations with ground truth attached.

    ``key`` selects an independent stream under the same ``seed`` (e.g. a
    trial index); the output is a pure function of ``(seed, key)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    texture = texture or TextureModel()
    rng = make_rng(seed, *key)
    W = circular_gaussian(rng, (model.N, n))
    Z = model.sqrt() @ W
    tau = texture.draw(rng, n)
    X = Z * np.sqrt(tau)
    meta = {"N": model.N, "n": n, "covariance": model.label, "texture": texture.describe(),
            "seed": seed, "key": list(key)}
    return Dataset(X=X, Z=Z, tau=tau, meta=meta)


def uniform_steering(N: int) -> np.ndarray:
    """Unit-norm steering vector with all entries equal to ``N^{-1/2}``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return np.full(N, 1.0 / np.sqrt(N), dtype=complex)


def as_steering(p) -> np.ndarray:
    """Validate a user steering vector; it must already have unit norm."""
    p = np.asarray(p, dtype=complex).ravel()
    if abs(np.linalg.norm(p) - 1.0) > 1e-12:
        raise ValueError("steering vector must have unit Euclidean norm")
    return p
