"""
Reproducing kernels, Gram matrices and kernel expansions.

Points are handled as 2-D arrays of shape ``(n, dim)``.  A scalar is a
point in one dimension and a 1-D array of length ``n`` is read as ``n``
one-dimensional points, so ``gram(k, [1.0, 2.0])`` does what it looks like.

Kernels are immutable; every operation here is a pure function of its
arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import DimensionError, ParameterError

__all__ = [
    "Kernel",
    "LinearKernel",
    "PolynomialKernel",
    "GaussianKernel",
    "DictionaryKernel",
    "KappaBound",
    "KernelExpansion",
    "predict_many",
    "as_points",
    "eval_kernel",
    "gram",
    "expansion_eval",
    "rkhs_norm_sq",
    "kappa",
    "kernel_from_spec",
    "PSD_TOL",
]

#: relative eigenvalue tolerance (times trace) for the PSD check
PSD_TOL = 1e-9


def as_points(X, dim: int | None = None) -> np.ndarray:
    """Coerce ``X`` to a float array of shape ``(n, d)``."""
    A = np.asarray(X, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    elif A.ndim == 1:
        A = A[:, None] if dim in (None, 1) else A[None, :]
    elif A.ndim != 2:
        raise DimensionError(f"points must be at most 2-D, got shape {A.shape}")
    if dim is not None and A.shape[1] != dim:
        raise DimensionError(f"expected points of dimension {dim}, got {A.shape[1]}")
    return A


def _as_point(x, dim: int | None) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    if a.ndim != 1:
        raise DimensionError(f"a single point must be scalar or 1-D, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise DimensionError(f"expected a point of dimension {dim}, got {a.shape[0]}")
    return a


@dataclass(frozen=True)
class Kernel:
    """Base class.  Subclasses implement :meth:`_cross`."""

    dim: int | None = field(default=None, kw_only=True)

    def _cross(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _diag(self, A: np.ndarray) -> np.ndarray:
        return np.einsum("ii->i", self._cross(A, A)).copy()

    def __call__(self, x, x2) -> float:
        return eval_kernel(self, x, x2)

    def cross(self, X, Y) -> np.ndarray:
        """Matrix ``K(X_i, Y_j)`` of shape ``(len(X), len(Y))``."""
        A = as_points(X, self.dim)
        B = as_points(Y, self.dim)
        if A.shape[1] != B.shape[1]:
            raise DimensionError(
                f"point dimensions differ: {A.shape[1]} vs {B.shape[1]}")
        return self._cross(A, B)

    def diag(self, X) -> np.ndarray:
        """``K(x_i, x_i)`` for every point."""
        return self._diag(as_points(X, self.dim))

    @property
    def analytic_kappa(self) -> float | None:
        """``sup_x sqrt(K(x, x))`` when it is known in closed form."""
        return None

    def to_spec(self) -> dict:
        raise NotImplementedError(f"{type(self).__name__} cannot be serialized")


@dataclass(frozen=True)
class LinearKernel(Kernel):
    def _cross(self, A, B):
        return A @ B.T

    def _diag(self, A):
        return np.einsum("ij,ij->i", A, A)

    def to_spec(self):
        return {"type": "linear", "dim": self.dim}


@dataclass(frozen=True)
class PolynomialKernel(Kernel):
    """``(<x, x'> + offset) ** degree``."""

    degree: int = 2
    offset: float = 1.0

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise ParameterError(f"degree must be a positive integer, got {self.degree}")
        if not self.offset >= 0:
            raise ParameterError(f"offset must be >= 0, got {self.offset}")

    def _cross(self, A, B):
        return (A @ B.T + self.offset) ** int(self.degree)

    def _diag(self, A):
        return (np.einsum("ij,ij->i", A, A) + self.offset) ** int(self.degree)

    def to_spec(self):
        return {"type": "polynomial", "degree": int(self.degree),
                "offset": self.offset, "dim": self.dim}


@dataclass(frozen=True)
class GaussianKernel(Kernel):
    """``exp(-|x - x'|^2 / (2 bandwidth^2))``."""

    bandwidth: float = 1.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ParameterError(f"bandwidth must be > 0, got {self.bandwidth}")

    def _cross(self, A, B):
        d2 = cdist(A, B, "sqeuclidean")
        return np.exp(-d2 / (2.0 * self.bandwidth ** 2))

    def _diag(self, A):
        return np.ones(A.shape[0])

    @property
    def analytic_kappa(self):
        return 1.0

    def to_spec(self):
        return {"type": "gaussian", "bandwidth": self.bandwidth, "dim": self.dim}


@dataclass(frozen=True)
class DictionaryKernel(Kernel):
    """Kernel of a finite dictionary: ``K(x, x') = sum_i phi_i(x) phi_i(x')``.

    Each feature map takes an ``(n, d)`` array of points and returns ``n``
    values.
    """

    features: tuple[Callable[[np.ndarray], np.ndarray], ...] = ()

    def __post_init__(self):
        if len(self.features) == 0:
            raise ParameterError("a dictionary kernel needs at least one feature map")
        object.__setattr__(self, "features", tuple(self.features))

    def feature_matrix(self, X) -> np.ndarray:
        A = as_points(X, self.dim)
        return self._phi(A)

    def _phi(self, A):
        cols = [np.broadcast_to(np.asarray(phi(A), dtype=float), (A.shape[0],))
                for phi in self.features]
        return np.stack(cols, axis=1)

    def _cross(self, A, B):
        return self._phi(A) @ self._phi(B).T

    def _diag(self, A):
        P = self._phi(A)
        return np.einsum("ij,ij->i", P, P)


def eval_kernel(k: Kernel, x, x2) -> float:
    """``K(x, x2)`` for two single points."""
    a = _as_point(x, k.dim)
    b = _as_point(x2, k.dim)
    if a.shape != b.shape:
        raise DimensionError(f"point dimensions differ: {a.shape[0]} vs {b.shape[0]}")
    return float(k._cross(a[None, :], b[None, :])[0, 0])


def gram(k: Kernel, X) -> np.ndarray:
    """Dense, exactly symmetric Gram matrix of ``k`` on the points ``X``."""
    A = as_points(X, k.dim)
    if A.shape[0] == 0:
        raise DimensionError("cannot build a Gram matrix on an empty point set")
    G = k._cross(A, A)
    # BLAS products need not be bitwise symmetric
    return 0.5 * (G + G.T)


def expansion_eval(k: Kernel, centers, c, x) -> float:
    """Evaluate ``sum_j c_j K(x, center_j)`` at a single point ``x``.

    Use :class:`KernelExpansion` to evaluate many points at once.
    """
    C = as_points(centers, k.dim)
    coef = np.asarray(c, dtype=float).ravel()
    if C.shape[0] != coef.shape[0]:
        raise DimensionError(
            f"{C.shape[0]} centers but {coef.shape[0]} coefficients")
    a = _as_point(x, C.shape[1])
    return float(k._cross(a[None, :], C)[0] @ coef)


def rkhs_norm_sq(G, c) -> float:
    """``c^T G c`` clamped at zero."""
    G = np.asarray(G, dtype=float)
    coef = np.asarray(c, dtype=float).ravel()
    if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] != coef.shape[0]:
        raise DimensionError(
            f"Gram matrix of shape {G.shape} does not match {coef.shape[0]} coefficients")
    return max(float(coef @ (G @ coef)), 0.0)


@dataclass(frozen=True)
class KappaBound:
    kappa: float
    provenance: str  # "analytic" | "data-estimated" | "user-supplied"


def kappa(k: Kernel, X=None, user: float | None = None) -> KappaBound:
    """Bound on ``sup_x sqrt(K(x, x))``.

    Kernels with a closed-form bound (Gaussian) always report it.  Otherwise
    a user value wins over the maximum over the sample ``X``.
    """
    if k.analytic_kappa is not None:
        return KappaBound(k.analytic_kappa, "analytic")
    if user is not None:
        if not user >= 0:
            raise ParameterError(f"kappa must be >= 0, got {user}")
        return KappaBound(float(user), "user-supplied")
    if X is None:
        raise ParameterError(
            f"{type(k).__name__} has no analytic bound; pass a sample or a user value")
    d = k.diag(X)
    return KappaBound(math.sqrt(max(float(np.max(d)), 0.0)), "data-estimated")


def predict_many(k: Kernel, centers, coefs, X) -> np.ndarray:
    """Evaluate expansions sharing ``centers`` at the rows of ``X``.

    ``coefs`` is a vector (one predictor) or a matrix with one column per
    predictor; the result has the matching shape.
    """
    C = as_points(centers, k.dim)
    coefs = np.asarray(coefs, dtype=float)
    if coefs.shape[0] != C.shape[0]:
        raise DimensionError(f"{C.shape[0]} centers but {coefs.shape[0]} coefficients")
    A = as_points(X, C.shape[1])
    out = np.empty((A.shape[0],) + coefs.shape[1:])
    # chunked so huge Monte Carlo samples do not build one giant matrix
    step = max(1, 2_000_000 // max(1, C.shape[0]))
    for i in range(0, A.shape[0], step):
        out[i:i + step] = k._cross(A[i:i + step], C) @ coefs
    return out


class KernelExpansion:
    """Predictor ``x -> sum_j coef_j K(x, center_j)``."""

    def __init__(self, kernel: Kernel, centers, coef):
        self.kernel = kernel
        self.centers = as_points(centers, kernel.dim)
        self.coef = np.asarray(coef, dtype=float).ravel()
        if self.centers.shape[0] != self.coef.shape[0]:
            raise DimensionError(
                f"{self.centers.shape[0]} centers but {self.coef.shape[0]} coefficients")

    def __call__(self, X) -> np.ndarray:
        return predict_many(self.kernel, self.centers, self.coef, X)

    def norm_sq(self) -> float:
        return rkhs_norm_sq(gram(self.kernel, self.centers), self.coef)

    def norm(self) -> float:
        return math.sqrt(self.norm_sq())

    def to_dict(self) -> dict:
        return {"kernel": self.kernel.to_spec(),
                "centers": self.centers.tolist(),
                "coef": self.coef.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelExpansion":
        return cls(kernel_from_spec(d["kernel"]), d["centers"], d["coef"])


def kernel_from_spec(spec: dict) -> Kernel:
    """Build a kernel from a JSON-style description such as
    ``{"type": "gaussian", "bandwidth": 0.5}``."""
    spec = dict(spec)
    kind = str(spec.pop("type", "")).lower()
    spec.pop("kappa", None)
    dim = spec.pop("dim", None)
    if kind == "linear":
        k = LinearKernel(dim=dim)
    elif kind == "polynomial":
        k = PolynomialKernel(degree=int(spec.pop("degree", 2)),
                             offset=float(spec.pop("offset", 1.0)), dim=dim)
    elif kind == "gaussian":
        k = GaussianKernel(bandwidth=float(spec.pop("bandwidth", 1.0)), dim=dim)
    else:
        raise ParameterError(f"unknown kernel type {kind!r}")
    if spec:
        raise ParameterError(f"unexpected kernel fields: {sorted(spec)}")
    return k
