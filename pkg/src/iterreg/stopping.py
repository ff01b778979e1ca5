"""
Stopping rules: theory-driven power indices and a hold-out rule.

The theory picks ``T = ceil(m ** gamma)`` and predicts an excess risk of
order ``m ** -alpha``.  Both indices depend on the growth exponent ``q`` of
the loss, the variance exponent ``tau``, the approximation exponent ``beta``,
the capacity exponent ``zeta`` and the step decay ``theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import StepSchedule, run
from .exceptions import ParameterError
from .kernel import Kernel, as_points
from .loss import Loss

__all__ = [
    "ZETA_LIMIT",
    "RegimeParams",
    "RateIndices",
    "HoldoutResult",
    "compute_indices",
    "corollary_indices",
    "hinge_indices",
    "hinge_fixed_T_schedule",
    "theoretical_T",
    "lambda_T",
    "holdout_split",
    "holdout_stop",
]

#: stand-in for the capacity-independent limit zeta -> 2 (zeta = 2 is excluded)
ZETA_LIMIT = 2.0 - 1e-9

# |theta - (q+1)/(q+2)| below this counts as sitting on the branch boundary
_BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class RegimeParams:
    q: float
    tau: float
    beta: float
    zeta: float
    theta: float
    smooth: bool = False

    def __post_init__(self):
        if not self.q >= 0:
            raise ParameterError(f"q must be >= 0, got {self.q}")
        if not 0 <= self.tau <= 1:
            raise ParameterError(f"tau must lie in [0, 1], got {self.tau}")
        if not 0 < self.beta <= 1:
            raise ParameterError(f"beta must lie in (0, 1], got {self.beta}")
        if not 0 < self.zeta < 2:
            raise ParameterError(
                f"zeta must lie in (0, 2), got {self.zeta}; use ZETA_LIMIT for zeta -> 2")
        if self.smooth:
            if not 0 <= self.theta < 1:
                raise ParameterError(f"theta must lie in [0, 1), got {self.theta}")
        else:
            lo = self.q / (self.q + 1.0)
            if not (0 < self.theta < 1 and self.theta > lo):
                raise ParameterError(
                    f"theta must lie in ({lo:g}, 1) for q={self.q:g}, got {self.theta}")

    @property
    def boundary(self) -> float:
        return (self.q + 1.0) / (self.q + 2.0)


@dataclass(frozen=True)
class RateIndices:
    gamma: float
    alpha: float
    has_log_factor: bool


def _capacity_terms(p: RegimeParams) -> tuple[float, float]:
    A = 2.0 - p.tau + p.zeta * p.tau / 2.0
    B = p.q * (1.0 + p.zeta / 2.0)
    return A, B


def compute_indices(p: RegimeParams, iterate: str = "last") -> RateIndices:
    """Stopping exponent ``gamma`` and rate exponent ``alpha`` for a regime.

    ``iterate`` is ``"last"``, ``"averaged"`` or ``"best"``; it only changes
    whether a ``log m`` factor accompanies the rate.  The last iterate
    carries it for ``theta <= (q+1)/(q+2)``, the averaged and best iterates
    only at equality, and the smooth regime never.
    """
    if iterate not in ("last", "averaged", "best"):
        raise ParameterError(f"unknown iterate {iterate!r}")
    A, B = _capacity_terms(p)
    th, q, beta = p.theta, p.q, p.beta
    on_boundary = abs(th - p.boundary) <= _BOUNDARY_TOL
    if p.smooth or th >= p.boundary:
        gamma = 2.0 / (1.0 - th) / ((1.0 + 2.0 * beta) * A + B)
        alpha = beta / (beta * A + (A / 2.0 + B / 2.0))
    else:
        decay = th * (1.0 + q) - q
        gamma = 2.0 / (1.0 - th) / ((1.0 + 2.0 * beta * decay / (1.0 - th)) * A + B)
        alpha = beta / (beta * A + (1.0 - th) / decay * (A / 2.0 + B / 2.0))
    if p.smooth:
        log_factor = False
    elif iterate == "last":
        log_factor = th <= p.boundary or on_boundary
    else:
        log_factor = on_boundary
    return RateIndices(gamma, alpha, log_factor)


def corollary_indices(tau: float, beta: float, zeta: float, theta: float) -> RateIndices:
    """Closed forms of the indices for Lipschitz losses (``q = 0``).

    Algebraically identical to :func:`compute_indices` at ``q = 0``; kept as
    an independent route for cross-checking.
    """
    p = RegimeParams(0.0, tau, beta, zeta, theta)
    A = 2.0 - tau + zeta * tau / 2.0
    if theta >= 0.5:
        gamma = 2.0 / ((1.0 - theta) * (2.0 * beta + 1.0) * A)
        alpha = 2.0 * beta / ((2.0 * beta + 1.0) * A)
    else:
        gamma = 2.0 / ((1.0 - theta + 2.0 * beta * theta) * A)
        alpha = 2.0 * theta * beta / ((1.0 - theta + 2.0 * beta * theta) * A)
    return RateIndices(gamma, alpha, p.theta <= 0.5)


def hinge_indices(beta: float, theta: float) -> RateIndices:
    """Indices for the hinge loss with ``theta > 1/2``:
    ``gamma = 1/((1-theta)(2 beta + 1))`` and ``alpha = beta/(2 beta + 1)``."""
    if not 0 < beta <= 1:
        raise ParameterError(f"beta must lie in (0, 1], got {beta}")
    if not 0.5 < theta < 1:
        raise ParameterError(f"theta must lie in (1/2, 1), got {theta}")
    return RateIndices(1.0 / ((1.0 - theta) * (2.0 * beta + 1.0)),
                       beta / (2.0 * beta + 1.0), False)


def hinge_fixed_T_schedule(beta: float, eps: float) -> tuple[float, float]:
    """Decay ``theta`` that makes the hinge stopping exponent ``2/3 + eps``.

    Returns ``(theta, gamma)``.  Requires ``0 < eps < 1/3`` and
    ``(4 - 3 eps)/(4 + 6 eps) < beta <= 1``.
    """
    if not 0 < eps < 1.0 / 3.0:
        raise ParameterError(f"eps must lie in (0, 1/3), got {eps}")
    threshold = (4.0 - 3.0 * eps) / (4.0 + 6.0 * eps)
    if not threshold < beta <= 1:
        raise ParameterError(
            f"beta must lie in ({threshold:.6g}, 1] for eps={eps}, got {beta}")
    theta = (4.0 * beta - 1.0 + 3.0 * eps * (2.0 * beta + 1.0)) / (
        (2.0 * beta + 1.0) * (2.0 + 3.0 * eps))
    return theta, 2.0 / 3.0 + eps


def theoretical_T(m: int, gamma: float) -> int:
    """``ceil(m ** gamma)``, robust to round-off just above an integer."""
    if m < 1:
        raise ParameterError(f"m must be >= 1, got {m}")
    if not gamma > 0:
        raise ParameterError(f"gamma must be > 0, got {gamma}")
    r = float(m) ** gamma
    n = round(r)
    if abs(r - n) <= 1e-9 * max(1.0, r):
        return max(int(n), 1)
    return max(math.ceil(r), 1)


def lambda_T(T: float, q: float, theta: float) -> float:
    """Computational-error factor used by the last-iterate analysis.

    ``T^-(1-theta)`` above the boundary ``(q+1)/(q+2)``, ``log T`` times that
    on it, and ``log T * T^-(theta(1+q) - q)`` below it.
    """
    if not T >= 2:
        raise ParameterError(f"T must be >= 2, got {T}")
    if not q >= 0:
        raise ParameterError(f"q must be >= 0, got {q}")
    if not (0 < theta < 1 and theta > q / (q + 1.0)):
        raise ParameterError(f"theta must lie in ({q / (q + 1.0):g}, 1), got {theta}")
    b = (q + 1.0) / (q + 2.0)
    if abs(theta - b) <= _BOUNDARY_TOL:
        return math.log(T) * T ** -(1.0 - theta)
    if theta > b:
        return T ** -(1.0 - theta)
    return math.log(T) * T ** -(theta * (1.0 + q) - q)


@dataclass
class HoldoutResult:
    t_star: int
    curve: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    result: object = None  # engine.RunResult of the training-partition run


def holdout_split(m: int, split: float = 0.8, seed=0) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle of ``range(m)`` cut into train / validation indices."""
    if not 0 < split < 1:
        raise ParameterError(f"split must lie in (0, 1), got {split}")
    n_train = int(round(split * m))
    if n_train < 1 or n_train >= m:
        raise ParameterError(
            f"split {split} of {m} points leaves an empty partition")
    perm = np.random.default_rng(seed).permutation(m)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def holdout_stop(k: Kernel, X, y, loss: Loss, schedule: StepSchedule, T_max: int,
                 split: float = 0.8, seed=0, **run_kwargs) -> HoldoutResult:
    """Pick the stopping time by hold-out validation.

    Trains on a ``split`` fraction of the sample for ``T_max`` steps and
    returns the smallest ``t`` minimizing the validation risk of ``f_t``,
    together with the whole validation curve (index ``t - 1`` holds ``f_t``).
    """
    A = as_points(X, k.dim)
    y = np.asarray(y, dtype=float).ravel()
    tr, va = holdout_split(A.shape[0], split, seed)
    res = run(k, A[tr], y[tr], loss, schedule, T_max,
              validation=(A[va], y[va]), **run_kwargs)
    curve = np.array([r.validation_risk for r in res.records])
    return HoldoutResult(int(np.argmin(curve)) + 1, curve, tr, va, res)
