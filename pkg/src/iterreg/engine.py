"""
Early-stopped subgradient descent in a reproducing kernel Hilbert space.

The iterate ``f_t = sum_j c_t[j] K(., x_j)`` lives on the training points, so
the whole method runs in coefficient space::

    g_t[i]  = V'_-(y_i, (G c_t)[i])
    c_{t+1} = c_t - (eta_t / m) g_t,        c_1 = 0

with step sizes ``eta_t = eta1 * t ** -theta``.

Running ``T`` steps visits the iterates ``f_1, ..., f_T`` and leaves the
state holding ``f_{T+1}``.  The three estimators reported after ``T`` steps
are the last visited iterate ``f_T``, the step-weighted average ``a_T`` of
``f_1..f_T`` and the best iterate ``b_T`` among ``f_1..f_T``.  One
:class:`TrainRecord` is produced per visited iterate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import DimensionError, DivergenceError, ParameterError, ScheduleError
from .kernel import Kernel, as_points, gram, kappa as kernel_kappa
from .loss import Loss, growth_params

__all__ = [
    "StepSchedule",
    "IterationState",
    "TrainRecord",
    "RunResult",
    "max_eta1",
    "check_schedule",
    "init_state",
    "step",
    "run",
    "run_gram",
    "last_iterate",
    "averaged_iterate",
    "best_iterate",
    "subgradient_norm_sq",
    "DIVERGENCE_FACTOR",
]

log = logging.getLogger(__name__)

#: abort once ||f_{t+1}||_K exceeds this multiple of t^((1-theta)/2)
DIVERGENCE_FACTOR = 10.0


@dataclass(frozen=True)
class StepSchedule:
    """Polynomially decaying steps ``eta_t = eta1 * t**(-theta)``."""

    eta1: float
    theta: float

    def __post_init__(self):
        if not (self.eta1 > 0 and math.isfinite(self.eta1)):
            raise ParameterError(f"eta1 must be a positive number, got {self.eta1}")
        if not 0 <= self.theta < 1:
            raise ParameterError(f"theta must lie in [0, 1), got {self.theta}")

    def __call__(self, t: int) -> float:
        return self.eta1 * float(t) ** (-self.theta)

    def etas(self, T: int) -> np.ndarray:
        return self.eta1 * np.arange(1, T + 1, dtype=float) ** (-self.theta)


def _check_theta(q: float, theta: float, smooth: bool) -> None:
    if smooth:
        if not 0 <= theta < 1:
            raise ParameterError(f"smooth mode needs theta in [0, 1), got {theta}")
        return
    lo = q / (q + 1.0)
    # theta = 0 is rejected even for q = 0: the decay must be genuine
    if not (lo < theta < 1 and theta > 0):
        raise ParameterError(
            f"nonsmooth mode needs theta in ({lo:g}, 1) for q={q:g}, got {theta}")


def max_eta1(loss: Loss, kappa: float, theta: float, smooth: bool = False,
             label_bound: float | None = None) -> float:
    """Largest admissible first step for ``loss`` at decay ``theta``.

    Nonsmooth::

        min{ sqrt(1-theta) / (sqrt(2) c_q (kappa+1)^(q+1)), (1-theta) / (4 |V|_0) }

    Smooth (``L`` known)::

        min{ (1-theta) / (2 |V|_0), 1 / (L kappa^2) }

    A zero ``|V|_0`` or ``kappa`` removes the corresponding term.
    """
    q, c_q, v0, L = growth_params(loss, label_bound)
    _check_theta(q, theta, smooth)
    if smooth:
        if L is None:
            raise ParameterError(f"{loss.name} loss is not smooth")
        a = (1.0 - theta) / (2.0 * v0) if v0 > 0 else math.inf
        b = 1.0 / (L * kappa ** 2) if kappa > 0 else math.inf
    else:
        a = math.sqrt(1.0 - theta) / (math.sqrt(2.0) * c_q * (kappa + 1.0) ** (q + 1.0))
        b = (1.0 - theta) / (4.0 * v0) if v0 > 0 else math.inf
    return min(a, b)


def check_schedule(schedule: StepSchedule, loss: Loss, kappa: float,
                   smooth: bool = False, force: bool = False,
                   label_bound: float | None = None) -> bool:
    """Return True when ``schedule`` is admissible.

    An inadmissible schedule raises :class:`ScheduleError` unless ``force``
    is set, in which case a warning is logged and False is returned.
    """
    try:
        bound = max_eta1(loss, kappa, schedule.theta, smooth, label_bound)
    except ParameterError as exc:
        if not force:
            raise ScheduleError(str(exc)) from exc
        log.warning("forcing inadmissible schedule: %s", exc)
        return False
    if schedule.eta1 <= bound * (1.0 + 1e-12):
        return True
    msg = f"eta1={schedule.eta1:.6g} exceeds the admissible bound {bound:.6g}"
    if not force:
        raise ScheduleError(msg)
    log.warning("forcing inadmissible schedule: %s", msg)
    return False


@dataclass
class TrainRecord:
    """Diagnostics of one visited iterate ``f_t``."""

    t: int
    eta: float
    empirical_risk: float
    rkhs_norm: float
    subgrad_norm: float
    validation_risk: float | None = None
    forced: bool = False


@dataclass
class IterationState:
    """Mutable state of one run.

    ``c`` holds the coefficients of ``f_t`` for the current ``t``; ``f`` caches
    ``G @ c``.  ``prev_c`` is ``c_{t-1}`` (the last iterate visited by a step).
    """

    c: np.ndarray
    f: np.ndarray
    t: int = 1
    prev_c: np.ndarray | None = None
    avg_c: np.ndarray | None = None
    weight_sum: float = 0.0
    best_c: np.ndarray | None = None
    best_risk: float = math.inf
    best_t: int = 0
    norm_sq_history: list = field(default_factory=list)
    records: list = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.c.shape[0]


def init_state(m: int) -> IterationState:
    """State at ``f_1 = 0`` for ``m`` training points."""
    z = np.zeros(m)
    return IterationState(c=z, f=np.zeros(m), avg_c=np.zeros(m))


def subgradient_norm_sq(G, g, m: int | None = None) -> float:
    """``|| (1/m) sum_j g_j K_{x_j} ||_K^2 = g^T G g / m^2``, clamped at 0."""
    G = np.asarray(G, dtype=float)
    g = np.asarray(g, dtype=float).ravel()
    if G.shape != (g.shape[0], g.shape[0]):
        raise DimensionError(f"Gram matrix {G.shape} does not match g of length {g.shape[0]}")
    m = g.shape[0] if m is None else m
    return max(float(g @ (G @ g)), 0.0) / m ** 2


def step(state: IterationState, G: np.ndarray, y: np.ndarray, loss: Loss,
         eta_t: float, *, validation: tuple | None = None, forced: bool = False,
         incremental: bool = False) -> IterationState:
    """Advance ``state`` from ``f_t`` to ``f_{t+1}`` in place and return it.

    ``validation`` is an optional pair ``(K_val, y_val)`` with ``K_val`` the
    cross-kernel matrix between validation and training points.  With
    ``incremental`` only the columns of ``G`` where ``g_t`` is nonzero are
    touched, which pays off for losses with flat regions (hinge,
    eps-insensitive).
    """
    m = state.m
    if G.shape != (m, m) or y.shape != (m,):
        raise DimensionError(
            f"state has {m} coefficients but G is {G.shape} and y has shape {y.shape}")
    if not eta_t > 0:
        raise ParameterError(f"step size must be positive, got {eta_t}")

    c, f, t = state.c, state.f, state.t
    risk = float(loss._value(y, f).sum()) / m
    g = loss._left_derivative(y, f)
    if incremental:
        nz = np.flatnonzero(g)
        Gg = G[:, nz] @ g[nz]
    else:
        Gg = G @ g
    gnorm_sq = max(float(g @ Gg), 0.0) / m ** 2
    norm_sq = state.norm_sq_history[-1] if state.norm_sq_history else 0.0

    val_risk = None
    if validation is not None:
        K_val, y_val = validation
        val_risk = float(loss._value(y_val, K_val @ c).sum()) / y_val.shape[0]

    state.records.append(TrainRecord(t, eta_t, risk, math.sqrt(norm_sq),
                                     math.sqrt(gnorm_sq), val_risk, forced))
    state.avg_c = state.avg_c + eta_t * c
    state.weight_sum += eta_t
    if risk < state.best_risk:
        state.best_risk, state.best_c, state.best_t = risk, c, t

    c_next = c - (eta_t / m) * g
    # G c_{t+1} = G c_t - (eta_t/m) G g_t: the one product per step is reused
    f_next = f - (eta_t / m) * Gg
    new_norm_sq = float(c_next @ f_next)
    # a non-finite entry anywhere in c or f poisons this product
    if not math.isfinite(new_norm_sq):
        raise DivergenceError(f"non-finite iterate at t={t + 1}", t=t + 1)
    new_norm_sq = max(new_norm_sq, 0.0)

    state.prev_c, state.c, state.f = c, c_next, f_next
    state.norm_sq_history.append(new_norm_sq)
    state.t = t + 1
    return state


@dataclass
class RunResult:
    state: IterationState
    records: list
    kappa: float
    admissible: bool
    smooth: bool

    @property
    def last(self) -> np.ndarray:
        return last_iterate(self.state)

    @property
    def averaged(self) -> np.ndarray:
        return averaged_iterate(self.state)

    @property
    def best(self) -> np.ndarray:
        return best_iterate(self.state)

    def __iter__(self):
        # allows ``state, records = run(...)``
        return iter((self.state, self.records))


def run_gram(G: np.ndarray, y, loss: Loss, schedule: StepSchedule, T: int, *,
             kappa: float, smooth: bool = False, force: bool = False,
             validation: tuple | None = None, incremental: bool = False,
             divergence_factor: float | None = DIVERGENCE_FACTOR,
             callback: Callable[[IterationState], None] | None = None,
             label_bound: float | None = None) -> RunResult:
    """Run ``T`` steps on a precomputed Gram matrix."""
    G = np.asarray(G, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    m = y.shape[0]
    if G.shape != (m, m):
        raise DimensionError(f"Gram matrix {G.shape} does not match {m} labels")
    if int(T) != T or T < 1:
        raise ParameterError(f"T must be a positive integer, got {T}")
    loss.check_labels(y)
    if label_bound is None and not loss.classification and loss.label_bound is None:
        label_bound = float(np.max(np.abs(y)))
    admissible = check_schedule(schedule, loss, kappa, smooth, force, label_bound)
    forced = not admissible
    if validation is not None:
        K_val, y_val = validation
        K_val = np.asarray(K_val, dtype=float)
        y_val = np.asarray(y_val, dtype=float).ravel()
        loss.check_labels(y_val)
        if K_val.shape != (y_val.shape[0], m):
            raise DimensionError(f"validation kernel {K_val.shape} does not match data")
        validation = (K_val, y_val)

    half = (1.0 - schedule.theta) / 2.0
    state = init_state(m)
    # overflow surfaces as a DivergenceError, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, int(T) + 1):
            step(state, G, y, loss, schedule(t), validation=validation,
                 forced=forced, incremental=incremental)
            if divergence_factor is not None:
                limit = divergence_factor * t ** half
                if state.norm_sq_history[-1] > limit * limit:
                    raise DivergenceError(
                        f"||f_{t + 1}||_K = {math.sqrt(state.norm_sq_history[-1]):.4g} "
                        f"exceeds {divergence_factor:g} * t^((1-theta)/2) = {limit:.4g}",
                        t=t + 1)
            if callback is not None:
                callback(state)
    return RunResult(state, state.records, kappa, admissible, smooth)


def run(k: Kernel, X, y, loss: Loss, schedule: StepSchedule, T: int, *,
        smooth: bool = False, force: bool = False, kappa: float | None = None,
        validation: tuple | None = None, G: np.ndarray | None = None,
        **kwargs) -> RunResult:
    """Run ``T`` subgradient steps from ``f_1 = 0`` on the sample ``(X, y)``.

    ``validation`` is an optional pair of raw points and labels.  ``kappa``
    overrides the kernel bound; otherwise it comes from :func:`iterreg.kernel.kappa`
    on the training sample.  Returns a :class:`RunResult`, which also unpacks
    as ``(state, records)``.
    """
    A = as_points(X, k.dim)
    if G is None:
        G = gram(k, A)
    kb = kernel_kappa(k, A, kappa)
    if kb.provenance == "data-estimated":
        log.debug("kappa=%.6g estimated from the training sample", kb.kappa)
    val = None
    if validation is not None:
        Xv, yv = validation
        val = (k.cross(Xv, A), yv)
    return run_gram(G, y, loss, schedule, T, kappa=kb.kappa, smooth=smooth,
                    force=force, validation=val, **kwargs)


def last_iterate(state: IterationState) -> np.ndarray:
    """Coefficients of ``f_T``, the last iterate visited."""
    if state.prev_c is None:
        raise ParameterError("no step has been taken yet")
    return state.prev_c


def averaged_iterate(state: IterationState) -> np.ndarray:
    """Coefficients of ``a_T = sum_t eta_t f_t / sum_t eta_t``."""
    if state.weight_sum <= 0:
        raise ParameterError("no step has been taken yet")
    return state.avg_c / state.weight_sum


def best_iterate(state: IterationState) -> np.ndarray:
    """Coefficients of the visited iterate with the smallest empirical risk.

    Ties go to the earliest iterate.
    """
    if state.best_c is None:
        raise ParameterError("no step has been taken yet")
    return state.best_c
