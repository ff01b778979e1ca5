"""
Empirical and expected risks, excess risks and classification checks.

Monte Carlo estimates draw fresh samples from a synthetic distribution in
fixed-size blocks.  Block ``i`` uses the ``i``-th child of
``SeedSequence(seed)``, and block sums are reduced in order, so an estimate
only depends on ``(n, seed)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, NamedTuple

import numpy as np

from .exceptions import DimensionError, ParameterError
from .loss import Hinge, Loss

__all__ = [
    "MCEstimate",
    "RiskReport",
    "ComparisonResult",
    "empirical_risk",
    "expected_risk_mc",
    "excess_risk",
    "excess_risks_mc",
    "sign_classifier",
    "misclassification_risk_mc",
    "comparison_check",
    "risk_report",
    "MC_BLOCK",
]

MC_BLOCK = 65_536


class MCEstimate(NamedTuple):
    estimate: float
    stderr: float


def empirical_risk(loss: Loss, predictions, labels) -> float:
    """Mean of ``V(y_j, prediction_j)``."""
    a = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(labels, dtype=float).ravel()
    if a.shape != y.shape:
        raise DimensionError(f"{a.shape[0]} predictions but {y.shape[0]} labels")
    if a.size == 0:
        raise DimensionError("empirical risk of an empty sample")
    loss.check_labels(y)
    return float(np.mean(loss._value(y, a)))


def _mc_means(per_sample, dist, n: int, seed) -> list[MCEstimate]:
    """Block-wise means of the arrays returned by ``per_sample(X, y)``."""
    if int(n) != n or n < 2:
        raise ParameterError(f"need at least 2 Monte Carlo samples, got {n}")
    n = int(n)
    n_blocks = -(-n // MC_BLOCK)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    # spawn from a fresh copy so the caller's sequence is never advanced
    root = np.random.SeedSequence(root.entropy, spawn_key=root.spawn_key)
    children = root.spawn(n_blocks)
    count = 0
    means = m2 = None
    for i, ss in enumerate(children):
        size = min(MC_BLOCK, n - i * MC_BLOCK)
        X, y = dist.sample(size, ss)
        vals = np.stack([np.asarray(v, dtype=float) for v in per_sample(X, y)])
        b_mean = vals.mean(axis=1)
        b_m2 = ((vals - b_mean[:, None]) ** 2).sum(axis=1)
        if means is None:
            means, m2 = b_mean, b_m2
        else:
            # pairwise merge of (count, mean, sum of squared deviations)
            delta = b_mean - means
            tot = count + size
            means = means + delta * (size / tot)
            m2 = m2 + b_m2 + delta ** 2 * (count * size / tot)
        count += size
    return [MCEstimate(float(mu), math.sqrt(max(float(s2), 0.0) / (n - 1) / n))
            for mu, s2 in zip(means, m2)]


def _mc_mean(per_sample, dist, n, seed) -> MCEstimate:
    return _mc_means(lambda X, y: (per_sample(X, y),), dist, n, seed)[0]


def expected_risk_mc(loss: Loss, f, dist, n: int = 100_000, seed=0) -> MCEstimate:
    """Monte Carlo estimate of ``E V(y, f(x))`` with its standard error."""
    return _mc_mean(lambda X, y: loss._value(y, f(X)), dist, n, seed)


def excess_risk(loss: Loss, f, dist, n: int = 100_000, seed=0) -> MCEstimate:
    """``E(f) - E(f_rho)`` using the distribution's known target risk.

    The standard error is that of the Monte Carlo part; the result may dip
    slightly below zero within that error.
    """
    try:
        base = dist.target_risk(loss)
    except (NotImplementedError, AttributeError):
        raise ParameterError(f"{type(dist).__name__} exposes no target risk") from None
    est = expected_risk_mc(loss, f, dist, n, seed)
    return MCEstimate(est.estimate - base, est.stderr)


def excess_risks_mc(loss: Loss, predict, dist, n: int = 100_000, seed=0
                    ) -> tuple[list[MCEstimate], list[MCEstimate] | None]:
    """Excess risks of several predictors on one shared Monte Carlo sample.

    ``predict(X)`` returns an ``(len(X), k)`` array, one column per predictor.
    Gives the excess ``loss`` risks and, for classification distributions,
    the excess misclassification risks of ``sign f``; each matches
    :func:`excess_risk` and :func:`misclassification_risk_mc` (minus the
    Bayes risk) called with the same ``n`` and ``seed``, up to round-off.
    """
    try:
        base = dist.target_risk(loss)
    except (NotImplementedError, AttributeError):
        raise ParameterError(f"{type(dist).__name__} exposes no target risk") from None
    classify = bool(getattr(dist, "classification", False))

    def per_sample(X, y):
        F = np.asarray(predict(X), dtype=float).reshape(len(y), -1)
        out = [loss._value(y, F[:, j]) for j in range(F.shape[1])]
        if classify:
            out += [np.where(F[:, j] >= 0, 1.0, -1.0) != y for j in range(F.shape[1])]
        return out

    est = _mc_means(per_sample, dist, n, seed)
    k = len(est) // 2 if classify else len(est)
    risks = [MCEstimate(e.estimate - base, e.stderr) for e in est[:k]]
    if not classify:
        return risks, None
    bayes = dist.bayes_risk()
    return risks, [MCEstimate(e.estimate - bayes, e.stderr) for e in est[k:]]


def sign_classifier(f) -> Callable[[np.ndarray], np.ndarray]:
    """Classifier ``x -> +1 if f(x) >= 0 else -1``."""
    return lambda X: np.where(np.asarray(f(X), dtype=float) >= 0, 1.0, -1.0)


def _require_classification(dist):
    if not getattr(dist, "classification", False):
        raise ParameterError(f"{type(dist).__name__} is not a classification distribution")


def misclassification_risk_mc(classifier, dist, n: int = 100_000, seed=0) -> MCEstimate:
    """Monte Carlo estimate of ``P(y != classifier(x))``."""
    _require_classification(dist)
    return _mc_mean(lambda X, y: np.asarray(classifier(X)) != y, dist, n, seed)


class ComparisonResult(NamedTuple):
    lhs: float
    rhs: float
    holds: bool
    stderr: float


def comparison_check(f, dist, n: int = 100_000, seed=0, n_stderr: float = 3.0
                     ) -> ComparisonResult:
    """Check ``R(sign f) - R(bayes) <= E_hinge(f) - E_hinge(f_rho)``.

    Both sides are estimated on the same Monte Carlo sample.  The inequality
    counts as holding when ``lhs <= rhs + n_stderr * sqrt(se_lhs^2 + se_rhs^2)``.
    """
    _require_classification(dist)
    hinge = Hinge()

    def per_sample(X, y):
        fx = np.asarray(f(X), dtype=float)
        return np.where(fx >= 0, 1.0, -1.0) != y, hinge._value(y, fx)

    mis, h = _mc_means(per_sample, dist, n, seed)
    lhs = mis.estimate - dist.bayes_risk()
    rhs = h.estimate - dist.target_risk("hinge")
    se = math.hypot(mis.stderr, h.stderr)
    return ComparisonResult(lhs, rhs, bool(lhs <= rhs + n_stderr * se), se)


@dataclass
class RiskReport:
    empirical_risk: float
    expected_risk: float | None = None
    expected_risk_stderr: float | None = None
    excess_risk: float | None = None
    misclassification_rate: float | None = None
    mc_samples: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def risk_report(loss: Loss, f, X, y, dist=None, n: int = 100_000, seed=0) -> RiskReport:
    """Collect the empirical risk on ``(X, y)`` and, given a synthetic
    distribution, Monte Carlo expected, excess and misclassification risks."""
    rep = RiskReport(empirical_risk(loss, f(X), y))
    if dist is None:
        return rep
    est = expected_risk_mc(loss, f, dist, n, seed)
    rep.expected_risk, rep.expected_risk_stderr = est.estimate, est.stderr
    rep.mc_samples = int(n)
    try:
        rep.excess_risk = est.estimate - dist.target_risk(loss)
    except ParameterError:
        rep.excess_risk = None
    if getattr(dist, "classification", False):
        rep.misclassification_rate = misclassification_risk_mc(
            sign_classifier(f), dist, n, seed).estimate
    return rep
