"""
Synthetic distributions with known targets.

Inputs are uniform on ``[0, 1]^dim``.  Each distribution knows its target
function ``f_rho`` for the losses it supports and the risk of that target,
so excess risks can be measured without a reference fit.

Sampling takes anything :func:`numpy.random.default_rng` accepts as a seed
(an int, a :class:`numpy.random.SeedSequence`, ...).  Nothing is shared
between calls, so disjoint seeds give independent samples.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special, stats

from .exceptions import ParameterError
from .kernel import KernelExpansion, kernel_from_spec
from .loss import Loss

__all__ = [
    "SyntheticDist",
    "LinearDecision",
    "RegressionRKHS",
    "MedianRegression",
    "FlipClassification",
    "MarginClassification",
    "bayes_rule",
    "dist_from_spec",
    "write_csv",
    "read_csv",
]

MISCLASSIFICATION = "misclassification"

# sample size for expected values that have no closed form
_PRECOMPUTE_MC = 10_000_000


def _rng(seed):
    return np.random.default_rng(seed)


def _uniform_inputs(rng, m, dim):
    return rng.random((m, dim))


def bayes_rule(values) -> np.ndarray:
    """``+1`` where ``values >= 0`` and ``-1`` elsewhere."""
    return np.where(np.asarray(values, dtype=float) >= 0, 1.0, -1.0)


def _loss_name(loss) -> str:
    return loss if isinstance(loss, str) else loss.name


class SyntheticDist:
    """Interface shared by all synthetic distributions."""

    dim: int
    classification = False

    def sample(self, m: int, seed=None) -> tuple[np.ndarray, np.ndarray]:
        if int(m) != m or m < 1:
            raise ParameterError(f"sample size must be a positive integer, got {m}")
        return self._sample(_rng(seed), int(m))

    def _sample(self, rng, m):
        raise NotImplementedError

    def target_predictor(self, loss=None) -> Callable[[np.ndarray], np.ndarray]:
        raise NotImplementedError

    def target_risk(self, loss) -> float:
        raise NotImplementedError

    def to_spec(self) -> dict:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# regression
# ---------------------------------------------------------------------------


class _AdditiveNoiseRegression(SyntheticDist):
    """``y = target(x) + noise`` with noise symmetric about zero.

    For every supported loss the risk only depends on ``y - a``, and a
    symmetric noise law makes the target itself the risk minimizer.
    """

    SUPPORTED = ("square", "absolute", "p_loss", "eps_insensitive", "eps_insensitive_p")

    def __init__(self, target, dim: int):
        self.target = target
        self.dim = int(dim)

    def _noise(self, rng, m):
        raise NotImplementedError

    def _noise_pdf(self, u):
        raise NotImplementedError

    def _sample(self, rng, m):
        X = _uniform_inputs(rng, m, self.dim)
        y = self.target(X) + self._noise(rng, m)
        return X, y

    def target_predictor(self, loss=None):
        if loss is not None:
            self._check(loss)
        return self.target

    def _check(self, loss):
        if _loss_name(loss) not in self.SUPPORTED:
            raise ParameterError(
                f"{type(self).__name__} has no known target for the "
                f"{_loss_name(loss)} loss")

    def _closed_form_risk(self, loss: Loss) -> float | None:
        return None

    def target_risk(self, loss: Loss) -> float:
        self._check(loss)
        r = self._closed_form_risk(loss)
        if r is not None:
            return r
        return self.noise_risk_quad(loss)

    def noise_risk_quad(self, loss: Loss) -> float:
        """``E V(noise, 0)`` by numerical quadrature over the noise law."""
        def integrand(u):
            return float(loss._value(np.float64(u), np.float64(0.0))) * self._noise_pdf(u)
        val, _ = integrate.quad(integrand, -np.inf, np.inf, limit=200)
        return val


class RegressionRKHS(_AdditiveNoiseRegression):
    """Gaussian noise around a target that is itself a kernel expansion."""

    def __init__(self, target: KernelExpansion, noise_std: float, dim: int | None = None):
        if not noise_std >= 0:
            raise ParameterError(f"noise_std must be >= 0, got {noise_std}")
        super().__init__(target, dim or target.centers.shape[1])
        self.noise_std = float(noise_std)

    @classmethod
    def random(cls, kernel, n_centers: int, noise_std: float, dim: int = 1,
               norm: float = 1.0, seed=None) -> "RegressionRKHS":
        """Random target with ``n_centers`` uniform centers and RKHS norm ``norm``."""
        rng = _rng(seed)
        centers = _uniform_inputs(rng, n_centers, dim)
        coef = rng.standard_normal(n_centers)
        f = KernelExpansion(kernel, centers, coef)
        nrm = f.norm()
        if nrm > 0:
            f = KernelExpansion(kernel, centers, coef * (norm / nrm))
        return cls(f, noise_std, dim)

    def _noise(self, rng, m):
        return self.noise_std * rng.standard_normal(m)

    def _noise_pdf(self, u):
        return stats.norm.pdf(u, scale=self.noise_std)

    def _closed_form_risk(self, loss):
        s = self.noise_std
        name = loss.name
        p = getattr(loss, "p", None)
        if s == 0:
            return 0.0
        if name == "square" or (name == "p_loss" and p == 2):
            return s ** 2
        if name == "absolute" or (name == "p_loss" and p == 1):
            return s * math.sqrt(2.0 / math.pi)
        if name == "p_loss":
            return s ** p * 2.0 ** (p / 2.0) * special.gamma((p + 1) / 2.0) / math.sqrt(math.pi)
        if name == "eps_insensitive":
            e = loss.eps
            return 2.0 * (s * stats.norm.pdf(e / s) - e * stats.norm.sf(e / s))
        return None

    def noise_risk_quad(self, loss):
        if self.noise_std == 0:
            return 0.0
        return super().noise_risk_quad(loss)

    def to_spec(self):
        return {"type": "regression_rkhs", "dim": self.dim, "noise_std": self.noise_std,
                "target": self.target.to_dict()}


class MedianRegression(_AdditiveNoiseRegression):
    """Laplace noise (median zero) around an arbitrary target function."""

    def __init__(self, target: Callable[[np.ndarray], np.ndarray], noise_scale: float,
                 dim: int = 1):
        if not noise_scale > 0:
            raise ParameterError(f"noise_scale must be > 0, got {noise_scale}")
        super().__init__(target, dim)
        self.noise_scale = float(noise_scale)

    def _noise(self, rng, m):
        return rng.laplace(0.0, self.noise_scale, m)

    def _noise_pdf(self, u):
        return stats.laplace.pdf(u, scale=self.noise_scale)

    def _closed_form_risk(self, loss):
        b = self.noise_scale
        p = getattr(loss, "p", None)
        if loss.name == "absolute" or (loss.name == "p_loss" and p == 1):
            return b
        if loss.name == "square":
            return 2.0 * b ** 2
        if loss.name == "p_loss":
            return b ** p * math.factorial(int(p))
        if loss.name == "eps_insensitive":
            return b * math.exp(-loss.eps / b)
        return None

    def to_spec(self):
        spec = {"type": "median_regression", "dim": self.dim,
                "noise_scale": self.noise_scale}
        if isinstance(self.target, KernelExpansion):
            spec["target"] = self.target.to_dict()
        elif isinstance(self.target, LinearDecision):
            spec["target"] = self.target.to_spec()
        return spec


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearDecision:
    """``d(x) = <weights, x> + bias``."""

    weights: tuple
    bias: float = 0.0

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        return X @ np.asarray(self.weights, dtype=float) + self.bias

    def to_spec(self):
        return {"weights": list(self.weights), "bias": self.bias}


class _BinaryDist(SyntheticDist):
    """Classification with labels in {-1, +1} and known ``P(y = 1 | x)``."""

    classification = True
    SUPPORTED = ("hinge", "logistic", MISCLASSIFICATION)

    def prob_pos(self, X) -> np.ndarray:
        raise NotImplementedError

    def bayes_classifier(self) -> Callable[[np.ndarray], np.ndarray]:
        return lambda X: bayes_rule(self.prob_pos(X) - 0.5)

    def _sample(self, rng, m):
        X = _uniform_inputs(rng, m, self.dim)
        u = rng.random(m)
        y = np.where(u < self.prob_pos(X), 1.0, -1.0)
        return X, y

    def target_predictor(self, loss=None):
        name = MISCLASSIFICATION if loss is None else _loss_name(loss)
        self._check(name)
        if name == "logistic":
            def log_odds(X):
                p = np.clip(self.prob_pos(X), 1e-300, 1.0 - 1e-16)
                return np.log(p) - np.log1p(-p)
            return log_odds
        return self.bayes_classifier()

    def _check(self, name):
        if name not in self.SUPPORTED:
            raise ParameterError(
                f"{type(self).__name__} has no known target for the {name} loss")

    def bayes_risk(self) -> float:
        """Misclassification risk of the Bayes rule, ``E min(eta, 1 - eta)``."""
        raise NotImplementedError

    def _entropy_risk(self) -> float:
        raise NotImplementedError

    def target_risk(self, loss) -> float:
        name = _loss_name(loss)
        self._check(name)
        if name == MISCLASSIFICATION:
            return self.bayes_risk()
        if name == "hinge":
            # the hinge loss of a +-1 classifier is twice its 0-1 loss
            return 2.0 * self.bayes_risk()
        return self._entropy_risk()


def _entropy(p):
    p = np.asarray(p, dtype=float)
    return -special.xlogy(p, p) - special.xlogy(1.0 - p, 1.0 - p)


class FlipClassification(_BinaryDist):
    """Labels ``sign(d(x))`` flipped with probability ``p(x) < 1/2``.

    ``flip`` is a constant or a callable on ``(n, dim)`` arrays.
    """

    def __init__(self, decision, flip=0.0, dim: int = 1, precompute_seed: int = 0):
        self.decision = decision
        self.flip = flip
        self.dim = int(dim)
        self._precompute_seed = precompute_seed
        self._mean_flip = None
        self._mean_entropy = None
        if not callable(flip) and not 0 <= flip < 0.5:
            raise ParameterError(f"flip probability must lie in [0, 1/2), got {flip}")

    def flip_prob(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if callable(self.flip):
            p = np.asarray(self.flip(X), dtype=float)
            if np.any((p < 0) | (p >= 0.5)):
                raise ParameterError("flip probability must lie in [0, 1/2) everywhere")
            return np.broadcast_to(p, (X.shape[0],))
        return np.full(X.shape[0], float(self.flip))

    def prob_pos(self, X):
        s = bayes_rule(self.decision(X))
        p = self.flip_prob(X)
        return np.where(s > 0, 1.0 - p, p)

    def bayes_classifier(self):
        return lambda X: bayes_rule(self.decision(X))

    def _sample(self, rng, m):
        X = _uniform_inputs(rng, m, self.dim)
        s = bayes_rule(self.decision(X))
        flipped = rng.random(m) < self.flip_prob(X)
        return X, np.where(flipped, -s, s)

    def _precompute(self):
        # E p(x) and E H(p(x)) over uniform inputs, in fixed-size blocks
        rng = _rng(self._precompute_seed)
        n, block = _PRECOMPUTE_MC, 1_000_000
        s_flip = s_ent = 0.0
        for _ in range(n // block):
            p = self.flip_prob(_uniform_inputs(rng, block, self.dim))
            s_flip += float(np.sum(p))
            s_ent += float(np.sum(_entropy(p)))
        self._mean_flip, self._mean_entropy = s_flip / n, s_ent / n

    def bayes_risk(self):
        if not callable(self.flip):
            return float(self.flip)
        if self._mean_flip is None:
            self._precompute()
        return self._mean_flip

    def _entropy_risk(self):
        if not callable(self.flip):
            return float(_entropy(self.flip))
        if self._mean_entropy is None:
            self._precompute()
        return self._mean_entropy

    def to_spec(self):
        if callable(self.flip) or not isinstance(self.decision, LinearDecision):
            raise ParameterError("only linear decisions with constant flip serialize")
        return {"type": "flip_classification", "dim": self.dim,
                "decision": self.decision.to_spec(), "flip": float(self.flip)}


class MarginClassification(_BinaryDist):
    """Tsybakov-type margin profile on the first coordinate.

    ``P(y = 1 | x) = 1/2 + sign(u) |u|^(1/s) / 2`` with ``u = x_0 - 1/2``, so
    the set where ``|P(y=1|x) - 1/2| <= delta`` has mass ``min(2 (2 delta)^s, 1)``.
    """

    def __init__(self, s: float, dim: int = 1):
        if not s > 0:
            raise ParameterError(f"margin exponent s must be > 0, got {s}")
        self.s = float(s)
        self.dim = int(dim)

    def prob_pos(self, X):
        u = np.asarray(X, dtype=float)[:, 0] - 0.5
        return 0.5 + np.sign(u) * np.abs(u) ** (1.0 / self.s) / 2.0

    def bayes_classifier(self):
        return lambda X: bayes_rule(np.asarray(X, dtype=float)[:, 0] - 0.5)

    def margin_mass(self, delta: float) -> float:
        if not delta > 0:
            raise ParameterError(f"delta must be > 0, got {delta}")
        return min(2.0 * (2.0 * delta) ** self.s, 1.0)

    def bayes_risk(self):
        # E min(eta, 1 - eta) = 1/2 - E|u|^(1/s) / 2 with u ~ U[-1/2, 1/2]
        a = 1.0 / self.s
        return 0.5 - 0.5 * 0.5 ** a / (a + 1.0)

    def _entropy_risk(self):
        a = 1.0 / self.s
        # symmetric in u, so integrate over [0, 1/2] and double
        val, _ = integrate.quad(lambda u: float(_entropy(0.5 + u ** a / 2.0)), 0.0, 0.5)
        return 2.0 * val

    def to_spec(self):
        return {"type": "margin_classification", "dim": self.dim, "s": self.s}


def margin_mass(dist: MarginClassification, delta: float) -> float:
    return dist.margin_mass(delta)


# ---------------------------------------------------------------------------
# configuration and CSV
# ---------------------------------------------------------------------------


def dist_from_spec(spec: dict) -> SyntheticDist:
    """Build a distribution from its JSON description.

    Examples::

        {"type": "flip_classification", "dim": 2,
         "decision": {"weights": [1, 1], "bias": -1}, "flip": 0.1}
        {"type": "regression_rkhs", "dim": 1, "noise_std": 0.1,
         "kernel": {"type": "gaussian", "bandwidth": 0.2},
         "n_centers": 5, "target_norm": 1.0, "target_seed": 0}
        {"type": "margin_classification", "dim": 1, "s": 1.0}
    """
    spec = dict(spec)
    kind = spec.get("type")
    dim = int(spec.get("dim", 1))
    if kind == "flip_classification":
        d = spec.get("decision", {"weights": [1.0] * dim, "bias": -0.5 * dim})
        dec = LinearDecision(tuple(float(w) for w in d["weights"]), float(d.get("bias", 0.0)))
        if len(dec.weights) != dim:
            raise ParameterError("decision weights must have length dim")
        return FlipClassification(dec, float(spec.get("flip", 0.0)), dim)
    if kind == "margin_classification":
        return MarginClassification(float(spec["s"]), dim)
    if kind == "regression_rkhs":
        if "target" in spec:
            target = KernelExpansion.from_dict(spec["target"])
            return RegressionRKHS(target, float(spec.get("noise_std", 0.0)), dim)
        k = kernel_from_spec(spec.get("kernel", {"type": "gaussian", "bandwidth": 0.2}))
        return RegressionRKHS.random(k, int(spec.get("n_centers", 5)),
                                     float(spec.get("noise_std", 0.0)), dim,
                                     float(spec.get("target_norm", 1.0)),
                                     spec.get("target_seed", 0))
    if kind == "median_regression":
        t = spec.get("target", {"weights": [1.0] * dim, "bias": 0.0})
        if "kernel" in t:
            target = KernelExpansion.from_dict(t)
        else:
            target = LinearDecision(tuple(float(w) for w in t["weights"]),
                                    float(t.get("bias", 0.0)))
        return MedianRegression(target, float(spec.get("noise_scale", 0.1)), dim)
    raise ParameterError(f"unknown distribution type {kind!r}")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(path, X, y) -> None:
    """Write a sample with header ``x0, ..., x{d-1}, y`` (LF line endings)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j}" for j in range(X.shape[1])] + ["y"])
        for row, label in zip(X, np.asarray(y, dtype=float)):
            w.writerow([_fmt(v) for v in row] + [_fmt(label)])


def read_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a sample written by :func:`write_csv` (last column is the label)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ParameterError(f"{path} holds no data rows")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    return data[:, :-1], data[:, -1]
