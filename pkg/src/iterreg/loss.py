"""
Convex losses ``V(y, a)`` with left derivatives and growth constants.

Every loss works elementwise on numpy arrays.  ``left_derivative`` returns
the left derivative in the second argument; at kinks this is the one-sided
slope from below, never an arbitrary subgradient.

The exponential loss ``exp(-y a)`` is deliberately absent: its derivative
grows faster than any polynomial, so no growth exponent ``q`` exists for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import LabelError, ParameterError

__all__ = [
    "Loss",
    "Square",
    "Absolute",
    "PLoss",
    "Hinge",
    "EpsInsensitive",
    "EpsInsensitiveP",
    "Logistic",
    "GrowthParams",
    "growth_params",
    "get_loss",
    "LOSS_NAMES",
]


class GrowthParams(NamedTuple):
    """Constants of ``|V'_-(y, a)| <= c_q (1 + |a|^q)`` plus ``|V|_0`` and ``L``."""

    q: float
    c_q: float
    v0: float
    L: float | None


@dataclass(frozen=True)
class Loss:
    """Base class for convex losses.

    ``label_bound`` is the bound ``B >= |y|`` used by regression losses to
    produce their growth constants; classification losses ignore it.
    """

    name = "loss"
    classification = False
    label_bound: float | None = field(default=None, kw_only=True)

    # unchecked kernels, used by the engine's inner loop
    def _value(self, y, a):
        raise NotImplementedError

    def _left_derivative(self, y, a):
        raise NotImplementedError

    def check_labels(self, y) -> None:
        if self.classification:
            y = np.asarray(y)
            if not np.all((y == 1) | (y == -1)):
                raise LabelError(f"{self.name} loss needs labels in {{-1, +1}}")

    def value(self, y, a):
        self.check_labels(y)
        return _unwrap(self._value(np.asarray(y, float), np.asarray(a, float)))

    def left_derivative(self, y, a):
        self.check_labels(y)
        return _unwrap(self._left_derivative(np.asarray(y, float), np.asarray(a, float)))

    @property
    def smooth(self) -> bool:
        return self._params(1.0).L is not None

    def with_label_bound(self, B: float) -> "Loss":
        from dataclasses import replace
        return replace(self, label_bound=float(B))

    def _params(self, B: float) -> GrowthParams:
        raise NotImplementedError

    def to_spec(self) -> dict:
        spec = {"name": self.name}
        for k, v in self.__dict__.items():
            if k != "label_bound" and v is not None:
                spec[k] = v
        if self.label_bound is not None:
            spec["label_bound"] = self.label_bound
        return spec


def _unwrap(x):
    return float(x) if np.ndim(x) == 0 else x


@dataclass(frozen=True)
class Square(Loss):
    name = "square"

    def _value(self, y, a):
        return (y - a) ** 2

    def _left_derivative(self, y, a):
        return 2.0 * (a - y)

    def _params(self, B):
        # |2(a - y)| <= 2|a| + 2B <= 2 max(1, B) (1 + |a|)
        return GrowthParams(1.0, 2.0 * max(1.0, B), B ** 2, 2.0)


@dataclass(frozen=True)
class Absolute(Loss):
    name = "absolute"

    def _value(self, y, a):
        return np.abs(y - a)

    def _left_derivative(self, y, a):
        return np.where(a <= y, -1.0, 1.0)

    def _params(self, B):
        return GrowthParams(0.0, 0.5, B, None)


@dataclass(frozen=True)
class PLoss(Loss):
    """``|y - a|^p`` for an integer ``p >= 1``."""

    name = "p_loss"
    p: int = 2

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ParameterError(f"p must be an integer >= 1, got {self.p}")

    def _value(self, y, a):
        return np.abs(y - a) ** int(self.p)

    def _left_derivative(self, y, a):
        p = int(self.p)
        d = a - y
        if p == 1:
            return np.where(d <= 0, -1.0, 1.0)
        return p * np.sign(d) * np.abs(d) ** (p - 1)

    def _params(self, B):
        p = int(self.p)
        if p == 1:
            return GrowthParams(0.0, 0.5, B, None)
        q = p - 1.0
        # p (|a| + B)^q <= p 2^(q-1) max(1, B)^q (1 + |a|^q)
        c_q = p * 2.0 ** (q - 1.0) * max(1.0, B) ** q
        return GrowthParams(q, c_q, B ** p, 2.0 if p == 2 else None)


@dataclass(frozen=True)
class Hinge(Loss):
    name = "hinge"
    classification = True

    def _value(self, y, a):
        return np.maximum(1.0 - y * a, 0.0)

    def _left_derivative(self, y, a):
        # y = +1: kink at a = 1 and the slope just left of it is -1.
        # y = -1: kink at a = -1 and the slope just left of it is 0.
        z = y * a
        return np.where(np.where(y > 0, z <= 1.0, z < 1.0), -y, 0.0)

    def _params(self, B):
        return GrowthParams(0.0, 0.5, 1.0, None)


@dataclass(frozen=True)
class EpsInsensitive(Loss):
    """``max(|y - a| - eps, 0)``."""

    name = "eps_insensitive"
    eps: float = 0.1

    def __post_init__(self):
        if not self.eps > 0:
            raise ParameterError(f"eps must be > 0, got {self.eps}")

    def _value(self, y, a):
        return np.maximum(np.abs(y - a) - self.eps, 0.0)

    def _left_derivative(self, y, a):
        d = a - y
        return np.where(d <= -self.eps, -1.0, np.where(d <= self.eps, 0.0, 1.0))

    def _params(self, B):
        return GrowthParams(0.0, 0.5, max(B - self.eps, 0.0), None)


@dataclass(frozen=True)
class EpsInsensitiveP(Loss):
    """``max(|y - a|^p - eps, 0)`` with real ``p > 1``."""

    name = "eps_insensitive_p"
    eps: float = 0.1
    p: float = 2.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ParameterError(f"eps must be > 0, got {self.eps}")
        if not self.p > 1:
            raise ParameterError(f"p must be > 1, got {self.p}")

    def _value(self, y, a):
        return np.maximum(np.abs(y - a) ** self.p - self.eps, 0.0)

    def _left_derivative(self, y, a):
        d = a - y
        r = self.eps ** (1.0 / self.p)
        slope = self.p * np.sign(d) * np.abs(d) ** (self.p - 1.0)
        return np.where((d <= -r) | (d > r), slope, 0.0)

    def _params(self, B):
        q = self.p - 1.0
        c_q = self.p * 2.0 ** max(q - 1.0, 0.0) * max(1.0, B) ** q
        return GrowthParams(q, c_q, max(B ** self.p - self.eps, 0.0), None)


@dataclass(frozen=True)
class Logistic(Loss):
    """``log(1 + exp(-y a))``."""

    name = "logistic"
    classification = True

    def _value(self, y, a):
        return np.logaddexp(0.0, -y * a)

    def _left_derivative(self, y, a):
        # -y / (1 + exp(y a)), written to avoid overflow
        z = y * a
        return -y * np.exp(-np.logaddexp(0.0, z))

    def _params(self, B):
        return GrowthParams(0.0, 1.0, math.log(2.0), 1.0)


def growth_params(loss: Loss, label_bound: float | None = None) -> GrowthParams:
    """Return ``(q, c_q, |V|_0, L)`` for ``loss``.

    Regression losses need a label bound, taken from ``label_bound`` or the
    loss's own ``label_bound`` field.
    """
    B = label_bound if label_bound is not None else loss.label_bound
    if loss.classification:
        B = 1.0
    elif B is None:
        raise ParameterError(
            f"{loss.name} loss needs a label bound B >= max |y| for its constants")
    elif not B >= 0:
        raise ParameterError(f"label bound must be >= 0, got {B}")
    return loss._params(float(B))


LOSS_NAMES = {
    "square": Square,
    "absolute": Absolute,
    "p_loss": PLoss,
    "hinge": Hinge,
    "eps_insensitive": EpsInsensitive,
    "eps_insensitive_p": EpsInsensitiveP,
    "logistic": Logistic,
}


def get_loss(name: str, **params) -> Loss:
    """Construct a loss from its configuration name."""
    key = name.lower()
    if key == "exponential":
        raise ParameterError(
            "the exponential loss violates the polynomial growth condition "
            "for every finite q and is not supported")
    try:
        cls = LOSS_NAMES[key]
    except KeyError:
        raise ParameterError(
            f"unknown loss {name!r}; choose one of {sorted(LOSS_NAMES)}") from None
    return cls(**params)
