"""Probability weighting, utilities and the CPT value of discrete outcomes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, InvalidInputError
from .mdp import PROB_TOL


@dataclass(frozen=True)
class Identity:
    """w(k) = k, or u(x) = x."""

    name = "identity"


@dataclass(frozen=True)
class Prelec:
    """w(k) = exp(-beta * (-ln k)^eta)."""

    beta: float = 0.5
    eta: float = 0.9
    name = "prelec"

    def __post_init__(self):
        if not self.beta > 0:
            raise InvalidInputError(f"Prelec beta must be positive, got {self.beta}")
        if not 0 < self.eta < 1:
            raise InvalidInputError(f"Prelec eta must lie in (0, 1), got {self.eta}")


@dataclass(frozen=True)
class TverskyKahneman:
    """w(k) = k^eta / (k^eta + (1-k)^eta)^(1/eta)."""

    eta: float = 0.61
    name = "tk"

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise InvalidInputError(f"Tversky-Kahneman eta must lie in (0, 1], got {self.eta}")


@dataclass(frozen=True)
class PosynomialApprox:
    """Weighting given by a fitted posynomial (see :mod:`cptmdp.posy`)."""

    posynomial: "Posynomial"  # noqa: F821
    name = "posynomial"


WeightingSpec = Identity | Prelec | TverskyKahneman | PosynomialApprox


@dataclass(frozen=True)
class PowerGain:
    """u(x) = x^m on x >= 0."""

    m: float = 0.88
    name = "power"

    def __post_init__(self):
        if not 0 < self.m <= 1:
            raise InvalidInputError(f"utility exponent must lie in (0, 1], got {self.m}")


@dataclass(frozen=True)
class PowerLoss:
    """u(x) = -lam * |x|^m on x <= 0."""

    lam: float = 2.25
    m: float = 0.88
    name = "power-loss"

    def __post_init__(self):
        if not self.lam > 0:
            raise InvalidInputError(f"loss aversion must be positive, got {self.lam}")
        if not 0 < self.m <= 1:
            raise InvalidInputError(f"utility exponent must lie in (0, 1], got {self.m}")


UtilitySpec = Identity | PowerGain | PowerLoss


def _weighting_array(w: WeightingSpec, k: np.ndarray) -> np.ndarray:
    if isinstance(w, Identity):
        return k.copy()
    if isinstance(w, Prelec):
        out = np.zeros_like(k)
        pos = k > 0
        out[pos] = np.exp(-w.beta * (-np.log(k[pos])) ** w.eta)
        return out
    if isinstance(w, TverskyKahneman):
        num = k**w.eta
        return num / (num + (1.0 - k) ** w.eta) ** (1.0 / w.eta)
    if isinstance(w, PosynomialApprox):
        return w.posynomial(k)
    raise InvalidInputError(f"unknown weighting {w!r}")


def eval_weighting(w: WeightingSpec, k):
    """Evaluate a weighting function at probability ``k`` (scalar or array).

    Prelec is extended to k = 0 by its limit 0.
    """
    arr = np.asarray(k, dtype=float)
    if not np.all((arr >= 0.0) & (arr <= 1.0)):
        raise DomainError(f"weighting argument outside [0, 1]: {k!r}")
    out = _weighting_array(w, np.atleast_1d(arr))
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def eval_utility(u: UtilitySpec, x):
    """Evaluate a utility; gains utilities need x >= 0, loss utilities x <= 0."""
    arr = np.asarray(x, dtype=float)
    if isinstance(u, Identity):
        out = arr.copy()
    elif isinstance(u, PowerGain):
        if np.any(arr < 0):
            raise DomainError(f"gains utility needs x >= 0, got {x!r}")
        out = arr**u.m
    elif isinstance(u, PowerLoss):
        if np.any(arr > 0):
            raise DomainError(f"loss utility needs x <= 0, got {x!r}")
        out = -u.lam * np.abs(arr) ** u.m
    else:
        raise InvalidInputError(f"unknown utility {u!r}")
    return float(out) if arr.ndim == 0 else out


@dataclass(frozen=True)
class DiscreteOutcome:
    """A finitely supported random variable as (value, probability) atoms."""

    values: np.ndarray
    probs: np.ndarray

    def __init__(self, atoms: Sequence[tuple[float, float]]):
        vals = np.array([float(v) for v, _ in atoms])
        probs = np.array([float(p) for _, p in atoms])
        if vals.size == 0:
            raise InvalidInputError("a discrete outcome needs at least one atom")
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError("outcome values must be finite")
        if np.any(probs < 0) or np.any(probs > 1) or abs(probs.sum() - 1.0) > PROB_TOL:
            raise InvalidInputError("outcome probabilities must form a distribution")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "probs", probs)

    @property
    def mean(self) -> float:
        return float(self.values @ self.probs)


def _side_value(y: np.ndarray, p: np.ndarray, w: WeightingSpec) -> float:
    """sum_i (y_i - y_{i-1}) w(P(Y >= y_i)) over distinct positive atoms of Y."""
    keep = (y > 0) & (p > 0)
    y, p = y[keep], p[keep]
    if y.size == 0:
        return 0.0
    levels, inverse = np.unique(y, return_inverse=True)
    mass = np.bincount(inverse, weights=p, minlength=levels.size)
    tails = np.clip(np.cumsum(mass[::-1])[::-1], 0.0, 1.0)
    steps = np.diff(levels, prepend=0.0)
    return float(steps @ eval_weighting(w, tails))


def cpt_value_discrete(
    X: DiscreteOutcome,
    w_plus: WeightingSpec = Identity(),
    w_minus: WeightingSpec = Identity(),
    u_plus: UtilitySpec = Identity(),
    u_minus: UtilitySpec = Identity(),
) -> float:
    """CPT value of a discrete random variable: weighted gains minus weighted losses.

    Gains are ``u_plus(X)`` on ``X > 0``. For losses, ``u_minus`` may be either
    sign convention: its magnitude on ``X < 0`` is what gets weighted.
    """
    gains = X.values > 0
    losses = X.values < 0
    y_gain = np.zeros_like(X.values)
    y_gain[gains] = eval_utility(u_plus, X.values[gains])
    y_loss = np.zeros_like(X.values)
    if losses.any():
        if isinstance(u_minus, PowerLoss):
            y_loss[losses] = -eval_utility(u_minus, X.values[losses])
        else:
            y_loss[losses] = np.abs(eval_utility(u_minus, X.values[losses]))
    return _side_value(y_gain, X.probs, w_plus) - _side_value(y_loss, X.probs, w_minus)


@dataclass(frozen=True)
class TailCurve:
    """Ascending thresholds with P(value >= threshold) and the states behind each."""

    thresholds: np.ndarray
    tails: np.ndarray
    groups: tuple

    def area(self, w: WeightingSpec = Identity()) -> float:
        steps = np.diff(self.thresholds, prepend=0.0)
        return float(steps @ eval_weighting(w, np.clip(self.tails, 0.0, 1.0)))


def tail_curve(successor_values: Mapping, mix: Mapping) -> TailCurve:
    """Sort successors by value (ties by id order) and accumulate tail mass.

    Equal values share one threshold, so the increment between them is 0.
    """
    order = sorted(successor_values, key=lambda s: (successor_values[s], _sort_key(s)))
    thresholds, groups = [], []
    for s in order:
        v = float(successor_values[s])
        if thresholds and v == thresholds[-1]:
            groups[-1].append(s)
        else:
            thresholds.append(v)
            groups.append([s])
    mass = np.array([sum(float(mix.get(s, 0.0)) for s in g) for g in groups])
    tails = np.cumsum(mass[::-1])[::-1]
    return TailCurve(np.array(thresholds), tails, tuple(tuple(g) for g in groups))


def _sort_key(s):
    return (0, s) if isinstance(s, (int, float)) and not isinstance(s, bool) else (1, repr(s))

