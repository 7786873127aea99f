"""Stage problems over the action simplex and the convex-concave procedure.

One stage problem is the choice of a randomized action distribution sigma at a
single (state, time). Successor values are sorted into thresholds y_1 < ... <
y_Q, and the objective is

    f(sigma) = sum_q D_q * sum_k c_k * (t_q . sigma)^a_k  +  g . sigma

where D_q are utility increments, t_q . sigma is the probability of reaching a
successor worth at least y_q, (c_k, a_k) is the weighting posynomial and g an
optional affine term. ``sense`` is +1 to maximize f and -1 to minimize it; the
solver always maximizes ``sense * f``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cpt import Identity, UtilitySpec, eval_utility
from .errors import InvalidInputError, NumericalFailure
from .mdp import Mdp, first_best, tie_tolerance
from .posy import Posynomial

BASE_CLAMP = 1e-12
SIMPLEX_TOL = 1e-7
MAX_VERTEX_STARTS = 8


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1} (sort-and-threshold)."""
    v = np.asarray(v, dtype=float)
    if v.size == 1:
        return np.ones(1)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    rho = np.nonzero(u * ks > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def on_simplex(sigma: np.ndarray, tol: float = SIMPLEX_TOL) -> bool:
    sigma = np.asarray(sigma, dtype=float)
    return bool(np.all(sigma >= -tol) and abs(sigma.sum() - 1.0) <= tol)


@dataclass(frozen=True)
class DcStageProblem:
    actions: tuple
    thresholds: np.ndarray
    increments: np.ndarray
    tails: np.ndarray
    coeffs: np.ndarray
    exponents: np.ndarray
    linear: np.ndarray
    sense: int = 1
    groups: tuple = ()

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def _powers(self, sigma):
        x = np.maximum(self.tails @ sigma, BASE_CLAMP)
        return x, x[:, None] ** self.exponents

    def value(self, sigma: np.ndarray) -> float:
        _, xa = self._powers(sigma)
        return float(self.increments @ (xa @ self.coeffs) + self.linear @ sigma)

    def gradient(self, sigma: np.ndarray) -> np.ndarray:
        x, xa = self._powers(sigma)
        dphi = (xa / x[:, None]) @ (self.coeffs * self.exponents)
        return self.tails.T @ (self.increments * dphi) + self.linear

    @property
    def is_constant(self) -> bool:
        """True when no term depends on sigma within the simplex."""
        varying = np.ptp(self.tails, axis=1) > 0 if self.tails.size else np.zeros(0, bool)
        return not (np.any(varying & (self.increments != 0)) or np.ptp(self.linear) > 0)


def _as_value_vector(m: Mdp, next_values) -> np.ndarray:
    if isinstance(next_values, Mapping):
        c = m.compiled
        out = np.full(c.n, np.nan)
        for s, v in next_values.items():
            out[c.index[s]] = float(v)
        return out
    return np.asarray(next_values, dtype=float)


def build_stage_objective(
    s,
    next_values,
    m: Mdp,
    p: Posynomial,
    u: UtilitySpec = Identity(),
    *,
    offset: float = 0.0,
    linear: np.ndarray | None = None,
    sense: int = 1,
) -> DcStageProblem:
    """Stage problem for state ``s`` given values of its successors.

    ``next_values`` is a mapping state -> value or a vector in state order; only
    successors of ``s`` are read. ``offset`` is a constant added to every
    successor value before the utility (the state cost C(s)). The first
    increment is measured from u(0) = 0, so it carries the constant part of
    the objective. ``linear`` is an affine term in sigma added unchanged.
    """
    c = m.compiled
    i = c.index[s]
    succ, P_local = c.local(i)
    vals = _as_value_vector(m, next_values)[succ] + offset
    if not np.all(np.isfinite(vals)):
        raise InvalidInputError(f"successor values of state {s!r} are undefined")
    order = np.lexsort((succ, vals))
    vals, succ, P_local = vals[order], succ[order], P_local[order]
    starts = np.flatnonzero(np.diff(vals, prepend=np.nan) != 0)
    levels = vals[starts]
    mass = np.add.reduceat(P_local, starts, axis=0)
    tails = np.clip(np.cumsum(mass[::-1], axis=0)[::-1], 0.0, 1.0)
    tails[0, :] = 1.0
    utils = np.atleast_1d(eval_utility(u, levels))
    increments = np.diff(utils, prepend=0.0)
    bounds = list(starts) + [len(succ)]
    groups = tuple(
        tuple(m.states[j] for j in succ[bounds[q] : bounds[q + 1]]) for q in range(len(starts))
    )
    n_a = len(m.actions[s])
    lin = np.zeros(n_a) if linear is None else np.asarray(linear, dtype=float)
    return DcStageProblem(
        actions=tuple(m.actions[s]),
        thresholds=levels,
        increments=increments,
        tails=tails,
        coeffs=np.asarray(p.coeffs),
        exponents=np.asarray(p.exponents),
        linear=lin,
        sense=sense,
        groups=groups,
    )


def stage_objective_value(prob: DcStageProblem, sigma) -> float:
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (prob.n_actions,) or not on_simplex(sigma):
        raise InvalidInputError(f"policy {sigma} is not on the action simplex")
    return prob.value(sigma)


@dataclass(frozen=True)
class Surrogate:
    """Concave minorant of ``sense * f`` that is tight at the expansion point.

    ``kept`` holds the signed weights sense*D_q*c_k of the terms left as
    powers; the other terms are replaced by the affine ``slope . x + const``
    where x = tails . sigma.
    """

    tails: np.ndarray
    kept: np.ndarray
    exponents: np.ndarray
    slope: np.ndarray
    const: float
    linear: np.ndarray
    is_linear: bool

    def value(self, sigma) -> float:
        x = np.maximum(self.tails @ sigma, BASE_CLAMP)
        xa = x[:, None] ** self.exponents
        return float(np.sum(self.kept * xa) + self.slope @ x + self.const + self.linear @ sigma)

    def value_and_gradient(self, sigma):
        x = np.maximum(self.tails @ sigma, BASE_CLAMP)
        xa = x[:, None] ** self.exponents
        f = float(np.sum(self.kept * xa) + self.slope @ x + self.const + self.linear @ sigma)
        dx = (self.kept * xa * self.exponents).sum(axis=1) / x + self.slope
        return f, self.tails.T @ dx + self.linear

    def linear_coefficients(self) -> np.ndarray:
        """Gradient of a linear surrogate, valid on the simplex."""
        ones = self.exponents == 1.0
        w = self.kept[:, ones].sum(axis=1) + self.slope
        return self.tails.T @ w + self.linear


def convexify(prob: DcStageProblem, sigma0) -> Surrogate:
    """Linearize the terms of ``sense * f`` that are convex at ``sigma0``.

    For maximization these are the a_k > 1 terms with positive weight; for
    minimization the a_k < 1 ones. Everything else passes through unchanged.
    """
    sigma0 = np.asarray(sigma0, dtype=float)
    x0 = np.maximum(prob.tails @ sigma0, BASE_CLAMP)
    W = prob.sense * prob.increments[:, None] * prob.coeffs[None, :]
    a = prob.exponents[None, :]
    lin = ((W > 0) & (a > 1.0)) | ((W < 0) & (a < 1.0))
    x0a = x0[:, None] ** a
    Wl = np.where(lin, W, 0.0)
    slope = (Wl * a * x0a / x0[:, None]).sum(axis=1)
    const = float((Wl * (1.0 - a) * x0a).sum())
    kept = np.where(lin, 0.0, W)
    varying = np.ptp(prob.tails, axis=1) > 0
    curved = (kept != 0) & (a != 1.0) & varying[:, None]
    return Surrogate(
        tails=prob.tails,
        kept=kept,
        exponents=prob.exponents,
        slope=slope,
        const=const,
        linear=prob.sense * prob.linear,
        is_linear=not curved.any(),
    )


def maximize_concave_over_simplex(
    surrogate: Surrogate, start, tol: float = 1e-8, max_iter: int = 500
) -> np.ndarray:
    """Projected-gradient ascent with Armijo backtracking on the simplex.

    A linear surrogate is maximized exactly at its best vertex (lowest index on
    ties). Stops when ||x - P(x + grad)|| <= tol, when a step no longer moves
    the iterate, or after ``max_iter`` iterations.
    """
    x = np.asarray(start, dtype=float)
    if x.size == 1:
        return np.ones(1)
    if surrogate.is_linear:
        coef = surrogate.linear_coefficients()
        j = int(first_best(coef))
        if coef[j] - coef @ x <= tie_tolerance(coef[j]):
            return x.copy()
        out = np.zeros_like(x)
        out[j] = 1.0
        return out

    f, g = surrogate.value_and_gradient(x)
    if not np.all(np.isfinite(g)):
        raise NumericalFailure(f"non-finite surrogate gradient at {x}")
    step = 1.0 / max(np.abs(g).max(), 1e-12)
    for _ in range(max_iter):
        if np.linalg.norm(x - project_simplex(x + g)) <= tol:
            break
        while True:
            x_new = project_simplex(x + step * g)
            f_new, g_new = surrogate.value_and_gradient(x_new)
            if f_new >= f + 1e-4 * (g @ (x_new - x)):
                break
            step *= 0.5
            if step < 1e-30:
                return x
        if not np.all(np.isfinite(g_new)):
            bad = np.flatnonzero(~np.isfinite(g_new))
            raise NumericalFailure(f"non-finite gradient in coordinates {bad.tolist()} at {x_new}")
        moved = np.abs(x_new - x).max()
        x, f, g = x_new, f_new, g_new
        if moved <= 1e-15:
            break
        step *= 2.0
    return x


@dataclass
class CcpTrace:
    """Per-start history of CCP rounds; round 0 is the start point."""

    start: list = field(default_factory=list)
    round: list = field(default_factory=list)
    sigma: list = field(default_factory=list)
    surrogate: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    sense: int = 1
    best_start: int = 0

    def record(self, start_idx, rnd, sigma, surrogate_value, objective):
        self.start.append(start_idx)
        self.round.append(rnd)
        self.sigma.append(np.array(sigma, copy=True))
        self.surrogate.append(float(surrogate_value))
        self.objective.append(float(objective))

    def sequences(self):
        """Objective sequence for each start, in round order."""
        out: dict[int, list[float]] = {}
        for s, f in zip(self.start, self.objective):
            out.setdefault(s, []).append(f)
        return out

    def is_monotone(self, tol: float = 1e-9) -> bool:
        for seq in self.sequences().values():
            d = self.sense * np.diff(seq)
            if np.any(d < -tol):
                return False
        return True

    def max_simplex_violation(self) -> float:
        worst = 0.0
        for s in self.sigma:
            worst = max(worst, float(max(-s.min(), 0.0)), abs(float(s.sum()) - 1.0))
        return worst

    @property
    def rounds(self) -> int:
        return max(self.round) if self.round else 0


def default_starts(n_actions: int, max_vertices: int = MAX_VERTEX_STARTS) -> list[np.ndarray]:
    """The first ``max_vertices`` vertices followed by the uniform distribution.

    Vertices come first so that exact ties resolve to the lowest action index.
    """
    eye = np.eye(n_actions)
    starts = list(eye[: min(n_actions, max_vertices)])
    starts.append(np.full(n_actions, 1.0 / n_actions))
    return starts


def ccp_solve_stage(
    prob: DcStageProblem,
    starts: Sequence | None = None,
    tol: float = 1e-6,
    max_iter: int = 50,
    *,
    inner_tol: float = 1e-8,
    inner_max_iter: int = 500,
):
    """Run the convex-concave procedure from each start; keep the best endpoint.

    Each round linearizes the convex part at the current point and maximizes
    the concave surrogate from there, so ``sense * f`` never decreases. A round
    that would decrease it (possible only through floating point) is rejected
    and ends that start. Returns ``(sigma, value, trace)``.
    """
    n = prob.n_actions
    starts = default_starts(n) if starts is None else list(starts)
    if not starts:
        raise InvalidInputError("at least one start point is required")
    unique = []
    for st in starts:
        st = np.asarray(st, dtype=float)
        if st.shape != (n,) or not on_simplex(st):
            raise InvalidInputError(f"start {st} is not on the action simplex")
        st = project_simplex(st)
        if not any(np.array_equal(st, u) for u in unique):
            unique.append(st)

    trace = CcpTrace(sense=prob.sense)
    if n == 1 or prob.is_constant:
        # every action is equally good; pick the first, as value iteration does
        sigma = np.eye(n)[0]
        f = prob.value(sigma)
        trace.record(0, 0, sigma, f * prob.sense, f)
        trace.record(0, 1, sigma, f * prob.sense, f)
        return sigma, f, trace

    best_sigma, best_f = None, None
    for si, sigma in enumerate(unique):
        f = prob.value(sigma)
        trace.record(si, 0, sigma, prob.sense * f, f)
        for rnd in range(1, max_iter + 1):
            sur = convexify(prob, sigma)
            new = maximize_concave_over_simplex(sur, sigma, inner_tol, inner_max_iter)
            f_new = prob.value(new)
            gain = prob.sense * (f_new - f)
            if gain < 0.0:
                break
            sigma, f = new, f_new
            trace.record(si, rnd, sigma, sur.value(sigma), f)
            if gain < tol:
                break
        if best_f is None or prob.sense * (f - best_f) > tie_tolerance(best_f):
            best_sigma, best_f = sigma, f
            trace.best_start = si
    return best_sigma, best_f, trace
