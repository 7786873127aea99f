"""Posynomial approximation of probability weighting functions.

A weighting function is fitted by nonnegative least squares over a basis of
monomials k^a with real exponents a > 0. Terms with a <= 1 are concave and
terms with a > 1 convex, which is the split the stage solver relies on.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from decimal import Decimal

import numpy as np
from numpy.polynomial import chebyshev, polynomial
from scipy.optimize import nnls

from .cpt import Identity, WeightingSpec, eval_weighting
from .errors import InvalidInputError, ModelParseError

PRUNE_BELOW = 1e-8
KKT_TOL = 1e-10

# Coefficients published for exp(-0.5 (-ln k)^0.9), full precision.
PUBLISHED_PRELEC_FIT = (
    (0.00231642258521069, 0.05),
    (0.00128356642708694, 0.1),
    (0.195783466331253, 0.35),
    (0.598977890286512, 0.4),
    (0.159689481206954, 0.95),
    (0.0331820175871778, 3.0),
    (0.00847475103416698, 23.0),
)


@dataclass(frozen=True)
class Posynomial:
    """Sum of c_k * k^a_k with c_k >= 0 and a_k > 0."""

    coeffs: tuple
    exponents: tuple

    def __post_init__(self):
        c = tuple(float(x) for x in self.coeffs)
        a = tuple(float(x) for x in self.exponents)
        if len(c) != len(a) or not c:
            raise InvalidInputError("a posynomial needs matching, nonempty coefficient and exponent lists")
        if any(not np.isfinite(x) or x < 0 for x in c):
            raise InvalidInputError(f"posynomial coefficients must be nonnegative: {c}")
        if any(not np.isfinite(x) or x <= 0 for x in a):
            raise InvalidInputError(f"posynomial exponents must be positive: {a}")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "exponents", a)

    @classmethod
    def from_terms(cls, terms) -> "Posynomial":
        terms = list(terms)
        return cls(tuple(c for c, _ in terms), tuple(a for _, a in terms))

    @classmethod
    def identity(cls) -> "Posynomial":
        return cls((1.0,), (1.0,))

    @classmethod
    def published(cls) -> "Posynomial":
        return cls.from_terms(PUBLISHED_PRELEC_FIT)

    @property
    def terms(self) -> list[tuple[float, float]]:
        return list(zip(self.coeffs, self.exponents))

    @property
    def total(self) -> float:
        """Value at k = 1."""
        return float(sum(self.coeffs))

    @property
    def is_identity(self) -> bool:
        return all(a == 1.0 for a in self.exponents)

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        c = np.array(self.coeffs)
        a = np.array(self.exponents)
        return (k[..., None] ** a) @ c

    def normalized(self) -> "Posynomial":
        s = self.total
        if s <= 0:
            raise InvalidInputError("cannot normalize a zero posynomial")
        return Posynomial(tuple(c / s for c in self.coeffs), self.exponents)

    def to_json(self) -> list[dict]:
        return [{"c": repr(c), "a": repr(a)} for c, a in self.terms]

    @classmethod
    def from_json(cls, doc, where: str = "terms") -> "Posynomial":
        try:
            return cls.from_terms((float(Decimal(str(t["c"]))), float(Decimal(str(t["a"])))) for t in doc)
        except (KeyError, TypeError, ArithmeticError, ValueError) as exc:
            raise ModelParseError(f"bad posynomial term list: {exc}", field=where) from exc


@dataclass(frozen=True)
class GridSpec:
    """Sample points in (0, 1]: log-spaced near 0 followed by uniform points."""

    log_points: int = 1000
    log_range: tuple = (1e-6, 0.1)
    uniform_points: int = 1000
    uniform_range: tuple = (0.1, 1.0)

    def points(self) -> np.ndarray:
        parts = []
        if self.log_points:
            lo, hi = self.log_range
            parts.append(np.logspace(np.log10(lo), np.log10(hi), self.log_points))
        if self.uniform_points:
            lo, hi = self.uniform_range
            parts.append(np.linspace(lo, hi, self.uniform_points))
        return np.unique(np.concatenate(parts))

    def describe(self) -> str:
        return (
            f"log{self.log_points}[{self.log_range[0]:g},{self.log_range[1]:g}]"
            f"+uniform{self.uniform_points}[{self.uniform_range[0]:g},{self.uniform_range[1]:g}]"
        )

    @classmethod
    def uniform(cls, n: int = 2000, lo: float = 0.0, hi: float = 1.0) -> "GridSpec":
        return cls(0, (1e-6, 0.1), n, (lo, hi))


EVAL_STEP = 1e-3


def evaluation_grid() -> np.ndarray:
    """The independent 1e-3 grid over [0, 1] used for every error report."""
    return np.linspace(0.0, 1.0, int(round(1 / EVAL_STEP)) + 1)


@dataclass(frozen=True)
class FitReport:
    target: str
    term_count: int
    max_abs_error: float
    mean_abs_error: float
    argmax_k: float
    grid: str
    eval_grid: str = f"uniform step {EVAL_STEP:g} on [0,1]"
    kkt_residual: float = 0.0
    warnings: tuple = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return {
            "target": self.target,
            "term_count": self.term_count,
            "max_abs_error": self.max_abs_error,
            "mean_abs_error": self.mean_abs_error,
            "argmax_k": self.argmax_k,
            "grid": self.grid,
            "eval_grid": self.eval_grid,
            "kkt_residual": self.kkt_residual,
            "warnings": list(self.warnings),
        }


def weighting_id(w: WeightingSpec) -> str:
    if isinstance(w, Identity):
        return "identity"
    params = ",".join(f"{k}={v:g}" for k, v in vars(w).items() if isinstance(v, float))
    return f"{w.name}({params})"


def _report(target, approx, n_terms, grid_desc, kkt=0.0, notes=()) -> FitReport:
    k = evaluation_grid()
    err = np.abs(approx(k) - eval_weighting(target, k))
    return FitReport(
        target=weighting_id(target),
        term_count=n_terms,
        max_abs_error=float(err.max()),
        mean_abs_error=float(err.mean()),
        argmax_k=float(k[np.argmax(err)]),
        grid=grid_desc,
        kkt_residual=float(kkt),
        warnings=tuple(notes),
    )


def report_for(target: WeightingSpec, p: Posynomial, grid_desc: str = "given coefficients") -> FitReport:
    """Error report of an existing posynomial against ``target``."""
    return _report(target, p, len(p.coeffs), grid_desc)


def default_basis() -> list[float]:
    return [0.05, 0.1, 0.35, 0.4, 0.95, 3.0, 23.0]


def design_matrix(k: np.ndarray, basis) -> np.ndarray:
    return np.asarray(k, dtype=float)[:, None] ** np.asarray(basis, dtype=float)[None, :]


def nnls_objective(p: Posynomial, target: WeightingSpec, grid: GridSpec | None = None) -> float:
    """Sum of squared residuals of ``p`` against ``target`` on the fitting grid."""
    k = (grid or GridSpec()).points()
    r = p(k) - eval_weighting(target, k)
    return float(r @ r)


def kkt_residual(A: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    """Largest violation of the NNLS optimality conditions at ``c``."""
    g = A.T @ (A @ c - b)
    active = c > 0
    viol = np.where(active, np.abs(g), np.maximum(0.0, -g))
    return float(viol.max()) if viol.size else 0.0


def fit_posynomial(
    target: WeightingSpec,
    basis=None,
    grid: GridSpec | None = None,
    *,
    normalize: bool = False,
) -> tuple[Posynomial, FitReport]:
    """Nonnegative least-squares fit of ``target`` over the monomial ``basis``.

    Coefficients below 1e-8 are dropped. With ``normalize`` the result is
    rescaled so that its value at 1 is exactly 1.
    """
    basis = default_basis() if basis is None else [float(a) for a in basis]
    if not basis:
        raise InvalidInputError("the monomial basis is empty")
    if any(a <= 0 for a in basis):
        raise InvalidInputError(f"basis exponents must be positive: {basis}")
    grid = grid or GridSpec()
    k = grid.points()
    if k.min() <= 0 or k.max() > 1:
        raise InvalidInputError("fitting grid must lie in (0, 1]")
    if k.size < 10 * len(basis):
        raise InvalidInputError(f"fitting grid has {k.size} points, need at least {10 * len(basis)}")

    A = design_matrix(k, basis)
    b = eval_weighting(target, k)
    notes = []
    rank = np.linalg.matrix_rank(A)
    if rank < len(basis):
        notes.append(f"basis is numerically rank deficient (rank {rank} < {len(basis)})")
    c, _ = nnls(A, b, maxiter=50 * len(basis))
    # Polish on the support; NNLS stops at its own tolerance.
    support = c > 0
    if support.any():
        sol, *_ = np.linalg.lstsq(A[:, support], b, rcond=None)
        if np.all(sol > 0):
            c = np.zeros_like(c)
            c[support] = sol
    kkt = kkt_residual(A, b, c)
    if kkt > KKT_TOL * max(1.0, float(np.abs(A.T @ b).max())):
        notes.append(f"KKT residual {kkt:.3g} above tolerance")

    keep = c >= PRUNE_BELOW
    if not keep.any():
        raise InvalidInputError("all fitted coefficients vanished")
    p = Posynomial(tuple(c[keep]), tuple(np.asarray(basis)[keep]))
    if normalize:
        p = p.normalized()
    return p, _report(target, p, len(p.coeffs), grid.describe(), kkt, notes)


def select_basis(
    target: WeightingSpec,
    candidates=None,
    grid: GridSpec | None = None,
    *,
    min_improvement: float = 1e-4,
    max_terms: int | None = None,
) -> tuple[Posynomial, FitReport]:
    """Greedy forward selection of exponents, stopping when max error stalls."""
    if candidates is None:
        candidates = [round(0.05 * j, 2) for j in range(1, 20)] + [2.0, 3.0, 5.0, 10.0, 23.0]
    chosen: list[float] = []
    best = None
    remaining = list(candidates)
    while remaining and (max_terms is None or len(chosen) < max_terms):
        trials = []
        for a in remaining:
            p, rep = fit_posynomial(target, chosen + [a], grid)
            trials.append((rep.max_abs_error, a, p, rep))
        err, a, p, rep = min(trials, key=lambda x: (x[0], x[1]))
        if best is not None and best[1].max_abs_error - err < min_improvement:
            break
        chosen.append(a)
        remaining.remove(a)
        best = (p, rep)
    return best


@dataclass(frozen=True)
class DcSplit:
    concave_terms: tuple
    convex_terms: tuple


def classify_terms(p: Posynomial) -> DcSplit:
    """Split terms into concave (a <= 1, affine included) and convex (a > 1)."""
    concave = tuple((c, a) for c, a in p.terms if a <= 1.0)
    convex = tuple((c, a) for c, a in p.terms if a > 1.0)
    return DcSplit(concave, convex)


def fit_polynomial_baseline(
    target: WeightingSpec,
    degree: int,
    grid: GridSpec | None = None,
    *,
    kind: str = "power",
):
    """Ordinary least-squares polynomial fit, kept only as a comparison baseline.

    ``kind="power"`` fits monomials 1, k, ..., k^degree on ``grid`` (uniform by
    default). ``kind="chebyshev"`` interpolates at Chebyshev points of [0, 1].
    Returns the fitted numpy series and its error report.
    """
    if degree < 1:
        raise InvalidInputError("polynomial degree must be at least 1")
    if kind == "power":
        grid = grid or GridSpec.uniform()
        k = grid.points()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", getattr(np, "RankWarning", getattr(np.exceptions, "RankWarning", Warning)))
            series = polynomial.Polynomial.fit(k, eval_weighting(target, k), degree, domain=[0, 1], window=[-1, 1])
        desc = grid.describe()
    elif kind == "chebyshev":
        nodes = 0.5 * (1.0 + np.cos(np.pi * (np.arange(degree + 1) + 0.5) / (degree + 1)))
        series = chebyshev.Chebyshev.fit(nodes, eval_weighting(target, nodes), degree, domain=[0, 1])
        desc = f"chebyshev{degree + 1} nodes on [0,1]"
    else:
        raise InvalidInputError(f"unknown polynomial basis {kind!r}")
    return series, _report(target, series, degree + 1, desc)
