"""
Mixture function xi of the vector mixed p-spin family, its derived quantities,
hypothesis validation, and the single-spin measure P_1 with its overlap hull.

The family is xi(a) = sum_p B_p . a^{op}, where a^{op} is the entry-wise p-th
power and B_p = beta_p beta_p^T.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import linprog, minimize

from .errors import ConfigError, DomainError
from .logger import get_logger
from .symcone import (
    MatrixLike,
    PsdMatrix,
    SymMatrix,
    as_array,
    factor_size,
    psd_from_factor,
    psd_order,
    random_psd,
    upper_entries,
)

logger = get_logger("model")

NORM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MixtureTerm:
    """One p-spin term with weight vector beta_p."""

    p: int
    beta: np.ndarray

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise DomainError(f"Term order p must be an integer >= 1, got {self.p}")
        beta = np.array(self.beta, dtype=float).ravel()
        beta.setflags(write=False)
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "beta", beta)

    @property
    def coefficient(self) -> np.ndarray:
        return np.outer(self.beta, self.beta)


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """The mixture xi(a) = sum_p sum_{k,k'} beta_p(k) beta_p(k') a_{kk'}^p.

    The methods ``xi``, ``grad`` and ``theta`` take raw arrays of shape
    (..., D, D) and broadcast over leading axes; the module-level operations
    below are the checked single-matrix versions.
    """

    dim: int
    terms: Tuple[MixtureTerm, ...] = ()

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError(f"Model dimension must be >= 1, got {self.dim}")
        terms = tuple(t if isinstance(t, MixtureTerm) else MixtureTerm(*t) for t in self.terms)
        for term in terms:
            if term.beta.size != self.dim:
                raise DomainError(
                    f"Term p={term.p} has beta of length {term.beta.size}, expected D={self.dim}"
                )
        object.__setattr__(self, "terms", terms)

    @classmethod
    def zero(cls, dim: int) -> "MixtureModel":
        return cls(dim, ())

    @classmethod
    def from_dict(cls, data: dict) -> "MixtureModel":
        """Build from {"D": int, "terms": [{"p": int, "beta": [...]}]}."""
        if not isinstance(data, dict):
            raise ConfigError("Model must be a JSON object")
        if "D" not in data:
            raise ConfigError("Model field 'D' is missing")
        if "terms" not in data:
            raise ConfigError("Model field 'terms' is missing")
        if not isinstance(data["terms"], list):
            raise ConfigError("Model field 'terms' must be a list")
        terms = []
        for i, raw in enumerate(data["terms"]):
            if not isinstance(raw, dict) or "p" not in raw or "beta" not in raw:
                raise ConfigError(f"Model field 'terms[{i}]' needs keys 'p' and 'beta'")
            terms.append(MixtureTerm(raw["p"], raw["beta"]))
        try:
            return cls(int(data["D"]), tuple(terms))
        except DomainError as e:
            raise ConfigError(f"Invalid model: {e}")

    def to_dict(self) -> dict:
        return {"D": self.dim, "terms": [{"p": t.p, "beta": t.beta.tolist()} for t in self.terms]}

    @property
    def is_zero(self) -> bool:
        return all(not np.any(t.beta) for t in self.terms)

    @property
    def odd_orders(self) -> List[int]:
        return sorted({t.p for t in self.terms if t.p % 2 == 1 and t.p >= 3})

    def xi(self, a: ArrayLike) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        out = np.zeros(a.shape[:-2])
        for term in self.terms:
            out = out + np.sum(term.coefficient * a ** term.p, axis=(-2, -1))
        return out

    def grad(self, a: ArrayLike) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        out = np.zeros(a.shape)
        for term in self.terms:
            out = out + term.p * term.coefficient * a ** (term.p - 1)
        return out

    def theta(self, a: ArrayLike) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        return np.sum(a * self.grad(a), axis=(-2, -1)) - self.xi(a)

    def theta_entrywise(self, a: ArrayLike) -> np.ndarray:
        """Matrix of x xi'_{kk'}(x) - xi_{kk'}(x) evaluated at x = a_{kk'}."""
        a = np.asarray(a, dtype=float)
        out = np.zeros(a.shape)
        for term in self.terms:
            out = out + (term.p - 1) * term.coefficient * a ** term.p
        return out


def _checked(m: MixtureModel, a: MatrixLike) -> np.ndarray:
    return as_array(a, m.dim)


def xi_eval(m: MixtureModel, a: MatrixLike) -> float:
    return float(m.xi(_checked(m, a)))


def grad_xi(m: MixtureModel, a: MatrixLike) -> SymMatrix:
    return SymMatrix(m.grad(_checked(m, a)))


def theta_eval(m: MixtureModel, a: MatrixLike) -> float:
    """theta(a) = a . grad xi(a) - xi(a)."""
    return float(m.theta(_checked(m, a)))


def theta_entrywise(m: MixtureModel, a: MatrixLike) -> np.ndarray:
    return m.theta_entrywise(_checked(m, a))


@dataclass(frozen=True)
class XiStarResult:
    value: float
    maximizer: Optional[PsdMatrix]
    diverged: bool


def xi_star(
    m: MixtureModel,
    y: MatrixLike,
    starts: int = 4,
    norm_cap: float = 1e3,
    seed: int = 0,
) -> XiStarResult:
    """Convex conjugate over the cone, sup_{z PSD} {z . y - xi(z)}.

    Powell's coordinate-direction search runs on the Cholesky-factor entries
    of z from several starts. Beyond the norm cap the objective is continued
    linearly from the radial projection, so an unbounded problem ends at the
    cap and is reported as diverged.
    """
    y_arr = _checked(m, y)
    dim = m.dim

    def objective(params: np.ndarray) -> float:
        z = psd_from_factor(params, dim)
        nz = float(np.linalg.norm(z))
        excess = 0.0
        if nz > norm_cap:
            z = z * (norm_cap / nz)
            excess = nz - norm_cap
        return -(float(np.sum(z * y_arr)) - float(m.xi(z))) + excess

    rng = np.random.default_rng([seed])
    scale = np.sqrt(max(float(np.linalg.norm(y_arr)), 1.0)) / dim
    best_value, best_params = -np.inf, None
    for k in range(starts):
        x0 = np.zeros(factor_size(dim)) if k == 0 else rng.normal(scale=scale, size=factor_size(dim))
        res = minimize(objective, x0, method="Powell", options={"xtol": 1e-10, "ftol": 1e-14, "maxfev": 50_000})
        if -res.fun > best_value:
            best_value, best_params = -float(res.fun), res.x

    z_best = PsdMatrix(psd_from_factor(best_params, dim))
    if z_best.norm() >= 0.99 * norm_cap:
        logger.warning(f"xi_star diverged: maximizer reached the norm cap {norm_cap}")
        return XiStarResult(np.inf, z_best, True)
    return XiStarResult(best_value, z_best, False)


@dataclass
class CheckResult:
    name: str
    passed: bool
    n_checked: int
    counterexamples: List[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "n_checked": self.n_checked,
            "counterexamples": self.counterexamples,
        }


@dataclass
class HypothesisReport:
    checks: List[CheckResult]
    flags: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> CheckResult:
        return next(c for c in self.checks if c.name == name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "flags": self.flags, "checks": [c.to_dict() for c in self.checks]}


def _sample_pairs(rng: np.random.Generator, dim: int, samples: int):
    """Random PSD pairs. Every other pair is (v v^T, diag(v*v)): equal diagonals,
    so the pair isolates the off-diagonal behaviour of xi."""
    for i in range(samples):
        if i % 2 == 0:
            a = random_psd(rng, dim, scale=rng.uniform(0.1, 2.0))
            b = random_psd(rng, dim, scale=rng.uniform(0.1, 2.0))
        else:
            v = rng.standard_normal(dim)
            v = v / max(np.linalg.norm(v), 1e-12) * rng.uniform(0.3, 1.4)
            a = PsdMatrix(np.outer(v, v))
            b = PsdMatrix(np.diag(v * v))
        yield a, b


def validate_hypotheses(m: MixtureModel, samples: int = 200, seed: int = 0, max_counterexamples: int = 3) -> HypothesisReport:
    """Randomized checks on the PSD cone: xi >= 0, xi and grad xi monotone, xi convex."""
    rng = np.random.default_rng([seed])
    found: Dict[str, List[dict]] = {"nonnegative": [], "monotone": [], "gradient_monotone": [], "convex": []}

    def record(name: str, **matrices):
        if len(found[name]) < max_counterexamples:
            found[name].append({k: (v.tolist() if hasattr(v, "tolist") else v) for k, v in matrices.items()})

    n_pairs = 0
    for a, b in _sample_pairs(rng, m.dim, samples):
        n_pairs += 1
        xa, xb = xi_eval(m, a), xi_eval(m, b)
        if xa < -NORM_TOL:
            record("nonnegative", a=a, xi=xa)

        upper = a + b
        x_up = xi_eval(m, upper)
        if x_up < xb - NORM_TOL * (1.0 + abs(xb)):
            record("monotone", a=upper, b=b, xi_a=x_up, xi_b=xb)
        if not psd_order(grad_xi(m, upper), grad_xi(m, b)):
            record("gradient_monotone", a=upper, b=b)

        mid = xi_eval(m, (a + b) * 0.5)
        if mid > 0.5 * (xa + xb) + NORM_TOL * (1.0 + abs(xa) + abs(xb)):
            record("convex", a=a, b=b, xi_mid=mid, xi_avg=0.5 * (xa + xb))

    checks = [CheckResult("xi_zero", abs(xi_eval(m, np.zeros((m.dim, m.dim)))) == 0.0, 1)]
    checks += [CheckResult(name, not cx, n_pairs, cx) for name, cx in found.items()]

    flags = []
    if m.odd_orders:
        flags.append(f"odd orders present: {m.odd_orders}")
    report = HypothesisReport(checks, flags)
    if report.passed:
        logger.info(f"Hypotheses hold on {n_pairs} random PSD pairs")
    else:
        failed = [c.name for c in report.checks if not c.passed]
        logger.warning(f"Hypothesis checks failed: {failed}")
    return report


def is_symmetric_mixture(m: MixtureModel) -> bool:
    """True when every beta_p is a constant vector (Potts-symmetric interaction)."""
    return all(np.ptp(t.beta) == 0.0 for t in m.terms)


@dataclass(frozen=True, eq=False)
class SpinMeasure:
    """Finite atomic probability measure P_1 on the unit ball of R^D."""

    taus: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        taus = np.array(self.taus, dtype=float)
        if taus.ndim == 1:
            taus = taus.reshape(-1, 1)
        weights = np.array(self.weights, dtype=float).ravel()
        if taus.ndim != 2 or taus.shape[0] != weights.size or weights.size == 0:
            raise DomainError(f"Atoms {taus.shape} and weights {weights.shape} do not match")
        if np.any(weights <= 0):
            raise DomainError("Atom weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise DomainError(f"Atom weights must sum to 1, got {weights.sum()}")
        if np.any(np.linalg.norm(taus, axis=1) > 1.0 + NORM_TOL):
            raise DomainError("Every atom must lie in the unit ball")
        weights = weights / weights.sum()
        taus.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def ising(cls) -> "SpinMeasure":
        return cls(np.array([[1.0], [-1.0]]), np.array([0.5, 0.5]))

    @classmethod
    def potts(cls, dim: int) -> "SpinMeasure":
        return cls(np.eye(dim), np.full(dim, 1.0 / dim))

    @classmethod
    def from_dict(cls, data: dict, dim: int = None) -> "SpinMeasure":
        """{"type": "ising"|"potts"} or {"atoms": [{"tau": [...], "w": real}]}."""
        if not isinstance(data, dict):
            raise ConfigError("Spin measure must be a JSON object")
        try:
            if "type" in data:
                kind = data["type"]
                if kind == "ising":
                    return cls.ising()
                if kind == "potts":
                    d = data.get("D", dim)
                    if d is None:
                        raise ConfigError("Potts spin measure needs 'D' (or a model dimension)")
                    return cls.potts(int(d))
                raise ConfigError(f"Unknown spin measure type '{kind}'")
            if "atoms" in data:
                atoms = data["atoms"]
                taus = [a["tau"] for a in atoms]
                weights = [a["w"] for a in atoms]
                return cls(np.array(taus, dtype=float), np.array(weights, dtype=float))
        except (KeyError, TypeError) as e:
            raise ConfigError(f"Malformed spin measure field: {e}")
        except DomainError as e:
            raise ConfigError(f"Invalid spin measure: {e}")
        raise ConfigError("Spin measure needs 'type' or 'atoms'")

    def to_dict(self) -> dict:
        return {"atoms": [{"tau": t.tolist(), "w": float(w)} for t, w in zip(self.taus, self.weights)]}

    @property
    def dim(self) -> int:
        return self.taus.shape[1]

    @property
    def size(self) -> int:
        return self.taus.shape[0]

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)

    @property
    def self_overlaps(self) -> np.ndarray:
        """Stack of tau tau^T, shape (atoms, D, D)."""
        return np.einsum("ak,al->akl", self.taus, self.taus)

    @property
    def is_integer_valued(self) -> bool:
        return bool(np.all(self.taus == np.round(self.taus)))


@dataclass(frozen=True, eq=False)
class OverlapHull:
    """Convex hull of {tau tau^T : tau in supp P_1}, stored by its generating points."""

    vertices: np.ndarray

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def size(self) -> int:
        return self.vertices.shape[0]

    @property
    def barycenter(self) -> SymMatrix:
        return SymMatrix(self.vertices.mean(axis=0))

    def combine(self, weights: ArrayLike) -> np.ndarray:
        w = np.asarray(weights, dtype=float)
        return np.tensordot(w, self.vertices, axes=1)

    def distance(self, a: MatrixLike) -> float:
        """L1 distance (over upper-triangle entries) from a to the hull, by linear programming."""
        target = upper_entries(as_array(a, self.dim))
        points = np.stack([upper_entries(v) for v in self.vertices], axis=1)
        n_entries, n_vertices = points.shape
        eye = np.eye(n_entries)
        # variables: hull weights w (n_vertices), slacks s (n_entries)
        a_ub = np.block([[points, -eye], [-points, -eye]])
        b_ub = np.concatenate([target, -target])
        a_eq = np.concatenate([np.ones(n_vertices), np.zeros(n_entries)])[None, :]
        cost = np.concatenate([np.zeros(n_vertices), np.ones(n_entries)])
        res = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=(0, None), method="highs")
        if not res.success:
            raise DomainError(f"Hull membership LP failed: {res.message}")
        return float(res.fun)

    def contains(self, a: MatrixLike, tol: float = 1e-9) -> bool:
        return self.distance(a) <= tol


def overlap_hull(p1: SpinMeasure) -> OverlapHull:
    flat = np.round(p1.self_overlaps.reshape(p1.size, -1), 14)
    unique = np.unique(flat, axis=0)
    return OverlapHull(unique.reshape(-1, p1.dim, p1.dim))
