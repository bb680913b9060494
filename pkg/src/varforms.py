"""
Variational formulas built on the Parisi functional.

P(x) is the infimum of P(pi, x) over step paths; the free energy is written
as a sup-inf in three equivalent ways (hull form, cone form, conjugate form)
and as the Hopf formula at (t, x) = (1/2, 0). Every sup and inf runs the
multi-start simplex search of ``optimizer`` on an unconstrained
parametrization:

    * increasing paths: cumulative sums of Gram matrices L_i L_i^T;
    * paths ending at z: R A_j R^T with 0 <= A_1 <= ... <= A_r = I, where
      z = R R^T on its positive eigen-block;
    * PSD matrices: Cholesky-style factors; symmetric matrices: upper triangles;
    * the overlap hull: squared barycentric weights.

Inner infima over the field y are regularized with eps * sqrt(1 + |y|^2) for a
decreasing eps schedule. When the regularized minimizer sits at the norm cap
for every eps the infimum is reported as -inf.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import ConfigError, DomainError
from .functional import (
    EvalResult,
    QuadratureSpec,
    cascade_log_partition,
    functional_gradient_x,
    parisi_functional,
)
from .logger import get_logger
from .model import MixtureModel, SpinMeasure, is_symmetric_mixture, overlap_hull, xi_star
from .optimizer import MinimizeOutcome, MultiStartMinimizer
from .paths import StepPath, canonicalize
from .symcone import (
    MatrixLike,
    SymMatrix,
    as_array,
    as_psd,
    factor_params,
    factor_size,
    positive_block,
    psd_from_factor,
    sym_from_params,
    upper_entries,
)

logger = get_logger("varforms")

GRID_MODES = ("free", "fixed-uniform")
CONES = ("sym", "psd")
CAP_FRACTION = 0.95
SCALE_FLOOR = 1e-6


@dataclass(frozen=True)
class OptimizerSpec:
    """Settings of the variational solvers."""

    levels: int = 3
    grid_mode: str = "free"
    restarts: int = 8
    max_evals: int = 4000
    tol_value: float = 1e-3
    seed: int = 0
    norm_cap: float = 10.0
    eps_schedule: Tuple[float, ...] = (1e-1, 1e-2, 1e-3)
    inner_restarts: int = 2
    inner_max_evals: int = 1500
    outer_restarts: int = 2
    outer_max_evals: int = 120
    fd_step: float = 0.05
    jobs: int = 1
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)

    def __post_init__(self):
        if self.levels < 1:
            raise ConfigError(f"optimizer.levels must be >= 1, got {self.levels}")
        if self.grid_mode not in GRID_MODES:
            raise ConfigError(f"optimizer.grid_mode must be one of {GRID_MODES}, got '{self.grid_mode}'")
        if self.tol_value <= 0:
            raise ConfigError("optimizer.tol_value must be > 0")
        if self.norm_cap <= 0:
            raise ConfigError("optimizer.norm_cap must be > 0")
        if not self.eps_schedule or any(e <= 0 for e in self.eps_schedule):
            raise ConfigError("optimizer.eps_schedule must be a non-empty list of positive numbers")
        object.__setattr__(self, "eps_schedule", tuple(float(e) for e in self.eps_schedule))

    @classmethod
    def from_dict(cls, data: Optional[dict], quadrature: Optional[QuadratureSpec] = None, **overrides) -> "OptimizerSpec":
        data = dict(data or {})
        data.update({k: v for k, v in overrides.items() if v is not None})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown optimizer fields: {sorted(unknown)}")
        if "quadrature" in data:
            raise ConfigError("Quadrature settings belong in the 'quadrature' block, not under 'optimizer'")
        return cls(quadrature=quadrature or QuadratureSpec(), **data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["eps_schedule"] = list(self.eps_schedule)
        return out

    def replace(self, **changes) -> "OptimizerSpec":
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return OptimizerSpec(**values)


@dataclass
class VariationalResult:
    value: float
    path: Optional[StepPath] = None
    y: Optional[SymMatrix] = None
    z: Optional[SymMatrix] = None
    std_error: float = 0.0
    converged: bool = True
    n_evals: int = 0
    trace: List[dict] = field(default_factory=list)
    params: Optional[np.ndarray] = None

    def to_dict(self, trace: bool = False) -> dict:
        out = {
            "value": self.value,
            "std_error": self.std_error,
            "converged": self.converged,
            "n_evals": self.n_evals,
            "path": self.path.to_dict() if self.path is not None else None,
            "y": self.y.tolist() if self.y is not None else None,
            "z": self.z.tolist() if self.z is not None else None,
        }
        if trace:
            out["trace"] = self.trace
        return out


class PathParametrization:
    """
    Flat parameter vector <-> step path with ``levels`` levels.

    Layout: ``levels`` blocks of triangular-factor entries, followed by
    ``levels`` grid weights when the grid is free. Widths are u_i^2 / sum u^2,
    so exact zero widths are reachable and an r-level path embeds exactly
    into r + 1 levels.
    """

    def __init__(self, dim: int, levels: int, grid_mode: str = "free", endpoint: Optional[MatrixLike] = None):
        self.dim = dim
        self.levels = levels
        self.grid_mode = grid_mode
        self.endpoint = None if endpoint is None else as_psd(as_array(endpoint, dim))
        self.pinned_zero = self.endpoint is not None and self.endpoint.is_zero()
        if self.endpoint is not None and not self.pinned_zero:
            vecs, eig = positive_block(self.endpoint)
            self.root = vecs * np.sqrt(eig)
            self.block_dim = len(eig)
        else:
            self.root = None
            self.block_dim = dim
        self.fsize = factor_size(self.block_dim)
        self.n_factor = 0 if self.pinned_zero else levels * self.fsize
        self.n_grid = levels if (grid_mode == "free" and levels > 1 and not self.pinned_zero) else 0

    @property
    def size(self) -> int:
        return self.n_factor + self.n_grid

    def grid(self, u: np.ndarray) -> Tuple[float, ...]:
        if self.n_grid == 0:
            return tuple(np.linspace(0.0, 1.0, self.levels + 1))
        w = np.asarray(u, dtype=float) ** 2
        total = w.sum()
        if total <= 0.0:
            return tuple(np.linspace(0.0, 1.0, self.levels + 1))
        cuts = np.minimum(np.cumsum(w / total), 1.0)
        cuts[-1] = 1.0
        return (0.0,) + tuple(cuts)

    def _values(self, factors: np.ndarray) -> np.ndarray:
        d = self.block_dim
        lowers = np.zeros((self.levels, d, d))
        rows, cols = np.tril_indices(d)
        lowers[:, rows, cols] = factors
        if self.endpoint is None:
            return np.cumsum(lowers @ np.swapaxes(lowers, -1, -2), axis=0)

        # Normalized cumulative increments A_j = S^{-1/2} (sum_{i<=j} B_i B_i^T) S^{-1/2},
        # built from Gram factors in the eigenbasis of S so every increment stays PSD.
        total = np.sum(lowers @ np.swapaxes(lowers, -1, -2), axis=0)
        vals, vecs = np.linalg.eigh(total)
        top = float(vals.max())
        if top <= 0.0:
            steps = np.zeros((self.levels, self.dim, self.dim))
        else:
            scale = 1.0 / np.sqrt(np.maximum(vals, SCALE_FLOOR * top))
            factors_rot = (vecs.T * scale[:, None]) @ lowers
            frame = self.root @ vecs
            images = frame @ factors_rot
            steps = images @ np.swapaxes(images, -1, -2)
        values = np.cumsum(steps, axis=0)
        values[-1] = self.endpoint.entries
        return values

    def decode(self, params: np.ndarray) -> StepPath:
        if self.pinned_zero:
            return StepPath.zero(self.dim)
        params = np.asarray(params, dtype=float)
        factors = params[: self.n_factor].reshape(self.levels, self.fsize)
        values = self._values(factors)
        values = 0.5 * (values + np.swapaxes(values, -1, -2))
        return StepPath(self.grid(params[self.n_factor:]), tuple(values))

    def default_start(self, scale: float = 0.5) -> np.ndarray:
        """Evenly spaced levels: gamma_j = (j / r) * scale * I, or (j / r) * z on Pi(z)."""
        if self.pinned_zero:
            return np.zeros(0)
        d = self.block_dim
        c = 1.0 if self.endpoint is not None else scale
        block = np.eye(d)[np.tril_indices(d)] * math.sqrt(c / self.levels)
        return np.concatenate([np.tile(block, self.levels), np.ones(self.n_grid)])

    def sample(self, rng: np.random.Generator, scale: float = 0.5) -> np.ndarray:
        factors = rng.normal(scale=scale / math.sqrt(self.levels), size=self.n_factor)
        widths = rng.uniform(0.5, 1.5, size=self.n_grid)
        return np.concatenate([factors, widths])

    def embed(self, params: np.ndarray, other: "PathParametrization") -> np.ndarray:
        """Parameters of the same path in a parametrization with more levels.

        Appended levels get zero factors and zero width, which leaves the path
        unchanged on a free grid.
        """
        if self.pinned_zero or other.pinned_zero:
            return np.zeros(other.size)
        if other.fsize != self.fsize or other.levels < self.levels:
            raise DomainError("Can only embed into a parametrization with at least as many levels")
        params = np.asarray(params, dtype=float)
        extra = other.levels - self.levels
        factors = np.concatenate([params[: self.n_factor], np.zeros(extra * self.fsize)])
        if other.n_grid == 0:
            return factors
        u = params[self.n_factor:] if self.n_grid else np.ones(self.levels)
        return np.concatenate([factors, u, np.zeros(extra)])


def _cone_matrix(params: np.ndarray, dim: int, cone: str) -> np.ndarray:
    if cone == "psd":
        return psd_from_factor(params, dim)
    return sym_from_params(params, dim)


def _cone_start(a: MatrixLike, cone: str) -> np.ndarray:
    if cone == "psd":
        return factor_params(as_array(a) + 1e-9 * np.eye(as_array(a).shape[0]))
    return upper_entries(a)


def _capped(a: np.ndarray, cap: float) -> Tuple[np.ndarray, float]:
    """Radial projection onto the norm ball and the excess norm."""
    norm = float(np.linalg.norm(a))
    if norm <= cap:
        return a, 0.0
    return a * (cap / norm), norm - cap


def _safe_decode(param: PathParametrization, params: np.ndarray) -> Optional[StepPath]:
    try:
        return param.decode(params)
    except DomainError:
        return None


@dataclass
class InnerResult:
    value: float
    y: np.ndarray
    path: StepPath
    params: np.ndarray
    diverged: bool
    converged: bool
    n_evals: int
    trace: List[dict]


def _inner_infimum(
    objective: Callable[[np.ndarray, StepPath], float],
    dim: int,
    cone: str,
    param: PathParametrization,
    spec: OptimizerSpec,
    restarts: int,
    max_evals: int,
    jobs: int = 1,
    label: str = "inner",
) -> InnerResult:
    """
    inf over (y, pi) of objective(y, pi), y in S^D (cone "sym") or the PSD cone.

    Runs the eps schedule with warm starts; only the first eps uses restarts.
    The returned value is the unregularized objective at the last minimizer,
    or -inf when every regularized minimizer reached the norm cap.
    """
    n_y = factor_size(dim)
    cap = spec.norm_cap

    def split(params: np.ndarray):
        y_raw = _cone_matrix(params[:n_y], dim, cone)
        return y_raw, _safe_decode(param, params[n_y:])

    def sampler(rng: np.random.Generator) -> np.ndarray:
        return np.concatenate([rng.normal(scale=0.5, size=n_y), param.sample(rng)])

    start = np.concatenate([_cone_start(np.zeros((dim, dim)) if cone == "sym" else 0.25 * np.eye(dim), cone),
                            param.default_start()])
    norms, trace, total_evals = [], [], 0
    outcome: Optional[MinimizeOutcome] = None
    for k, eps in enumerate(spec.eps_schedule):
        def regularized(params: np.ndarray, eps=eps) -> float:
            y_raw, path = split(params)
            if path is None:
                return np.inf
            y, excess = _capped(y_raw, cap)
            return objective(y, path) + eps * math.sqrt(1.0 + float(np.sum(y * y))) + excess

        minimizer = MultiStartMinimizer(
            restarts=restarts if k == 0 else 1,
            max_evals=max_evals,
            tol_value=spec.tol_value,
            seed=spec.seed,
            jobs=jobs,
            label=f"{label} eps={eps:g}",
        )
        outcome = minimizer.minimize(regularized, sampler, x0=start)
        start = outcome.x
        norms.append(float(np.linalg.norm(split(outcome.x)[0])))
        total_evals += outcome.n_evals
        trace.append({"eps": eps, "value": outcome.value, "y_norm": norms[-1], "restarts": outcome.trace})

    y_raw, path = split(outcome.x)
    y, _ = _capped(y_raw, cap)
    diverged = all(n >= CAP_FRACTION * cap for n in norms)
    if diverged:
        logger.debug(f"{label}: minimizer reached the norm cap {cap} at every eps; infimum is -inf")
        value = -np.inf
    else:
        value = float(objective(y, path))
    return InnerResult(value, y, path, outcome.x, diverged, outcome.converged, total_evals, trace)


def _evaluate_path(m, p1, path, x, spec) -> EvalResult:
    return parisi_functional(m, p1, path, x, spec.quadrature)


def _minimize_over_paths(
    m: MixtureModel,
    p1: SpinMeasure,
    x: np.ndarray,
    spec: OptimizerSpec,
    param: PathParametrization,
    warm_start: Optional[np.ndarray],
    restarts: int,
    max_evals: int,
    jobs: int,
    label: str,
) -> VariationalResult:
    def objective(params: np.ndarray) -> float:
        path = _safe_decode(param, params)
        if path is None:
            return np.inf
        return _evaluate_path(m, p1, path, x, spec).value

    minimizer = MultiStartMinimizer(
        restarts=restarts, max_evals=max_evals, tol_value=spec.tol_value, seed=spec.seed, jobs=jobs, label=label
    )
    x0 = warm_start if warm_start is not None else param.default_start()
    outcome = minimizer.minimize(objective, param.sample, x0=x0)
    raw = param.decode(outcome.x)
    final = _evaluate_path(m, p1, raw, x, spec)
    return VariationalResult(
        value=final.value,
        path=canonicalize(raw),
        std_error=final.std_error,
        converged=outcome.converged,
        n_evals=outcome.n_evals,
        trace=outcome.trace,
        params=outcome.x,
    )


def _check_inputs(m: MixtureModel, p1: SpinMeasure) -> None:
    if p1.dim != m.dim:
        raise DomainError(f"Spin measure dimension {p1.dim} does not match model dimension {m.dim}")


def parisi_value(
    m: MixtureModel,
    p1: SpinMeasure,
    x: MatrixLike,
    spec: OptimizerSpec = OptimizerSpec(),
    warm_start: Optional[np.ndarray] = None,
    restarts: Optional[int] = None,
    max_evals: Optional[int] = None,
    jobs: Optional[int] = None,
) -> VariationalResult:
    """
    P(x): infimum of the Parisi functional over r-level step paths.

    Args:
        m: Mixture model
        p1: Single-spin measure
        x: External field
        spec: Optimizer settings (levels, grid mode, restarts, quadrature)
        warm_start: Parameters of a previous solution for the first restart

    Returns:
        VariationalResult with the best path found
    """
    _check_inputs(m, p1)
    x_arr = as_array(x, m.dim)
    param = PathParametrization(m.dim, spec.levels, spec.grid_mode)
    if m.is_zero:
        path = StepPath.zero(m.dim)
        res = _evaluate_path(m, p1, path, x_arr, spec)
        return VariationalResult(res.value, path, std_error=res.std_error, n_evals=1,
                                 params=np.zeros(param.size))
    return _minimize_over_paths(
        m, p1, x_arr, spec, param, warm_start,
        restarts if restarts is not None else spec.restarts,
        max_evals if max_evals is not None else spec.max_evals,
        jobs if jobs is not None else spec.jobs,
        "parisi_value",
    )


def parisi_value_constrained(
    m: MixtureModel,
    p1: SpinMeasure,
    x: MatrixLike,
    z: MatrixLike,
    spec: OptimizerSpec = OptimizerSpec(),
    warm_start: Optional[np.ndarray] = None,
    restarts: Optional[int] = None,
    max_evals: Optional[int] = None,
    jobs: Optional[int] = None,
) -> VariationalResult:
    """Infimum of P(pi, x) over step paths ending at z."""
    _check_inputs(m, p1)
    x_arr = as_array(x, m.dim)
    z_psd = as_psd(as_array(z, m.dim))
    param = PathParametrization(m.dim, spec.levels, spec.grid_mode, endpoint=z_psd)
    if param.pinned_zero:
        path = StepPath.zero(m.dim)
        res = _evaluate_path(m, p1, path, x_arr, spec)
        return VariationalResult(res.value, path, z=z_psd, std_error=res.std_error, n_evals=1, params=np.zeros(0))
    res = _minimize_over_paths(
        m, p1, x_arr, spec, param, warm_start,
        restarts if restarts is not None else spec.restarts,
        max_evals if max_evals is not None else spec.max_evals,
        jobs if jobs is not None else spec.jobs,
        "parisi_value_constrained",
    )
    res.z = z_psd
    return res


@dataclass
class ParisiGradient:
    gradient: SymMatrix
    path: StepPath
    value: float
    fd_gradient: Optional[SymMatrix] = None
    flagged: bool = False
    fd_threshold: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "gradient": self.gradient.tolist(),
            "value": self.value,
            "fd_gradient": self.fd_gradient.tolist() if self.fd_gradient is not None else None,
            "flagged": self.flagged,
            "fd_threshold": self.fd_threshold,
            "path": self.path.to_dict(),
        }


def fd_threshold(spec: OptimizerSpec) -> float:
    """Largest envelope vs finite-difference gap that is not flagged: 5 * tol_value / fd_step.

    Optimal values are known to tol_value, so a central difference with step h
    resolves gradient entries to tol_value / h; the flag allows five times that.
    """
    return 5 * spec.tol_value / spec.fd_step


def grad_parisi(
    m: MixtureModel,
    p1: SpinMeasure,
    x: MatrixLike,
    spec: OptimizerSpec = OptimizerSpec(),
    fd_check: bool = True,
) -> ParisiGradient:
    """
    grad P(x) by the envelope rule: optimize at x, then differentiate the
    functional in x along the optimal path.

    The finite-difference cross-check re-optimizes at x +/- h E for every
    entry direction E, warm-started from the optimum. A disagreement above
    ``fd_threshold(spec)`` is flagged.
    """
    x_arr = as_array(x, m.dim)
    best = parisi_value(m, p1, x_arr, spec)
    gradient = functional_gradient_x(m, p1, best.path, x_arr, spec.quadrature)
    if not fd_check or m.is_zero:
        return ParisiGradient(gradient, best.path, best.value)

    h = spec.fd_step
    dim = m.dim
    fd = np.zeros((dim, dim))
    for k in range(dim):
        for l in range(k, dim):
            e = np.zeros((dim, dim))
            e[k, l] = e[l, k] = 1.0
            scale = 1.0 if k == l else 2.0
            up = parisi_value(m, p1, x_arr + h * e, spec, warm_start=best.params, restarts=1)
            down = parisi_value(m, p1, x_arr - h * e, spec, warm_start=best.params, restarts=1)
            fd[k, l] = fd[l, k] = (up.value - down.value) / (2 * h * scale)
    gap = float(np.max(np.abs(fd - gradient.entries)))
    threshold = fd_threshold(spec)
    flagged = gap > threshold
    if flagged:
        logger.warning(f"grad_parisi: envelope and finite-difference gradients differ by {gap:.3e}")
    return ParisiGradient(gradient, best.path, best.value, SymMatrix(fd), flagged, threshold)


def _outer_supremum(
    objective: Callable[[np.ndarray], Tuple[float, dict]],
    start: np.ndarray,
    sampler: Callable[[np.random.Generator], np.ndarray],
    spec: OptimizerSpec,
    label: str,
) -> Tuple[float, np.ndarray, dict, MinimizeOutcome]:
    """Maximize objective(params)[0]; the second item carries the argmin data of the inner problem."""
    cache: Dict[bytes, Tuple[float, dict]] = {}

    def evaluate(params: np.ndarray) -> Tuple[float, dict]:
        key = np.asarray(params, dtype=float).tobytes()
        if key not in cache:
            cache[key] = objective(params)
        return cache[key]

    def negated(params: np.ndarray) -> float:
        value = evaluate(params)[0]
        return np.inf if value == -np.inf else -value

    minimizer = MultiStartMinimizer(
        restarts=spec.outer_restarts,
        max_evals=spec.outer_max_evals,
        tol_value=spec.tol_value,
        seed=spec.seed + 1,
        jobs=spec.jobs,
        label=label,
    )
    outcome = minimizer.minimize(negated, sampler, x0=start)
    value, info = evaluate(outcome.x)
    if not outcome.converged:
        logger.warning(f"{label}: outer search stopped at the evaluation budget")
    return value, outcome.x, info, outcome


def _sup_inf_result(value, info, outcome, inner_evals, m, p1, spec) -> VariationalResult:
    std_error = 0.0
    path, y = info.get("path"), info.get("y")
    if path is not None and y is not None and np.isfinite(value):
        std_error = _evaluate_path(m, p1, path, y, spec).std_error
    return VariationalResult(
        value=float(value),
        path=canonicalize(path) if path is not None else None,
        y=SymMatrix(y) if y is not None else None,
        z=SymMatrix(info["z"]) if info.get("z") is not None else None,
        std_error=std_error,
        converged=outcome.converged and info.get("converged", True),
        n_evals=outcome.n_evals + inner_evals[0],
        trace=outcome.trace,
        params=outcome.x,
    )


def _fixed_z_infimum(
    m: MixtureModel,
    p1: SpinMeasure,
    z: np.ndarray,
    spec: OptimizerSpec,
    y_cone: str,
    pin_endpoint: bool,
    restarts: int,
    max_evals: int,
    jobs: int = 1,
    label: str = "inner",
) -> InnerResult:
    """inf over y and pi (pinned at z or free) of P(pi, y) - y . z."""
    param = PathParametrization(m.dim, spec.levels, spec.grid_mode, endpoint=z if pin_endpoint else None)

    def objective(y: np.ndarray, path: StepPath) -> float:
        return _evaluate_path(m, p1, path, y, spec).value - float(np.sum(y * z))

    return _inner_infimum(objective, m.dim, y_cone, param, spec, restarts, max_evals, jobs, label)


def free_energy_pan(m: MixtureModel, p1: SpinMeasure, spec: OptimizerSpec = OptimizerSpec()) -> VariationalResult:
    """
    sup over z in the overlap hull of inf over y in S^D and pi in Pi(z) of
    P(pi, y) - y . z + xi(z) / 2.
    """
    _check_inputs(m, p1)
    hull = overlap_hull(p1)
    inner_evals = [0]

    def weights(t: np.ndarray) -> np.ndarray:
        w = np.asarray(t, dtype=float) ** 2
        total = w.sum()
        return np.full(hull.size, 1.0 / hull.size) if total <= 0 else w / total

    def objective(t: np.ndarray) -> Tuple[float, dict]:
        z = hull.combine(weights(t)) if hull.size > 1 else hull.vertices[0]
        z = 0.5 * (z + z.T)
        inner = _fixed_z_infimum(m, p1, z, spec, "sym", True, spec.inner_restarts, spec.inner_max_evals,
                                 label="pan inner")
        inner_evals[0] += inner.n_evals
        value = inner.value + 0.5 * float(m.xi(z))
        return value, {"z": z, "y": inner.y, "path": inner.path, "converged": inner.converged}

    n_params = hull.size if hull.size > 1 else 0
    start = np.ones(n_params)
    value, _, info, outcome = _outer_supremum(
        objective, start, lambda rng: rng.uniform(0.1, 1.0, size=n_params), spec, "free_energy_pan"
    )
    logger.info(f"free_energy_pan: value={value:.6f}")
    return _sup_inf_result(value, info, outcome, inner_evals, m, p1, spec)


def _cone_sup_inf(
    m: MixtureModel,
    p1: SpinMeasure,
    spec: OptimizerSpec,
    cone: str,
    t: float,
    x: np.ndarray,
    label: str,
) -> VariationalResult:
    """sup over z of inf over y and pi in Pi of P(pi, y) - y . z + z . x + t xi(z), with z and y in ``cone``."""
    dim = m.dim
    cap = spec.norm_cap
    inner_evals = [0]

    def objective(params: np.ndarray) -> Tuple[float, dict]:
        z_raw = _cone_matrix(params, dim, cone)
        z, excess = _capped(z_raw, cap)
        inner = _fixed_z_infimum(m, p1, z, spec, cone, False, spec.inner_restarts, spec.inner_max_evals,
                                 label=f"{label} inner")
        inner_evals[0] += inner.n_evals
        if inner.value == -np.inf:
            return -np.inf, {"z": z, "converged": inner.converged}
        value = inner.value + float(np.sum(z * x)) + t * float(m.xi(z)) - excess
        return value, {"z": z, "y": inner.y, "path": inner.path, "converged": inner.converged}

    bary = overlap_hull(p1).barycenter.entries
    start = _cone_start(bary, cone)
    n = factor_size(dim)
    value, _, info, outcome = _outer_supremum(
        objective, start, lambda rng: start + rng.normal(scale=0.3, size=n), spec, label
    )
    return _sup_inf_result(value, info, outcome, inner_evals, m, p1, spec)


def free_energy_hj(m: MixtureModel, p1: SpinMeasure, spec: OptimizerSpec = OptimizerSpec()) -> VariationalResult:
    """sup over PSD z of inf over PSD y and pi in Pi of P(pi, y) - y . z + xi(z) / 2."""
    _check_inputs(m, p1)
    result = _cone_sup_inf(m, p1, spec, "psd", 0.5, np.zeros((m.dim, m.dim)), "free_energy_hj")
    logger.info(f"free_energy_hj: value={result.value:.6f}")
    return result


def free_energy_xistar(m: MixtureModel, p1: SpinMeasure, spec: OptimizerSpec = OptimizerSpec()) -> VariationalResult:
    """sup over PSD y of P(y) - xi*(2y) / 2, with P(y) the infimum over paths."""
    _check_inputs(m, p1)
    dim = m.dim
    cap = spec.norm_cap
    inner_evals = [0]

    def objective(params: np.ndarray) -> Tuple[float, dict]:
        y_raw = psd_from_factor(params, dim)
        y, excess = _capped(y_raw, cap)
        conj = xi_star(m, 2.0 * y, seed=spec.seed)
        if conj.diverged:
            return -np.inf, {"y": y}
        inner = parisi_value(m, p1, y, spec, restarts=spec.inner_restarts, max_evals=spec.inner_max_evals, jobs=1)
        inner_evals[0] += inner.n_evals
        value = inner.value - 0.5 * conj.value - excess
        z = conj.maximizer.entries if conj.maximizer is not None else None
        return value, {"y": y, "z": z, "path": inner.path, "converged": inner.converged}

    bary = overlap_hull(p1).barycenter.entries
    start = _cone_start(0.5 * m.grad(bary), "psd")
    n = factor_size(dim)
    value, _, info, outcome = _outer_supremum(
        objective, start, lambda rng: start + rng.normal(scale=0.3, size=n), spec, "free_energy_xistar"
    )
    logger.info(f"free_energy_xistar: value={value:.6f}")
    return _sup_inf_result(value, info, outcome, inner_evals, m, p1, spec)


def hopf_value(
    m: MixtureModel,
    p1: SpinMeasure,
    t: float,
    x: MatrixLike,
    spec: OptimizerSpec = OptimizerSpec(),
    cone: str = "sym",
) -> VariationalResult:
    """
    Hopf formula f(t, x) = sup_z inf_y {P(y) + z . (x - y) + t xi(z)}.

    ``cone="sym"`` takes z and y over all symmetric matrices, ``"psd"`` over the
    PSD cone; at (1/2, 0) the latter is the cone form of the free energy.
    """
    _check_inputs(m, p1)
    if t < 0:
        raise DomainError(f"hopf_value needs t >= 0, got {t}")
    if cone not in CONES:
        raise ConfigError(f"cone must be one of {CONES}, got '{cone}'")
    x_arr = as_array(x, m.dim)
    result = _cone_sup_inf(m, p1, spec, cone, float(t), x_arr, f"hopf_value[{cone}]")
    logger.info(f"hopf_value(t={t}, cone={cone}): value={result.value:.6f}")
    return result


@dataclass(frozen=True)
class TranslationCheck:
    lhs: float
    rhs: float

    @property
    def difference(self) -> float:
        return abs(self.lhs - self.rhs)


def translate_panchenko(
    m: MixtureModel,
    p1: SpinMeasure,
    lam: MatrixLike,
    z: MatrixLike,
    path: StepPath,
    q: QuadratureSpec = QuadratureSpec(),
) -> TranslationCheck:
    """
    Compare the generalized Parisi functional P_pan(lambda, z, pi) with its
    rewriting through P(pi, lambda + grad xi(z) / 2).

    lhs = Phi(lambda) - lambda . z - theta(z) / 2 + (1/2) int theta(pi), with
    Phi the cascade term under field lambda and theta summed entry-wise;
    rhs = P(pi, y) - y . z + xi(z) / 2 with y = lambda + grad xi(z) / 2.
    """
    lam_arr = as_array(lam, m.dim)
    z_arr = as_array(z, m.dim)
    if not path.in_class(z_arr):
        raise DomainError("translate_panchenko needs a path ending at z")

    phi = cascade_log_partition(m, p1, path, lam_arr, q).value
    theta_path = float(np.sum(path.widths * np.sum(m.theta_entrywise(path.stack), axis=(-2, -1))))
    lhs = phi - float(np.sum(lam_arr * z_arr)) - 0.5 * float(np.sum(m.theta_entrywise(z_arr))) + 0.5 * theta_path

    y = lam_arr + 0.5 * m.grad(z_arr)
    rhs = parisi_functional(m, p1, path, y, q).value - float(np.sum(y * z_arr)) + 0.5 * float(m.xi(z_arr))
    return TranslationCheck(float(lhs), float(rhs))


@dataclass
class EquivalenceReport:
    table: pd.DataFrame
    results: Dict[str, VariationalResult]

    @property
    def passed(self) -> bool:
        return bool(self.table["passed"].all())

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "table": self.table.to_dict(orient="records"),
            "values": {k: r.value for k, r in self.results.items()},
            "pan_z": self.results["pan"].z.tolist() if self.results["pan"].z is not None else None,
        }


def _agree(a: float, b: float, tol: float) -> Tuple[float, bool]:
    if a == b:
        return 0.0, True
    diff = abs(a - b)
    return diff, bool(diff <= tol)


def check_equivalence(
    m: MixtureModel,
    p1: SpinMeasure,
    spec: OptimizerSpec = OptimizerSpec(),
    n_z: int = 2,
) -> EquivalenceReport:
    """
    Run the three free-energy formulas and the Hopf formula over all symmetric
    matrices at (1/2, 0) and compare them pairwise; also compare the inner infimum over Pi with the one
    over Pi(z) for sampled z in the overlap hull. Tolerance is 2 * tol_value.
    """
    tol = 2 * spec.tol_value
    results = {
        "pan": free_energy_pan(m, p1, spec),
        "hj": free_energy_hj(m, p1, spec),
        "xistar": free_energy_xistar(m, p1, spec),
        "hopf": hopf_value(m, p1, 0.5, np.zeros((m.dim, m.dim)), spec),
    }
    rows = []
    for left, right in (("pan", "hj"), ("pan", "xistar"), ("hj", "xistar"), ("hopf", "hj")):
        diff, ok = _agree(results[left].value, results[right].value, tol)
        rows.append({"check": f"{left} vs {right}", "lhs": results[left].value, "rhs": results[right].value,
                     "difference": diff, "tolerance": tol, "passed": ok})

    hull = overlap_hull(p1)
    rng = np.random.default_rng([spec.seed, n_z])
    for i in range(n_z):
        w = np.full(hull.size, 1.0 / hull.size) if i == 0 else rng.dirichlet(np.ones(hull.size))
        z = hull.combine(w)
        free = _fixed_z_infimum(m, p1, z, spec, "sym", False, spec.inner_restarts, spec.inner_max_evals,
                                spec.jobs, "identity free")
        pinned = _fixed_z_infimum(m, p1, z, spec, "sym", True, spec.inner_restarts, spec.inner_max_evals,
                                  spec.jobs, "identity pinned")
        diff, ok = _agree(free.value, pinned.value, tol)
        rows.append({"check": f"inf over Pi vs Pi(z), z #{i}", "lhs": free.value, "rhs": pinned.value,
                     "difference": diff, "tolerance": tol, "passed": ok})

    table = pd.DataFrame(rows, columns=["check", "lhs", "rhs", "difference", "tolerance", "passed"])
    report = EquivalenceReport(table, results)
    if report.passed:
        logger.info("Equivalence checks passed")
    else:
        logger.warning(f"Equivalence checks failed:\n{table[~table['passed']].to_string(index=False)}")
    return report


def value_vs_levels(
    m: MixtureModel,
    p1: SpinMeasure,
    x: MatrixLike,
    levels: Sequence[int],
    spec: OptimizerSpec = OptimizerSpec(),
) -> pd.DataFrame:
    """Optimal value for increasing numbers of levels, each run warm-started from the previous one."""
    rows = []
    prev_params, prev_param = None, None
    for r in sorted(set(int(v) for v in levels)):
        level_spec = spec.replace(levels=r)
        param = PathParametrization(m.dim, r, spec.grid_mode)
        warm = prev_param.embed(prev_params, param) if prev_params is not None else None
        res = parisi_value(m, p1, x, level_spec, warm_start=warm)
        rows.append({"levels": r, "value": res.value, "std_error": res.std_error,
                     "converged": res.converged, "n_evals": res.n_evals})
        prev_params, prev_param = res.params, param
    return pd.DataFrame(rows, columns=["levels", "value", "std_error", "converged", "n_evals"])


@dataclass
class PottsCorollary:
    unconstrained: VariationalResult
    constrained: VariationalResult
    tolerance: float

    @property
    def difference(self) -> float:
        return abs(self.unconstrained.value - self.constrained.value)

    @property
    def passed(self) -> bool:
        return self.difference <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "unconstrained": self.unconstrained.value,
            "constrained": self.constrained.value,
            "difference": self.difference,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def _is_potts(p1: SpinMeasure) -> bool:
    d = p1.dim
    if p1.size != d:
        return False
    order = np.argsort(np.argmax(p1.taus, axis=1))
    return bool(np.array_equal(p1.taus[order], np.eye(d)) and np.allclose(p1.weights, 1.0 / d))


def potts_corollary(m: MixtureModel, p1: SpinMeasure, spec: OptimizerSpec = OptimizerSpec()) -> PottsCorollary:
    """For Potts spins and a symmetric mixture, P(0) equals the infimum over Pi(I / D) at x = 0."""
    if not _is_potts(p1):
        raise DomainError("potts_corollary needs the uniform measure on the standard basis")
    if not is_symmetric_mixture(m):
        raise DomainError("potts_corollary needs a symmetric mixture (constant beta vectors)")
    zero = np.zeros((m.dim, m.dim))
    free = parisi_value(m, p1, zero, spec)
    pinned = parisi_value_constrained(m, p1, zero, np.eye(m.dim) / m.dim, spec)
    return PottsCorollary(free, pinned, 2 * spec.tol_value)
