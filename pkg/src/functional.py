"""
Parisi functional of a step path, evaluated by the finite cascade recursion.

For a path with levels v_1 <= ... <= v_n on (g_{i-1}, g_i] write
mu_i = grad xi(v_i), mu_0 = 0 and Delta_i = mu_i - mu_{i-1}. The leaf value is

    Y_n = log sum_a p_a exp(h . tau_a + (x - mu_n / 2) . tau_a tau_a^T),

with h the sum of independent centred Gaussian increments of covariance
Delta_i, and level i is integrated out as E Y (when g_{i-1} = 0) or
(1/m) log E exp(m Y) with m = g_{i-1}. The functional adds
1/2 sum_i (g_i - g_{i-1}) theta(v_i).

Gaussian expectations are taken over a tree of nodes: a tensor Gauss-Hermite
rule per level, or antithetic Monte-Carlo draws in independent replicas.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from functools import lru_cache
from itertools import product
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import logsumexp

from .errors import ConfigError, DomainError, GuardError
from .logger import get_logger
from .model import MixtureModel, SpinMeasure
from .parallel import indexed_map
from .paths import StepPath, canonicalize, merged_levels
from .symcone import MatrixLike, SymMatrix, as_array, psd_tolerance

logger = get_logger("functional")

MODES = ("gauss-hermite", "monte-carlo")
MAX_ORACLE_ATOMS = 5000
MAX_ORACLE_LEVELS = 3
TAIL_MASS_LIMIT = 1e-3


@dataclass(frozen=True)
class QuadratureSpec:
    """How the nested Gaussian expectations are computed."""

    mode: str = "gauss-hermite"
    gh_nodes: int = 20
    mc_samples: int = 100_000
    seed: int = 0
    antithetic: bool = True
    replicas: int = 16
    max_nodes: int = 10_000_000
    jobs: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"quadrature.mode must be one of {MODES}, got '{self.mode}'")
        if self.gh_nodes < 1:
            raise ConfigError("quadrature.gh_nodes must be >= 1")
        if self.mc_samples < 1:
            raise ConfigError("quadrature.mc_samples must be >= 1")
        if self.replicas < 2 and self.mode == "monte-carlo":
            raise ConfigError("quadrature.replicas must be >= 2 in monte-carlo mode")

    @classmethod
    def from_dict(cls, data: Optional[dict], **overrides) -> "QuadratureSpec":
        data = dict(data or {})
        data.update({k: v for k, v in overrides.items() if v is not None})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown quadrature fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def with_seed(self, seed: int) -> "QuadratureSpec":
        return QuadratureSpec(**{**asdict(self), "seed": int(seed)})


@dataclass
class EvalResult:
    value: float
    std_error: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self, diagnostics: bool = False) -> dict:
        out = {"value": self.value, "std_error": self.std_error}
        if diagnostics:
            out["diagnostics"] = self.diagnostics
        return out


@dataclass(frozen=True)
class _Level:
    m: float
    factor: np.ndarray      # D x k, increment = factor @ standard normal
    full_root: np.ndarray   # D x D principal square root of the increment
    increment_norm: float


def _levels(m: MixtureModel, path: StepPath) -> Tuple[List[_Level], np.ndarray]:
    """Per-level increment factors and the top value mu_n."""
    if path.dim != m.dim:
        raise DomainError(f"Path dimension {path.dim} does not match model dimension {m.dim}")
    mu = m.grad(path.stack)
    prev = np.zeros((m.dim, m.dim))
    levels = []
    for i, (g_left, mu_i) in enumerate(zip(path.grid[:-1], mu)):
        delta = mu_i - prev
        prev = mu_i
        vals, vecs = np.linalg.eigh(0.5 * (delta + delta.T))
        tol = psd_tolerance(float(np.linalg.norm(mu_i)))
        if vals[0] < -tol:
            raise DomainError(
                f"Increment of grad xi at level {i} is not PSD (eigenvalue {vals[0]:.3e}); "
                "the model is not monotone on this path"
            )
        vals = np.clip(vals, 0.0, None)
        keep = vals > tol
        factor = vecs[:, keep] * np.sqrt(vals[keep])
        root = (vecs * np.sqrt(vals)) @ vecs.T
        levels.append(_Level(float(g_left), factor, root, float(np.linalg.norm(delta))))
    return levels, mu[-1]


@lru_cache(maxsize=64)
def _hermite_rule(n_nodes: int, rank: int) -> Tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Hermite rule for a standard normal in ``rank`` dimensions."""
    x, w = hermegauss(n_nodes)
    w = w / w.sum()
    points = np.array(list(product(*(x,) * rank)))
    weights = np.prod(np.array(list(product(*(w,) * rank))), axis=1)
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights


def _tree_recursion(
    projections: Sequence[np.ndarray],
    log_weights: Sequence[np.ndarray],
    params: Sequence[float],
    leaf_offset: np.ndarray,
    want_probs: bool,
) -> Tuple[float, Optional[np.ndarray]]:
    """
    Integrate a node tree back to its root.

    Args:
        projections: Per level, node increments projected on the atoms, shape (n_i, A)
        log_weights: Per level, log node weights, shape (n_i,)
        params: Per level, cascade parameter m
        leaf_offset: Per atom constant (field term plus log weight), shape (A,)
        want_probs: Also return the root average of the leaf Gibbs probabilities

    Returns:
        (root value, tilted atom probabilities or None)
    """
    depth = len(projections)
    n_atoms = leaf_offset.shape[0]
    energy = np.broadcast_to(leaf_offset, (1,) * depth + (n_atoms,))
    for axis, proj in enumerate(projections):
        shape = [1] * depth + [n_atoms]
        shape[axis] = proj.shape[0]
        energy = energy + proj.reshape(shape)
    y = logsumexp(energy, axis=-1)
    probs = np.exp(energy - y[..., None]) if want_probs else None

    for level in range(depth - 1, -1, -1):
        lw = log_weights[level]
        m = params[level]
        if m <= 0.0:
            tilt = np.broadcast_to(np.exp(lw), y.shape)
            y = np.sum(tilt * y, axis=-1)
        else:
            a = m * y + lw
            norm = logsumexp(a, axis=-1, keepdims=True)
            tilt = np.exp(a - norm)
            y = norm[..., 0] / m
        if want_probs:
            probs = np.sum(tilt[..., None] * probs, axis=-2)
    return float(y), probs


def _node_count_guard(counts: Sequence[int], limit: int) -> None:
    total = math.prod(counts)
    if total > limit:
        raise GuardError(
            f"Quadrature tree needs {total:.3g} nodes, above the limit {limit:.3g}; "
            "lower gh_nodes, use fewer levels or switch to monte-carlo mode"
        )


def _hermite_tree(levels: List[_Level], taus: np.ndarray, q: QuadratureSpec):
    projections, log_weights, counts = [], [], []
    for level in levels:
        rank = level.factor.shape[1]
        if rank == 0:
            projections.append(np.zeros((1, taus.shape[0])))
            log_weights.append(np.zeros(1))
            counts.append(1)
            continue
        points, weights = _hermite_rule(q.gh_nodes, rank)
        increments = points @ level.factor.T
        projections.append(increments @ taus.T)
        with np.errstate(divide="ignore"):
            log_weights.append(np.log(weights))
        counts.append(len(weights))
    _node_count_guard(counts, q.max_nodes)
    return projections, log_weights, counts


def _mc_nodes_per_level(q: QuadratureSpec, depth: int) -> int:
    per_replica = max(q.mc_samples / q.replicas, 1.0)
    n = max(2, int(math.ceil(per_replica ** (1.0 / max(depth, 1)))))
    if q.antithetic and n % 2:
        n += 1
    return n


def _mc_tree(levels: List[_Level], taus: np.ndarray, q: QuadratureSpec, replica: int):
    """Random node tree for one replica; draws depend only on (seed, replica, level)."""
    dim = taus.shape[1]
    n = _mc_nodes_per_level(q, len(levels))
    projections, log_weights, counts = [], [], []
    for i, level in enumerate(levels):
        if level.factor.shape[1] == 0:
            projections.append(np.zeros((1, taus.shape[0])))
            log_weights.append(np.zeros(1))
            counts.append(1)
            continue
        rng = np.random.default_rng([q.seed, replica, i])
        if q.antithetic:
            half = rng.standard_normal((n // 2, dim))
            normals = np.concatenate([half, -half])
        else:
            normals = rng.standard_normal((n, dim))
        projections.append(normals @ level.full_root.T @ taus.T)
        log_weights.append(np.full(n, -math.log(n)))
        counts.append(n)
    _node_count_guard(counts, q.max_nodes)
    return projections, log_weights, counts


def _log_partition(
    levels: List[_Level],
    field_matrix: np.ndarray,
    p1: SpinMeasure,
    q: QuadratureSpec,
    want_probs: bool = False,
):
    """Root value of the recursion for a given leaf field matrix.

    Returns:
        (value, std_error, atom probabilities or None, probability std_error or None, node counts)
    """
    taus = p1.taus
    offset = np.einsum("ak,kl,al->a", taus, field_matrix, taus) + p1.log_weights
    params = [lv.m for lv in levels]

    if q.mode == "gauss-hermite":
        projections, log_weights, counts = _hermite_tree(levels, taus, q)
        value, probs = _tree_recursion(projections, log_weights, params, offset, want_probs)
        return value, 0.0, probs, (np.zeros_like(probs) if want_probs else None), counts

    def replica(r: int):
        projections, log_weights, counts = _mc_tree(levels, taus, q, r)
        value, probs = _tree_recursion(projections, log_weights, params, offset, want_probs)
        return value, probs, counts

    runs = indexed_map(replica, q.replicas, q.jobs)
    values = np.array([v for v, _, _ in runs])
    std_error = float(values.std(ddof=1) / math.sqrt(len(values)))
    probs = probs_err = None
    if want_probs:
        stack = np.stack([p for _, p, _ in runs])
        probs = stack.mean(axis=0)
        probs_err = stack.std(axis=0, ddof=1) / math.sqrt(len(values))
    return float(values.mean()), std_error, probs, probs_err, runs[0][2]


def _theta_term(m: MixtureModel, path: StepPath) -> float:
    return 0.5 * float(np.sum(path.widths * m.theta(path.stack)))


def _prepare(m: MixtureModel, p1: SpinMeasure, path: StepPath, x: MatrixLike, q: QuadratureSpec):
    if p1.dim != m.dim:
        raise DomainError(f"Spin measure dimension {p1.dim} does not match model dimension {m.dim}")
    x_arr = as_array(x, m.dim)
    x_arr = 0.5 * (x_arr + x_arr.T)
    if q.mode == "gauss-hermite":
        path = canonicalize(path)
    levels, mu_top = _levels(m, path)
    return path, levels, mu_top, x_arr


def parisi_functional(
    m: MixtureModel,
    p1: SpinMeasure,
    path: StepPath,
    x: MatrixLike,
    q: QuadratureSpec = QuadratureSpec(),
) -> EvalResult:
    """
    Evaluate the Parisi functional P(pi, x) with the self-overlap correction.

    Args:
        m: Mixture model
        p1: Single-spin measure
        path: Monotone step path
        x: External field matrix
        q: Quadrature settings

    Returns:
        EvalResult with value, std_error (0 for Gauss-Hermite) and per-level diagnostics
    """
    path, levels, mu_top, x_arr = _prepare(m, p1, path, x, q)
    value, err, _, _, counts = _log_partition(levels, x_arr - 0.5 * mu_top, p1, q)
    value += _theta_term(m, path)
    diagnostics = {
        "mode": q.mode,
        "levels": len(levels),
        "cascade_params": [lv.m for lv in levels],
        "increment_norms": [lv.increment_norm for lv in levels],
        "nodes_per_level": list(counts),
    }
    return EvalResult(float(value), float(err), diagnostics)


def cascade_log_partition(
    m: MixtureModel,
    p1: SpinMeasure,
    path: StepPath,
    field_matrix: MatrixLike,
    q: QuadratureSpec = QuadratureSpec(),
) -> EvalResult:
    """Cascade term E log sum_a p_a exp(h . tau_a + field . tau_a tau_a^T) without any correction."""
    path, levels, _, f_arr = _prepare(m, p1, path, field_matrix, q)
    value, err, _, _, _ = _log_partition(levels, f_arr, p1, q)
    return EvalResult(value, err)


def _fd_gradient(m, p1, path, x_arr, q, h):
    dim = m.dim
    grad = np.zeros((dim, dim))
    err = np.zeros((dim, dim))
    for k in range(dim):
        for l in range(k, dim):
            e = np.zeros((dim, dim))
            e[k, l] = e[l, k] = 1.0
            scale = 1.0 if k == l else 2.0
            up = parisi_functional(m, p1, path, x_arr + h * e, q)
            down = parisi_functional(m, p1, path, x_arr - h * e, q)
            grad[k, l] = grad[l, k] = (up.value - down.value) / (2 * h * scale)
            err[k, l] = err[l, k] = math.hypot(up.std_error, down.std_error) / (2 * h * scale)
    return grad, err


def functional_gradient_x(
    m: MixtureModel,
    p1: SpinMeasure,
    path: StepPath,
    x: MatrixLike,
    q: QuadratureSpec = QuadratureSpec(),
    method: str = "reweight",
    h: float = 1e-4,
    with_error: bool = False,
):
    """
    Gradient of P(pi, x) in x.

    ``reweight`` carries the leaf Gibbs averages of tau tau^T back through
    the recursion with the tilted node weights of each level; ``fd`` takes
    central differences with common random numbers.

    Returns:
        SymMatrix, or (SymMatrix, entry-wise std_error) when ``with_error`` is set
    """
    if method not in ("reweight", "fd"):
        raise ConfigError(f"Unknown gradient method '{method}'")
    path, levels, mu_top, x_arr = _prepare(m, p1, path, x, q)
    if method == "fd":
        grad, err = _fd_gradient(m, p1, path, x_arr, q, h)
    else:
        _, _, probs, probs_err, _ = _log_partition(levels, x_arr - 0.5 * mu_top, p1, q, want_probs=True)
        overlaps = p1.self_overlaps
        grad = np.tensordot(probs, overlaps, axes=1)
        err = np.sqrt(np.tensordot(probs_err ** 2, overlaps ** 2, axes=1))
    result = SymMatrix(grad)
    return (result, err) if with_error else result


def _oracle_replica(levels, p1, offset, atoms, seed, replica):
    rng = np.random.default_rng([seed, replica])
    taus = p1.taus
    dim = taus.shape[1]
    shape: Tuple[int, ...] = ()
    field_proj = np.zeros((1, taus.shape[0]))  # accumulated per node, broadcast by level
    log_mass = np.zeros(())
    tails = []
    for level in levels:
        children = 1 if level.m <= 0.0 else atoms
        shape = shape + (children,)
        if children == 1:
            lw = np.zeros(shape)
        else:
            parents = int(np.prod(shape[:-1])) if len(shape) > 1 else 1
            gaps = rng.exponential(size=(parents, children))
            arrivals = np.cumsum(gaps, axis=1)
            points = arrivals ** (-1.0 / level.m)
            tail = level.m / (1.0 - level.m) * points[:, -1] ** (1.0 - level.m) / points.sum(axis=1)
            tails.append(float(tail.mean()))
            lw = np.log(points).reshape(shape)
        normals = rng.standard_normal(shape + (dim,))
        proj = normals @ level.full_root.T @ taus.T
        field_proj = field_proj.reshape(shape[:-1] + (1, taus.shape[0])) + proj
        log_mass = log_mass[..., None] + lw
    leaf = logsumexp(field_proj + offset, axis=-1)
    value = float(logsumexp(log_mass + leaf) - logsumexp(log_mass))
    return value, (max(tails) if tails else 0.0)


def parisi_functional_cascade_oracle(
    m: MixtureModel,
    p1: SpinMeasure,
    path: StepPath,
    x: MatrixLike,
    atoms: int = 2000,
    replicas: int = 10_000,
    seed: int = 0,
    jobs: int = 1,
    max_nodes: int = 10_000_000,
) -> EvalResult:
    """
    Direct estimate of P(pi, x) by sampling a truncated Poisson-Dirichlet cascade.

    Each level with parameter m in (0, 1) keeps, under every parent node, the
    ``atoms`` largest points of a Poisson process with intensity
    m t^{-m-1} dt (u_k = Gamma_k^{-1/m}); a level with m = 0 has one child.
    The leaf partition sums are weighted by the normalized product of the
    points along each branch and averaged over ``replicas`` disorder draws.
    """
    path = canonicalize(path)
    if path.n_levels > MAX_ORACLE_LEVELS:
        raise DomainError(f"Cascade oracle supports at most {MAX_ORACLE_LEVELS} levels, got {path.n_levels}")
    if not 1 <= atoms <= MAX_ORACLE_ATOMS:
        raise DomainError(f"Cascade oracle needs 1 <= atoms <= {MAX_ORACLE_ATOMS}, got {atoms}")
    if replicas < 2:
        raise DomainError("Cascade oracle needs at least 2 replicas")
    path, levels, mu_top, x_arr = _prepare(m, p1, path, x, QuadratureSpec())
    _node_count_guard([atoms if lv.m > 0 else 1 for lv in levels], max_nodes)
    offset = np.einsum("ak,kl,al->a", p1.taus, x_arr - 0.5 * mu_top, p1.taus) + p1.log_weights

    runs = indexed_map(lambda r: _oracle_replica(levels, p1, offset, atoms, seed, r), replicas, jobs)
    values = np.array([v for v, _ in runs])
    tail = float(np.mean([t for _, t in runs]))
    flagged = tail > TAIL_MASS_LIMIT
    if flagged:
        logger.warning(f"Cascade truncation: estimated tail mass {tail:.2e} exceeds {TAIL_MASS_LIMIT}; raise atoms")
    value = float(values.mean()) + _theta_term(m, path)
    std_error = float(values.std(ddof=1) / math.sqrt(replicas))
    return EvalResult(
        value,
        std_error,
        {"atoms": atoms, "replicas": replicas, "tail_mass": tail, "truncation_flagged": flagged},
    )


def lipschitz_path_bound(m: MixtureModel, a: StepPath, b: StepPath) -> float:
    """1/2 integral of |grad xi(pi) - grad xi(pi')| + |theta(pi) - theta(pi')| over (0, 1]."""
    widths, va, vb = merged_levels(a, b)
    grad_gap = np.linalg.norm(m.grad(va) - m.grad(vb), axis=(-2, -1))
    theta_gap = np.abs(m.theta(va) - m.theta(vb))
    return 0.5 * float(np.sum(widths * (grad_gap + theta_gap)))
