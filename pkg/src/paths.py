"""
Step paths: left-continuous, increasing PSD-valued paths on (0, 1].

A StepPath stores breakpoints 0 = g_0 <= g_1 <= ... <= g_n = 1 and values
v_1 <= ... <= v_n (Loewner order); the path equals v_i on (g_{i-1}, g_i] and
0 at s = 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DomainError
from .logger import get_logger
from .symcone import (
    MatrixLike,
    PsdMatrix,
    SymMatrix,
    as_array,
    as_psd,
    k_bound,
    positive_block,
    psd_order,
    psd_tolerance,
    sqrt_psd,
)

logger = get_logger("paths")

ENDPOINT_TOL = 1e-10
GRID_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class StepPath:
    grid: Tuple[float, ...]
    values: Tuple[PsdMatrix, ...]

    def __post_init__(self):
        grid = tuple(float(g) for g in self.grid)
        values = tuple(as_psd(v) for v in self.values)
        if len(values) == 0:
            raise DomainError("A step path needs at least one level")
        if len(grid) != len(values) + 1:
            raise DomainError(f"Grid has {len(grid)} points for {len(values)} levels (expected levels + 1)")
        if abs(grid[0]) > GRID_TOL or abs(grid[-1] - 1.0) > GRID_TOL:
            raise DomainError(f"Grid must run from 0 to 1, got {grid[0]} .. {grid[-1]}")
        grid = (0.0,) + grid[1:-1] + (1.0,)
        if any(b < a for a, b in zip(grid, grid[1:])):
            raise DomainError(f"Grid is not non-decreasing: {list(grid)}")
        dim = values[0].dim
        for i, v in enumerate(values):
            if v.dim != dim:
                raise DomainError(f"Level {i} has dimension {v.dim}, expected {dim}")
        for i in range(1, len(values)):
            if not psd_order(values[i], values[i - 1]):
                raise DomainError(f"Path is not increasing between levels {i - 1} and {i}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, q: MatrixLike) -> "StepPath":
        return cls((0.0, 1.0), (as_psd(q),))

    @classmethod
    def zero(cls, dim: int) -> "StepPath":
        return cls((0.0, 1.0), (PsdMatrix(np.zeros((dim, dim))),))

    @classmethod
    def from_arrays(cls, grid: Sequence[float], values: np.ndarray) -> "StepPath":
        return cls(tuple(grid), tuple(PsdMatrix(v) for v in np.asarray(values, dtype=float)))

    @classmethod
    def from_dict(cls, data: dict) -> "StepPath":
        """Path file: {"grid": [reals], "values": [matrix, ...]}."""
        if not isinstance(data, dict) or "grid" not in data or "values" not in data:
            raise ConfigError("Path needs fields 'grid' and 'values'")
        try:
            values = [np.array(v, dtype=float) for v in data["values"]]
            grid = [float(g) for g in data["grid"]]
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Malformed path field: {e}")
        return cls(tuple(grid), tuple(values))

    def to_dict(self) -> dict:
        return {"grid": list(self.grid), "values": [v.tolist() for v in self.values]}

    @property
    def dim(self) -> int:
        return self.values[0].dim

    @property
    def n_levels(self) -> int:
        return len(self.values)

    @property
    def endpoint(self) -> PsdMatrix:
        return self.values[-1]

    @property
    def widths(self) -> np.ndarray:
        return np.diff(np.asarray(self.grid))

    @property
    def stack(self) -> np.ndarray:
        """Level values as an array of shape (levels, D, D)."""
        return np.stack([v.entries for v in self.values])

    def evaluate(self, s) -> np.ndarray:
        """pi(s) for scalar or array s in [0, 1]; returns (..., D, D)."""
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr < 0) or np.any(s_arr > 1):
            raise DomainError("Paths are defined on [0, 1]")
        idx = np.searchsorted(np.asarray(self.grid), s_arr, side="left")
        padded = np.concatenate([np.zeros((1, self.dim, self.dim)), self.stack])
        return padded[idx]

    def in_class(self, z: MatrixLike, tol: float = ENDPOINT_TOL) -> bool:
        """Membership in Pi(z), the paths ending at z."""
        return bool(np.linalg.norm(self.endpoint.entries - as_array(z, self.dim)) <= tol)

    def is_canonical(self) -> bool:
        return canonicalize(self).n_levels == self.n_levels

    def __repr__(self) -> str:
        return f"StepPath(grid={list(self.grid)}, levels={self.n_levels}, D={self.dim})"


def _same_value(a: PsdMatrix, b: PsdMatrix) -> bool:
    scale = max(a.norm(), b.norm())
    return bool(np.max(np.abs(a.entries - b.entries)) <= psd_tolerance(scale))


def canonicalize(path: StepPath) -> StepPath:
    """Drop zero-width levels and merge equal consecutive values."""
    grid: List[float] = [0.0]
    values: List[PsdMatrix] = []
    for right, width, value in zip(path.grid[1:], path.widths, path.values):
        if width <= GRID_TOL:
            continue
        if values and _same_value(values[-1], value):
            grid[-1] = right
            values[-1] = value
            continue
        grid.append(right)
        values.append(value)
    if not values:
        # every level had zero width; only possible through rounding
        return StepPath.constant(path.endpoint)
    grid[-1] = 1.0
    return StepPath(tuple(grid), tuple(values))


def merged_levels(a: StepPath, b: StepPath) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Common refinement of two paths.

    Returns:
        (widths, values_a, values_b) with one entry per interval of the
        merged grid.
    """
    if a.dim != b.dim:
        raise DomainError(f"Paths have dimensions {a.dim} and {b.dim}")
    grid = np.union1d(np.asarray(a.grid), np.asarray(b.grid))
    widths = np.diff(grid)
    keep = widths > 0
    rights = grid[1:][keep]
    return widths[keep], a.evaluate(rights), b.evaluate(rights)


def path_distance(a: StepPath, b: StepPath) -> float:
    """Integral over (0, 1] of the Frobenius distance |pi(s) - pi'(s)|."""
    widths, va, vb = merged_levels(a, b)
    return float(np.sum(widths * np.linalg.norm(va - vb, axis=(-2, -1))))


@dataclass(frozen=True)
class Projection:
    """Result of moving a path onto Pi(z), with the distance estimate."""

    path: StepPath
    distance: float
    k_bound: float
    w_norm: float

    @property
    def ratio(self) -> float:
        if self.k_bound > 0:
            return self.distance / self.k_bound
        return 0.0 if self.distance == 0 else float("inf")


def project_to_endpoint(path: StepPath, z: MatrixLike) -> Projection:
    """
    Map a path ending at z + w (w PSD) to a path ending at z.

    The path is conjugated by h = sqrt(z) sqrt(z + w)^{-1}. For singular z the
    construction runs on the eigen-block of z with positive eigenvalues and
    the result is padded with zeros; z = 0 gives the zero path.

    Args:
        path: Path in Pi(z + w)
        z: Target endpoint

    Returns:
        Projection holding the new path, its distance to the input and K(z, |w|)
    """
    z = as_psd(z)
    if z.dim != path.dim:
        raise DomainError(f"Endpoint has dimension {z.dim}, path has {path.dim}")
    if not psd_order(path.endpoint, z):
        raise DomainError("Path endpoint minus z is not positive semi-definite")
    w_norm = float(np.linalg.norm(path.endpoint.entries - z.entries))

    if z.is_zero():
        projected = StepPath.zero(z.dim)
    else:
        vecs, eig = positive_block(z)
        blocks = np.einsum("ka,nkl,lb->nab", vecs, path.stack, vecs)
        top = PsdMatrix(blocks[-1])
        h = np.diag(np.sqrt(eig)) @ np.linalg.inv(sqrt_psd(top).entries)
        reduced = h @ blocks @ h.T
        full = vecs @ reduced @ vecs.T
        full = 0.5 * (full + np.swapaxes(full, -1, -2))
        full[-1] = z.entries
        values = psd_levels(full)
        projected = canonicalize(StepPath(path.grid, values))

    distance = path_distance(path, projected)
    bound = k_bound(z, w_norm)
    logger.debug(f"Projected path onto endpoint: distance={distance:.3e}, K={bound:.3e}")
    return Projection(projected, distance, bound, w_norm)


def psd_levels(stack: np.ndarray) -> Tuple[PsdMatrix, ...]:
    """PsdMatrix levels from a stack that is monotone up to rounding."""
    out = []
    for level in stack:
        vals, vecs = np.linalg.eigh(level)
        out.append(PsdMatrix((vecs * np.clip(vals, 0.0, None)) @ vecs.T))
    return tuple(out)


def lift_to_endpoint(path: StepPath, z: MatrixLike, w: MatrixLike, eps: float = 1e-3) -> StepPath:
    """Truncate the path at 1 - eps and end it with the value z + w on (1 - eps, 1]."""
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    target = as_psd(as_array(z, path.dim) + as_array(w, path.dim))
    if not psd_order(target, path.endpoint):
        raise DomainError("Lift target z + w is not above the path endpoint")
    cut = 1.0 - eps
    grid = [g for g in path.grid if g < cut] + [cut, 1.0]
    rights = np.asarray(grid[1:-1])
    values = [PsdMatrix(v) for v in path.evaluate(rights)] + [target]
    return canonicalize(StepPath(tuple(grid), tuple(values)))


def order_lift(z: MatrixLike, z_other: MatrixLike) -> SymMatrix:
    """w = |z - z'| I, so that z + w dominates z'."""
    a = as_array(z)
    b = as_array(z_other, a.shape[0])
    return SymMatrix(np.linalg.norm(a - b) * np.eye(a.shape[0]))
