"""
Symmetric matrices and the positive semi-definite cone.

One symmetric eigen-decomposition (numpy.linalg.eigh) backs the order test,
the square root and the eigenvalue queries, so they all share one tolerance:
eigenvalues down to -TOL_PSD * (1 + |a|) count as zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike

from .errors import DomainError

TOL_PSD = 1e-10


def psd_tolerance(norm: float) -> float:
    """Eigenvalue tolerance for a matrix of Frobenius norm ``norm``."""
    return TOL_PSD * (1.0 + norm)


@dataclass(frozen=True, eq=False)
class SymMatrix:
    """D x D real symmetric matrix with the entry-wise inner product.

    Only the upper triangle of the input is read; the lower triangle is
    mirrored from it, so symmetry holds exactly.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise DomainError(f"Expected a non-empty square matrix, got shape {a.shape}")
        sym = np.triu(a) + np.triu(a, 1).T
        sym.setflags(write=False)
        object.__setattr__(self, "entries", sym)

    @classmethod
    def zeros(cls, dim: int) -> "SymMatrix":
        return cls(np.zeros((dim, dim)))

    @classmethod
    def identity(cls, dim: int) -> "SymMatrix":
        return cls(np.eye(dim))

    @classmethod
    def diag(cls, values: Sequence[float]) -> "SymMatrix":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def dot(self, other: "MatrixLike") -> float:
        """Entry-wise inner product, the sum over all D^2 entry products."""
        b = as_array(other, self.dim)
        return float(np.sum(self.entries * b))

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))

    def trace(self) -> float:
        return float(np.trace(self.entries))

    def eigvalsh(self) -> np.ndarray:
        """Eigenvalues in descending order."""
        return np.linalg.eigvalsh(self.entries)[::-1]

    def is_zero(self) -> bool:
        return not np.any(self.entries)

    def allclose(self, other: "MatrixLike", atol: float = 1e-10) -> bool:
        return bool(np.allclose(self.entries, as_array(other, self.dim), rtol=0.0, atol=atol))

    def tolist(self) -> list:
        return self.entries.tolist()

    def __add__(self, other):
        return SymMatrix(self.entries + as_array(other, self.dim))

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        return SymMatrix(self.entries - as_array(other, self.dim))

    def __rsub__(self, other):
        return SymMatrix(as_array(other, self.dim) - self.entries)

    def __neg__(self):
        return SymMatrix(-self.entries)

    def __mul__(self, scalar: float):
        return SymMatrix(self.entries * float(scalar))

    def __rmul__(self, scalar: float):
        return self.__mul__(scalar)

    def __truediv__(self, scalar: float):
        return SymMatrix(self.entries / float(scalar))

    def __array__(self, dtype=None, copy=None):
        if copy:
            return np.array(self.entries, dtype=dtype)
        return np.asarray(self.entries, dtype=dtype)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.entries.tolist()})"


@dataclass(frozen=True, eq=False, repr=False)
class PsdMatrix(SymMatrix):
    """Positive semi-definite matrix with cached eigen-decomposition.

    Negative eigenvalues within tolerance are clipped to zero on construction.
    ``eig`` is sorted in descending order and ``vecs`` holds the matching
    eigenvectors as columns.
    """

    eig: np.ndarray = field(init=False, repr=False)
    vecs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        super().__post_init__()
        vals, vecs = np.linalg.eigh(self.entries)
        tol = psd_tolerance(float(np.linalg.norm(self.entries)))
        if vals[0] < -tol:
            raise DomainError(f"Matrix is not positive semi-definite (min eigenvalue {vals[0]:.3e})")
        if vals[0] < 0.0:
            vals = np.clip(vals, 0.0, None)
            rebuilt = (vecs * vals) @ vecs.T
            rebuilt = np.triu(rebuilt) + np.triu(rebuilt, 1).T
            rebuilt.setflags(write=False)
            object.__setattr__(self, "entries", rebuilt)
        vals = np.ascontiguousarray(vals[::-1])
        vecs = np.ascontiguousarray(vecs[:, ::-1])
        vals.setflags(write=False)
        vecs.setflags(write=False)
        object.__setattr__(self, "eig", vals)
        object.__setattr__(self, "vecs", vecs)

    def is_zero(self) -> bool:
        return bool(self.eig[0] <= psd_tolerance(self.norm()))


MatrixLike = Union[SymMatrix, ArrayLike]


def as_array(a: MatrixLike, dim: int = None) -> np.ndarray:
    """Square float array view of ``a``; checks the dimension when given."""
    if isinstance(a, SymMatrix):
        arr = a.entries
    else:
        arr = np.asarray(a, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DomainError(f"Expected a square matrix, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DomainError(f"Dimension mismatch: expected {dim}x{dim}, got {arr.shape[0]}x{arr.shape[1]}")
    return arr


def as_sym(a: MatrixLike) -> SymMatrix:
    return a if isinstance(a, SymMatrix) else SymMatrix(a)


def as_psd(a: MatrixLike) -> PsdMatrix:
    if isinstance(a, PsdMatrix):
        return a
    return PsdMatrix(as_array(a))


def psd_order(a: MatrixLike, b: MatrixLike) -> bool:
    """True iff a - b is positive semi-definite (a >= b in the Loewner order)."""
    a_arr = as_array(a)
    b_arr = as_array(b, a_arr.shape[0])
    diff = a_arr - b_arr
    diff = np.triu(diff) + np.triu(diff, 1).T
    scale = max(float(np.linalg.norm(a_arr)), float(np.linalg.norm(b_arr)))
    return bool(np.linalg.eigvalsh(diff)[0] >= -psd_tolerance(scale))


def sqrt_psd(a: MatrixLike) -> PsdMatrix:
    """Principal square root of a PSD matrix."""
    a = as_psd(a)
    root = (a.vecs * np.sqrt(a.eig)) @ a.vecs.T
    return PsdMatrix(root)


def min_positive_eig(a: MatrixLike) -> float:
    """Smallest eigenvalue strictly above the PSD tolerance."""
    a = as_psd(a)
    positive = a.eig[a.eig > psd_tolerance(a.norm())]
    if positive.size == 0:
        raise DomainError("min_positive_eig is undefined for the zero matrix")
    return float(positive.min())


def k_bound(z: MatrixLike, r: float) -> float:
    """K(z, r) from the endpoint-projection estimate; finite for every z and r >= 0."""
    if r < 0:
        raise DomainError(f"k_bound needs r >= 0, got {r}")
    z = as_psd(z)
    if z.is_zero():
        return float(r)
    nz = z.norm()
    m = min_positive_eig(z)
    return float(
        (nz + r) * (1.0 + math.sqrt(nz) / math.sqrt(m)) / math.sqrt(m) * math.sqrt(r)
        + math.sqrt((nz + r) * r)
    )


def factor_size(dim: int) -> int:
    """Number of free entries of a D x D triangular factor (also of a symmetric matrix)."""
    return dim * (dim + 1) // 2


def lambda_embed(upper: Sequence[float], dim: int = None) -> SymMatrix:
    """Identify an upper-triangle vector (l_11, l_12, ..., l_DD) with a symmetric matrix.

    Diagonal entries are kept and off-diagonal entries halved, so that
    sum_{k<=k'} l_kk' a_kk' equals lambda_embed(l) . a for symmetric a.
    """
    vals = np.asarray(upper, dtype=float).ravel()
    n = vals.size
    d = int(round((math.sqrt(8 * n + 1) - 1) / 2))
    if n == 0 or factor_size(d) != n:
        raise DomainError(f"Length {n} is not D(D+1)/2 for any D")
    if dim is not None and d != dim:
        raise DomainError(f"Length {n} does not match D={dim} (expected {factor_size(dim)})")
    out = np.zeros((d, d))
    out[np.triu_indices(d)] = vals
    out[~np.eye(d, dtype=bool)] *= 0.5
    return SymMatrix(out)


def upper_entries(a: MatrixLike) -> np.ndarray:
    """Row-major upper triangle (k <= k') of a square matrix."""
    arr = as_array(a)
    return arr[np.triu_indices(arr.shape[0])].copy()


def sym_from_params(params: ArrayLike, dim: int) -> np.ndarray:
    """Symmetric matrix whose upper triangle is ``params``."""
    out = np.zeros((dim, dim))
    out[np.triu_indices(dim)] = params
    return np.triu(out) + np.triu(out, 1).T


def psd_from_factor(params: ArrayLike, dim: int) -> np.ndarray:
    """L L^T for the lower-triangular L filled (row-major) from ``params``."""
    lower = np.zeros((dim, dim))
    lower[np.tril_indices(dim)] = params
    out = lower @ lower.T
    return np.triu(out) + np.triu(out, 1).T


def factor_params(a: MatrixLike) -> np.ndarray:
    """Inverse of psd_from_factor for positive-definite input (Cholesky factor)."""
    arr = as_array(a)
    d = arr.shape[0]
    lower = np.linalg.cholesky(arr + 1e-12 * np.eye(d))
    return lower[np.tril_indices(d)].copy()


def conjugate(h: np.ndarray, a: np.ndarray) -> np.ndarray:
    """h a h^T, broadcast over a stack of matrices."""
    out = h @ a @ np.swapaxes(h, -1, -2) if h.ndim > 2 else h @ a @ h.T
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def positive_block(z: MatrixLike) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvectors (columns) and eigenvalues of z above tolerance, largest first."""
    z = as_psd(z)
    d = int(np.sum(z.eig > psd_tolerance(z.norm())))
    return z.vecs[:, :d], z.eig[:d]


def random_psd(rng: np.random.Generator, dim: int, scale: float = 1.0, rank: int = None) -> PsdMatrix:
    """Wishart-type random PSD matrix G G^T / rank, times ``scale``."""
    k = dim if rank is None else rank
    g = rng.standard_normal((dim, k))
    return PsdMatrix(scale * (g @ g.T) / k)
