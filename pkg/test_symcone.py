import math

import numpy as np
import pytest

from src.errors import DomainError
from src.symcone import (
    PsdMatrix,
    SymMatrix,
    factor_params,
    k_bound,
    lambda_embed,
    min_positive_eig,
    psd_from_factor,
    psd_order,
    random_psd,
    sqrt_psd,
    upper_entries,
)


def test_symmetry_is_structural():
    a = SymMatrix([[1.0, 2.0], [5.0, 3.0]])
    assert a.entries[0, 1] == a.entries[1, 0] == 2.0


def test_dot_sums_all_entry_products(rng):
    a = SymMatrix(rng.standard_normal((3, 3)))
    b = SymMatrix(rng.standard_normal((3, 3)))
    expected = sum(a.entries[i, j] * b.entries[i, j] for i in range(3) for j in range(3))
    assert a.dot(b) == pytest.approx(expected, abs=1e-14)


def test_psd_clips_tiny_negative_eigenvalues():
    a = PsdMatrix(np.diag([1.0, -1e-13]))
    assert a.eig.min() >= 0.0
    with pytest.raises(DomainError):
        PsdMatrix(np.diag([1.0, -1e-3]))


def test_psd_order_examples(rng):
    assert psd_order(np.eye(2), np.zeros((2, 2)))
    assert not psd_order(np.diag([1.0, -1.0]), np.zeros((2, 2)))
    for _ in range(50):
        p = random_psd(rng, 3)
        q = random_psd(rng, 3)
        assert psd_order(p + q, p)


def test_psd_order_is_a_partial_order(rng):
    for _ in range(50):
        a = random_psd(rng, 3)
        b = a + random_psd(rng, 3)
        c = b + random_psd(rng, 3)
        assert psd_order(a, a)
        assert psd_order(c, a)
        if psd_order(a, b):
            assert np.allclose(a.entries, b.entries, atol=1e-8)


def test_norm_is_monotone_in_order(rng):
    for _ in range(100):
        b = random_psd(rng, 3)
        a = b + random_psd(rng, 3)
        assert a.norm() >= b.norm() - 1e-12


def test_sqrt_psd_examples(rng):
    assert np.allclose(sqrt_psd(np.eye(3)).entries, np.eye(3))
    assert np.allclose(sqrt_psd(np.diag([4.0, 9.0])).entries, np.diag([2.0, 3.0]))
    for _ in range(20):
        lower = np.tril(rng.standard_normal((3, 3)))
        a = lower @ lower.T
        root = sqrt_psd(a).entries
        assert np.allclose(root @ root, a, atol=1e-9)


def test_min_positive_eig_examples():
    assert min_positive_eig(np.diag([3.0, 0.0])) == pytest.approx(3.0)
    assert min_positive_eig(np.eye(2)) == pytest.approx(1.0)
    assert min_positive_eig(np.diag([2.0, 5.0, 0.0])) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        min_positive_eig(np.zeros((2, 2)))


def test_k_bound_examples(rng):
    z = random_psd(rng, 2)
    assert k_bound(z, 0.0) == 0.0
    assert k_bound(np.zeros((2, 2)), 0.3) == pytest.approx(0.3)
    s2 = math.sqrt(2.0)
    expected = (s2 + 1) * (1 + 2 ** 0.25) + math.sqrt(s2 + 1)
    assert k_bound(np.eye(2), 1.0) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(DomainError):
        k_bound(np.eye(2), -1.0)


def test_lambda_embed_examples(rng):
    assert lambda_embed([5.0]).entries.tolist() == [[5.0]]
    assert lambda_embed([1.0, 4.0, 1.0]).entries.tolist() == [[1.0, 2.0], [2.0, 1.0]]
    for dim in (1, 2, 3):
        lam = rng.standard_normal(dim * (dim + 1) // 2)
        a = SymMatrix(rng.standard_normal((dim, dim)))
        brute = float(np.sum(lam * upper_entries(a)))
        assert lambda_embed(lam, dim).dot(a) == pytest.approx(brute, abs=1e-12)
    with pytest.raises(DomainError):
        lambda_embed([1.0, 2.0])


def test_powers_stormer(rng):
    violations = 0
    for i in range(1000):
        dim = 1 + i % 3
        a = random_psd(rng, dim, scale=rng.uniform(0.1, 3.0))
        b = random_psd(rng, dim, scale=rng.uniform(0.1, 3.0), rank=1 + i % dim)
        gap = np.linalg.norm(sqrt_psd(a + b).entries - sqrt_psd(a).entries)
        violations += gap > math.sqrt(b.trace()) + 1e-9
    assert violations == 0


def test_norm_trace_sandwich(rng):
    for i in range(200):
        dim = 1 + i % 4
        a = random_psd(rng, dim)
        assert a.trace() / math.sqrt(dim) <= a.norm() + 1e-12
        assert a.norm() <= a.trace() + 1e-12


def test_inverse_bound(rng):
    for i in range(200):
        dim = 1 + i % 3
        a = random_psd(rng, dim) + 0.05 * np.eye(dim)
        inv = np.linalg.inv(a.entries)
        assert np.linalg.norm(inv) <= math.sqrt(dim) / min_positive_eig(a) + 1e-9


def test_factor_round_trip(rng):
    a = random_psd(rng, 3) + 0.1 * np.eye(3)
    rebuilt = psd_from_factor(factor_params(a), 3)
    assert np.allclose(rebuilt, a.entries, atol=1e-10)
