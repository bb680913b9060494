import numpy as np
import pytest

from src.errors import ConfigError, DomainError
from src.paths import (
    StepPath,
    canonicalize,
    lift_to_endpoint,
    order_lift,
    path_distance,
    project_to_endpoint,
)
from src.symcone import PsdMatrix, psd_order, random_psd, sqrt_psd


@pytest.fixture
def two_level():
    return StepPath.from_arrays((0.0, 0.4, 1.0), [[[0.3]], [[0.8]]])


def test_evaluate_is_left_continuous(two_level):
    assert two_level.evaluate(0.0)[0, 0] == 0.0
    assert two_level.evaluate(0.2)[0, 0] == pytest.approx(0.3)
    assert two_level.evaluate(0.4)[0, 0] == pytest.approx(0.3)
    assert two_level.evaluate(0.41)[0, 0] == pytest.approx(0.8)
    assert two_level.evaluate(1.0)[0, 0] == pytest.approx(0.8)
    with pytest.raises(DomainError):
        two_level.evaluate(1.5)


def test_constructor_rejects_bad_paths():
    with pytest.raises(DomainError):
        StepPath.from_arrays((0.0, 0.5, 1.0), [[[0.8]], [[0.3]]])
    with pytest.raises(DomainError):
        StepPath.from_arrays((0.0, 0.7, 0.5, 1.0), [[[0.1]], [[0.2]], [[0.3]]])
    with pytest.raises(DomainError):
        StepPath.from_arrays((0.1, 1.0), [[[0.1]]])
    with pytest.raises(DomainError):
        StepPath.from_arrays((0.0, 1.0), [[[-0.5]]])
    with pytest.raises(DomainError):
        StepPath((0.0, 0.5, 1.0), (PsdMatrix([[0.1]]), PsdMatrix(np.eye(2))))


def test_from_dict_round_trip(two_level):
    again = StepPath.from_dict(two_level.to_dict())
    assert again.grid == two_level.grid
    assert path_distance(again, two_level) == 0.0
    with pytest.raises(ConfigError):
        StepPath.from_dict({"grid": [0.0, 1.0]})


def test_in_class(two_level):
    assert two_level.in_class([[0.8]])
    assert not two_level.in_class([[0.7]])


def test_canonicalize_drops_and_merges():
    path = StepPath.from_arrays((0.0, 0.3, 0.3, 1.0), [[[0.1]], [[0.2]], [[0.2]]])
    canon = canonicalize(path)
    assert canon.grid == (0.0, 0.3, 1.0)
    assert canon.n_levels == 2
    assert not path.is_canonical()
    assert canon.is_canonical()

    flat = StepPath.from_arrays((0.0, 0.5, 1.0), [[[0.2]], [[0.2]]])
    assert canonicalize(flat).n_levels == 1
    assert path_distance(canonicalize(flat), flat) == 0.0


def test_path_distance_examples(two_level):
    a = StepPath.constant([[0.3]])
    b = StepPath.constant([[0.5]])
    assert path_distance(a, b) == pytest.approx(0.2)
    assert path_distance(two_level, a) == pytest.approx(0.6 * 0.5)
    assert path_distance(two_level, two_level) == 0.0


def test_projection_one_dimensional(two_level):
    proj = project_to_endpoint(two_level, [[0.4]])
    assert proj.path.in_class([[0.4]])
    assert proj.path.evaluate(0.2)[0, 0] == pytest.approx(0.15)
    assert proj.distance == pytest.approx(0.4 * 0.15 + 0.6 * 0.4)
    assert proj.w_norm == pytest.approx(0.4)
    assert proj.distance <= proj.k_bound


def test_projection_to_zero_gives_zero_path(two_level):
    proj = project_to_endpoint(two_level, [[0.0]])
    assert proj.path.endpoint.is_zero()
    assert proj.distance == pytest.approx(0.4 * 0.3 + 0.6 * 0.8)
    assert proj.k_bound == pytest.approx(0.8)


def test_projection_rejects_unordered_endpoint(two_level):
    with pytest.raises(DomainError):
        project_to_endpoint(two_level, [[0.9]])


def _path_ending_at(rng, top, levels):
    """Random increasing path with last value ``top``: top^1/2 A_j top^1/2 with 0 <= A_1 <= ... <= A_r = I."""
    dim = top.shape[0]
    partial = np.cumsum([random_psd(rng, dim).entries for _ in range(levels)], axis=0)
    s_inv = np.linalg.inv(sqrt_psd(partial[-1]).entries)
    root = sqrt_psd(top).entries
    values = root @ (s_inv @ partial @ s_inv) @ root
    values[-1] = top
    cuts = np.sort(rng.uniform(0.05, 0.95, size=levels - 1))
    return StepPath.from_arrays((0.0,) + tuple(cuts) + (1.0,), values)


def test_projection_ratio_on_general_endpoints(rng):
    ratios = []
    for i in range(500):
        dim = 1 + i % 3
        z = random_psd(rng, dim, scale=0.5).entries
        w = random_psd(rng, dim, scale=0.3).entries
        proj = project_to_endpoint(_path_ending_at(rng, z + w, 1 + i % 4), z)
        assert proj.path.in_class(z, tol=1e-10)
        for left, right in zip(proj.path.values, proj.path.values[1:]):
            assert psd_order(right, left)
        ratios.append(proj.ratio)
    worst = max(ratios)
    print(f"largest distance / K(z, |w|) over {len(ratios)} projections: {worst:.4g}")
    assert np.isfinite(worst)
    assert worst < 10.0


def test_projection_is_conjugation(rng):
    for i in range(50):
        dim = 2 + i % 2
        z = random_psd(rng, dim, scale=0.5).entries
        w = random_psd(rng, dim, scale=0.3).entries
        assert not np.allclose(z @ w, w @ z)
        path = _path_ending_at(rng, z + w, 3)
        h = sqrt_psd(z).entries @ np.linalg.inv(sqrt_psd(z + w).entries)
        mids = 0.5 * (np.asarray(path.grid[:-1]) + np.asarray(path.grid[1:]))
        expected = h @ path.evaluate(mids) @ h.T
        proj = project_to_endpoint(path, z)
        assert np.allclose(proj.path.evaluate(mids), expected, atol=1e-9)
        for left, right in zip(expected, expected[1:]):
            assert psd_order(right, left)


def test_projection_singular_endpoint():
    path = StepPath.from_arrays((0.0, 0.5, 1.0), [0.5 * np.eye(2), np.eye(2)])
    z = np.diag([0.5, 0.0])
    proj = project_to_endpoint(path, z)
    assert proj.path.in_class(z, tol=1e-10)
    assert proj.distance <= proj.k_bound


def test_lift_to_endpoint():
    path = StepPath.constant([[0.3]])
    lifted = lift_to_endpoint(path, [[0.3]], [[0.2]], eps=0.1)
    assert lifted.grid == pytest.approx((0.0, 0.9, 1.0))
    assert lifted.in_class([[0.5]])
    assert path_distance(path, lifted) == pytest.approx(0.1 * 0.2)
    with pytest.raises(DomainError):
        lift_to_endpoint(path, [[0.1]], [[0.0]])


def test_order_lift_dominates(rng):
    z = np.diag([1.0, 0.0])
    other = np.diag([0.0, 1.0])
    w = order_lift(z, other)
    assert w.allclose(np.sqrt(2) * np.eye(2))
    assert psd_order(z + w.entries, other)
    for _ in range(50):
        a = random_psd(rng, 3).entries
        b = random_psd(rng, 3).entries
        assert psd_order(a + order_lift(a, b).entries, b)
