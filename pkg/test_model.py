import numpy as np
import pytest

from src.errors import ConfigError, DomainError
from src.model import (
    MixtureModel,
    MixtureTerm,
    SpinMeasure,
    grad_xi,
    is_symmetric_mixture,
    overlap_hull,
    theta_eval,
    theta_entrywise,
    validate_hypotheses,
    xi_eval,
    xi_star,
)
from src.symcone import psd_order, random_psd


def test_xi_ising_quadratic(ising_p2):
    assert xi_eval(ising_p2, [[0.5]]) == pytest.approx(0.09 * 0.25, abs=1e-15)
    assert grad_xi(ising_p2, [[0.5]]).entries[0, 0] == pytest.approx(0.09, abs=1e-15)
    assert theta_eval(ising_p2, [[0.5]]) == pytest.approx(0.0225, abs=1e-15)


def test_xi_sums_every_entry():
    m = MixtureModel(2, (MixtureTerm(2, [1.0, 1.0]),))
    assert xi_eval(m, np.eye(2)) == pytest.approx(2.0)
    assert grad_xi(m, np.eye(2)).allclose(2 * np.eye(2))
    a = np.array([[1.0, 0.5], [0.5, 1.0]])
    assert xi_eval(m, a) == pytest.approx(2.5)


def test_theta_entrywise_sums_to_theta(mixed_d2, rng):
    for _ in range(20):
        a = random_psd(rng, 2)
        assert np.sum(theta_entrywise(mixed_d2, a)) == pytest.approx(theta_eval(mixed_d2, a), abs=1e-12)


def test_zero_model_is_identically_zero(rng):
    m = MixtureModel.zero(3)
    a = random_psd(rng, 3)
    assert xi_eval(m, a) == 0.0
    assert grad_xi(m, a).is_zero()
    assert m.is_zero


def test_gradient_matches_finite_differences(mixed_d2, rng):
    a = random_psd(rng, 2).entries
    g = grad_xi(mixed_d2, a).entries
    h = 1e-6
    for k in range(2):
        for l in range(2):
            e = np.zeros((2, 2))
            e[k, l] = 1.0
            fd = (mixed_d2.xi(a + h * e) - mixed_d2.xi(a - h * e)) / (2 * h)
            assert fd == pytest.approx(g[k, l], abs=1e-7)


def test_dimension_mismatch_raises(ising_p2):
    with pytest.raises(DomainError):
        xi_eval(ising_p2, np.eye(2))
    with pytest.raises(DomainError):
        MixtureModel(2, (MixtureTerm(2, [1.0]),))
    with pytest.raises(DomainError):
        MixtureTerm(0, [1.0])


def test_from_dict_errors():
    assert MixtureModel.from_dict({"D": 1, "terms": [{"p": 2, "beta": [0.3]}]}).dim == 1
    with pytest.raises(ConfigError, match="terms"):
        MixtureModel.from_dict({"D": 2})
    with pytest.raises(ConfigError):
        MixtureModel.from_dict({"D": 2, "terms": [{"p": 2, "beta": [1.0]}]})
    with pytest.raises(ConfigError):
        MixtureModel.from_dict({"D": 2, "terms": [{"beta": [1.0, 1.0]}]})


def test_monotone_on_ordered_pairs(mixed_d2, rng):
    for _ in range(100):
        b = random_psd(rng, 2)
        a = b + random_psd(rng, 2)
        assert xi_eval(mixed_d2, a) >= xi_eval(mixed_d2, b) - 1e-12
        assert psd_order(grad_xi(mixed_d2, a), grad_xi(mixed_d2, b))


def test_xi_star_quadratic():
    m = MixtureModel(1, (MixtureTerm(2, [0.3]),))
    res = xi_star(m, [[0.6]])
    assert not res.diverged
    assert res.value == pytest.approx(1.0, abs=1e-6)
    assert res.maximizer.entries[0, 0] == pytest.approx(0.6 / 0.18, abs=1e-4)


def test_xi_star_at_zero_is_zero(potts_symmetric):
    res = xi_star(potts_symmetric, np.zeros((2, 2)))
    assert res.value == pytest.approx(0.0, abs=1e-10)


def test_xi_star_diverges_for_linear_model():
    m = MixtureModel(1, (MixtureTerm(1, [0.3]),))
    res = xi_star(m, [[0.6]])
    assert res.diverged
    assert res.value == np.inf


def test_validate_symmetric_potts_passes(potts_symmetric):
    report = validate_hypotheses(potts_symmetric, samples=100, seed=1)
    assert report.passed
    assert report.flags == []


def test_validate_zero_mixture_passes():
    assert validate_hypotheses(MixtureModel.zero(2), samples=20).passed


def test_validate_cubic_fails_convexity():
    m = MixtureModel(2, (MixtureTerm(3, [1.0, 1.0]),))
    report = validate_hypotheses(m, samples=200, seed=0)
    assert not report.passed
    convex = report.check("convex")
    assert not convex.passed
    assert 0 < len(convex.counterexamples) <= 3
    assert "odd orders present: [3]" in report.flags


def test_symmetric_mixture_detection(potts_symmetric, mixed_d2):
    assert is_symmetric_mixture(potts_symmetric)
    assert not is_symmetric_mixture(mixed_d2)


def test_spin_measure_validation():
    with pytest.raises(DomainError):
        SpinMeasure(np.array([[1.0], [-1.0]]), np.array([0.6, 0.6]))
    with pytest.raises(DomainError):
        SpinMeasure(np.array([[1.0, 1.0]]), np.array([1.0]))
    with pytest.raises(DomainError):
        SpinMeasure(np.array([[1.0], [-1.0]]), np.array([1.0, 0.0]))


def test_spin_measure_from_dict():
    assert SpinMeasure.from_dict({"type": "ising"}).size == 2
    assert SpinMeasure.from_dict({"type": "potts"}, dim=3).dim == 3
    custom = SpinMeasure.from_dict({"atoms": [{"tau": [0.5, 0.0], "w": 0.25}, {"tau": [0.0, 1.0], "w": 0.75}]})
    assert custom.dim == 2
    with pytest.raises(ConfigError):
        SpinMeasure.from_dict({"type": "potts"})
    with pytest.raises(ConfigError):
        SpinMeasure.from_dict({"type": "heisenberg"})
    with pytest.raises(ConfigError):
        SpinMeasure.from_dict({"atoms": [{"tau": [2.0], "w": 1.0}]})


def test_overlap_hull_ising(ising):
    hull = overlap_hull(ising)
    assert hull.size == 1
    assert hull.contains([[1.0]])
    assert hull.distance([[0.5]]) == pytest.approx(0.5, abs=1e-9)


def test_overlap_hull_potts(potts2):
    hull = overlap_hull(potts2)
    assert hull.size == 2
    assert hull.barycenter.allclose(np.eye(2) / 2)
    assert hull.contains(np.diag([0.3, 0.7]))
    assert not hull.contains(np.eye(2))
    assert hull.distance(np.eye(2)) == pytest.approx(1.0, abs=1e-9)
