import math

import numpy as np
import pytest
from numpy.polynomial.hermite_e import hermegauss
from scipy.integrate import quad

from src.errors import ConfigError, DomainError, GuardError
from src.functional import (
    QuadratureSpec,
    cascade_log_partition,
    functional_gradient_x,
    lipschitz_path_bound,
    parisi_functional,
    parisi_functional_cascade_oracle,
)
from src.model import MixtureModel, MixtureTerm, SpinMeasure
from src.paths import StepPath
from src.symcone import SymMatrix, random_psd


def _gauss_expectation(fn, variance, nodes=40):
    x, w = hermegauss(nodes)
    w = w / w.sum()
    return float(np.sum(w * fn(math.sqrt(variance) * x)))


def _ising_constant_closed_form(q, beta, x, nodes=40):
    mu = 2 * beta ** 2 * q
    theta = beta ** 2 * q ** 2
    return _gauss_expectation(lambda h: np.log(np.cosh(h)), mu, nodes) - 0.5 * mu + x + 0.5 * theta


def test_ising_constant_path_closed_form(ising, ising_p2):
    path = StepPath.constant([[0.5]])
    q = QuadratureSpec(gh_nodes=40)
    for x in (0.0, 0.2, -0.3):
        value = parisi_functional(ising_p2, ising, path, [[x]], q).value
        assert value == pytest.approx(_ising_constant_closed_form(0.5, 0.3, x), abs=1e-10)


def test_ising_constant_path_against_adaptive_quadrature(ising, ising_p2):
    mu = 0.09
    density = lambda g: math.exp(-g * g / 2) / math.sqrt(2 * math.pi)
    integral, _ = quad(lambda g: math.log(math.cosh(math.sqrt(mu) * g)) * density(g), -np.inf, np.inf)
    expected = integral - 0.5 * mu + 0.5 * 0.0225
    value = parisi_functional(ising_p2, ising, StepPath.constant([[0.5]]), [[0.0]], QuadratureSpec(gh_nodes=40)).value
    assert value == pytest.approx(expected, abs=1e-7)


def test_two_level_recursion_by_hand(ising, ising_p2):
    path = StepPath.from_arrays((0.0, 0.4, 1.0), [[[0.3]], [[0.8]]])
    x = 0.1
    mu1, mu2 = 0.18 * 0.3, 0.18 * 0.8
    theta = lambda a: 0.09 * a * a
    nodes, weights = hermegauss(30)
    weights = weights / weights.sum()

    def outer(h1):
        inner = np.array([
            np.sum(weights * np.exp(0.4 * (np.log(np.cosh(h + math.sqrt(mu2 - mu1) * nodes)) + x - 0.5 * mu2)))
            for h in np.atleast_1d(h1)
        ])
        return np.log(inner) / 0.4

    expected = _gauss_expectation(outer, mu1, 30) + 0.5 * (0.4 * theta(0.3) + 0.6 * theta(0.8))
    value = parisi_functional(ising_p2, ising, path, [[x]], QuadratureSpec(gh_nodes=30)).value
    assert value == pytest.approx(expected, abs=1e-10)


def test_zero_model_values(ising, potts2):
    zero1, zero2 = MixtureModel.zero(1), MixtureModel.zero(2)
    assert parisi_functional(zero1, ising, StepPath.zero(1), [[0.0]]).value == pytest.approx(0.0, abs=1e-12)
    assert parisi_functional(zero1, ising, StepPath.constant([[0.7]]), [[0.25]]).value == pytest.approx(0.25, abs=1e-12)
    x = np.diag([0.3, -0.2])
    expected = math.log(0.5 * math.exp(0.3) + 0.5 * math.exp(-0.2))
    assert parisi_functional(zero2, potts2, StepPath.zero(2), x).value == pytest.approx(expected, abs=1e-12)


def test_diagnostics_record_levels(ising, ising_p2):
    path = StepPath.from_arrays((0.0, 0.4, 1.0), [[[0.3]], [[0.8]]])
    res = parisi_functional(ising_p2, ising, path, [[0.0]], QuadratureSpec(gh_nodes=8))
    assert res.std_error == 0.0
    assert res.diagnostics["levels"] == 2
    assert res.diagnostics["cascade_params"] == [0.0, 0.4]
    assert res.diagnostics["nodes_per_level"] == [8, 8]


def test_cascade_term_adds_correction_back(potts_symmetric, potts2):
    path = StepPath.from_arrays((0.0, 0.5, 1.0), [0.1 * np.eye(2), [[0.4, 0.05], [0.05, 0.3]]])
    x = np.array([[0.1, 0.02], [0.02, -0.1]])
    q = QuadratureSpec(gh_nodes=10)
    mu_top = potts_symmetric.grad(path.endpoint.entries)
    theta = 0.5 * float(np.sum(path.widths * potts_symmetric.theta(path.stack)))
    cascade = cascade_log_partition(potts_symmetric, potts2, path, x - 0.5 * mu_top, q).value
    assert parisi_functional(potts_symmetric, potts2, path, x, q).value == pytest.approx(cascade + theta, abs=1e-12)


def test_monte_carlo_agrees_with_hermite(potts_symmetric, potts2):
    path = StepPath.constant([[0.5, 0.1], [0.1, 0.4]])
    x = np.zeros((2, 2))
    reference = parisi_functional(potts_symmetric, potts2, path, x, QuadratureSpec(gh_nodes=20)).value
    mc = parisi_functional(potts_symmetric, potts2, path, x,
                           QuadratureSpec(mode="monte-carlo", mc_samples=40_000, replicas=16, seed=3))
    assert mc.std_error > 0
    assert abs(mc.value - reference) <= 5 * mc.std_error + 1e-4


def test_monte_carlo_is_reproducible(potts_symmetric, potts2):
    path = StepPath.from_arrays((0.0, 0.5, 1.0), [0.1 * np.eye(2), 0.3 * np.eye(2)])
    q = QuadratureSpec(mode="monte-carlo", mc_samples=4_000, replicas=4, seed=11)
    a = parisi_functional(potts_symmetric, potts2, path, np.zeros((2, 2)), q)
    b = parisi_functional(potts_symmetric, potts2, path, np.zeros((2, 2)), QuadratureSpec(**{**q.to_dict(), "jobs": 4}))
    assert a.value == b.value
    assert a.std_error == b.std_error


def test_node_guard(potts_symmetric, potts2):
    path = StepPath.from_arrays((0.0, 0.3, 0.6, 1.0), [0.2 * np.eye(2), 0.5 * np.eye(2), 0.9 * np.eye(2)])
    with pytest.raises(GuardError):
        parisi_functional(potts_symmetric, potts2, path, np.zeros((2, 2)), QuadratureSpec(gh_nodes=30))


def test_dimension_mismatch(ising_p2, potts2):
    with pytest.raises(DomainError):
        parisi_functional(ising_p2, potts2, StepPath.zero(1), [[0.0]])
    with pytest.raises(ConfigError):
        QuadratureSpec(mode="simpson")


def test_ising_gradient_is_one(ising, ising_p2):
    path = StepPath.from_arrays((0.0, 0.4, 1.0), [[[0.3]], [[0.8]]])
    grad = functional_gradient_x(ising_p2, ising, path, [[0.2]], QuadratureSpec(gh_nodes=12))
    assert grad.entries[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_symmetric_potts_gradient_at_zero(potts_symmetric, potts2):
    path = StepPath.from_arrays((0.0, 0.5, 1.0), [0.1 * np.eye(2), 0.4 * np.eye(2)])
    grad = functional_gradient_x(potts_symmetric, potts2, path, np.zeros((2, 2)), QuadratureSpec(gh_nodes=12))
    assert grad.entries[0, 1] == pytest.approx(0.0, abs=1e-12)
    assert grad.entries[0, 0] == pytest.approx(grad.entries[1, 1], abs=1e-8)
    assert grad.trace() == pytest.approx(1.0, abs=1e-12)


def test_reweighted_gradient_matches_finite_differences(mixed_d2, potts2, rng, random_path):
    q = QuadratureSpec(gh_nodes=12)
    for _ in range(3):
        path = random_path(rng, 2, 2)
        x = SymMatrix(0.3 * rng.standard_normal((2, 2))).entries
        reweight = functional_gradient_x(mixed_d2, potts2, path, x, q)
        fd = functional_gradient_x(mixed_d2, potts2, path, x, q, method="fd", h=1e-4)
        assert reweight.allclose(fd, atol=1e-6)


def test_monte_carlo_gradient_carries_errors(potts_symmetric, potts2):
    path = StepPath.constant(0.3 * np.eye(2))
    q = QuadratureSpec(mode="monte-carlo", mc_samples=8_000, replicas=8, seed=5)
    grad, err = functional_gradient_x(potts_symmetric, potts2, path, np.diag([0.2, 0.0]), q, with_error=True)
    exact = functional_gradient_x(potts_symmetric, potts2, path, np.diag([0.2, 0.0]), QuadratureSpec(gh_nodes=20))
    assert err.shape == (2, 2)
    assert np.all(np.abs(grad.entries - exact.entries) <= 5 * err + 1e-3)


def test_convex_in_field(mixed_d2, potts2, rng, random_path):
    q = QuadratureSpec(gh_nodes=10)
    path = random_path(rng, 2, 2)
    for _ in range(10):
        a = SymMatrix(rng.standard_normal((2, 2))).entries
        b = SymMatrix(rng.standard_normal((2, 2))).entries
        mid = parisi_functional(mixed_d2, potts2, path, 0.5 * (a + b), q).value
        avg = 0.5 * (parisi_functional(mixed_d2, potts2, path, a, q).value
                     + parisi_functional(mixed_d2, potts2, path, b, q).value)
        assert mid <= avg + 1e-12


def test_lipschitz_in_field(mixed_d2, potts2, rng, random_path):
    q = QuadratureSpec(gh_nodes=10)
    path = random_path(rng, 2, 2)
    for _ in range(10):
        a = SymMatrix(rng.standard_normal((2, 2))).entries
        b = SymMatrix(rng.standard_normal((2, 2))).entries
        gap = abs(parisi_functional(mixed_d2, potts2, path, a, q).value
                  - parisi_functional(mixed_d2, potts2, path, b, q).value)
        assert gap <= np.linalg.norm(a - b) + 1e-12


def test_lipschitz_bound_examples():
    m = MixtureModel(1, (MixtureTerm(2, [1.0]),))
    a, b = StepPath.constant([[0.6]]), StepPath.constant([[0.2]])
    assert lipschitz_path_bound(m, a, a) == 0.0
    assert lipschitz_path_bound(m, a, b) == pytest.approx(0.5 * (abs(1.2 - 0.4) + abs(0.36 - 0.04)))


def test_lipschitz_bound_matches_riemann_sum(mixed_d2, rng, random_path):
    a = random_path(rng, 2, 3)
    b = random_path(rng, 2, 2)
    s = (np.arange(10_000) + 0.5) / 10_000
    va, vb = a.evaluate(s), b.evaluate(s)
    integrand = (np.linalg.norm(mixed_d2.grad(va) - mixed_d2.grad(vb), axis=(-2, -1))
                 + np.abs(mixed_d2.theta(va) - mixed_d2.theta(vb)))
    riemann = 0.5 * float(integrand.mean())
    # midpoints miss at most one grid cell per breakpoint
    assert lipschitz_path_bound(mixed_d2, a, b) == pytest.approx(riemann, abs=5e-3)


def test_lipschitz_in_path(mixed_d2, potts2, rng, random_path):
    q = QuadratureSpec(gh_nodes=16)
    x = np.diag([0.1, -0.1])
    for i in range(100):
        a = random_path(rng, 2, 1 + i % 2)
        b = random_path(rng, 2, 1 + (i + 1) % 2)
        gap = abs(parisi_functional(mixed_d2, potts2, a, x, q).value - parisi_functional(mixed_d2, potts2, b, x, q).value)
        assert gap <= lipschitz_path_bound(mixed_d2, a, b) + 1e-6


def test_oracle_rejects_bad_settings(ising, ising_p2):
    path = StepPath.constant([[0.5]])
    with pytest.raises(DomainError):
        parisi_functional_cascade_oracle(ising_p2, ising, path, [[0.0]], atoms=0)
    with pytest.raises(DomainError):
        parisi_functional_cascade_oracle(ising_p2, ising, path, [[0.0]], replicas=1)
    deep = StepPath.from_arrays((0.0, 0.2, 0.4, 0.6, 1.0), [[[0.1]], [[0.2]], [[0.3]], [[0.4]]])
    with pytest.raises(DomainError):
        parisi_functional_cascade_oracle(ising_p2, ising, deep, [[0.0]])


def test_oracle_single_level_is_plain_average(ising, ising_p2):
    # a one-level path has m = 0 only, so the oracle is a Monte-Carlo average of the leaf
    path = StepPath.constant([[0.5]])
    reference = parisi_functional(ising_p2, ising, path, [[0.1]], QuadratureSpec(gh_nodes=40)).value
    res = parisi_functional_cascade_oracle(ising_p2, ising, path, [[0.1]], atoms=10, replicas=4000, seed=2)
    assert abs(res.value - reference) <= 4 * res.std_error + 1e-9
    assert not res.diagnostics["truncation_flagged"]


@pytest.mark.slow
def test_oracle_matches_recursion_two_levels(ising, ising_p2):
    path = StepPath.from_arrays((0.0, 0.4, 1.0), [[[0.3]], [[0.8]]])
    reference = parisi_functional(ising_p2, ising, path, [[0.1]], QuadratureSpec(gh_nodes=30)).value
    res = parisi_functional_cascade_oracle(ising_p2, ising, path, [[0.1]], atoms=1000, replicas=4000, seed=7)
    assert abs(res.value - reference) <= 4 * res.std_error + 2e-3


def test_potts_field_shift(mixed_d2, potts2, rng, random_path):
    q = QuadratureSpec(gh_nodes=10)
    path = random_path(rng, 2, 2)
    x = SymMatrix(0.3 * rng.standard_normal((2, 2))).entries
    base = parisi_functional(mixed_d2, potts2, path, x, q).value
    for r in (0.5, -1.25):
        shifted = parisi_functional(mixed_d2, potts2, path, x + r * np.eye(2), q).value
        assert shifted == pytest.approx(base + r, abs=1e-10)


@pytest.mark.slow
def test_oracle_matches_recursion_in_two_dimensions(mixed_d2, potts2, rng):
    q = QuadratureSpec(gh_nodes=12)
    for i in range(10):
        first = random_psd(rng, 2, scale=0.2).entries
        path = StepPath.from_arrays((0.0, rng.uniform(0.2, 0.5), 1.0),
                                    [first, first + random_psd(rng, 2, scale=0.2).entries])
        x = SymMatrix(0.2 * rng.standard_normal((2, 2))).entries
        reference = parisi_functional(mixed_d2, potts2, path, x, q).value
        res = parisi_functional_cascade_oracle(mixed_d2, potts2, path, x, atoms=1000, replicas=2000, seed=i)
        assert abs(res.value - reference) <= 4 * res.std_error + 2e-3
