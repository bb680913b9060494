"""
Finite-N vector spin glass with the self-overlap correction.

A configuration is a D x N matrix sigma whose columns are atoms of P_1. The
Hamiltonian is

    H_N(sigma) = sum_p N^{-(p-1)/2} sum_{i_1..i_p} g_{i_1..i_p} sum_k beta_p(k) sigma_{k,i_1} ... sigma_{k,i_p}

with independent standard Gaussian tensors g, so that
E H_N(sigma) H_N(sigma') = N xi(sigma sigma'^T / N). The Gibbs weight of sigma is
prod_i p(sigma_i) exp(H_N(sigma) - N xi(R) / 2 + N x . R), R = sigma sigma^T / N,
where the xi(R) term is the self-overlap correction and can be switched off.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from .errors import ConfigError, DomainError, GuardError
from .functional import EvalResult
from .logger import get_logger
from .model import MixtureModel, SpinMeasure
from .parallel import indexed_map
from .symcone import MatrixLike, SymMatrix, as_array

logger = get_logger("finiten")

GIBBS_MODES = ("enumerate", "metropolis")
MAX_CONFIGS = 2_000_000
CHUNK_ENTRIES = 1 << 22


@dataclass(frozen=True)
class GibbsSpec:
    mode: str = "enumerate"
    n_sites: int = 6
    x: Tuple[Tuple[float, ...], ...] = ((0.0,),)
    correction: bool = True
    sweeps: int = 5000
    burn_in: int = 1000
    seed: int = 0
    jobs: int = 1
    max_configs: int = MAX_CONFIGS

    def __post_init__(self):
        if self.mode not in GIBBS_MODES:
            raise ConfigError(f"simulation.mode must be one of {GIBBS_MODES}, got '{self.mode}'")
        if self.n_sites < 1:
            raise ConfigError("simulation.N must be >= 1")
        if self.sweeps < 1 or self.burn_in < 0:
            raise ConfigError("simulation.sweeps must be >= 1 and burn_in >= 0")
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1, 1)
        object.__setattr__(self, "x", tuple(tuple(row) for row in x.tolist()))

    @property
    def field_matrix(self) -> np.ndarray:
        return np.asarray(self.x, dtype=float)

    @classmethod
    def from_dict(cls, data: Optional[dict], dim: int, **overrides) -> "GibbsSpec":
        """Simulation block: {"mode", "N", "x", "correction": "on"|"off"|bool, "sweeps", "burn_in"}."""
        data = dict(data or {})
        data.update({k: v for k, v in overrides.items() if v is not None})
        if "N" in data:
            data["n_sites"] = data.pop("N")
        if "correction" in data and isinstance(data["correction"], str):
            if data["correction"] not in ("on", "off"):
                raise ConfigError("simulation.correction must be 'on' or 'off'")
            data["correction"] = data["correction"] == "on"
        data.setdefault("x", np.zeros((dim, dim)).tolist())
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown simulation fields: {sorted(unknown)}")
        try:
            x = as_array(data["x"], dim)
        except DomainError as e:
            raise ConfigError(f"simulation.x: {e}")
        data["x"] = x.tolist()
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["x"] = [list(r) for r in self.x]
        return out

    def with_sites(self, n_sites: int) -> "GibbsSpec":
        return GibbsSpec(**{**asdict(self), "n_sites": int(n_sites)})

    def with_field(self, x: MatrixLike) -> "GibbsSpec":
        return GibbsSpec(**{**asdict(self), "x": np.asarray(as_array(x), dtype=float).tolist()})


@dataclass(frozen=True, eq=False)
class DisorderSample:
    """Gaussian couplings, one tensor of shape (N,)*p per mixture term."""

    model: MixtureModel
    n_sites: int
    tensors: Tuple[np.ndarray, ...]

    @classmethod
    def draw(cls, m: MixtureModel, n_sites: int, rng: np.random.Generator) -> "DisorderSample":
        tensors = tuple(rng.standard_normal((n_sites,) * term.p) for term in m.terms)
        return cls(m, n_sites, tensors)

    def hamiltonian(self, spins: np.ndarray) -> np.ndarray:
        """H_N for a batch of configurations of shape (C, D, N)."""
        spins = np.asarray(spins, dtype=float)
        out = np.zeros(spins.shape[0])
        n = self.n_sites
        for term, g in zip(self.model.terms, self.tensors):
            scale = n ** (-(term.p - 1) / 2.0)
            for k, b in enumerate(term.beta):
                if b == 0.0:
                    continue
                s = spins[:, k, :]
                t = np.tensordot(s, g, axes=([1], [0]))
                for _ in range(term.p - 1):
                    t = np.einsum("ci...,ci->c...", t, s)
                out += scale * b * t
        return out


class ConfigurationSpace:
    """
    All |atoms|^N configurations in colexicographic order (site 0 varies fastest).

    Configurations are grouped by their atom counts; the self-overlap
    R = sigma sigma^T / N only depends on the counts, so it is stored once per
    class.
    """

    def __init__(self, p1: SpinMeasure, n_sites: int, max_configs: int = MAX_CONFIGS):
        size = p1.size ** n_sites
        if size > max_configs:
            raise GuardError(
                f"Enumeration needs {p1.size}^{n_sites} = {size:.3g} configurations, above {max_configs:.3g}; "
                "use metropolis mode"
            )
        self.p1 = p1
        self.n_sites = n_sites
        self.size = size
        index = np.arange(size, dtype=np.int64)
        powers = p1.size ** np.arange(n_sites, dtype=np.int64)
        self.digits = ((index[:, None] // powers) % p1.size).astype(np.uint8)
        counts = np.zeros((size, p1.size), dtype=np.int64)
        for a in range(p1.size):
            counts[:, a] = np.sum(self.digits == a, axis=1)
        self.class_counts, self.class_index = np.unique(counts, axis=0, return_inverse=True)
        self.class_index = self.class_index.ravel()
        self.class_overlaps = np.tensordot(self.class_counts, p1.self_overlaps, axes=1) / n_sites
        self.log_weights = counts @ p1.log_weights
        logger.debug(f"Enumerated {size} configurations in {len(self.class_counts)} self-overlap classes")

    @property
    def n_classes(self) -> int:
        return self.class_counts.shape[0]

    def chunks(self, max_order: int):
        step = max(1, CHUNK_ENTRIES // (self.n_sites ** max(max_order - 1, 1) * self.p1.dim))
        for start in range(0, self.size, step):
            yield slice(start, min(start + step, self.size))

    def spins(self, sl: slice) -> np.ndarray:
        """Configurations of a slice as (C, D, N)."""
        return np.swapaxes(self.p1.taus[self.digits[sl]], 1, 2)


@lru_cache(maxsize=16)
def configuration_space(p1: SpinMeasure, n_sites: int, max_configs: int = MAX_CONFIGS) -> ConfigurationSpace:
    return ConfigurationSpace(p1, n_sites, max_configs)


def _max_order(m: MixtureModel) -> int:
    return max((t.p for t in m.terms), default=1)


def _field_terms(m: MixtureModel, overlaps: np.ndarray, x: np.ndarray, n: int, correction: bool) -> np.ndarray:
    """N x . R minus the correction N xi(R) / 2, per self-overlap."""
    out = n * np.sum(overlaps * x, axis=(-2, -1))
    if correction:
        out = out - 0.5 * n * m.xi(overlaps)
    return out


@dataclass
class _DisorderObservation:
    log_partition: Optional[float]
    overlaps: np.ndarray
    weights: np.ndarray


def _enumerate_disorder(m, p1, spec: GibbsSpec, x: np.ndarray, d: int) -> _DisorderObservation:
    space = configuration_space(p1, spec.n_sites, spec.max_configs)
    sample = DisorderSample.draw(m, spec.n_sites, np.random.default_rng([spec.seed, d]))
    per_class = _field_terms(m, space.class_overlaps, x, spec.n_sites, spec.correction)
    energy = space.log_weights + per_class[space.class_index]
    if m.terms:
        h = np.concatenate([sample.hamiltonian(space.spins(sl)) for sl in space.chunks(_max_order(m))])
        energy = energy + h
    log_z = float(logsumexp(energy))
    probs = np.exp(energy - log_z)
    mass = np.bincount(space.class_index, weights=probs, minlength=space.n_classes)
    return _DisorderObservation(log_z, space.class_overlaps, mass)


def _metropolis_disorder(m, p1, spec: GibbsSpec, x: np.ndarray, d: int) -> _DisorderObservation:
    """Single-site Metropolis chain; the proposal redraws one column from P_1."""
    n = spec.n_sites
    sample = DisorderSample.draw(m, n, np.random.default_rng([spec.seed, d]))
    rng = np.random.default_rng([spec.seed, d, 1])
    overlaps = p1.self_overlaps

    state = rng.choice(p1.size, size=n, p=p1.weights)
    counts = np.bincount(state, minlength=p1.size)

    def energy(st: np.ndarray, cnt: np.ndarray) -> float:
        r = np.tensordot(cnt, overlaps, axes=1) / n
        value = float(_field_terms(m, r, x, n, spec.correction))
        if m.terms:
            value += float(sample.hamiltonian(np.swapaxes(p1.taus[st][None], 1, 2))[0])
        return value

    current = energy(state, counts)
    samples = []
    accepted = 0
    for sweep in range(spec.burn_in + spec.sweeps):
        sites = rng.integers(n, size=n)
        proposals = rng.choice(p1.size, size=n, p=p1.weights)
        uniforms = rng.random(n)
        for i, a, u in zip(sites, proposals, uniforms):
            old = state[i]
            if a == old:
                continue
            state[i] = a
            counts[old] -= 1
            counts[a] += 1
            candidate = energy(state, counts)
            if math.log(u) < candidate - current:
                current = candidate
                accepted += 1
            else:
                state[i] = old
                counts[old] += 1
                counts[a] -= 1
        if sweep >= spec.burn_in:
            samples.append(np.tensordot(counts, overlaps, axes=1) / n)
    logger.debug(f"Metropolis disorder {d}: acceptance {accepted / ((spec.burn_in + spec.sweeps) * n):.3f}")
    stack = np.stack(samples)
    return _DisorderObservation(None, stack, np.full(len(samples), 1.0 / len(samples)))


def _observe(m, p1, spec: GibbsSpec, x: np.ndarray, d: int) -> _DisorderObservation:
    if spec.mode == "metropolis":
        return _metropolis_disorder(m, p1, spec, x, d)
    return _enumerate_disorder(m, p1, spec, x, d)


def _check_inputs(m: MixtureModel, p1: SpinMeasure, spec: GibbsSpec) -> np.ndarray:
    if p1.dim != m.dim:
        raise DomainError(f"Spin measure dimension {p1.dim} does not match model dimension {m.dim}")
    return as_array(spec.field_matrix, m.dim)


def _mean_and_error(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    n = values.shape[0]
    mean = values.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, values.std(axis=0, ddof=1) / math.sqrt(n)


def free_energy_finite(m: MixtureModel, p1: SpinMeasure, spec: GibbsSpec, n_disorder: int = 200) -> EvalResult:
    """
    Disorder-averaged F_N(x) = (1/N) E log Z_N(x) by exact enumeration.

    Args:
        m: Mixture model
        p1: Single-spin measure
        spec: Gibbs settings (N, x, correction on/off, seed)
        n_disorder: Number of independent disorder draws

    Returns:
        EvalResult with the mean over disorder and its standard error
    """
    x = _check_inputs(m, p1, spec)
    if spec.mode == "metropolis":
        raise DomainError("Metropolis mode cannot estimate log-partition functions; use enumerate mode")
    logger.debug(f"free_energy_finite: N={spec.n_sites}, {n_disorder} disorder draws, seed={spec.seed}")
    obs = indexed_map(lambda d: _enumerate_disorder(m, p1, spec, x, d), n_disorder, spec.jobs)
    values = np.array([o.log_partition for o in obs]) / spec.n_sites
    mean, err = _mean_and_error(values)
    return EvalResult(float(mean), float(err), {"N": spec.n_sites, "n_disorder": n_disorder,
                                                "correction": spec.correction})


@dataclass
class SelfOverlapStats:
    mean: SymMatrix
    mean_std_error: np.ndarray
    concentration: float
    concentration_std_error: float
    n_disorder: int

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "mean_std_error": self.mean_std_error.tolist(),
            "concentration": self.concentration,
            "concentration_std_error": self.concentration_std_error,
            "n_disorder": self.n_disorder,
        }


def _summarize(observations: Sequence[_DisorderObservation]) -> SelfOverlapStats:
    per_disorder = np.stack([o.weights @ o.overlaps.reshape(len(o.weights), -1) for o in observations])
    dim = observations[0].overlaps.shape[-1]
    mean, mean_err = _mean_and_error(per_disorder)
    mean = mean.reshape(dim, dim)
    spread = np.array([
        o.weights @ np.linalg.norm(o.overlaps - mean, axis=(-2, -1)) for o in observations
    ])
    conc, conc_err = _mean_and_error(spread)
    return SelfOverlapStats(SymMatrix(mean), mean_err.reshape(dim, dim), float(conc), float(conc_err),
                            len(observations))


def self_overlap_stats(m: MixtureModel, p1: SpinMeasure, spec: GibbsSpec, n_disorder: int = 200) -> SelfOverlapStats:
    """E <sigma sigma^T / N> and the concentration E <|sigma sigma^T / N - mean|>."""
    x = _check_inputs(m, p1, spec)
    obs = indexed_map(lambda d: _observe(m, p1, spec, x, d), n_disorder, spec.jobs)
    return _summarize(obs)


def concentration_trend(
    m: MixtureModel,
    p1: SpinMeasure,
    x: MatrixLike,
    n_list: Sequence[int],
    n_disorder: int = 200,
    spec: Optional[GibbsSpec] = None,
) -> pd.DataFrame:
    """Self-overlap mean and concentration for each N, one row per N."""
    base = (spec or GibbsSpec(x=np.zeros((m.dim, m.dim)).tolist())).with_field(as_array(x, m.dim))
    rows = []
    for n in n_list:
        stats = self_overlap_stats(m, p1, base.with_sites(n), n_disorder)
        row = {"N": int(n), "concentration": stats.concentration,
               "concentration_std_error": stats.concentration_std_error}
        for k in range(m.dim):
            row[f"mean_{k}{k}"] = float(stats.mean.entries[k, k])
            row[f"mean_{k}{k}_std_error"] = float(stats.mean_std_error[k, k])
        rows.append(row)
        logger.info(f"N={n}: concentration={stats.concentration:.4f} +/- {stats.concentration_std_error:.4f}")
    return pd.DataFrame(rows)


@dataclass
class CovarianceReport:
    table: pd.DataFrame

    @property
    def passed(self) -> bool:
        return bool(self.table["passed"].all())

    def to_dict(self) -> dict:
        return {"passed": self.passed, "table": self.table.to_dict(orient="records")}


def covariance_selftest(
    m: MixtureModel,
    p1: SpinMeasure,
    n_sites: int,
    n_pairs: int = 5,
    n_disorder: int = 10_000,
    seed: int = 0,
    pairs: Optional[Sequence[Tuple[np.ndarray, np.ndarray]]] = None,
) -> CovarianceReport:
    """
    Compare the empirical E H_N(sigma) H_N(sigma') over fresh disorder with
    N xi(sigma sigma'^T / N).

    The first pair is (sigma, sigma); the band is four standard errors of
    the product H H', sqrt((v v' + c^2) / n) with v, v' the variances and c
    the covariance.
    """
    if p1.dim != m.dim:
        raise DomainError(f"Spin measure dimension {p1.dim} does not match model dimension {m.dim}")
    if pairs is None:
        rng = np.random.default_rng([seed, n_sites])
        draws = rng.choice(p1.size, size=(n_pairs, 2, n_sites), p=p1.weights)
        draws[0, 1] = draws[0, 0]
        pairs = [(p1.taus[a].T, p1.taus[b].T) for a, b in draws]
    left = np.stack([np.asarray(a, dtype=float) for a, _ in pairs])
    right = np.stack([np.asarray(b, dtype=float) for _, b in pairs])
    batch = np.concatenate([left, right])

    def draw(d: int) -> np.ndarray:
        sample = DisorderSample.draw(m, n_sites, np.random.default_rng([seed, n_sites, d]))
        return sample.hamiltonian(batch)

    energies = np.stack([draw(d) for d in range(n_disorder)])
    k = len(pairs)
    products = energies[:, :k] * energies[:, k:]
    empirical = products.mean(axis=0)

    cross = np.einsum("ckn,cln->ckl", left, right) / n_sites
    expected = n_sites * m.xi(cross)
    var_left = n_sites * m.xi(np.einsum("ckn,cln->ckl", left, left) / n_sites)
    var_right = n_sites * m.xi(np.einsum("ckn,cln->ckl", right, right) / n_sites)
    band = 4.0 * np.sqrt((var_left * var_right + expected ** 2) / n_disorder)
    table = pd.DataFrame({
        "pair": np.arange(k),
        "empirical": empirical,
        "expected": expected,
        "band": band,
        "passed": np.abs(empirical - expected) <= band + 1e-12,
    })
    report = CovarianceReport(table)
    if not report.passed:
        logger.warning(f"Covariance self-test failed on {int((~table['passed']).sum())} of {k} pairs")
    return report


def gradient_consistency(
    m: MixtureModel,
    p1: SpinMeasure,
    spec: GibbsSpec,
    directions: int = 5,
    h: float = 1e-3,
    n_disorder: int = 200,
) -> pd.DataFrame:
    """
    Directional finite differences of F_N against y . E <sigma sigma^T / N>.

    Both sides use the same disorder draws, and the comparison is made per
    draw, so the standard error is that of the per-draw difference.
    """
    x = _check_inputs(m, p1, spec)
    if spec.mode == "metropolis":
        raise DomainError("gradient_consistency needs enumerate mode")
    rows = []
    for j in range(directions):
        rng = np.random.default_rng([spec.seed, directions, j])
        y = rng.standard_normal((m.dim, m.dim))
        y = 0.5 * (y + y.T)
        y /= np.linalg.norm(y)

        def per_draw(d: int) -> Tuple[float, float]:
            up = _enumerate_disorder(m, p1, spec, x + h * y, d)
            down = _enumerate_disorder(m, p1, spec, x - h * y, d)
            centre = _enumerate_disorder(m, p1, spec, x, d)
            fd = (up.log_partition - down.log_partition) / (2 * h * spec.n_sites)
            predicted = float(centre.weights @ np.sum(centre.overlaps * y, axis=(-2, -1)))
            return fd, predicted

        pairs = np.array(indexed_map(per_draw, n_disorder, spec.jobs))
        fd, fd_err = _mean_and_error(pairs[:, 0])
        pred, pred_err = _mean_and_error(pairs[:, 1])
        _, diff_err = _mean_and_error(pairs[:, 0] - pairs[:, 1])
        gap = abs(float(fd) - float(pred))
        rows.append({
            "direction": j,
            "finite_difference": float(fd),
            "predicted": float(pred),
            "std_error": float(fd_err),
            "difference": gap,
            "passed": gap <= 3 * float(diff_err) + 10 * h ** 2,
        })
    return pd.DataFrame(rows)


@dataclass
class PottsStructure:
    n_configs: int
    diagonal: bool
    trace_is_n: bool

    @property
    def passed(self) -> bool:
        return self.diagonal and self.trace_is_n


def potts_structure_check(p1: SpinMeasure, n_sites: int, max_configs: int = MAX_CONFIGS) -> PottsStructure:
    """Check every configuration: sigma sigma^T is diagonal with trace N, in integer arithmetic."""
    if not p1.is_integer_valued:
        raise DomainError("potts_structure_check needs integer-valued atoms")
    space = configuration_space(p1, n_sites, max_configs)
    taus = np.round(p1.taus).astype(np.int64)
    diagonal, trace_ok = True, True
    off = ~np.eye(p1.dim, dtype=bool)
    for sl in space.chunks(1):
        spins = taus[space.digits[sl]]
        gram = np.einsum("cnk,cnl->ckl", spins, spins)
        diagonal &= not np.any(gram[:, off])
        trace_ok &= bool(np.all(np.trace(gram, axis1=1, axis2=2) == n_sites))
    return PottsStructure(space.size, bool(diagonal), bool(trace_ok))
