"""
Subcommand implementations behind main.py.

Every command takes a resolved ExperimentConfig and returns a CommandOutcome
(exit code, JSON payload and optionally a table); writing the outputs and the
manifest is left to main.py.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd

from config import GH_NODES, MC_SAMPLES, ExperimentConfig
from .errors import ConfigError, DomainError
from .finiten import (
    GibbsSpec,
    covariance_selftest,
    free_energy_finite,
    gradient_consistency,
    potts_structure_check,
    self_overlap_stats,
)
from .functional import QuadratureSpec, parisi_functional, parisi_functional_cascade_oracle
from .logger import get_logger
from .model import MixtureModel, SpinMeasure, is_symmetric_mixture, validate_hypotheses
from .paths import StepPath
from .symcone import as_array
from .varforms import (
    OptimizerSpec,
    VariationalResult,
    check_equivalence,
    free_energy_hj,
    free_energy_pan,
    free_energy_xistar,
    grad_parisi,
    hopf_value,
    parisi_value,
    parisi_value_constrained,
    potts_corollary,
    value_vs_levels,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DOMAIN = 2
EXIT_NOT_CONVERGED = 3

DEFAULT_OBSERVABLES = ("free-energy", "self-overlap", "concentration")


@dataclass
class CommandOutcome:
    exit_code: int
    payload: dict
    table: Optional[pd.DataFrame] = None


def build_model(cfg: ExperimentConfig) -> MixtureModel:
    return MixtureModel.from_dict(cfg.model)


def build_spin_measure(cfg: ExperimentConfig, dim: int) -> SpinMeasure:
    """Spin measure from the config; without one, Ising for D = 1 and Potts otherwise."""
    if cfg.spin_measure is None:
        return SpinMeasure.ising() if dim == 1 else SpinMeasure.potts(dim)
    p1 = SpinMeasure.from_dict(cfg.spin_measure, dim)
    if p1.dim != dim:
        raise ConfigError(f"'spin_measure' has dimension {p1.dim}, model has D={dim}")
    return p1


def build_field(raw, dim: int) -> np.ndarray:
    if raw is None:
        return np.zeros((dim, dim))
    try:
        return as_array(raw, dim)
    except DomainError as e:
        raise ConfigError(f"'x': {e}")


def build_quadrature(cfg: ExperimentConfig) -> QuadratureSpec:
    data = {"gh_nodes": GH_NODES, "mc_samples": MC_SAMPLES, "seed": cfg.seed, "jobs": cfg.jobs}
    data.update(cfg.quadrature)
    return QuadratureSpec.from_dict(data)


def build_optimizer(cfg: ExperimentConfig) -> OptimizerSpec:
    data = {"seed": cfg.seed, "jobs": cfg.jobs}
    data.update(cfg.optimizer)
    if "eps_schedule" in data:
        data["eps_schedule"] = tuple(data["eps_schedule"])
    return OptimizerSpec.from_dict(data, build_quadrature(cfg))


def build_gibbs(cfg: ExperimentConfig, dim: int) -> GibbsSpec:
    data = {"seed": cfg.seed, "jobs": cfg.jobs}
    if cfg.x is not None:
        data["x"] = cfg.x
    data.update(cfg.simulation)
    return GibbsSpec.from_dict(data, dim)


def _logger(logger: Optional[logging.Logger]) -> logging.Logger:
    return logger or get_logger("cli")


def cmd_validate(cfg: ExperimentConfig, logger: Optional[logging.Logger] = None) -> CommandOutcome:
    """Randomized hypothesis checks on the model; exit 2 when a counterexample is found."""
    log = _logger(logger)
    m = build_model(cfg)
    section = cfg.section("validate")
    report = validate_hypotheses(m, samples=int(section.get("samples", 200)), seed=cfg.seed)
    for check in report.checks:
        log.info(f"  {check.name}: {'pass' if check.passed else 'FAIL'} ({check.n_checked} checked)")
    for flag in report.flags:
        log.warning(f"  flag: {flag}")
    payload = {"model": m.to_dict(), "symmetric": is_symmetric_mixture(m), **report.to_dict()}
    return CommandOutcome(EXIT_OK if report.passed else EXIT_DOMAIN, payload)


def cmd_eval(cfg: ExperimentConfig, oracle: bool = False, logger: Optional[logging.Logger] = None) -> CommandOutcome:
    """Parisi functional at the configured path and field, optionally against the cascade oracle."""
    log = _logger(logger)
    m = build_model(cfg)
    p1 = build_spin_measure(cfg, m.dim)
    if cfg.path is None:
        raise ConfigError("'path' is required for eval")
    path = StepPath.from_dict(cfg.path)
    x = build_field(cfg.x, m.dim)
    q = build_quadrature(cfg)

    result = parisi_functional(m, p1, path, x, q)
    log.info(f"Parisi functional: {result.value:.8f} +/- {result.std_error:.2e} ({q.mode})")
    payload = {"quadrature": q.to_dict(), **result.to_dict(diagnostics=True)}

    if oracle or cfg.section("eval").get("oracle"):
        settings = cfg.section("eval").get("oracle") or {}
        if not isinstance(settings, dict):
            settings = {}
        check = parisi_functional_cascade_oracle(
            m, p1, path, x,
            atoms=int(settings.get("atoms", 2000)),
            replicas=int(settings.get("replicas", 10_000)),
            seed=int(settings.get("seed", cfg.seed)),
            jobs=cfg.jobs,
        )
        combined = math.sqrt(result.std_error ** 2 + check.std_error ** 2)
        difference = abs(result.value - check.value)
        log.info(f"Cascade oracle: {check.value:.8f} +/- {check.std_error:.2e}; "
                 f"difference {difference:.2e} ({difference / combined if combined else float('inf'):.2f} sigma)")
        payload["oracle"] = check.to_dict(diagnostics=True)
        payload["combined_std_error"] = combined
        payload["difference"] = difference
    return CommandOutcome(EXIT_OK, payload)


def _variational(result: VariationalResult, trace: bool, log: logging.Logger, label: str) -> CommandOutcome:
    log.info(f"{label}: value={result.value:.6f} converged={result.converged} evals={result.n_evals}")
    code = EXIT_OK if result.converged else EXIT_NOT_CONVERGED
    return CommandOutcome(code, {"objective": label, **result.to_dict(trace=trace)})


def cmd_solve(cfg: ExperimentConfig, trace: bool = False, logger: Optional[logging.Logger] = None) -> CommandOutcome:
    """
    Dispatch to the variational solvers.

    Non-convergence and failed comparison reports return exit code 3 with the
    best values found.
    """
    log = _logger(logger)
    section = cfg.section("solve")
    objective = section.get("objective")
    if objective is None:
        raise ConfigError("'solve.objective' is required")
    m = build_model(cfg)
    p1 = build_spin_measure(cfg, m.dim)
    x = build_field(cfg.x, m.dim)
    spec = build_optimizer(cfg)
    log.info(f"Solving '{objective}' with {spec.levels} levels, {spec.restarts} restarts, seed {spec.seed}")

    if objective == "parisi":
        return _variational(parisi_value(m, p1, x, spec), trace, log, objective)
    if objective == "parisi-constrained":
        if "z" not in section:
            raise ConfigError("'solve.z' is required for parisi-constrained")
        z = build_field(section["z"], m.dim)
        return _variational(parisi_value_constrained(m, p1, x, z, spec), trace, log, objective)
    if objective == "pan":
        return _variational(free_energy_pan(m, p1, spec), trace, log, objective)
    if objective == "hj":
        return _variational(free_energy_hj(m, p1, spec), trace, log, objective)
    if objective == "xistar":
        return _variational(free_energy_xistar(m, p1, spec), trace, log, objective)
    if objective == "hopf":
        t = float(section.get("t", 0.5))
        cone = section.get("cone", "sym")
        result = hopf_value(m, p1, t, x, spec, cone=cone)
        outcome = _variational(result, trace, log, objective)
        outcome.payload.update({"t": t, "cone": cone})
        return outcome
    if objective == "grad":
        grad = grad_parisi(m, p1, x, spec, fd_check=bool(section.get("fd_check", True)))
        log.info(f"grad P(x) = {grad.gradient.tolist()}")
        return CommandOutcome(EXIT_NOT_CONVERGED if grad.flagged else EXIT_OK, {"objective": objective, **grad.to_dict()})
    if objective == "equivalence":
        report = check_equivalence(m, p1, spec, n_z=int(section.get("n_z", 2)))
        return CommandOutcome(EXIT_OK if report.passed else EXIT_NOT_CONVERGED,
                              {"objective": objective, **report.to_dict()}, report.table)
    if objective == "levels":
        table = value_vs_levels(m, p1, x, section.get("levels", [1, 2, 3]), spec)
        code = EXIT_OK if bool(table["converged"].all()) else EXIT_NOT_CONVERGED
        return CommandOutcome(code, {"objective": objective, "table": table.to_dict(orient="records")}, table)
    if objective == "potts-corollary":
        result = potts_corollary(m, p1, spec)
        return CommandOutcome(EXIT_OK if result.passed else EXIT_NOT_CONVERGED,
                              {"objective": objective, **result.to_dict()})
    raise ConfigError(f"Unknown objective '{objective}'")


def _simulation_row(m, p1, spec: GibbsSpec, observables: List[str], n_disorder: int, log) -> dict:
    row = {"N": spec.n_sites, "correction": "on" if spec.correction else "off", "mode": spec.mode}
    if "free-energy" in observables:
        fe = free_energy_finite(m, p1, spec, n_disorder)
        row["free_energy"] = fe.value
        row["free_energy_std_error"] = fe.std_error
    if "self-overlap" in observables or "concentration" in observables:
        stats = self_overlap_stats(m, p1, spec, n_disorder)
        if "self-overlap" in observables:
            for k in range(m.dim):
                for l in range(k, m.dim):
                    row[f"mean_{k}{l}"] = float(stats.mean.entries[k, l])
                    row[f"mean_{k}{l}_std_error"] = float(stats.mean_std_error[k, l])
        if "concentration" in observables:
            row["concentration"] = stats.concentration
            row["concentration_std_error"] = stats.concentration_std_error
    if "gradient" in observables:
        grad = gradient_consistency(m, p1, spec, n_disorder=n_disorder)
        row["gradient_max_difference"] = float(grad["difference"].max())
        row["gradient_passed"] = bool(grad["passed"].all())
    if "covariance" in observables:
        cov = covariance_selftest(m, p1, spec.n_sites, seed=spec.seed)
        row["covariance_passed"] = cov.passed
    if "potts-structure" in observables:
        row["potts_structure_passed"] = potts_structure_check(p1, spec.n_sites, spec.max_configs).passed
    log.info(f"N={spec.n_sites}: " + ", ".join(f"{k}={v:.5g}" for k, v in row.items() if isinstance(v, float)))
    return row


def cmd_simulate(cfg: ExperimentConfig, logger: Optional[logging.Logger] = None) -> CommandOutcome:
    """Finite-N observables, one table row per N in the sweep."""
    log = _logger(logger)
    m = build_model(cfg)
    p1 = build_spin_measure(cfg, m.dim)
    spec = build_gibbs(cfg, m.dim)
    section = cfg.section("simulate")
    observables = list(section.get("observables", DEFAULT_OBSERVABLES))
    n_list = [int(n) for n in section.get("N_list", [spec.n_sites])]
    n_disorder = int(section.get("n_disorder", 200))
    log.info(f"Simulating N in {n_list}, {n_disorder} disorder draws, mode={spec.mode}, "
             f"correction={'on' if spec.correction else 'off'}, seed={spec.seed}")

    rows = [_simulation_row(m, p1, spec.with_sites(n), observables, n_disorder, log) for n in n_list]
    table = pd.DataFrame(rows)
    payload = {"simulation": spec.to_dict(), "observables": observables, "n_disorder": n_disorder,
               "table": table.to_dict(orient="records")}
    return CommandOutcome(EXIT_OK, payload, table)
