"""
Multi-start derivative-free minimizer shared by the variational solvers.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.optimize import minimize

from .logger import get_logger
from .parallel import indexed_map

Sampler = Callable[[np.random.Generator], np.ndarray]


def _nan_as_inf(fn: Callable[[np.ndarray], float]) -> Callable[[np.ndarray], float]:
    def wrapped(x):
        v = float(fn(x))
        return np.inf if np.isnan(v) else v

    return wrapped


@dataclass
class MinimizeOutcome:
    x: np.ndarray
    value: float
    converged: bool
    n_evals: int
    trace: List[dict] = field(default_factory=list)


class MultiStartMinimizer:
    """Nelder-Mead simplex search restarted from several points, with a Powell polish
    when the best restart runs out of budget."""

    def __init__(
        self,
        logger: Optional[logging.Logger] = None,
        restarts: int = 8,
        max_evals: int = 4000,
        tol_value: float = 1e-3,
        seed: int = 0,
        jobs: int = 1,
        label: str = "objective",
    ):
        """
        Initialize the minimizer.

        Args:
            logger: Logger instance (defaults to the optimizer child logger)
            restarts: Number of starting points, the first one being the warm start
            max_evals: Function-evaluation budget per restart
            tol_value: Target accuracy of the optimal value
            seed: Base seed; restart i draws its start from default_rng([seed, i])
            jobs: Worker threads for the restarts
            label: Name used in log messages
        """
        self.logger = logger or get_logger("optimizer")
        self.restarts = max(1, int(restarts))
        self.max_evals = int(max_evals)
        self.tol_value = float(tol_value)
        self.seed = int(seed)
        self.jobs = int(jobs)
        self.label = label

    def _run_once(self, fn: Callable[[np.ndarray], float], x0: np.ndarray) -> MinimizeOutcome:
        res = minimize(
            _nan_as_inf(fn),
            x0,
            method="Nelder-Mead",
            options={
                "maxfev": self.max_evals,
                "xatol": 1e-4,
                "fatol": 0.01 * self.tol_value,
                "adaptive": True,
            },
        )
        return MinimizeOutcome(np.asarray(res.x), float(res.fun), bool(res.success), int(res.nfev))

    def _polish(self, fn: Callable[[np.ndarray], float], x0: np.ndarray) -> MinimizeOutcome:
        res = minimize(
            _nan_as_inf(fn),
            x0,
            method="Powell",
            options={"maxfev": self.max_evals, "xtol": 1e-4, "ftol": 0.01 * self.tol_value},
        )
        return MinimizeOutcome(np.asarray(res.x), float(res.fun), bool(res.success), int(res.nfev))

    def minimize(
        self,
        fn: Callable[[np.ndarray], float],
        sampler: Sampler,
        x0: Optional[np.ndarray] = None,
    ) -> MinimizeOutcome:
        """
        Minimize ``fn`` from ``restarts`` starting points.

        Args:
            fn: Objective on a flat parameter vector; NaN is treated as +inf
            sampler: Draws a starting point from a generator
            x0: Warm start used by the first restart instead of a sampled point

        Returns:
            Best outcome over all restarts with a per-restart trace
        """
        first = np.asarray(x0 if x0 is not None else sampler(np.random.default_rng([self.seed, 0])), dtype=float)
        if first.size == 0:
            value = float(fn(first))
            return MinimizeOutcome(first, value, True, 1, [{"restart": 0, "value": value, "n_evals": 1, "converged": True}])

        def attempt(i: int) -> MinimizeOutcome:
            start = first if i == 0 else np.asarray(sampler(np.random.default_rng([self.seed, i])), dtype=float)
            outcome = self._run_once(fn, start)
            self.logger.debug(
                f"{self.label}: restart {i + 1}/{self.restarts} value={outcome.value:.6g} "
                f"evals={outcome.n_evals} converged={outcome.converged}"
            )
            return outcome

        outcomes = indexed_map(attempt, self.restarts, self.jobs)
        trace = [
            {"restart": i, "value": o.value, "n_evals": o.n_evals, "converged": o.converged}
            for i, o in enumerate(outcomes)
        ]
        best = min(range(len(outcomes)), key=lambda i: (outcomes[i].value, i))
        result = outcomes[best]
        total = sum(o.n_evals for o in outcomes)

        if not result.converged:
            self.logger.info(f"{self.label}: simplex budget exhausted, polishing best point with Powell")
            polished = self._polish(fn, result.x)
            total += polished.n_evals
            trace.append({"restart": len(outcomes), "value": polished.value, "n_evals": polished.n_evals,
                          "converged": polished.converged, "method": "Powell"})
            if polished.value <= result.value:
                result = polished
            if not result.converged:
                self.logger.warning(
                    f"{self.label}: no convergence within the evaluation budget ({self.max_evals}); keeping best-so-far"
                )
        self.logger.debug(f"{self.label}: best value {result.value:.6g} from restart {best + 1}")
        return MinimizeOutcome(result.x, result.value, result.converged, total, trace)
