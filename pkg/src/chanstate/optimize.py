"""Seeded multi-restart local maximization."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

log = logging.getLogger(__name__)

__all__ = ["OptimizerConfig", "RestartResult", "maximize", "restart_rng"]


@dataclass(frozen=True)
class OptimizerConfig:
    seed: int = 0
    restarts: int = 32
    max_evals: int = 20_000
    tol: float = 1e-7
    jobs: int = 1

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_evals < 1:
            raise ValueError("max_evals must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        known = {"seed", "restarts", "max_evals", "tol", "jobs"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown optimizer keys {sorted(unknown)}")
        return cls(**d)


def restart_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for one restart."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


@dataclass
class RestartResult:
    index: int
    x: np.ndarray
    value: float
    evaluations: int
    converged: bool


def _local_max(f: Callable[[np.ndarray], float], x0: np.ndarray, cfg: OptimizerConfig, index: int) -> RestartResult:
    x0 = np.asarray(x0, dtype=float)
    f0 = f(x0)
    if x0.size == 0:
        return RestartResult(index, x0, f0, 1, True)
    res = minimize(
        lambda x: -f(x),
        x0,
        method="Powell",
        options={"maxfev": cfg.max_evals, "ftol": cfg.tol, "xtol": 1e-6},
    )
    x, value = np.asarray(res.x, dtype=float), -float(res.fun)
    # Powell may report a point it did not improve on; never return worse than the start
    if value < f0:
        x, value = x0, f0
    # re-evaluate so the stored value is exactly f(x)
    value = f(x)
    return RestartResult(index, x, value, int(res.nfev) + 2, bool(res.success))


def maximize(
    f: Callable[[np.ndarray], float],
    starts: Sequence[np.ndarray],
    cfg: OptimizerConfig,
) -> list[RestartResult]:
    """Run a local maximization from each start; results are in start order."""
    if cfg.jobs > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(lambda a: _local_max(f, a[1], cfg, a[0]), enumerate(starts)))
    else:
        results = [_local_max(f, x0, cfg, i) for i, x0 in enumerate(starts)]
    for r in results:
        log.debug("restart %d: value=%.9f evals=%d converged=%s", r.index, r.value, r.evaluations, r.converged)
    return results


def best(results: Sequence[RestartResult]) -> RestartResult:
    """Highest value; ties go to the lowest restart index."""
    top = results[0]
    for r in results[1:]:
        if r.value > top.value:
            top = r
    return top
