"""Joint-versus-separate search over (channel, shared state) pairs.

Positive gaps found here are exploratory: the harness reports what the
optimizer achieves and certifies non-distillability only through PPT.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .capacity import _cut_entropy, _Problem, joint_and_separate
from .channels import KrausChannel, erasure_channel
from .measures import PartitionSpec
from .optimize import OptimizerConfig, maximize
from .states import ATOL, LabeledState, trivial_state

log = logging.getLogger(__name__)

__all__ = [
    "ActivationReport",
    "activation_search",
    "bell_diagonal",
    "candidate_state_library",
    "erasure_zero_capacity_check",
    "horodecki_3x3",
    "isotropic",
    "joint_vs_separate",
    "partial_transpose",
    "ppt_check",
]


def erasure_zero_capacity_check(d: int, samples: int, seed: int, p: float = 0.5) -> float:
    """Largest I(A1>B1) found for erasure(p, d) over random pure inputs plus a local polish."""
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d}")
    problem = _Problem(erasure_channel(p, d), trivial_state())
    ident = np.eye(d)
    rng = np.random.default_rng(seed)

    def f(x):
        half = x.size // 2
        vec = x[:half] + 1j * x[half:]
        vec = vec / np.linalg.norm(vec)
        w = problem.omega(vec.reshape(d, d), ident)
        return _cut_entropy(w, (2,)) - _cut_entropy(w, (4,))

    points = [rng.standard_normal(2 * d * d) for _ in range(samples)]
    values = [f(x) for x in points]
    top = int(np.argmax(values))
    polished = maximize(f, [points[top]], OptimizerConfig(seed=seed, restarts=1, max_evals=2000))
    return max(max(values), polished[0].value)


# ---------------------------------------------------------------------------
# PPT certification
# ---------------------------------------------------------------------------


def partial_transpose(rho: LabeledState, labels) -> np.ndarray:
    """Matrix of rho with the systems in ``labels`` transposed."""
    labels = set(labels)
    dims = list(rho.dims)
    n = len(dims)
    t = np.asarray(rho.density()).reshape(dims + dims)
    perm = list(range(2 * n))
    for i, lab in enumerate(rho.labels):
        if lab in labels:
            perm[i], perm[n + i] = n + i, i
    return t.transpose(perm).reshape(rho.dim, rho.dim)


def ppt_check(rho: LabeledState, part: PartitionSpec) -> tuple[bool, float]:
    """(is_ppt, minimum eigenvalue of the partial transpose on group_b)."""
    covered = part.group_a | part.group_b
    if covered != set(rho.labels):
        raise ValueError(f"partition {sorted(covered)} does not cover {list(rho.labels)}")
    pt = partial_transpose(rho, part.group_b)
    min_eig = float(np.linalg.eigvalsh(0.5 * (pt + pt.conj().T))[0])
    return min_eig >= -ATOL, min_eig


# ---------------------------------------------------------------------------
# Candidate states
# ---------------------------------------------------------------------------


def _bell_basis() -> list[np.ndarray]:
    s = 1 / np.sqrt(2)
    return [
        np.array([s, 0, 0, s]),
        np.array([s, 0, 0, -s]),
        np.array([0, s, s, 0]),
        np.array([0, s, -s, 0]),
    ]


def bell_diagonal(weights: Sequence[float], labels=("A2", "B2")) -> LabeledState:
    w = np.asarray(weights, dtype=float)
    if w.shape != (4,) or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
        raise ValueError(f"Bell-diagonal weights must be 4 probabilities, got {weights}")
    rho = sum(p * np.outer(v, v) for p, v in zip(w, _bell_basis()))
    return LabeledState(rho, [(labels[0], 2), (labels[1], 2)])


def isotropic(fidelity: float, d: int = 2, labels=("A2", "B2")) -> LabeledState:
    """F Phi + (1 - F)(I - Phi)/(d^2 - 1)."""
    if not 0 <= fidelity <= 1:
        raise ValueError(f"fidelity must lie in [0, 1], got {fidelity}")
    phi = np.eye(d).reshape(-1) / np.sqrt(d)
    proj = np.outer(phi, phi)
    rho = fidelity * proj + (1 - fidelity) * (np.eye(d * d) - proj) / (d * d - 1)
    return LabeledState(rho, [(labels[0], d), (labels[1], d)])


def horodecki_3x3(a: float, labels=("A2", "B2")) -> LabeledState:
    """Horodecki's 3 x 3 bound entangled family: PPT for a in [0, 1], entangled for 0 < a < 1."""
    if not 0 <= a <= 1:
        raise ValueError(f"a must lie in [0, 1], got {a}")
    m = np.zeros((9, 9))
    for i in (0, 4, 8):
        for j in (0, 4, 8):
            m[i, j] = a
    for i in (1, 2, 3, 5, 7):
        m[i, i] = a
    b = (1 + a) / 2
    c = np.sqrt(1 - a * a) / 2
    m[6, 6] = b
    m[8, 8] = b
    m[6, 8] = m[8, 6] = c
    return LabeledState(m / (8 * a + 1), [(labels[0], 3), (labels[1], 3)])


def candidate_state_library() -> list[tuple[str, LabeledState, dict]]:
    """(state_id, state, params) for each candidate; params include the PPT verdict."""
    entries: list[tuple[str, LabeledState, dict]] = []
    for w in ((1, 0, 0, 0), (0.5, 0.5, 0, 0), (0.7, 0.1, 0.1, 0.1), (0.4, 0.2, 0.2, 0.2)):
        sid = "bell-diagonal:" + "/".join(f"{x:g}" for x in w)
        entries.append((sid, bell_diagonal(w), {"family": "bell-diagonal", "weights": list(w)}))
    for d, fids in ((2, (1.0, 0.75, 0.5, 0.25)), (3, (1 / 3, 0.6))):
        for f in fids:
            entries.append((f"isotropic:d={d},F={f:.4g}", isotropic(f, d), {"family": "isotropic", "d": d, "F": f}))
    for a in (0.2, 0.5, 0.8):
        entries.append((f"horodecki-3x3:a={a:g}", horodecki_3x3(a), {"family": "horodecki-3x3", "a": a}))
    out = []
    for sid, rho, params in entries:
        is_ppt, min_eig = ppt_check(rho, PartitionSpec([rho.labels[0]], [rho.labels[1]]))
        out.append((sid, rho, {**params, "ppt": is_ppt, "min_pt_eig": min_eig}))
    return out


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------


@dataclass
class ActivationReport:
    state_id: str
    channel_desc: str
    joint_rate: float
    separate_rate: float
    gap: float
    ppt_certified: bool
    seeds: list[int] = field(default_factory=list)
    error: str | None = None
    details: dict = field(default_factory=dict)


def joint_vs_separate(
    ch: KrausChannel,
    rho: LabeledState,
    cfg: OptimizerConfig | None = None,
    state_id: str = "state",
    channel_desc: str = "channel",
) -> ActivationReport:
    cfg = cfg or OptimizerConfig()
    est, separate = joint_and_separate(ch, rho, cfg)
    is_ppt, min_eig = ppt_check(rho, PartitionSpec([rho.labels[0]], [rho.labels[1]]))
    return ActivationReport(
        state_id=state_id,
        channel_desc=channel_desc,
        joint_rate=est.value,
        separate_rate=separate,
        gap=est.value - separate,
        ppt_certified=is_ppt,
        seeds=[cfg.seed],
        details={
            "min_pt_eig": min_eig,
            "restarts": est.restarts,
            "evaluations": est.evaluations,
            "converged": est.converged,
            "history": est.history,
            "phi_params": est.best_prep.phi_params.tolist(),
            "encoder_params": est.best_prep.encoder_params.tolist(),
        },
    )


def grid_seed(seed: int, i: int, j: int) -> int:
    """Per-grid-point seed, independent of grid evaluation order."""
    return int(np.random.SeedSequence([int(seed), i, j]).generate_state(1, dtype=np.uint64)[0])


def activation_search(
    channels: Sequence[tuple[str, KrausChannel]],
    states: Sequence[tuple[str, LabeledState]],
    cfg: OptimizerConfig | None = None,
) -> list[ActivationReport]:
    """joint_vs_separate over the full channels x states grid, sorted by gap (largest first).

    A failing grid point yields a report with ``error`` set and NaN rates.
    """
    cfg = cfg or OptimizerConfig()
    reports = []
    for i, (cdesc, ch) in enumerate(channels):
        for j, (sid, rho) in enumerate(states):
            point = OptimizerConfig(
                seed=grid_seed(cfg.seed, i, j),
                restarts=cfg.restarts,
                max_evals=cfg.max_evals,
                tol=cfg.tol,
                jobs=cfg.jobs,
            )
            try:
                reports.append(joint_vs_separate(ch, rho, point, sid, cdesc))
            except Exception as exc:  # a bad grid point must not abort the search
                log.warning("grid point (%s, %s) failed: %s", cdesc, sid, exc)
                reports.append(
                    ActivationReport(sid, cdesc, math.nan, math.nan, math.nan, False, [point.seed], error=str(exc))
                )
    return sorted(reports, key=lambda r: (math.isnan(r.gap), -r.gap if not math.isnan(r.gap) else 0.0, r.state_id, r.channel_desc))
