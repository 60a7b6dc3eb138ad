"""Entropic functionals: coherent information, mutual information, continuity bound."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .states import (
    LabeledState,
    clip_eigenvalues,
    entropy_of_probs,
    partial_trace,
    von_neumann_entropy,
)

__all__ = [
    "PartitionSpec",
    "alicki_fannes_bound",
    "binary_entropy",
    "coherent_information",
    "conditional_entropy",
    "marginal_entropy",
    "mutual_information",
]


@dataclass(frozen=True)
class PartitionSpec:
    """Two disjoint label groups; labels in neither group are traced out."""

    group_a: frozenset[str]
    group_b: frozenset[str]

    def __init__(self, group_a: Iterable[str], group_b: Iterable[str]):
        a, b = frozenset(group_a), frozenset(group_b)
        overlap = a & b
        if overlap:
            raise ValueError(f"partition groups overlap on {sorted(overlap)}")
        object.__setattr__(self, "group_a", a)
        object.__setattr__(self, "group_b", b)

    def check(self, s: LabeledState) -> None:
        missing = (self.group_a | self.group_b) - set(s.labels)
        if missing:
            raise KeyError(f"labels {sorted(missing)} not in state {list(s.labels)}")


def marginal_entropy(s: LabeledState, labels: Iterable[str]) -> float:
    """H of the reduced state on ``labels``.

    For pure ``s`` the smaller side of the cut is diagonalized.
    """
    keep = set(labels)
    if not keep:
        return 0.0
    if not s.is_pure:
        return von_neumann_entropy(partial_trace(s, keep))
    kept = [i for i, lab in enumerate(s.labels) if lab in keep]
    if len(kept) != len(keep):
        missing = keep - set(s.labels)
        raise KeyError(f"unknown subsystem labels {sorted(missing)}")
    gone = [i for i in range(len(s.labels)) if i not in kept]
    dims = s.dims
    dk = int(np.prod([dims[i] for i in kept]))
    m = s.data.reshape(dims).transpose(kept + gone).reshape(dk, -1)
    if m.shape[0] > m.shape[1]:
        m = m.T
    lam, _ = clip_eigenvalues(np.linalg.eigvalsh(m @ m.conj().T))
    return entropy_of_probs(lam)


def coherent_information(s: LabeledState, part: PartitionSpec) -> float:
    """I(A>B) = H(B) - H(AB) in bits."""
    part.check(s)
    return marginal_entropy(s, part.group_b) - marginal_entropy(s, part.group_a | part.group_b)


def conditional_entropy(s: LabeledState, part: PartitionSpec) -> float:
    """H(A|B) = H(AB) - H(B)."""
    return -coherent_information(s, part)


def mutual_information(s: LabeledState, part: PartitionSpec) -> float:
    part.check(s)
    return (
        marginal_entropy(s, part.group_a)
        + marginal_entropy(s, part.group_b)
        - marginal_entropy(s, part.group_a | part.group_b)
    )


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    lam, _ = clip_eigenvalues(np.array([p, 1.0 - p]))
    return entropy_of_probs(lam)


def alicki_fannes_bound(epsilon: float, log_dim: float) -> float:
    """Continuity bound 4 eps log_dim + 2 h(eps) on conditional entropies."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    return 4.0 * epsilon * log_dim + 2.0 * binary_entropy(epsilon)
