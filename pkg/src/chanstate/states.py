"""Labeled multipartite states: construction, marginals, spectra, entropies, distances."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "ATOL",
    "CLIP",
    "DimensionCapExceeded",
    "InvalidStateError",
    "LabeledState",
    "Spectrum",
    "basis_state",
    "copy_label",
    "dim_cap",
    "maximally_entangled",
    "maximally_mixed",
    "merge_systems",
    "partial_trace",
    "permute_systems",
    "purify",
    "random_density",
    "random_pure",
    "relabel",
    "spectrum",
    "tensor",
    "trace_distance",
    "trivial_state",
    "von_neumann_entropy",
]

ATOL = 1e-9
CLIP = 1e-12
DEFAULT_DIM_CAP = 4096


class InvalidStateError(ValueError):
    """Raised when data does not describe a valid quantum state."""


class DimensionCapExceeded(ValueError):
    """Raised when a construction would exceed the dense dimension cap."""


def dim_cap() -> int:
    """Maximum total Hilbert dimension; ``CSC_DIM_CAP`` overrides the default 4096."""
    raw = os.environ.get("CSC_DIM_CAP")
    if raw is None:
        return DEFAULT_DIM_CAP
    try:
        cap = int(raw)
    except ValueError:
        raise ValueError(f"CSC_DIM_CAP must be an integer, got {raw!r}") from None
    if cap < 1:
        raise ValueError(f"CSC_DIM_CAP must be positive, got {cap}")
    return cap


def check_cap(dim: int, what: str = "state") -> None:
    cap = dim_cap()
    if dim > cap:
        raise DimensionCapExceeded(f"{what} needs dimension {dim}, cap is {cap}")


def copy_label(label: str, index: int) -> str:
    """Label of the ``index``-th copy of ``label`` in an n-fold extension."""
    return f"{label}#{index}"


@dataclass(frozen=True, eq=False)
class LabeledState:
    """A density operator or pure state vector over ordered, labeled subsystems.

    ``data`` is a 1-D vector for pure states and a square matrix otherwise.
    Instances are immutable; the stored array is read-only.
    """

    data: np.ndarray
    systems: tuple[tuple[str, int], ...]

    def __init__(self, data, systems: Iterable[tuple[str, int]], check: bool = True):
        arr = np.array(data, dtype=complex)
        systems = tuple((str(label), int(d)) for label, d in systems)
        labels = [label for label, _ in systems]
        if len(set(labels)) != len(labels):
            dup = next(lab for lab in labels if labels.count(lab) > 1)
            raise InvalidStateError(f"duplicate subsystem label {dup!r}")
        if any(d < 1 for _, d in systems):
            raise InvalidStateError(f"subsystem dimensions must be positive: {systems}")
        dim = math.prod(d for _, d in systems)
        if arr.ndim == 1:
            if arr.shape[0] != dim:
                raise InvalidStateError(f"vector length {arr.shape[0]} != product of dims {dim}")
        elif arr.ndim == 2:
            if arr.shape != (dim, dim):
                raise InvalidStateError(f"matrix shape {arr.shape} != ({dim}, {dim})")
        else:
            raise InvalidStateError("state data must be a vector or a square matrix")
        check_cap(dim)
        if check:
            _validate(arr)
        if arr.ndim == 2:
            arr = 0.5 * (arr + arr.conj().T)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "systems", systems)

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.systems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.systems)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def dim_of(self, label: str) -> int:
        for lab, d in self.systems:
            if lab == label:
                return d
        raise KeyError(f"unknown subsystem label {label!r}; have {list(self.labels)}")

    def density(self) -> np.ndarray:
        """Density matrix (computed for pure states)."""
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data

    def as_density(self) -> "LabeledState":
        if not self.is_pure:
            return self
        return LabeledState(self.density(), self.systems, check=False)

    def __repr__(self) -> str:
        kind = "pure" if self.is_pure else "mixed"
        sys_ = ", ".join(f"{lab}:{d}" for lab, d in self.systems)
        return f"LabeledState({kind}; {sys_})"


def _validate(arr: np.ndarray) -> None:
    if arr.ndim == 1:
        norm = np.linalg.norm(arr)
        if abs(norm - 1.0) > ATOL:
            raise InvalidStateError(f"pure state norm {norm:.3e} is not 1")
        return
    anti = np.max(np.abs(arr - arr.conj().T)) / 2 if arr.size else 0.0
    if anti > ATOL:
        raise InvalidStateError(f"matrix is not Hermitian (anti-Hermitian part {anti:.3e})")
    tr = np.trace(arr).real
    if abs(tr - 1.0) > ATOL:
        raise InvalidStateError(f"trace {tr:.12f} is not 1")
    herm = 0.5 * (arr + arr.conj().T)
    lam_min = np.linalg.eigvalsh(herm)[0]
    if lam_min < -ATOL:
        raise InvalidStateError(f"matrix is not positive semidefinite (min eigenvalue {lam_min:.3e})")


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------


def basis_state(indices: Sequence[int], systems: Sequence[tuple[str, int]]) -> LabeledState:
    """Computational basis ket |i1 i2 ...> on the given systems."""
    dims = [d for _, d in systems]
    if len(indices) != len(dims):
        raise ValueError("need one index per subsystem")
    vec = np.zeros(math.prod(dims), dtype=complex)
    vec[np.ravel_multi_index(tuple(indices), dims)] = 1.0
    return LabeledState(vec, systems)


def maximally_entangled(d: int, labels: tuple[str, str] = ("A", "B")) -> LabeledState:
    """(1/sqrt d) sum_i |i>|i>."""
    vec = np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)
    return LabeledState(vec, [(labels[0], d), (labels[1], d)])


def maximally_mixed(systems: Sequence[tuple[str, int]]) -> LabeledState:
    dim = math.prod(d for _, d in systems)
    return LabeledState(np.eye(dim) / dim, systems)


def trivial_state(labels: Sequence[str] = ("A2", "B2")) -> LabeledState:
    """Pure state on one-dimensional systems (no shared resource)."""
    return LabeledState(np.ones(1), [(lab, 1) for lab in labels])


def random_pure(systems: Sequence[tuple[str, int]], rng: np.random.Generator) -> LabeledState:
    dim = math.prod(d for _, d in systems)
    vec = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return LabeledState(vec / np.linalg.norm(vec), systems)


def random_density(
    systems: Sequence[tuple[str, int]], rng: np.random.Generator, rank: int | None = None
) -> LabeledState:
    """Random density operator G G^dag / tr with G a complex Ginibre matrix of ``rank`` columns."""
    dim = math.prod(d for _, d in systems)
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return LabeledState(rho / np.trace(rho).real, systems)


# ---------------------------------------------------------------------------
# Structural operations
# ---------------------------------------------------------------------------


def tensor(a: LabeledState, b: LabeledState) -> LabeledState:
    """Tensor product; systems of ``a`` followed by those of ``b``."""
    clash = set(a.labels) & set(b.labels)
    if clash:
        raise InvalidStateError(f"duplicate subsystem label {sorted(clash)[0]!r}")
    if a.is_pure and b.is_pure:
        data = np.kron(a.data, b.data)
    else:
        data = np.kron(a.density(), b.density())
    return LabeledState(data, a.systems + b.systems, check=False)


def _positions(s: LabeledState, labels: Iterable[str]) -> list[int]:
    index = {lab: i for i, lab in enumerate(s.labels)}
    out = []
    for lab in labels:
        if lab not in index:
            raise KeyError(f"unknown subsystem label {lab!r}; have {list(s.labels)}")
        out.append(index[lab])
    return out


def permute_systems(s: LabeledState, new_order: Sequence[str]) -> LabeledState:
    new_order = list(new_order)
    if sorted(new_order) != sorted(s.labels) or len(new_order) != len(s.labels):
        raise ValueError(f"{new_order} is not a permutation of {list(s.labels)}")
    perm = _positions(s, new_order)
    dims = s.dims
    systems = tuple(s.systems[p] for p in perm)
    if s.is_pure:
        data = s.data.reshape(dims).transpose(perm).reshape(-1)
    else:
        n = len(dims)
        t = s.data.reshape(dims + dims).transpose(perm + [p + n for p in perm])
        data = t.reshape(s.dim, s.dim)
    return LabeledState(data, systems, check=False)


def partial_trace(s: LabeledState, keep: Iterable[str]) -> LabeledState:
    """Reduced density operator on ``keep``, in the original label order."""
    keep = set(keep)
    _positions(s, keep)
    kept = [i for i, lab in enumerate(s.labels) if lab in keep]
    gone = [i for i, lab in enumerate(s.labels) if lab not in keep]
    dims = s.dims
    dk = math.prod(dims[i] for i in kept)
    dg = math.prod(dims[i] for i in gone)
    systems = tuple(s.systems[i] for i in kept)
    if s.is_pure:
        m = s.data.reshape(dims).transpose(kept + gone).reshape(dk, dg)
        data = m @ m.conj().T
    else:
        n = len(dims)
        t = s.data.reshape(dims + dims).transpose(kept + gone + [i + n for i in kept + gone])
        data = np.einsum("ijkj->ik", t.reshape(dk, dg, dk, dg))
    return LabeledState(data, systems, check=False)


def relabel(s: LabeledState, mapping: Mapping[str, str]) -> LabeledState:
    systems = [(mapping.get(lab, lab), d) for lab, d in s.systems]
    return LabeledState(s.data, systems, check=False)


def merge_systems(s: LabeledState, groups: Mapping[str, Sequence[str]]) -> LabeledState:
    """Fuse each group of labels into one system named by its key.

    Merged systems appear in the order of ``groups``; the rest follow in
    their original order. Within a group, labels keep the given order.
    """
    grouped = [lab for members in groups.values() for lab in members]
    if len(set(grouped)) != len(grouped):
        raise ValueError("a label appears in more than one group")
    rest = [lab for lab in s.labels if lab not in set(grouped)]
    t = permute_systems(s, grouped + rest)
    systems = [(name, math.prod(t.dim_of(lab) for lab in members)) for name, members in groups.items()]
    systems += [(lab, t.dim_of(lab)) for lab in rest]
    return LabeledState(t.data, systems, check=False)


# ---------------------------------------------------------------------------
# Spectra and functionals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: tuple[float, ...]
    clipped: int


def clip_eigenvalues(lam: np.ndarray) -> tuple[np.ndarray, int]:
    """Zero out eigenvalues in [-ATOL, CLIP]; anything more negative is an error."""
    lam = np.asarray(lam, dtype=float)
    if lam.size and lam.min() < -ATOL:
        raise InvalidStateError(f"negative eigenvalue {lam.min():.3e} beyond tolerance")
    small = lam <= CLIP
    lam = np.where(small, 0.0, lam)
    return lam, int(np.count_nonzero(small))


def hermitian_eigvals(m: np.ndarray) -> np.ndarray:
    """Eigenvalues of a numerically Hermitian matrix, after symmetrization."""
    if m.size:
        anti = np.max(np.abs(m - m.conj().T)) / 2
        if anti > ATOL:
            raise InvalidStateError(f"matrix is not Hermitian (anti-Hermitian part {anti:.3e})")
    return np.linalg.eigvalsh(0.5 * (m + m.conj().T))


def spectrum(s: LabeledState) -> Spectrum:
    if s.is_pure:
        lam = np.zeros(s.dim)
        lam[0] = np.vdot(s.data, s.data).real
    else:
        lam = hermitian_eigvals(s.data)
    lam, clipped = clip_eigenvalues(lam)
    return Spectrum(tuple(sorted(lam.tolist(), reverse=True)), clipped)


def entropy_of_probs(p: np.ndarray) -> float:
    """Shannon entropy in bits of already-clipped nonnegative weights."""
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p))) + 0.0


def von_neumann_entropy(s: LabeledState) -> float:
    """H(s) in bits."""
    if s.is_pure:
        return 0.0
    lam, _ = clip_eigenvalues(hermitian_eigvals(s.data))
    return entropy_of_probs(lam)


def trace_distance(a: LabeledState, b: LabeledState) -> float:
    """(1/2) ||a - b||_1 for states on identical systems."""
    if a.systems != b.systems:
        raise ValueError(f"system mismatch: {a.systems} vs {b.systems}")
    lam = np.linalg.eigvalsh(a.density() - b.density())
    return float(min(1.0, max(0.0, 0.5 * np.sum(np.abs(lam)))))


def purify(s: LabeledState, env_label: str) -> LabeledState:
    """Pure state sum_i sqrt(l_i) |v_i>|i>_env with env dimension equal to rank(s)."""
    if env_label in s.labels:
        raise InvalidStateError(f"duplicate subsystem label {env_label!r}")
    if s.is_pure:
        return LabeledState(s.data, s.systems + ((env_label, 1),), check=False)
    lam, vecs = np.linalg.eigh(s.data)
    lam, _ = clip_eigenvalues(lam)
    support = np.nonzero(lam > 0)[0][::-1]
    vec = (vecs[:, support] * np.sqrt(lam[support])).reshape(-1)
    vec = vec / np.linalg.norm(vec)
    return LabeledState(vec, s.systems + ((env_label, len(support)),), check=False)
