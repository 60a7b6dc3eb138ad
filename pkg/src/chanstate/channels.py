"""Quantum channels as Kraus sets and their isometric (Stinespring) extensions.

The output of an isometric extension is always ordered ``out (x) env``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .states import (
    ATOL,
    InvalidStateError,
    LabeledState,
    check_cap,
    clip_eigenvalues,
    permute_systems,
)

__all__ = [
    "IsometricExtension",
    "KrausChannel",
    "apply",
    "apply_isometry",
    "channel_from_spec",
    "choi_state",
    "complementary",
    "dephasing_channel",
    "depolarizing_channel",
    "erasure_channel",
    "identity_channel",
    "isometric_extension",
    "random_channel",
    "random_isometry",
    "state_as_channel",
    "tensor_power",
]


def _check_probability(p: float, name: str = "p") -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p


@dataclass(frozen=True, eq=False)
class KrausChannel:
    kraus: tuple[np.ndarray, ...]
    in_label: str = "A1'"
    out_label: str = "B1"
    env_label: str = "E1"

    def __post_init__(self):
        ops = tuple(np.array(k, dtype=complex) for k in self.kraus)
        if not ops:
            raise ValueError("a channel needs at least one Kraus operator")
        shape = ops[0].shape
        if len(shape) != 2 or any(k.shape != shape for k in ops):
            raise ValueError("Kraus operators must be matrices of one common shape")
        total = sum(k.conj().T @ k for k in ops)
        err = np.max(np.abs(total - np.eye(shape[1])))
        if err > ATOL:
            raise ValueError(f"Kraus operators are not trace preserving (deviation {err:.3e})")
        for k in ops:
            k.flags.writeable = False
        object.__setattr__(self, "kraus", ops)

    @property
    def din(self) -> int:
        return self.kraus[0].shape[1]

    @property
    def dout(self) -> int:
        return self.kraus[0].shape[0]

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ k.conj().T for k in self.kraus)


@dataclass(frozen=True, eq=False)
class IsometricExtension:
    V: np.ndarray
    din: int
    dout: int
    denv: int
    in_label: str = "A1'"
    out_label: str = "B1"
    env_label: str = "E1"

    def __post_init__(self):
        v = np.array(self.V, dtype=complex)
        if v.shape != (self.dout * self.denv, self.din):
            raise ValueError(f"isometry shape {v.shape} != ({self.dout * self.denv}, {self.din})")
        err = np.max(np.abs(v.conj().T @ v - np.eye(self.din))) if v.size else 0.0
        if err > ATOL:
            raise ValueError(f"V is not an isometry (deviation {err:.3e})")
        v.flags.writeable = False
        object.__setattr__(self, "V", v)

    def tensor(self) -> np.ndarray:
        """V reshaped to (dout, denv, din)."""
        return self.V.reshape(self.dout, self.denv, self.din)


def isometric_extension(ch: KrausChannel) -> IsometricExtension:
    """V = sum_k K_k (x) |k>_env."""
    stack = np.stack(ch.kraus, axis=1)  # (dout, k, din)
    return IsometricExtension(
        stack.reshape(ch.dout * len(ch.kraus), ch.din),
        din=ch.din,
        dout=ch.dout,
        denv=len(ch.kraus),
        in_label=ch.in_label,
        out_label=ch.out_label,
        env_label=ch.env_label,
    )


def complementary(ch: KrausChannel) -> KrausChannel:
    """Channel to the environment, obtained by tracing the output of the dilation."""
    t = isometric_extension(ch).tensor()  # (dout, denv, din)
    return KrausChannel(
        tuple(t[j] for j in range(ch.dout)),
        in_label=ch.in_label,
        out_label=ch.env_label,
        env_label=ch.out_label,
    )


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------


def identity_channel(d: int = 2) -> KrausChannel:
    return KrausChannel((np.eye(d),))


def erasure_channel(p: float, d: int = 2) -> KrausChannel:
    """Erasure with probability ``p``; the flag |e> is output basis index ``d``.

    The erasure Kraus operators come first so the dilation reads
    V|psi> = sqrt(1-p)|psi>_B|e>_E + sqrt(p)|e>_B|psi>_E.
    """
    p = _check_probability(p)
    ops = []
    for i in range(d):
        k = np.zeros((d + 1, d))
        k[d, i] = np.sqrt(p)
        ops.append(k)
    embed = np.zeros((d + 1, d))
    embed[:d, :d] = np.sqrt(1 - p) * np.eye(d)
    ops.append(embed)
    return KrausChannel(tuple(ops))


_PAULIS = (
    np.eye(2),
    np.array([[0, 1], [1, 0]]),
    np.array([[0, -1j], [1j, 0]]),
    np.array([[1, 0], [0, -1]]),
)


def depolarizing_channel(p: float) -> KrausChannel:
    """Qubit channel rho -> (1-p) rho + p I/2."""
    p = _check_probability(p)
    weights = (1 - 3 * p / 4, p / 4, p / 4, p / 4)
    return KrausChannel(tuple(np.sqrt(w) * s for w, s in zip(weights, _PAULIS)))


def dephasing_channel(p: float) -> KrausChannel:
    """Qubit channel rho -> (1-p) rho + p Z rho Z."""
    p = _check_probability(p)
    return KrausChannel((np.sqrt(1 - p) * _PAULIS[0], np.sqrt(p) * _PAULIS[3]))


def random_isometry(din: int, dout: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((dout, din)) + 1j * rng.standard_normal((dout, din))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_channel(din: int, dout: int, nkraus: int, rng: np.random.Generator) -> KrausChannel:
    if dout * nkraus < din:
        raise ValueError(f"dout * nkraus = {dout * nkraus} is smaller than din = {din}")
    v = random_isometry(din, dout * nkraus, rng).reshape(dout, nkraus, din)
    return KrausChannel(tuple(v[:, k, :] for k in range(nkraus)))


def tensor_power(ch: KrausChannel, n: int) -> KrausChannel:
    """n parallel uses, acting on one blocked register of dimension din**n."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n == 1:
        return ch
    check_cap(ch.dout**n, "channel output")
    check_cap(ch.din**n, "channel input")
    ops = []
    for combo in itertools.product(ch.kraus, repeat=n):
        k = combo[0]
        for nxt in combo[1:]:
            k = np.kron(k, nxt)
        ops.append(k)
    return KrausChannel(tuple(ops), ch.in_label, ch.out_label, ch.env_label)


def choi_state(ch: KrausChannel) -> np.ndarray:
    """(id (x) N)(Phi) with the reference system first."""
    d = ch.din
    phi = np.eye(d).reshape(-1) / np.sqrt(d)
    out = np.zeros((d * ch.dout, d * ch.dout), dtype=complex)
    for k in ch.kraus:
        v = np.kron(np.eye(d), k) @ phi
        out += np.outer(v, v.conj())
    return out


def channel_from_spec(spec: dict) -> KrausChannel:
    """Build a channel from its JSON description.

    ``{"kind": "erasure", "p": 0.5, "d": 2}``, ``{"kind": "kraus", "kraus": [...]}``
    where each Kraus matrix is a nested list of ``[re, im]`` pairs.
    """
    kind = spec.get("kind")
    if kind == "identity":
        return identity_channel(int(spec.get("d", 2)))
    if kind == "erasure":
        return erasure_channel(float(spec["p"]), int(spec.get("d", 2)))
    if kind == "depolarizing":
        return depolarizing_channel(float(spec["p"]))
    if kind == "dephasing":
        return dephasing_channel(float(spec["p"]))
    if kind == "kraus":
        ops = []
        for mat in spec["kraus"]:
            arr = np.array(mat, dtype=float)
            if arr.ndim != 3 or arr.shape[-1] != 2:
                raise ValueError("Kraus entries must be [re, im] pairs")
            ops.append(arr[..., 0] + 1j * arr[..., 1])
        return KrausChannel(tuple(ops))
    raise ValueError(f"unknown channel kind {kind!r}")


def channel_to_spec(ch: KrausChannel) -> str:
    mats = [[[[z.real, z.imag] for z in row] for row in k] for k in ch.kraus]
    return json.dumps({"kind": "kraus", "kraus": mats})


# ---------------------------------------------------------------------------
# Application to labeled states
# ---------------------------------------------------------------------------


def _target_pos(s: LabeledState, target: str, din: int) -> int:
    labels = s.labels
    if target not in labels:
        raise KeyError(f"unknown subsystem label {target!r}; have {list(labels)}")
    pos = labels.index(target)
    if s.dims[pos] != din:
        raise ValueError(f"system {target!r} has dim {s.dims[pos]}, channel expects {din}")
    return pos


def _fresh(s: LabeledState, target: str, *labels: str) -> None:
    for lab in labels:
        if lab != target and lab in s.labels:
            raise InvalidStateError(f"duplicate subsystem label {lab!r}")


def apply(ch: KrausChannel, s: LabeledState, target: str) -> LabeledState:
    """Apply ``ch`` to system ``target``; it is replaced in place by ``ch.out_label``."""
    pos = _target_pos(s, target, ch.din)
    _fresh(s, target, ch.out_label)
    dims = list(s.dims)
    rest = s.dim // ch.din
    order = [pos] + [i for i in range(len(dims)) if i != pos]
    moved = permute_systems(s.as_density(), [s.labels[i] for i in order])
    rho = moved.data.reshape(ch.din, rest, ch.din, rest)
    ks = np.stack(ch.kraus)
    out = np.einsum("kab,bxcy,kdc->axdy", ks, rho, ks.conj(), optimize=True)
    out = out.reshape(ch.dout * rest, ch.dout * rest)
    systems = [(ch.out_label, ch.dout)] + [s.systems[i] for i in order[1:]]
    result = LabeledState(out, systems, check=False)
    new_order = list(s.labels)
    new_order[pos] = ch.out_label
    return permute_systems(result, new_order)


def apply_isometry(V: IsometricExtension, s: LabeledState, target: str) -> LabeledState:
    """Apply the dilation; ``target`` is replaced by ``(out_label, env_label)``."""
    pos = _target_pos(s, target, V.din)
    _fresh(s, target, V.out_label, V.env_label)
    if V.out_label == V.env_label:
        raise InvalidStateError("output and environment labels coincide")
    dims = list(s.dims)
    new_systems = list(s.systems[:pos]) + [(V.out_label, V.dout), (V.env_label, V.denv)] + list(s.systems[pos + 1 :])
    check_cap(math.prod(d for _, d in new_systems))
    if s.is_pure:
        t = s.data.reshape(dims)
        t = np.moveaxis(np.tensordot(V.V, t, axes=([1], [pos])), 0, pos)
        return LabeledState(t.reshape(-1), new_systems, check=False)
    n = len(dims)
    t = s.data.reshape(dims + dims)
    t = np.moveaxis(np.tensordot(V.V, t, axes=([1], [pos])), 0, pos)
    t = np.moveaxis(np.tensordot(V.V.conj(), t, axes=([1], [n + pos])), 0, n + pos)
    dim = math.prod(d for _, d in new_systems)
    return LabeledState(t.reshape(dim, dim), new_systems, check=False)


def state_as_channel(psi: LabeledState, alice: str | None = None) -> tuple[LabeledState, IsometricExtension]:
    """Write a tripartite pure state as an isometry acting on half of a pure input.

    ``psi`` lives on (alice, out, env). Returns a pure input on
    ``(alice, alice + "'")`` whose primed half has dimension equal to the
    Schmidt rank of the alice : rest cut, and the isometry alice' -> out (x) env.
    """
    if not psi.is_pure:
        raise InvalidStateError("state_as_channel needs a pure state")
    if len(psi.systems) != 3:
        raise ValueError("state_as_channel expects exactly three systems (alice, out, env)")
    alice = psi.labels[0] if alice is None else alice
    others = [lab for lab in psi.labels if lab != alice]
    t = permute_systems(psi, [alice] + others)
    da = t.dims[0]
    m = t.data.reshape(da, -1)
    u, svals, vh = np.linalg.svd(m, full_matrices=False)
    lam, _ = clip_eigenvalues(svals**2)
    r = max(1, int(np.count_nonzero(lam)))
    prime = alice + "'"
    inp = (u[:, :r] * svals[:r]).reshape(-1)
    inp = inp / np.linalg.norm(inp)
    iso = IsometricExtension(
        vh[:r].T,
        din=r,
        dout=t.dims[1],
        denv=t.dims[2],
        in_label=prime,
        out_label=others[0],
        env_label=others[1],
    )
    return LabeledState(inp, [(alice, da), (prime, r)], check=False), iso
