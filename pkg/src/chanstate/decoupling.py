"""Small-n Monte Carlo of the random-subspace direct coding scheme.

Alice's systems of n copies of the transmitted state are rotated by a Haar
unitary and projected onto the span of the first |S| basis vectors. The
retained reference S should then be decoupled from Eve. Bob's systems are
never materialized: the reference-Eve marginal is purified by a register
that is unitarily equivalent to Bob's support, which is all a decoder sees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .capacity import Preparation, build_omega
from .channels import KrausChannel
from .measures import binary_entropy
from .states import (
    InvalidStateError,
    LabeledState,
    check_cap,
    clip_eigenvalues,
    entropy_of_probs,
    partial_trace,
    permute_systems,
)

__all__ = [
    "ProtocolTrial",
    "SWEEP_HEADER",
    "haar_unitary",
    "simulate_trial",
    "subspace_size",
    "threshold_sweep",
    "uhlmann_decoder",
    "uhlmann_isometry",
]

SWEEP_HEADER = ("n", "log_S_per_n", "mean_error", "stderr", "acceptance", "trials")


def haar_unitary(d: int, seed) -> np.ndarray:
    """Haar-distributed d x d unitary: QR of a complex Ginibre matrix with phases fixed."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


def subspace_size(log_s: float) -> int:
    """ceil(2**log_s), guarded against rounding just above an integer."""
    return max(1, math.ceil(2.0**log_s - 1e-9))


@dataclass(frozen=True)
class ProtocolTrial:
    n: int
    log_S: float
    seed: int
    decoupling_error: float
    acceptance: float
    failed: bool = False
    decoder_fidelity: float | None = None
    # decoded-state quantities used to realize the converse chain
    converse_epsilon: float | None = None
    decoded_coherent_info: float | None = None

    @property
    def log_D(self) -> float:
        return math.log2(subspace_size(self.log_S))


def _entropy_of(rho: np.ndarray) -> float:
    lam, _ = clip_eigenvalues(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)))
    return entropy_of_probs(lam)


def _trace_norm_half(x: np.ndarray) -> float:
    lam = np.linalg.eigvalsh(0.5 * (x + x.conj().T))
    return float(min(1.0, max(0.0, 0.5 * np.sum(np.abs(lam)))))


def _purifying_matrix(rho: np.ndarray) -> np.ndarray:
    """X with X X^dag = rho, columns spanning the support."""
    lam, vecs = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    lam, _ = clip_eigenvalues(lam)
    keep = np.nonzero(lam > 0)[0][::-1]
    if keep.size == 0:
        keep = np.array([len(lam) - 1])
    return vecs[:, keep] * np.sqrt(lam[keep])


def uhlmann_isometry(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Isometry W on the second index of ``x`` that best aligns it with ``y``.

    ``x`` and ``y`` are amplitude matrices of two purifications
    (rows: shared systems; columns: Bob's input and output spaces). Returns W
    and the overlap |<y|(1 x W)|x>|**2. Requires y.shape[1] >= x.shape[1].
    """
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"shared dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    db, dc = x.shape[1], y.shape[1]
    if dc < db:
        raise ValueError(f"target register ({dc}) is smaller than Bob's input ({db})")
    a = y.conj().T @ x  # (dc, db)
    u, s, vh = np.linalg.svd(a, full_matrices=True)
    w = (vh.conj().T @ u[:, :db].conj().T).T
    return w, float(min(1.0, np.sum(s) ** 2))


def _bob_split(global_pure: LabeledState, target: LabeledState) -> tuple[list[str], list[str], list[str]]:
    shared = [lab for lab in global_pure.labels if lab in target.labels]
    bob_in = [lab for lab in global_pure.labels if lab not in shared]
    bob_out = [lab for lab in target.labels if lab not in shared]
    return shared, bob_in, bob_out


def uhlmann_decoder(global_pure: LabeledState, target: LabeledState) -> float:
    """Best fidelity |<target|(1 x W)|global>|**2 over isometries W on Bob's systems.

    Bob's input is every system of ``global_pure`` absent from ``target``;
    his output is every system of ``target`` absent from ``global_pure``.
    """
    if not (global_pure.is_pure and target.is_pure):
        raise InvalidStateError("uhlmann_decoder needs pure states")
    shared, bob_in, bob_out = _bob_split(global_pure, target)
    for lab in shared:
        if global_pure.dim_of(lab) != target.dim_of(lab):
            raise ValueError(f"system {lab!r} has different dimensions in the two states")
    g = permute_systems(global_pure, shared + bob_in)
    t = permute_systems(target, shared + bob_out)
    ds = math.prod(g.dim_of(lab) for lab in shared)
    x = g.data.reshape(ds, -1)
    y = t.data.reshape(ds, -1)
    if y.shape[1] < x.shape[1]:
        # only Bob's support matters; compress his input to it
        x = _purifying_matrix(x @ x.conj().T)
        if y.shape[1] < x.shape[1]:
            raise ValueError("Bob's output register cannot hold the decoded state")
    _, fid = uhlmann_isometry(x, y)
    return fid


def _alice_eve_marginal(ch: KrausChannel, rho: LabeledState, prep: Preparation) -> tuple[np.ndarray, int, int]:
    omega = build_omega(ch, rho, prep)
    marg = partial_trace(omega, ["A1", "A2", "E1", "E2"])
    da = marg.dim_of("A1") * marg.dim_of("A2")
    de = marg.dim_of("E1") * marg.dim_of("E2")
    return np.asarray(marg.data), da, de


def _n_copies(rho_ae: np.ndarray, da: int, de: int, n: int) -> tuple[np.ndarray, int, int]:
    """rho_AE^{(x)n} reordered to (A^n, E^n)."""
    check_cap((da * de) ** n, "n-copy Alice-Eve marginal")
    out = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        out = np.kron(out, rho_ae)
    dims = [da, de] * n
    perm = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
    k = len(dims)
    t = out.reshape(dims + dims).transpose(perm + [p + k for p in perm])
    dim = (da * de) ** n
    return t.reshape(dim, dim), da**n, de**n


def _trial_on_marginal(
    rho_ae: np.ndarray, da: int, de: int, n: int, log_s: float, seed: int, decode: bool
) -> ProtocolTrial:
    size = subspace_size(log_s)
    if size > da:
        raise ValueError(f"|S| = {size} exceeds Alice's dimension {da}")
    u = haar_unitary(da, seed)
    # projected, rotated Alice-Eve block: (P U (x) 1) rho (P U (x) 1)^dag
    pu = np.kron(u[:size], np.eye(de))
    sub = pu @ rho_ae @ pu.conj().T
    acceptance = float(np.trace(sub).real)
    if acceptance <= 1e-14:
        return ProtocolTrial(n, log_s, seed, 1.0, 0.0, failed=True)
    sub = sub / acceptance
    t = sub.reshape(size, de, size, de)
    rho_e = np.einsum("sesf->ef", t)
    ideal = np.kron(np.eye(size) / size, rho_e)
    error = _trace_norm_half(sub - ideal)
    if not decode:
        return ProtocolTrial(n, log_s, seed, error, acceptance)

    # Bob's register: purification of the reference-Eve block
    x = _purifying_matrix(sub)  # rows (s, e)
    xi = _purifying_matrix(rho_e)  # rows e, columns J
    dj = xi.shape[1]
    # target |Phi>_{S B'} |xi>_{E J}, rows (s, e), columns (b', j)
    y = np.einsum("sb,ej->sebj", np.eye(size) / np.sqrt(size), xi).reshape(size * de, size * dj)
    w, fidelity = uhlmann_isometry(x, y)
    decoded = (x @ w.T).reshape(size, de, size, dj)  # (s, e, b', j)
    rho_sb = np.einsum("aebj,cedj->abcd", decoded, decoded.conj()).reshape(size * size, size * size)
    rho_b = np.einsum("abad->bd", rho_sb.reshape(size, size, size, size))
    phi = np.eye(size).reshape(-1) / np.sqrt(size)
    eps = _trace_norm_half(rho_sb - np.outer(phi, phi.conj()))
    coh = _entropy_of(rho_b) - _entropy_of(rho_sb)
    return ProtocolTrial(
        n,
        log_s,
        seed,
        error,
        acceptance,
        decoder_fidelity=min(1.0, max(0.0, fidelity)),
        converse_epsilon=eps,
        decoded_coherent_info=coh,
    )


def simulate_trial(
    ch: KrausChannel,
    rho: LabeledState,
    prep: Preparation,
    n: int,
    log_S: float,
    seed: int,
    decode: bool = False,
) -> ProtocolTrial:
    """One random-subspace coding trial on n copies of the transmitted state."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rho_ae, da, de = _alice_eve_marginal(ch, rho, prep)
    if not 0 <= log_S <= n * math.log2(da) + 1e-9:
        raise ValueError(f"log_S = {log_S} outside [0, {n * math.log2(da)}]")
    big, dan, den = _n_copies(rho_ae, da, de, n)
    return _trial_on_marginal(big, dan, den, n, log_S, seed, decode)


def _trial_seed(seed: int, n: int, t: int) -> int:
    return int(np.random.SeedSequence([int(seed), n, t]).generate_state(1, dtype=np.uint64)[0])


def threshold_sweep(
    ch: KrausChannel,
    rho: LabeledState,
    prep: Preparation,
    n_list: Sequence[int],
    log_S_grid: Sequence[float],
    trials: int,
    seed: int,
    decode: bool = False,
    keep_trials: list | None = None,
) -> list[dict]:
    """Mean decoupling error over seeded trials for each (n, rate) point.

    ``log_S_grid`` holds rates log|S|/n. Trial t at a given n uses the same
    Haar unitary for every rate, so rows at one n differ only by |S|.
    Failed projections count as error 1.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rho_ae, da, de = _alice_eve_marginal(ch, rho, prep)
    rows = []
    for n in sorted(set(int(v) for v in n_list)):
        big, dan, den = _n_copies(rho_ae, da, de, n)
        for rate in sorted(set(float(r) for r in log_S_grid)):
            log_s = rate * n
            if log_s > n * math.log2(da) + 1e-9 or log_s < 0:
                raise ValueError(f"rate {rate} outside [0, {math.log2(da)}] for n={n}")
            errs, accs = [], []
            for t in range(trials):
                tr = _trial_on_marginal(big, dan, den, n, log_s, _trial_seed(seed, n, t), decode)
                errs.append(1.0 if tr.failed else tr.decoupling_error)
                accs.append(tr.acceptance)
                if keep_trials is not None:
                    keep_trials.append(tr)
            errs = np.asarray(errs)
            stderr = float(errs.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
            rows.append(
                {
                    "n": n,
                    "log_S_per_n": rate,
                    "mean_error": float(errs.mean()),
                    "stderr": stderr,
                    "acceptance": float(np.mean(accs)),
                    "trials": trials,
                }
            )
    return rows


def converse_slack(trial: ProtocolTrial) -> float:
    """I(S>B')_decoded + 4 eps log D + 2 h(eps) - log D; nonnegative when the converse chain holds."""
    if trial.converse_epsilon is None:
        raise ValueError("trial was run without a decoder")
    log_d = trial.log_D
    eps = trial.converse_epsilon
    return trial.decoded_coherent_info + 4 * eps * log_d + 2 * binary_entropy(eps) - log_d
