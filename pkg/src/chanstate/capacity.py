"""Coherent-information capacity of a channel used together with a shared state.

A preparation appends a pure state phi on (A1, A1') to Alice's half A2 of the
shared state and applies a unitary encoder on (A1', A2). A1' is then sent
through the channel. All rates are in bits per channel use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channels import KrausChannel, isometric_extension, tensor_power
from .measures import PartitionSpec, coherent_information, mutual_information
from .optimize import OptimizerConfig, best, maximize, restart_rng
from .states import (
    LabeledState,
    check_cap,
    clip_eigenvalues,
    copy_label,
    entropy_of_probs,
    merge_systems,
    purify,
    relabel,
    tensor,
    trivial_state,
)

__all__ = [
    "OMEGA_LABELS",
    "CapacityEstimate",
    "Preparation",
    "blocked_capacity",
    "build_omega",
    "cc_cost",
    "father_rates",
    "hermitian_from_params",
    "joint_and_separate",
    "mother_rates",
    "objective",
    "one_shot_capacity",
    "params_from_hermitian",
    "separate_strategy_rate",
]

OMEGA_LABELS = ("A1", "A2", "B1", "B2", "E1", "E2")
ALICE = ("A1", "A2")
BOB = ("B1", "B2")
EVE = ("E1", "E2")


# ---------------------------------------------------------------------------
# Parameterizations
# ---------------------------------------------------------------------------


def hermitian_from_params(p: np.ndarray, d: int) -> np.ndarray:
    """Hermitian d x d matrix from d**2 reals: diagonal, then Re and Im of the upper triangle."""
    p = np.asarray(p, dtype=float)
    if p.shape != (d * d,):
        raise ValueError(f"expected {d * d} generator parameters, got {p.shape}")
    iu = np.triu_indices(d, 1)
    m = len(iu[0])
    h = np.zeros((d, d), dtype=complex)
    h[iu] = p[d : d + m] + 1j * p[d + m :]
    h = h + h.conj().T
    h[np.diag_indices(d)] = p[:d]
    return h


def params_from_hermitian(h: np.ndarray) -> np.ndarray:
    d = h.shape[0]
    iu = np.triu_indices(d, 1)
    return np.concatenate([np.diag(h).real, h[iu].real, h[iu].imag])


def unitary_from_params(p: np.ndarray, d: int) -> np.ndarray:
    """exp(iH) computed through the eigendecomposition of H, so it is unitary to rounding."""
    if d == 1:
        return np.exp(1j * np.asarray(p, dtype=float)).reshape(1, 1)
    w, v = np.linalg.eigh(hermitian_from_params(p, d))
    return (v * np.exp(1j * w)) @ v.conj().T


def vector_from_params(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    half = p.size // 2
    vec = p[:half] + 1j * p[half:]
    norm = np.linalg.norm(vec)
    if norm < 1e-150:
        vec = np.zeros(half, dtype=complex)
        vec[0] = 1.0
        return vec
    return vec / norm


def params_from_vector(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    v = v / np.linalg.norm(v)
    return np.concatenate([v.real, v.imag])


@dataclass(frozen=True, eq=False)
class Preparation:
    """Pure phi on (A1, A1') plus a unitary encoder exp(iH) on (A1', A2).

    ``phi_params`` holds Re and Im parts of the (unnormalized) phi amplitudes
    in (A1, A1') order; ``encoder_params`` parameterizes H.
    """

    phi_params: np.ndarray
    encoder_params: np.ndarray
    d_a1: int
    d_a2: int

    def __post_init__(self):
        phi = np.asarray(self.phi_params, dtype=float)
        enc = np.asarray(self.encoder_params, dtype=float)
        if phi.shape != (2 * self.d_a1**2,):
            raise ValueError(f"phi_params must have length {2 * self.d_a1**2}, got {phi.shape}")
        de = self.d_a1 * self.d_a2
        if enc.shape != (de * de,):
            raise ValueError(f"encoder_params must have length {de * de}, got {enc.shape}")
        object.__setattr__(self, "phi_params", phi)
        object.__setattr__(self, "encoder_params", enc)

    @classmethod
    def from_vector(cls, x: np.ndarray, d_a1: int, d_a2: int) -> "Preparation":
        n = 2 * d_a1**2
        return cls(x[:n], x[n:], d_a1, d_a2)

    @classmethod
    def from_state(cls, phi: np.ndarray, d_a2: int, encoder: np.ndarray | None = None) -> "Preparation":
        """From an explicit phi (vector or d x d amplitude matrix) and Hermitian generator."""
        phi = np.asarray(phi, dtype=complex)
        d_a1 = int(round(math.isqrt(phi.size)))
        de = d_a1 * d_a2
        h = np.zeros((de, de)) if encoder is None else encoder
        return cls(params_from_vector(phi), params_from_hermitian(h), d_a1, d_a2)

    @classmethod
    def maximally_entangled(cls, d_a1: int, d_a2: int) -> "Preparation":
        return cls.from_state(np.eye(d_a1) / np.sqrt(d_a1), d_a2)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.phi_params, self.encoder_params])

    def phi(self) -> np.ndarray:
        """Normalized amplitudes as a (d_a1, d_a1) matrix indexed [A1, A1']."""
        return vector_from_params(self.phi_params).reshape(self.d_a1, self.d_a1)

    def encoder(self) -> np.ndarray:
        return unitary_from_params(self.encoder_params, self.d_a1 * self.d_a2)

    def with_identity_encoder(self) -> "Preparation":
        return Preparation(self.phi_params, np.zeros_like(self.encoder_params), self.d_a1, self.d_a2)


@dataclass
class CapacityEstimate:
    value: float
    best_prep: Preparation
    restarts: int
    evaluations: int
    converged: bool
    history: list[tuple[int, float]] = field(default_factory=list)
    block: int = 1


# ---------------------------------------------------------------------------
# The transmitted state
# ---------------------------------------------------------------------------


class _Problem:
    """Pre-digested channel and state for repeated evaluation of the transmitted state."""

    def __init__(self, ch: KrausChannel, rho: LabeledState):
        if len(rho.systems) != 2:
            raise ValueError(f"shared state must be bipartite (Alice, Bob), got {rho.labels}")
        self.ch = ch
        self.rho = rho
        self.din = ch.din
        self.d_a2, self.d_b2 = rho.dims
        psi = purify(rho.as_density(), "__env__")
        self.d_e2 = psi.dims[2]
        self.psi = np.asarray(psi.data).reshape(self.d_a2, self.d_b2 * self.d_e2)
        iso = isometric_extension(ch)
        self.d_b1, self.d_e1 = iso.dout, iso.denv
        self.v = iso.tensor()  # (b1, e1, x)
        self.shape = (self.din, self.d_a2, self.d_b1, self.d_b2, self.d_e1, self.d_e2)
        check_cap(math.prod(self.shape), "transmitted state")

    @property
    def nparams(self) -> int:
        return 2 * self.din**2 + (self.din * self.d_a2) ** 2

    def omega(self, phi: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Transmitted pure state as a tensor indexed (A1, A2, B1, B2, E1, E2)."""
        d1, d2 = self.din, self.d_a2
        # (a1, x, y, r) product of phi and psi, r = (b2, e2)
        prod = np.einsum("ax,yr->axyr", phi, self.psi).reshape(d1, d1 * d2, -1)
        enc = np.matmul(u, prod).reshape(d1, d1, d2, -1)  # (a1, x', y', r)
        out = np.tensordot(self.v, enc, axes=([2], [1]))  # (b1, e1, a1, y', r)
        out = out.reshape(self.d_b1, self.d_e1, d1, d2, self.d_b2, self.d_e2)
        return out.transpose(2, 3, 0, 4, 1, 5)

    def coherent_info(self, phi: np.ndarray, u: np.ndarray) -> float:
        """H(B1B2) - H(E1E2), which equals I(A1A2>B1B2) for the pure transmitted state."""
        w = self.omega(phi, u)
        return _cut_entropy(w, (2, 3)) - _cut_entropy(w, (4, 5))


def _cut_entropy(w: np.ndarray, axes: tuple[int, ...]) -> float:
    """Entropy of the marginal on ``axes`` of a pure state tensor."""
    rest = tuple(i for i in range(w.ndim) if i not in axes)
    dk = math.prod(w.shape[i] for i in axes)
    m = w.transpose(axes + rest).reshape(dk, -1)
    if m.shape[0] > m.shape[1]:
        m = m.T
    lam, _ = clip_eigenvalues(np.linalg.eigvalsh(m @ m.conj().T))
    return entropy_of_probs(lam)


def _check_prep(problem: _Problem, prep: Preparation) -> None:
    if prep.d_a1 != problem.din or prep.d_a2 != problem.d_a2:
        raise ValueError(
            f"preparation dims (A1={prep.d_a1}, A2={prep.d_a2}) do not match "
            f"channel input {problem.din} and state A2 dim {problem.d_a2}"
        )


def build_omega(ch: KrausChannel, rho: LabeledState, prep: Preparation) -> LabeledState:
    """Global pure state on (A1, A2, B1, B2, E1, E2) after preparation and transmission."""
    problem = _Problem(ch, rho)
    _check_prep(problem, prep)
    w = problem.omega(prep.phi(), prep.encoder())
    return LabeledState(w.reshape(-1), list(zip(OMEGA_LABELS, w.shape)), check=False)


def objective(ch: KrausChannel, rho: LabeledState, prep: Preparation) -> float:
    """I(A1A2>B1B2) of the transmitted state."""
    problem = _Problem(ch, rho)
    _check_prep(problem, prep)
    return problem.coherent_info(prep.phi(), prep.encoder())


def cc_cost(ch: KrausChannel, rho: LabeledState, prep: Preparation) -> float:
    """Classical communication cost I(A1A2;E1E2) of the direct coding scheme."""
    return mutual_information(build_omega(ch, rho, prep), PartitionSpec(ALICE, EVE))


# ---------------------------------------------------------------------------
# Optimization
# ---------------------------------------------------------------------------


def _phi_starts(din: int, cfg: OptimizerConfig, salt: int) -> list[np.ndarray]:
    """Maximally entangled, product, then seeded random phi parameters."""
    product = np.zeros((din, din))
    product[0, 0] = 1.0
    starts = [params_from_vector(np.eye(din) / np.sqrt(din)), params_from_vector(product)]
    for i in range(2, cfg.restarts):
        starts.append(restart_rng(cfg.seed, salt + i).standard_normal(2 * din * din))
    return starts[: cfg.restarts]


def _optimize_phi(problem: _Problem, cfg: OptimizerConfig, score) -> tuple[np.ndarray, float, list, int, bool]:
    """Maximize ``score(omega_tensor)`` over phi with the identity encoder."""
    din = problem.din
    ident = np.eye(din * problem.d_a2)

    def f(x):
        phi = vector_from_params(x).reshape(din, din)
        return score(problem.omega(phi, ident))

    results = maximize(f, _phi_starts(din, cfg, salt=1 << 20), cfg)
    top = best(results)
    history = [(r.index, r.value) for r in results]
    return top.x, top.value, history, sum(r.evaluations for r in results), top.converged


def _channel_term(ch: KrausChannel, cfg: OptimizerConfig) -> tuple[np.ndarray, float]:
    """max over phi of I(A1>B1) for the channel alone."""
    from .states import trivial_state

    problem = _Problem(ch, trivial_state())
    x, value, *_ = _optimize_phi(problem, cfg, lambda w: _cut_entropy(w, (2,)) - _cut_entropy(w, (4,)))
    return x, value


def separate_strategy_rate(ch: KrausChannel, rho: LabeledState, cfg: OptimizerConfig | None = None) -> float:
    """Channel coding plus independent distillation: max_phi I(A1>B1) + I(A2>B2)."""
    cfg = cfg or OptimizerConfig()
    _, channel = _channel_term(ch, cfg)
    return channel + _state_term(rho)


def _state_term(rho: LabeledState) -> float:
    a, b = rho.labels
    return coherent_information(rho, PartitionSpec([a], [b]))


def one_shot_capacity(
    ch: KrausChannel,
    rho: LabeledState,
    cfg: OptimizerConfig | None = None,
    extra_starts: list[Preparation] | None = None,
) -> CapacityEstimate:
    """Best achieved I(A1A2>B1B2) over preparations (a lower bound on the one-shot capacity).

    Restart 0 starts from the separate strategy's best phi with the identity
    encoder, restart 1 from the maximally entangled phi; ``extra_starts``
    come next and the remaining restarts are seeded random points.
    """
    est, _ = joint_and_separate(ch, rho, cfg, extra_starts)
    return est


def joint_and_separate(
    ch: KrausChannel,
    rho: LabeledState,
    cfg: OptimizerConfig | None = None,
    extra_starts: list[Preparation] | None = None,
) -> tuple[CapacityEstimate, float]:
    """Joint estimate and separate-strategy rate from one shared channel-term search."""
    cfg = cfg or OptimizerConfig()
    problem = _Problem(ch, rho)
    din, d2 = problem.din, problem.d_a2
    de = din * d2
    phi_sep, channel = _channel_term(ch, cfg)
    separate = channel + _state_term(rho)

    starts = [
        np.concatenate([phi_sep, np.zeros(de * de)]),
        Preparation.maximally_entangled(din, d2).vector,
    ]
    starts += [p.vector for p in (extra_starts or [])]
    for i in range(len(starts), cfg.restarts):
        rng = restart_rng(cfg.seed, i)
        starts.append(np.concatenate([rng.standard_normal(2 * din * din), rng.standard_normal(de * de)]))
    starts = starts[: cfg.restarts]

    n_phi = 2 * din * din

    def f(x):
        return problem.coherent_info(
            vector_from_params(x[:n_phi]).reshape(din, din), unitary_from_params(x[n_phi:], de)
        )

    results = maximize(f, starts, cfg)
    top = best(results)
    est = CapacityEstimate(
        value=top.value,
        best_prep=Preparation.from_vector(top.x, din, d2),
        restarts=len(results),
        evaluations=sum(r.evaluations for r in results),
        converged=top.converged,
        history=[(r.index, r.value) for r in results],
    )
    return est, separate


def block_state(rho: LabeledState, l: int) -> LabeledState:
    """rho^{(x) l} with Alice's and Bob's copies fused into two systems."""
    if l == 1:
        return rho
    a, b = rho.labels
    copies = [relabel(rho, {a: copy_label(a, i), b: copy_label(b, i)}) for i in range(l)]
    out = copies[0]
    for c in copies[1:]:
        out = tensor(out, c)
    return merge_systems(out, {a: [copy_label(a, i) for i in range(l)], b: [copy_label(b, i) for i in range(l)]})


def _square_preparation(prep: Preparation) -> Preparation:
    """prep (x) prep expressed on the fused two-copy registers."""
    d1, d2 = prep.d_a1, prep.d_a2
    phi = prep.phi()
    phi2 = np.einsum("ax,by->abxy", phi, phi).reshape(d1 * d1, d1 * d1)
    de = d1 * d2
    h = hermitian_from_params(prep.encoder_params, de)
    g = np.kron(h, np.eye(de)) + np.kron(np.eye(de), h)  # order (x0, y0, x1, y1)
    g = g.reshape([d1, d2, d1, d2] * 2).transpose(0, 2, 1, 3, 4, 6, 5, 7).reshape(de * de, de * de)
    return Preparation(params_from_vector(phi2), params_from_hermitian(g), d1 * d1, d2 * d2)


def blocked_capacity(
    ch: KrausChannel, rho: LabeledState, l: int, cfg: OptimizerConfig | None = None
) -> CapacityEstimate:
    """(1/l) times the one-shot value of l blocked channel uses and state copies."""
    if l not in (1, 2):
        raise ValueError(f"block level must be 1 or 2, got {l}")
    cfg = cfg or OptimizerConfig()
    single = one_shot_capacity(ch, rho, cfg)
    if l == 1:
        return single
    ch2 = tensor_power(ch, 2)
    rho2 = block_state(rho, 2)
    _Problem(ch2, rho2)  # dimension check before optimizing
    est = one_shot_capacity(ch2, rho2, cfg, extra_starts=[_square_preparation(single.best_prep)])
    return CapacityEstimate(
        value=est.value / l,
        best_prep=est.best_prep,
        restarts=est.restarts,
        evaluations=est.evaluations + single.evaluations,
        converged=est.converged,
        history=[(i, v / l) for i, v in est.history],
        block=l,
    )


# ---------------------------------------------------------------------------
# Special cases of the protocol
# ---------------------------------------------------------------------------


def father_rates(ch: KrausChannel, cfg: OptimizerConfig | None = None) -> tuple[float, float]:
    """(max_phi 1/2 I(A1;B1), 1/2 I(A1;E1) at the maximizer)."""
    cfg = cfg or OptimizerConfig()
    problem = _Problem(ch, trivial_state())

    def half_mi(w, bob, eve):
        return 0.5 * (_cut_entropy(w, (0,)) + _cut_entropy(w, bob) - _cut_entropy(w, eve))

    x, rate, *_ = _optimize_phi(problem, cfg, lambda w: half_mi(w, (2,), (4,)))
    din = problem.din
    w = problem.omega(vector_from_params(x).reshape(din, din), np.eye(din))
    return rate, half_mi(w, (4,), (2,))


def mother_rates(rho: LabeledState) -> tuple[float, float]:
    """(1/2 I(A2;B2), 1/2 I(A2;E2)) on the purification of rho."""
    a, b = rho.labels
    psi = purify(rho.as_density(), "__env__")
    rate = 0.5 * mutual_information(psi, PartitionSpec([a], [b]))
    cost = 0.5 * mutual_information(psi, PartitionSpec([a], ["__env__"]))
    return rate, cost
