import json

import numpy as np
import pytest

from chanstate.capacity import build_omega, objective, Preparation
from chanstate.channels import (
    KrausChannel,
    apply,
    apply_isometry,
    channel_from_spec,
    channel_to_spec,
    choi_state,
    complementary,
    dephasing_channel,
    depolarizing_channel,
    erasure_channel,
    identity_channel,
    isometric_extension,
    random_channel,
    state_as_channel,
    tensor_power,
)
from chanstate.measures import PartitionSpec, coherent_information
from chanstate.states import (
    DimensionCapExceeded,
    LabeledState,
    basis_state,
    maximally_entangled,
    partial_trace,
    random_density,
    random_pure,
    tensor,
    von_neumann_entropy,
)

from oracle import dm, entropy, kraus_apply, ptrace

CONSTRUCTORS = [
    identity_channel(2),
    identity_channel(3),
    erasure_channel(0.3),
    erasure_channel(0.5, 3),
    depolarizing_channel(0.4),
    dephasing_channel(0.2),
]


def half_bell(ch, labels=("R", "A1'")):
    return apply(ch, maximally_entangled(ch.din, labels), labels[1])


class TestKrausChannel:
    @pytest.mark.parametrize("ch", CONSTRUCTORS)
    def test_completeness(self, ch):
        total = sum(k.conj().T @ k for k in ch.kraus)
        np.testing.assert_allclose(total, np.eye(ch.din), atol=1e-12)

    def test_rejects_non_trace_preserving(self):
        with pytest.raises(ValueError, match="trace preserving"):
            KrausChannel((np.eye(2) * 0.5,))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            KrausChannel(())

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            KrausChannel((np.eye(2) / np.sqrt(2), np.eye(3) / np.sqrt(2)))

    @pytest.mark.parametrize("p", [-0.1, 1.5])
    def test_bad_probability(self, p):
        for ctor in (erasure_channel, depolarizing_channel, dephasing_channel):
            with pytest.raises(ValueError):
                ctor(p)


class TestIsometricExtension:
    def test_identity(self):
        v = isometric_extension(identity_channel(2))
        assert v.denv == 1
        np.testing.assert_allclose(v.V, np.eye(2))

    def test_erasure_action(self):
        p = 0.3
        v = isometric_extension(erasure_channel(p)).tensor()  # (B, E, A)
        psi = np.array([0.6, 0.8j])
        out = np.einsum("bea,a->be", v, psi)
        flag = np.array([0, 0, 1.0])
        expected = np.sqrt(1 - p) * np.outer(np.append(psi, 0), flag) + np.sqrt(p) * np.outer(flag, np.append(psi, 0))
        np.testing.assert_allclose(out, expected, atol=1e-12)
        vm = isometric_extension(erasure_channel(p)).V
        np.testing.assert_allclose(vm.conj().T @ vm, np.eye(2), atol=1e-12)

    def test_random_is_isometry(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            v = isometric_extension(random_channel(3, 2, 4, rng)).V
            np.testing.assert_allclose(v.conj().T @ v, np.eye(3), atol=1e-9)

    def test_trace_out_env_reproduces_channel(self):
        rng = np.random.default_rng(1)
        ch = random_channel(2, 3, 3, rng)
        v = isometric_extension(ch)
        for i in range(2):
            for j in range(2):
                e = np.zeros((2, 2))
                e[i, j] = 1
                full = v.V @ e @ v.V.conj().T
                red = np.einsum("aebe->ab", full.reshape(3, v.denv, 3, v.denv))
                np.testing.assert_allclose(red, ch(e), atol=1e-12)


class TestApply:
    def test_identity(self):
        s = random_density([("x", 2), ("A1'", 2)], np.random.default_rng(2))
        out = apply(identity_channel(2), s, "A1'")
        assert out.labels == ("x", "B1")
        np.testing.assert_allclose(out.data, s.data, atol=1e-14)

    def test_full_erasure(self):
        s = random_pure([("A1'", 2)], np.random.default_rng(3))
        out = apply(erasure_channel(1.0), s, "A1'")
        np.testing.assert_allclose(out.data, np.diag([0, 0, 1.0]), atol=1e-14)

    def test_full_depolarizing(self):
        s = random_density([("x", 2), ("A1'", 2)], np.random.default_rng(4))
        out = apply(depolarizing_channel(1.0), s, "A1'")
        np.testing.assert_allclose(out.data, np.kron(partial_trace(s, ["x"]).data, np.eye(2) / 2), atol=1e-14)

    def test_depolarizing_formula(self):
        rng = np.random.default_rng(5)
        s = random_density([("A1'", 2)], rng)
        p = 0.3
        out = apply(depolarizing_channel(p), s, "A1'")
        np.testing.assert_allclose(out.data, (1 - p) * s.data + p * np.eye(2) / 2, atol=1e-14)

    def test_depolarizing_zero_is_identity(self):
        s = random_density([("A1'", 2)], np.random.default_rng(6))
        np.testing.assert_allclose(apply(depolarizing_channel(0.0), s, "A1'").data, s.data, atol=1e-14)

    def test_dephasing_keeps_diagonal(self):
        s = LabeledState(np.diag([0.3, 0.7]), [("A1'", 2)])
        np.testing.assert_array_equal(apply(dephasing_channel(0.6), s, "A1'").data, s.data)

    def test_middle_target_matches_oracle(self):
        rng = np.random.default_rng(7)
        ch = random_channel(3, 2, 2, rng)
        s = random_density([("x", 2), ("A1'", 3), ("y", 2)], rng)
        out = apply(ch, s, "A1'")
        assert out.labels == ("x", "B1", "y")
        big = [np.kron(np.kron(np.eye(2), k), np.eye(2)) for k in ch.kraus]
        np.testing.assert_allclose(out.data, kraus_apply(big, s.density()), atol=1e-12)

    def test_trace_and_positivity(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            ch = random_channel(2, 3, 3, rng)
            s = random_density([("x", 2), ("A1'", 2)], rng)
            out = apply(ch, s, "A1'")
            assert np.trace(out.data).real == pytest.approx(1.0, abs=1e-9)
            assert np.linalg.eigvalsh(out.data).min() >= -1e-9

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            apply(identity_channel(3), random_density([("A1'", 2)], np.random.default_rng(9)), "A1'")


class TestApplyIsometry:
    def test_identity_env_is_zero_ket(self):
        s = random_pure([("x", 2), ("A1'", 2)], np.random.default_rng(10))
        out = apply_isometry(isometric_extension(identity_channel(2)), s, "A1'")
        np.testing.assert_allclose(partial_trace(out, ["E1"]).data, [[1.0]], atol=1e-14)

    def test_symmetric_erasure_spectra(self):
        out = apply_isometry(isometric_extension(erasure_channel(0.5)), maximally_entangled(2, ("R", "A1'")), "A1'")
        assert out.is_pure
        lb = np.linalg.eigvalsh(partial_trace(out, ["B1"]).data)
        le = np.linalg.eigvalsh(partial_trace(out, ["E1"]).data)
        np.testing.assert_allclose(lb, le, atol=1e-12)

    def test_consistent_with_apply(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            din, dout = (int(x) for x in rng.integers(1, 4, size=2))
            nk = -(-din // dout) + int(rng.integers(0, 2))
            ch = random_channel(din, dout, nk, rng)
            s = random_density([("x", 2), ("A1'", din)], rng)
            if rng.random() < 0.5:
                s = random_pure([("x", 2), ("A1'", din)], rng)
            out = apply_isometry(isometric_extension(ch), s, "A1'")
            np.testing.assert_allclose(
                partial_trace(out, ["x", "B1"]).density(), apply(ch, s, "A1'").density(), atol=1e-9
            )

    def test_cap(self, monkeypatch):
        monkeypatch.setenv("CSC_DIM_CAP", "8")
        with pytest.raises(DimensionCapExceeded):
            apply_isometry(isometric_extension(erasure_channel(0.5)), maximally_entangled(2, ("R", "A1'")), "A1'")


class TestErasure:
    def test_shape(self):
        ch = erasure_channel(0.2, 3)
        assert (ch.din, ch.dout) == (3, 4)
        assert len(ch.kraus) == 4

    def test_p_zero_is_embedding(self):
        s = random_pure([("A1'", 2)], np.random.default_rng(12))
        assert von_neumann_entropy(apply(erasure_channel(0.0), s, "A1'")) == pytest.approx(0.0, abs=1e-10)

    def test_p_one_outputs_flag(self):
        s = random_density([("A1'", 3)], np.random.default_rng(13))
        np.testing.assert_allclose(apply(erasure_channel(1.0, 3), s, "A1'").data, np.diag([0, 0, 0, 1.0]), atol=1e-14)

    @pytest.mark.parametrize("p", [0.0, 0.25, 0.5])
    def test_half_bell_coherent_information(self, p):
        out = half_bell(erasure_channel(p))
        ci = coherent_information(out, PartitionSpec(["R"], ["B1"]))
        # oracle: entropies of the output blocks
        rho = out.density()
        expected = entropy(ptrace(rho, [2, 3], [1])) - entropy(rho)
        assert ci == pytest.approx(expected, abs=1e-10)
        assert ci == pytest.approx(1 - 2 * p, abs=1e-10)

    def test_symmetric_erasure_random_inputs(self):
        rng = np.random.default_rng(14)
        ch = erasure_channel(0.5)
        prep_rho = basis_state([0, 0], [("A2", 1), ("B2", 1)])
        for _ in range(200):
            phi = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            prep = Preparation.from_state(phi / np.linalg.norm(phi), 1)
            w = build_omega(ch, prep_rho, prep)
            assert coherent_information(w, PartitionSpec(["A1"], ["B1"])) <= 1e-7


class TestOtherConstructors:
    def test_depolarizing_choi_spectrum(self):
        for p in (0.0, 0.2, 0.7, 1.0):
            lam = np.sort(np.linalg.eigvalsh(choi_state(depolarizing_channel(p))))[::-1]
            np.testing.assert_allclose(lam, [1 - 3 * p / 4, p / 4, p / 4, p / 4], atol=1e-12)

    def test_choi_matches_oracle(self):
        ch = random_channel(2, 3, 2, np.random.default_rng(15))
        phi = np.eye(2).reshape(-1) / np.sqrt(2)
        big = [np.kron(np.eye(2), k) for k in ch.kraus]
        np.testing.assert_allclose(choi_state(ch), kraus_apply(big, dm(phi)), atol=1e-12)

    def test_complementary_of_identity_is_trace(self):
        comp = complementary(identity_channel(2))
        rho = random_density([("A1'", 2)], np.random.default_rng(16))
        np.testing.assert_allclose(comp(rho.data), [[1.0]], atol=1e-14)

    def test_complementary_of_erasure(self):
        p = 0.3
        rho = random_density([("A1'", 2)], np.random.default_rng(17)).data
        np.testing.assert_allclose(complementary(erasure_channel(p))(rho), erasure_channel(1 - p)(rho), atol=1e-12)


class TestTensorPower:
    def test_n_one(self):
        ch = erasure_channel(0.2)
        assert tensor_power(ch, 1) is ch

    def test_identity_power(self):
        ch = tensor_power(identity_channel(2), 3)
        assert len(ch.kraus) == 1
        np.testing.assert_allclose(ch.kraus[0], np.eye(8))

    def test_erasure_kraus_count(self):
        ch = erasure_channel(0.2)
        assert len(tensor_power(ch, 2).kraus) == len(ch.kraus) ** 2

    def test_product_action(self):
        rng = np.random.default_rng(18)
        ch = random_channel(2, 2, 2, rng)
        a, b = random_density([("A1'", 2)], rng).data, random_density([("A1'", 2)], rng).data
        np.testing.assert_allclose(tensor_power(ch, 2)(np.kron(a, b)), np.kron(ch(a), ch(b)), atol=1e-12)

    def test_cap(self, monkeypatch):
        monkeypatch.setenv("CSC_DIM_CAP", "16")
        with pytest.raises(DimensionCapExceeded, match="27"):
            tensor_power(erasure_channel(0.2), 3)


class TestSpec:
    def test_round_trip(self):
        ch = random_channel(2, 3, 2, np.random.default_rng(19))
        back = channel_from_spec(json.loads(channel_to_spec(ch)))
        for k1, k2 in zip(ch.kraus, back.kraus):
            np.testing.assert_allclose(k1, k2, atol=1e-15)

    def test_named(self):
        ch = channel_from_spec({"kind": "erasure", "p": 0.5, "d": 3})
        assert (ch.din, ch.dout) == (3, 4)

    def test_unknown(self):
        with pytest.raises(ValueError):
            channel_from_spec({"kind": "amplitude"})


class TestStateAsChannel:
    def test_rank_one_cut(self):
        psi = tensor(basis_state([0], [("A2", 2)]), maximally_entangled(2, ("B2", "E2")))
        inp, iso = state_as_channel(psi)
        assert inp.dims == (2, 1)
        assert iso.din == 1

    def test_bell_times_ket(self):
        psi = tensor(maximally_entangled(2, ("A2", "B2")), basis_state([0], [("E2", 2)]))
        inp, iso = state_as_channel(psi)
        assert inp.labels == ("A2", "A2'")
        assert von_neumann_entropy(partial_trace(inp, ["A2"])) == pytest.approx(1.0)
        env = iso.tensor()[:, 1:, :]
        np.testing.assert_allclose(env, 0, atol=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(20)
        for _ in range(30):
            dims = [int(x) for x in rng.integers(1, 4, size=3)]
            psi = random_pure(list(zip(("A2", "B2", "E2"), dims)), rng)
            inp, iso = state_as_channel(psi)
            out = apply_isometry(iso, inp, "A2'")
            assert abs(np.vdot(psi.data, out.data)) ** 2 >= 1 - 1e-8

    def test_rejects_mixed(self):
        with pytest.raises(ValueError):
            state_as_channel(random_density([("a", 2), ("b", 2), ("c", 1)], np.random.default_rng(21)))


def test_data_processing_on_b2():
    rng = np.random.default_rng(22)
    ch = erasure_channel(0.3)
    rho = random_density([("A2", 2), ("B2", 2)], rng)
    part = PartitionSpec(["A1", "A2"], ["B1", "B2"])
    for _ in range(10):
        prep = Preparation.from_vector(rng.standard_normal(8 + 16), 2, 2)
        w = build_omega(ch, rho, prep)
        local = random_channel(2, 2, 2, rng)
        local = KrausChannel(local.kraus, in_label="B2", out_label="B2x", env_label="F")
        after = apply(local, partial_trace(w, ["A1", "A2", "B1", "B2"]), "B2")
        after_part = PartitionSpec(["A1", "A2"], ["B1", "B2x"])
        assert coherent_information(after, after_part) <= objective(ch, rho, prep) + 1e-8
        assert coherent_information(w, part) == pytest.approx(objective(ch, rho, prep), abs=1e-9)
