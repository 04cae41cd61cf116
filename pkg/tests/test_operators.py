import math

import numpy as np
import pytest
import scipy.sparse as sp

import rydark.operators as ops
from rydark.hilbert import (
    composite_space,
    custom_space,
    embed_restricted_in_full,
    full_space,
    restricted_space,
)
from rydark.model import AtomScheme, ConfigError, CrossCouplings, PairCouplings, mhz
from rydark.operators import (
    DensityMatrix,
    LindbladChannel,
    QOperator,
    StateVector,
    collapse_operators,
    dark_state,
    dump_operator,
    hamiltonian_full,
    hamiltonian_restricted,
    liouvillian,
    op_from_elements,
    project_operator,
    site_operator,
    to_dense,
    unvec,
    vec,
)


def scheme_3lvl(omega_R=1.0, omega_M=1.0, gamma=2.0, **kw):
    return AtomScheme(omega_R=mhz(omega_R), omega_M=mhz(omega_M), gamma_r=mhz(gamma), **kw)


def zero_couplings(n):
    z = np.zeros((n, n))
    return PairCouplings(v_rr=z.copy(), v_ss=z.copy(), v_rs=z.copy())


class TestHamiltonianFull:
    def test_single_atom_elements(self):
        scheme = scheme_3lvl()
        space = full_space(1, 3)
        h = hamiltonian_full(scheme, zero_couplings(1), space).dense()
        g, r, s = (space.index_of(l) for l in "grs")
        assert h[g, r] == pytest.approx(scheme.omega_R)
        assert h[r, s] == pytest.approx(scheme.omega_M)
        assert np.allclose(np.diag(h), 0.0)

    def test_two_atoms_noninteracting_tensor(self):
        scheme = scheme_3lvl(0.7, 1.3)
        h1 = hamiltonian_full(scheme, zero_couplings(1), full_space(1, 3)).dense()
        h2 = hamiltonian_full(scheme, zero_couplings(2), full_space(2, 3)).dense()
        eye = np.eye(3)
        np.testing.assert_allclose(h2, np.kron(h1, eye) + np.kron(eye, h1), atol=1e-14)

    def test_exchange_block_eigenvalues(self):
        # drives off, V_rs = 2pi*140: the {rs, sr} block splits to +-V_rs
        scheme = AtomScheme(omega_R=0.0, omega_M=0.0, gamma_r=0.0)
        v = np.array([[0.0, mhz(140.0)], [mhz(140.0), 0.0]])
        space = full_space(2, 3)
        h = hamiltonian_full(scheme, PairCouplings(np.zeros((2, 2)), np.zeros((2, 2)), v),
                             space).dense()
        idx = [space.index_of("rs"), space.index_of("sr")]
        block = h[np.ix_(idx, idx)]
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(block)),
                                   [-mhz(140.0), mhz(140.0)], rtol=1e-12)

    def test_hermiticity_random(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            n = int(rng.integers(1, 4))
            v = rng.uniform(0, 5, size=(n, n))
            v = 0.5 * (v + v.T)
            np.fill_diagonal(v, 0.0)
            couplings = PairCouplings(v.copy(), v.copy(), v.copy())
            scheme = scheme_3lvl(rng.uniform(0, 2), rng.uniform(0, 2))
            h = hamiltonian_full(scheme, couplings, full_space(n, 3))
            dense = h.dense()
            assert np.max(np.abs(dense - dense.conj().T)) < 1e-12

    def test_four_level_requires_engineered(self):
        with pytest.raises(ConfigError, match="4-level"):
            hamiltonian_full(scheme_3lvl(), zero_couplings(1), full_space(1, 4))

    def test_engineered_coupling_present(self):
        scheme = AtomScheme(omega_R=mhz(1), omega_M=mhz(1), omega_E=mhz(5), kappa=mhz(6))
        space = full_space(1, 4)
        h = hamiltonian_full(scheme, zero_couplings(1), space).dense()
        assert h[space.index_of("r"), space.index_of("e")] == pytest.approx(mhz(5))


class TestHamiltonianRestricted:
    def test_matches_spec_form(self):
        scheme = scheme_3lvl(0.9, 1.7)
        space = restricted_space(2)
        h = hamiltonian_restricted(scheme, space).dense()
        assert h[space.index_of("G"), space.index_of("R1")] == pytest.approx(scheme.omega_R)
        assert h[space.index_of("R2"), space.index_of("S2")] == pytest.approx(scheme.omega_M)
        assert h[space.index_of("G"), space.index_of("S1")] == 0.0

    def test_annihilates_dark_state(self):
        rng = np.random.default_rng(5)
        for n in (1, 3, 8, 20):
            omega_r, omega_m = rng.uniform(0.1, 5.0, size=2)
            scheme = AtomScheme(omega_R=omega_r, omega_M=omega_m, gamma_r=0.0)
            space = restricted_space(n)
            h = hamiltonian_restricted(scheme, space).dense()
            psi = dark_state(n, omega_r, omega_m, space).vector
            assert np.linalg.norm(h @ psi) < 1e-12

    def test_n1_equals_full_under_embedding(self):
        scheme = scheme_3lvl()
        restricted = restricted_space(1)
        full = full_space(1, 3)
        emb = embed_restricted_in_full(restricted, full)
        h_full = hamiltonian_full(scheme, zero_couplings(1), full).dense()
        h_restricted = hamiltonian_restricted(scheme, restricted).dense()
        np.testing.assert_allclose(h_full[np.ix_(emb, emb)], h_restricted, atol=1e-14)

    @pytest.mark.parametrize("n", [2, 3])
    def test_full_projected_equals_restricted_exactly(self, n):
        # perfect blockade: the full-3 Hamiltonian projected on the embedded
        # restricted basis is H_eff with no residual elements
        scheme = scheme_3lvl(1.1, 0.6)
        restricted = restricted_space(n)
        full = full_space(n, 3)
        emb = embed_restricted_in_full(restricted, full)
        couplings = PairCouplings(np.zeros((n, n)), np.zeros((n, n)), np.zeros((n, n)),
                                  perfect_channels=frozenset({"rr", "ss", "rs"}))
        h_full = hamiltonian_full(scheme, couplings, full).dense()
        h_eff = hamiltonian_restricted(scheme, restricted).dense()
        np.testing.assert_array_equal(h_full[np.ix_(emb, emb)], h_eff)

    def test_composite_noninteracting(self):
        scheme = scheme_3lvl()
        space = composite_space(restricted_space(2), restricted_space(2))
        zero = CrossCouplings(v_ss=np.zeros((2, 2)), v_rs=np.zeros((2, 2)))
        h = hamiltonian_restricted(scheme, space, zero).dense()
        h1 = hamiltonian_restricted(scheme, restricted_space(2)).dense()
        eye = np.eye(5)
        np.testing.assert_allclose(h, np.kron(h1, eye) + np.kron(eye, h1), atol=1e-14)

    def test_composite_cross_elements(self):
        scheme = scheme_3lvl()
        space = composite_space(restricted_space(2), restricted_space(2))
        v_ss = np.array([[1.0, 2.0], [3.0, 4.0]])
        v_rs = np.array([[5.0, 6.0], [7.0, 8.0]])
        h = hamiltonian_restricted(scheme, space, CrossCouplings(v_ss=v_ss, v_rs=v_rs)).dense()
        assert h[space.index_of("S1|S2"), space.index_of("S1|S2")] == pytest.approx(2.0)
        assert h[space.index_of("R2|S1"), space.index_of("S2|R1")] == pytest.approx(7.0)

    def test_composite_requires_cross(self):
        space = composite_space(restricted_space(1), restricted_space(1))
        with pytest.raises(ConfigError, match="cross_couplings"):
            hamiltonian_restricted(scheme_3lvl(), space)


class TestDarkState:
    def test_n1_equal_drives(self):
        space = restricted_space(1)
        psi = dark_state(1, 1.0, 1.0, space).vector
        expected = np.zeros(3, dtype=complex)
        expected[space.index_of("G")] = 1 / math.sqrt(2)
        expected[space.index_of("S1")] = -1 / math.sqrt(2)
        np.testing.assert_allclose(psi, expected, atol=1e-15)

    def test_n20_equal_weights(self):
        space = restricted_space(20)
        psi = dark_state(20, mhz(1.0), mhz(math.sqrt(20.0)), space).vector
        assert abs(psi[space.index_of("G")]) == pytest.approx(1 / math.sqrt(2), rel=1e-12)
        s_weight = sum(abs(psi[space.index_of(f"S{k}")]) ** 2 for k in range(1, 21))
        assert s_weight == pytest.approx(0.5, rel=1e-12)

    def test_omega_r_zero_gives_ground(self):
        space = restricted_space(3)
        psi = dark_state(3, 0.0, 2.0, space).vector
        assert abs(psi[space.index_of("G")]) == pytest.approx(1.0)

    def test_both_zero_undefined(self):
        with pytest.raises(ConfigError, match="undefined"):
            dark_state(2, 0.0, 0.0, restricted_space(2))

    def test_amplitude_formula(self):
        n, omega_r, omega_m = 5, 0.8, 1.9
        space = restricted_space(n)
        psi = dark_state(n, omega_r, omega_m, space).vector
        omega_n = math.sqrt(omega_m**2 + n * omega_r**2)
        assert psi[space.index_of("G")] == pytest.approx(omega_m / omega_n, rel=1e-14)
        for k in range(1, n + 1):
            assert psi[space.index_of(f"S{k}")] == pytest.approx(-omega_r / omega_n, rel=1e-14)


class TestCollapseOperators:
    def test_restricted_two_channels(self):
        space = restricted_space(2)
        channels = collapse_operators(scheme_3lvl(gamma=2.0), space)
        assert len(channels) == 2
        for k, ch in enumerate(channels, start=1):
            dense = ch.op.dense()
            assert dense[space.index_of("G"), space.index_of(f"R{k}")] == \
                pytest.approx(math.sqrt(mhz(2.0)))
            assert np.count_nonzero(dense) == 1

    def test_all_rates_zero_empty(self):
        scheme = AtomScheme(omega_R=1.0, omega_M=1.0)
        assert collapse_operators(scheme, restricted_space(3)) == []

    def test_single_decaying_atom(self):
        space = restricted_space(4)
        channels = collapse_operators(scheme_3lvl(gamma=0.0), space,
                                      gamma_r_atoms=[mhz(2.0), 0.0, 0.0, 0.0])
        assert len(channels) == 1
        assert channels[0].name == "decay_r1"

    def test_engineered_on_restricted_rejected(self):
        scheme = AtomScheme(omega_R=1.0, omega_M=1.0, omega_E=1.0, kappa=5.0)
        with pytest.raises(ConfigError, match="3-level"):
            collapse_operators(scheme, restricted_space(2))

    def test_full4_kappa_channels(self):
        scheme = AtomScheme(omega_R=1.0, omega_M=1.0, omega_E=2.0, kappa=mhz(5.0))
        space = full_space(2, 4)
        channels = collapse_operators(scheme, space)
        assert len(channels) == 2
        dense = channels[0].op.dense()
        assert dense[space.index_of("ge"), space.index_of("ee")] == \
            pytest.approx(math.sqrt(mhz(5.0)))

    def test_dephasing_channel_count(self):
        scheme = AtomScheme(omega_R=1.0, omega_M=1.0, gamma_d=0.5)
        assert len(collapse_operators(scheme, restricted_space(3))) == 6
        scheme_s = AtomScheme(omega_R=1.0, omega_M=1.0, gamma_d=0.5, dephase_levels="s")
        assert len(collapse_operators(scheme_s, restricted_space(3))) == 3
        collective = AtomScheme(omega_R=1.0, omega_M=1.0, gamma_d=0.5,
                                dephase_scope="collective")
        assert len(collapse_operators(collective, restricted_space(3))) == 1

    def test_composite_lifting(self):
        scheme = scheme_3lvl(gamma=2.0)
        space = composite_space(restricted_space(2), restricted_space(2))
        channels = collapse_operators(scheme, space)
        assert len(channels) == 4
        dense = channels[0].op.dense()  # left atom 1 decay, lifted
        assert dense[space.index_of("G|S2"), space.index_of("R1|S2")] == \
            pytest.approx(math.sqrt(mhz(2.0)))


class TestLiouvillian:
    def test_textbook_two_level_decay(self):
        # H = 0, single channel sqrt(gamma)|g><e| on a 2-level space
        space = custom_space(["g", "e"], 1)
        gamma = 0.8
        channel = LindbladChannel(op_from_elements(space, [("g", "e", math.sqrt(gamma))]))
        l_op = liouvillian(None, [channel])
        rho = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)
        for t in (0.3, 1.0, 3.0):
            propagated = unvec(sp.linalg.expm_multiply(l_op.matrix * t, vec(rho)))
            assert propagated[1, 1].real == pytest.approx(math.exp(-gamma * t), rel=1e-9)

    def test_identity_stationary_under_unitary(self):
        scheme = scheme_3lvl()
        space = restricted_space(2)
        h = hamiltonian_restricted(scheme, space)
        l_op = liouvillian(h, [])
        rho = np.eye(space.dim, dtype=complex) / space.dim
        assert np.linalg.norm(l_op.matrix @ vec(rho)) < 1e-12

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_trace_preservation_left_null(self, n):
        scheme = scheme_3lvl(gamma=2.0, gamma_s=0.3, gamma_d=0.7)
        space = restricted_space(n)
        l_op = liouvillian(hamiltonian_restricted(scheme, space),
                           collapse_operators(scheme, space))
        ident = vec(np.eye(space.dim, dtype=complex))
        residual = np.abs(ident.conj() @ l_op.matrix.toarray())
        assert np.max(residual) < 1e-10

    def test_restricted_n1_null_vector_is_dark_state(self):
        # null-space solve cross-checked against long-time integration
        scheme = scheme_3lvl(1.0, 1.0, 2.0)
        space = restricted_space(1)
        h = hamiltonian_restricted(scheme, space)
        l_op = liouvillian(h, collapse_operators(scheme, space))
        dense = l_op.matrix.toarray()
        _, svals, vh = np.linalg.svd(dense)
        assert np.sum(svals < svals[0] * 1e-10) == 1
        null = vh[-1].conj()
        rho_null = unvec(null)
        rho_null = 0.5 * (rho_null + rho_null.conj().T)
        rho_null /= np.trace(rho_null).real
        psi = dark_state(1, scheme.omega_R, scheme.omega_M, space).vector
        np.testing.assert_allclose(rho_null, np.outer(psi, psi.conj()), atol=1e-10)
        # long-time integration oracle
        rho0 = vec(np.diag([1.0, 0.0, 0.0]).astype(complex))
        final = unvec(sp.linalg.expm_multiply(l_op.matrix * 60.0, rho0))
        np.testing.assert_allclose(final, np.outer(psi, psi.conj()), atol=1e-8)

    def test_dimension_mismatch(self):
        h = hamiltonian_restricted(scheme_3lvl(), restricted_space(2))
        bad = LindbladChannel(op_from_elements(restricted_space(3), [("G", "R1", 1.0)]))
        with pytest.raises(ConfigError, match="different space"):
            liouvillian(h, [bad])


class TestSymmetricSectorReduction:
    def test_matches_rescaled_single_atom(self):
        # uniform gamma: dynamics from |G> stays in span{G, R_sym, S} and
        # matches the single atom with omega_R -> sqrt(N) omega_R
        import rydark.hilbert as hb
        from rydark.dynamics import IntegratorSettings, evolve

        n = 5
        scheme = scheme_3lvl(1.0, 1.0, 2.0)
        space = restricted_space(n)
        l_op = liouvillian(hamiltonian_restricted(scheme, space),
                           collapse_operators(scheme, space))
        g = space.basis_vector("G")
        times = np.linspace(0.0, 10.0, 101)
        sym = hb.symmetric_states(space)
        psi = dark_state(n, scheme.omega_R, scheme.omega_M, space).vector
        obs = {
            "P_D": lambda rho: (psi.conj() @ rho @ psi).real,
            "sym_weight": lambda rho: (g.conj() @ rho @ g).real
            + (sym["R_sym"].conj() @ rho @ sym["R_sym"]).real
            + (sym["S"].conj() @ rho @ sym["S"]).real,
        }
        traj = evolve(l_op, DensityMatrix(space, np.outer(g, g.conj())), times,
                      IntegratorSettings(method="expm"), observables=obs)
        assert np.min(traj.observables["sym_weight"]) > 1.0 - 1e-9

        scheme1 = AtomScheme(omega_R=math.sqrt(n) * scheme.omega_R,
                             omega_M=scheme.omega_M, gamma_r=scheme.gamma_r)
        space1 = restricted_space(1)
        l1 = liouvillian(hamiltonian_restricted(scheme1, space1),
                         collapse_operators(scheme1, space1))
        psi1 = dark_state(1, scheme1.omega_R, scheme1.omega_M, space1).vector
        g1 = space1.basis_vector("G")
        traj1 = evolve(l1, DensityMatrix(space1, np.outer(g1, g1.conj())), times,
                       IntegratorSettings(method="expm"),
                       observables={"P_D": lambda rho: (psi1.conj() @ rho @ psi1).real})
        np.testing.assert_allclose(traj.observables["P_D"], traj1.observables["P_D"],
                                   atol=1e-9)


class TestRepresentations:
    def test_dense_sparse_agreement(self, monkeypatch):
        scheme = scheme_3lvl(0.9, 1.4, 2.0)
        n = 3
        v = np.full((n, n), mhz(100.0))
        np.fill_diagonal(v, 0.0)
        couplings = PairCouplings(v.copy(), v.copy(), v.copy())
        h_dense = hamiltonian_full(scheme, couplings, full_space(n, 3)).dense()
        channels_dense = collapse_operators(scheme, full_space(n, 3))
        monkeypatch.setattr(ops, "DENSE_LIMIT", 1)
        h_sparse = hamiltonian_full(scheme, couplings, full_space(n, 3))
        assert sp.issparse(h_sparse.matrix)
        np.testing.assert_allclose(to_dense(h_sparse.matrix), h_dense, atol=1e-10)
        channels_sparse = collapse_operators(scheme, full_space(n, 3))
        for a, b in zip(channels_dense, channels_sparse):
            np.testing.assert_allclose(a.op.dense(), b.op.dense(), atol=1e-10)

    def test_hermitian_flag_verified(self):
        space = restricted_space(1)
        matrix = np.zeros((3, 3), dtype=complex)
        matrix[0, 1] = 1.0
        with pytest.raises(ConfigError, match="hermitian"):
            QOperator(space, matrix, hermitian=True)

    def test_state_vector_norm_checked(self):
        with pytest.raises(ConfigError, match="unit norm"):
            StateVector(restricted_space(1), np.array([1.0, 1.0, 0.0]))

    def test_project_operator_matches_submatrix(self):
        from rydark.hilbert import subset_space

        scheme = scheme_3lvl()
        full = full_space(2, 3)
        h = hamiltonian_full(scheme, zero_couplings(2), full)
        sub, keep = subset_space(full, ["gg", "gr", "gs"])
        projected = project_operator(h, sub, keep)
        np.testing.assert_array_equal(projected.dense(), h.dense()[np.ix_(keep, keep)])


class TestDump:
    def test_format(self, tmp_path):
        space = restricted_space(1)
        op = op_from_elements(space, [("G", "R1", 1.5), ("R1", "G", 1.5)], hermitian=True)
        path = tmp_path / "op.txt"
        dump_operator(op, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "# dim 3"
        assert lines[1] == "0 1 1.5 0"
        assert lines[2] == "1 0 1.5 0"
