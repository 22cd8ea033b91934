import numpy as np
import pytest

from wkvp import dirac
from wkvp.basis import BasisSpec, assemble, even_tempered
from wkvp.constants import MC2
from wkvp.precision import F64, F128, arbitrary, ConditioningError
from wkvp.radial import NuclearModel

U_SHELL = NuclearModel(92.0, "shell", 5.751)


class TestAssembleMatrices:
    def test_free_particle_blocks(self):
        spec = BasisSpec.make(-1, "rkb", [0.5, 2.0, 8.0])
        ab = assemble(spec)
        S, H, V = dirac.assemble_matrices(ab, None)
        n = 3
        assert V is None
        # LL block: H = +mc2 S, SS block: H = -mc2 S
        assert np.allclose(H[:n, :n], MC2 * S[:n, :n], rtol=1e-13)
        assert np.allclose(H[n:, n:], -MC2 * S[n:, n:], rtol=1e-13)

    def test_rkb_ss_block_is_higher_l_overlap(self):
        # S^SS for kappa equals the nonrelativistic overlap at l_kappa + 1
        z = [0.5, 2.0, 8.0]
        spec = BasisSpec.make(-1, "rkb", z)
        ab = assemble(spec)
        S, _, _ = dirac.assemble_matrices(ab, None)
        n = len(z)
        za = np.asarray(z)
        num = 2.0 * np.sqrt(za[:, None] * za[None, :]) / (za[:, None] + za[None, :])
        S_l1 = num ** (1 + 1.5)
        assert np.allclose(S[n:, n:], S_l1, atol=1e-14)

    def test_2x2_overlap_eigenvalue(self):
        spec = BasisSpec.make(-1, "rkb", [1.0, 4.0])
        ab = assemble(spec)
        S, _, _ = dirac.assemble_matrices(ab, None)
        w = np.linalg.eigvalsh(S[:2, :2])
        assert w[0] == pytest.approx(1.0 - (4.0 / 5.0) ** 1.5, abs=1e-12)
        assert w[0] == pytest.approx(0.284458, abs=1e-6)

    def test_symmetry(self):
        spec = BasisSpec.make(2, "dkb", [0.5, 3.0, 20.0])
        ab = assemble(spec)
        S, H, V = dirac.assemble_matrices(ab, U_SHELL)
        assert np.array_equal(S, S.T)
        assert np.array_equal(H, H.T)
        assert np.array_equal(V, V.T)

    def test_dkb_charge_conjugation_matrices(self):
        """S(-k) = P S(k) P and H0(-k) = -P H0(k) P exactly (j-basis)."""
        z = list(np.geomspace(0.5, 100.0, 4))
        n = len(z)
        Sp, Hp, _ = dirac.assemble_matrices(assemble(BasisSpec.make(3, "dkb", z)), None)
        Sm, Hm, _ = dirac.assemble_matrices(assemble(BasisSpec.make(-3, "dkb", z)), None)
        P = np.zeros((2 * n, 2 * n))
        for mu in range(n):
            P[mu, n + mu] = P[n + mu, mu] = 1.0
        assert np.max(np.abs(Sm - P @ Sp @ P)) < 1e-15
        assert np.max(np.abs(Hm + P @ Hp @ P)) < 1e-7 * np.max(np.abs(Hm))


class TestOrthonormalize:
    def test_identity_all_methods(self):
        S = np.eye(4)
        for method in ("symmetric", "canonical", "cholesky"):
            V = dirac.orthonormalize(S, method)
            assert np.allclose(V, np.eye(4), atol=1e-14), method

    def test_symmetric_diag(self):
        V = dirac.orthonormalize(np.diag([4.0, 1.0]), "symmetric")
        assert np.allclose(V, np.diag([0.5, 1.0]), atol=1e-15)

    def test_vsv_identity(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((6, 6))
        S = A @ A.T + 6 * np.eye(6)
        for method in ("symmetric", "canonical", "cholesky"):
            V = dirac.orthonormalize(S, method)
            assert np.allclose(V.T @ S @ V, np.eye(6), atol=1e-12), method

    def test_norm_equals_inv_sqrt_min_sigma(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((8, 8))
        S = A @ A.T + 0.1 * np.eye(8)
        smin = np.linalg.eigvalsh(S).min()
        for method in ("symmetric", "canonical"):
            V = dirac.orthonormalize(S, method)
            assert np.linalg.norm(V, 2) == pytest.approx(1.0 / np.sqrt(smin), rel=1e-10)

    def test_indefinite_raises(self):
        S = np.diag([1.0, -0.5])
        with pytest.raises(ConditioningError):
            dirac.orthonormalize(S, "symmetric")


class TestSolve:
    def test_point_nucleus_1s_energy(self):
        """Z=92 point: 1s binding -> mc2(sqrt(1-(Za)^2)-1) ~ -4861.2, from above."""
        model = NuclearModel(92.0, "point")
        exact = MC2 * (np.sqrt(1.0 - (92.0 / 137.035999177) ** 2) - 1.0)
        prev = None
        for n in (16, 22, 28):
            spec = BasisSpec.make(-1, "rkb", even_tempered(1.0, 5e9, n))
            e = dirac.ground_state_energy(spec, model)
            assert e > exact  # variational from above
            if prev is not None:
                assert e < prev + 1e-9
            prev = e
        assert prev == pytest.approx(exact, abs=0.2)
        assert exact == pytest.approx(-4861.2, abs=0.1)

    def test_finite_size_weakens_binding(self):
        spec = BasisSpec.make(-1, "rkb", even_tempered(10.0, 1e10, 24))
        e_point = dirac.ground_state_energy(spec, NuclearModel(92.0, "point"))
        e_shell = dirac.ground_state_energy(spec, U_SHELL)
        assert e_shell > e_point

    def test_orthonormality_and_residual(self):
        spec = BasisSpec.make(-1, "dkb", even_tempered(201.0, 1e8, 12))
        ab = assemble(spec)
        S, H, _ = dirac.assemble_matrices(ab, U_SHELL)
        sol = dirac.solve(H, S, F64, kappa=-1)
        n = sol.n_states
        assert n == spec.dimension
        smin = sol.min_overlap_eig
        defect = dirac.orthonormality_defect(sol, S)
        assert defect <= 10 * F64.u * n / smin
        res = dirac.residual_max(sol, H, S)
        assert res <= 100 * F64.u * np.max(np.abs(H)) / smin
        # balanced classification
        assert int(sol.neg_mask.sum()) == n // 2
        # column-norm bound
        C = sol.coefficients_f64()
        assert np.linalg.norm(C, 2) <= 1.01 / np.sqrt(smin)

    def test_free_dkb_spectrum_symmetric(self):
        spec = BasisSpec.make(1, "dkb", even_tempered(201.0, 1e8, 10))
        ab = assemble(spec)
        S, H, _ = dirac.assemble_matrices(ab, None)
        solp = dirac.solve(H, S, F64, kappa=1)
        abm = assemble(BasisSpec.make(-1, "dkb", even_tempered(201.0, 1e8, 10)))
        Sm, Hm, _ = dirac.assemble_matrices(abm, None)
        solm = dirac.solve(Hm, Sm, F64, kappa=-1)
        # +-kappa pairing: spectra mirror to rounding
        assert np.allclose(np.sort(solp.energies), np.sort(-solm.energies),
                           rtol=0, atol=1e-8 * np.max(np.abs(solp.energies)))

    def test_modes_agree(self):
        spec = BasisSpec.make(-1, "rkb", even_tempered(201.0, 1e6, 6))
        e64 = dirac.ground_state_energy(spec, U_SHELL, F64)
        edd = dirac.ground_state_energy(spec, U_SHELL, F128)
        emp = dirac.ground_state_energy(spec, U_SHELL, arbitrary(30))
        assert e64 == pytest.approx(edd, abs=1e-8)
        assert edd == pytest.approx(emp, abs=1e-8)

    def test_variational_monotonicity(self):
        """Adding an exponent never raises the lowest PositiveLike level."""
        model = U_SHELL
        base = list(even_tempered(20.0, 1e9, 12))
        e0 = dirac.ground_state_energy(BasisSpec.make(-1, "rkb", base), model)
        richer = sorted(base + [3.5e4])
        e1 = dirac.ground_state_energy(BasisSpec.make(-1, "rkb", richer), model)
        assert e1 <= e0 + 1e-9

    def test_spectrum_norms_bound(self):
        spec = BasisSpec.make(-1, "dkb", even_tempered(201.0, 1e8, 10))
        ab = assemble(spec)
        S, H, _ = dirac.assemble_matrices(ab, U_SHELL)
        sol = dirac.solve(H, S, F64, kappa=-1)
        tab = dirac.spectrum_norms(sol)
        assert tab.shape == (sol.n_states, 2)
        assert tab[:, 1].max() <= 1.01 / np.sqrt(sol.min_overlap_eig)
