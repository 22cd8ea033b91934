import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wkvp import basis as bs
from wkvp.backends import get_backend
from wkvp.precision import F64, F128
from wkvp.radial import NuclearModel, moment


class TestEvenTempered:
    def test_two_point_endpoints(self):
        z = bs.even_tempered(201.0, 195883180777.0, 2)
        assert z[0] == 201.0 and z[-1] == pytest.approx(195883180777.0, rel=1e-15)

    def test_three_point_middle_is_geometric_mean(self):
        z = bs.even_tempered(201.0, 195883180777.0, 3)
        assert z[1] == pytest.approx(201.0 * np.sqrt(195883180777.0 / 201.0), rel=1e-12)
        assert z[1] == pytest.approx(6.275e6, rel=1e-3)

    def test_wkopt_betas(self):
        assert bs.beta_of(bs.wkopt(60)) == pytest.approx(1.42, abs=1e-2)
        assert bs.beta_of(bs.wkopt(120)) == pytest.approx(1.19, abs=1e-2)

    def test_validation(self):
        with pytest.raises(ValueError):
            bs.even_tempered(10.0, 1.0, 5)
        with pytest.raises(ValueError):
            bs.even_tempered(1.0, 10.0, 1)

    @given(st.floats(1e-3, 1e3), st.floats(1.3, 40.0), st.integers(2, 40))
    @settings(max_examples=50, deadline=None)
    def test_beta_reconstruction(self, zmin, ratio, n):
        z = bs.even_tempered(zmin, zmin * ratio ** (n - 1), n)
        beta = bs.beta_of(z)
        assert np.max(np.abs(z[1:] / z[:-1] - beta)) / beta <= 1e-12


class TestAssemble:
    def test_rkb_powers_kappa_m1(self):
        spec = bs.BasisSpec.make(-1, "rkb", [1.0, 3.0])
        ab = bs.assemble(spec)
        f0, g0 = ab.functions[0]
        assert f0.powers == [1] and not g0.powers        # s-type large
        f2, g2 = ab.functions[2]
        assert not f2.powers and g2.powers == [2]        # p-type small

    def test_rkb_powers_kappa_p1(self):
        spec = bs.BasisSpec.make(+1, "rkb", [1.0, 3.0])
        ab = bs.assemble(spec)
        f0, _ = ab.functions[0]
        assert f0.powers == [2]
        _, g2 = ab.functions[2]
        assert sorted(g2.powers) == [1, 3]               # two-term balance image

    def test_unit_norms(self):
        B = get_backend(F64)
        for kappa in (-2, -1, 1, 2):
            spec = bs.BasisSpec.make(kappa, "rkb", [0.5, 2.0, 9.0])
            ab = bs.assemble(spec)
            for f, g in ab.functions:
                total = 0.0
                for comp in (f, g):
                    if comp.powers:
                        total += float(B.mask_of(comp.norm2(B)))
                assert total == pytest.approx(1.0, abs=1e-12)

    def test_dkb_unit_norms(self):
        B = get_backend(F64)
        spec = bs.BasisSpec.make(1, "dkb", [0.5, 2.0])
        ab = bs.assemble(spec)
        for f, g in ab.functions:
            total = float(B.mask_of(f.norm2(B))) + float(B.mask_of(g.norm2(B)))
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_dkb_swap_structure(self):
        """j-basis condition: -kappa family-2 functions equal +kappa family-1 swapped."""
        z = [0.7, 2.1, 6.3]
        n = len(z)
        a_p = bs.assemble(bs.BasisSpec.make(2, "dkb", z))
        a_m = bs.assemble(bs.BasisSpec.make(-2, "dkb", z))
        for mu in range(n):
            f1, g1 = a_p.functions[mu]            # family 1 of +kappa
            f2, g2 = a_m.functions[n + mu]        # family 2 of -kappa
            assert g1.powers == f2.powers
            assert np.allclose([float(c) for c in g1.coefs], [float(c) for c in f2.coefs])
            assert f1.powers == g2.powers
            assert np.allclose([float(c) for c in f1.coefs], [float(c) for c in g2.coefs])


class TestReferenceBasis:
    def test_roundtrip(self, tmp_path):
        rb = bs.ReferenceBasis("U", -1, (50.0, 200.0, 1e3))
        p = tmp_path / "u.txt"
        bs.save_reference_basis(rb, p)
        back = bs.load_reference_basis(p)
        assert back.element == "U" and back.kappa0 == -1
        assert np.allclose(back.exponents, rb.exponents)

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            bs.ReferenceBasis("U", -1, (1.0, 1.0))

    def test_parse_inline(self):
        rb = bs.load_reference_basis("# note\nelement Kr\nkappa0 -1\n2.5e1\n1e3\n")
        assert rb.element == "Kr"
        assert rb.exponents == (25.0, 1000.0)


class TestTrim:
    def test_zero_threshold_keeps_all(self):
        model = NuclearModel(92.0, "shell", 5.751)
        rb = bs.ReferenceBasis("U", -1, tuple(np.geomspace(50, 1e9, 14)))
        out = bs.trim_reference(rb, model, 0.0)
        assert out.exponents == tuple(sorted(rb.exponents))

    def test_diffuse_exponents_removed(self):
        # two very diffuse exponents shift the deep 1s of U by far below 1e-5 Eh
        model = NuclearModel(92.0, "shell", 5.751)
        core = tuple(np.geomspace(50, 1e9, 14))
        rb = bs.ReferenceBasis("U", -1, (1e-4, 1e-3) + core)
        out = bs.trim_reference(rb, model, 1e-5)
        assert 1e-4 not in out.exponents and 1e-3 not in out.exponents
        assert len(out.exponents) <= len(core)
