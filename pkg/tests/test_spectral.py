"""Grids, transforms, spectral operators, quadrature and prolongation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinbec.errors import DegenerateInput, InvalidArgument
from spinbec.spectral import (
    GridSpec,
    SpinorField,
    apply_laplacian,
    apply_lz,
    apply_soc,
    forward,
    inner_product,
    inverse,
    make_grid,
    norm,
    normalize,
    prolongate,
    spectral_multipliers,
    wavenumbers,
)

from conftest import random_field


def _scalar_field(grid, f):
    f = np.broadcast_to(f, grid.shape).astype(complex)
    return SpinorField(grid, np.stack([f, 2 * f, -f]))


class TestGrid:
    def test_unit_spacing(self):
        g = make_grid(2, [16, 16], [32, 32])
        assert g.h == (1.0, 1.0)
        x = g.axis(0)
        assert x[0] == -16.0 and x[31] == 15.0

    def test_table_grid_spacing(self):
        assert make_grid(2, [12, 12], [256, 256]).h[0] == pytest.approx(0.09375, abs=0)

    def test_anisotropic_3d(self):
        g = make_grid(3, [10, 10, 80], [64, 64, 512])
        assert g.h == pytest.approx((0.3125,) * 3, abs=1e-15)
        assert g.shape == (64, 64, 512)

    def test_scalar_arguments_broadcast(self):
        g = make_grid(3, 4.0, 8)
        assert g.half_widths == (4.0, 4.0, 4.0) and g.shape == (8, 8, 8)

    @pytest.mark.parametrize(
        "args",
        [(2, 8, 33), (2, 8, 2), (2, 0.0, 32), (2, -1.0, 32), (1, 8, 32), (4, 8, 32), (2, [8, 8, 8], 32)],
    )
    def test_invalid(self, args):
        with pytest.raises(InvalidArgument):
            make_grid(*args)

    def test_refined_and_same_domain(self):
        g = make_grid(2, 8, 32)
        f = g.refined()
        assert f.shape == (64, 64) and f.same_domain(g)
        assert not make_grid(2, 9, 64).same_domain(g)


class TestMultipliers:
    def test_wavenumber_layout(self):
        g = make_grid(2, math.pi, 8)
        v = wavenumbers(g)[0]
        # DFT order 0..N/2-1, -N/2..-1 with v_p = pi p / L = p here
        assert np.array_equal(v, np.array([0, 1, 2, 3, -4, -3, -2, -1], dtype=float))

    def test_laplacian_nonpositive_with_zero_mode(self):
        m = spectral_multipliers(make_grid(2, 5, 16))
        assert np.all(m.laplacian <= 0)
        assert m.laplacian[0, 0] == 0

    def test_soc_identities(self):
        g = make_grid(2, 3.0, 16)
        m = spectral_multipliers(g)
        vx, vy = np.meshgrid(*wavenumbers(g), indexing="ij")
        # follows from soc0 = -vx + i vy and soc1 = -(vx + i vy)
        np.testing.assert_allclose(m.soc0 + m.soc1, -2 * vx, atol=1e-14)
        np.testing.assert_allclose(m.soc0 - m.soc1, 2j * vy, atol=1e-14)


class TestTransforms:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from([4, 8, 16]), st.sampled_from([2, 3]))
    def test_round_trip(self, seed, n, dim):
        g = make_grid(dim, 3.0, n)
        f = random_field(g, seed)
        back = inverse(g, forward(f))
        assert np.abs(back.data - f.data).max() <= 1e-13 * np.abs(f.data).max()


class TestLaplacian:
    def test_constant_field(self):
        g = make_grid(2, 4, 16)
        out = apply_laplacian(_scalar_field(g, np.ones(g.shape)))
        assert np.abs(out.data).max() < 1e-13

    def test_plane_wave_eigenfunction(self):
        g = make_grid(2, math.pi, 32)
        x, _ = g.coords()
        f = _scalar_field(g, np.exp(1j * (x + math.pi)))
        out = apply_laplacian(f)
        np.testing.assert_allclose(out.data, -f.data, atol=1e-13)

    def test_gaussian_closed_form(self):
        g = make_grid(2, 16, 128)
        r2 = sum(c * c for c in g.coords())
        f = _scalar_field(g, np.exp(-r2 / 2))
        expect = _scalar_field(g, (r2 - 2) * np.exp(-r2 / 2))
        assert np.abs(apply_laplacian(f).data - expect.data).max() <= 1e-10

    def test_gaussian_closed_form_3d(self):
        g = make_grid(3, 10, 48)
        r2 = sum(c * c for c in g.coords())
        f = _scalar_field(g, np.exp(-r2 / 2))
        expect = _scalar_field(g, (r2 - 3) * np.exp(-r2 / 2))
        assert np.abs(apply_laplacian(f).data - expect.data).max() <= 1e-10

    def test_self_adjoint(self):
        g = make_grid(2, 4, 16)
        a, b = random_field(g, 1), random_field(g, 2)
        lhs = inner_product(apply_laplacian(a), b)
        rhs = inner_product(a, apply_laplacian(b))
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


class TestLz:
    def test_radial_annihilated(self):
        g = make_grid(2, 16, 128)
        r2 = sum(c * c for c in g.coords())
        out = apply_lz(_scalar_field(g, np.exp(-r2 / 2) * (1 + r2)))
        assert np.abs(out.data).max() <= 1e-10

    @pytest.mark.parametrize("sign", [1, -1])
    def test_vortex_eigenvalue(self, sign):
        g = make_grid(2, 16, 128)
        x, y = g.coords()
        f = _scalar_field(g, (x + sign * 1j * y) * np.exp(-(x * x + y * y) / 2))
        np.testing.assert_allclose(apply_lz(f).data, sign * f.data, atol=1e-10)

    def test_3d_ignores_z(self):
        g = make_grid(3, 10, 48)
        x, y, z = g.coords()
        f = _scalar_field(g, (x + 1j * y) * np.exp(-(x * x + y * y + z * z) / 2) * (1 + z))
        np.testing.assert_allclose(apply_lz(f).data, f.data, atol=1e-10)

    def test_self_adjoint_on_decaying_fields(self):
        g = make_grid(2, 16, 64)
        a, b = random_field(g, 3, decay=2.0), random_field(g, 4, decay=2.0)
        lhs = inner_product(apply_lz(a), b)
        rhs = inner_product(a, apply_lz(b))
        assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


class TestSoc:
    @pytest.mark.parametrize("which", ["L0", "L1"])
    def test_constant_field(self, which):
        g = make_grid(2, 4, 16)
        assert np.abs(apply_soc(_scalar_field(g, np.ones(g.shape)), which).data).max() < 1e-13

    @pytest.mark.parametrize("which,factor", [("L0", -1 + 2j), ("L1", -1 - 2j)])
    def test_plane_wave(self, which, factor):
        g = make_grid(2, math.pi, 16)
        x, y = g.coords()
        f = _scalar_field(g, np.exp(1j * (x + 2 * y)))
        np.testing.assert_allclose(apply_soc(f, which).data, factor * f.data, atol=1e-12)

    def test_gaussian_derivatives(self):
        # L0 = i d/dx + d/dy, L1 = i d/dx - d/dy
        g = make_grid(2, 16, 128)
        x, y = g.coords()
        gau = np.exp(-(x * x + y * y) / 2)
        f = _scalar_field(g, gau)
        np.testing.assert_allclose(apply_soc(f, "L0").data, _scalar_field(g, -(y + 1j * x) * gau).data, atol=1e-10)
        np.testing.assert_allclose(apply_soc(f, "L1").data, _scalar_field(g, (y - 1j * x) * gau).data, atol=1e-10)

    def test_adjoint_pair(self):
        g = make_grid(2, 4, 16)
        a, b = random_field(g, 5), random_field(g, 6)
        lhs = inner_product(apply_soc(a, "L0"), b)
        rhs = inner_product(a, apply_soc(b, "L1"))
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)

    def test_unknown_operator(self):
        g = make_grid(2, 4, 8)
        with pytest.raises(InvalidArgument):
            apply_soc(random_field(g), "L2")


class TestInnerProduct:
    def test_normalized_self_product(self):
        g = make_grid(2, 4, 16)
        f = normalize(random_field(g, 7))
        assert abs(inner_product(f, f) - 1) <= 1e-13

    def test_sesquilinear(self):
        g = make_grid(2, 4, 16)
        f = random_field(g, 8)
        n2 = norm(f) ** 2
        val = inner_product(f, f.scaled(1j))
        assert abs(val - (-1j * n2)) <= 1e-13 * n2

    def test_naive_loop(self):
        g = make_grid(2, 3.0, 8)
        a, b = random_field(g, 9), random_field(g, 10)
        h2 = g.h[0] * g.h[1]
        naive = 0j
        for comp in range(3):
            for i in range(8):
                for j in range(8):
                    naive += a.data[comp, i, j] * np.conj(b.data[comp, i, j])
        naive *= h2
        assert abs(inner_product(a, b) - naive) <= 1e-14 * abs(naive)

    def test_grid_mismatch(self):
        a = random_field(make_grid(2, 4, 16))
        b = random_field(make_grid(2, 5, 16))
        with pytest.raises(InvalidArgument):
            inner_product(a, b)


class TestNormalize:
    def test_halves_norm_two(self):
        g = make_grid(2, 4, 16)
        f = normalize(random_field(g, 11))
        doubled = f.scaled(2.0)
        assert norm(doubled) == pytest.approx(2.0, rel=1e-14)
        np.testing.assert_allclose(normalize(doubled).data, f.data, rtol=0, atol=1e-15)

    def test_idempotent(self):
        g = make_grid(2, 4, 16)
        f = normalize(random_field(g, 12))
        np.testing.assert_allclose(normalize(f).data, f.data, atol=1e-15)

    def test_three_equal_masses(self):
        g = make_grid(2, 8, 64)
        r2 = sum(c * c for c in g.coords())
        phi = np.exp(-r2 / 2)
        phi = phi / math.sqrt((phi**2).sum() * g.cell_volume)
        f = normalize(SpinorField(g, np.stack([phi, phi, phi]).astype(complex)))
        np.testing.assert_allclose(f.data, np.stack([phi] * 3) / math.sqrt(3), atol=1e-15)

    def test_zero_field(self):
        with pytest.raises(DegenerateInput):
            normalize(SpinorField.zeros(make_grid(2, 4, 8)))


class TestSpinorField:
    def test_rejects_nan(self):
        g = make_grid(2, 4, 8)
        data = np.zeros((3, 8, 8), complex)
        data[1, 2, 3] = np.nan
        with pytest.raises(InvalidArgument):
            SpinorField(g, data)

    def test_rejects_wrong_shape(self):
        with pytest.raises(InvalidArgument):
            SpinorField(make_grid(2, 4, 8), np.zeros((3, 8, 16), complex))


class TestProlongate:
    def test_constant(self):
        g = make_grid(2, 4, 16)
        f = _scalar_field(g, np.full(g.shape, 0.7))
        out = prolongate(f, g.refined())
        np.testing.assert_allclose(out.data, _scalar_field(g.refined(), np.full((32, 32), 0.7)).data, atol=1e-14)

    def test_resolvable_plane_wave(self):
        g = make_grid(2, math.pi, 16)
        fine = g.refined()
        x, y = g.coords()
        xf, yf = fine.coords()
        out = prolongate(_scalar_field(g, np.exp(1j * (3 * x - 5 * y))), fine)
        np.testing.assert_allclose(out.data, _scalar_field(fine, np.exp(1j * (3 * xf - 5 * yf))).data, atol=1e-12)

    def test_coarse_points_reproduced(self):
        g = make_grid(2, 4, 16)
        f = random_field(g, 13)
        out = prolongate(f, g.refined())
        np.testing.assert_allclose(out.data[:, ::2, ::2], f.data, atol=1e-12)

    def test_gaussian_against_analytic(self):
        g = make_grid(2, 16, 64)
        fine = g.refined()
        r2 = sum(c * c for c in g.coords())
        rf2 = sum(c * c for c in fine.coords())
        out = prolongate(_scalar_field(g, np.exp(-r2 / 2)), fine)
        assert np.abs(out.data - _scalar_field(fine, np.exp(-rf2 / 2)).data).max() <= 1e-8

    def test_real_fields_stay_real(self):
        g = make_grid(2, 4, 16)
        rng = np.random.default_rng(0)
        f = SpinorField(g, rng.standard_normal((3, 16, 16)).astype(complex))
        out = prolongate(f, g.refined())
        assert np.abs(out.data.imag).max() <= 1e-14

    def test_norm_preserved_for_band_limited(self):
        g = make_grid(2, math.pi, 16)
        x, y = g.coords()
        f = _scalar_field(g, np.cos(2 * x) * np.sin(3 * y) + 0.5 * np.exp(1j * (x - y)))
        assert norm(prolongate(f, g.refined())) == pytest.approx(norm(f), abs=1e-12)

    def test_3d(self):
        g = make_grid(3, 10, 16)
        f = random_field(g, 14)
        out = prolongate(f, g.refined())
        np.testing.assert_allclose(out.data[:, ::2, ::2, ::2], f.data, atol=1e-12)

    @pytest.mark.parametrize("fine", [make_grid(2, 4, 48), make_grid(2, 5, 32), make_grid(3, 4, 32)])
    def test_invalid_targets(self, fine):
        with pytest.raises(InvalidArgument):
            prolongate(random_field(make_grid(2, 4, 16)), fine)

    def test_grid_is_value_type(self):
        assert GridSpec(2, (4.0, 4.0), (16, 16)) == make_grid(2, 4, 16)
