import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from cbfed.spectral import (
    GridSpec,
    ModeSet,
    PhysicalParams,
    SpectralField,
    galerkin_truncate,
    grid_ops,
    inner,
    leray_project,
    norm,
    random_field,
    stokes_apply,
    to_physical,
    to_spectral,
    transform,
)

G16 = GridSpec(n_per_axis=16)
G3 = GridSpec(dim=3, n_per_axis=8)


def coords(grid):
    axis = np.arange(grid.n_per_axis) * grid.box_length / grid.n_per_axis
    return np.meshgrid(*([axis] * grid.dim), indexing="ij")


def shear(grid=G16):
    x1, x2 = coords(grid)
    return to_spectral(np.stack([np.sin(x2), 0 * x1]), grid)


def raw_random(grid, rng):
    """Real random field, not projected, restricted to dealiased modes."""
    ops = grid_ops(grid)
    u = to_spectral(rng.standard_normal(grid.field_shape), grid)
    return SpectralField(grid, u.coeffs * ops.dealias, solenoidal=False)


class TestParams:
    def test_defaults_and_derived(self):
        p = PhysicalParams(mu=1, alpha=2, beta=1, r=3)
        assert p.lambda1 == pytest.approx(1.0)
        assert p.volume == pytest.approx(4 * math.pi**2)
        assert p.omega == pytest.approx(3.0)
        assert PhysicalParams(mu=1, alpha=1, beta=1, r=3, box_length=math.pi).lambda1 == pytest.approx(4.0)

    def test_r_must_exceed_q(self):
        with pytest.raises(ValidationError, match="r must exceed q"):
            PhysicalParams(mu=1, alpha=1, beta=1, r=2, q=3)
        with pytest.raises(ValidationError, match="r must exceed q"):
            PhysicalParams(mu=1, alpha=1, beta=1, r=2, q=2)

    @pytest.mark.parametrize("field,value", [("mu", 0), ("alpha", 0), ("alpha", -1), ("period_T", 0), ("dim", 4)])
    def test_rejects_bad_values(self, field, value):
        kw = dict(mu=1, alpha=1, beta=1, r=3)
        kw[field] = value
        with pytest.raises(ValidationError):
            PhysicalParams(**kw)

    def test_grid_rejects_non_power_of_two(self):
        for n in (4, 12, 24):
            with pytest.raises(ValidationError):
                GridSpec(n_per_axis=n)


class TestModeSet:
    def test_symmetric_and_nested(self):
        prev = None
        for m in (1, 2, 5, 10, 20):
            ms = ModeSet(G16, m)
            idx = {tuple(k) for k in ms.wave_indices}
            assert idx == {tuple(-np.asarray(k)) for k in idx}
            assert (0, 0) not in idx
            if prev is not None:
                assert prev <= ms
            prev = ms
        assert ModeSet(G16, 1).size == 4
        assert ModeSet(G16, 2).size == 8

    def test_lambda1(self):
        assert ModeSet(G16).lambda1 == pytest.approx(1.0)
        assert ModeSet(GridSpec(n_per_axis=16, box_length=math.pi)).lambda1 == pytest.approx(4.0)

    def test_dealias_cutoff(self):
        # 2/3 rule on n = 16: |n_i| <= 5
        assert np.abs(ModeSet(G16).wave_indices).max() == 5


class TestLeray:
    def test_gradient_projects_to_zero(self):
        x1, x2 = coords(G16)
        grad = to_spectral(np.stack([np.cos(x1), 0 * x1]), G16)  # grad sin(x1)
        assert norm(leray_project(grad)) < 1e-14

    def test_identity_on_solenoidal(self):
        u = shear()
        assert np.allclose(leray_project(u).coeffs, u.coeffs, atol=1e-15)

    @pytest.mark.parametrize("grid", [G16, G3])
    def test_divergence_free_and_idempotent(self, grid, rng):
        ops = grid_ops(grid)
        for _ in range(100 if grid.dim == 2 else 20):
            u = raw_random(grid, rng)
            p = leray_project(u)
            scale = np.abs(p.coeffs).max()
            assert np.abs(np.sum(ops.kint * p.coeffs, axis=0)).max() <= 1e-12 * scale * ops.n
            pp = leray_project(p)
            assert np.abs(pp.coeffs - p.coeffs).max() <= 1e-13 * scale
            assert p.is_hermitian()
            assert np.all(p.coeffs[(slice(None),) + (0,) * grid.dim] == 0)

    def test_orthogonal_to_gradients(self, rng):
        ops = grid_ops(G16)
        for _ in range(20):
            u = leray_project(raw_random(G16, rng))
            phi = np.fft.fftn(rng.standard_normal(G16.shape)) / 16**2 * ops.dealias
            grad = SpectralField(G16, 1j * ops.k * phi, solenoidal=False)
            assert abs(inner(u, grad)) <= 1e-12 * norm(u) * norm(grad)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            SpectralField(G16, np.zeros((2, 8, 8)))


class TestStokes:
    def test_single_mode_eigen(self):
        ops = grid_ops(G16)
        for kidx in ModeSet(G16, 10).wave_indices:
            c = np.zeros(G16.field_shape, complex)
            pos = tuple(np.mod(kidx, 16))
            neg = tuple(np.mod(-kidx, 16))
            a = np.array([kidx[1], -kidx[0]], float)  # perpendicular amplitude
            c[(slice(None),) + pos] = a
            c[(slice(None),) + neg] = a
            w = SpectralField(G16, c, solenoidal=True)
            aw = stokes_apply(w)
            assert np.array_equal(aw.coeffs, c * ops.k2[pos])

    def test_eigenvalue_five(self):
        c = np.zeros(G16.field_shape, complex)
        c[:, 1, 2] = (2, -1)
        c[:, -1, -2] = (2, -1)
        w = SpectralField(G16, c, solenoidal=True)
        assert np.array_equal(stokes_apply(w).coeffs, 5 * c)

    def test_zero(self):
        assert norm(stokes_apply(SpectralField.zeros(G16))) == 0

    def test_rejects_non_solenoidal(self, rng):
        with pytest.raises(ValueError):
            stokes_apply(raw_random(G16, rng))

    def test_pairing_matches_gradient_quadrature(self, rng):
        ops = grid_ops(G16)
        u = random_field(G16, rng=rng)
        lhs = inner(stokes_apply(u), u)
        # |grad u|^2 by quadrature of spectral derivatives on the collocation grid
        grads = ops.to_values(np.expand_dims(u.coeffs, 0) * (1j * ops.k)[:, None])
        quad = G16.volume * np.mean(np.sum(grads**2, axis=(0, 1)))
        assert lhs == pytest.approx(quad, rel=1e-10)
        assert lhs == pytest.approx(norm(u, "V") ** 2, rel=1e-12)


class TestNorms:
    def test_shear_values(self):
        u = shear()
        assert norm(u, "H") == pytest.approx(math.sqrt(2 * math.pi**2), rel=1e-14)
        assert norm(u, "V") == pytest.approx(norm(u, "H"), rel=1e-14)
        assert norm(u, "Vprime") == pytest.approx(norm(u, "H"), rel=1e-14)
        # int sin^4 over [0, 2pi]^2 = 2pi * 3pi/4
        assert norm(u, "Lp", p=4) == pytest.approx((2 * math.pi * 3 * math.pi / 4) ** 0.25, rel=1e-13)

    def test_parseval(self, rng):
        for grid in (G16, G3):
            u = random_field(grid, rng=rng)
            vals = to_physical(u)
            quad = grid.volume * np.mean(np.sum(vals**2, axis=0))
            assert norm(u) ** 2 == pytest.approx(quad, rel=1e-10)
            assert norm(u, "Lp", p=2) == pytest.approx(norm(u), rel=1e-10)

    def test_rejects_p_below_one(self):
        with pytest.raises(ValueError):
            norm(shear(), "Lp", p=0.5)
        with pytest.raises(ValueError):
            norm(shear(), "bogus")

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), box=st.sampled_from([math.pi, 2 * math.pi, 5.0]))
    def test_poincare_and_duality(self, seed, box):
        grid = GridSpec(n_per_axis=16, box_length=box)
        u = random_field(grid, rng=np.random.default_rng(seed))
        lam1 = ModeSet(grid).lambda1
        h, v, vp = norm(u, "H"), norm(u, "V"), norm(u, "Vprime")
        assert v**2 >= lam1 * h**2 * (1 - 1e-14)
        assert vp <= h / math.sqrt(lam1) * (1 + 1e-14)
        assert h <= v / math.sqrt(lam1) * (1 + 1e-14)


class TestTruncation:
    def test_idempotent_and_contracting(self, rng):
        m = ModeSet(G16, 8)
        for _ in range(20):
            u = random_field(G16, rng=rng)
            pu = galerkin_truncate(u, m)
            assert np.array_equal(galerkin_truncate(pu, m).coeffs, pu.coeffs)
            for kind in ("H", "V", "Vprime"):
                assert norm(pu, kind) <= norm(u, kind)
            assert norm(pu) < norm(u)

    def test_identity_on_range(self, rng):
        m = ModeSet(G16, 8)
        u = random_field(G16, m, rng)
        assert np.array_equal(galerkin_truncate(u, m).coeffs, u.coeffs)
        assert norm(galerkin_truncate(u, m)) == norm(u)


class TestTransform:
    def test_spike(self):
        vals = np.zeros(G16.field_shape)
        vals[0, 3, 5] = 1.0
        u = transform(vals, "forward", G16)
        mag = np.abs(u.coeffs[0])
        assert np.allclose(mag, mag[0, 0]) and np.all(u.coeffs[1] == 0)
        assert np.abs(transform(u, "inverse") - vals).max() < 1e-15

    def test_sine_two_modes(self):
        x1, x2 = coords(G16)
        u = transform(np.stack([np.sin(x1), 0 * x1]), "forward", G16)
        nz = np.argwhere(np.abs(u.coeffs) > 1e-14)
        assert sorted(map(tuple, nz)) == [(0, 1, 0), (0, 15, 0)]

    @pytest.mark.parametrize("grid", [G16, G3])
    def test_round_trip(self, grid, rng):
        vals = rng.standard_normal(grid.field_shape)
        u = transform(vals, "forward", grid)
        assert u.is_hermitian()
        assert np.abs(transform(u, "inverse") - vals).max() <= 1e-12 * np.abs(vals).max()

    def test_bad_direction(self):
        with pytest.raises(ValueError):
            transform(shear(), "sideways")
