import numpy as np
import pytest

from airwaybel.errors import ParameterError
from airwaybel.losses import (
    GAMMA_GRID,
    PRESETS,
    R_GRID,
    LossParams,
    bel_grad,
    bel_loss,
    dice_loss,
    gul_loss,
    is_degenerate,
    tversky_loss,
    weight_map,
)
from airwaybel.morphology import boundary, edt
from airwaybel.volume import require_mask

from oracles import dice_loss_loop, ratio_loss_loop


def random_instance(rng, shape=(6, 6, 6), density=0.35):
    g = (rng.random(shape) < density).astype(np.uint8)
    p = rng.random(shape)
    return p, g


class TestLossParams:
    def test_default_derivations(self):
        params = LossParams.default(alpha=0.2)
        assert params.beta == pytest.approx(0.8)
        assert params.mu == pytest.approx(0.75)

    def test_validation(self):
        with pytest.raises(ParameterError):
            LossParams(alpha=0.0)
        with pytest.raises(ParameterError):
            LossParams(alpha=0.3, beta=0.8)
        with pytest.raises(ParameterError):
            LossParams.default(r=0.0)
        with pytest.raises(ParameterError):
            LossParams.default(gamma=-1.0)
        with pytest.raises(ParameterError):
            LossParams.default(mode="radial")

    def test_presets(self):
        assert PRESETS["bel_0.6_r0.7"].gamma == 0.6
        assert PRESETS["bel_0.8_r0.7"].gamma == 0.8
        assert all(pp.r == 0.7 for pp in PRESETS.values())
        assert set(GAMMA_GRID) == {0.4, 0.6, 0.8, 1.0}
        assert set(R_GRID) == {0.5, 0.7}


def solid_ball(radius=4, pad=2):
    n = 2 * (radius + pad) + 1
    c = radius + pad
    x, y, z = np.mgrid[0:n, 0:n, 0:n]
    return ((x - c) ** 2 + (y - c) ** 2 + (z - c) ** 2 <= radius * radius).astype(np.uint8)


class TestWeightMap:
    def test_background_exactly_one(self):
        g = solid_ball()
        w = weight_map(g, LossParams.default(gamma=1.0))
        assert (w[g == 0] == 1.0).all()

    def test_boundary_voxel_weight_one(self):
        g = solid_ball()
        w = weight_map(g, LossParams.default(gamma=1.0))
        b = boundary(g)
        assert np.abs(w[b != 0] - 1.0).max() == 0.0

    def test_deepest_voxel_quarter(self):
        g = solid_ball()
        params = LossParams.default(alpha=0.2, gamma=1.0)
        w = weight_map(g, params)
        d = edt(boundary(g), domain=g)
        deepest = d == d.max()
        assert np.abs(w[deepest] - 0.25).max() <= 1e-12

    def test_breakage_scales_by_theta(self):
        g = solid_ball()
        params = LossParams.default(alpha=0.2, gamma=1.0)
        B = g.astype(np.float64)  # B = 1 on the whole foreground
        w0 = weight_map(g, params)
        w1 = weight_map(g, params, B=B)
        d = edt(boundary(g), domain=g)
        deepest = d == d.max()
        assert np.abs(w1[deepest] - 0.25 * 1.05).max() <= 1e-12
        assert np.abs(w1[g != 0] - w0[g != 0] * 1.05).max() <= 1e-12
        assert (w1[g == 0] == 1.0).all()

    def test_foreground_range(self):
        rng = np.random.default_rng(50)
        params = LossParams.default(gamma=0.6)
        for _ in range(10):
            g = (rng.random((7, 7, 7)) < 0.4).astype(np.uint8)
            if g.sum() == 0:
                continue
            B = rng.random((7, 7, 7)) * g
            w = weight_map(g, params, B=B)
            fg = g != 0
            assert (w[fg] >= (1.0 - params.mu) - 1e-12).all()
            assert (w[fg] <= (1.0 + params.theta) + 1e-12).all()

    def test_degenerate_all_boundary_mask(self):
        # single voxel: d_max = 0, ratio defined as 0 => weights are 1 (+theta B)
        g = np.zeros((5, 5, 5), dtype=np.uint8)
        g[2, 2, 2] = 1
        w = weight_map(g, LossParams.default(gamma=1.0))
        assert w[2, 2, 2] == 1.0

    def test_uniform_mode(self):
        g = solid_ball()
        w = weight_map(g, LossParams.default(mode="uniform"))
        assert (w == 1.0).all()

    def test_per_component_dmax(self):
        # two balls of different radii; per-component normalization makes the
        # deepest voxel of EACH ball hit the minimum weight
        g = np.zeros((26, 13, 13), dtype=np.uint8)
        x, y, z = np.mgrid[0:26, 0:13, 0:13]
        g[((x - 6) ** 2 + (y - 6) ** 2 + (z - 6) ** 2) <= 16] = 1   # radius 4
        g[((x - 19) ** 2 + (y - 6) ** 2 + (z - 6) ** 2) <= 4] = 1   # radius 2
        params = LossParams.default(alpha=0.2, gamma=1.0)
        w_global = weight_map(g, params)
        w_per = weight_map(g, params, per_component_dmax=True)
        small_center = w_per[19, 6, 6]
        assert small_center == pytest.approx(0.25, abs=1e-12)
        # globally the small ball's center is shallower than d_max, so it
        # weighs more than 0.25
        assert w_global[19, 6, 6] > 0.25 + 0.05
        assert (w_per[g == 0] == 1.0).all()

    def test_shape_mismatch(self):
        g = np.zeros((3, 3, 3), dtype=np.uint8)
        with pytest.raises(ParameterError):
            weight_map(g, LossParams.default(), B=np.zeros((3, 3, 4)))


class TestBelLoss:
    def test_exact_match_is_zero(self):
        rng = np.random.default_rng(51)
        g = (rng.random((6, 6, 6)) < 0.4).astype(np.uint8)
        g[0, 0, 0] = 1
        params = LossParams.default()
        w = weight_map(g, params)
        assert bel_loss(g.astype(np.float64), g, w, params) == 0.0

    def test_all_zero_prediction_is_one(self):
        g = solid_ball(radius=2, pad=1)
        params = LossParams.default()
        assert bel_loss(np.zeros(g.shape), g, None, params) == 1.0

    def test_degenerate_returns_zero(self):
        z = np.zeros((4, 4, 4))
        params = LossParams.default()
        assert is_degenerate(z, require_mask(z))
        assert bel_loss(z, require_mask(z), None, params) == 0.0

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(52)
        params = LossParams.default(r=0.7)
        for _ in range(20):
            p, g = random_instance(rng)
            if g.sum() == 0:
                continue
            w = weight_map(g, params)
            got = bel_loss(p, g, w, params)
            want = ratio_loss_loop(p, g, w, params.alpha, params.beta, params.r)
            assert got == pytest.approx(want, rel=1e-12)

    def test_r1_loss_in_unit_interval(self):
        rng = np.random.default_rng(53)
        params = LossParams.default(r=1.0)
        for _ in range(50):
            p, g = random_instance(rng)
            w = weight_map(g, params) if g.sum() else None
            val = bel_loss(p, g, w, params)
            assert 0.0 <= val <= 1.0

    def test_monotone_in_foreground_probability(self):
        rng = np.random.default_rng(54)
        params = LossParams.default(r=0.7)
        p, g = random_instance(rng)
        g[2, 2, 2] = 1
        w = weight_map(g, params)
        base = bel_loss(p, g, w, params)
        p2 = p.copy()
        p2[2, 2, 2] = min(1.0, p[2, 2, 2] + 0.3)
        assert bel_loss(p2, g, w, params) <= base + 1e-15


class TestBelGrad:
    def test_background_gradient_positive(self):
        rng = np.random.default_rng(55)
        p, g = random_instance(rng)
        g[1, 1, 1] = 0
        g[3, 3, 3] = 1  # keep the numerator positive
        p[3, 3, 3] = 0.9
        params = LossParams.default()
        w = weight_map(g, params)
        grad = bel_grad(p, g, w, params)
        assert grad[1, 1, 1] > 0.0

    def test_finite_at_binary_extremes_r1(self):
        g = solid_ball(radius=2, pad=1)
        params = LossParams.default(r=1.0)
        grad = bel_grad(g.astype(np.float64), g, None, params)
        assert np.isfinite(grad).all()

    def test_finite_at_zero_prediction_fractional_r(self):
        g = solid_ball(radius=2, pad=1)
        params = LossParams.default(r=0.5)
        grad = bel_grad(np.zeros(g.shape), g, None, params)
        assert np.isfinite(grad).all()

    @pytest.mark.parametrize("r", [0.5, 0.7, 1.0])
    @pytest.mark.parametrize("gamma", [0.4, 1.0])
    def test_matches_finite_differences(self, r, gamma):
        rng = np.random.default_rng(int(r * 100 + gamma * 10))
        h = 1e-5
        for _ in range(5):
            g = (rng.random((5, 5, 5)) < 0.4).astype(np.uint8)
            g[2, 2, 2] = 1
            p = rng.uniform(0.01, 0.99, (5, 5, 5))
            params = LossParams.default(r=r, gamma=gamma)
            w = weight_map(g, params)
            grad = bel_grad(p, g, w, params)
            for idx in [(0, 0, 0), (2, 2, 2), (4, 4, 4), (1, 3, 2)]:
                pp = p.copy()
                pp[idx] = p[idx] + h
                pm = p.copy()
                pm[idx] = p[idx] - h
                fd = (bel_loss(pp, g, w, params) - bel_loss(pm, g, w, params)) / (2 * h)
                denom = max(abs(fd), abs(grad[idx]), 1e-10)
                assert abs(fd - grad[idx]) / denom <= 1e-4


class TestDiceTverskyGul:
    def test_dice_identities(self):
        g = solid_ball(radius=2, pad=1)
        assert dice_loss(g.astype(np.float64), g) == 0.0
        assert dice_loss(np.zeros(g.shape), g) == 1.0

    def test_dice_matches_loop(self):
        rng = np.random.default_rng(56)
        for _ in range(20):
            p, g = random_instance(rng)
            assert dice_loss(p, g) == pytest.approx(dice_loss_loop(p, g), rel=1e-12, abs=1e-15)

    def test_tversky_equals_dice_on_binary(self):
        rng = np.random.default_rng(57)
        for _ in range(30):
            g = (rng.random((6, 6, 6)) < 0.4).astype(np.uint8)
            p = (rng.random((6, 6, 6)) < 0.4).astype(np.float64)
            t = tversky_loss(p, g, 0.5, 0.5)
            d = dice_loss(p, g)
            assert abs(t - d) <= 1e-12

    def test_tversky_zero_at_match(self):
        g = solid_ball(radius=2, pad=1)
        assert tversky_loss(g.astype(np.float64), g) == 0.0

    def test_tversky_matches_loop(self):
        rng = np.random.default_rng(58)
        for _ in range(20):
            p, g = random_instance(rng)
            w = np.ones(p.shape)
            got = tversky_loss(p, g, 0.3, 0.7)
            want = ratio_loss_loop(p, g, w, 0.3, 0.7, 1.0)
            assert got == pytest.approx(want, rel=1e-12, abs=1e-15)

    def test_gul_zero_at_match(self):
        g = solid_ball(radius=3, pad=2)
        params = LossParams.default()
        assert gul_loss(g.astype(np.float64), g, params) == 0.0

    def test_gul_single_voxel_reduces_to_unit_weights(self):
        g = np.zeros((5, 5, 5), dtype=np.uint8)
        g[2, 2, 2] = 1
        rng = np.random.default_rng(59)
        p = rng.random((5, 5, 5))
        params = LossParams.default(r=0.7)
        got = gul_loss(p, g, params)
        want = bel_loss(p, g, None, params)
        assert got == pytest.approx(want, rel=1e-15)
