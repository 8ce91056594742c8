import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airwaybel.errors import EmptyInputError, ParameterError
from airwaybel.volume import (
    Volume3,
    connected_components,
    largest_component,
    normalize_hu,
    sliding_windows,
)

from oracles import flood_fill_labels, same_partition


class TestVolume3:
    def test_rejects_bad_spacing(self):
        with pytest.raises(ParameterError):
            Volume3(np.zeros((2, 2, 2)), spacing=(1.0, 0.0, 1.0))
        with pytest.raises(ParameterError):
            Volume3(np.zeros((2, 2, 2)), spacing=(1.0, -1.0, 1.0))

    def test_rejects_non_3d(self):
        with pytest.raises(ParameterError):
            Volume3(np.zeros((4, 4)))

    def test_flat_order_is_x_fastest(self):
        v = Volume3(np.arange(8, dtype=np.float32).reshape(2, 2, 2))
        # linear index i = x + nx*(y + ny*z)
        assert v.flat()[1] == v.data[1, 0, 0]
        assert v.flat()[2] == v.data[0, 1, 0]
        assert v.flat()[4] == v.data[0, 0, 1]


class TestNormalizeHu:
    def test_clip_bounds(self):
        v = np.array([[[-1000, 600, -200, -2000, 3000]]], dtype=np.int16)
        out = normalize_hu(v, -1000, 600)
        assert out[0, 0, 0] == 0.0
        assert out[0, 0, 1] == 1.0
        assert out[0, 0, 2] == 0.5
        assert out[0, 0, 3] == 0.0
        assert out[0, 0, 4] == 1.0

    def test_rejects_bad_range(self):
        with pytest.raises(ParameterError):
            normalize_hu(np.zeros((1, 1, 1)), 600, -1000)
        with pytest.raises(ParameterError):
            normalize_hu(np.zeros((1, 1, 1)), 5, 5)

    @given(st.lists(st.integers(-3000, 3000), min_size=2, max_size=50))
    def test_monotone(self, values):
        v = np.array(values, dtype=np.float64).reshape(1, 1, -1)
        out = normalize_hu(v, -1000, 600)
        order = np.argsort(v.ravel(), kind="stable")
        assert (np.diff(out.ravel()[order]) >= 0).all()

    @given(st.lists(st.integers(-3000, 3000), min_size=1, max_size=30))
    def test_idempotent_through_unit_bounds(self, values):
        v = np.array(values, dtype=np.float64).reshape(1, -1, 1)
        once = normalize_hu(v, -1000, 600)
        twice = normalize_hu(once, 0.0, 1.0)
        assert np.array_equal(once, twice)


class TestSlidingWindows:
    def test_quarter_overlap_512(self):
        grid = sliding_windows((512, 512, 512), (256, 256, 256), 0.25)
        assert grid.starts[0] == (0, 192, 256)

    def test_single_window(self):
        grid = sliding_windows((256, 256, 256), (256, 256, 256), 0.25)
        assert grid.starts == ((0,), (0,), (0,))
        assert grid.origins == [(0, 0, 0)]

    def test_clamped_final_start(self):
        grid = sliding_windows((300, 300, 300), (256, 256, 256), 0.25)
        assert grid.starts[0] == (0, 44)

    def test_patch_too_large(self):
        with pytest.raises(ParameterError):
            sliding_windows((100, 100, 100), (128, 100, 100), 0.25)

    def test_patch_and_overlap_validation(self):
        with pytest.raises(ParameterError):
            sliding_windows((10, 10, 10), (0, 10, 10), 0.25)
        with pytest.raises(ParameterError):
            sliding_windows((10, 10, 10), (5, 5, 5), 1.0)
        with pytest.raises(ParameterError):
            sliding_windows((10, 10, 10), (5, 5, 5), -0.1)

    @given(
        st.tuples(st.integers(1, 64), st.integers(1, 64), st.integers(1, 64)),
        st.integers(1, 64),
        st.floats(0.0, 0.9),
    )
    @settings(max_examples=200)
    def test_total_coverage(self, dims, p, overlap):
        patch = tuple(min(p, n) for n in dims)
        grid = sliding_windows(dims, patch, overlap)
        for axis, (n, pp) in enumerate(zip(dims, patch)):
            starts = grid.starts[axis]
            assert all(0 <= s <= n - pp for s in starts)
            covered = np.zeros(n, dtype=bool)
            for s in starts:
                covered[s : s + pp] = True
            assert covered.all()


class TestConnectedComponents:
    def test_two_isolated_voxels(self):
        m = np.zeros((5, 5, 5), dtype=np.uint8)
        m[0, 0, 0] = 1
        m[4, 4, 4] = 1
        _, count = connected_components(m, 26)
        assert count == 2

    def test_solid_cube(self):
        m = np.ones((4, 4, 4), dtype=np.uint8)
        for conn in (6, 18, 26):
            _, count = connected_components(m, conn)
            assert count == 1

    def test_bad_connectivity(self):
        with pytest.raises(ParameterError):
            connected_components(np.zeros((2, 2, 2), dtype=np.uint8), 4)

    @pytest.mark.parametrize("conn", [6, 18, 26])
    def test_matches_flood_fill_small(self, conn):
        rng = np.random.default_rng(11)
        for _ in range(40):
            m = (rng.random((8, 8, 8)) < rng.uniform(0.05, 0.6)).astype(np.uint8)
            got, k_got = connected_components(m, conn)
            want, k_want = flood_fill_labels(m, conn)
            assert k_got == k_want
            assert same_partition(got, want)

    def test_matches_flood_fill_16cubed(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            m = (rng.random((16, 16, 16)) < 0.3).astype(np.uint8)
            got, k_got = connected_components(m, 26)
            want, k_want = flood_fill_labels(m, 26)
            assert k_got == k_want
            assert same_partition(got, want)


class TestLargestComponent:
    def test_picks_bigger(self):
        m = np.zeros((20, 5, 5), dtype=np.uint8)
        m[0:5, 0, 0] = 1  # 5 voxels
        m[10:19, 0, 0] = 1  # 9 voxels
        out = largest_component(m, 26)
        assert out.sum() == 9
        assert out[10, 0, 0] == 1 and out[0, 0, 0] == 0

    def test_single_component_identity(self):
        m = np.zeros((6, 6, 6), dtype=np.uint8)
        m[2:5, 2:5, 2:5] = 1
        assert np.array_equal(largest_component(m, 26), m)

    def test_tie_breaks_to_first_raster_voxel(self):
        m = np.zeros((20, 5, 5), dtype=np.uint8)
        m[0:7, 0, 0] = 1
        m[10:17, 0, 0] = 1
        out = largest_component(m, 26)
        assert out.sum() == 7
        assert out[0, 0, 0] == 1

    def test_empty_raises(self):
        with pytest.raises(EmptyInputError):
            largest_component(np.zeros((3, 3, 3), dtype=np.uint8), 26)

    def test_subset_and_maximal(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            m = (rng.random((10, 10, 10)) < 0.2).astype(np.uint8)
            if m.sum() == 0:
                continue
            out = largest_component(m, 26)
            assert (out <= m).all()
            _, count = connected_components(out, 26)
            assert count == 1
