import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bfseg.errors import DimensionError, DomainError
from bfseg.label_pyramid import (
    DECODER_STRIDES,
    block_average,
    build_mask_pyramid,
    downsample_label,
    purity_mask,
)


def brute_block_mean(y, f):
    h, w = y.shape
    out = np.zeros((h // f, w // f))
    for i in range(h // f):
        for j in range(w // f):
            total = 0
            for a in range(i * f, (i + 1) * f):
                for b in range(j * f, (j + 1) * f):
                    total += int(y[a, b])
            out[i, j] = total / (f * f)
    return out


def brute_pure(y, f):
    h, w = y.shape
    out = np.zeros((h // f, w // f), dtype=np.uint8)
    for i in range(h // f):
        for j in range(w // f):
            block = y[i * f : (i + 1) * f, j * f : (j + 1) * f]
            out[i, j] = len(set(block.ravel().tolist())) == 1
    return out


class TestDownsample:
    def test_zero(self):
        assert np.array_equal(downsample_label(np.zeros((4, 4), int), 2), np.zeros((2, 2)))

    def test_ones(self):
        assert np.array_equal(downsample_label(np.ones((4, 4), int), 2), np.ones((2, 2)))

    def test_corner_block(self):
        y = np.zeros((4, 4), int)
        y[:2, :2] = 1
        expected = brute_block_mean(y, 2)
        assert np.array_equal(expected, [[1, 0], [0, 0]])
        assert np.array_equal(downsample_label(y, 2), expected)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(3)
        y = (rng.random((32, 64)) < 0.4).astype(np.uint8)
        for f in (2, 4, 8, 16, 32):
            assert np.array_equal(downsample_label(y, f), brute_block_mean(y, f))

    def test_batched(self):
        rng = np.random.default_rng(0)
        y = (rng.random((3, 32, 32)) < 0.5).astype(np.uint8)
        out = downsample_label(y, 8)
        for k in range(3):
            assert np.array_equal(out[k], downsample_label(y[k], 8))

    def test_non_divisible(self):
        with pytest.raises(DimensionError):
            downsample_label(np.zeros((6, 8), int), 4)

    def test_non_binary(self):
        y = np.zeros((4, 4))
        y[0, 0] = 0.5
        with pytest.raises(DomainError):
            downsample_label(y, 2)

    def test_bad_factor(self):
        with pytest.raises(DimensionError):
            downsample_label(np.zeros((12, 12), int), 3)


class TestPurityMask:
    def test_pure_building_and_background(self):
        assert np.array_equal(purity_mask(np.array([[1.0, 0], [0, 0]])), np.ones((2, 2)))

    def test_fractional_is_hybrid(self):
        assert np.array_equal(purity_mask(np.full((2, 2), 0.25)), np.zeros((2, 2)))

    def test_all_background_valid(self):
        assert purity_mask(np.zeros((3, 5))).all()

    def test_factor_one_all_ones(self):
        y = (np.random.default_rng(1).random((8, 8)) < 0.5).astype(int)
        assert purity_mask(downsample_label(y, 1)).all()

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            purity_mask(np.array([[1.5]]))
        with pytest.raises(DomainError):
            purity_mask(np.array([[-0.25]]))


class TestMaskPyramid:
    def test_all_building(self):
        pyr = build_mask_pyramid(np.ones((64, 64), int))
        assert pyr.strides == DECODER_STRIDES
        for s in DECODER_STRIDES:
            assert pyr.soft_label(s).shape == (64 // s, 64 // s)
            assert (pyr.soft_label(s) == 1).all() and pyr.mask(s).all()

    def test_aligned_building_is_pure(self):
        y = np.zeros((64, 64), int)
        y[:32, :32] = 1
        pyr = build_mask_pyramid(y)
        for s in DECODER_STRIDES:
            assert np.array_equal(pyr.mask(s), brute_pure(y, s))
            assert pyr.mask(s).all()

    def test_single_pixel(self):
        y = np.zeros((64, 64), int)
        y[10, 37] = 1
        pyr = build_mask_pyramid(y)
        for s in DECODER_STRIDES:
            m = pyr.mask(s)
            assert pyr[s].n_hybrid == 1
            assert m.sum() == m.size - 1
            assert m[10 // s, 37 // s] == 0

    def test_requires_stride_32(self):
        with pytest.raises(DimensionError):
            build_mask_pyramid(np.zeros((48, 64), int))


binary_rasters = st.tuples(st.sampled_from([32, 64]), st.sampled_from([32, 64]), st.integers(0, 2**32 - 1), st.floats(0, 1))


@settings(max_examples=60, deadline=None)
@given(binary_rasters)
def test_oracle_equivalence(args):
    h, w, seed, density = args
    rng = np.random.default_rng(seed)
    # blocky rasters so that pure blocks of both classes actually occur
    cell = int(rng.choice([1, 2, 4, 8]))
    coarse = (rng.random((h // cell, w // cell)) < density).astype(np.uint8)
    y = np.kron(coarse, np.ones((cell, cell), np.uint8))
    for f in (2, 4, 8, 16, 32):
        y_down = downsample_label(y, f)
        m = purity_mask(y_down)
        assert np.array_equal(m, brute_pure(y, f))
        # pure pixels carry the common source value
        common = y[:: f, :: f]
        assert np.array_equal(y_down[m == 1], common[m == 1].astype(float))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_composition(seed):
    rng = np.random.default_rng(seed)
    y = (rng.random((64, 64)) < 0.5).astype(np.uint8)
    for f in (2, 4, 8, 16):
        twice = block_average(downsample_label(y, f), 2)
        assert np.array_equal(twice, downsample_label(y, 2 * f))


@pytest.mark.parametrize("value", [0, 1])
def test_constant_input_idempotent(value):
    y = np.full((64, 32), value, np.uint8)
    for f in (1, 2, 4, 8, 16, 32):
        d = downsample_label(y, f)
        assert (d == value).all()
        assert purity_mask(d).all()
