import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from connscale.resample import (SUPPORTED_FACTORS, UpscaleConfig, factor_tag, is_supported,
                                output_size, upscale, upscale_bilinear, upscale_nearest)


def ref_nearest(m, r):
    n = m.shape[0]
    n_out = round(n * r)
    out = np.empty((n_out, n_out))
    for u in range(n_out):
        for v in range(n_out):
            i = min(int(math.floor((u + 0.5) / r)), n - 1)
            j = min(int(math.floor((v + 0.5) / r)), n - 1)
            out[u, v] = m[i, j]
    return out


def ref_bilinear(m, r):
    n = m.shape[0]
    n_out = round(n * r)

    def coord(u):
        s = min(max((u + 0.5) / r - 0.5, 0.0), n - 1)
        i = int(math.floor(s))
        return i, min(i + 1, n - 1), s - i

    out = np.empty((n_out, n_out))
    for u in range(n_out):
        i0, i1, a = coord(u)
        for v in range(n_out):
            j0, j1, b = coord(v)
            out[u, v] = ((1 - a) * (1 - b) * m[i0, j0] + (1 - a) * b * m[i0, j1]
                         + a * (1 - b) * m[i1, j0] + a * b * m[i1, j1])
    return out


@pytest.mark.parametrize("r", SUPPORTED_FACTORS)
def test_matches_reference(r):
    rng = np.random.default_rng(int(r * 10))
    m = rng.uniform(-1, 1, (8, 8))
    np.testing.assert_array_equal(upscale_nearest(m, r), ref_nearest(m, r))
    np.testing.assert_allclose(upscale_bilinear(m, r), ref_bilinear(m, r), rtol=0, atol=1e-12)


def test_ramp_values():
    out = upscale_bilinear(np.array([[0.0, 1.0], [0.0, 1.0]]), 2.0)
    np.testing.assert_allclose(out[0], [0.0, 0.25, 0.75, 1.0], atol=1e-15)


@pytest.mark.parametrize("mode", ["nearest", "bilinear"])
def test_identity_bitwise(mode):
    m = np.random.default_rng(0).normal(size=(6, 6, 3))
    out = upscale(m, 1.0, mode)
    assert out.tobytes() == m.tobytes() and out is not m


@pytest.mark.parametrize("r", [2, 3, 4])
def test_integer_block_replication(r):
    m = np.arange(16.0).reshape(4, 4)
    np.testing.assert_array_equal(upscale_nearest(m, r), np.kron(m, np.ones((r, r))))


def test_bands_independent():
    rng = np.random.default_rng(3)
    t = rng.normal(size=(5, 5, 4))
    for mode in ("nearest", "bilinear"):
        full = upscale(t, 3.0, mode)
        for b in range(4):
            np.testing.assert_array_equal(full[:, :, b], upscale(t[:, :, b], 3.0, mode))


@settings(max_examples=50, deadline=None)
@given(r=st.sampled_from(SUPPORTED_FACTORS), c=st.sampled_from([2, 4, 6, 8]),
       value=st.floats(-1, 1), seed=st.integers(0, 2**32 - 1))
def test_bilinear_constant_and_range(r, c, value, seed):
    const = np.full((c, c), value)
    assert np.all(upscale_bilinear(const, r) == value)
    m = np.random.default_rng(seed).uniform(-1, 1, (c, c))
    out = upscale_bilinear(m, r)
    assert out.min() >= m.min() and out.max() <= m.max()
    assert set(np.unique(upscale_nearest(m, r))) <= set(np.unique(m))


def test_output_sizes_and_errors():
    assert [output_size(32, r) for r in SUPPORTED_FACTORS] == [32, 48, 64, 80, 96, 112, 128]
    with pytest.raises(ValueError, match="integral"):
        output_size(5, 1.5)
    with pytest.raises(ValueError):
        UpscaleConfig(0.5)
    with pytest.raises(ValueError):
        UpscaleConfig(2.0, "bicubic")
    with pytest.raises(ValueError):
        upscale(np.zeros((2, 2)), 2.0, "cubic")
    with pytest.raises(ValueError):
        upscale(np.zeros(4), 2.0)


def test_tags():
    assert [factor_tag(r) for r in SUPPORTED_FACTORS] == ["1", "1p5", "2", "2p5", "3", "3p5", "4"]
    assert is_supported(2.5) and not is_supported(2.25)
    assert UpscaleConfig(2.5, "bilinear").output_size(8) == 20


def test_four_sample_ramp():
    ramp = np.tile([0.0, 1.0, 2.0, 3.0], (4, 1))
    out = upscale_bilinear(ramp, 2.0)
    np.testing.assert_allclose(out[0], [0, 0.25, 0.75, 1.25, 1.75, 2.25, 2.75, 3], atol=1e-15)
    np.testing.assert_array_equal(out, np.tile(out[0], (8, 1)))


@pytest.mark.parametrize("r", SUPPORTED_FACTORS)
def test_symmetry_preserved(r):
    m = np.random.default_rng(9).uniform(-1, 1, (6, 6))
    m = m + m.T
    assert np.array_equal(upscale_nearest(m, r), upscale_nearest(m, r).T)
    b = upscale_bilinear(m, r)
    np.testing.assert_allclose(b, b.T, atol=1e-12)
