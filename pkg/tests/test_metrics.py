import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nfcodec.errors import DataError
from nfcodec.metrics import bpp, d1_psnr, nn_sq_dists, psnr
from nfcodec.pointcloud_io import PointCloud


def brute_mse(a, b):
    d = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    return d.min(axis=1).mean()


def test_identical_clouds_give_infinite_psnr():
    pc = PointCloud(np.random.default_rng(0).integers(0, 100, (50, 3)), 8)
    rep = d1_psnr(pc, pc)
    assert rep.mse_a_to_b == 0 and math.isinf(rep.psnr_symmetric)


def test_unit_offset_example():
    rep = d1_psnr(PointCloud(np.array([[0, 0, 0]]), 10), PointCloud(np.array([[1, 0, 0]]), 10),
                  peak=1023)
    assert rep.mse_a_to_b == rep.mse_b_to_a == 1.0
    assert rep.psnr_symmetric == pytest.approx(10 * math.log10(3 * 1023 ** 2))
    assert rep.psnr_symmetric == pytest.approx(64.97, abs=0.01)


def test_peak_default_and_convention():
    a = PointCloud(np.array([[0, 0, 0]]), 8)
    b = PointCloud(np.array([[2, 0, 0]]), 8)
    assert d1_psnr(a, b).peak == 255
    assert d1_psnr(a, b, convention="p2").psnr_symmetric == pytest.approx(10 * math.log10(255 ** 2 / 4))


def test_symmetric_uses_worse_direction():
    a = PointCloud(np.array([[0, 0, 0], [10, 0, 0]]), 8)
    b = PointCloud(np.array([[0, 0, 0]]), 8)
    rep = d1_psnr(a, b)
    assert rep.mse_a_to_b == 50.0 and rep.mse_b_to_a == 0.0
    assert rep.psnr_symmetric == rep.psnr_a_to_b


@pytest.mark.parametrize("seed", range(5))
def test_random_pairs_vs_brute_force(seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 64, (500, 3))
    b = rng.integers(0, 64, (500, 3))
    rep = d1_psnr(a, b, peak=63)
    assert rep.mse_a_to_b == brute_mse(a, b)
    assert rep.mse_b_to_a == brute_mse(b, a)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 2000), st.integers(1, 2000))
def test_exact_against_brute_force(seed, na, nb):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 1024, (na, 3))
    b = rng.integers(0, 1024, (nb, 3))
    got = nn_sq_dists(a, b)
    diff = a[:, None, :] - b[None, :, :]
    ref = np.einsum("ijk,ijk->ij", diff, diff).min(axis=1)
    np.testing.assert_array_equal(got, ref)


def test_empty_cloud_is_error():
    with pytest.raises(DataError):
        d1_psnr(PointCloud(np.zeros((0, 3)), 8), PointCloud(np.array([[0, 0, 0]]), 8))


def test_psnr_helper():
    assert math.isinf(psnr(0.0, 255))
    assert psnr(3.0, 1.0) == pytest.approx(0.0)


def test_bpp():
    frames = [PointCloud(np.arange(192).reshape(64, 3), 8)]
    assert bpp(bytes(8), frames) == 1.0
    assert bpp(bytes(8), frames * 2) == 0.5
    with pytest.raises(DataError):
        bpp(bytes(8), [PointCloud(np.zeros((0, 3)), 8)])
