"""Equivalence of the pure and compiled keystream kernels."""

import hashlib
import struct

import numpy as np
import pytest

from poa import kernels
from poa.kernels import pure

try:
    from poa import _accel
except ImportError:
    _accel = None

SEED = bytes(range(32))

needs_accel = pytest.mark.skipif(_accel is None, reason="compiled kernel not built")


def test_pure_words_match_hashlib():
    words = pure.keystream_words(SEED, 7, 5, 3)
    for i in range(3):
        digest = hashlib.sha3_256(SEED + struct.pack("<Q", (7 << 32) | (5 + i))).digest()
        assert words[4 * i : 4 * i + 4].tobytes() == digest


@needs_accel
def test_accel_words_bit_identical_to_pure():
    # spans the 8-wide, 4-wide and scalar tail paths
    for n in (1, 2, 3, 4, 5, 8, 9, 16, 67):
        w_p = pure.keystream_words(SEED, 3, 11, n)
        w_a = _accel.keystream_words(SEED, 3, 11, n)
        assert np.array_equal(w_p, w_a)


@needs_accel
def test_accel_floats_within_contract():
    for count in (1, 2, 3, 7, 1001, 4096):
        g_p = pure.gaussians(SEED, count, 2)
        g_a = _accel.gaussians(SEED, count, 2)
        assert np.allclose(g_p, g_a, rtol=0.0, atol=1e-9)
        u_p = pure.uniforms(SEED, count, 2)
        u_a = _accel.uniforms(SEED, count, 2)
        assert np.array_equal(u_p, u_a)  # integer-derived, no transcendentals


@needs_accel
def test_gaussian_dot_matches_rows():
    w = np.linspace(-1.0, 1.0, 512)
    dots = _accel.gaussian_dot(SEED, 1, 40, w)
    rows = _accel.gaussian_rows(SEED, 1, 40, 512)
    assert np.allclose(dots, rows @ w, rtol=1e-12, atol=1e-12)


def test_pure_gaussian_dot_matches_rows():
    w = np.linspace(-1.0, 1.0, 128)
    dots = pure.gaussian_dot(SEED, 5, 10, w)
    rows = pure.gaussian_rows(SEED, 5, 10, 128)
    assert np.allclose(dots, rows @ w, rtol=1e-12, atol=1e-12)


def test_substreams_are_disjoint():
    a = pure.gaussians(SEED, 64, 0)
    b = pure.gaussians(SEED, 64, 1)
    assert not np.allclose(a, b)


def test_uniforms_in_open_interval():
    u = kernels.uniforms(SEED, 10000, 9)
    assert np.all(u > 0.0) and np.all(u < 1.0)


def test_bad_seed_rejected():
    with pytest.raises(ValueError):
        kernels.gaussians(b"short", 4, 0)
    with pytest.raises(ValueError):
        kernels.gaussians(SEED, 4, 2 ** 32)
