import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relaxns.spectral import (ScalarField, TensorField, TorusGrid, VectorField, curl_tensor, curl_vector,
                              dealias, dealiased_product, divergence, divergence_tensor, gradient, hess_norm,
                              grad_norm, laplacian, make_field, norm, zeros)

TAU = 2 * np.pi


def trig_scalar(grid, k=(1, 2), phase=0.3):
    x1, x2 = grid.x
    return np.sin(TAU * (k[0] * x1 + k[1] * x2) + phase)


def random_band(grid, rng, shape=(), kmax=5):
    """Random real field with modes |k| <= kmax (so every quantity is exactly resolved)."""
    hat = (rng.standard_normal(shape + (grid.n, grid.m)) + 1j * rng.standard_normal(shape + (grid.n, grid.m)))
    hat = np.where(grid.kabs <= kmax, hat, 0)
    return grid.ifft(hat)


def test_grid_rejects_odd_and_tiny():
    for n in (7, 6, 31):
        with pytest.raises(ValueError):
            TorusGrid(n)


def test_fft_roundtrip_and_normalisation(grid32):
    f = trig_scalar(grid32, (1, 0), 0.0)  # sin(2 pi x1)
    hat = grid32.fft(f)
    assert np.allclose(grid32.ifft(hat), f, atol=1e-14)
    # sin = (e - e^-1) / 2i: coefficient of k1 = 1 is -i/2
    assert hat[1, 0] == pytest.approx(-0.5j, abs=1e-14)


def test_first_derivatives_match_analytic(grid32):
    x1, x2 = grid32.x
    f = ScalarField(grid32, np.sin(TAU * x1) * np.cos(2 * TAU * x2))
    g = gradient(f)
    assert g.kind == "vector"
    assert np.allclose(g.values[0], TAU * np.cos(TAU * x1) * np.cos(2 * TAU * x2), atol=1e-11)
    assert np.allclose(g.values[1], -2 * TAU * np.sin(TAU * x1) * np.sin(2 * TAU * x2), atol=1e-11)
    assert np.allclose(laplacian(f).values, -5 * TAU**2 * f.values, atol=1e-10)


def test_tensor_index_conventions(grid32):
    x1, x2 = grid32.x
    v = VectorField(grid32, np.stack([np.sin(TAU * x2), np.cos(TAU * x1)]))
    G = gradient(v)
    # (grad v)_ij = d_i v_j
    assert np.allclose(G.values[1, 0], TAU * np.cos(TAU * x2), atol=1e-11)
    assert np.allclose(G.values[0, 1], -TAU * np.sin(TAU * x1), atol=1e-11)
    assert np.allclose(G.values[0, 0], 0, atol=1e-11)
    # div grad v = lap v and curl grad v = grad curl v
    assert np.allclose(divergence_tensor(G).values, laplacian(v).values, atol=1e-9)
    assert np.allclose(curl_tensor(G).values, gradient(curl_vector(v)).values, atol=1e-9)
    # the transposed gradient has curl zero
    Gt = TensorField(grid32, np.swapaxes(G.values, 0, 1))
    assert np.allclose(curl_tensor(Gt).values, 0, atol=1e-9)


def test_curl_and_divergence_of_taylor_green(grid32):
    x1, x2 = grid32.x
    a, b = TAU * x1, TAU * x2
    u = VectorField(grid32, np.stack([np.sin(a) * np.cos(b), -np.cos(a) * np.sin(b)]))
    assert norm(divergence(u)) < 1e-13
    # omega = d1 u2 - d2 u1 = 2 (2 pi) sin a sin b
    assert np.allclose(curl_vector(u).values, 2 * TAU * np.sin(a) * np.sin(b), atol=1e-11)


def test_inverse_laplacian_and_projection(grid32, rng):
    f = ScalarField(grid32, random_band(grid32, rng))
    sol = grid32.inv_lap_hat(f.hat)
    back = grid32.lap_hat(sol)
    expect = f.hat.copy()
    expect[0, 0] = 0
    assert np.allclose(back, expect, atol=1e-12)
    u = random_band(grid32, rng, (2,))
    P = grid32.project_hat(grid32.fft(u))
    assert np.abs(grid32.div_hat(P)).max() < 1e-12
    assert np.allclose(grid32.project_hat(P), P, atol=1e-14)


def test_dealias_mask_two_thirds(grid32):
    n = grid32.n
    hat = np.ones((n, grid32.m), dtype=complex)
    kept = dealias(ScalarField(grid32, hat=hat)).hat != 0
    k1 = np.abs(grid32.k1) + 0 * grid32.k2
    k2 = np.abs(grid32.k2) + 0 * grid32.k1
    assert np.array_equal(kept, np.maximum(k1, k2) <= n / 3)


def test_dealiased_product_exact_for_low_modes(grid32):
    x1, x2 = grid32.x
    a = ScalarField(grid32, np.cos(TAU * x1))
    b = ScalarField(grid32, np.sin(TAU * 2 * x2))
    assert np.allclose(dealiased_product(a, b).values, a.values * b.values, atol=1e-13)


def test_parseval_norms_against_dense_quadrature(rng):
    coarse = TorusGrid(16)
    f = ScalarField(coarse, random_band(coarse, rng, kmax=4))
    fine = coarse.upsample(f.hat, 8)  # 128^2 samples of the same trigonometric polynomial
    assert norm(f) ** 2 == pytest.approx(np.mean(fine**2), rel=1e-12)
    big = TorusGrid(128)
    F = ScalarField(big, fine)
    assert grad_norm(f) == pytest.approx(grad_norm(F), rel=1e-10)
    assert hess_norm(f) == pytest.approx(hess_norm(F), rel=1e-10)
    assert norm(f, "L4") == pytest.approx(np.mean(fine**4) ** 0.25, rel=1e-12)
    assert norm(f, "Linf") <= np.abs(fine).max() + 1e-12


def test_closed_form_norms_single_mode(grid32):
    f = ScalarField(grid32, trig_scalar(grid32, (1, 0), 0.0))
    assert norm(f) == pytest.approx(math.sqrt(0.5), rel=1e-13)
    assert norm(f, "H1") == pytest.approx(math.sqrt(0.5 + 0.5 * TAU**2), rel=1e-13)
    assert norm(f, "L4") == pytest.approx((3 / 8) ** 0.25, rel=1e-12)
    assert norm(f, "Linf") == pytest.approx(1.0, rel=1e-3)
    with pytest.raises(ValueError):
        norm(f, "H3")


def test_field_validation_and_arithmetic(grid32):
    with pytest.raises(ValueError):
        ScalarField(grid32, np.zeros((2, 32, 32)))
    with pytest.raises(ValueError):
        make_field(grid32, np.zeros((3, 32, 32)))
    z = zeros(grid32, "tensor")
    assert z.kind == "tensor" and norm(z) == 0
    f = ScalarField(grid32, trig_scalar(grid32))
    assert norm(f + f - f * 2.0) < 1e-14
    with pytest.raises(ValueError):
        f + ScalarField(TorusGrid(16), np.zeros((16, 16)))


def test_upsample_keeps_samples(grid32, rng):
    f = random_band(grid32, rng)
    fine = grid32.upsample(grid32.fft(f), 2)
    assert np.allclose(fine[::2, ::2], f, atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), scale=st.floats(-5, 5).filter(lambda s: abs(s) > 1e-3))
def test_norms_homogeneous_and_triangle(seed, scale):
    grid = TorusGrid(16)
    r = np.random.default_rng(seed)
    f = ScalarField(grid, random_band(grid, r, kmax=4))
    g = ScalarField(grid, random_band(grid, r, kmax=4))
    for which in ("L2", "H1", "H2", "L4"):
        assert norm(f * scale, which) == pytest.approx(abs(scale) * norm(f, which), rel=1e-10)
        assert norm(f + g, which) <= norm(f, which) + norm(g, which) + 1e-10


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_helmholtz_identity_property(seed):
    grid = TorusGrid(16)
    u = VectorField(grid, random_band(grid, np.random.default_rng(seed), (2,), kmax=5))
    lhs = grid.h1semi_sq_hat(u.hat)
    rhs = norm(divergence(u)) ** 2 + norm(curl_vector(u)) ** 2
    assert rhs == pytest.approx(lhs, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_derivatives_commute_and_integrate_to_zero(seed):
    grid = TorusGrid(16)
    f = ScalarField(grid, random_band(grid, np.random.default_rng(seed), kmax=4))
    g = gradient(f)
    assert norm(curl_vector(g)) < 1e-10
    assert abs(g.hat[:, 0, 0]).max() < 1e-14
    assert np.allclose(divergence(g).hat, laplacian(f).hat, atol=1e-9)
