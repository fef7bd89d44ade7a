import numpy as np
import pytest

from fbmhd.elliptic_core import (EllipticWorkspace, boundary_inner, dtn, dtn_inverse, dtn_power,
                                 harmonic_extension, inverse_laplacian, normal_trace_grad, pcg,
                                 poisson_dirichlet)
from fbmhd.errors import NonZeroMean, SolverDiverged

from conftest import bumpy_chart, disk_chart


def test_pcg_solves_spd_system(rng):
    A = rng.normal(size=(20, 20))
    A = A @ A.T + 20 * np.eye(20)
    b = rng.normal(size=20)
    x, it = pcg(lambda v: A @ v, b, lambda r: r, 1e-12, 200)
    assert np.allclose(A @ x, b, atol=1e-9)
    assert it <= 40


def test_pcg_reports_divergence(rng):
    A = np.diag(np.logspace(0, 8, 50))
    with pytest.raises(SolverDiverged):
        pcg(lambda v: A @ v, np.ones(50), lambda r: r, 1e-14, 3)


def test_poisson_disk_quadratic():
    ch = disk_chart(32, 32)
    ws = EllipticWorkspace(ch)
    u = poisson_dirichlet(ws, -4.0).values
    r2 = ch.x**2 + ch.y**2
    assert np.max(np.abs(u - (1 - r2))) < 1e-9


def test_harmonic_extension_reproduces_harmonic_polynomial():
    ch = bumpy_chart(32, 32)
    ws = EllipticWorkspace(ch)
    exact = ch.x**2 - ch.y**2
    u = harmonic_extension(ws, exact[-1]).values
    assert np.max(np.abs(u - exact)) < 5e-4


@pytest.mark.parametrize("k", [1, 2, 5])
def test_dtn_disk_symbol(k):
    ch = disk_chart(64, 64)
    ws = EllipticWorkspace(ch)
    g = np.cos(k * ch.theta)
    assert np.max(np.abs(dtn(ws, g).values - k * g)) / k < 1e-3


def test_dtn_kills_constants_and_power():
    ch = disk_chart(32, 32)
    ws = EllipticWorkspace(ch)
    assert np.max(np.abs(dtn(ws, np.full(32, 3.0)).values)) < 1e-9
    g = np.cos(2 * ch.theta)
    assert np.allclose(dtn_power(ws, g, 0).values, g)
    assert np.max(np.abs(dtn_power(ws, g, 2).values - 4 * g)) < 4e-3


def test_dtn_symmetric_and_nonnegative(rng):
    ch = bumpy_chart(32, 32)
    ws = EllipticWorkspace(ch)
    f, g = rng.normal(size=(2, 32))
    a = boundary_inner(ws, dtn(ws, f), g)
    b = boundary_inner(ws, f, dtn(ws, g))
    assert abs(a - b) <= 1e-8 * (abs(a) + 1)
    assert boundary_inner(ws, dtn(ws, f), f) > 0


def test_green_identity_matches_dirichlet_energy(rng):
    ch = bumpy_chart(32, 32)
    ws = EllipticWorkspace(ch)
    g = np.cos(3 * ch.theta) + 0.5 * np.sin(ch.theta)
    u = ws.solve_dirichlet(0.0, g)
    assert ws.energy(u) == pytest.approx(boundary_inner(ws, dtn(ws, g), g), rel=1e-8)


def test_dtn_inverse_roundtrip_and_mean_check(rng):
    ch = bumpy_chart(32, 32)
    ws = EllipticWorkspace(ch)
    f = np.cos(2 * ch.theta) + 0.3 * np.sin(5 * ch.theta)
    w = ch.boundary_weight
    f = f - np.sum(f * w) / np.sum(w)
    g = dtn_inverse(ws, f)
    assert np.max(np.abs(dtn(ws, g).values - f)) < 1e-8
    with pytest.raises(NonZeroMean):
        dtn_inverse(ws, np.ones(32))


def test_disk_dtn_inverse_symbol():
    ch = disk_chart(64, 64)
    ws = EllipticWorkspace(ch)
    g = dtn_inverse(ws, np.cos(3 * ch.theta)).values
    assert np.max(np.abs(g - np.cos(3 * ch.theta) / 3)) < 1e-3


def test_normal_trace_routes_agree():
    ch = disk_chart(64, 64)
    ws = EllipticWorkspace(ch)
    u = inverse_laplacian(ws, 1.0).values  # (r^2 - 1) / 4, normal derivative 1/2
    green = normal_trace_grad(ws, u, 1.0).values
    onesided = normal_trace_grad(ws, u).values
    assert np.allclose(green, 0.5, atol=1e-9)
    assert np.allclose(onesided, 0.5, atol=1e-3)
