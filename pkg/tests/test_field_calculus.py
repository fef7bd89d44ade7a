import numpy as np
import pytest

from fbmhd.errors import ExtrapolationTooFar
from fbmhd.field_calculus import (differential, directional, div_free_projection, divergence_residual,
                                  fractional_proxy, hodge_split, integrate, irrotational_part,
                                  l2_norm, leibniz_residual, operators, rot_projection, sample,
                                  sobolev_norm, tangency_residual, transfer)
from fbmhd.fields import BoundaryFn, ScalarField, VectorField
from fbmhd.surface_geometry import DomainChart, build_surface

from conftest import bumpy_chart, disk_chart


def rotation(ch):
    return VectorField.from_function(ch, lambda x, y: (-y, x))


def test_grad_of_linear_and_hessian_of_quadratic(bumpy):
    g = differential(ScalarField(bumpy, bumpy.x), "grad").values
    assert np.allclose(g[0], 1, atol=1e-12) and np.allclose(g[1], 0, atol=1e-12)
    H = differential(ScalarField(bumpy, bumpy.x**2), "hessian")
    assert np.allclose(H[0, 0], 2, atol=1e-9) and np.allclose(H[1, 1], 0, atol=1e-9)
    assert np.allclose(H[0, 1], 0, atol=1e-9)


def test_rotation_curl_and_div(bumpy):
    v = rotation(bumpy)
    assert np.allclose(differential(v, "curl2d").values, 2, atol=1e-12)
    assert np.max(np.abs(differential(v, "div").values)) < 1e-12


def test_discrete_complex_identities(bumpy, rng):
    ops = operators(bumpy)
    u = np.sin(3 * bumpy.x) * bumpy.y**2 + rng.normal(size=bumpy.shape) * 1e-3
    assert np.max(np.abs(ops.curl(ops.grad(u)))) < 1e-9
    assert np.max(np.abs(ops.div(ops.rot_grad(u)))) < 1e-9


def test_directional_examples(disk):
    B = rotation(disk)
    assert np.allclose(directional(B, ScalarField(disk, disk.x)).values, -disk.y, atol=1e-12)
    bb = directional(B, B).values
    assert np.allclose(bb[0], -disk.x, atol=1e-12) and np.allclose(bb[1], -disk.y, atol=1e-12)


def test_integrals():
    ch = disk_chart(128, 128)
    one = ScalarField(ch, np.ones(ch.shape))
    assert integrate(one) == pytest.approx(np.pi, rel=1e-8)
    B2 = ScalarField(ch, ch.x**2 + ch.y**2)
    assert integrate(B2) == pytest.approx(np.pi / 2, rel=1e-3)
    assert integrate(BoundaryFn(ch, np.ones(128)), "boundary") == pytest.approx(2 * np.pi)
    mask = ch.theta < np.pi
    assert integrate(BoundaryFn(ch, np.ones(128)), "boundary_masked", mask) == pytest.approx(np.pi)


def test_sobolev_norms_of_constant(disk):
    c = ScalarField(disk, np.full(disk.shape, 2.0))
    for m in range(4):
        assert sobolev_norm(c, m) == pytest.approx(2 * np.sqrt(np.pi), rel=1e-10)
    u = ScalarField(disk, disk.x**2)
    assert fractional_proxy(u, 1.5) ** 2 == pytest.approx(sobolev_norm(u, 1) * sobolev_norm(u, 2))


def test_div_free_projection_examples(bumpy):
    rot = rotation(bumpy)
    assert np.max(np.abs(div_free_projection(rot).values - rot.values)) < 1e-8
    rad = VectorField.from_function(disk_chart(), lambda x, y: (x, y))
    assert np.max(np.abs(div_free_projection(rad).values)) < 1e-8
    const = VectorField.from_function(bumpy, lambda x, y: (1 + 0 * x, 0 * y))
    assert np.max(np.abs(div_free_projection(const).values - const.values)) < 1e-8


def test_projection_gives_exact_constraints_and_is_idempotent(bumpy, rng):
    v = VectorField(bumpy, rng.normal(size=(2,) + bumpy.shape))
    p = div_free_projection(v)
    assert divergence_residual(p) < 1e-12
    assert np.max(np.abs(div_free_projection(p).values - p.values)) < 1e-8
    r = rot_projection(v)
    assert tangency_residual(r) < 1e-12 and divergence_residual(r) < 1e-12
    assert np.max(np.abs(rot_projection(r).values - r.values)) < 1e-8


def test_projection_preserves_curl_up_to_discretization():
    errs = []
    for n in (32, 64):
        ch = bumpy_chart(n, n)
        mix = VectorField.from_function(
            ch, lambda x, y: (np.cos(x) * np.exp(y) - y, np.sin(x) * np.exp(y) + x))
        out = div_free_projection(mix)
        d = differential(out, "curl2d").values - differential(mix, "curl2d").values
        errs.append(np.sqrt(np.sum(d**2 * ch.area_weight)))
    assert errs[0] < 1e-3
    assert errs[0] / errs[1] > 4


def test_hodge_split_examples():
    ch = disk_chart(32, 32)
    hs = hodge_split(rotation(ch))
    assert np.max(np.abs(hs.irrot.values)) < 1e-8
    const = VectorField.from_function(ch, lambda x, y: (1 + 0 * x, 0 * y))
    hs = hodge_split(const)
    assert np.max(np.abs(hs.irrot.values - const.values)) < 1e-6
    assert l2_norm(hs.rot) < 1e-6
    zero = hodge_split(VectorField(ch, np.zeros((2,) + ch.shape)))
    assert np.max(np.abs(zero.rot.values)) == 0.0


def test_irrotational_part_of_constant_field():
    ch = disk_chart(64, 64)
    const = VectorField.from_function(ch, lambda x, y: (1 + 0 * x, 0 * y))
    ir = irrotational_part(const)
    assert np.max(np.abs(ir.values - const.values)) < 5e-3


def test_sample_and_transfer_reproduce_low_degree_fields(bumpy):
    eta = bumpy.surface.eta - 0.02
    dst = DomainChart(build_surface(eta, 0.5), 24, 32)
    u = ScalarField(bumpy, bumpy.x + 2 * bumpy.y)
    out = transfer(u, bumpy, dst)
    assert np.max(np.abs(out.values - (dst.x + 2 * dst.y))) < 1e-10
    c = transfer(ScalarField(bumpy, np.full(bumpy.shape, 3.0)), bumpy, dst)
    assert np.allclose(c.values, 3.0, atol=1e-13)
    assert transfer(u, bumpy, bumpy) is u


def test_sample_refuses_far_points(disk):
    with pytest.raises(ExtrapolationTooFar):
        sample(np.zeros((1,) + disk.shape), disk, np.array([1.2]), np.array([0.0]))


def test_leibniz_residual_small_on_disk():
    ch = disk_chart(64, 64)
    f = np.cos(ch.theta)
    g = np.sin(2 * ch.theta)
    r = leibniz_residual(ch, f, g).values
    assert np.sqrt(np.sum(r**2 * ch.boundary_weight)) < 1e-3


def test_skew_adjoint_directional_derivative():
    out = []
    for n in (32, 64):
        ch = bumpy_chart(n, n)
        B = rot_projection(rotation(ch))
        f = ScalarField(ch, np.sin(ch.x) + ch.y**2)
        g = ScalarField(ch, np.cos(2 * ch.y) * ch.x)
        out.append(abs(integrate(directional(B, f) * g.values) + integrate(directional(B, g) * f.values)))
    assert out[1] < out[0] / 2
