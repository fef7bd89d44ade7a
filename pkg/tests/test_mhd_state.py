import numpy as np
import pytest

from fbmhd import oracle
from fbmhd.errors import TaylorSignViolation
from fbmhd.fields import VectorField
from fbmhd.mhd_state import (StateConfig, assemble, boundary_directional, curvature_residual,
                             diagnostics, good_variables, material_pressure, wave_operator_term)


def rotor_state(n=32, c=1.0):
    ing = oracle.equilibrium_rotor(c, n, n)
    return assemble(ing.chart, ing.v, ing.B, StateConfig(n, n)), ing


def test_rotor_pressure_and_taylor_coefficient():
    s, ing = rotor_state(32, 2.0)
    ch = s.chart
    assert np.max(np.abs(s.P.values - ing.reference.P(ch.x, ch.y))) < 1e-10
    assert np.allclose(s.a.values, 4.0, atol=1e-10)


def test_rotor_derived_quantities_vanish():
    s, _ = rotor_state(32)
    for f in material_pressure(s):
        assert np.max(np.abs(f.values)) < 1e-10
    for g in good_variables(s):
        assert np.max(np.abs(g.values)) < 1e-10
    assert np.max(np.abs(curvature_residual(s).values)) < 1e-8
    assert np.allclose(wave_operator_term(s).values, 0.0, atol=1e-8)


def test_rotor_diagnostics():
    s, _ = rotor_state(64)
    d = diagnostics(s)
    assert d.total_energy == pytest.approx(np.pi / 4, rel=1e-3)
    assert d.a_min == pytest.approx(1.0, abs=1e-10)
    assert d.tangency_residual < 1e-12 and d.div_residual_B < 1e-12
    assert d.collar_margin == pytest.approx(0.5)


def test_rigid_rotation_is_rejected():
    ing = oracle.taylor_violating_rotation(1.0, 16, 16)
    with pytest.raises(TaylorSignViolation):
        assemble(ing.chart, ing.v, ing.B, StateConfig(16, 16))
    s = assemble(ing.chart, ing.v, ing.B, StateConfig(16, 16), validate=False)
    assert np.allclose(s.a.values, -1.0, atol=1e-10)


def test_assemble_projects_inputs():
    ing = oracle.equilibrium_rotor(1.0, 32, 32)
    ch = ing.chart
    noisy = VectorField(ch, ing.B.values + 0.01 * np.array([ch.x, ch.y]))
    s = assemble(ch, ing.v, noisy, StateConfig(32, 32))
    assert np.max(np.abs(s.B.values - ing.B.values)) < 1e-6


def test_assemble_accepts_surface_graph():
    ing = oracle.equilibrium_rotor(1.0, 16, 16)
    s = assemble(ing.chart, ing.v, ing.B, StateConfig(16, 16))
    assert s.Wplus.values.shape == (2, 16, 16)
    assert np.allclose(s.Wplus.values, -s.Wminus.values)


def test_boundary_directional_of_rotor():
    s, _ = rotor_state(32)
    # grad_B cos(theta) on the unit circle with B = tau is -sin(theta)
    f = np.cos(s.chart.theta)
    assert np.allclose(boundary_directional(s, f), -np.sin(s.chart.theta), atol=1e-12)


def test_curvature_residual_converges_on_perturbed_domain():
    res = []
    for n in (32, 64):
        ing = oracle.perturbed_rotor(0.05, 2, n, n, eta_amplitude=0.1)
        s = assemble(ing.chart, ing.v, ing.B, StateConfig(n, n))
        r = curvature_residual(s).values
        res.append(np.sqrt(np.sum(r**2 * s.chart.boundary_weight)))
    assert res[0] / res[1] > 3
