"""Closed-form references: equilibria, Taylor-violating data, manufactured Poisson problems.

Closed forms here are written out directly from polar/Cartesian formulas and do
not call the production solvers; ``fine_reference_solve`` is the exception and
reruns the production discretisation at higher resolution.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .elliptic_core import EllipticWorkspace, dtn
from .errors import UnknownExpr
from .fields import VectorField
from .surface_geometry import BoundarySeries, DomainChart, build_surface


@dataclass(frozen=True)
class ReferenceSolution:
    """Closed-form u, grad u and Laplacian, each a function of Cartesian (x, y)."""

    description: str
    u: Callable
    grad: Callable
    laplacian: Callable
    P: Callable | None = None
    a: Callable | None = None

    def consistency_error(self, points, h=1e-5):
        """Largest mismatch between centred differences of u and the supplied gradient."""
        x, y = points
        gx = (self.u(x + h, y) - self.u(x - h, y)) / (2 * h)
        gy = (self.u(x, y + h) - self.u(x, y - h)) / (2 * h)
        ex, ey = self.grad(x, y)
        return float(max(np.max(np.abs(gx - ex)), np.max(np.abs(gy - ey))))


@dataclass(frozen=True)
class StateIngredients:
    chart: DomainChart
    v: VectorField
    B: VectorField
    reference: ReferenceSolution | None = None
    energy: float | None = None


def _disk_chart(n_r, n_theta, collar_delta=0.5, eta=None):
    eta = eta if eta is not None else BoundarySeries.zeros(2)
    return DomainChart(build_surface(eta, collar_delta), n_r, n_theta)


def equilibrium_rotor(c=1.0, n_r=64, n_theta=64, collar_delta=0.5):
    """v = 0, B = c(-y, x) on the unit disk; P = c^2 (1 - r^2) / 2, a = c^2."""
    if c == 0:
        raise ValueError("c must be nonzero")
    chart = _disk_chart(n_r, n_theta, collar_delta)
    B = VectorField.from_function(chart, lambda x, y: (-c * y, c * x))
    v = VectorField(chart, np.zeros((2,) + chart.shape))
    ref = ReferenceSolution(
        "magnetic rotor pressure",
        u=lambda x, y: 0.5 * c**2 * (1 - x**2 - y**2),
        grad=lambda x, y: (-c**2 * x, -c**2 * y),
        laplacian=lambda x, y: -2 * c**2 + 0 * x,
        P=lambda x, y: 0.5 * c**2 * (1 - x**2 - y**2),
        a=lambda theta: c**2 + 0 * theta,
    )
    return StateIngredients(chart, v, B, ref, np.pi * c**2 / 4)


def rotor_momentum_residual(c, x, y):
    """-B.grad B + grad P from the closed forms (zero for the rotor)."""
    BgB = (-c**2 * x, -c**2 * y)
    gP = (-c**2 * x, -c**2 * y)
    return np.maximum(np.abs(gP[0] - BgB[0]), np.abs(gP[1] - BgB[1]))


def taylor_violating_rotation(c=1.0, n_r=32, n_theta=32, collar_delta=0.5):
    """Rigid fluid rotation v = c(-y, x), B = 0; P = c^2 (r^2 - 1) / 2 and a = -c^2."""
    chart = _disk_chart(n_r, n_theta, collar_delta)
    v = VectorField.from_function(chart, lambda x, y: (-c * y, c * x))
    B = VectorField(chart, np.zeros((2,) + chart.shape))
    ref = ReferenceSolution(
        "rigid rotation pressure",
        u=lambda x, y: 0.5 * c**2 * (x**2 + y**2 - 1),
        grad=lambda x, y: (c**2 * x, c**2 * y),
        laplacian=lambda x, y: 2 * c**2 + 0 * x,
        P=lambda x, y: 0.5 * c**2 * (x**2 + y**2 - 1),
        a=lambda theta: -c**2 + 0 * theta,
    )
    return StateIngredients(chart, v, B, ref, np.pi * c**2 / 4)


def harmonic_velocity(chart, amplitude, mode):
    """amplitude * grad(r^m cos m theta) / m, an irrotational divergence-free field."""
    m = mode

    def fn(x, y):
        z = (x + 1j * y) ** (m - 1)
        return amplitude * z.real, -amplitude * z.imag

    return VectorField.from_function(chart, fn)


def perturbed_rotor(amplitude=0.05, mode=2, n_r=32, n_theta=32, eta_amplitude=0.0,
                    collar_delta=0.5, c=1.0):
    """Rotor B = c(-y, x) with an irrotational velocity of the given angular mode.

    With ``eta_amplitude`` the boundary is 1 + eta_amplitude cos(2 theta); B is then
    only tangent after projection, which ``assemble`` performs.
    """
    eta = BoundarySeries.from_modes(max(2, mode), cos={2: eta_amplitude}) if eta_amplitude else None
    chart = _disk_chart(n_r, n_theta, collar_delta, eta)
    B = VectorField.from_function(chart, lambda x, y: (-c * y, c * x))
    v = harmonic_velocity(chart, amplitude, mode)
    return StateIngredients(chart, v, B)


def irrotational_flow(amplitude=0.2, n_r=32, n_theta=32, collar_delta=0.5):
    """B = 0 with the strain v = amplitude (x, -y); P = amplitude^2 (1 - r^2) / 2 on the disk."""
    chart = _disk_chart(n_r, n_theta, collar_delta)
    v = harmonic_velocity(chart, amplitude, 2)
    B = VectorField(chart, np.zeros((2,) + chart.shape))
    return StateIngredients(chart, v, B)


def _poly_trig(p, m, kind="cos"):
    """u = rho^p trig(m theta) written in Cartesian coordinates."""
    trig = np.cos if kind == "cos" else np.sin
    dtrig = (lambda t: -np.sin(t)) if kind == "cos" else np.cos

    def u(x, y):
        r = np.hypot(x, y)
        return r**p * trig(m * np.arctan2(y, x))

    def grad(x, y):
        r = np.hypot(x, y)
        t = np.arctan2(y, x)
        rs = np.where(r > 0, r, 1.0)
        ur = p * rs ** (p - 1) * trig(m * t)
        ut = m * rs ** (p - 1) * dtrig(m * t)  # (1/r) d/dtheta
        c, s = np.cos(t), np.sin(t)
        return ur * c - ut * s, ur * s + ut * c

    def lap(x, y):
        r = np.hypot(x, y)
        rs = np.where(r > 0, r, 1.0)
        return (p * p - m * m) * rs ** (p - 2) * trig(m * np.arctan2(y, x)) * (r > 0)

    return u, grad, lap


def _catalog():
    cat = {}
    cat["1-rho2"] = ReferenceSolution(
        "1 - r^2", lambda x, y: 1 - x**2 - y**2, lambda x, y: (-2 * x, -2 * y),
        lambda x, y: -4 + 0 * x)
    cat["x"] = ReferenceSolution("x", lambda x, y: x, lambda x, y: (1 + 0 * x, 0 * y),
                                 lambda x, y: 0 * x)
    for p, m in ((2, 2), (3, 3), (3, 1), (4, 2), (4, 0), (5, 3)):
        u, g, lap = _poly_trig(p, m)
        cat[f"rho{p}cos{m}"] = ReferenceSolution(f"r^{p} cos {m} theta", u, g, lap)
    u1, g1, l1 = _poly_trig(3, 3)
    cat["rho3cos3+rho2"] = ReferenceSolution(
        "r^3 cos 3 theta + r^2",
        lambda x, y: u1(x, y) + x**2 + y**2,
        lambda x, y: (g1(x, y)[0] + 2 * x, g1(x, y)[1] + 2 * y),
        lambda x, y: l1(x, y) + 4)
    cat["sinx_ey"] = ReferenceSolution(
        "sin x e^y", lambda x, y: np.sin(x) * np.exp(y),
        lambda x, y: (np.cos(x) * np.exp(y), np.sin(x) * np.exp(y)), lambda x, y: 0 * x)
    cat["exp_poly"] = ReferenceSolution(
        "exp(x) y^2",
        lambda x, y: np.exp(x) * y**2,
        lambda x, y: (np.exp(x) * y**2, 2 * np.exp(x) * y),
        lambda x, y: np.exp(x) * (y**2 + 2))
    return cat


MANUFACTURED = _catalog()


def manufactured_poisson(expr_id):
    try:
        return MANUFACTURED[expr_id]
    except KeyError:
        raise UnknownExpr(f"unknown expression {expr_id!r}; known: {sorted(MANUFACTURED)}") from None


@dataclass(frozen=True)
class PoissonProblem:
    """Delta u = f in the domain of eta, u = g on the boundary; f, g from a ReferenceSolution."""

    reference: ReferenceSolution
    eta: BoundarySeries
    n_r: int
    n_theta: int
    tol_elliptic: float = 1e-10
    kind: str = "dirichlet"  # or "dtn"


def fine_reference_solve(problem, refinement_factor):
    """Solve at refinement_factor times the resolution with a 100x tighter tolerance.

    Returns the boundary values of the normal derivative for "dtn" problems, the
    solution array otherwise.
    """
    r = int(refinement_factor)
    if r < 1:
        raise ValueError("refinement_factor must be >= 1")
    tol = problem.tol_elliptic / 100 if r > 1 else problem.tol_elliptic
    chart = DomainChart(build_surface(problem.eta, 0.5), problem.n_r * r, problem.n_theta * r)
    ws = EllipticWorkspace(chart, tol)
    ref = problem.reference
    if problem.kind == "dtn":
        g = ref.u(chart.x[-1], chart.y[-1])
        return dtn(ws, g).values
    f = ref.laplacian(chart.x, chart.y)
    g = ref.u(chart.x[-1], chart.y[-1])
    return ws.solve_dirichlet(np.broadcast_to(f, chart.shape), g)


def with_resolution(problem, n_r, n_theta):
    return replace(problem, n_r=n_r, n_theta=n_theta)
