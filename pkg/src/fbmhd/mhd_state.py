"""Validated MHD states (eta, v, B) and the quantities derived from them.

The pressure solves Delta P = -d_i W+_j d_j W-_i with P = 0 on the boundary,
the Taylor coefficient is a = -n . grad P, and W+- = v +- B are the Elsasser
variables. Material pressures and the good variables G+- follow the literal
definitions built from these.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DivergenceViolation, TangencyViolation, TaylorSignViolation
from .field_calculus import (divergence_residual, integrate, l2_norm, operators,
                             rot_projection, div_free_projection, tangency_residual, workspace)
from .fields import BoundaryFn, ScalarField, VectorField
from .surface_geometry import DomainChart, SurfaceGraph


@dataclass(frozen=True)
class StateConfig:
    n_r: int = 64
    n_theta: int = 64
    tol_elliptic: float = 1e-10
    tol_div: float = 1e-8
    tol_tangency: float = 1e-8
    c0_min: float = 1e-3


@dataclass(frozen=True)
class StateDiagnostics:
    total_energy: float
    a_min: float
    tangency_residual: float
    div_residual_v: float
    div_residual_B: float
    collar_margin: float


def _trace_product(S, T):
    """sum_ij S[i, j] T[j, i] for tensors of shape (2, 2, N, n)."""
    return np.einsum("ij...,ji...->...", S, T)


def _contract(T, g):
    """(T . g)_k = sum_i g_i T[i, k]."""
    return np.einsum("i...,ik...->k...", g, T)


class MhdState:
    """An assembled state. Treat as immutable; derived data is cached."""

    def __init__(self, chart, v, B, cfg):
        self.chart = chart
        self.surface = chart.surface
        self.v = v
        self.B = B
        self.cfg = cfg
        ops = operators(chart)
        self._ops = ops
        self.Wplus = VectorField(chart, v.values + B.values)
        self.Wminus = VectorField(chart, v.values - B.values)
        self.gradWp = ops.grad_tensor(self.Wplus.values)
        self.gradWm = ops.grad_tensor(self.Wminus.values)
        self.laplacian_P = -_trace_product(self.gradWp, self.gradWm)
        ws = workspace(chart, cfg.tol_elliptic)
        self._ws = ws
        P = ws.solve_dirichlet(self.laplacian_P, 0.0)
        self.P = ScalarField(chart, P)
        self.a = BoundaryFn(chart, -ws.green_flux(P, self.laplacian_P))
        self.omega_plus = ScalarField(chart, ops.curl(self.Wplus.values))
        self.omega_minus = ScalarField(chart, ops.curl(self.Wminus.values))

    @property
    def eta(self):
        return self.surface.eta

    @cached_property
    def grad_P(self):
        return self._ops.grad(self.P.values)

    @cached_property
    def hess_P(self):
        return self._ops.hessian(self.P.values)

    @cached_property
    def material(self):
        return _material_pressure(self)

    @cached_property
    def good(self):
        return _good_variables(self)

    @property
    def G_plus(self):
        return self.good[0]

    @property
    def G_minus(self):
        return self.good[1]

    @property
    def grad_B_a(self):
        return self.good[2]

    def __repr__(self):
        return f"MhdState({self.chart!r}, a_min={self.a.values.min():.4g})"


def _chart_for(eta, cfg):
    if isinstance(eta, DomainChart):
        return eta
    if isinstance(eta, SurfaceGraph):
        return DomainChart(eta, cfg.n_r, cfg.n_theta)
    raise TypeError("eta must be a SurfaceGraph or DomainChart")


def assemble(eta, v, B, cfg=None, project=True, validate=True):
    """Build an MhdState on the chart of ``eta`` (a SurfaceGraph or DomainChart).

    With ``project`` the velocity is made divergence free and B divergence free
    and tangent. With ``validate`` constraint and Taylor-sign checks raise.
    """
    cfg = cfg or StateConfig()
    chart = _chart_for(eta, cfg)
    if not isinstance(v, VectorField):
        v = VectorField(chart, v)
    if not isinstance(B, VectorField):
        B = VectorField(chart, B)
    if v.chart is not chart or B.chart is not chart:
        if not (v.chart.same_geometry(chart) and B.chart.same_geometry(chart)):
            raise ValueError("v and B must live on the chart of eta")
        v = VectorField(chart, v.values)
        B = VectorField(chart, B.values)
    if project:
        v = VectorField(chart, div_free_projection(v, cfg.tol_elliptic).values)
        B = VectorField(chart, rot_projection(B, cfg.tol_elliptic).values)
    state = MhdState(chart, v, B, cfg)
    if validate:
        check_state(state)
    return state


def check_state(state):
    cfg = state.cfg
    dv = divergence_residual(state.v)
    dB = divergence_residual(state.B)
    if max(dv, dB) > 10 * cfg.tol_div:
        raise DivergenceViolation(f"divergence residuals v {dv:.3e}, B {dB:.3e}")
    tr = tangency_residual(state.B)
    if tr > 10 * cfg.tol_tangency * (1 + l2_norm(state.B)):
        raise TangencyViolation(f"||B.n|| = {tr:.3e}")
    a_min = float(state.a.values.min())
    if not a_min >= cfg.c0_min:
        raise TaylorSignViolation(f"min a = {a_min:.4g} below c0_min = {cfg.c0_min:g}")


def _material_of_W(state, sign):
    """(D_t^s W+, D_t^s W-) per the definition D^s W^-s = -grad P, D^s W^s = -grad P + 2s B.grad W^s."""
    ops = state._ops
    gP = state.grad_P
    B = state.B.values
    if sign > 0:
        dWp = -gP + 2 * _contract(state.gradWp, B)
        dWm = -gP
    else:
        dWp = -gP
        dWm = -gP - 2 * _contract(state.gradWm, B)
    return ops.grad_tensor(dWp), ops.grad_tensor(dWm)


def _M2_divergence(state, gradW, W):
    """Delta W . grad P + 2 grad W : hess P."""
    ops = state._ops
    lap = np.array([ops.div(ops.grad(W[k])) for k in range(2)])
    return np.einsum("j...,j...->...", lap, state.grad_P) + 2 * np.einsum(
        "ij...,ij...->...", gradW, state.hess_P)


def _dt_laplacian_P(state, sign):
    Tp, Tm = state.gradWp, state.gradWm
    Ts = Tp if sign > 0 else Tm
    dTp, dTm = _material_of_W(state, sign)
    # d_i Ws_k d_k W+_j d_j W-_i + d_i Ws_k d_k W-_j d_j W+_i
    t1 = np.einsum("ik...,kj...,ji...->...", Ts, Tp, Tm)
    t2 = np.einsum("ik...,kj...,ji...->...", Ts, Tm, Tp)
    return t1 + t2 - _trace_product(dTp, Tm) - _trace_product(Tp, dTm)


def _material_pressure(state):
    ws = state._ws
    out = []
    for sign, T, W in ((1, state.gradWp, state.Wplus.values), (-1, state.gradWm, state.Wminus.values)):
        F = _M2_divergence(state, T, W) + _dt_laplacian_P(state, sign)
        out.append(ScalarField(state.chart, ws.solve_dirichlet(F, 0.0)))
    return tuple(out)


def material_pressure(state):
    """(D_t^+ P, D_t^- P) as Dirichlet solves of the source F+-."""
    return state.material


def tangential_derivative(state, f):
    """d f / ds along the boundary (arc length)."""
    return state._ops.spec.d1(np.asarray(f, dtype=float)) / state.chart.arc


def boundary_directional(state, f):
    """grad_B f = (B . tau) d_tau f for a boundary function, valid when B . n = 0."""
    tau = state.chart.tangent
    Bb = state.B.values[:, -1]
    Btau = tau[0] * Bb[0] + tau[1] * Bb[1]
    return Btau * tangential_derivative(state, f)


def _good_variables(state):
    chart = state.chart
    ws = state._ws
    n = chart.normal
    gP = state.grad_P[:, -1]
    res = []
    for T, W in ((state.gradWp, state.Wplus.values), (state.gradWm, state.Wminus.values)):
        Tb = T[:, :, -1]
        # n_i d_i W_j d_j P
        first = np.einsum("i...,ij...,j...->...", n, Tb, gP)
        src = _M2_divergence(state, T, W)
        u = ws.solve_dirichlet(src, 0.0)
        res.append(BoundaryFn(chart, first - ws.green_flux(u, src)))
    grad_B_a = BoundaryFn(chart, boundary_directional(state, state.a.values))
    return res[0], res[1], grad_B_a


def good_variables(state):
    """(G+, G-, grad_B a) on the boundary."""
    return state.good


def diagnostics(state):
    v, B = state.v, state.B
    energy = 0.5 * integrate(ScalarField(state.chart, np.sum(v.values**2, 0))) + \
        0.5 * integrate(ScalarField(state.chart, np.sum(B.values**2, 0)))
    return StateDiagnostics(
        total_energy=float(energy),
        a_min=float(state.a.values.min()),
        tangency_residual=tangency_residual(B),
        div_residual_v=divergence_residual(v),
        div_residual_B=divergence_residual(B),
        collar_margin=float(state.surface.collar_margin),
    )


def curvature_residual(state):
    """a kappa + n_i n_j d_i d_j P - Delta P on the boundary.

    kappa here is the signed curvature with kappa = -1 on the unit circle for the
    outward normal, the convention in which the identity holds.
    """
    chart = state.chart
    n = chart.normal
    H = state.hess_P[:, :, -1]
    Pnn = np.einsum("i...,ij...,j...->...", n, H, n)
    lapP = H[0, 0] + H[1, 1]
    kappa = -chart.curvature
    return BoundaryFn(chart, state.a.values * kappa + Pnn - lapP)


def wave_operator_term(state):
    """a N a, the elliptic part of the wave-type equation for the good variables."""
    from .elliptic_core import dtn
    return BoundaryFn(state.chart, state.a.values * dtn(state._ws, state.a.values).values)
