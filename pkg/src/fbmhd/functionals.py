"""Energy, distance and control functionals of MHD states.

Per-sign quantities are stored as (plus, minus) pairs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .elliptic_core import dtn
from .errors import CollarMismatch
from .field_calculus import directional, fractional_proxy, operators, sample, sobolev_norm
from .fields import as_array
from .mhd_state import boundary_directional, material_pressure
from .surface_geometry import BoundarySeries, DomainChart, build_surface, intersect


def linearized_energy(state, w_plus, w_minus, s):
    """1/2 int |w+|^2 + 1/2 int |w-|^2 + int_Gamma a s^2."""
    chart = state.chart
    wp, wm, sv = as_array(w_plus), as_array(w_minus), as_array(s)
    interior = 0.5 * np.sum((np.sum(wp**2, 0) + np.sum(wm**2, 0)) * chart.area_weight)
    bdry = np.sum(state.a.values * np.broadcast_to(sv, (chart.n_theta,))**2 * chart.boundary_weight)
    return float(interior + bdry)


@dataclass(frozen=True)
class EnergyReport:
    """Components of E^3. Sign-independent terms are summed over both signs."""

    one_plus_L2: tuple
    omega_H2: tuple
    gradB_omega_H32_proxy: tuple
    a_N2a_L2Gamma: float
    gradH_N_G_L2: tuple
    gradH_N_gradBa_L2: float
    inv_a_N_gradBG_L2Gamma: tuple
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", 2.0 + sum(self.components().values()))

    def components(self):
        out = {}
        for name in ("one_plus_L2", "omega_H2", "gradB_omega_H32_proxy", "gradH_N_G_L2",
                     "inv_a_N_gradBG_L2Gamma"):
            p, m = getattr(self, name)
            out[name + "_plus"] = p
            out[name + "_minus"] = m
        out["a_N2a_L2Gamma"] = self.a_N2a_L2Gamma
        out["gradH_N_gradBa_L2"] = self.gradH_N_gradBa_L2
        return out


def harmonic_gradient_norm_sq(state, g, route="boundary"):
    """||grad H g||^2 over the domain.

    The boundary route is <N g, g> on Gamma (Green's identity); the interior
    route sums |grad H g|^2 by quadrature of the discrete Dirichlet energy.
    """
    chart = state.chart
    ws = state._ws
    g = np.asarray(g, dtype=float)
    if route == "boundary":
        return float(np.sum(dtn(ws, g).values * g * chart.boundary_weight))
    if route == "interior":
        u = ws.solve_dirichlet(0.0, g)
        return ws.energy(u)
    raise ValueError(f"unknown route {route!r}")


def higher_energy(state, k=3):
    if k != 3:
        raise ValueError("only k = 3 is supported")
    chart = state.chart
    ws = state._ws
    bw = chart.boundary_weight
    a = state.a.values
    B = state.B
    Gp, Gm, gBa = state.good

    def N(g):
        return dtn(ws, g).values

    W_L2, omega, gBomega, gHG, invaG = [], [], [], [], []
    for W, om, G in ((state.Wplus, state.omega_plus, Gp), (state.Wminus, state.omega_minus, Gm)):
        W_L2.append(float(np.sum(np.sum(W.values**2, 0) * chart.area_weight)))
        omega.append(sobolev_norm(om, 2) ** 2)
        gBomega.append(fractional_proxy(directional(B, om), 1.5) ** 2)
        gHG.append(harmonic_gradient_norm_sq(state, N(G.values)))
        NgBG = N(boundary_directional(state, G.values))
        invaG.append(float(np.sum(NgBG**2 / a * bw)))
    N2a = N(N(a))
    a_term = 2.0 * float(np.sum(a * N2a**2 * bw))
    gBa_term = 2.0 * harmonic_gradient_norm_sq(state, N(gBa.values))
    return EnergyReport(tuple(W_L2), tuple(omega), tuple(gBomega), a_term, tuple(gHG), gBa_term,
                        tuple(invaG))


@dataclass(frozen=True)
class DistanceReport:
    interior_plus: float
    interior_minus: float
    boundary_A: float
    boundary_Ah: float
    total: float


def _check_compatible(x, y):
    cx, cy = x.chart, y.chart
    if x.surface.collar_delta != y.surface.collar_delta:
        raise CollarMismatch(
            f"collar_delta {x.surface.collar_delta} vs {y.surface.collar_delta}")
    if cx.shape != cy.shape:
        raise CollarMismatch(f"grid {cx.shape} vs {cy.shape}")


def distance(x, y):
    """The distance functional between two states on nearby domains.

    Interior terms are integrated over the intersection domain (chart of the
    pointwise minimum of the two graphs); boundary terms use the pressure of
    the larger domain on the part of the boundary where the graphs differ.
    """
    _check_compatible(x, y)
    n_r, n = x.chart.shape
    masks = intersect(x.surface, y.surface, n)
    eta = BoundarySeries.from_values(masks.eta_min_values, n // 2 - 1)
    surf = build_surface(eta, x.surface.collar_delta)
    chart = DomainChart(surf, n_r, n)
    # evaluate on the exact minimum values rather than the interpolant
    R = 1.0 + masks.eta_min_values
    px = chart.rho[:, None] * R * chart.cos
    py = chart.rho[:, None] * R * chart.sin
    wx = sample(np.concatenate([x.Wplus.values, x.Wminus.values]), x.chart, px, py)
    wy = sample(np.concatenate([y.Wplus.values, y.Wminus.values]), y.chart, px, py)
    d = (wy - wx).reshape(4, n_r, n)
    weight = chart.area_weight
    interior_plus = 0.5 * float(np.sum((d[0]**2 + d[1]**2) * weight))
    interior_minus = 0.5 * float(np.sum((d[2]**2 + d[3]**2) * weight))

    def boundary_term(inner, outer, mask):
        if not np.any(mask):
            return 0.0
        bx, by = px[-1, mask], py[-1, mask]
        P_out = sample(outer.P.values[None], outer.chart, bx, by)[0]
        a_in = inner.a.values[mask]
        w = inner.chart.boundary_weight[mask]
        return 0.5 * float(np.sum(P_out**2 / a_in * w))

    bA = boundary_term(x, y, masks.mask_A)
    bAh = boundary_term(y, x, masks.mask_Ah)
    return DistanceReport(interior_plus, interior_minus, bA, bAh,
                          interior_plus + interior_minus + bA + bAh)


@dataclass(frozen=True)
class ControlReport:
    A_proxy: float
    A_half_proxy: float
    breakdown: dict


def _holder(chart, comps, alpha):
    """Largest difference quotient |u(p) - u(q)| / |p - q|^alpha over neighbours at 1 and 2 cells."""
    if comps.ndim == 2:
        comps = comps[None]
    X = np.array([np.broadcast_to(chart.x, chart.shape), np.broadcast_to(chart.y, chart.shape)])
    best = 0.0
    for step in (1, 2):
        for axis in (1, 2):
            if axis == 1:
                du = comps[:, step:] - comps[:, :-step]
                dx = X[:, step:] - X[:, :-step]
            else:
                du = np.roll(comps, -step, axis=2) - comps
                dx = np.roll(X, -step, axis=2) - X
            num = np.sqrt(np.sum(du**2, 0))
            den = np.sqrt(np.sum(dx**2, 0)) ** alpha
            best = max(best, float(np.max(num / den)))
    return best


def _boundary_holder(values, theta, alpha):
    best = 0.0
    n = values.size
    for step in (1, 2):
        du = np.abs(np.roll(values, -step) - values)
        best = max(best, float(np.max(du)) / (step * 2 * np.pi / n) ** alpha)
    return best


def control_parameters(state, holder_eps=0.1):
    """Grid proxies for the control norms.

    Sup norms are nodal maxima; Holder seminorms are the largest difference
    quotients at the two finest grid separations.
    """
    chart = state.chart
    ops = operators(chart)
    v, B = state.v.values, state.B.values
    n = 8 * chart.n_theta
    theta = 2 * np.pi * np.arange(n) / n
    eta = state.eta
    e0 = eta.values(n)
    e1 = eta.derivative(1).values(n)
    sup = {"v": float(np.max(np.hypot(*v))), "B": float(np.max(np.hypot(*B)))}
    br = {
        "sup_v": sup["v"],
        "sup_B": sup["B"],
        "holder_v": _holder(chart, v, 0.5 + holder_eps),
        "holder_B": _holder(chart, B, 0.5 + holder_eps),
        "gamma_C1": float(np.max(np.abs(e0)) + np.max(np.abs(e1))),
        "gamma_holder_eps": _boundary_holder(e1, theta, holder_eps),
        "gamma_holder_half": _boundary_holder(e1, theta, 0.5),
    }
    gv = ops.grad_tensor(v)
    gB = ops.grad_tensor(B)
    br["grad_v"] = float(np.max(np.abs(gv)))
    br["grad_B"] = float(np.max(np.abs(gB)))
    dp, dm = material_pressure(state)
    w1 = 0.0
    for f in (dp, dm):
        g = ops.grad(f.values)
        w1 += float(np.max(np.abs(f.values))) + float(np.max(np.abs(g)))
    br["DtP_W1inf"] = w1
    A = br["sup_v"] + br["sup_B"] + br["holder_v"] + br["holder_B"] + br["gamma_C1"] + br["gamma_holder_eps"]
    A_half = (br["sup_v"] + br["sup_B"] + br["grad_v"] + br["grad_B"] + w1
              + br["gamma_C1"] + br["gamma_holder_half"])
    return ControlReport(float(A), float(A_half), br)
