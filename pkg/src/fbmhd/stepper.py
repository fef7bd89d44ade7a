"""One step of the regularize / Euler-transport scheme and the run loop.

A step takes an assembled state through three regularization stages (surface
heat flow, mollification, field-line regularization along B), then moves the
boundary with x -> x + eps v, evaluates the explicit Euler updates of v and B at
the preimages of the new grid nodes, and projects back onto the constraints.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (CollarViolation, DivergenceViolation, ExtrapolationTooFar, FbmhdError,
                     FixedPointDiverged, NotStarShaped, ScaleTooCoarse, SolverDiverged,
                     TangencyViolation, TaylorSignViolation)
from .field_calculus import div_free_projection, operators, rot_projection, sample, transfer
from .fields import VectorField
from .functionals import distance, higher_energy
from .mhd_state import assemble, diagnostics
from .regularization import mollify, regularize_along_B
from .surface_geometry import BoundarySeries, DomainChart, build_surface, heat_regularize


@dataclass(frozen=True)
class StepConfig:
    epsilon: float = 1e-2
    n_r: int = 32
    n_theta: int = 32
    M: int | None = None
    tol_elliptic: float = 1e-10
    tol_div: float = 1e-8
    tol_tangency: float = 1e-8
    c0_min: float = 1e-3
    collar_delta: float = 0.5
    step1_surface: bool = True
    step2_mollify: bool = True
    step3_fieldline: bool = True
    heat_scale: float | None = None      # default eps
    mollify_scale: float | None = None   # default eps^3
    fieldline_scale: float | None = None  # default eps
    split_cells: float = 4.0
    max_fp_iters: int = 10
    tol_fp: float = 1e-10
    energy_reports: bool = True
    snapshot_every: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.n_theta % 2:
            raise ValueError("n_theta must be even")

    @property
    def modes(self):
        return self.M if self.M is not None else max(2, self.n_theta // 4 - 2)


@dataclass(frozen=True)
class StepReport:
    t: float
    E_before: float
    E_after: float
    E3_before: object
    E3_after: object
    a_min_before: float
    a_min_after: float
    tangency_residual: float
    div_residual_v: float
    div_residual_B: float
    boundary_displacement_sup: float
    contract_residual: float
    contract_K: float
    wall_time: float


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except FbmhdError as exc:
        exc.stage = getattr(exc, "stage", name)
        raise


def _reassemble(chart, v, B, cfg):
    return assemble(chart, v, B, cfg, project=True)


def regularize_state(state, cfg):
    """Surface heat flow, mollification and field-line regularization, then reassembly."""
    eps = cfg.epsilon
    chart = state.chart
    v, B = state.v, state.B

    if cfg.step1_surface:
        def stage1():
            delta = cfg.heat_scale if cfg.heat_scale is not None else eps
            surf = heat_regularize(state.surface, delta)
            new = chart if surf is state.surface else DomainChart(surf, chart.n_r, chart.n_theta)
            if new is not chart and new.same_geometry(chart):
                new = chart
            return _reassemble(new, transfer(v, chart, new), transfer(B, chart, new), cfg)
        state = _stage("surface", stage1)
        chart, v, B = state.chart, state.v, state.B

    if cfg.step2_mollify:
        def stage2():
            s = cfg.mollify_scale if cfg.mollify_scale is not None else eps**3
            return _reassemble(chart, mollify(v, s), mollify(B, s), cfg)
        state = _stage("mollify", stage2)
        v, B = state.v, state.B

    if cfg.step3_fieldline:
        def stage3():
            e = cfg.fieldline_scale if cfg.fieldline_scale is not None else eps
            res = regularize_along_B(v, B, e, chart, cfg.split_cells * chart.h, cfg.tol_elliptic,
                                     cfg.max_fp_iters, cfg.tol_fp)
            return assemble(chart, res.v, res.B, cfg, project=False)
        state = _stage("fieldline", stage3)
    return state


def _regraph(surface, vb, eps, n, M):
    """Re-graph the curve theta -> Gamma(theta) + eps v(theta) over the unit circle."""
    vx = np.fft.rfft(vb[0]) / n
    vy = np.fft.rfft(vb[1]) / n
    k = np.arange(vx.size)
    scale = np.full(k.size, 2.0)
    scale[0] = 1.0
    if n % 2 == 0:
        scale[-1] = 1.0

    def curve(t):
        e = np.exp(1j * np.outer(t, k))
        de = 1j * k * e
        ux = np.real(e @ (vx * scale))
        uy = np.real(e @ (vy * scale))
        dux = np.real(de @ (vx * scale))
        duy = np.real(de @ (vy * scale))
        r = surface.radius(t)
        dr = surface.eta.derivative(1).evaluate(t)
        c, s = np.cos(t), np.sin(t)
        X = r * c + eps * ux
        Y = r * s + eps * uy
        dX = dr * c - r * s + eps * dux
        dY = dr * s + r * c + eps * duy
        return X, Y, dX, dY

    fine = np.linspace(0, 2 * np.pi, 8 * n, endpoint=False)
    X, Y, dX, dY = curve(fine)
    if np.any(X * dY - Y * dX <= 0):
        raise NotStarShaped("transported boundary is not a graph over the circle")
    target = 2 * np.pi * np.arange(n) / n
    t = target.copy()
    for _ in range(50):
        X, Y, dX, dY = curve(t)
        ang = np.arctan2(Y, X)
        f = np.angle(np.exp(1j * (ang - target)))
        dang = (X * dY - Y * dX) / (X**2 + Y**2)
        step = f / dang
        t = t - step
        if np.max(np.abs(step)) < 1e-15:
            break
    else:
        raise NotStarShaped("ray re-graphing did not converge")
    X, Y, _, _ = curve(t)
    r = np.hypot(X, Y)
    return BoundarySeries.from_values(r - 1.0, M)


def _inverse_transport(chart0, vvals, py_x, py_y, eps, max_iterations=30, tol=1e-14):
    """Solve x + eps v(x) = y by fixed-point iteration."""
    x, y = py_x.copy(), py_y.copy()
    for _ in range(max_iterations):
        v = sample(vvals, chart0, x, y)
        nx = py_x - eps * v[0]
        ny = py_y - eps * v[1]
        change = max(np.max(np.abs(nx - x)), np.max(np.abs(ny - y)))
        x, y = nx, ny
        if change < tol:
            break
    return x, y


def euler_transport(state, cfg, validate=True):
    """Move the boundary with eps v and apply the explicit Euler updates at preimages."""
    eps = cfg.epsilon
    chart0 = state.chart
    ops = operators(chart0)
    v, B = state.v.values, state.B.values
    n = chart0.n_theta
    eta1 = _regraph(state.surface, v[:, -1], eps, n, cfg.modes)
    surf1 = build_surface(eta1, state.surface.collar_delta)
    chart1 = DomainChart(surf1, chart0.n_r, n)
    if chart1.same_geometry(chart0):
        chart1 = chart0
    gv = ops.grad_tensor(v)
    gB = ops.grad_tensor(B)
    B_dot_gradB = B[0] * gB[0] + B[1] * gB[1]
    B_dot_gradv = B[0] * gv[0] + B[1] * gv[1]
    Fv = v - eps * (state.grad_P - B_dot_gradB)
    FB = B + eps * B_dot_gradv
    if eps == 0.0:
        vals = np.concatenate([Fv, FB])
    else:
        yx = np.broadcast_to(chart1.x, chart1.shape).ravel()
        yy = np.broadcast_to(chart1.y, chart1.shape).ravel()
        x, y = _inverse_transport(chart0, v, yx, yy, eps)
        vals = sample(np.concatenate([Fv, FB]), chart0, x, y).reshape(4, *chart1.shape)
    v1 = div_free_projection(VectorField(chart1, vals[:2]), cfg.tol_elliptic)
    B1 = rot_projection(VectorField(chart1, vals[2:]), cfg.tol_elliptic)
    return assemble(chart1, v1, B1, cfg, project=False, validate=validate)


def contract_residual(state0, state1, eps):
    """sup over the common nodes of |v1 - [v0 - eps (v0.grad v0 - B0.grad B0 + grad P0)]|."""
    ops = operators(state0.chart)
    v, B = state0.v.values, state0.B.values
    gv = ops.grad_tensor(v)
    gB = ops.grad_tensor(B)
    pred = v - eps * (v[0] * gv[0] + v[1] * gv[1] - (B[0] * gB[0] + B[1] * gB[1]) + state0.grad_P)
    c1 = state1.chart
    px = np.broadcast_to(c1.x, c1.shape).ravel()
    py = np.broadcast_to(c1.y, c1.shape).ravel()
    rho0, _ = state0.chart.to_chart(px, py)
    inside = rho0 <= 1.0
    vals = sample(pred, state0.chart, px[inside], py[inside])
    diff = vals - state1.v.values.reshape(2, -1)[:, inside]
    return float(np.max(np.hypot(diff[0], diff[1]))) if diff.size else 0.0


def _energy(state, cfg):
    if not cfg.energy_reports:
        return None
    cache = state.__dict__.setdefault("_E3", None)
    if cache is None:
        cache = higher_energy(state)
        state.__dict__["_E3"] = cache
    return cache


def step(state, cfg, t=0.0):
    """One full step; returns (new_state, StepReport)."""
    start = time.perf_counter()
    E3_before = _energy(state, cfg)
    d0 = diagnostics(state)
    reg = regularize_state(state, cfg)
    new = _stage("euler", euler_transport, reg, cfg)
    d1 = diagnostics(new)
    E3_after = _energy(new, cfg)
    n = 8 * state.chart.n_theta
    disp = float(np.max(np.abs(new.eta.values(n) - state.eta.values(n))))
    res = contract_residual(state, new, cfg.epsilon)
    report = StepReport(
        t=t + cfg.epsilon,
        E_before=d0.total_energy,
        E_after=d1.total_energy,
        E3_before=E3_before,
        E3_after=E3_after,
        a_min_before=d0.a_min,
        a_min_after=d1.a_min,
        tangency_residual=d1.tangency_residual,
        div_residual_v=d1.div_residual_v,
        div_residual_B=d1.div_residual_B,
        boundary_displacement_sup=disp,
        contract_residual=res,
        contract_K=res / cfg.epsilon**2,
        wall_time=time.perf_counter() - start,
    )
    return new, report


HALT_REASONS = (
    (TaylorSignViolation, "taylor_sign"),
    (CollarViolation, "collar_exit"),
    (NotStarShaped, "not_star_shaped"),
    (ExtrapolationTooFar, "transport_too_far"),
    (SolverDiverged, "solver_failure"),
    (FixedPointDiverged, "solver_failure"),
    (TangencyViolation, "constraint_violation"),
    (DivergenceViolation, "constraint_violation"),
    (ScaleTooCoarse, "scale_too_coarse"),
)


def halt_reason(exc):
    for cls, name in HALT_REASONS:
        if isinstance(exc, cls):
            return name
    return "error"


@dataclass
class RunLog:
    times: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    initial: object = None
    initial_E3: object = None
    initial_eta: object = None
    initial_eta_n: int = 0
    etas: list = field(default_factory=list)
    final_state: object = None
    halt_reason: str = ""
    halt_message: str = ""

    @property
    def completed(self):
        return self.halt_reason == ""

    def rows(self):
        """One row per recorded time: t, E_total, E3_total, a_min, residuals, displacement."""
        n = 8 * self.initial_eta_n
        e0 = self.initial_eta.values(n)
        d = self.initial
        out = [dict(t=0.0, E_total=d.total_energy,
                    E3_total=self.initial_E3.total if self.initial_E3 else float("nan"),
                    a_min=d.a_min, tangency_res=d.tangency_residual, div_res_v=d.div_residual_v,
                    div_res_B=d.div_residual_B, boundary_sup_disp=0.0)]
        for t, rep, eta in zip(self.times, self.reports, self.etas):
            out.append(dict(t=t, E_total=rep.E_after,
                            E3_total=rep.E3_after.total if rep.E3_after else float("nan"),
                            a_min=rep.a_min_after, tangency_res=rep.tangency_residual,
                            div_res_v=rep.div_residual_v, div_res_B=rep.div_residual_B,
                            boundary_sup_disp=float(np.max(np.abs(eta.values(n) - e0)))))
        return out


def run(state0, T, cfg, on_step=None):
    """Step to time T (ceil(T / eps) steps) or until a halt condition; never raises on halts."""
    if T < 0:
        raise ValueError("T must be nonnegative")
    log = RunLog()
    log.initial = diagnostics(state0)
    log.initial_E3 = _energy(state0, cfg)
    log.initial_eta = state0.eta
    log.initial_eta_n = state0.chart.n_theta
    log.snapshots.append((0.0, state0))
    nsteps = int(math.ceil(T / cfg.epsilon - 1e-9)) if T > 0 else 0
    state = state0
    t = 0.0
    for i in range(nsteps):
        try:
            state, rep = step(state, cfg, t)
        except FbmhdError as exc:
            log.halt_reason = halt_reason(exc)
            log.halt_message = f"{type(exc).__name__}: {exc}"
            break
        t = (i + 1) * cfg.epsilon
        log.times.append(t)
        log.reports.append(rep)
        log.etas.append(state.eta)
        if cfg.snapshot_every and (i + 1) % cfg.snapshot_every == 0:
            log.snapshots.append((t, state))
        if on_step is not None:
            on_step(t, state, rep)
    log.final_state = state
    return log


def self_convergence(state0, T, eps_list, cfg):
    """Pairwise distances between runs at successive eps; order from sqrt(D) ratios."""
    eps_list = list(eps_list)
    if len(eps_list) < 2:
        return []
    finals = []
    for e in eps_list:
        log = run(state0, T, replace(cfg, epsilon=e))
        if not log.completed:
            raise SolverDiverged(f"run at eps = {e} halted: {log.halt_message}")
        finals.append(log.final_state)
    rows = []
    prev = None
    for i in range(len(eps_list) - 1):
        d = distance(finals[i], finals[i + 1]).total
        order = None
        if prev is not None and prev > 0 and d > 0:
            order = 0.5 * math.log2(prev / d) / math.log2(eps_list[i - 1] / eps_list[i])
        rows.append(dict(eps_a=eps_list[i], eps_b=eps_list[i + 1], distance=d, order=order))
        prev = d
    return rows
