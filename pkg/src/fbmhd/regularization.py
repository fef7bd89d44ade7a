"""Mollification, frequency splitting and the field-line regularizer L_X = I + eps^2 S^4.

The mollifier works in chart coordinates and is separable. In rho it is the
filter F = (M + (s/h)^8 D4^T M' D4)^{-1} M, with M the radial mass matrix and D4
the fourth difference: F is M-self-adjoint with spectrum in (0, 1], its symbol is
about 1 / (1 + (k s)^8), and it reproduces cubics in rho exactly, so each row has
unit mass and vanishing moments 1..3. In theta it is the multiplier
1 / (1 + (k sigma)^8) at the arc-length scale sigma = s / (rho R), with the modes
|k| <= 3 passed unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np

from .elliptic_core import pcg
from .errors import FixedPointDiverged, NonZeroMean, ScaleTooCoarse
from .field_calculus import div_free_projection, l2_norm, operators, rot_projection
from .fields import VectorField

FILTER_ORDER = 8


@dataclass(frozen=True, eq=False)
class MollifierKernel:
    scale: float
    moment_order: int
    shift_constant: float
    radial: np.ndarray        # (N, N) matrix acting on rows
    theta_symbol: np.ndarray  # (N, n//2 + 1) multipliers on rfft modes

    @property
    def shift(self):
        return self.shift_constant * self.scale

    def moments(self, chart, i):
        """Moments 0..moment_order of row i's radial weights about rho_i."""
        rho = chart.rho
        return np.array([self.radial[i] @ (rho - rho[i]) ** m for m in range(self.moment_order + 1)])


def _radial_matrix(chart, s, order):
    N, h = chart.n_r, chart.h
    m = chart.mass
    p = order + 1
    D = np.zeros((N - p, N))
    stencil = np.array([(-1.0) ** (p - j) * math.comb(p, j) for j in range(p + 1)])
    for i in range(N - p):
        D[i, i:i + p + 1] = stencil
    mid = 0.5 * (chart.rho[:N - p] + chart.rho[p:]) * h
    G = D.T @ (mid[:, None] * D) * (s / h) ** FILTER_ORDER
    F = np.linalg.solve(np.diag(m) + G, np.diag(m))
    # cubics are eigenvectors with eigenvalue 1; restore that exactly after the
    # ill-conditioned solve
    V = np.vander(chart.rho, p, increasing=True)
    Pi = V @ np.linalg.solve(V.T @ (m[:, None] * V), V.T * m)
    Q = np.eye(N) - Pi
    return Pi + Q @ F @ Q


def mollifier(chart, s, C=1.0, moment_order=3):
    """Build (and cache on the chart) the kernel at scale s."""
    if s <= 0:
        raise ValueError("scale must be positive")
    margin = chart.surface.collar_margin
    if C * s > 0.5 * margin:
        raise ScaleTooCoarse(f"C s = {C * s:.3g} exceeds half the collar margin {margin:.3g}")
    if 2 * moment_order + 2 != FILTER_ORDER:
        raise ValueError(f"moment_order must be {FILTER_ORDER // 2 - 1}")
    cache = chart.__dict__.setdefault("_fbmhd_moll", {})
    key = (float(s), float(C), int(moment_order))
    if key not in cache:
        radial = _radial_matrix(chart, s, moment_order)
        k = np.arange(chart.n_theta // 2 + 1)
        sigma = s / (chart.rho * np.mean(chart.R))
        sym = 1.0 / (1.0 + np.outer(sigma, k) ** FILTER_ORDER)
        sym[:, : min(moment_order + 1, k.size)] = 1.0
        cache[key] = MollifierKernel(float(s), int(moment_order), float(C), radial, sym)
    return cache[key]


def _apply(kernel, vals, n):
    out = np.einsum("ij,...jk->...ik", kernel.radial, vals)
    return np.fft.irfft(np.fft.rfft(out, axis=-1) * kernel.theta_symbol, n=n, axis=-1)


def mollify(u, s, chart=None, C=1.0, moment_order=3):
    chart = chart or u.chart
    if u.chart is not chart:
        raise ValueError("u must live on the given chart")
    kernel = mollifier(chart, s, C, moment_order)
    out = _apply(kernel, u.values, chart.n_theta)
    return type(u)(chart, out)


def divfree_mollify(v, s, C=1.0):
    return div_free_projection(mollify(v, s, v.chart, C))


def tangency_correct(B, chart=None, tol_elliptic=1e-10):
    """Remove the harmonic gradient carrying B . n; curl is unchanged."""
    chart = chart or B.chart
    flux = B.normal_trace().values
    w = chart.boundary_weight
    net = abs(np.sum(flux * w))
    scale = np.sqrt(np.sum(flux**2 * w) * np.sum(w))
    if net > 1e-6 * (scale + l2_norm(B)) + 1e-14:
        raise NonZeroMean(f"net flux {net:.3e} through the boundary")
    return rot_projection(B, tol_elliptic)


def frequency_split(u, s, C=1.0):
    low = mollify(u, s, u.chart, C)
    return low, type(u)(u.chart, u.values - low.values)


class LxSystem:
    """I + eps^2 S^4 with S the W-skew part of X . grad (W = area weights)."""

    def __init__(self, X, epsilon, tol_elliptic=1e-10, max_iterations=5000):
        self.X = X
        self.chart = X.chart
        self.epsilon = float(epsilon)
        self.tol = tol_elliptic
        self.max_iterations = max_iterations
        self._ops = operators(self.chart)
        self.W = self.chart.area_weight

    def T(self, u):
        g = self._ops.grad(u)
        X = self.X.values
        return X[0] * g[0] + X[1] * g[1]

    def T_adjoint(self, w):
        """Euclidean adjoint of T."""
        X = self.X.values
        ops = self._ops
        G = ops.G
        a = X[0] * w
        b = X[1] * w
        # grad u = (D_rho u) G[0] + (D_theta u) G[1]
        r = G[0, 0] * a + G[0, 1] * b
        t = G[1, 0] * a + G[1, 1] * b
        return ops.Drho.T @ r - ops.spec.d1(t)

    def S(self, u):
        return 0.5 * (self.T(u) - self.T_adjoint(self.W * u) / self.W)

    def apply(self, u):
        s2 = self.S(self.S(u))
        return u + self.epsilon**2 * self.S(self.S(s2))

    def inner(self, u, w):
        return float(np.sum(self.W * u * w))


def lx_solve(system, u):
    """Solve (I + eps^2 S^4) u_eps = u for a scalar or vector field (componentwise)."""
    vals = u.values
    if system.epsilon == 0.0:
        return type(u)(u.chart, vals)
    stack = vals[None] if vals.ndim == 2 else vals
    W = system.W
    out = np.empty_like(stack)
    for c in range(stack.shape[0]):
        rhs = W * stack[c]
        x, _ = pcg(lambda z: W * system.apply(z), rhs, lambda r: r / W, system.tol,
                   system.max_iterations)
        out[c] = x
    return type(u)(u.chart, out[0] if vals.ndim == 2 else out)


def energy_identity_residual(system, u, u_eps):
    """||u||^2 - ||u_eps||^2 - 2 eps^2 ||S^2 u_eps||^2 - eps^4 ||S^4 u_eps||^2 (W norms)."""
    e = system.epsilon
    total = 0.0
    uv = u.values[None] if u.values.ndim == 2 else u.values
    ue = u_eps.values[None] if u_eps.values.ndim == 2 else u_eps.values
    for a, b in zip(uv, ue):
        s2 = system.S(system.S(b))
        s4 = system.S(system.S(s2))
        total += (system.inner(a, a) - system.inner(b, b) - 2 * e**2 * system.inner(s2, s2)
                  - e**4 * system.inner(s4, s4))
    return total


@dataclass(frozen=True)
class AlongBResult:
    v: VectorField
    B: VectorField
    iterations: int
    fp_residual: float


def regularize_along_B(v, B, epsilon, chart=None, split_scale=None, tol_elliptic=1e-10,
                       max_fp_iters=10, tol_fp=1e-10):
    """Field-line regularization of (v, B) by a fixed point in the regularized B.

    Returns an AlongBResult; ``v`` is divergence free, ``B`` divergence free and tangent.
    """
    chart = chart or B.chart
    if split_scale is None:
        split_scale = 4 * chart.h
    if epsilon == 0.0:
        return AlongBResult(div_free_projection(v, tol_elliptic), rot_projection(B, tol_elliptic), 0, 0.0)
    Bl, Bh = frequency_split(B, split_scale)
    vl, vh = frequency_split(v, split_scale)
    Y = B
    growth = 0
    prev = np.inf
    diff = 0.0
    it = 0
    hnorm = l2_norm(Bh)
    for it in range(1, max_fp_iters + 1):
        corr = lx_solve(LxSystem(Y, epsilon, tol_elliptic), Bh) if hnorm > 0 else Bh
        Bn = rot_projection(VectorField(chart, Bl.values + corr.values), tol_elliptic)
        diff = l2_norm(VectorField(chart, Bn.values - Y.values))
        Y = Bn
        if diff <= tol_fp * (1 + l2_norm(Bn)):
            break
        growth = growth + 1 if diff > prev else 0
        if growth >= 3:
            raise FixedPointDiverged(f"fixed-point difference grew 3 times (last {diff:.3e})")
        prev = diff
    vcorr = lx_solve(LxSystem(Y, epsilon, tol_elliptic), vh) if l2_norm(vh) > 0 else vh
    v_reg = div_free_projection(VectorField(chart, vl.values + vcorr.values), tol_elliptic)
    return AlongBResult(v_reg, Y, it, diff)
