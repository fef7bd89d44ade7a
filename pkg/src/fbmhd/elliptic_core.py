"""Laplace and Poisson solves on a DomainChart, harmonic extension and the DtN map.

The Laplacian is discretised through its Dirichlet energy in chart coordinates,

    int |grad u|^2 dx = int int rho A u_rho^2 - 2 b u_rho u_theta + u_theta^2 / rho  drho dtheta,

with A = 1 + b^2 and b = R'/R. Radial differences live on the faces between
nodes (second order), theta derivatives are spectral. The resulting stiffness
matrix K is symmetric and only ever applied matrix-free. Solves use conjugate
gradients preconditioned by the exact disk operator, which is diagonal in the
theta Fourier modes.
"""
from __future__ import annotations

import numpy as np

from .errors import NonZeroMean, SolverDiverged
from .fields import BoundaryFn, ScalarField, as_array


def pcg(apply_A, b, precond, tol, max_iterations, x0=None, project=None):
    """Preconditioned conjugate gradients on arrays of any shape.

    Stops when ||r|| <= tol ||b||. ``project`` (optional) removes a known null
    space from residuals and iterates.
    """
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else x0.copy()
    if bnorm == 0.0:
        return x, 0
    r = b - apply_A(x) if x0 is not None else b.copy()
    if project is not None:
        r = project(r)
    z = precond(r)
    if project is not None:
        z = project(z)
    p = z.copy()
    rz = np.vdot(r, z).real
    for it in range(1, max_iterations + 1):
        if np.linalg.norm(r) <= tol * bnorm:
            return x, it - 1
        Ap = apply_A(p)
        pAp = np.vdot(p, Ap).real
        if pAp <= 0.0:
            raise SolverDiverged(f"nonpositive curvature in CG (p.Ap = {pAp:.3e})")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if project is not None:
            r = project(r)
        z = precond(r)
        if project is not None:
            z = project(z)
        rz_new = np.vdot(r, z).real
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(r) <= tol * bnorm:
        return x, max_iterations
    raise SolverDiverged(
        f"CG residual {np.linalg.norm(r) / bnorm:.3e} above {tol:.1e} after {max_iterations} iterations")


class ThetaSpectral:
    """Spectral theta derivatives on an even n-point grid (last axis)."""

    def __init__(self, n):
        self.n = n
        k = np.arange(n // 2 + 1, dtype=float)
        self.k = k
        k1 = k.copy()
        k1[-1] = 0.0  # the Nyquist mode has no real first derivative
        self.ik1 = 1j * k1
        self.k1sq = k1**2
        self.ksq = k**2

    def d1(self, u):
        return np.fft.irfft(np.fft.rfft(u, axis=-1) * self.ik1, n=self.n, axis=-1)

    def d2(self, u):
        """Second derivative with the Nyquist mode kept (symbol -k^2)."""
        return np.fft.irfft(np.fft.rfft(u, axis=-1) * (-self.ksq), n=self.n, axis=-1)

    def d11(self, u):
        """First derivative applied twice (Nyquist removed)."""
        return np.fft.irfft(np.fft.rfft(u, axis=-1) * (-self.k1sq), n=self.n, axis=-1)


class EllipticWorkspace:
    """Assembled coefficients and preconditioners for one chart."""

    def __init__(self, chart, tol_elliptic=1e-10, max_iterations=2000):
        self.chart = chart
        self.tol = float(tol_elliptic)
        self.max_iterations = int(max_iterations)
        N, n = chart.shape
        h = chart.h
        self.N, self.n, self.h = N, n, h
        self.spec = ThetaSpectral(n)
        self.rho_face = np.arange(1, N) * h
        vol = np.full(N, h)
        vol[-1] = 0.5 * h
        self.theta_weight = vol / chart.rho
        self.A = chart.A
        self.b = chart.b
        self.dtheta = chart.dtheta
        self.mass = chart.mass
        self._build_preconditioners()

    # stiffness ---------------------------------------------------------------
    def apply_K(self, u):
        """K u for u of shape (N, n); u.K u equals the discrete Dirichlet energy."""
        h, dth = self.h, self.dtheta
        du = u[1:] - u[:-1]
        uth = self.spec.d1(u)
        avg_uth = 0.5 * (uth[1:] + uth[:-1])
        face = self.rho_face[:, None] * self.A * du / h - self.b * avg_uth
        out = np.zeros_like(u)
        out[:-1] -= face
        out[1:] += face
        g = self.b * du
        avg_t = np.zeros_like(u)
        avg_t[:-1] += 0.5 * g
        avg_t[1:] += 0.5 * g
        out += self.spec.d1(avg_t)
        out -= self.theta_weight[:, None] * self.spec.d2(u)
        return out * dth

    def energy(self, u):
        """Discrete Dirichlet energy u.K u."""
        u = as_array(u)
        return float(np.sum(u * self.apply_K(u)))

    def _radial_matrix(self):
        N, h = self.N, self.h
        L = np.zeros((N, N))
        for f, rf in enumerate(self.rho_face):
            c = rf / h
            L[f, f] += c
            L[f + 1, f + 1] += c
            L[f, f + 1] -= c
            L[f + 1, f] -= c
        return L

    def _build_preconditioners(self):
        L = self._radial_matrix()
        ksq = self.spec.ksq
        W = np.diag(self.theta_weight)
        full = np.array([(L + k2 * W) * self.dtheta for k2 in ksq])
        inner = full[:, :-1, :-1]
        self._pinv_dirichlet = np.linalg.inv(inner)
        neu = np.empty_like(full)
        neu[0] = np.linalg.pinv(full[0])
        neu[1:] = np.linalg.inv(full[1:])
        self._pinv_neumann = neu

    def _precond(self, r, table):
        rh = np.fft.rfft(r, axis=-1)
        zh = np.einsum("kij,jk->ik", table, rh)
        return np.fft.irfft(zh, n=self.n, axis=-1)

    # solves ------------------------------------------------------------------
    def solve_dirichlet(self, f, g, tol=None):
        """Array-level Dirichlet solve of Delta u = f, u = g on the boundary."""
        tol = self.tol if tol is None else tol
        N, n = self.N, self.n
        f = np.broadcast_to(np.asarray(f, dtype=float), (N, n))
        g = np.broadcast_to(np.asarray(g, dtype=float), (n,))
        ub = np.zeros((N, n))
        ub[-1] = g
        rhs = -(self.mass[:, None] * self.chart.R**2 * self.dtheta * f) - self.apply_K(ub)
        rhs = rhs[:-1]

        def apply(x):
            full = np.zeros((N, n))
            full[:-1] = x
            return self.apply_K(full)[:-1]

        x, self.last_iterations = pcg(
            apply, rhs, lambda r: self._precond(r, self._pinv_dirichlet), tol, self.max_iterations)
        u = ub
        u[:-1] = x
        return u

    def solve_neumann(self, flux, tol=None):
        """Solve K u = B flux (flux = normal derivative on the boundary), mean-free trace."""
        tol = self.tol if tol is None else tol
        N, n = self.N, self.n
        rhs = np.zeros((N, n))
        rhs[-1] = flux * self.chart.boundary_weight
        rhs -= rhs.mean()

        def project(r):
            return r - r.mean()

        u, self.last_iterations = pcg(
            self.apply_K, rhs, lambda r: self._precond(r, self._pinv_neumann), tol,
            self.max_iterations, project=project)
        w = self.chart.boundary_weight
        return u - np.sum(u[-1] * w) / np.sum(w)

    def green_flux(self, u, f=None):
        """n . grad u on the boundary from the discrete Green identity.

        With Delta u = f known, ((K u)_bdry + m R^2 dtheta f) / (s dtheta).
        """
        Ku = self.apply_K(u)[-1]
        if f is not None:
            f = np.broadcast_to(np.asarray(f, dtype=float), (self.N, self.n))
            Ku = Ku + self.mass[-1] * self.chart.R**2 * self.dtheta * f[-1]
        return Ku / self.chart.boundary_weight

    def one_sided_normal(self, u):
        """n . grad u on the boundary from one-sided second-order radial differences."""
        h = self.h
        u_rho = (3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * h)
        u_th = self.spec.d1(u[-1])
        return (self.A * u_rho - self.b * u_th) / self.chart.arc


def _boundary_values(ws, g):
    if g is None:
        return np.zeros(ws.n)
    if hasattr(g, "wavenumbers"):
        return g.values(ws.n)
    return np.broadcast_to(as_array(g), (ws.n,)).astype(float)


def poisson_dirichlet(ws, f, g=None):
    """u with Delta u = f in the domain and u = g on the boundary."""
    u = ws.solve_dirichlet(as_array(f), _boundary_values(ws, g))
    return ScalarField(ws.chart, u)


def inverse_laplacian(ws, f):
    """Delta^{-1} f with zero Dirichlet data."""
    return poisson_dirichlet(ws, f, None)


def harmonic_extension(ws, g):
    return poisson_dirichlet(ws, 0.0, g)


def normal_trace_grad(ws, u, laplacian=None):
    """n . grad u on the boundary.

    Without ``laplacian`` the trace uses one-sided radial differences; when the
    Laplacian of u is known the discrete Green identity is used instead, which is
    exact for the finite-volume solutions produced here.
    """
    arr = as_array(u)
    if laplacian is None:
        vals = ws.one_sided_normal(arr)
    else:
        vals = ws.green_flux(arr, as_array(laplacian))
    return BoundaryFn(ws.chart, vals)


def dtn(ws, g):
    """Dirichlet-to-Neumann map N g = n . grad(H g)."""
    u = ws.solve_dirichlet(0.0, _boundary_values(ws, g))
    return BoundaryFn(ws.chart, ws.green_flux(u))


def dtn_inverse(ws, f):
    """Mean-zero g with N g = f."""
    vals = _boundary_values(ws, f)
    w = ws.chart.boundary_weight
    mean = np.sum(vals * w)
    if abs(mean) > 1e-8 * np.sqrt(np.sum(vals**2 * w)) * np.sqrt(np.sum(w)) + 1e-300:
        raise NonZeroMean(f"boundary integral {mean:.3e} is not zero")
    u = ws.solve_neumann(vals)
    return BoundaryFn(ws.chart, u[-1])


def dtn_power(ws, g, m):
    if m < 0:
        raise ValueError("m must be nonnegative")
    out = BoundaryFn(ws.chart, _boundary_values(ws, g))
    for _ in range(m):
        out = dtn(ws, out)
    return out


def boundary_inner(ws, f, g):
    """<f, g> in L^2 of the boundary curve."""
    return float(np.sum(as_array(f) * as_array(g) * ws.chart.boundary_weight))
