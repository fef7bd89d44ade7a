"""Free boundaries as graphs over the unit circle and the polar charts built on them.

A boundary is the curve r(theta) = 1 + eta(theta). The domain it encloses is
parameterised by the radial-stretch chart

    (rho, theta) -> rho * (1 + eta(theta)) * (cos theta, sin theta),

sampled on a tensor grid with rho_i = (i + 1/2) h, h = 1 / (n_r - 1/2), so the
innermost ring sits half a cell from the origin and the last ring is the
boundary itself.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import CollarViolation, NotStarShaped


class BoundarySeries:
    """Real periodic function on [0, 2 pi) stored as Fourier coefficients.

    ``coeffs[k + M]`` is the coefficient of exp(i k theta) for k = -M..M.
    """

    def __init__(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim != 1 or coeffs.size % 2 != 1:
            raise ValueError("coeffs must have odd length 2M+1")
        M = coeffs.size // 2
        # enforce Hermitian symmetry so evaluation is real
        sym = 0.5 * (coeffs + np.conj(coeffs[::-1]))
        self.coeffs = sym
        self.coeffs.setflags(write=False)
        self.M = M

    @classmethod
    def zeros(cls, M):
        return cls(np.zeros(2 * M + 1, dtype=complex))

    @classmethod
    def constant(cls, c, M):
        coeffs = np.zeros(2 * M + 1, dtype=complex)
        coeffs[M] = c
        return cls(coeffs)

    @classmethod
    def from_modes(cls, M, cos=None, sin=None, const=0.0):
        """Build sum_k a_k cos(k theta) + b_k sin(k theta) + const from dicts."""
        coeffs = np.zeros(2 * M + 1, dtype=complex)
        coeffs[M] += const
        for k, a in (cos or {}).items():
            coeffs[M + k] += 0.5 * a
            coeffs[M - k] += 0.5 * a
        for k, b in (sin or {}).items():
            coeffs[M + k] += -0.5j * b
            coeffs[M - k] += 0.5j * b
        return cls(coeffs)

    @classmethod
    def from_values(cls, values, M=None):
        """Interpolate samples on the uniform grid theta_j = 2 pi j / n."""
        values = np.asarray(values, dtype=float)
        n = values.size
        if M is None:
            M = (n - 1) // 2
        if M > (n - 1) // 2:
            raise ValueError("M too large for the number of samples")
        c = np.fft.fft(values) / n
        k = np.arange(-M, M + 1)
        return cls(c[k % n])

    @property
    def wavenumbers(self):
        return np.arange(-self.M, self.M + 1)

    def coeff(self, k):
        if abs(k) > self.M:
            return 0.0j
        return self.coeffs[k + self.M]

    def values(self, n):
        """Samples on the uniform n-point grid."""
        if self.M < n / 2:
            full = np.zeros(n, dtype=complex)
            full[self.wavenumbers % n] = self.coeffs
            return np.real(np.fft.ifft(full) * n)
        return self.evaluate(2 * np.pi * np.arange(n) / n)

    def evaluate(self, theta):
        theta = np.asarray(theta, dtype=float)
        phase = np.exp(1j * np.multiply.outer(theta, self.wavenumbers))
        return np.real(phase @ self.coeffs)

    def derivative(self, order=1):
        return BoundarySeries(self.coeffs * (1j * self.wavenumbers) ** order)

    def truncate(self, M):
        if M >= self.M:
            out = np.zeros(2 * M + 1, dtype=complex)
            out[M - self.M:M + self.M + 1] = self.coeffs
            return BoundarySeries(out)
        return BoundarySeries(self.coeffs[self.M - M:self.M + M + 1])

    def shifted(self, phase):
        """The function theta -> f(theta - phase)."""
        return BoundarySeries(self.coeffs * np.exp(-1j * self.wavenumbers * phase))

    def __add__(self, other):
        if isinstance(other, BoundarySeries):
            M = max(self.M, other.M)
            return BoundarySeries(self.truncate(M).coeffs + other.truncate(M).coeffs)
        return self + BoundarySeries.constant(other, self.M)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rmul__(self, c):
        return BoundarySeries(c * self.coeffs)

    def __neg__(self):
        return (-1.0) * self

    def hermitian_defect(self):
        return float(np.max(np.abs(self.coeffs - np.conj(self.coeffs[::-1]))))

    def __repr__(self):
        return f"BoundarySeries(M={self.M})"


def _fine_grid_size(M):
    return max(256, 8 * M + 8)


@dataclass(frozen=True, eq=False)
class SurfaceGraph:
    """Boundary r = 1 + eta(theta), validated against a C^1 collar of half-width collar_delta."""

    eta: BoundarySeries
    collar_delta: float
    sup_eta: float = field(init=False)
    sup_deta: float = field(init=False)

    def __post_init__(self):
        n = _fine_grid_size(self.eta.M)
        object.__setattr__(self, "sup_eta", float(np.max(np.abs(self.eta.values(n)))))
        object.__setattr__(self, "sup_deta", float(np.max(np.abs(self.eta.derivative().values(n)))))

    @property
    def collar_margin(self):
        return self.collar_delta - max(self.sup_eta, self.sup_deta)

    def radius(self, theta):
        return 1.0 + self.eta.evaluate(theta)


def build_surface(eta, collar_delta):
    """Validate eta as a star-shaped graph inside the collar."""
    if collar_delta <= 0:
        raise ValueError("collar_delta must be positive")
    if not isinstance(eta, BoundarySeries):
        eta = BoundarySeries(eta)
    if eta.hermitian_defect() > 1e-12 * (1.0 + np.max(np.abs(eta.coeffs))):
        raise ValueError("eta must be real-valued")
    n = _fine_grid_size(eta.M)
    vals = eta.values(n)
    if np.min(1.0 + vals) <= 0.0:
        raise NotStarShaped(f"1 + eta reaches {np.min(1.0 + vals):.3g}")
    surface = SurfaceGraph(eta, float(collar_delta))
    if max(surface.sup_eta, surface.sup_deta) >= collar_delta:
        raise CollarViolation(
            f"max|eta| = {surface.sup_eta:.4g}, max|eta'| = {surface.sup_deta:.4g}, "
            f"collar_delta = {collar_delta:.4g}")
    return surface


def normal_and_curvature(surface, n_theta):
    """Outward unit normal (2, n) and signed curvature (n,) on the n-point theta grid.

    kappa = (r^2 + 2 r'^2 - r r'') / (r^2 + r'^2)^{3/2}, positive for convex curves.
    """
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    r = 1.0 + surface.eta.values(n_theta)
    r1 = surface.eta.derivative(1).values(n_theta)
    r2 = surface.eta.derivative(2).values(n_theta)
    s = np.hypot(r, r1)
    c, sn = np.cos(theta), np.sin(theta)
    normal = np.array([r * c + r1 * sn, r * sn - r1 * c]) / s
    kappa = (r**2 + 2 * r1**2 - r * r2) / s**3
    return normal, kappa


def heat_regularize(surface, delta, margin=0.1):
    """Heat-flow smoothing of eta followed by a uniform inward shift.

    The shift C delta^2 is the realised overshoot max(eta_tilde - eta) enlarged by
    ``margin`` so the new domain lies inside the old one.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if delta == 0:
        return surface
    eta = surface.eta
    k = eta.wavenumbers
    smooth = BoundarySeries(eta.coeffs * np.exp(-(delta * k) ** 2))
    n = _fine_grid_size(eta.M)
    overshoot = float(np.max(smooth.values(n) - eta.values(n)))
    shift = (1.0 + margin) * max(0.0, overshoot)
    out = smooth - shift
    if np.any(out.values(n) > eta.values(n) + 1e-14):
        raise AssertionError("heat_regularize failed to contain the new domain")
    return build_surface(out, surface.collar_delta)


@dataclass(frozen=True, eq=False)
class IntersectionMask:
    eta_min: BoundarySeries
    eta_min_values: np.ndarray
    mask_A: np.ndarray
    mask_Ah: np.ndarray
    mask_common: np.ndarray


def intersect(a, b, n_theta, tol_eq=None):
    """Pointwise minimum of two graphs and the partition of the theta grid.

    mask_A marks where a lies strictly inside b, mask_Ah the reverse.
    """
    ea = a.eta.values(n_theta)
    eb = b.eta.values(n_theta)
    if tol_eq is None:
        tol_eq = 1e-12 * (1.0 + np.max(np.abs(ea)) + np.max(np.abs(eb)))
    diff = ea - eb
    common = np.abs(diff) <= tol_eq
    mask_A = (diff < 0) & ~common
    mask_Ah = (diff > 0) & ~common
    emin = np.minimum(ea, eb)
    return IntersectionMask(BoundarySeries.from_values(emin), emin, mask_A, mask_Ah, common)


def surface_norm(f, s):
    """Sobolev H^s norm on the circle, (sum (1+k^2)^s |c_k|^2 2 pi)^{1/2}."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    k = f.wavenumbers
    return float(np.sqrt(2 * np.pi * np.sum((1.0 + k**2) ** s * np.abs(f.coeffs) ** 2)))


class DomainChart:
    """Polar tensor grid on the domain enclosed by a SurfaceGraph.

    Arrays have shape (n_r, n_theta); row n_r - 1 is the boundary.
    """

    def __init__(self, surface, n_r, n_theta):
        if n_theta % 2 or n_theta < 8:
            raise ValueError("n_theta must be even and >= 8")
        if n_r < 5:
            raise ValueError("n_r must be >= 5")
        if surface.eta.M >= n_theta // 2:
            raise ValueError("eta has modes beyond the theta grid Nyquist limit")
        self.surface = surface
        self.n_r = int(n_r)
        self.n_theta = int(n_theta)
        self.h = 1.0 / (n_r - 0.5)
        self.rho = (np.arange(n_r) + 0.5) * self.h
        self.rho[-1] = 1.0
        self.dtheta = 2 * np.pi / n_theta
        self.theta = self.dtheta * np.arange(n_theta)
        eta = surface.eta
        self.R = 1.0 + eta.values(n_theta)
        self.Rp = eta.derivative(1).values(n_theta)
        self.Rpp = eta.derivative(2).values(n_theta)
        self.cos = np.cos(self.theta)
        self.sin = np.sin(self.theta)
        for arr in (self.rho, self.theta, self.R, self.Rp, self.Rpp):
            arr.setflags(write=False)

    @property
    def shape(self):
        return (self.n_r, self.n_theta)

    @cached_property
    def b(self):
        """R'/R, the metric cross coefficient."""
        return self.Rp / self.R

    @cached_property
    def A(self):
        return 1.0 + self.b**2

    @cached_property
    def arc(self):
        """Boundary line element s = sqrt(R^2 + R'^2) per unit theta."""
        return np.hypot(self.R, self.Rp)

    @cached_property
    def mass(self):
        """Exact integrals of rho d rho over each radial cell."""
        h, N = self.h, self.n_r
        edges = np.concatenate([[0.0], (np.arange(1, N)) * h, [1.0]])
        return 0.5 * (edges[1:] ** 2 - edges[:-1] ** 2)

    @cached_property
    def area_weight(self):
        return np.outer(self.mass, self.R**2) * self.dtheta

    @cached_property
    def boundary_weight(self):
        return self.arc * self.dtheta

    @cached_property
    def x(self):
        return np.outer(self.rho, self.R * self.cos)

    @cached_property
    def y(self):
        return np.outer(self.rho, self.R * self.sin)

    @cached_property
    def jacobian(self):
        """d(x, y)/d(rho, theta) as an array of shape (2, 2, n_r, n_theta)."""
        rho = self.rho[:, None]
        R, Rp, c, s = self.R, self.Rp, self.cos, self.sin
        J = np.empty((2, 2) + self.shape)
        J[0, 0] = np.broadcast_to(R * c, self.shape)
        J[1, 0] = np.broadcast_to(R * s, self.shape)
        J[0, 1] = rho * (Rp * c - R * s)
        J[1, 1] = rho * (Rp * s + R * c)
        return J

    @cached_property
    def det_jacobian(self):
        return self.rho[:, None] * self.R**2

    @cached_property
    def inverse_jacobian(self):
        """d(rho, theta)/d(x, y): rows are grad rho and grad theta."""
        rho = self.rho[:, None]
        R, Rp, c, s = self.R, self.Rp, self.cos, self.sin
        G = np.empty((2, 2) + self.shape)
        G[0, 0] = np.broadcast_to(c / R + Rp * s / R**2, self.shape)
        G[0, 1] = np.broadcast_to(s / R - Rp * c / R**2, self.shape)
        G[1, 0] = -s / (rho * R)
        G[1, 1] = c / (rho * R)
        return G

    @cached_property
    def normal(self):
        return normal_and_curvature(self.surface, self.n_theta)[0]

    @cached_property
    def curvature(self):
        return normal_and_curvature(self.surface, self.n_theta)[1]

    @cached_property
    def tangent(self):
        n = self.normal
        return np.array([-n[1], n[0]])

    @property
    def area(self):
        return float(np.sum(self.area_weight))

    def to_chart(self, px, py):
        """Chart coordinates (rho, theta) of physical points."""
        theta = np.mod(np.arctan2(py, px), 2 * np.pi)
        rho = np.hypot(px, py) / self.surface.radius(theta)
        return rho, theta

    def same_geometry(self, other):
        return (self.n_r == other.n_r and self.n_theta == other.n_theta
                and np.array_equal(self.R, other.R)
                and np.array_equal(self.surface.eta.coeffs, other.surface.eta.coeffs))

    def __repr__(self):
        return f"DomainChart(n_r={self.n_r}, n_theta={self.n_theta}, M={self.surface.eta.M})"
