"""Grid field containers tied to a DomainChart."""
from __future__ import annotations

import numpy as np

from .surface_geometry import BoundarySeries


def _check_finite(values, what):
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains NaN or Inf")


class ScalarField:
    """Node values of shape (n_r, n_theta)."""

    def __init__(self, chart, values):
        values = np.array(values, dtype=float)
        if values.shape != chart.shape:
            raise ValueError(f"expected shape {chart.shape}, got {values.shape}")
        _check_finite(values, "ScalarField")
        values.setflags(write=False)
        self.chart = chart
        self.values = values

    @property
    def boundary(self):
        return BoundaryFn(self.chart, self.values[-1])

    def _wrap(self, values):
        return ScalarField(self.chart, values)

    def __add__(self, other):
        return self._wrap(self.values + _vals(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(self.values - _vals(other))

    def __rsub__(self, other):
        return self._wrap(_vals(other) - self.values)

    def __mul__(self, c):
        return self._wrap(self.values * _vals(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self._wrap(-self.values)


class VectorField:
    """Cartesian components, values of shape (2, n_r, n_theta).

    ``div_residual`` is set by the projections that produce the field.
    """

    def __init__(self, chart, values, div_residual=None):
        values = np.array(values, dtype=float)
        if values.shape != (2,) + chart.shape:
            raise ValueError(f"expected shape {(2,) + chart.shape}, got {values.shape}")
        _check_finite(values, "VectorField")
        values.setflags(write=False)
        self.chart = chart
        self.values = values
        self.div_residual = div_residual

    @classmethod
    def from_function(cls, chart, fn):
        fx, fy = fn(chart.x, chart.y)
        return cls(chart, np.array([np.broadcast_to(fx, chart.shape),
                                    np.broadcast_to(fy, chart.shape)]))

    @property
    def x(self):
        return ScalarField(self.chart, self.values[0])

    @property
    def y(self):
        return ScalarField(self.chart, self.values[1])

    def normal_trace(self):
        n = self.chart.normal
        return BoundaryFn(self.chart, n[0] * self.values[0, -1] + n[1] * self.values[1, -1])

    def _wrap(self, values):
        return VectorField(self.chart, values)

    def __add__(self, other):
        return self._wrap(self.values + _vals(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(self.values - _vals(other))

    def __rsub__(self, other):
        return self._wrap(_vals(other) - self.values)

    def __mul__(self, c):
        return self._wrap(self.values * _vals(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self._wrap(-self.values)


class BoundaryFn:
    """Function on the boundary, sampled on the chart's theta grid."""

    def __init__(self, chart, values):
        values = np.array(values, dtype=float)
        if values.shape != (chart.n_theta,):
            raise ValueError(f"expected shape ({chart.n_theta},), got {values.shape}")
        _check_finite(values, "BoundaryFn")
        values.setflags(write=False)
        self.chart = chart
        self.values = values

    @classmethod
    def from_series(cls, chart, series):
        return cls(chart, series.values(chart.n_theta))

    def series(self):
        return BoundarySeries.from_values(self.values)

    def _wrap(self, values):
        return BoundaryFn(self.chart, values)

    def __add__(self, other):
        return self._wrap(self.values + _vals(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(self.values - _vals(other))

    def __rsub__(self, other):
        return self._wrap(_vals(other) - self.values)

    def __mul__(self, c):
        return self._wrap(self.values * _vals(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self._wrap(-self.values)


def _vals(obj):
    return obj.values if hasattr(obj, "values") and not isinstance(obj, np.ndarray) else obj


def as_array(obj):
    """Values of a field, or the object itself if it is already an array or scalar."""
    return np.asarray(_vals(obj), dtype=float)
