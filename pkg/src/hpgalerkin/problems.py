"""Benchmark problem data: oscillatory 1D obstacle with closed-form
solution, 2D Bessel-obstacle and frame-constrained gradient setups, and
the thermoforming coupling data."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

# The Bessel data only needs J0 on [0, 20].  The power series is summed
# in extended precision so its cancellation (max term ~1e5 at z=16)
# stays below 1e-13; the large-argument expansion takes over where its
# own truncation floor has dropped past that.
_BESSEL_SWITCH = 16.0


def bessel_j0(x):
    """Zeroth-order Bessel function of the first kind.

    Power series up to |x| <= 16 (extended-precision accumulation),
    large-argument cosine expansion beyond; good to ~1e-13 absolute.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    z = np.abs(np.atleast_1d(x))
    out = np.empty_like(z)

    small = z <= _BESSEL_SWITCH
    if np.any(small):
        zs = z[small].astype(np.longdouble)
        q = -0.25 * zs * zs
        term = np.ones_like(zs)
        acc = np.ones_like(zs)
        for k in range(1, 60):
            term = term * q / (k * k)
            acc = acc + term
            if np.all(np.abs(term) < 1e-22 * np.abs(acc)):
                break
        out[small] = acc.astype(float)

    if np.any(~small):
        zl = z[~small]
        # a_{k+1} = -a_k (2k+1)^2 / (8(k+1)); split into even/odd sums
        P = np.zeros_like(zl)
        Q = np.zeros_like(zl)
        a = np.ones_like(zl)
        zpow = np.ones_like(zl)
        for k in range(24):
            sign = -1.0 if (k // 2) % 2 else 1.0
            if k % 2 == 0:
                P += sign * a / zpow
            else:
                Q += sign * a / zpow
            a = a * (-((2 * k + 1) ** 2)) / (8.0 * (k + 1))
            zpow = zpow * zl
        w = zl - 0.25 * np.pi
        out[~small] = np.sqrt(2.0 / (np.pi * zl)) * (np.cos(w) * P - np.sin(w) * Q)

    return out[0] if scalar else out.reshape(np.shape(x))


# ---------------------------------------------------------------------------
# 1D oscillatory obstacle problem with known solution

@lru_cache(maxsize=1)
def _oscillatory_constants():
    w = 10.0 * np.pi
    # membrane leaves the obstacle tangentially, so the free boundary
    # satisfies value and slope matching of 2 sin(wx) + a x against 1
    x0 = brentq(lambda x: 2.0 * np.sin(w * x) - 2.0 * w * np.cos(w * x) * x - 1.0,
                0.02, 0.049, xtol=1e-15)
    x3 = brentq(lambda x: 2.0 * np.sin(w * x) - 2.0 * w * np.cos(w * x) * (x - 1.0) - 1.0,
                0.851, 0.88, xtol=1e-15)
    a0 = -2.0 * w * np.cos(w * x0)
    a1 = -2.0 * w * np.cos(w * x3)
    return x0, x3, a0, a1


@dataclass(frozen=True)
class OscillatoryObstacle1D:
    """Obstacle problem on (0,1) with f = 2 w^2 sin(wx), w = 10 pi, phi = 1.

    The solution is known in closed form: two contact plateaus around an
    oscillatory interior that touches the obstacle at five points.
    """

    omega: float = 10.0 * np.pi

    @property
    def domain(self):
        return (0.0, 1.0)

    @property
    def phi(self):
        return 1.0

    def f(self, x):
        return 2.0 * self.omega ** 2 * np.sin(self.omega * x)

    @property
    def x0(self):
        return _oscillatory_constants()[0]

    @property
    def x1(self):
        return 0.05

    @property
    def x2(self):
        return 0.85

    @property
    def x3(self):
        return _oscillatory_constants()[1]

    @property
    def a0(self):
        return _oscillatory_constants()[2]

    @property
    def a1(self):
        return _oscillatory_constants()[3]

    @property
    def touch_points(self):
        """Interior points where the free arc 2 sin(wx) - 1 meets phi."""
        return np.array([0.05, 0.25, 0.45, 0.65, 0.85])

    def exact(self, x):
        x = np.asarray(x, dtype=float)
        w = self.omega
        x0, x3, a0, a1 = _oscillatory_constants()
        conds = [x < x0,
                 (x >= x0) & (x < self.x1),
                 (x >= self.x1) & (x < self.x2),
                 (x >= self.x2) & (x < x3),
                 x >= x3]
        funcs = [lambda t: 2.0 * np.sin(w * t) + a0 * t,
                 1.0,
                 lambda t: 2.0 * np.sin(w * t) - 1.0,
                 1.0,
                 lambda t: 2.0 * np.sin(w * t) + a1 * (t - 1.0)]
        return np.piecewise(x, conds, funcs)

    def exact_deriv(self, x):
        x = np.asarray(x, dtype=float)
        w = self.omega
        x0, x3, a0, a1 = _oscillatory_constants()
        conds = [x < x0,
                 (x >= x0) & (x < self.x1),
                 (x >= self.x1) & (x < self.x2),
                 (x >= self.x2) & (x < x3),
                 x >= x3]
        funcs = [lambda t: 2.0 * w * np.cos(w * t) + a0,
                 0.0,
                 lambda t: 2.0 * w * np.cos(w * t),
                 0.0,
                 lambda t: 2.0 * w * np.cos(w * t) + a1]
        return np.piecewise(x, conds, funcs)


# ---------------------------------------------------------------------------
# 2D setups

@dataclass(frozen=True)
class BesselObstacle2D:
    """Obstacle problem on (0,1)^2 with constant load 100 and an
    oscillatory product obstacle built from J0(20 .)."""

    load: float = 100.0

    @property
    def f(self):
        return self.load

    def phi(self, x, y):
        return (1.0 + bessel_j0(20.0 * x)) * (1.0 + bessel_j0(20.0 * y))


@dataclass(frozen=True)
class GradientFrame2D:
    """Gradient-constrained problem on (0,1)^2: |grad u| <= 1/2 on the
    boundary frame (x or y within [0,1/4] or [3/4,1]), unconstrained in
    the middle square.

    The unconstrained region's bound is represented by a large finite
    cap; any value above the solution's maximal slope is equivalent, and
    the default far exceeds it for the f = 20 load.
    """

    load: float = 20.0
    cap: float = 100.0

    @property
    def f(self):
        return self.load

    def phi(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        frame = ((x <= 0.25) | (x >= 0.75)) | ((y <= 0.25) | (y >= 0.75))
        return np.where(frame, 0.5, self.cap)


# ---------------------------------------------------------------------------
# thermoforming data

@dataclass(frozen=True)
class ThermoformingData:
    """Mould, smoothing and heat-exchange data of the membrane/mould
    coupling; g is piecewise linear, nonincreasing, with kinks at 0, 1."""

    load: float = 100.0
    gamma: float = 1.0

    @property
    def f(self):
        return self.load

    def xi(self, x, y):
        return np.sin(np.pi * x) * np.sin(np.pi * y)

    def mould(self, x, y):
        return (1.1 - 2.0 * np.maximum(np.abs(x - 0.5), np.abs(y - 0.5))
                + np.cos(8.0 * np.pi * x) * np.cos(8.0 * np.pi * y) / 10.0)

    def g(self, s):
        s = np.asarray(s, dtype=float)
        return np.clip((1.0 - s) / 5.0, 0.0, 0.2)

    def g_deriv(self, s):
        # a.e. derivative; at the kinks we use the open-interval value
        s = np.asarray(s, dtype=float)
        return np.where((s >= 0.0) & (s <= 1.0), -0.2, 0.0)
