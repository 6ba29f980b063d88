"""Bessel processes and bridges: dimensions, densities and the flat reduction.

Densities are evaluated in log form so that the Gaussian factor and the
exponentially large Bessel factor never meet as separate floats. All
barrier computations for d < 2 go through the dual dimension 4 - d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import specfun
from .errors import DomainError


@dataclass(frozen=True)
class Dim:
    """Dimension d >= 0 with its index nu = d/2 - 1 and dual dimension."""

    d: float
    nu: float = field(init=False)
    abs_nu: float = field(init=False)
    d_dual: float = field(init=False)

    def __post_init__(self):
        d = float(self.d)
        if not math.isfinite(d) or d < 0:
            raise DomainError(f"dimension must be finite and >= 0, got {d}")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "nu", d / 2 - 1)
        object.__setattr__(self, "abs_nu", abs(d / 2 - 1))
        object.__setattr__(self, "d_dual", 4 - d if d < 2 else d)

    @property
    def dual(self) -> "Dim":
        return duality_dim(self)


def duality_dim(dim: Dim) -> Dim:
    """Dim of the dual dimension: 4 - d on [0, 2), identity from 2 on."""
    return dim if dim.d >= 2 else Dim(4 - dim.d)


def mirror_dim(dim: Dim) -> Dim:
    """The partner of ``dim`` under d <-> 4 - d, defined for d <= 4."""
    return Dim(4 - dim.d)


@dataclass(frozen=True)
class Perturbation:
    """Concave barrier perturbation h(t) = c t**gamma."""

    c: float
    gamma: float

    def __post_init__(self):
        if self.c < 0 or not math.isfinite(self.c):
            raise DomainError("perturbation c must be finite and >= 0")
        if not 0 < self.gamma < 1 / 6:
            raise DomainError(f"perturbation exponent must lie in (0, 1/6), got {self.gamma}")

    def __call__(self, t):
        return self.c * np.power(np.asarray(t, dtype=float), self.gamma)


@dataclass(frozen=True)
class BarrierSpec:
    """Bridge from x to a + bT - j over [0, T] below a + bt (+ h(min(t, T-t)))."""

    a: float
    b: float
    T: float
    j: float
    x: float
    perturbation: Perturbation | None = None

    def __post_init__(self):
        for name in ("a", "b", "T", "j"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be finite and > 0, got {v}")
        if not (math.isfinite(self.x) and self.x >= 0):
            raise DomainError(f"x must be finite and >= 0, got {self.x}")
        if self.j >= self.a + self.b * self.T:
            raise DomainError("need j < a + bT (positive bridge endpoint)")

    @property
    def endpoint(self) -> float:
        return self.a + self.b * self.T - self.j

    def barrier(self, t):
        t = np.asarray(t, dtype=float)
        level = self.a + self.b * t
        if self.perturbation is not None:
            level = level + self.perturbation(np.minimum(t, self.T - t))
        return level

    def without_perturbation(self) -> "BarrierSpec":
        return replace(self, perturbation=None)


@dataclass(frozen=True)
class FlatProblem:
    """Bridge from 1 - delta to y in time u, barrier at level 1."""

    delta: float
    y: float
    u: float
    dim: Dim

    def __post_init__(self):
        if not 0 <= self.delta < 1:
            raise DomainError(f"delta must lie in [0, 1), got {self.delta}")
        if not 0 <= self.y < 1:
            raise DomainError(f"y must lie in [0, 1), got {self.y}")
        if not self.u > 0:
            raise DomainError(f"u must be > 0, got {self.u}")


def linear_to_flat(spec: BarrierSpec, dim: Dim) -> FlatProblem:
    """Reduce the linear-barrier bridge problem to a flat barrier at 1.

    The bridge x -> a + bT - j over [0, T] stays below a + bt with the same
    probability as the (dual-dimension) bridge 1 - j/(a+bT) -> x/a over
    [0, T/(a(a+bT))] stays below 1.
    """
    if spec.x >= spec.a:
        raise DomainError("reduction needs x < a")
    top = spec.a + spec.b * spec.T
    return FlatProblem(
        delta=spec.j / top,
        y=spec.x / spec.a,
        u=spec.T / (spec.a * top),
        dim=duality_dim(dim),
    )


# --- densities ------------------------------------------------------------


def log_transition_density(dim: Dim, x, y, u):
    """log p^{(d)}(x, y; u), vectorised over x, y, u (broadcast).

    x = 0 uses the analytic limit of (y/x)^nu I_|nu|(xy/u); for d < 2 that
    limit is zero (absorption), returned as -inf. The density vanishes at
    y = 0 in every dimension handled here.
    """
    x, y, u = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, u)))
    if np.any(u <= 0):
        raise DomainError("time must be > 0")
    if np.any(y < 0) or np.any(x < 0):
        raise DomainError("states must be >= 0")
    nu, alpha = dim.nu, dim.abs_nu
    out = np.full(x.shape, -np.inf)
    pos = (x > 0) & (y > 0)
    if np.any(pos):
        xp, yp, up = x[pos], y[pos], u[pos]
        log_w = np.log(xp) + np.log(yp) - np.log(up)
        # below w = 1e-100 use the leading power of I_a; xy/u may underflow there
        tiny = log_w < -230.0
        w = np.exp(np.where(tiny, 0.0, log_w))
        log_i = np.where(tiny, alpha * (log_w - math.log(2)) - math.lgamma(alpha + 1),
                         np.atleast_1d(specfun.log_bessel_i_scaled(alpha, w)))
        out[pos] = (
            np.log(yp) - np.log(up)
            + nu * (np.log(yp) - np.log(xp))
            - (xp - yp) ** 2 / (2 * up)
            + log_i
        )
    start0 = (x == 0) & (y > 0)
    if np.any(start0) and nu >= 0:
        yp, up = y[start0], u[start0]
        out[start0] = (
            np.log(yp / up)
            + nu * np.log(yp * yp / (2 * up))
            - math.lgamma(nu + 1)
            - yp * yp / (2 * up)
        )
    return out[()] if out.ndim == 0 else out


def transition_density(dim: Dim, x, y, u):
    """Density of X_u at y for a d-dimensional Bessel process started at x.

    For d < 2 the formula is applied literally; the total mass is then below
    one because of absorption at 0.
    """
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr <= 0):
        raise DomainError("y must be > 0")
    return np.exp(log_transition_density(dim, x, y, u))


def bridge_transition_density(dim: Dim, x_s, z, y_end, s_to_t: float, t_to_T: float):
    """Density at z of the bridge value after s_to_t, given the ends.

    p(x_s, z; s_to_t) p(z, y_end; t_to_T) / p(x_s, y_end; s_to_t + t_to_T),
    formed in log space; exact zero wherever the numerator underflows.
    """
    if s_to_t <= 0 or t_to_T <= 0:
        raise DomainError("durations must be > 0")
    z = np.asarray(z, dtype=float)
    zz = np.where(z > 0, z, 1.0)
    first = log_transition_density(dim, x_s, zz, s_to_t)
    if y_end > 0:
        second = log_transition_density(dim, zz, y_end, t_to_T)
        den = log_transition_density(dim, x_s, y_end, s_to_t + t_to_T)
    else:
        # pinned at 0: swap the last leg with the y^{d-1} speed-measure symmetry
        second = log_transition_density(dim, 0.0, zz, t_to_T) + (dim.d - 1) * np.log(x_s / zz)
        den = log_transition_density(dim, 0.0, x_s, s_to_t + t_to_T)
    out = np.exp(np.where(z > 0, first + second - den, -np.inf))
    return out[()] if out.ndim == 0 else out


def density_ratio(dim: Dim, delta: float, y: float, u: float) -> float:
    """p^{(dd)}(1, y, u) / p^{(dd)}(1 - delta, y, u) in the dual dimension dd.

    Uses e^{-delta(1-delta/2)/u} (1-delta)^{|nu|} I(y/u)/I((1-delta)y/u),
    with the Bessel quotient formed from scaled values.
    """
    if not 0 <= delta < 1:
        raise DomainError("delta must lie in [0, 1)")
    if not 0 <= y < 1:
        raise DomainError("y must lie in [0, 1)")
    if u <= 0:
        raise DomainError("u must be > 0")
    alpha = dim.abs_nu
    log_r = -delta * (1 - delta / 2) / u + alpha * math.log1p(-delta)
    if y > 0:
        z1, z2 = y / u, y * (1 - delta) / u
        log_r += (
            specfun.log_bessel_i_scaled(alpha, z1)
            - specfun.log_bessel_i_scaled(alpha, z2)
            + (z1 - z2)
        )
    else:
        # I_a(z1)/I_a(z2) -> (1-delta)^{-a} as y -> 0
        log_r -= alpha * math.log1p(-delta)
    return math.exp(log_r)


def density_ratio_first_order(dim: Dim, delta: float, y: float, u: float) -> float:
    """First-order expansion 1 - (delta/u)(1 - y I_{|nu|+1}(y/u)/I_{|nu|}(y/u))."""
    rho = specfun.bessel_i_ratio(dim.abs_nu, y / u) if y > 0 else 0.0
    return 1 - (delta / u) * (1 - y * rho)


def log_time_ratio(dim: Dim, y: float, u: float, s):
    """log f_{u,y}(s) = log p(1, y, u - s) - log p(1, y, u), for 0 <= s < u.

    Evaluated as p(y, 1, .) ratios (the y^{d-1} speed-measure factors
    cancel), which keeps y = 0 finite. The Gaussian exponents are combined
    as s/(u(u-s)) before evaluation so small s does not cancel.
    """
    s = np.asarray(s, dtype=float)
    if u <= 0 or np.any(s < 0) or np.any(s >= u):
        raise DomainError("need 0 <= s < u")
    v = u - s
    log_uv = -np.log1p(-s / u)
    gauss = s / (u * v)
    if y == 0 and dim.nu < 0:
        raise DomainError("y = 0 needs d >= 2")
    if y < 1e-100:
        # leading power of I_a at the start point; y/u may underflow there
        out = (1 + dim.abs_nu) * log_uv - 0.5 * gauss
    else:
        z0 = y / u
        dz = y * gauss
        alpha = dim.abs_nu
        # d/dz log(e^{-z} I_a(z)) = I_{a+1}/I_a + a/z - 1
        slope = float(specfun.bessel_i_ratio(alpha, z0)) + alpha / z0 - 1
        small = dz < 1e-7 * z0
        big_dz = np.where(small, 0.0, dz)
        direct = specfun.log_bessel_i_scaled(alpha, z0 + big_dz) - specfun.log_bessel_i_scaled(alpha, z0)
        bessel = np.where(small, slope * dz, direct)
        out = log_uv - 0.5 * (1 - y) ** 2 * gauss + bessel
    return out[()] if np.ndim(out) == 0 else out
