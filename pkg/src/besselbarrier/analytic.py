"""Leading-order constants for the linear-barrier bridge probability.

For the bridge from x to a + bT - j below a + bt,

    P ~ j(a - x)/T * P_abx + (j/T) * Phat_b(x),

with Phat_b(x) = x(1 - I_{|nu|+1}(bx)/I_{|nu|}(bx)) and

    P_abx = 1 + 2/(b(a-x)) sum_n (1 - E[f(E_n) 1{E_n <= u}]),   u = 1/(ab), y = x/a.

P_abx is computed by two routes: term-by-term summation over the Bessel
zeros, and a split C + C' where C' is a zero-counting sum and C an integral
over w of a rescaled zero sum, replaced by its limit 1/(2 sqrt(2 pi)) once
the rescaling parameter is large.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from . import specfun
from .core import BarrierSpec, Dim, Perturbation, duality_dim, log_time_ratio
from .errors import ConvergenceError, DomainError
from .hitting import ZeroMeasure, barrier_terms, zero_measure_sum
from .results import SeriesResult

#: the series is summed until lambda_n exceeds this multiple of the weight's decay rate
SERIES_RATE_FACTOR = 1000.0
SERIES_MIN_TERMS = 200
#: above this rescaling parameter the inner zero sum takes its limiting value
ETA_THRESHOLD = 1e5
ZERO_SUM_LIMIT = 1 / (2 * math.sqrt(2 * math.pi))
DEGENERATE_GAP = 1e-9


def _check_abx(a: float, b: float, x: float) -> None:
    if not (b > 0 and math.isfinite(b)):
        raise DomainError("b must be finite and > 0")
    if not (x >= 0 and math.isfinite(x) and math.isfinite(a)):
        raise DomainError("need finite a and x >= 0")
    if a - x <= DEGENERATE_GAP:
        raise DomainError("need a > x (x within 1e-9 of a is degenerate)")


def p_hat(dim: Dim, b: float, x: float) -> float:
    """x (1 - I_{|nu|+1}(bx) / I_{|nu|}(bx)); tends to (2|nu|+1)/(2b) as x grows."""
    if b <= 0 or x < 0:
        raise DomainError("need b > 0 and x >= 0")
    if b * x == 0:
        # the ratio is O(bx), so the product underflows with it
        return x
    rho = float(specfun.bessel_i_ratio(dim.abs_nu, b * x))
    return x * (1 - rho)


# --- term-by-term series --------------------------------------------------


def _tail_rayleigh(alpha: float, zeros: np.ndarray) -> tuple[float, float]:
    """sum_{n>N} 1/lam_n and sum_{n>N} 1/lam_n^2 for lam_n = j_n^2/2."""
    s1 = specfun.rayleigh_sum(alpha, 1)
    t1 = 2 * max(s1 - math.fsum(1 / zeros**2), 0.0)
    # the second sum is far below the partial-sum rounding; use the McMahon spacing
    nn = zeros.size + 0.5 * alpha + 0.25
    t2 = 4 / (3 * math.pi**4 * nn**3)
    return t1, t2


def barrier_series(dim: Dim, y: float, u: float,
                   rate_factor: float = SERIES_RATE_FACTOR,
                   min_terms: int = SERIES_MIN_TERMS) -> SeriesResult:
    """sum_n (1 - E[f_{u,y}(E_n) 1{E_n <= u}]) with extrapolated tail.

    Terms behave like c1/lam_n + c2/lam_n^2 + c3/lam_n^3 once lam_n is large against the
    decay rates of e^{-lam s} and of f; the coefficients are fitted on the
    last decade of computed terms and the tail is summed with the exact
    Rayleigh remainder. meta carries the C-part and the e^{-lam u} part.
    """
    if not 0 <= y < 1 or u <= 0:
        raise DomainError("need 0 <= y < 1 and u > 0")
    dd = duality_dim(dim)
    alpha = dd.abs_nu
    rate_needed = rate_factor * max(1 / u, (1 - y) ** 2 / u**2)
    # j_n ~ n pi gives the index where lam_n crosses the needed rate
    n_terms = max(min_terms, int(math.sqrt(2 * rate_needed) / math.pi) + 2)
    zeros = specfun.bessel_j_zeros(alpha, n_terms).zeros
    rates = zeros**2 / 2
    c_part, cp_part, q_err = barrier_terms(dd, y, u, rates)
    terms = c_part + cp_part

    lo = n_terms // 10
    tail_terms = c_part[lo:]
    lam = rates[lo:]
    meta: dict = {}
    if np.all(tail_terms > 0) or np.all(tail_terms < 0):
        idx = np.arange(lo + 1, n_terms + 1, dtype=float)
        slope = np.polyfit(np.log(idx), np.log(np.abs(tail_terms)), 1)[0]
        meta["decay_exponent"] = -slope
        if -slope < 1.5:
            raise ConvergenceError("barrier series terms decay slower than n^-1.5", index=n_terms,
                                   achieved=-slope)
        meta["fast_decay"] = bool(-slope > 2.5)
    design = np.column_stack([1 / lam, 1 / lam**2, 1 / lam**3])
    scale = np.abs(tail_terms) + 1e-300
    coef, *_ = np.linalg.lstsq(design / scale[:, None], tail_terms / scale, rcond=None)
    resid = np.max(np.abs(design @ coef - tail_terms) / scale)
    t1, t2 = _tail_rayleigh(alpha, zeros)
    # third-order remainder is below lam_N^-1 times the second
    t3 = t2 / rates[-1]
    tail = coef[0] * t1 + coef[1] * t2 + coef[2] * t3
    err = abs(coef[1] * t2) + abs(coef[2] * t3) + abs(tail) * resid + q_err * n_terms
    head_sum = math.fsum(terms)
    meta.update(c_sum=math.fsum(c_part) + tail, cprime_sum=math.fsum(cp_part), tail=tail,
                fit=tuple(float(c) for c in coef))
    return SeriesResult(value=head_sum + tail, error=err, terms=n_terms, meta=meta)


def p_abx_series(dim: Dim, a: float, b: float, x: float) -> SeriesResult:
    """P_abx by direct summation over the zeros of J_{|nu|}."""
    _check_abx(a, b, x)
    s = barrier_series(dim, x / a, 1 / (a * b))
    k = 2 / (b * (a - x))
    return SeriesResult(value=1 + k * s.value, error=k * s.error, terms=s.terms,
                        meta={**s.meta, "second_summand": k * s.value})


# --- C / C' split ---------------------------------------------------------


@dataclass(frozen=True)
class CSplit:
    c_abx: SeriesResult
    c_prime: SeriesResult
    a: float = field(default=math.nan)
    b: float = field(default=math.nan)
    x: float = field(default=math.nan)

    @property
    def second_summand(self) -> float:
        return (self.c_abx.value + self.c_prime.value) / (self.a - self.x)

    @property
    def error(self) -> float:
        return (self.c_abx.error + self.c_prime.error) / (self.a - self.x)

    @property
    def p_abx(self) -> float:
        return 1 + self.second_summand


def c_prime(dim: Dim, a: float, b: float) -> SeriesResult:
    """C'_{a,b} = (2/b) sum_n e^{-j_n^2/(2ab)} as (2 sqrt(a)/b) int e^{-z^2/2b} d mu^(a)."""
    dd = duality_dim(dim)
    res = zero_measure_sum(ZeroMeasure(a, dd.abs_nu), lambda z: np.exp(-z * z / (2 * b)),
                           tail_bound=lambda z: math.sqrt(math.pi * b / 2) * math.erfc(z / math.sqrt(2 * b)))
    k = 2 * math.sqrt(a) / b
    return SeriesResult(value=k * res.value, error=k * res.error, terms=res.terms,
                        meta={"limit": math.sqrt(2 * a / (math.pi * b))})


class _ZeroSum:
    """S(eta) = eta^{-1/2} sum_n fhat(j_n / sqrt(eta)), fhat(z) = z^2/2 e^{-z^2/2}."""

    def __init__(self, alpha: float, threshold: float):
        self.threshold = threshold
        n = int(12 * math.sqrt(threshold) / math.pi) + 16
        self.zeros = specfun.bessel_j_zeros(alpha, n).zeros
        self.at_threshold = self.explicit(threshold)

    def explicit(self, eta: float) -> float:
        z2 = self.zeros**2 / eta
        z2 = z2[z2 < 300]
        return float(np.sum(0.5 * z2 * np.exp(-0.5 * z2))) / math.sqrt(eta)

    def __call__(self, eta: float) -> float:
        if eta <= self.threshold:
            return self.explicit(eta)
        return ZERO_SUM_LIMIT + (self.at_threshold - ZERO_SUM_LIMIT) * self.threshold / eta


def r_term(dim: Dim, b: float, x: float, w):
    """R(b,x,w) = 1 - sqrt(1+w) e^{-bwx} I(xb(1+w)) / I(xb)."""
    alpha = duality_dim(dim).abs_nu
    w = np.asarray(w, dtype=float)
    z0 = x * b
    if z0 == 0:
        return 1 - (1 + w) ** (alpha + 0.5)
    log_ratio = specfun.log_bessel_i_scaled(alpha, z0 * (1 + w)) - specfun.log_bessel_i_scaled(alpha, z0)
    return 1 - np.sqrt(1 + w) * np.exp(log_ratio)


def _w_edges(a: float, b: float, x: float) -> list[float]:
    """Breakpoints in v = sqrt(w) around the scale where f leaves 1."""
    vt = math.sqrt(2 * a / (b * (a - x) ** 2))
    pts = {vt / 10, vt, 10 * vt, 1.0}
    return [0.0] + sorted(p for p in pts if p > 0) + [math.inf]


def c_abx(dim: Dim, a: float, b: float, x: float, eta_threshold: float = ETA_THRESHOLD,
          r_bound: float | None = None) -> SeriesResult:
    """C_{a,b,x} = 2 sqrt(a/b) int_0^inf S(eta(w)) g(w) dw.

    eta(w) = ab(1+w)/w and g(w) = (1 - f(s(w))) / (w^{3/2} sqrt(1+w)) with
    s(w) = w/(ab(1+w)). Integrated in v = sqrt(w). When ``r_bound`` is given,
    |R(b,x,w)| <= r_bound min(w,1)/max(bx,1) is asserted on the nodes (only
    meaningful for bx >= 1).
    """
    _check_abx(a, b, x)
    dd = duality_dim(dim)
    u, y = 1 / (a * b), x / a
    zsum = _ZeroSum(dd.abs_nu, eta_threshold)
    worst_r = [0.0]

    def integrand(v: float) -> float:
        if v == 0:
            return 0.0
        w = v * v
        s = u * w / (1 + w)
        one_minus_f = -math.expm1(float(log_time_ratio(dd, y, u, s)))
        eta = a * b * (1 + w) / w
        g_times_jac = 2 * one_minus_f / (v * v * math.sqrt(1 + w))
        if r_bound is not None:
            r = abs(float(r_term(dd, b, x, w)))
            worst_r[0] = max(worst_r[0], r * max(b * x, 1) / min(w, 1))
        return zsum(eta) * g_times_jac

    edges = _w_edges(a, b, x)
    total, err = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(integrand, lo, hi, epsabs=1e-12, epsrel=1e-10, limit=500)
        total += val
        err += e
    if r_bound is not None and worst_r[0] > r_bound:
        raise ConvergenceError("R(b,x,w) exceeds its bound on the quadrature nodes",
                               achieved=worst_r[0])
    k = 2 * math.sqrt(a / b)
    # replacing S by its limit above the threshold is accurate to O(threshold^-2) relative
    approx = abs(zsum.at_threshold - ZERO_SUM_LIMIT) / eta_threshold
    return SeriesResult(value=k * total, error=k * err + approx * k * abs(total),
                        terms=zsum.zeros.size,
                        meta={"limit": (a - x) - math.sqrt(2 * a / (math.pi * b)),
                              "r_ratio_max": worst_r[0]})


def p_abx_integral(dim: Dim, a: float, b: float, x: float, **kw) -> CSplit:
    """P_abx through C_{a,b,x} and C'_{a,b}; requires a >= max(x, 1)."""
    _check_abx(a, b, x)
    if a < 1:
        raise DomainError("the integral route needs a >= 1")
    return CSplit(c_abx=c_abx(dim, a, b, x, **kw), c_prime=c_prime(dim, a, b), a=a, b=b, x=x)


def gaussian_part_integral(a: float, b: float, x: float) -> float:
    """sqrt(a/(2 pi b)) int w^{-3/2}(1+w)^{-1/2}(1 - sqrt(1+w) e^{-bw(a-x)^2/(2a)}) dw by quadrature.

    Its closed form is (a - x) - sqrt(2a/(pi b)).
    """
    k = b * (a - x) ** 2 / (2 * a)

    def f(v):
        # w = v^2
        w = v * v
        num = 1 - math.sqrt(1 + w) * math.exp(-k * w)
        return 2 * num / (v * v * math.sqrt(1 + w)) if v > 0 else 2 * (k - 0.5)

    vt = 1 / math.sqrt(k)
    edges = [0.0] + sorted({vt / 10, vt, 10 * vt, 1.0}) + [math.inf]
    total = math.fsum(integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-12, limit=500)[0]
                      for lo, hi in zip(edges[:-1], edges[1:]))
    return math.sqrt(a / (2 * math.pi * b)) * total


# --- probabilities and bounds ---------------------------------------------


@dataclass(frozen=True)
class LeadingOrder:
    p_abx: SeriesResult
    p_hat: float
    probability: float
    error_envelope: float
    raw_probability: float
    clamped: bool
    finite_T: bool


def _envelope_unit(spec: BarrierSpec) -> float:
    a, x, j, T = spec.a, spec.x, spec.j, spec.T
    gap = a - x
    rel = (math.log(T) ** 2 / T) * max(j * a * a / gap, j * a**2.5 / gap**4)
    return rel * j * gap / T


def leading_order(dim: Dim, spec: BarrierSpec, route: str = "series", finite_T: bool = False,
                  c_env: float | None = None) -> LeadingOrder:
    """Main term j(a-x)/T P_abx + (j/T) Phat_b(x) with its error envelope.

    With ``finite_T`` the constants are evaluated at the exact flat-problem
    time u_T = T/(a(a+bT)) instead of 1/(ab); this is the first-order
    expansion in delta = j/(a+bT) of the flat probability.
    """
    from .constants import get_constant

    a, b, x, j, T = spec.a, spec.b, spec.x, spec.j, spec.T
    _check_abx(a, b, x)
    if route == "series":
        pabx = p_abx_series(dim, a, b, x)
    elif route == "integral":
        split = p_abx_integral(dim, a, b, x)
        pabx = SeriesResult(split.p_abx, split.error, split.c_abx.terms,
                            meta={"c_abx": split.c_abx.value, "c_prime": split.c_prime.value})
    else:
        raise DomainError(f"unknown route {route!r}")
    ph = p_hat(dim, b, x)
    if finite_T:
        top = a + b * T
        u_t = T / (a * top)
        s = barrier_series(dim, x / a, u_t)
        raw = j * (a - x) / T + (j / T) * p_hat(dim, 1.0, x * (b + a / T)) + 2 * j / top * s.value
    else:
        raw = j * (a - x) / T * pabx.value + (j / T) * ph
    c_env = get_constant("c_env") if c_env is None else c_env
    env = c_env * _envelope_unit(spec)
    clamped = not 0 <= raw <= 1
    prob = min(max(raw, 0.0), 1.0)
    if env > 0.5 * abs(prob):
        warnings.warn("error envelope exceeds half the main term; asymptotics unreliable here",
                      RuntimeWarning, stacklevel=2)
    return LeadingOrder(p_abx=pabx, p_hat=ph, probability=prob, error_envelope=env,
                        raw_probability=raw, clamped=clamped, finite_T=finite_T)


def non_sharp_bound(dim: Dim, spec: BarrierSpec, c_env: float | None = None) -> float:
    """c j((a - x) + 1)/T; valid for every x in [0, a]."""
    from .constants import get_constant

    if spec.x > spec.a:
        raise DomainError("need x <= a")
    c = get_constant("c_nonsharp") if c_env is None else c_env
    return c * spec.j * ((spec.a - spec.x) + 1) / spec.T


def check_admissible(h: Perturbation | Callable, c: float | None = None,
                     gamma: float | None = None, horizon: float = 1e4) -> Perturbation | Callable:
    """Accept h if increasing, concave, h(0)=0 and h(t) <= c t^gamma with gamma < 1/6.

    A Perturbation is admissible by construction; other callables are checked
    on a log-spaced grid of [0, horizon] against the declared (c, gamma).
    """
    if isinstance(h, Perturbation):
        return h
    if c is None or gamma is None:
        raise DomainError("a general perturbation needs its growth constants c and gamma")
    Perturbation(c, gamma)  # validates the exponent
    t = np.concatenate([[0.0], np.geomspace(1e-6, horizon, 2000)])
    v = np.asarray([h(s) for s in t], dtype=float)
    if abs(v[0]) > 1e-12:
        raise DomainError("perturbation must vanish at 0")
    if np.any(np.diff(v) < -1e-12):
        raise DomainError("perturbation must be nondecreasing")
    slopes = np.diff(v) / np.diff(t)
    if np.any(np.diff(slopes) > 1e-9 * (1 + np.abs(slopes[1:]))):
        raise DomainError("perturbation must be concave")
    if np.any(v[1:] > c * t[1:] ** gamma * (1 + 1e-12)):
        raise DomainError("perturbation exceeds c t^gamma")
    return h


def concave_bound(dim: Dim, spec: BarrierSpec, slack: float | None = None,
                  p_abx: float | None = None) -> float:
    """Upper bound on T P(stay below a + bt + h(min(t, T-t))).

    j(a-x)(P_abx + Phat/(a-x))(1 + slack); the slack stands in for the
    unspecified vanishing correction and defaults to the configured value.
    """
    from .constants import get_constant

    if spec.perturbation is None:
        raise DomainError("concave bound needs a perturbation")
    check_admissible(spec.perturbation)
    slack = get_constant("concave_slack") if slack is None else slack
    if slack < 0:
        raise DomainError("slack must be >= 0")
    pv = p_abx_series(dim, spec.a, spec.b, spec.x).value if p_abx is None else p_abx
    gap = spec.a - spec.x
    return spec.j * gap * (pv + p_hat(dim, spec.b, spec.x) / gap) * (1 + slack)


def flat_small_delta_coefficient(dim: Dim, y: float, u: float) -> float:
    """lim P(flat bridge stays below 1)/delta as delta -> 0.

    ((1-y) + y(1 - rho(y/u)))/u + 2 sum_n (1 - E[f(E_n) 1{E_n <= u}]).
    """
    dd = duality_dim(dim)
    rho = float(specfun.bessel_i_ratio(dd.abs_nu, y / u)) if y > 0 else 0.0
    return ((1 - y) + y * (1 - rho)) / u + 2 * barrier_series(dd, y, u).value
