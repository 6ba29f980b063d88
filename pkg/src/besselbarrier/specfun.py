"""Bessel functions of real nonnegative order.

Modified Bessel I_alpha (plain and exponentially scaled), the ratio
I_{alpha+1}/I_alpha, Bessel J_alpha and its positive zeros. All routines
accept a scalar order and a scalar or array argument; arrays are evaluated
elementwise and scalars come back as Python floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConvergenceError, DomainError

#: Power series below this argument, large-argument expansion above it.
SERIES_CROSSOVER = 30.0
#: Continued fraction for the ratio up to this argument.
RATIO_CF_MAX_Z = 2000.0
RATIO_CF_TOL = 1e-15
RATIO_CF_MAX_ITER = 10_000

_TINY = 1e-300
_EPS = 1e-17


def _check_order(alpha: float) -> float:
    alpha = float(alpha)
    if not math.isfinite(alpha) or alpha < 0:
        raise DomainError(f"order must be finite and >= 0, got {alpha}")
    return alpha


def _as_array(z, *, strictly_positive: bool = False) -> tuple[np.ndarray, bool]:
    arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("argument must be finite")
    if strictly_positive:
        if np.any(arr <= 0):
            raise DomainError("argument must be > 0")
    elif np.any(arr < 0):
        raise DomainError("argument must be >= 0")
    return np.atleast_1d(arr), arr.ndim == 0


def _out(values: np.ndarray, scalar: bool):
    return float(values[0]) if scalar else values


def _use_series(alpha: float, z: np.ndarray) -> np.ndarray:
    # the large-z expansion needs z well beyond alpha**2
    return (z <= SERIES_CROSSOVER) | (z <= 2.0 * alpha * alpha)


def _log_i_series(alpha: float, z: np.ndarray) -> np.ndarray:
    """log I_alpha(z) from the ascending series, z > 0."""
    q = 0.25 * z * z
    term = np.ones_like(z)
    total = np.ones_like(z)
    k = 0
    while True:
        k += 1
        term = term * q / (k * (k + alpha))
        total += term
        if np.all(term <= _EPS * total):
            break
    return alpha * np.log(0.5 * z) - math.lgamma(alpha + 1.0) + np.log(total)


def _scaled_i_asymptotic(alpha: float, z: np.ndarray) -> np.ndarray:
    """sqrt(2 pi z) e^{-z} I_alpha(z) from the Hankel expansion."""
    mu = 4.0 * alpha * alpha
    term = np.ones_like(z)
    total = np.ones_like(z)
    prev = np.full_like(z, np.inf)
    for k in range(1, 200):
        term = -term * (mu - (2 * k - 1) ** 2) / (8.0 * k * z)
        mag = np.abs(term)
        # stop at the smallest term of the (divergent) expansion
        active = mag < prev
        total = np.where(active, total + term, total)
        prev = np.where(active, mag, 0.0)
        if np.all((mag <= _EPS * np.abs(total)) | ~active):
            break
    return total


def log_bessel_i_scaled(alpha: float, z) -> np.ndarray | float:
    """log(e^{-z} I_alpha(z)); -inf at z = 0 for alpha > 0."""
    alpha = _check_order(alpha)
    arr, scalar = _as_array(z)
    out = np.empty_like(arr)
    zero = arr == 0
    out[zero] = 0.0 if alpha == 0 else -np.inf
    ser = _use_series(alpha, arr) & ~zero
    if np.any(ser):
        out[ser] = _log_i_series(alpha, arr[ser]) - arr[ser]
    asy = ~ser & ~zero
    if np.any(asy):
        za = arr[asy]
        out[asy] = np.log(_scaled_i_asymptotic(alpha, za)) - 0.5 * np.log(2 * np.pi * za)
    return _out(out, scalar)


def bessel_i_scaled(alpha: float, z):
    """e^{-z} I_alpha(z); finite for every representable z >= 0."""
    return np.exp(log_bessel_i_scaled(alpha, z))


def bessel_i(alpha: float, z):
    """Modified Bessel function of the first kind I_alpha(z), z >= 0.

    Overflows to inf past z ~ 710; use :func:`bessel_i_scaled` there.
    """
    alpha = _check_order(alpha)
    arr, scalar = _as_array(z)
    with np.errstate(over="ignore"):
        out = np.exp(np.atleast_1d(log_bessel_i_scaled(alpha, arr)) + arr)
    return _out(out, scalar)


def _ratio_asymptotic(alpha: float, z: np.ndarray) -> np.ndarray:
    return _scaled_i_asymptotic(alpha + 1.0, z) / _scaled_i_asymptotic(alpha, z)


def bessel_i_ratio(alpha: float, z):
    """I_{alpha+1}(z) / I_alpha(z) for z > 0.

    Evaluated as the continued fraction 1/(b_1 + 1/(b_2 + ...)) with
    b_k = 2(alpha + k)/z (modified Lentz), which never forms the two
    Bessel values separately.
    """
    alpha = _check_order(alpha)
    arr, scalar = _as_array(z, strictly_positive=True)
    out = np.empty_like(arr)
    big = arr > RATIO_CF_MAX_Z
    if np.any(big):
        out[big] = _ratio_asymptotic(alpha, arr[big])
    # below 1e-8 the two-term series is exact to double precision and the
    # continued-fraction coefficients would overflow for subnormal z
    tiny = arr < 1e-8
    if np.any(tiny):
        zt = arr[tiny]
        out[tiny] = zt / (2 * (alpha + 1)) * (1 - zt * zt / (4 * (alpha + 1) * (alpha + 2)))
    small = ~(big | tiny)
    if np.any(small):
        zs = arr[small]
        f = np.full_like(zs, _TINY)
        c = f.copy()
        d = np.zeros_like(zs)
        done = np.zeros(zs.shape, dtype=bool)
        for k in range(1, RATIO_CF_MAX_ITER + 1):
            b = 2.0 * (alpha + k) / zs
            d = b + d
            d = np.where(d == 0, _TINY, d)
            c = b + 1.0 / c
            c = np.where(c == 0, _TINY, c)
            d = 1.0 / d
            delta = c * d
            f = np.where(done, f, f * delta)
            done |= np.abs(delta - 1.0) < RATIO_CF_TOL
            if np.all(done):
                break
        else:
            raise ConvergenceError(
                f"ratio continued fraction did not converge in {RATIO_CF_MAX_ITER} steps"
            )
        out[small] = f
    return _out(out, scalar)


# --- Bessel J -------------------------------------------------------------

J_SERIES_MAX_Z = 10.0


def _j_series(alpha: float, z: np.ndarray) -> np.ndarray:
    q = -0.25 * z * z
    term = np.ones_like(z)
    total = np.ones_like(z)
    k = 0
    while True:
        k += 1
        term = term * q / (k * (k + alpha))
        total += term
        if np.all(np.abs(term) <= _EPS) or k > 200:
            break
    if alpha == 0:
        lead = np.ones_like(z)
    else:
        with np.errstate(divide="ignore"):
            lead = np.exp(alpha * np.log(0.5 * z) - math.lgamma(alpha + 1.0))
    return lead * total


def _j_hankel(alpha: float, z: np.ndarray) -> np.ndarray:
    mu = 4.0 * alpha * alpha
    term = np.ones_like(z)
    p = np.ones_like(z)
    q = np.zeros_like(z)
    prev = np.full_like(z, np.inf)
    for k in range(1, 200):
        term = term * (mu - (2 * k - 1) ** 2) / (8.0 * k * z)
        mag = np.abs(term)
        active = mag < prev
        # t_k enters P (even k) or Q (odd k) with sign (-1)^{floor(k/2)}
        sign = -1.0 if (k // 2) % 2 else 1.0
        if k % 2:
            q = np.where(active, q + sign * term, q)
        else:
            p = np.where(active, p + sign * term, p)
        prev = np.where(active, mag, 0.0)
        if np.all((mag <= _EPS) | ~active):
            break
    chi = z - (0.5 * alpha + 0.25) * np.pi
    return np.sqrt(2.0 / (np.pi * z)) * (p * np.cos(chi) - q * np.sin(chi))


def _j_miller(alpha: float, z: np.ndarray) -> np.ndarray:
    """Backward recurrence normalised by (z/2)^a = sum (a+2k) G(a+k)/k! J_{a+2k}."""
    n_top = int(np.max(z)) + 60
    f_next = np.zeros_like(z)
    f_cur = np.full_like(z, 1e-30)
    norm = np.zeros_like(z)
    for k in range(n_top, 0, -1):
        order = alpha + k
        if k % 2 == 0:
            m = k // 2
            coef = (alpha + k) * math.exp(math.lgamma(alpha + m) - math.lgamma(m + 1.0))
            norm += coef * f_cur
        f_prev = (2.0 * order / z) * f_cur - f_next
        f_next, f_cur = f_cur, f_prev
        big = np.abs(f_cur) > 1e250
        if np.any(big):
            scale = np.where(big, 1e-250, 1.0)
            f_cur, f_next, norm = f_cur * scale, f_next * scale, norm * scale
    norm += math.gamma(alpha + 1.0) * f_cur
    return f_cur * np.exp(alpha * np.log(0.5 * z)) / norm


def bessel_j(alpha: float, z):
    """Bessel function of the first kind J_alpha(z), z >= 0."""
    alpha = _check_order(alpha)
    arr, scalar = _as_array(z)
    out = np.empty_like(arr)
    ser = arr <= J_SERIES_MAX_Z
    hank = ~ser & (arr > 25.0 + alpha * alpha)
    mill = ~ser & ~hank
    if np.any(ser):
        out[ser] = _j_series(alpha, arr[ser])
    if np.any(hank):
        out[hank] = _j_hankel(alpha, arr[hank])
    if np.any(mill):
        out[mill] = _j_miller(alpha, arr[mill])
    return _out(out, scalar)


def bessel_j_prime(alpha: float, z):
    """dJ_alpha/dz = (alpha/z) J_alpha - J_{alpha+1} (z > 0)."""
    arr, scalar = _as_array(z, strictly_positive=True)
    out = alpha / arr * np.atleast_1d(bessel_j(alpha, arr)) - np.atleast_1d(
        bessel_j(alpha + 1.0, arr)
    )
    return _out(out, scalar)


# --- zeros ----------------------------------------------------------------


@dataclass(frozen=True)
class ZeroTable:
    """First ``count`` positive zeros of J_order, strictly increasing."""

    order: float
    zeros: np.ndarray
    count: int

    def __post_init__(self):
        self.zeros.setflags(write=False)

    def __len__(self) -> int:
        return self.count


def mcmahon_seed(alpha: float, n: np.ndarray) -> np.ndarray:
    beta = (n + 0.5 * alpha - 0.25) * np.pi
    mu = 4.0 * alpha * alpha
    b8 = 8.0 * beta
    return (
        beta
        - (mu - 1.0) / b8
        - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * b8**3)
    )


def literal_seed(alpha: float, n: np.ndarray) -> np.ndarray:
    """The two-term zero expansion as printed in the source text (nu = alpha).

    Offset from the true zeros by about pi/4 for alpha != 1/2; only usable as
    a seed because every zero is root-polished afterwards.
    """
    return np.pi * (n + (2 * alpha - 1) / 2) + (4 * alpha**2 - 1) / (
        2 * (np.pi * n + 2 * alpha - 1)
    )


def _scan_bracket(alpha: float, start: float) -> tuple[float, float]:
    step = 0.25
    lo = start
    f_lo = bessel_j(alpha, lo)
    for _ in range(100_000):
        hi = lo + step
        f_hi = bessel_j(alpha, hi)
        if f_lo == 0.0:
            return lo, lo
        if f_lo * f_hi < 0 or f_hi == 0.0:
            return lo, hi
        lo, f_lo = hi, f_hi
    raise ConvergenceError(f"no sign change found after z={start}")


def _polish(alpha: float, lo: np.ndarray, hi: np.ndarray, x0: np.ndarray) -> np.ndarray:
    """Vectorised safeguarded Newton inside sign-change brackets."""
    f_lo = np.atleast_1d(bessel_j(alpha, lo))
    x = np.clip(x0, lo, hi)
    done = np.zeros(x.shape, dtype=bool)
    for _ in range(200):
        f = np.atleast_1d(bessel_j(alpha, x))
        fp = np.atleast_1d(bessel_j_prime(alpha, x))
        same = np.sign(f) == np.sign(f_lo)
        lo = np.where(same, x, lo)
        f_lo = np.where(same, f, f_lo)
        hi = np.where(same, hi, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = f / fp
        x_new = x - step
        bad = ~np.isfinite(x_new) | (x_new <= lo) | (x_new >= hi)
        x_new = np.where(bad, 0.5 * (lo + hi), x_new)
        converged = (np.abs(x_new - x) <= 4e-16 * x) | (f == 0.0) | (hi - lo <= 4e-16 * x)
        x = np.where(done, x, x_new)
        done |= converged
        if np.all(done):
            return x
    raise ConvergenceError("Newton polishing of Bessel zeros did not converge")


@lru_cache(maxsize=64)
def bessel_j_zeros(alpha: float, n_max: int, seed: str = "mcmahon") -> ZeroTable:
    """First ``n_max`` positive zeros of J_alpha.

    Each zero is bracketed on a window of width pi around its McMahon
    estimate and polished by Newton safeguarded with bisection; ``seed``
    picks the Newton starting point (McMahon, or the printed variant
    ``"literal"`` clipped into the bracket). Windows that do not bracket
    exactly one sign change fall back to a forward scan from the previous
    zero.
    """
    alpha = _check_order(alpha)
    n_max = int(n_max)
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    n = np.arange(1, n_max + 1, dtype=float)
    if seed not in ("mcmahon", "literal"):
        raise DomainError(f"unknown seed variant {seed!r}")
    # brackets always come from McMahon so the index assignment never depends on the seed
    guess = mcmahon_seed(alpha, n)
    lo = np.maximum(guess - 0.5 * np.pi, 1e-6)
    hi = guess + 0.5 * np.pi
    f_lo = np.atleast_1d(bessel_j(alpha, lo))
    f_hi = np.atleast_1d(bessel_j(alpha, hi))
    ok = f_lo * f_hi < 0
    # the window must sit strictly between the neighbouring windows
    ok[1:] &= lo[1:] > guess[:-1]
    ok[:-1] &= hi[:-1] < guess[1:]
    zeros = np.empty(n_max)
    start = guess if seed == "mcmahon" else np.clip(literal_seed(alpha, n), lo, hi)
    if np.any(ok):
        zeros[ok] = _polish(alpha, lo[ok], hi[ok], start[ok])
    bad = np.flatnonzero(~ok)
    if bad.size:
        # sequential fallback; only hit for small n at large order or bad seeds
        for i in bad:
            start = zeros[i - 1] + 1.0 if i > 0 else max(alpha, 1e-6)
            try:
                a, b = _scan_bracket(alpha, start)
            except ConvergenceError as exc:
                raise ConvergenceError(str(exc), index=i + 1) from exc
            zeros[i] = a if a == b else _polish(
                alpha, np.array([a]), np.array([b]), np.array([0.5 * (a + b)])
            )[0]
    gaps = np.diff(zeros)
    if np.any(gaps <= 1.0):
        i = int(np.argmin(gaps))
        raise ConvergenceError("zero table not strictly separated", index=i + 2)
    return ZeroTable(order=alpha, zeros=zeros, count=n_max)


def rayleigh_sum(alpha: float, power: int) -> float:
    """sum_n j_{alpha,n}^{-2 power} in closed form (power 1 or 2)."""
    if power == 1:
        return 1.0 / (4.0 * (alpha + 1.0))
    if power == 2:
        return 1.0 / (16.0 * (alpha + 1.0) ** 2 * (alpha + 2.0))
    raise DomainError("only power 1 and 2 are tabulated")
