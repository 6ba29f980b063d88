"""Hitting time of level 1 as a sum of exponentials over Bessel zeros.

Under the Bessel law started at 1 - delta, the hitting time of 1 has the law
of sum_n I_n E_n with I_n ~ Bernoulli(1 - (1 - delta)^2) and
E_n ~ Exp(j_{|nu|,n}^2 / 2), all independent. This module samples that sum,
builds the rescaled zero-counting sums, and evaluates the flat-barrier
bridge probability through the identity

    P(stay below 1) = 1 - [p(1, y, u) / p(1 - delta, y, u)] E[f(tau) 1{tau <= u}]

with f(s) = p(1, y, u - s) / p(1, y, u).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from . import specfun
from .core import Dim, FlatProblem, density_ratio, duality_dim, log_time_ratio, log_transition_density
from .errors import ConvergenceError, DomainError
from .results import MCEstimate, SeriesResult

#: standard deviation allowed for the part of the series that is replaced by its mean
TAIL_SD_TOL = 1e-5
SAMPLE_CHUNK = 8192
#: below this success probability only the selected terms are generated
GEOMETRIC_BELOW = 0.15


@dataclass(frozen=True)
class HittingModel:
    """Truncated exponential-sum law of the hitting time of 1 from 1 - delta."""

    dim: Dim
    delta: float
    p_delta: float
    rates: np.ndarray
    truncation: int
    tail_mean: float
    tail_sd: float

    @property
    def mean(self) -> float:
        """Exact mean p_delta * sum_n 2/j_n^2 = (1 - (1-delta)^2) / dd."""
        return self.p_delta * 2 * specfun.rayleigh_sum(self.dim.abs_nu, 1)


def hitting_model(dim: Dim, delta: float, tail_sd_tol: float = TAIL_SD_TOL) -> HittingModel:
    """Choose the truncation so the discarded tail has sd below ``tail_sd_tol``.

    The tail is compensated by its exact mean, taken from the closed-form
    Rayleigh sums sum 1/j^2 and sum 1/j^4.
    """
    if not 0 <= delta < 1:
        raise DomainError("delta must lie in [0, 1)")
    dd = duality_dim(dim)
    alpha = dd.abs_nu
    p = 1 - (1 - delta) ** 2
    s1, s2 = specfun.rayleigh_sum(alpha, 1), specfun.rayleigh_sum(alpha, 2)
    n = 64
    while True:
        zeros = specfun.bessel_j_zeros(alpha, n).zeros
        inv2 = 1 / zeros**2
        # tails beyond index k, for k = 1..n
        tail1 = s1 - np.cumsum(inv2)
        tail2 = s2 - np.cumsum(inv2**2)
        var = p * (2 - p) * 4 * np.maximum(tail2, 0.0)
        ok = np.flatnonzero(np.sqrt(var) <= tail_sd_tol)
        if ok.size:
            k = int(ok[0]) + 1
            break
        n *= 2
    return HittingModel(
        dim=dd,
        delta=float(delta),
        p_delta=p,
        rates=zeros[:k] ** 2 / 2,
        truncation=k,
        tail_mean=float(p * 2 * max(tail1[k - 1], 0.0)),
        tail_sd=float(math.sqrt(var[k - 1])),
    )


def sample_taus(model: HittingModel, n_samples: int, rng) -> np.ndarray:
    """``n_samples`` independent draws of the truncated series plus tail mean.

    Only the indices with I_n = 1 are visited: they are generated through
    geometric gaps, so the cost per draw is about p_delta * truncation.
    """
    rng = np.random.default_rng(rng)
    out = np.full(n_samples, model.tail_mean)
    p, n_terms = model.p_delta, model.truncation
    if p == 0 or n_samples == 0:
        return out
    rates = model.rates
    if p >= GEOMETRIC_BELOW:
        for start in range(0, n_samples, SAMPLE_CHUNK):
            m = min(SAMPLE_CHUNK, n_samples - start)
            # one uniform per term: U < p selects the term and U/p is again uniform
            uni = rng.random((m, n_terms))
            with np.errstate(divide="ignore"):
                e = -np.log(uni / p) / rates
            out[start : start + m] += np.where(uni < p, e, 0.0).sum(axis=1)
        return out
    mean_k = p * n_terms
    width = int(math.ceil(mean_k + 6 * math.sqrt(mean_k * (1 - p)) + 8))
    for start in range(0, n_samples, SAMPLE_CHUNK):
        m = min(SAMPLE_CHUNK, n_samples - start)
        pos = np.cumsum(rng.geometric(p, size=(m, width)), axis=1)
        short = np.flatnonzero(pos[:, -1] <= n_terms)
        acc = np.zeros(m)
        for r in short:
            # rare rows whose successes outrun the block width
            extra = [pos[r, -1]]
            while extra[-1] <= n_terms:
                extra.append(extra[-1] + rng.geometric(p))
            idx = np.array(extra[1:-1], dtype=np.int64)
            acc[r] = (rng.standard_exponential(idx.size) / rates[idx - 1]).sum()
        valid = pos <= n_terms
        lam = rates[np.minimum(pos, n_terms) - 1]
        e = rng.standard_exponential((m, width)) / lam
        out[start : start + m] += np.where(valid, e, 0.0).sum(axis=1) + acc
    return out


def sample_tau(model: HittingModel, rng) -> float:
    return float(sample_taus(model, 1, rng)[0])


# --- exponential weights --------------------------------------------------


def _log_f(dim: Dim, y: float, u: float, s):
    with np.errstate(divide="ignore", invalid="ignore"):
        return log_time_ratio(dim, y, u, s)


def exp_barrier_weight(dim: Dim, y: float, u: float, lam: float,
                       epsabs: float = 1e-12) -> float:
    """E[f_{u,y}(E) 1{E <= u}] for E ~ Exp(lam), by adaptive quadrature.

    The integral over [0, u] is split at u - (1-y)^2/50; beyond the split the
    substitution r = 1/(u - s) maps the flat approach to zero at s = u onto an
    infinite interval.
    """
    if lam <= 0 or u <= 0 or not 0 <= y < 1:
        raise DomainError("need lam > 0, u > 0 and 0 <= y < 1")
    dd = duality_dim(dim)
    split = u - (1 - y) ** 2 / 50
    split = split if split > 0 else 0.5 * u

    def head(s):
        return lam * math.exp(-lam * s + float(_log_f(dd, y, u, s)))

    def tail(r):
        s = u - 1 / r
        return lam * math.exp(-lam * s + float(_log_f(dd, y, u, s))) / (r * r)

    # points at the decay scales of e^{-lam s} and of f near 0
    scales = [k / lam for k in (1.0, 8.0, 40.0)] + [k * u * u / (1 - y) ** 2 for k in (1.0, 8.0)]
    pts = sorted(p for p in scales if 0 < p < split)
    v1, e1 = integrate.quad(head, 0.0, split, points=pts or None, epsabs=epsabs,
                            epsrel=1e-10, limit=400)
    if lam * split > 745:
        v2, e2 = 0.0, 0.0
    else:
        v2, e2 = integrate.quad(tail, 1 / (u - split), np.inf, epsabs=epsabs, epsrel=1e-10,
                                limit=400)
    err = e1 + e2
    if err > 1e3 * epsabs + 1e-9 * abs(v1 + v2):
        raise ConvergenceError("exponential barrier weight quadrature", achieved=err)
    return v1 + v2


def barrier_terms(dim: Dim, y: float, u: float, rates: np.ndarray,
                  epsabs: float = 1e-13) -> tuple[np.ndarray, np.ndarray, float]:
    """Vectorised 1 - E[f(E_n) 1{E_n <= u}] for all rates at once.

    Returns (c_part, cprime_part, err) with
    c_part_n = lam_n int_0^u e^{-lam_n s} (1 - f(s)) ds and
    cprime_part_n = e^{-lam_n u}; their sum is the n-th term.
    """
    dd = duality_dim(dim)
    rates = np.asarray(rates, dtype=float)
    split = u - (1 - y) ** 2 / 50
    split = split if split > 0 else 0.5 * u

    def one_minus_f(s):
        return -np.expm1(float(_log_f(dd, y, u, s)))

    def head(s):
        return rates * np.exp(-rates * s) * one_minus_f(s)

    def tail(r):
        s = u - 1 / r
        return rates * np.exp(-rates * s) * one_minus_f(s) / (r * r)

    total_err = 0.0
    # piecewise on a geometric set of breakpoints so every decay scale 1/lam is resolved
    lam_max = float(rates.max())
    f_scale = 2 * u * u / (1 - y) ** 2
    edges = [0.0]
    s = min(1 / lam_max, f_scale, split) / 4
    while s < split:
        edges.append(s)
        s *= 4
    edges.append(split)
    c_part = np.zeros_like(rates)
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, err = integrate.quad_vec(head, lo, hi, epsabs=epsabs, epsrel=1e-11, norm="max",
                                      limit=200)
        c_part += val
        total_err += err
    val, err = integrate.quad_vec(tail, 1 / (u - split), np.inf, epsabs=epsabs, epsrel=1e-11,
                                  norm="max", limit=200)
    c_part += val
    total_err += err
    return c_part, np.exp(-rates * u), total_err


# --- zero-counting measure ------------------------------------------------


@dataclass(frozen=True)
class ZeroMeasure:
    """mu^(eta) = eta^{-1/2} sum_n delta_{j_n / sqrt(eta)} for J_order."""

    eta: float
    order: float

    def __post_init__(self):
        if not self.eta > 0:
            raise DomainError("eta must be > 0")


def zero_measure_sum(measure: ZeroMeasure, f: Callable[[np.ndarray], np.ndarray],
                     tol: float = 1e-14, tail_bound: Callable[[float], float] | None = None,
                     max_terms: int = 2_000_000) -> SeriesResult:
    """int f d mu^(eta), compared against (1/pi) int_0^inf f.

    Terms are summed in doubling blocks until the tail is below ``tol``. The
    tail is bounded by ``tail_bound(z)`` (an integrable envelope of |f| from
    z on) when given, otherwise by the last block's sum times its decay
    ratio. A block whose largest term exceeds the previous block's is
    reported as a non-decaying integrand.
    """
    root = math.sqrt(measure.eta)
    n = 256
    total = 0.0
    done = 0
    prev_max = math.inf
    last_block = math.inf
    tail_est = math.inf
    while True:
        zeros = specfun.bessel_j_zeros(measure.order, n).zeros
        block = np.asarray(f(zeros[done:] / root), dtype=float) / root
        block_sum = float(np.sum(block))
        bmax = float(np.max(np.abs(block))) if block.size else 0.0
        if done and bmax > prev_max * (1 + 1e-12) and bmax > tol:
            raise ConvergenceError("zero-measure sum: terms are not decaying", index=n)
        total += block_sum
        if tail_bound is not None:
            tail_est = abs(tail_bound(zeros[-1] / root)) * root / math.pi
        elif done:
            ratio = abs(block_sum) / abs(last_block) if last_block else 0.0
            tail_est = abs(block_sum) * ratio / max(1 - ratio, 1e-3) if ratio < 1 else math.inf
        done = n
        prev_max = float(np.abs(block[-min(16, block.size):]).max()) if block.size else 0.0
        last_block = block_sum
        if tail_est <= tol and done > 256:
            break
        if n >= max_terms:
            raise ConvergenceError("zero-measure sum did not converge", index=n,
                                   achieved=tail_est)
        n *= 2
    integral, ierr = integrate.quad(lambda z: float(f(np.array([z]))[0]), 0, np.inf,
                                    epsabs=1e-14, epsrel=1e-12, limit=500)
    comparison = integral / math.pi
    return SeriesResult(
        value=total,
        error=tail_est,
        terms=done,
        meta={"eta": measure.eta, "comparison": comparison, "difference": total - comparison,
              "comparison_error": ierr / math.pi},
    )


# --- semi-analytic flat barrier -------------------------------------------


def _chunk_rng(seed: int, c: int):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7, c)))


def flat_barrier_semianalytic(flat: FlatProblem, n_samples: int = 1_000_000, seed: int = 0,
                              scale: float = 1.0, model: HittingModel | None = None) -> MCEstimate:
    """Flat-barrier bridge probability from sampled hitting times.

    With ``scale = c`` the problem is first mapped by Brownian scaling to a
    bridge from (1-delta)/sqrt(c) to y/sqrt(c) over u/c below 1/sqrt(c)
    and evaluated there (the probability is scale invariant).
    """
    dd = duality_dim(flat.dim)
    if flat.delta == 0:
        return MCEstimate(0.0, 0.0, n_samples, seed, meta={"reason": "starts on the barrier"})
    root = math.sqrt(scale)
    level, start, end, u = 1 / root, (1 - flat.delta) / root, flat.y / root, flat.u / scale
    model = model or hitting_model(dd, flat.delta)
    # density ratio p(L, y', u') / p(x0', y', u') in the scaled coordinates
    if scale == 1.0:
        ratio = density_ratio(dd, flat.delta, flat.y, flat.u)
    else:
        ends = np.array([end if end > 0 else 0.0])
        # p(L, y) / p(x0, y) = [p(y, L) / p(y, x0)] (x0 / L)^{d-1}
        ratio = float(np.exp(
            _log_density_from(dd, level, ends, u) - _log_density_from(dd, start, ends, u)
            + (dd.d - 1) * math.log(start / level)
        )[0])
    sums = 0.0
    sq = 0.0
    n_chunks = max(1, math.ceil(n_samples / SAMPLE_CHUNK))
    for c in range(n_chunks):
        m = min(SAMPLE_CHUNK, n_samples - c * SAMPLE_CHUNK)
        tau = sample_taus(model, m, _chunk_rng(seed, c)) * level * level
        inside = tau < u
        weight = np.zeros(m)
        if np.any(inside):
            logf = _log_density_from(dd, level, np.full(inside.sum(), end), u - tau[inside]) - \
                _log_density_from(dd, level, np.array([end]), u)
            weight[inside] = np.exp(logf)
        vals = 1 - ratio * weight
        sums += vals.sum()
        sq += (vals**2).sum()
    mean = sums / n_samples
    var = max(sq / n_samples - mean * mean, 0.0) * n_samples / max(n_samples - 1, 1)
    return MCEstimate(
        mean=mean,
        stderr=math.sqrt(var / n_samples),
        n_samples=n_samples,
        seed=seed,
        meta={"density_ratio": ratio, "truncation": model.truncation,
              "tail_mean": model.tail_mean, "scale": scale},
    )


def _log_density_from(dim: Dim, x: float, y: np.ndarray, v):
    """log p(x, y; v) written through p(y, x; v) so that y = 0 stays finite.

    Only ratios with a common end point y are ever formed from this, so the
    y^{d-1} factor relating the two orientations cancels.
    """
    return log_transition_density(dim, y, x, v)
