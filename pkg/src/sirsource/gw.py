"""Galton-Watson tools for the infection process on (g+1)-regular trees.

A node that stays infectious for ``k`` slots infects each of its ``g``
children with probability ``1 - (1-q)**k``; the infectious period is
geometric with parameter p.  ``offspring_pmf_tau`` caps the period at
``tau`` slots, ``offspring_pmf_inf`` does not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .errors import DivergenceError, InfiniteBoundError, SupercriticalityRequiredError

MAX_SERIES_TERMS = 1_000_000


@dataclass(frozen=True)
class OffspringDist:
    pmf: np.ndarray
    g: int
    q: float
    p: float
    tau: float  # math.inf for the uncapped process

    def mean(self) -> float:
        return float(np.dot(np.arange(self.g + 1), self.pmf))

    def pgf(self, s):
        s = np.asarray(s, dtype=np.float64)
        return np.polynomial.polynomial.polyval(s, self.pmf)


def _binomial_rows(g: int, q: float, periods: np.ndarray) -> np.ndarray:
    # row k: Binomial(g, 1 - (1-q)**periods[k]) pmf
    hit = -np.expm1(periods * math.log1p(-q)) if q < 1 else np.ones(len(periods))
    return binom.pmf(np.arange(g + 1)[None, :], g, hit[:, None])


def offspring_pmf_tau(g: int, q: float, p: float, tau: int) -> OffspringDist:
    if g < 1 or tau < 1:
        raise ValueError("need g >= 1 and tau >= 1")
    periods = np.arange(1, tau + 1, dtype=np.float64)
    weights = p * (1.0 - p) ** (periods[:-1] - 1)
    weights = np.append(weights, 1.0 - weights.sum())
    pmf = weights @ _binomial_rows(g, q, periods)
    return OffspringDist(pmf, g, q, p, tau)


def offspring_pmf_inf(g: int, q: float, p: float, tol: float = 1e-12) -> OffspringDist:
    """Uncapped offspring law, to within ``tol`` in total variation.

    Periods longer than ``k`` are lumped into ``k`` once either the period
    tail ``(1-p)**k`` or the per-child escape ``g (1-q)**k`` drops below
    ``tol``, so this is the capped law at that ``k``.
    """
    if p <= 0:
        raise DivergenceError("p = 0: the infectious period never ends")
    by_p = 1 if p >= 1 else math.ceil(math.log(tol) / math.log1p(-p))
    by_q = 1 if q >= 1 else math.ceil(math.log(tol / g) / math.log1p(-q))
    terms = max(1, min(by_p, by_q))
    if terms > MAX_SERIES_TERMS:
        raise ValueError(f"p and q too small: the series needs {terms} terms")
    capped = offspring_pmf_tau(g, q, p, terms)
    return OffspringDist(capped.pmf, g, q, p, math.inf)


def extinction_prob(g: int, q: float, tol: float = 1e-12, max_iter: int = 1_000_000) -> float:
    """Smallest root of ``rho = (1 - q + q rho)**g``, by fixed-point iteration from 0."""
    if g < 1:
        raise ValueError("need g >= 1")
    if g * q <= 1:
        return 1.0
    rho = 0.0
    for _ in range(max_iter):
        nxt = (1.0 - q + q * rho) ** g
        if abs(nxt - (1.0 - q + q * nxt) ** g) < tol:
            return nxt
        rho = nxt
    return rho


def n0_bound(epsilon: float, rho: float) -> int:
    """Smallest n0 with ``n0 >= 8 log(1/eps) / (1 - rho)`` and ``(1 - rho) n0 / 2 >= 2``."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must be in (0, 1)")
    if rho >= 1:
        raise SupercriticalityRequiredError("needs a supercritical process (rho < 1)")
    return max(math.ceil(8.0 * math.log(1.0 / epsilon) / (1.0 - rho)),
               math.ceil(4.0 / (1.0 - rho)))


def p_tau(g: int, q: float, p: float, tau: int) -> float:
    """Probability that a node infects at least one child when its period is capped at tau."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    total = 0.0
    for t in range(1, tau):
        total += (1 - p) ** (t - 1) * p * (1 - (1 - q) ** (g * t))
    return total + (1 - p) ** (tau - 1) * (1 - (1 - q) ** (g * tau))


def L_prime(epsilon: float, p_tau_val: float, n0: int) -> int:
    if not 0 < epsilon < 1 or n0 < 1:
        raise ValueError("need 0 < epsilon < 1 and n0 >= 1")
    if p_tau_val >= 1:
        raise InfiniteBoundError("p_tau = 1 makes the bound infinite")
    if p_tau_val <= 0:
        raise ValueError("p_tau must be positive")
    # log1p keeps the denominator nonzero when (1 - p_tau)**n0 is tiny
    x = math.exp(n0 * math.log1p(-p_tau_val))
    if x == 0.0:
        raise InfiniteBoundError("L' exceeds the floating-point range")
    return math.ceil(math.log(epsilon) / math.log1p(-x))


def distance_envelope(tau: int, L: int) -> int:
    """Analytic distance bound ``(tau + 1) L - 1`` between estimator and source."""
    return (tau + 1) * L - 1


@dataclass(frozen=True)
class SurvivalEstimate:
    estimate: float
    stderr: float
    trials: int


def survival_mc(g: int, q: float, trials: int, horizon: int, rng: np.random.Generator,
                population_cap: int = 1_000_000) -> SurvivalEstimate:
    """Fraction of Binomial(g, q) branching processes still alive after ``horizon`` generations.

    All trials advance together; a population above ``population_cap`` is
    counted as surviving.
    """
    pop = np.ones(trials, dtype=np.int64)
    survived = np.zeros(trials, dtype=bool)
    live = np.ones(trials, dtype=bool)
    for _ in range(horizon):
        idx = np.nonzero(live)[0]
        if len(idx) == 0:
            break
        pop[idx] = rng.binomial(g * pop[idx], q)
        big = pop[idx] > population_cap
        survived[idx[big]] = True
        live[idx[big | (pop[idx] == 0)]] = False
    survived |= live & (pop > 0)
    est = float(survived.mean())
    return SurvivalEstimate(est, math.sqrt(est * (1 - est) / trials), trials)
