"""Independent brute-force oracles used to freeze and cross-check expectations.

These deliberately avoid the production code paths: the decay-rate oracle
integrates the raw energy variable with a graded trapezoid grid (no
substitution, no Gauss-Legendre), the Poisson-binomial oracle enumerates all
2^n outcomes, and the BCS inverse uses scipy's root finder.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy import optimize

KB_GHZ_PER_K = 20.836619


def gamma_qp_trapezoid(
    f_q_GHz: float,
    delta_thin_GHz: float,
    delta_thick_GHz: float,
    t_qp_K: float,
    x_qp: float,
    w_GHz: float,
    n_points: int = 10_000_000,
    eps_min_GHz: float = 1.0e-14,
) -> float:
    """QP decay rate by trapezoid on a log-graded raw energy grid.

    Integrates over s = energy - thick-lead gap from eps_min to 36 kT; the
    excluded [0, eps_min] sliver, where the integrand is g(0)/sqrt(s), is
    added analytically as 2 sqrt(eps_min) g(0).
    """
    kt = t_qp_K * KB_GHZ_PER_K
    s = np.geomspace(eps_min_GHz, 36.0 * kt, n_points)
    detuning = f_q_GHz - (delta_thin_GHz - delta_thick_GHz)
    smooth = (
        (1.0 / np.sqrt(s + detuning + 1j * w_GHz)).real
        * np.exp(-s / kt)
        * np.sqrt(delta_thick_GHz / (2.0 * np.pi * kt))
    )
    integral = np.trapezoid(smooth / np.sqrt(s), s)
    g0 = (1.0 / np.sqrt(detuning + 1j * w_GHz)).real * np.sqrt(
        delta_thick_GHz / (2.0 * np.pi * kt)
    )
    integral += 2.0 * np.sqrt(eps_min_GHz) * g0
    return 2.0 * (f_q_GHz * 1.0e9) * x_qp * integral


def poisson_binomial_bruteforce(probs) -> np.ndarray:
    """Exact distribution of the number of successes via 2^n enumeration."""
    p = np.asarray(probs, dtype=float)
    pmf = np.zeros(p.size + 1)
    for outcome in itertools.product((0, 1), repeat=p.size):
        weight = 1.0
        for pk, hit in zip(p, outcome):
            weight *= pk if hit else 1.0 - pk
        pmf[sum(outcome)] += weight
    return pmf


def bcs_temperature_brentq(x_qp: float, bulk_gap_GHz: float = 50.0) -> float:
    """Invert the BCS equilibrium density with scipy's root finder."""
    gap_K = bulk_gap_GHz / KB_GHZ_PER_K

    def forward(t_k: float) -> float:
        return np.sqrt(2.0 * np.pi * t_k / gap_K) * np.exp(-gap_K / t_k) - x_qp

    return optimize.brentq(forward, 1.0e-3, gap_K, xtol=1.0e-15, rtol=1.0e-15)
