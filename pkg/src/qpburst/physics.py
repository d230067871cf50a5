"""Quasiparticle physics of gap-engineered aluminum Josephson junctions.

Pure, deterministic functions: the thickness-dependent gap model, the
QP-tunneling qubit decay rate, the QP-induced frequency shift, the BCS
equilibrium QP density, and the trap/recombine/generate density dynamics.
All functions are safe for concurrent use; none hold mutable state.

Unit convention (see :mod:`qpburst.constants`): energies enter and leave as
frequencies E/h in GHz, rates in 1/s, times in s, temperatures in K.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .constants import DEFAULT_CONSTANTS, GHZ_TO_HZ, PhysicalConstants
from .errors import ConfigError, DomainError

#: Fixed Gauss-Legendre order of the production decay-rate quadrature.
GL_ORDER = 256

#: Upper limit of the substituted integration variable u, where the thermal
#: occupation has fallen to exp(-36) < 3e-16 of its gap-edge value.
U_MAX = 6.0


@dataclass(frozen=True)
class JunctionGapProfile:
    """Superconducting gaps of the two junction leads, as frequencies.

    ``gap_difference_GHz`` is always ``delta_thin_GHz - delta_thick_GHz``;
    a thinner lead has the higher gap, so the difference is nonnegative for
    physical thickness pairs.
    """

    thin_thickness_nm: float
    thick_thickness_nm: float
    delta_thin_GHz: float
    delta_thick_GHz: float
    gap_difference_GHz: float


@dataclass(frozen=True)
class QpEnvironment:
    """Quasiparticle state seen by a junction.

    x_qp is the QP density as a fraction of the Cooper-pair density,
    T_qp_K the effective QP temperature, and w_GHz the phenomenological
    broadening that regularizes the decay-rate resonance.
    """

    x_qp: float
    T_qp_K: float
    w_GHz: float

    def __post_init__(self) -> None:
        if self.x_qp < 0.0:
            raise DomainError("x_qp must be nonnegative")
        if self.T_qp_K <= 0.0:
            raise DomainError("T_qp_K must be strictly positive")
        if self.w_GHz <= 0.0:
            raise DomainError("w_GHz must be strictly positive")


@dataclass(frozen=True)
class QpDynamicsParams:
    """Rates of the QP density dynamics dx/dt = -s*x - r*x^2 + g.

    s is the single-particle trapping rate, r the recombination rate, g the
    generation rate.  All three share units of 1/s because x is dimensionless.
    """

    s_per_s: float
    r_per_s: float
    g_per_s: float

    def __post_init__(self) -> None:
        if min(self.s_per_s, self.r_per_s, self.g_per_s) < 0.0:
            raise DomainError("dynamics rates must be nonnegative")
        if self.g_per_s > 0.0 and self.s_per_s == 0.0 and self.r_per_s == 0.0:
            raise DomainError(
                "generation with neither trapping nor recombination has no "
                "stationary state"
            )


@lru_cache(maxsize=8)
def _gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped from [-1, 1] onto [0, U_MAX]."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    half = 0.5 * U_MAX
    return half * (nodes + 1.0), half * weights


def gap_from_thickness(
    t_nm: float, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> float:
    """Superconducting gap (ueV) of an aluminum film of thickness t_nm.

    Empirical thin-film model: the gap rises above the bulk value in
    inverse proportion to the thickness.
    """
    if t_nm <= 0.0:
        raise DomainError("film thickness must be strictly positive")
    return constants.delta_bulk_ueV + constants.gap_slope_A_ueV_nm / t_nm


def thickness_from_gap(
    gap_ueV: float, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> float:
    """Inverse of :func:`gap_from_thickness`; requires a gap above bulk."""
    if gap_ueV <= constants.delta_bulk_ueV:
        raise DomainError("gap must exceed the bulk value to map to a thickness")
    return constants.gap_slope_A_ueV_nm / (gap_ueV - constants.delta_bulk_ueV)


def gap_profile(
    thin_nm: float,
    thick_nm: float,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> JunctionGapProfile:
    """Gap profile of a junction with the given lead thicknesses (nm)."""
    delta_thin = gap_from_thickness(thin_nm, constants) * constants.ueV_to_GHz
    delta_thick = gap_from_thickness(thick_nm, constants) * constants.ueV_to_GHz
    return JunctionGapProfile(
        thin_thickness_nm=thin_nm,
        thick_thickness_nm=thick_nm,
        delta_thin_GHz=delta_thin,
        delta_thick_GHz=delta_thick,
        gap_difference_GHz=delta_thin - delta_thick,
    )


def gap_profile_from_gaps(
    delta_thin_GHz: float,
    delta_thick_GHz: float,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> JunctionGapProfile:
    """Gap profile built directly from lead gaps (GHz).

    Used by spectrum fitting, where the gap difference is a free parameter
    and the thick-lead gap is pinned to the bulk convention.  Thicknesses are
    back-computed from the thin-film model to keep the profile consistent.
    """
    if delta_thin_GHz < delta_thick_GHz:
        raise DomainError("thin-lead gap must not be below the thick-lead gap")
    return JunctionGapProfile(
        thin_thickness_nm=thickness_from_gap(delta_thin_GHz / constants.ueV_to_GHz, constants),
        thick_thickness_nm=thickness_from_gap(delta_thick_GHz / constants.ueV_to_GHz, constants),
        delta_thin_GHz=delta_thin_GHz,
        delta_thick_GHz=delta_thick_GHz,
        gap_difference_GHz=delta_thin_GHz - delta_thick_GHz,
    )


def gamma_qp(
    f_q_GHz,
    profile: JunctionGapProfile,
    env: QpEnvironment,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
    order: int = GL_ORDER,
):
    """Qubit decay rate (1/s) from QP tunneling across a gap-asymmetric junction.

    Rate for QPs in the low-gap (thick) lead that absorb the qubit energy
    h*f_q while tunneling toward the high-gap (thin) lead:

        rate = 2 f_q x_qp * 2 sqrt(dth / 2pi)
               * int_0^U_MAX exp(-u^2) Re[1 / sqrt(kT u^2 + f_q - dd + i w)] du

    with all energies as frequencies: dth the thick-lead gap, dd the gap
    difference, kT the QP temperature, w the broadening.  The substitution
    (energy above the gap edge) = kT u^2 removes the inverse-square-root
    density-of-states singularity at the lower limit; the real part uses the
    principal complex square root, which is positive everywhere for w > 0.
    Evaluated by fixed-order Gauss-Legendre so results are deterministic and
    smooth in the parameters.

    f_q_GHz may be a scalar or an array; the return matches its shape.
    The rate is exactly linear in env.x_qp.
    """
    f = np.asarray(f_q_GHz, dtype=float)
    if np.any(f <= 0.0):
        raise DomainError("qubit frequency must be strictly positive")
    u, wt = _gauss_legendre(order)
    kt = env.T_qp_K * constants.kB_over_h_GHz_per_K
    detuning = f[..., np.newaxis] - profile.gap_difference_GHz
    z = kt * u**2 + detuning + 1j * env.w_GHz
    integral = np.sum(wt * np.exp(-(u**2)) * (1.0 / np.sqrt(z)).real, axis=-1)
    prefactor = 2.0 * math.sqrt(profile.delta_thick_GHz / (2.0 * math.pi))
    rate = 2.0 * (f * GHZ_TO_HZ) * env.x_qp * prefactor * integral
    return rate if rate.ndim else float(rate)


def t1_from_rates(gamma_bkgd_per_s: float, gamma_qp_per_s: float) -> float:
    """Energy-relaxation time (s) from background and QP decay rates."""
    total = gamma_bkgd_per_s + gamma_qp_per_s
    if total <= 0.0:
        raise DomainError(
            "total decay rate must be positive; represent 'no decay' in rate "
            "space rather than as an infinite T1"
        )
    return 1.0 / total


def freq_shift_coefficient(
    gap_difference_GHz: float, f_q_GHz: float, bulk_gap_GHz: float
) -> float:
    """Proportionality a in the fractional frequency shift -a * x_qp.

    a = (2pi)^-1 [sqrt(2D/(dd + f)) + sqrt(2D/(dd - f))] / 2 with D the bulk
    gap, dd the gap difference, f the qubit frequency, all as frequencies.
    Only valid when the gap difference exceeds the qubit energy.
    """
    if gap_difference_GHz <= f_q_GHz:
        raise DomainError(
            "frequency-shift coefficient requires the gap difference to "
            "exceed the qubit frequency"
        )
    plus = math.sqrt(2.0 * bulk_gap_GHz / (gap_difference_GHz + f_q_GHz))
    minus = math.sqrt(2.0 * bulk_gap_GHz / (gap_difference_GHz - f_q_GHz))
    return (plus + minus) / (2.0 * 2.0 * math.pi)


def frequency_shift(f_q_GHz: float, x_qp: float, a: float) -> float:
    """Qubit frequency shift (GHz), -a * x_qp * f_q; negative for x_qp > 0."""
    if a <= 0.0:
        raise DomainError("shift coefficient must be strictly positive")
    if x_qp < 0.0:
        raise DomainError("x_qp must be nonnegative")
    return -a * x_qp * f_q_GHz


def bcs_equilibrium_xqp(
    T_K: float, bulk_gap_GHz: float = DEFAULT_CONSTANTS.bulk_gap_over_h_GHz,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> float:
    """Thermal-equilibrium QP density sqrt(2pi kT / D) exp(-D / kT).

    Strictly increasing in T; underflows to exactly 0 for very low T.
    """
    if T_K <= 0.0:
        raise DomainError("temperature must be strictly positive")
    gap_K = bulk_gap_GHz / constants.kB_over_h_GHz_per_K
    ratio = gap_K / T_K
    if ratio > 700.0:  # exp underflow; the density is indistinguishable from 0
        return 0.0
    return math.sqrt(2.0 * math.pi * T_K / gap_K) * math.exp(-ratio)


def bcs_temperature_for_xqp(
    x_qp: float, bulk_gap_GHz: float = DEFAULT_CONSTANTS.bulk_gap_over_h_GHz,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> float:
    """Temperature (K) at which the BCS equilibrium density equals x_qp.

    Bisection on [1 mK, D/kB], converged when the density matches to 1e-10
    relative.  The forward map is strictly increasing, so the bracket is
    valid whenever x_qp is achievable.
    """
    if not 0.0 < x_qp < 1.0:
        raise DomainError("x_qp must lie strictly between 0 and 1")
    t_lo = 1.0e-3
    t_hi = bulk_gap_GHz / constants.kB_over_h_GHz_per_K
    if not (
        bcs_equilibrium_xqp(t_lo, bulk_gap_GHz, constants)
        <= x_qp
        <= bcs_equilibrium_xqp(t_hi, bulk_gap_GHz, constants)
    ):
        raise DomainError("x_qp outside the range achievable below the gap scale")
    for _ in range(200):
        t_mid = 0.5 * (t_lo + t_hi)
        x_mid = bcs_equilibrium_xqp(t_mid, bulk_gap_GHz, constants)
        if abs(x_mid - x_qp) / x_qp < 1.0e-10:
            return t_mid
        if x_mid < x_qp:
            t_lo = t_mid
        else:
            t_hi = t_mid
    return 0.5 * (t_lo + t_hi)


def steady_state_xqp(params: QpDynamicsParams) -> float:
    """Stationary QP density of dx/dt = -s*x - r*x^2 + g.

    Closed form 2g / (s + sqrt(s^2 + 4 g r)), the nonnegative root of
    r*x^2 + s*x - g = 0, written without subtractive cancellation.
    Limits: g/s when recombination is negligible, sqrt(g/r) when trapping is.
    """
    if params.g_per_s == 0.0:
        return 0.0
    s, r, g = params.s_per_s, params.r_per_s, params.g_per_s
    return 2.0 * g / (s + math.sqrt(s * s + 4.0 * g * r))


def evolve_xqp(
    x0: float, params: QpDynamicsParams, dt_s: float, n_steps: int
) -> np.ndarray:
    """Integrate the QP density ODE with classical fixed-step RK4.

    Returns the trajectory of length n_steps + 1 including x0.  Rejects step
    sizes that violate dt * (s + 2 r max(x0, x_ss)) < 0.1, the explicit-step
    stability margin at the fastest local relaxation rate.
    """
    if x0 < 0.0:
        raise DomainError("initial density must be nonnegative")
    if dt_s <= 0.0:
        raise DomainError("time step must be strictly positive")
    if n_steps < 1:
        raise DomainError("need at least one integration step")
    s, r, g = params.s_per_s, params.r_per_s, params.g_per_s
    x_ss = steady_state_xqp(params)
    rate_scale = s + 2.0 * r * max(x0, x_ss)
    if dt_s * rate_scale >= 0.1:
        raise ConfigError(
            f"dt_s={dt_s:g} too large for relaxation scale {rate_scale:g}/s; "
            f"use dt_s < {0.1 / rate_scale:g} (suggested {0.05 / rate_scale:g})"
        )

    def deriv(x: float) -> float:
        return -s * x - r * x * x + g

    traj = np.empty(n_steps + 1)
    traj[0] = x = x0
    for k in range(n_steps):
        k1 = deriv(x)
        k2 = deriv(x + 0.5 * dt_s * k1)
        k3 = deriv(x + 0.5 * dt_s * k2)
        k4 = deriv(x + dt_s * k3)
        x = x + (dt_s / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if x < 0.0:  # guard roundoff undershoot near zero
            x = 0.0
        traj[k + 1] = x
    return traj
