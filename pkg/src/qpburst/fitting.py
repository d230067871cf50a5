"""Damped Gauss-Newton least squares and the package's concrete fits.

The engine is deliberately self-contained: numeric forward-difference
Jacobians, multiplicative damping, and linearized parameter uncertainties
from the residual covariance.  Positivity-constrained fits run the engine on
log-parameters and report natural-scale values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import physics
from .constants import DEFAULT_CONSTANTS, PhysicalConstants
from .errors import DomainError
from .physics import QpEnvironment

_DAMPING_CEILING = 1.0e14


@dataclass
class LMOptions:
    """Engine knobs; defaults suit every fit in this package."""

    max_iterations: int = 200
    cost_tol: float = 1.0e-10
    grad_tol: float = 1.0e-8
    # Small enough that well-posed (e.g. linear) problems take pure
    # Gauss-Newton steps from the first iteration.
    initial_damping: float = 1.0e-10


@dataclass
class FitResult:
    """Nonlinear least-squares outcome.

    ``param_sigmas`` are linearized 1-sigma uncertainties from the residual
    covariance at the solution; ``covariance`` is the full matrix (None when
    it could not be formed).  ``rms_residual`` is sqrt(mean(r^2)).
    ``n_iterations`` counts accepted (parameter-moving) steps.
    """

    params: np.ndarray
    param_sigmas: np.ndarray
    rms_residual: float
    n_iterations: int
    converged: bool
    message: str
    covariance: np.ndarray | None = None


def numeric_jacobian(residual_fn, params: np.ndarray, r0: np.ndarray) -> np.ndarray:
    """Forward-difference Jacobian with step max(1e-7 |p|, 1e-10)."""
    m, n = r0.size, params.size
    jac = np.empty((m, n))
    for j in range(n):
        step = max(1.0e-7 * abs(params[j]), 1.0e-10)
        probe = params.copy()
        probe[j] += step
        jac[:, j] = (np.asarray(residual_fn(probe), dtype=float) - r0) / step
    return jac


def _sigmas_from_jacobian(jac: np.ndarray, cost: float):
    """Linearized covariance and 1-sigma uncertainties at the solution."""
    m, n = jac.shape
    if m <= n:
        return None, np.full(n, np.nan)
    s2 = 2.0 * cost / (m - n)
    jtj = jac.T @ jac
    try:
        cov = s2 * np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov = s2 * np.linalg.pinv(jtj)
    diag = np.diag(cov).copy()
    diag[diag < 0.0] = np.nan
    return cov, np.sqrt(diag)


def levenberg_marquardt(
    residual_fn, init, options: LMOptions | None = None
) -> FitResult:
    """Minimize 0.5 * ||residual_fn(p)||^2 from the given starting point.

    Damping scales the normal-equation diagonal: multiplied by 10 on each
    rejected step, divided by 10 on each accepted one.  Stops on relative
    cost change below cost_tol, gradient infinity-norm below grad_tol, or
    the iteration cap.  Singular normal equations raise the damping; if
    that never produces a usable step the result is flagged unconverged.
    """
    opts = options or LMOptions()
    p = np.asarray(init, dtype=float).copy()
    r = np.asarray(residual_fn(p), dtype=float)
    if not np.all(np.isfinite(r)):
        raise DomainError("residual function is not finite at the initial point")
    cost = 0.5 * float(r @ r)
    lam = opts.initial_damping
    n_steps = 0
    converged = False
    message = "iteration limit reached"
    jac = numeric_jacobian(residual_fn, p, r)

    for _ in range(opts.max_iterations):
        grad = jac.T @ r
        if np.max(np.abs(grad)) < opts.grad_tol:
            converged = True
            message = "gradient tolerance met"
            break
        jtj = jac.T @ jac
        diag = np.diag(jtj).copy()
        floor = 1.0e-14 * max(float(diag.max()), 1.0)
        diag[diag < floor] = floor

        accepted = False
        while not accepted:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                step = None
            if step is None or not np.all(np.isfinite(step)):
                lam = max(lam, 1.0e-12) * 10.0
                if lam > _DAMPING_CEILING:
                    cov, sigmas = _sigmas_from_jacobian(jac, cost)
                    return FitResult(
                        params=p,
                        param_sigmas=sigmas,
                        rms_residual=math.sqrt(2.0 * cost / r.size),
                        n_iterations=n_steps,
                        converged=False,
                        message="singular normal equations persisted at maximum damping",
                        covariance=cov,
                    )
                continue
            p_try = p + step
            r_try = np.asarray(residual_fn(p_try), dtype=float)
            cost_try = 0.5 * float(r_try @ r_try) if np.all(np.isfinite(r_try)) else np.inf
            if cost_try <= cost:
                accepted = True
            else:
                lam = max(lam, 1.0e-12) * 10.0
                if lam > _DAMPING_CEILING:
                    converged = False
                    message = "no descent step found at maximum damping"
                    break
        if not accepted:
            break

        # accepted steps never increase the cost
        assert cost_try <= cost
        n_steps += 1
        drop = (cost - cost_try) / max(cost, 1.0e-300)
        p, r, cost = p_try, r_try, cost_try
        lam = max(lam / 10.0, 1.0e-14)
        jac = numeric_jacobian(residual_fn, p, r)
        if drop < opts.cost_tol:
            converged = True
            message = "cost change below tolerance"
            break

    cov, sigmas = _sigmas_from_jacobian(jac, cost)
    return FitResult(
        params=p,
        param_sigmas=sigmas,
        rms_residual=math.sqrt(2.0 * cost / r.size),
        n_iterations=n_steps,
        converged=converged,
        message=message,
        covariance=cov,
    )


def _to_natural_scale(result: FitResult) -> FitResult:
    """Map a log-parameter fit back to natural parameters (delta method)."""
    natural = np.exp(result.params)
    scale = np.diag(natural)
    cov = scale @ result.covariance @ scale if result.covariance is not None else None
    sigmas = natural * result.param_sigmas
    return FitResult(
        params=natural,
        param_sigmas=sigmas,
        rms_residual=result.rms_residual,
        n_iterations=result.n_iterations,
        converged=result.converged,
        message=result.message,
        covariance=cov,
    )


@dataclass(frozen=True)
class SpectrumDataset:
    """A 1/T1-vs-frequency spectrum with its subtracted background rate.

    ``points`` are (f_q_GHz, inv_t1_per_s) pairs with strictly increasing
    frequencies; ``gamma_bkgd_per_s`` is removed before fitting, clipping
    any resulting negative rates to zero.
    """

    points: tuple[tuple[float, float], ...]
    gamma_bkgd_per_s: float = 0.0

    def __post_init__(self) -> None:
        f = self.frequencies()
        if np.any(np.diff(f) <= 0.0):
            raise DomainError("spectrum frequencies must be strictly increasing")

    @classmethod
    def from_arrays(cls, f_q_GHz, inv_t1_per_s, gamma_bkgd_per_s: float = 0.0):
        points = tuple(
            (float(f), float(y)) for f, y in zip(f_q_GHz, inv_t1_per_s, strict=True)
        )
        return cls(points=points, gamma_bkgd_per_s=gamma_bkgd_per_s)

    def frequencies(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    def qp_rates(self) -> tuple[np.ndarray, int]:
        """Background-subtracted rates and the count of clipped negatives."""
        raw = np.array([p[1] for p in self.points]) - self.gamma_bkgd_per_s
        n_clipped = int(np.sum(raw < 0.0))
        return np.clip(raw, 0.0, None), n_clipped


SPECTRUM_PARAM_NAMES = ("gap_difference_GHz", "t_qp_K", "x_qp", "w_GHz")


def fit_t1_spectrum(
    data: SpectrumDataset,
    init_env: QpEnvironment | None = None,
    init_gap_difference_GHz: float | None = None,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> FitResult:
    """Fit the QP tunneling model to a background-subtracted 1/T1 spectrum.

    Four parameters in SPECTRUM_PARAM_NAMES order: gap difference, QP
    temperature, QP density, broadening.  Positivity is enforced by running
    the engine on log-parameters; results are natural scale.  The thick-lead
    gap is pinned at the bulk convention.

    Default initialization: gap difference at the spectrum argmax, 20 mK,
    density from one forward evaluation at the peak, 150 MHz broadening.
    If the spectrum peak sits on the first or last point the resonance is
    not bracketed and the fit is refused (converged=False).
    """
    f = data.frequencies()
    y, _ = data.qp_rates()
    if f.size < 8:
        raise DomainError("need at least 8 spectrum points spanning the resonance")
    peak = int(np.argmax(y))
    if peak in (0, f.size - 1) and init_gap_difference_GHz is None:
        return FitResult(
            params=np.full(4, np.nan),
            param_sigmas=np.full(4, np.nan),
            rms_residual=float("nan"),
            n_iterations=0,
            converged=False,
            message="resonance not bracketed by the scanned frequency range",
        )
    bulk = constants.bulk_gap_over_h_GHz

    dd0 = init_gap_difference_GHz if init_gap_difference_GHz is not None else float(f[peak])
    if init_env is not None:
        t0, w0 = init_env.T_qp_K, init_env.w_GHz
        x0 = init_env.x_qp
    else:
        t0, w0 = 0.02, 0.15
        unit = physics.gamma_qp(
            float(f[peak]),
            physics.gap_profile_from_gaps(bulk + dd0, bulk, constants),
            QpEnvironment(x_qp=1.0, T_qp_K=t0, w_GHz=w0),
            constants,
        )
        x0 = max(float(y[peak]) / unit, 1.0e-12)

    def residual(log_params: np.ndarray) -> np.ndarray:
        dd, t_qp, x_qp, w = np.exp(log_params)
        profile = physics.gap_profile_from_gaps(bulk + dd, bulk, constants)
        env = QpEnvironment(x_qp=x_qp, T_qp_K=t_qp, w_GHz=w)
        return physics.gamma_qp(f, profile, env, constants) - y

    result = levenberg_marquardt(residual, np.log([dd0, t0, x0, w0]))
    return _to_natural_scale(result)


def fit_power_scaling(powers, values) -> tuple[float, float]:
    """Power-law exponent and prefactor by least squares on the logs.

    Returns (exponent, prefactor) for values ~ prefactor * powers**exponent.
    """
    p = np.asarray(powers, dtype=float)
    v = np.asarray(values, dtype=float)
    if p.size != v.size or p.size < 3:
        raise DomainError("need at least 3 matching (power, value) points")
    if np.any(p <= 0.0) or np.any(v <= 0.0):
        raise DomainError("power-law fitting requires strictly positive data")
    slope, intercept = np.polyfit(np.log(p), np.log(v), 1)
    return float(slope), float(np.exp(intercept))


@dataclass
class SteadyStateFit:
    """Steady-state x_qp(P) fit in the identifiable (u, v) parameterization.

    The model x(P) = 2uP / (1 + sqrt(1 + 4vP)) reparameterizes the
    stationary density with g = alpha*P: u = alpha/s and v = alpha*r/s^2,
    so the recombination-to-trapping ratio is r/s = v/u.  ``v_indeterminate``
    flags data that never leave the linear regime (crossover beyond the
    sampled range or v uncertain by more than 100%).
    """

    fit: FitResult
    u: float
    v: float
    r_over_s: float
    r_over_s_sigma: float
    v_indeterminate: bool


def steady_state_curve(powers, u: float, v: float) -> np.ndarray:
    p = np.asarray(powers, dtype=float)
    return 2.0 * u * p / (1.0 + np.sqrt(1.0 + 4.0 * v * p))


def fit_steady_state_curve(powers, x_qp, init=None) -> SteadyStateFit:
    """Fit the stationary-density power curve and extract r/s.

    Residuals are taken in log space: the data span several decades with
    roughly multiplicative scatter, which uniform absolute residuals would
    collapse onto the top decade.  Positivity of (u, v) comes from fitting
    their logs.  The r/s uncertainty is propagated through the full (u, v)
    covariance.
    """
    p = np.asarray(powers, dtype=float)
    x = np.asarray(x_qp, dtype=float)
    if p.size != x.size or p.size < 3:
        raise DomainError("need at least 3 matching (power, x_qp) points")
    if np.any(p <= 0.0) or np.any(x <= 0.0):
        raise DomainError("steady-state fitting requires strictly positive data")
    order = np.argsort(p)
    p, x = p[order], x[order]

    if init is not None:
        u0, v0 = init
    else:
        u0 = float(x[0] / p[0])
        # crossover guess: first point where the local log-log slope has
        # fallen toward 1/2; fall back to the geometric middle of the range
        slopes = np.diff(np.log(x)) / np.diff(np.log(p))
        below = np.nonzero(slopes < 0.75)[0]
        p_cross = float(p[below[0]]) if below.size else float(np.sqrt(p[0] * p[-1]))
        v0 = 1.0 / (4.0 * p_cross)

    def residual(log_params: np.ndarray) -> np.ndarray:
        u, v = np.exp(log_params)
        return np.log(steady_state_curve(p, u, v)) - np.log(x)

    natural = _to_natural_scale(levenberg_marquardt(residual, np.log([u0, v0])))
    u, v = natural.params
    ratio = v / u
    if natural.covariance is not None and np.all(np.isfinite(natural.covariance)):
        grad = np.array([-v / u**2, 1.0 / u])
        var = float(grad @ natural.covariance @ grad)
        sigma = math.sqrt(var) if var >= 0.0 else float("inf")
    else:
        sigma = float("inf")
    sigma_v = natural.param_sigmas[1]
    indeterminate = (
        not math.isfinite(sigma_v) or sigma_v > v or 4.0 * v * float(p[-1]) < 1.0
    )
    return SteadyStateFit(
        fit=natural,
        u=float(u),
        v=float(v),
        r_over_s=float(ratio),
        r_over_s_sigma=sigma,
        v_indeterminate=bool(indeterminate),
    )
