"""Burst detection and correlated-error statistics for sampling datasets.

The pipeline mirrors the measurement analysis: sum error bits over a qubit
subset, matched-filter the summed series with a decaying-exponential
template, pick peaks against a robust noise scale, fit each event's recovery
constant, and compare simultaneous-error histograms against the
independent-errors (Poisson-binomial) prediction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal, stats

from .errors import DomainError
from .fitting import levenberg_marquardt
from .simulate import RrecsDataset

#: Template length in units of its decay constant; captures >99% of the
#: exponential's energy.
TEMPLATE_LENGTH_TAUS = 5.0

#: Local window sigmas are floored at this fraction of the global sigma to
#: avoid dividing by near-zero variance on quiet stretches.
SIGMA_FLOOR_FRACTION = 0.1

_MAD_TO_SIGMA = 1.4826


@dataclass(frozen=True)
class FilterTemplate:
    """Zero-mean, unit-norm decaying-exponential matched-filter template."""

    tau_s: float
    n_samples: int
    values: np.ndarray


@dataclass(frozen=True)
class DetectedEvent:
    """A located burst with its fitted recovery parameters.

    ``peak_height`` is the fitted onset amplitude in summed-error-count
    units; ``fit_rms_residual`` is the RMS misfit of the exponential model.
    """

    cycle_index: int
    time_s: float
    peak_height: float
    tau_fit_s: float
    fit_rms_residual: float

    def __post_init__(self) -> None:
        if self.tau_fit_s <= 0.0 or self.peak_height <= 0.0:
            raise DomainError("fitted event parameters must be strictly positive")


@dataclass(frozen=True)
class EventDecayFit:
    """Exponential-recovery fit of one event window."""

    tau_s: float
    peak_height: float
    rms_residual: float
    converged: bool
    message: str


@dataclass(frozen=True)
class ErrorHistogram:
    """Observed and predicted counts of k simultaneous errors per cycle."""

    observed_counts: np.ndarray
    predicted_counts: np.ndarray
    n_samples: int

    def __post_init__(self) -> None:
        if self.observed_counts.shape != self.predicted_counts.shape:
            raise DomainError("observed and predicted histograms differ in shape")
        for name, counts in (
            ("observed", self.observed_counts),
            ("predicted", self.predicted_counts),
        ):
            total = float(np.sum(counts))
            if abs(total - self.n_samples) > 1.0e-9 * max(self.n_samples, 1):
                raise DomainError(
                    f"{name} histogram sums to {total}, expected {self.n_samples}"
                )


def make_filter_template(
    tau_s: float, dt_s: float, n_samples: int | None = None
) -> FilterTemplate:
    """Build the matched-filter template for a given recovery constant."""
    if tau_s <= 0.0 or dt_s <= 0.0:
        raise DomainError("template decay constant and sample period must be positive")
    if n_samples is None:
        n_samples = max(2, int(round(TEMPLATE_LENGTH_TAUS * tau_s / dt_s)))
    if n_samples < 2:
        raise DomainError("template needs at least 2 samples")
    values = np.exp(-np.arange(n_samples) * dt_s / tau_s)
    values -= values.mean()
    values /= np.linalg.norm(values)
    return FilterTemplate(tau_s=tau_s, n_samples=n_samples, values=values)


def summed_error_series(dataset: RrecsDataset, qubit_subset) -> np.ndarray:
    """Per-cycle sum of error bits over the given qubit indices."""
    indices = list(qubit_subset)
    if not indices:
        raise DomainError("qubit subset must not be empty")
    if any(i < 0 or i >= dataset.n_qubits for i in indices):
        raise DomainError(f"qubit index outside 0..{dataset.n_qubits - 1}")
    return dataset.errors[:, indices].sum(axis=1).astype(np.int64)


def matched_filter(
    series, template: FilterTemplate, normalize: bool = True
) -> np.ndarray:
    """Sliding normalized cross-correlation of the series with the template.

    At each index the window mean is removed (implicit for a zero-mean
    template), the window is correlated with the template, and the result is
    divided by the window standard deviation floored at a fraction of the
    global sigma.  Output index i scores a window starting at i, so a peak
    sits at the event onset; the tail where the window would run off the end
    is zero-padded to keep the output length equal to the input length.

    ``normalize=False`` skips the variance division (test hook: the
    remaining operation is exactly linear in the input).
    """
    x = np.asarray(series, dtype=float)
    length = template.n_samples
    if length >= x.size:
        raise DomainError("template must be shorter than the series")
    tvals = template.values
    corr = signal.fftconvolve(x, tvals[::-1], mode="valid")
    # a zero-mean template already cancels the window mean; keep the exact
    # term for templates that are not
    t_sum = float(tvals.sum())

    out = np.zeros(x.size)
    if not normalize:
        out[: corr.size] = corr
        return out

    csum = np.concatenate(([0.0], np.cumsum(x)))
    csum2 = np.concatenate(([0.0], np.cumsum(x * x)))
    win_sum = csum[length:] - csum[:-length]
    win_sum2 = csum2[length:] - csum2[:-length]
    win_mean = win_sum / length
    win_var = np.maximum(win_sum2 / length - win_mean**2, 0.0)
    win_sigma = np.sqrt(win_var)

    floor = SIGMA_FLOOR_FRACTION * float(x.std())
    denom = np.maximum(win_sigma, floor)
    numer = corr - win_mean * t_sum
    with np.errstate(invalid="ignore", divide="ignore"):
        score = np.where(denom > 0.0, numer / denom, 0.0)
    out[: score.size] = score
    return out


def robust_sigma(values) -> float:
    """Scaled median absolute deviation; falls back to std for flat MAD."""
    x = np.asarray(values, dtype=float)
    mad = float(np.median(np.abs(x - np.median(x))))
    if mad > 0.0:
        return _MAD_TO_SIGMA * mad
    return float(x.std())


def detect_events(
    filtered, threshold_sigma: float, min_separation_s: float, dt_s: float
) -> np.ndarray:
    """Onset indices of filtered-series peaks above the robust threshold.

    Local maxima exceeding threshold_sigma times the robust sigma (about the
    median) are accepted greedily in descending score; any candidate within
    the exclusion radius of an accepted one is dropped.  Returned sorted by
    time.
    """
    if threshold_sigma <= 0.0:
        raise DomainError("detection threshold must be strictly positive")
    x = np.asarray(filtered, dtype=float)
    sigma = robust_sigma(x)
    if sigma == 0.0:
        return np.empty(0, dtype=np.int64)
    level = float(np.median(x)) + threshold_sigma * sigma
    interior = (x[1:-1] >= x[:-2]) & (x[1:-1] > x[2:]) & (x[1:-1] > level)
    candidates = np.nonzero(interior)[0] + 1
    if candidates.size == 0:
        return np.empty(0, dtype=np.int64)
    radius = max(1, int(round(min_separation_s / dt_s)))
    accepted: list[int] = []
    for idx in candidates[np.argsort(x[candidates])[::-1]]:
        if all(abs(idx - kept) >= radius for kept in accepted):
            accepted.append(int(idx))
    return np.array(sorted(accepted), dtype=np.int64)


def fit_event_decay(
    series,
    onset_index: int,
    window_s: float,
    dt_s: float,
    bin_s: float = 5.0e-4,
) -> EventDecayFit:
    """Fit height * exp(-(t - t0)/tau) + baseline to one event window.

    The baseline is pinned to the pre-onset mean (per-cycle units), the
    series is averaged into ``bin_s`` bins before fitting (raw 0/1 sums are
    too noisy for per-sample fits), and positivity of height and tau comes
    from fitting their logs.  Non-convergence is reported in the result, not
    raised.
    """
    x = np.asarray(series, dtype=float)
    n_window = int(round(window_s / dt_s))
    seg = x[onset_index : onset_index + n_window]
    if seg.size < 30:
        raise DomainError("event window must contain at least 30 samples after onset")

    pre = x[max(0, onset_index - n_window) : onset_index]
    baseline = float(pre.mean()) if pre.size else float(np.median(x))

    n_bin = max(1, int(round(bin_s / dt_s)))
    usable = (seg.size // n_bin) * n_bin
    y = seg[:usable].reshape(-1, n_bin).mean(axis=1)
    t = (np.arange(y.size) + 0.5) * n_bin * dt_s

    excess = np.clip(y - baseline, 0.0, None)
    h0 = max(float(excess.max()), 1.0e-3)
    if excess.sum() > 0.0:
        tau0 = float((excess * t).sum() / excess.sum())  # centroid of an exponential = tau
    else:
        tau0 = window_s / 3.0
    tau0 = min(max(tau0, dt_s), window_s)

    def residual(log_params: np.ndarray) -> np.ndarray:
        h, tau = np.exp(log_params)
        return baseline + h * np.exp(-t / tau) - y

    result = levenberg_marquardt(residual, np.log([h0, tau0]))
    h, tau = np.exp(result.params)
    return EventDecayFit(
        tau_s=float(tau),
        peak_height=float(h),
        rms_residual=result.rms_residual,
        converged=result.converged,
        message=result.message,
    )


def simultaneous_error_histogram(dataset: RrecsDataset, qubit_subset) -> np.ndarray:
    """Counts of cycles with k simultaneous errors, k = 0..len(subset)."""
    summed = summed_error_series(dataset, qubit_subset)
    return np.bincount(summed, minlength=len(list(qubit_subset)) + 1)


def poisson_binomial_prediction(probs, n_samples: int) -> np.ndarray:
    """Expected simultaneous-error counts for independent per-qubit errors.

    Exact Poisson-binomial distribution over k, built by convolving one
    (1-p, p) kernel per qubit, scaled to n_samples.
    """
    p = np.asarray(probs, dtype=float)
    if np.any((p < 0.0) | (p > 1.0)):
        raise DomainError("probabilities must lie in [0, 1]")
    pmf = np.ones(1)
    for pk in p:
        pmf = np.convolve(pmf, [1.0 - pk, pk])
    return pmf * n_samples


@dataclass(frozen=True)
class InterEventStats:
    """Within-dataset inter-event intervals against the Poisson expectation.

    Intervals never span dataset boundaries.  ``expected_counts`` follow the
    exponential law at ``rate_per_s`` = total events / total duration;
    ``ks_statistic`` is the Kolmogorov-Smirnov distance between the interval
    sample and that exponential.
    """

    intervals_s: np.ndarray
    bin_edges_s: np.ndarray
    observed_counts: np.ndarray
    expected_counts: np.ndarray
    rate_per_s: float
    ks_statistic: float

    @property
    def n_pairs(self) -> int:
        return int(self.intervals_s.size)


def inter_event_stats(
    event_times_s, dataset_boundaries_s, n_bins: int = 12
) -> InterEventStats:
    """Interval statistics for time-sorted events in a segmented campaign.

    ``dataset_boundaries_s`` holds the n_datasets + 1 edges of the
    concatenated time axis.
    """
    times = np.asarray(event_times_s, dtype=float)
    if np.any(np.diff(times) < 0.0):
        raise DomainError("event times must be sorted")
    edges = np.asarray(dataset_boundaries_s, dtype=float)
    if edges.size < 2 or np.any(np.diff(edges) <= 0.0):
        raise DomainError("dataset boundaries must be increasing with >= 2 edges")
    total_duration = float(edges[-1] - edges[0])
    rate = times.size / total_duration if total_duration > 0.0 else 0.0

    which = np.searchsorted(edges, times, side="right")
    same = which[1:] == which[:-1]
    intervals = np.diff(times)[same]

    if intervals.size:
        bin_edges = np.linspace(0.0, float(intervals.max()), n_bins + 1)
        observed = np.histogram(intervals, bins=bin_edges)[0]
        cdf = 1.0 - np.exp(-rate * bin_edges)
        expected = intervals.size * np.diff(cdf)
        sorted_iv = np.sort(intervals)
        ecdf_hi = np.arange(1, sorted_iv.size + 1) / sorted_iv.size
        model = 1.0 - np.exp(-rate * sorted_iv)
        ks = float(
            np.max(np.maximum(np.abs(ecdf_hi - model), np.abs(ecdf_hi - 1.0 / sorted_iv.size - model)))
        )
    else:
        bin_edges = np.linspace(0.0, 1.0, n_bins + 1)
        observed = np.zeros(n_bins, dtype=np.int64)
        expected = np.zeros(n_bins)
        ks = float("nan")
    return InterEventStats(
        intervals_s=intervals,
        bin_edges_s=bin_edges,
        observed_counts=observed,
        expected_counts=expected,
        rate_per_s=rate,
        ks_statistic=ks,
    )


def chi_square_pvalue(
    observed, expected, min_expected: float = 5.0
) -> tuple[float, float, int]:
    """Pearson chi-square p-value with sparse tail bins pooled.

    Bins are pooled from the high-k end until every kept bin's expectation
    reaches ``min_expected``.  Returns (statistic, p_value, dof).
    """
    obs = np.asarray(observed, dtype=float)
    exp = np.asarray(expected, dtype=float)
    if obs.shape != exp.shape:
        raise DomainError("observed and expected histograms differ in shape")
    obs_pooled: list[float] = []
    exp_pooled: list[float] = []
    acc_obs = acc_exp = 0.0
    for o, e in zip(obs[::-1], exp[::-1]):
        acc_obs += o
        acc_exp += e
        if acc_exp >= min_expected:
            obs_pooled.append(acc_obs)
            exp_pooled.append(acc_exp)
            acc_obs = acc_exp = 0.0
    if not obs_pooled:
        raise DomainError("histogram has no bins with sufficient expectation")
    # leftover low-k mass folds into the last pooled bin
    obs_pooled[-1] += acc_obs
    exp_pooled[-1] += acc_exp
    o = np.array(obs_pooled)
    e = np.array(exp_pooled)
    e *= o.sum() / e.sum()  # renormalize pooled expectation to the sample size
    statistic = float(np.sum((o - e) ** 2 / e))
    dof = max(o.size - 1, 1)
    return statistic, float(stats.chi2.sf(statistic, dof)), dof
