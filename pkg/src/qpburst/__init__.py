"""Simulation and burst-detection toolkit for gap-engineered transmon arrays.

Forward-simulates correlated error time series produced by quasiparticle
poisoning (impact events and steady optical illumination), then detects,
fits, and characterizes the bursts with the matched-filter statistical
pipeline.  See the README for the command-line interface.
"""

from .constants import DEFAULT_CONSTANTS, PhysicalConstants
from .detect import (
    DetectedEvent,
    ErrorHistogram,
    EventDecayFit,
    FilterTemplate,
    InterEventStats,
    chi_square_pvalue,
    detect_events,
    fit_event_decay,
    inter_event_stats,
    make_filter_template,
    matched_filter,
    poisson_binomial_prediction,
    simultaneous_error_histogram,
    summed_error_series,
)
from .device import (
    DeviceConfig,
    GapEngineeringKind,
    QubitSpec,
    build_reference_device,
    load_device,
    per_cycle_error_prob,
    save_device,
)
from .errors import ConfigError, DataError, DomainError, QpBurstError
from .fitting import (
    FitResult,
    LMOptions,
    SpectrumDataset,
    SteadyStateFit,
    fit_power_scaling,
    fit_steady_state_curve,
    fit_t1_spectrum,
    levenberg_marquardt,
)
from .physics import (
    JunctionGapProfile,
    QpDynamicsParams,
    QpEnvironment,
    bcs_equilibrium_xqp,
    bcs_temperature_for_xqp,
    evolve_xqp,
    freq_shift_coefficient,
    frequency_shift,
    gamma_qp,
    gap_from_thickness,
    gap_profile,
    gap_profile_from_gaps,
    steady_state_xqp,
    t1_from_rates,
)
from .simulate import (
    DEFAULT_ENVIRONMENT,
    IlluminationPoint,
    ImpactEvent,
    RrecsDataset,
    load_dataset_binary,
    load_dataset_csv,
    sample_impact_events,
    sample_impact_times,
    save_dataset_binary,
    save_dataset_csv,
    simulate_illumination,
    simulate_rrecs,
    xqp_at,
)

__version__ = "0.1.0"
