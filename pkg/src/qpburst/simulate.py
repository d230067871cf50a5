"""Forward simulation of correlated-sampling error data and illumination sweeps.

Impact events arrive as a Poisson process, each depositing a chip-wide QP
density surge that recovers exponentially.  Every sampling cycle prepares
|1> on all qubits, idles, and measures; per-qubit error draws use the decay
rate from :mod:`qpburst.physics` at the instantaneous QP density.

All randomness flows from counter-based Philox streams keyed on
(master seed, purpose, qubit), so outputs are bit-reproducible regardless of
evaluation order or threading.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import physics
from .device import DeviceConfig, device_from_dict, device_to_dict, per_cycle_error_prob
from .errors import DataError, DomainError
from .ioutil import atomic_write_bytes, atomic_write_text
from .physics import QpDynamicsParams, QpEnvironment

BINARY_MAGIC = b"RRCS"
BINARY_VERSION = 1

#: Default ambient QP environment: cold quasiparticles, typical broadening.
DEFAULT_ENVIRONMENT = QpEnvironment(x_qp=0.0, T_qp_K=0.02, w_GHz=0.15)


@dataclass(frozen=True)
class ImpactEvent:
    """One high-energy impact: onset, peak QP density, recovery constant."""

    t0_s: float
    x0: float
    tau_decay_s: float

    def __post_init__(self) -> None:
        if self.t0_s < 0.0:
            raise DomainError("event onset must be nonnegative")
        if self.x0 <= 0.0:
            raise DomainError("event peak density must be strictly positive")
        if self.tau_decay_s <= 0.0:
            raise DomainError("event recovery constant must be strictly positive")


@dataclass(frozen=True)
class RrecsDataset:
    """Binary error matrix of one correlated-sampling run plus ground truth.

    ``errors`` is (n_cycles, n_qubits) uint8 of 0/1, cycle-major, with qubit
    columns in row-major device order.  ``truth_events`` is empty for
    ingested real data.
    """

    n_cycles: int
    n_qubits: int
    errors: np.ndarray
    seed: int
    truth_events: tuple[ImpactEvent, ...]
    device_ref: DeviceConfig

    def __post_init__(self) -> None:
        if self.errors.shape != (self.n_cycles, self.n_qubits):
            raise DomainError(
                f"error matrix shape {self.errors.shape} does not match "
                f"({self.n_cycles}, {self.n_qubits})"
            )
        values = np.unique(self.errors)
        if values.size and not np.isin(values, (0, 1)).all():
            raise DomainError("error matrix entries must be 0 or 1")

    @property
    def cycle_period_s(self) -> float:
        return self.device_ref.cycle_period_us * 1e-6

    @property
    def duration_s(self) -> float:
        return self.n_cycles * self.cycle_period_s


@dataclass(frozen=True)
class IlluminationPoint:
    """Steady-state qubit response at one normalized optical power."""

    normalized_power: float
    x_qp_ss: float
    per_qubit_t1_us: tuple[float, ...]
    per_qubit_freq_shift_GHz: tuple[float, ...]


def rng_stream(master_seed: int, *path: int) -> np.random.Generator:
    """Deterministic Philox stream for (seed, path...) independent of order."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(path))
    return np.random.Generator(np.random.Philox(seq))


def sample_impact_times(
    rate_per_s: float, duration_s: float, rng_seed: int
) -> np.ndarray:
    """Homogeneous Poisson arrivals in [0, duration), sorted, reproducible.

    Sampled as cumulative exponential inter-arrival gaps.
    """
    if rate_per_s < 0.0:
        raise DomainError("event rate must be nonnegative")
    if duration_s <= 0.0:
        raise DomainError("duration must be strictly positive")
    if rate_per_s == 0.0:
        return np.empty(0)
    rng = rng_stream(rng_seed, 0)
    times = []
    t = rng.exponential(1.0 / rate_per_s)
    while t < duration_s:
        times.append(t)
        t += rng.exponential(1.0 / rate_per_s)
    return np.asarray(times)


def sample_impact_events(
    rate_per_s: float,
    duration_s: float,
    amplitude_range: tuple[float, float],
    tau_mean_s: float,
    tau_sigma_s: float,
    rng_seed: int,
    tau_min_s: float = 1.0e-3,
) -> list[ImpactEvent]:
    """Poisson-arriving events with log-uniform peak densities.

    Amplitudes are log-uniform over ``amplitude_range`` (the data constrain
    only the upper scale, so this is a configurable placeholder, not a
    physical law).  Recovery constants are Gaussian, redrawn below
    ``tau_min_s``.  Amplitude and recovery draws use streams separate from
    the arrival stream so each is reproducible on its own.
    """
    lo, hi = amplitude_range
    if not 0.0 < lo <= hi:
        raise DomainError("amplitude range must satisfy 0 < lo <= hi")
    times = sample_impact_times(rate_per_s, duration_s, rng_seed)
    amp_rng = rng_stream(rng_seed, 1)
    tau_rng = rng_stream(rng_seed, 2)
    events = []
    for t0 in times:
        x0 = float(np.exp(amp_rng.uniform(np.log(lo), np.log(hi))))
        tau = float(tau_rng.normal(tau_mean_s, tau_sigma_s))
        while tau < tau_min_s:
            tau = float(tau_rng.normal(tau_mean_s, tau_sigma_s))
        events.append(ImpactEvent(t0_s=float(t0), x0=x0, tau_decay_s=tau))
    return events


def xqp_at(t_s, events, x_floor: float = 0.0):
    """Total QP density at time(s) t: floor plus additive event tails.

    Each past event contributes x0 * exp(-(t - t0)/tau); events must be
    sorted by onset.  Accepts scalar or array times.
    """
    t = np.asarray(t_s, dtype=float)
    onsets = [ev.t0_s for ev in events]
    if any(b < a for a, b in zip(onsets, onsets[1:])):
        raise DomainError("events must be sorted by onset time")
    x = np.full(t.shape, float(x_floor))
    for ev in events:
        active = t >= ev.t0_s
        x[active] += ev.x0 * np.exp(-(t[active] - ev.t0_s) / ev.tau_decay_s)
    return x if x.ndim else float(x)


def qp_rate_coefficients(
    device: DeviceConfig, env_template: QpEnvironment
) -> np.ndarray:
    """Per-qubit QP decay rate at unit density, d(gamma)/d(x_qp) in 1/s.

    The tunneling rate is exactly linear in x_qp, so per-cycle rates reduce
    to coefficient * x_qp(t).
    """
    unit_env = replace(env_template, x_qp=1.0)
    return np.array(
        [
            physics.gamma_qp(q.f_idle_GHz, q.gap_profile(), unit_env)
            for q in device.ordered_qubits()
        ]
    )


def simulate_rrecs(
    device: DeviceConfig,
    events: list[ImpactEvent] | tuple[ImpactEvent, ...],
    env_template: QpEnvironment = DEFAULT_ENVIRONMENT,
    rng_seed: int = 0,
    n_cycles: int | None = None,
) -> RrecsDataset:
    """Simulate one correlated-sampling dataset under the given events.

    Per cycle k at t = k * cycle_period and per qubit: evaluate the QP
    density (env_template.x_qp acts as the ambient floor), add the QP decay
    rate to the qubit's background rate, and draw an error with the
    idle-relaxation + readout-error probability.  Each qubit consumes its own
    Philox stream derived from ``rng_seed``.
    """
    if n_cycles is None:
        n_cycles = device.samples_per_dataset
    events = sorted(events, key=lambda ev: ev.t0_s)
    duration = n_cycles * device.cycle_period_us * 1e-6
    for ev in events:
        if ev.t0_s > duration:
            raise DomainError(
                f"event at t={ev.t0_s:g}s lies beyond the dataset duration {duration:g}s"
            )
    t = np.arange(n_cycles) * (device.cycle_period_us * 1e-6)
    x = xqp_at(t, events, x_floor=env_template.x_qp)
    coeffs = qp_rate_coefficients(device, env_template)
    idle_s = device.idle_time_us * 1e-6
    ordered = device.ordered_qubits()
    errors = np.empty((n_cycles, len(ordered)), dtype=np.uint8)
    for i, qubit in enumerate(ordered):
        gamma_total = 1.0 / (qubit.t1_baseline_us * 1e-6) + coeffs[i] * x
        p = 1.0 - np.exp(-idle_s * gamma_total) * qubit.readout_assignment_fidelity
        draws = rng_stream(rng_seed, i).random(n_cycles)
        errors[:, i] = draws < p
    return RrecsDataset(
        n_cycles=n_cycles,
        n_qubits=len(ordered),
        errors=errors,
        seed=rng_seed,
        truth_events=tuple(events),
        device_ref=device,
    )


def simulate_illumination(
    device: DeviceConfig,
    powers,
    s_per_s: float,
    r_per_s: float,
    g_dark_per_s: float,
    alpha_per_s: float,
    env_template: QpEnvironment = DEFAULT_ENVIRONMENT,
    t_qp_per_power=None,
) -> list[IlluminationPoint]:
    """Steady-state sweep over normalized optical powers in [0, 1].

    Generation is g = g_dark + alpha * P.  Per power: the stationary QP
    density, every qubit's T1 at its idle frequency, and the frequency shift
    for qubits whose gap difference exceeds the qubit energy (NaN otherwise,
    where the shift formula does not apply).  ``t_qp_per_power`` optionally
    supplies an effective QP temperature per power (illumination heating);
    default holds env_template's value.
    """
    powers = np.asarray(powers, dtype=float)
    if np.any((powers < 0.0) | (powers > 1.0)):
        raise DomainError("normalized powers must lie in [0, 1]")
    if np.any(np.diff(powers) < 0.0):
        raise DomainError("powers must be sorted ascending")
    if t_qp_per_power is None:
        temps = np.full(powers.shape, env_template.T_qp_K)
    else:
        temps = np.asarray(t_qp_per_power, dtype=float)
        if temps.shape != powers.shape:
            raise DomainError("t_qp_per_power must match powers in length")
    ordered = device.ordered_qubits()
    points = []
    for power, t_qp in zip(powers, temps):
        dyn = QpDynamicsParams(
            s_per_s=s_per_s, r_per_s=r_per_s, g_per_s=g_dark_per_s + alpha_per_s * power
        )
        x_ss = physics.steady_state_xqp(dyn)
        env = replace(env_template, x_qp=x_ss, T_qp_K=t_qp)
        t1s = []
        shifts = []
        for qubit in ordered:
            profile = qubit.gap_profile()
            rate_qp = physics.gamma_qp(qubit.f_idle_GHz, profile, env)
            t1s.append(
                physics.t1_from_rates(1.0 / (qubit.t1_baseline_us * 1e-6), rate_qp) * 1e6
            )
            if profile.gap_difference_GHz > qubit.f_idle_GHz:
                a = physics.freq_shift_coefficient(
                    profile.gap_difference_GHz, qubit.f_idle_GHz,
                    physics.DEFAULT_CONSTANTS.bulk_gap_over_h_GHz,
                )
                shifts.append(physics.frequency_shift(qubit.f_idle_GHz, x_ss, a))
            else:
                shifts.append(float("nan"))
        points.append(
            IlluminationPoint(
                normalized_power=float(power),
                x_qp_ss=x_ss,
                per_qubit_t1_us=tuple(t1s),
                per_qubit_freq_shift_GHz=tuple(shifts),
            )
        )
    return points


def event_free_error_probs(device: DeviceConfig) -> np.ndarray:
    """Per-qubit baseline error probability from the device tables alone."""
    return np.array(
        [
            per_cycle_error_prob(q, q.t1_baseline_us, device.idle_time_us)
            for q in device.ordered_qubits()
        ]
    )


# ---------------------------------------------------------------------------
# Dataset persistence.
#
# Binary layout: magic 'RRCS', one version byte, u32 little-endian n_cycles,
# u16 little-endian n_qubits, then one bit-packed row per cycle padded to a
# whole byte (qubit 0 in the least significant bit).  Ground-truth events,
# the seed, and the device snapshot live in a JSON sidecar next to the file.
# ---------------------------------------------------------------------------


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".json")


def save_dataset_binary(dataset: RrecsDataset, path: str | Path) -> None:
    path = Path(path)
    header = BINARY_MAGIC + bytes([BINARY_VERSION]) + struct.pack(
        "<IH", dataset.n_cycles, dataset.n_qubits
    )
    packed = np.packbits(dataset.errors, axis=1, bitorder="little")
    atomic_write_bytes(path, header + packed.tobytes())
    sidecar = {
        "seed": dataset.seed,
        "truth_events": [asdict(ev) for ev in dataset.truth_events],
        "device": device_to_dict(dataset.device_ref),
    }
    atomic_write_text(sidecar_path(path), json.dumps(sidecar, indent=2) + "\n")


def load_dataset_binary(path: str | Path) -> RrecsDataset:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    header_size = len(BINARY_MAGIC) + 1 + 6
    if len(blob) < header_size or blob[: len(BINARY_MAGIC)] != BINARY_MAGIC:
        raise DataError(f"{path}: not a packed dataset (bad magic)")
    version = blob[len(BINARY_MAGIC)]
    if version != BINARY_VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    n_cycles, n_qubits = struct.unpack_from("<IH", blob, len(BINARY_MAGIC) + 1)
    row_bytes = (n_qubits + 7) // 8
    expected = header_size + n_cycles * row_bytes
    if len(blob) != expected:
        raise DataError(
            f"{path}: payload is {len(blob) - header_size} bytes, "
            f"expected {n_cycles * row_bytes}"
        )
    packed = np.frombuffer(blob, dtype=np.uint8, offset=header_size).reshape(
        n_cycles, row_bytes
    )
    errors = np.unpackbits(packed, axis=1, bitorder="little")[:, :n_qubits]
    side = sidecar_path(path)
    try:
        meta = json.loads(side.read_text())
    except OSError as exc:
        raise DataError(f"{side}: missing sidecar: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{side}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    for key in ("seed", "truth_events", "device"):
        if key not in meta:
            raise DataError(f"{side}: missing key {key!r}")
    try:
        truth = tuple(ImpactEvent(**ev) for ev in meta["truth_events"])
    except (TypeError, DomainError) as exc:
        raise DataError(f"{side}: bad truth_events: {exc}") from exc
    device = device_from_dict(meta["device"], source=str(side))
    return RrecsDataset(
        n_cycles=n_cycles,
        n_qubits=n_qubits,
        errors=errors,
        seed=int(meta["seed"]),
        truth_events=truth,
        device_ref=device,
    )


def save_dataset_csv(dataset: RrecsDataset, path: str | Path) -> None:
    labels = dataset.device_ref.qubit_labels()
    lines = ["cycle," + ",".join(labels)]
    for k in range(dataset.n_cycles):
        lines.append(f"{k}," + ",".join(str(int(v)) for v in dataset.errors[k]))
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def load_dataset_csv(path: str | Path, device: DeviceConfig) -> RrecsDataset:
    """Read the delimited format back; truth and seed live only in sidecars."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if not lines:
        raise DataError(f"{path}: empty file")
    expected_header = "cycle," + ",".join(device.qubit_labels())
    if lines[0] != expected_header:
        raise DataError(f"{path}:1: header does not match the device layout")
    n_qubits = len(device.qubit_labels())
    errors = np.empty((len(lines) - 1, n_qubits), dtype=np.uint8)
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != n_qubits + 1:
            raise DataError(f"{path}:{lineno}: expected {n_qubits + 1} fields")
        try:
            values = [int(v) for v in parts[1:]]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        if any(v not in (0, 1) for v in values):
            raise DataError(f"{path}:{lineno}: error values must be 0 or 1")
        errors[lineno - 2] = values
    return RrecsDataset(
        n_cycles=errors.shape[0],
        n_qubits=n_qubits,
        errors=errors,
        seed=0,
        truth_events=(),
        device_ref=device,
    )
