"""The 12-qubit checkerboard device: parameters, persistence, error model.

The reference device is a 3x4 grid of frequency-tunable transmons alternating
between weakly (30 nm thin lead) and strongly (15 nm thin lead) gap-engineered
junctions, all with a 100 nm thick lead.  Readout-resonator fields are carried
as metadata only; no resonator physics is modeled.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import math

from . import physics
from .errors import DataError, DomainError
from .ioutil import atomic_write_text

N_ROWS = 3
N_COLS = 4
N_QUBITS = N_ROWS * N_COLS

THICK_LEAD_NM = 100.0
THIN_LEAD_NM = {"weak": 30.0, "strong": 15.0}


class GapEngineeringKind(str, Enum):
    WEAK = "weak"
    STRONG = "strong"


@dataclass(frozen=True)
class QubitSpec:
    """One transmon: placement, junction geometry, coherence, readout."""

    row: int
    col: int
    ge_kind: GapEngineeringKind
    thin_nm: float
    thick_nm: float
    f_idle_GHz: float
    f_max_GHz: float
    anharmonicity_MHz: float
    t1_baseline_us: float
    readout_assignment_fidelity: float
    resonator_f_GHz: float
    resonator_decay_ns: float
    resonator_coupling_MHz: float

    def __post_init__(self) -> None:
        if not (0 <= self.row < N_ROWS and 0 <= self.col < N_COLS):
            raise DomainError(f"qubit position ({self.row}, {self.col}) off the grid")
        if not 0.0 < self.readout_assignment_fidelity <= 1.0:
            raise DomainError("readout assignment fidelity must be in (0, 1]")
        if self.f_idle_GHz > self.f_max_GHz:
            raise DomainError("idle frequency cannot exceed the maximum frequency")
        if self.t1_baseline_us <= 0.0:
            raise DomainError("baseline T1 must be strictly positive")

    @property
    def label(self) -> str:
        return f"q{self.row}{self.col}"

    def gap_profile(self) -> physics.JunctionGapProfile:
        return physics.gap_profile(self.thin_nm, self.thick_nm)


@dataclass(frozen=True)
class DeviceConfig:
    """Immutable device description plus sampling-protocol timing."""

    qubits: tuple[QubitSpec, ...]
    chip_area_cm2: float = 1.0
    cycle_period_us: float = 100.0
    idle_time_us: float = 1.0
    samples_per_dataset: int = 600_000

    def __post_init__(self) -> None:
        if len(self.qubits) != N_QUBITS:
            raise DomainError(f"device needs exactly {N_QUBITS} qubits, got {len(self.qubits)}")
        positions = {(q.row, q.col) for q in self.qubits}
        if len(positions) != N_QUBITS:
            raise DomainError("duplicate qubit grid positions")
        by_pos = {(q.row, q.col): q for q in self.qubits}
        for (row, col), qubit in by_pos.items():
            for nbr in ((row + 1, col), (row, col + 1)):
                if nbr in by_pos and by_pos[nbr].ge_kind == qubit.ge_kind:
                    raise DomainError(
                        f"checkerboard violated: {qubit.label} and "
                        f"{by_pos[nbr].label} share gap-engineering kind"
                    )

    def ordered_qubits(self) -> tuple[QubitSpec, ...]:
        """Qubits in row-major order, matching the column order of datasets."""
        return tuple(sorted(self.qubits, key=lambda q: (q.row, q.col)))

    def qubit_labels(self) -> list[str]:
        return [q.label for q in self.ordered_qubits()]

    def subset_indices(self, subset: str) -> list[int]:
        """Row-major qubit indices for 'weak', 'strong', or 'all'."""
        ordered = self.ordered_qubits()
        if subset == "all":
            return list(range(len(ordered)))
        try:
            kind = GapEngineeringKind(subset)
        except ValueError:
            raise DomainError(f"unknown subset {subset!r}; use weak|strong|all") from None
        return [i for i, q in enumerate(ordered) if q.ge_kind == kind]


# Reference-device parameter tables, row-major over the 3x4 grid.
_GE_KIND = (
    ("weak", "strong", "weak", "strong"),
    ("strong", "weak", "strong", "weak"),
    ("weak", "strong", "weak", "strong"),
)
_ANHARMONICITY_MHZ = (
    (198, 196, 198, 200),
    (206, 197, 199, 198),
    (198, 199, 198, 199),
)
_F_IDLE_GHZ = (
    (6.480, 6.320, 6.370, 6.410),
    (6.510, 6.490, 6.400, 6.450),
    (6.460, 6.385, 6.420, 6.550),
)
_F_MAX_GHZ = (
    (7.01, 7.29, 6.95, 7.28),
    (7.30, 7.08, 7.33, 7.04),
    (7.14, 7.31, 7.11, 7.25),
)
_T1_US = (
    (53, 23, 51, 63),
    (82, 49, 61, 50),
    (62, 55, 52, 58),
)
_RESONATOR_F_GHZ = (
    (7.43, 7.38, 7.34, 7.33),
    (7.41, 7.36, 7.32, 7.31),
    (7.43, 7.38, 7.34, 7.33),
)
_RESONATOR_DECAY_NS = (
    (35, 16, 8, 43),
    (33, 22, 23, 53),
    (31, 16, 7, 36),
)
_RESONATOR_COUPLING_MHZ = (
    (68, 59, 69, 45),
    (61, 65, 52, 60),
    (60, 73, 58, 54),
)
_READOUT_FIDELITY = (
    (0.98, 0.99, 0.97, 0.97),
    (0.99, 0.96, 0.98, 0.95),
    (0.98, 0.99, 0.97, 0.98),
)


def build_reference_device() -> DeviceConfig:
    """The measured reference device, every table entry transcribed."""
    qubits = []
    for row in range(N_ROWS):
        for col in range(N_COLS):
            kind = GapEngineeringKind(_GE_KIND[row][col])
            qubits.append(
                QubitSpec(
                    row=row,
                    col=col,
                    ge_kind=kind,
                    thin_nm=THIN_LEAD_NM[kind.value],
                    thick_nm=THICK_LEAD_NM,
                    f_idle_GHz=_F_IDLE_GHZ[row][col],
                    f_max_GHz=_F_MAX_GHZ[row][col],
                    anharmonicity_MHz=float(_ANHARMONICITY_MHZ[row][col]),
                    t1_baseline_us=float(_T1_US[row][col]),
                    readout_assignment_fidelity=_READOUT_FIDELITY[row][col],
                    resonator_f_GHz=_RESONATOR_F_GHZ[row][col],
                    resonator_decay_ns=float(_RESONATOR_DECAY_NS[row][col]),
                    resonator_coupling_MHz=float(_RESONATOR_COUPLING_MHZ[row][col]),
                )
            )
    return DeviceConfig(qubits=tuple(qubits))


def per_cycle_error_prob(
    spec: QubitSpec, t1_effective_us: float, idle_time_us: float
) -> float:
    """Probability of reading |0> after preparing |1> in one sampling cycle.

    Relaxation during the idle followed by symmetric assignment error:
    p = 1 - exp(-idle/T1) * F.  Survival probabilities multiply because the
    two channels act sequentially and independently.
    """
    if t1_effective_us <= 0.0:
        raise DomainError("effective T1 must be strictly positive")
    if idle_time_us < 0.0:
        raise DomainError("idle time must be nonnegative")
    survival = math.exp(-idle_time_us / t1_effective_us)
    return 1.0 - survival * spec.readout_assignment_fidelity


_DEVICE_KEYS = {
    "chip_area_cm2",
    "cycle_period_us",
    "idle_time_us",
    "samples_per_dataset",
    "qubits",
}
_QUBIT_KEYS = {
    "row",
    "col",
    "ge_kind",
    "thin_nm",
    "thick_nm",
    "f_idle_GHz",
    "f_max_GHz",
    "anharmonicity_MHz",
    "t1_baseline_us",
    "readout_assignment_fidelity",
    "resonator_f_GHz",
    "resonator_decay_ns",
    "resonator_coupling_MHz",
}


def device_to_dict(config: DeviceConfig) -> dict:
    """JSON-ready representation with QubitSpec field names verbatim."""
    payload = asdict(config)
    payload["qubits"] = [
        {**asdict(q), "ge_kind": q.ge_kind.value} for q in config.ordered_qubits()
    ]
    return payload


def device_from_dict(payload: dict, source: str = "<dict>") -> DeviceConfig:
    if not isinstance(payload, dict):
        raise DataError(f"{source}: device config must be a JSON object")
    unknown = set(payload) - _DEVICE_KEYS
    if unknown:
        raise DataError(f"{source}: unknown top-level keys {sorted(unknown)}")
    missing = _DEVICE_KEYS - set(payload)
    if missing:
        raise DataError(f"{source}: missing top-level keys {sorted(missing)}")
    raw_qubits = payload["qubits"]
    if not isinstance(raw_qubits, list):
        raise DataError(f"{source}: 'qubits' must be an array")
    qubits = []
    for i, raw in enumerate(raw_qubits):
        where = f"{source}: qubits[{i}]"
        if not isinstance(raw, dict):
            raise DataError(f"{where}: must be an object")
        unknown = set(raw) - _QUBIT_KEYS
        if unknown:
            raise DataError(f"{where}: unknown keys {sorted(unknown)}")
        missing = _QUBIT_KEYS - set(raw)
        if missing:
            raise DataError(f"{where}: missing keys {sorted(missing)}")
        try:
            kind = GapEngineeringKind(raw["ge_kind"])
        except ValueError:
            raise DataError(f"{where}: ge_kind must be 'weak' or 'strong'") from None
        try:
            qubits.append(
                QubitSpec(
                    row=int(raw["row"]),
                    col=int(raw["col"]),
                    ge_kind=kind,
                    thin_nm=float(raw["thin_nm"]),
                    thick_nm=float(raw["thick_nm"]),
                    f_idle_GHz=float(raw["f_idle_GHz"]),
                    f_max_GHz=float(raw["f_max_GHz"]),
                    anharmonicity_MHz=float(raw["anharmonicity_MHz"]),
                    t1_baseline_us=float(raw["t1_baseline_us"]),
                    readout_assignment_fidelity=float(raw["readout_assignment_fidelity"]),
                    resonator_f_GHz=float(raw["resonator_f_GHz"]),
                    resonator_decay_ns=float(raw["resonator_decay_ns"]),
                    resonator_coupling_MHz=float(raw["resonator_coupling_MHz"]),
                )
            )
        except (TypeError, ValueError, DomainError) as exc:
            raise DataError(f"{where}: {exc}") from exc
    try:
        return DeviceConfig(
            qubits=tuple(qubits),
            chip_area_cm2=float(payload["chip_area_cm2"]),
            cycle_period_us=float(payload["cycle_period_us"]),
            idle_time_us=float(payload["idle_time_us"]),
            samples_per_dataset=int(payload["samples_per_dataset"]),
        )
    except (TypeError, ValueError, DomainError) as exc:
        raise DataError(f"{source}: {exc}") from exc


def save_device(config: DeviceConfig, path: str | Path) -> None:
    atomic_write_text(Path(path), json.dumps(device_to_dict(config), indent=2) + "\n")


def load_device(path: str | Path) -> DeviceConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    return device_from_dict(payload, source=str(path))
