"""Physical constants and the internal unit convention.

Everything downstream works in a single unit system: energies are carried as
frequencies (E/h, in GHz), times in seconds (device tables keep their native
microsecond fields), temperatures in kelvin.  Two conversion factors cover all
traffic between those systems.

Two distinct gap values coexist on purpose.  The thin-film thickness model
works in ueV with the 180 ueV bulk gap of aluminum, while the quasiparticle
tunneling and BCS formulas use the rounded 50 GHz bulk gap.  Neither is
derived from the other (180 ueV corresponds to ~43.5 GHz), so both are stored
and each is used only where its convention applies.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import DomainError


@dataclass(frozen=True)
class PhysicalConstants:
    """Constants of the aluminum gap model and unit conversions."""

    delta_bulk_ueV: float = 180.0
    gap_slope_A_ueV_nm: float = 900.0
    bulk_gap_over_h_GHz: float = 50.0
    ueV_to_GHz: float = 0.2417990
    kB_over_h_GHz_per_K: float = 20.836619

    def __post_init__(self) -> None:
        for field in fields(self):
            if getattr(self, field.name) <= 0.0:
                raise DomainError(f"{field.name} must be strictly positive")


DEFAULT_CONSTANTS = PhysicalConstants()

GHZ_TO_HZ = 1.0e9
