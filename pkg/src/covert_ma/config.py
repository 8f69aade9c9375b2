"""Scenario parameters and unit helpers."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace


class ConfigError(ValueError):
    """Raised for physically or numerically invalid configurations."""


def dbm_to_watt(p_dbm: float) -> float:
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def watt_to_dbm(p_w: float) -> float:
    return 10.0 * math.log10(p_w) + 30.0


@dataclass(frozen=True)
class SystemConfig:
    """Physical constants of one covert-downlink scenario.

    All powers are linear watts. ``paths_per_user[0]`` is the warden's path
    count, entries ``1..K`` belong to the users. Defaults reproduce the
    reference setup: K=2, N=4, four paths per receiver, a 3-wavelength square
    region with half-wavelength spacing, -90 dBm noise at users and warden,
    tau=1.5, eps=0.05 and a 10 dBm power budget.
    """

    wavelength: float = 0.1
    num_users: int = 2
    num_antennas: int = 4
    paths_per_user: tuple[int, ...] = (4, 4, 4)
    region_size: float = 0.3
    min_spacing: float = 0.05
    noise_power: float = 1e-12
    warden_noise_power: float = 1e-12
    noise_uncertainty: float = 1.5
    covertness: float = 0.05
    max_power: float = 1e-2
    path_gain: float = 1e-8
    fpa_layout: str = "upa"

    def __post_init__(self):
        paths = tuple(int(x) for x in self.paths_per_user)
        # a uniform path count broadcasts, so replace(num_users=...) stays valid
        if len(set(paths)) == 1 and len(paths) != self.num_users + 1:
            paths = paths[:1] * (self.num_users + 1)
        object.__setattr__(self, "paths_per_user", paths)
        self.validate()

    def validate(self) -> None:
        if self.num_users < 1 or self.num_antennas < 1:
            raise ConfigError("num_users and num_antennas must be positive")
        if len(self.paths_per_user) != self.num_users + 1:
            raise ConfigError(
                f"paths_per_user needs {self.num_users + 1} entries (warden first), "
                f"got {len(self.paths_per_user)}"
            )
        if any(L < 1 for L in self.paths_per_user):
            raise ConfigError("every receiver needs at least one path")
        for name in ("wavelength", "region_size", "min_spacing", "noise_power",
                     "warden_noise_power", "max_power", "path_gain"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be finite and positive, got {value}")
        # tau == 1 makes the detection-error formula divide by ln(1) = 0
        if not self.noise_uncertainty > 1.0:
            raise ConfigError("noise_uncertainty must exceed 1")
        if not 0.0 < self.covertness <= 0.5:
            raise ConfigError("covertness must lie in (0, 0.5]")
        if self.fpa_layout not in ("upa", "linear"):
            raise ConfigError(f"unknown fpa_layout {self.fpa_layout!r}")
        if self.num_antennas > packing_capacity(self.region_size, self.min_spacing):
            raise ConfigError(
                f"region {self.region_size} m cannot hold {self.num_antennas} antennas "
                f"at spacing {self.min_spacing} m"
            )

    @property
    def covert_threshold(self) -> float:
        from .covertness import covert_power_budget

        return covert_power_budget(
            self.warden_noise_power, self.noise_uncertainty, self.covertness
        ).p_th

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


def packing_capacity(region_size: float, spacing: float) -> int:
    """Points a square grid at ``spacing`` places in ``[0, region_size]^2``.

    A square lattice is a conservative packing; configs it cannot host are
    rejected up front instead of stalling the rejection sampler.
    """
    per_side = int(math.floor(region_size / spacing + 1e-9)) + 1
    return per_side * per_side
