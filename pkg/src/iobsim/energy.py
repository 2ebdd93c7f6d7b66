"""Power and battery-life arithmetic.

All quantities are SI floats: W, J/bit, bit/s, J. Lifetimes are hours, with
``math.inf`` standing for a node that never depletes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .link import CapacityError, LinkTech

if TYPE_CHECKING:
    from .scenario import NodeSpec

HOURS_PER_YEAR = 8760.0
HOURS_PER_WEEK = 168.0
HOURS_PER_DAY = 24.0
PERPETUAL = math.inf

DEFAULT_RESULT_FRACTION = 0.01
DEFAULT_LOCAL_COMPUTE_J_PER_BIT = 10e-12


def _check_nonneg(name: str, value: float) -> None:
    if not (math.isfinite(value) and value >= 0):
        raise ValueError(f"{name} must be non-negative and finite, got {value!r}")


@dataclass(frozen=True)
class SensePowerModel:
    """Affine sensing cost: ``static_power + energy_per_sensed_bit * rate``."""

    static_power: float
    energy_per_sensed_bit: float

    def __post_init__(self) -> None:
        _check_nonneg("static_power", self.static_power)
        _check_nonneg("energy_per_sensed_bit", self.energy_per_sensed_bit)


@dataclass(frozen=True)
class ComputeModel:
    isa_energy_per_bit: float = 0.0
    local_compute_energy_per_bit: float = DEFAULT_LOCAL_COMPUTE_J_PER_BIT
    compression_factor: float = 1.0

    def __post_init__(self) -> None:
        _check_nonneg("isa_energy_per_bit", self.isa_energy_per_bit)
        _check_nonneg("local_compute_energy_per_bit", self.local_compute_energy_per_bit)
        if not 0.0 < self.compression_factor <= 1.0:
            raise ValueError(
                f"compression_factor must lie in (0, 1], got {self.compression_factor!r}"
            )


@dataclass(frozen=True)
class BatterySpec:
    capacity_mah: float = 1000.0
    nominal_voltage_v: float = 3.0

    def __post_init__(self) -> None:
        for name in ("capacity_mah", "nominal_voltage_v"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")

    @property
    def energy_joules(self) -> float:
        # mAh -> coulombs is x3.6
        return self.capacity_mah * 3.6 * self.nominal_voltage_v


@dataclass(frozen=True)
class HarvesterSpec:
    harvest_power: float = 0.0

    def __post_init__(self) -> None:
        _check_nonneg("harvest_power", self.harvest_power)


NO_HARVEST = HarvesterSpec(0.0)


class Architecture(str, enum.Enum):
    STANDALONE = "standalone"
    HUB_OFFLOAD = "hub_offload"


class LifetimeClass(str, enum.Enum):
    PERPETUAL = "Perpetual"
    ALL_WEEK = "AllWeek"
    ALL_DAY = "AllDay"
    SUB_DAY = "SubDay"


@dataclass(frozen=True)
class PowerBreakdown:
    sense: float
    compute: float
    comm: float

    @property
    def total(self) -> float:
        return self.sense + self.compute + self.comm


def comm_power(link: LinkTech, tx_rate: float) -> float:
    if not tx_rate >= 0:
        raise ValueError(f"tx_rate must be >= 0, got {tx_rate!r}")
    if tx_rate > link.max_rate:
        raise CapacityError(
            f"rate {tx_rate:g} bps exceeds capacity of link {link.name!r} "
            f"({link.max_rate:g} bps)",
            link=link.name,
            deficit=tx_rate - link.max_rate,
        )
    return link.energy_per_bit * tx_rate + link.static_power


def sense_power(model: SensePowerModel, raw_rate: float) -> float:
    if not raw_rate >= 0:
        raise ValueError(f"raw_rate must be >= 0, got {raw_rate!r}")
    return model.static_power + model.energy_per_sensed_bit * raw_rate


def tx_rate(spec: NodeSpec) -> float:
    """Bits per second a node puts on its link.

    Hub-offload nodes ship (compressed) raw data; standalone nodes ship only
    the condensed result of their local computation.
    """
    if spec.architecture is Architecture.HUB_OFFLOAD:
        return spec.compute.compression_factor * spec.raw_rate
    if spec.result_rate is None:
        return DEFAULT_RESULT_FRACTION * spec.raw_rate
    return spec.result_rate


def compute_energy_per_bit(spec: NodeSpec) -> float:
    if spec.architecture is Architecture.HUB_OFFLOAD:
        return spec.compute.isa_energy_per_bit
    return spec.compute.local_compute_energy_per_bit


def power_breakdown(spec: NodeSpec, link: LinkTech) -> PowerBreakdown:
    return PowerBreakdown(
        sense=sense_power(spec.device_class.sense_model, spec.raw_rate),
        compute=compute_energy_per_bit(spec) * spec.raw_rate,
        comm=comm_power(link, tx_rate(spec)),
    )


def node_power(spec: NodeSpec, link: LinkTech) -> float:
    """Average draw of a leaf node: sensing + compute/ISA + communication."""
    return power_breakdown(spec, link).total


def battery_life(
    batt: BatterySpec, p_node: float, harvest: HarvesterSpec = NO_HARVEST
) -> float:
    """Hours until the battery is empty, or ``PERPETUAL`` if it never drains."""
    net = p_node - harvest.harvest_power
    if net <= 0:
        return PERPETUAL
    return batt.energy_joules / net / 3600.0


def classify_lifetime(life_h: float) -> LifetimeClass:
    if life_h > HOURS_PER_YEAR:
        return LifetimeClass.PERPETUAL
    if life_h >= HOURS_PER_WEEK:
        return LifetimeClass.ALL_WEEK
    if life_h >= HOURS_PER_DAY:
        return LifetimeClass.ALL_DAY
    return LifetimeClass.SUB_DAY
