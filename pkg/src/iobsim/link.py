"""Link technologies, containment geometry and the shared-channel scheduler."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

EQS_CARRIER_LIMIT_HZ = 30e6
DEFAULT_BUBBLE_M = 0.1
DEFAULT_RF_RADIUS_M = 7.5


class CapacityError(ValueError):
    """A requested rate does not fit on a link."""

    def __init__(self, message: str, link: str = "", deficit: float = 0.0):
        super().__init__(message)
        self.link = link
        self.deficit = deficit


class OverloadError(CapacityError):
    """Aggregate demand on a shared channel exceeds its capacity."""


@dataclass(frozen=True)
class BodyContained:
    bubble_m: float = DEFAULT_BUBBLE_M


@dataclass(frozen=True)
class Radiative:
    radius_m: float = DEFAULT_RF_RADIUS_M


Propagation = Union[BodyContained, Radiative]


@dataclass(frozen=True)
class LinkTech:
    """A communication technology: P = energy_per_bit * rate + static_power."""

    name: str
    energy_per_bit: float
    static_power: float
    max_rate: float
    propagation: Propagation
    carrier_limit_hz: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.energy_per_bit) and self.energy_per_bit > 0):
            raise ValueError(f"link {self.name!r}: energy_per_bit must be positive and finite")
        if not (math.isfinite(self.static_power) and self.static_power >= 0):
            raise ValueError(f"link {self.name!r}: static_power must be non-negative")
        if not (math.isfinite(self.max_rate) and self.max_rate > 0):
            raise ValueError(f"link {self.name!r}: max_rate must be positive")
        if not self.carrier_limit_hz > 0:
            raise ValueError(f"link {self.name!r}: carrier_limit_hz must be positive")
        prop = self.propagation
        if isinstance(prop, BodyContained):
            if prop.bubble_m < 0:
                raise ValueError(f"link {self.name!r}: bubble_m must be >= 0")
            if self.carrier_limit_hz > EQS_CARRIER_LIMIT_HZ:
                raise ValueError(
                    f"link {self.name!r}: body-contained links operate at <= 30 MHz"
                )
        elif isinstance(prop, Radiative):
            if not prop.radius_m > 0:
                raise ValueError(f"link {self.name!r}: radius_m must be > 0")
        else:
            raise TypeError(f"unknown propagation {prop!r}")

    @property
    def body_contained(self) -> bool:
        return isinstance(self.propagation, BodyContained)


def wir_link(name: str = "wir", energy_per_bit: float = 100e-12) -> LinkTech:
    """Body-channel (EQS-HBC) link: 100 pJ/bit, 4 Mbps, no static draw."""
    return LinkTech(
        name=name,
        energy_per_bit=energy_per_bit,
        static_power=0.0,
        max_rate=4e6,
        propagation=BodyContained(DEFAULT_BUBBLE_M),
        carrier_limit_hz=EQS_CARRIER_LIMIT_HZ,
    )


def ble_link(name: str = "ble", static_power: float = 0.5e-3) -> LinkTech:
    """BLE-class radio: 10 nJ/bit plus 0.5 mW of radio overhead, 2 Mbps PHY."""
    return LinkTech(
        name=name,
        energy_per_bit=10e-9,
        static_power=static_power,
        max_rate=2e6,
        propagation=Radiative(DEFAULT_RF_RADIUS_M),
        carrier_limit_hz=2.4e9,
    )


LINK_PRESETS = {"wir": wir_link, "ble": ble_link}


@dataclass(frozen=True)
class OnBody:
    site: str = "torso"


@dataclass(frozen=True)
class OffBody:
    distance_m: float

    def __post_init__(self) -> None:
        if not self.distance_m > 0:
            raise ValueError("off-body distance must be > 0")


Placement = Union[OnBody, OffBody]


def _distance_from_body(p: Placement) -> float:
    return 0.0 if isinstance(p, OnBody) else p.distance_m


def reachable(link: LinkTech, tx: Placement, rx: Placement) -> bool:
    """Whether a receiver at ``rx`` can pick up a transmission from ``tx``.

    Geometry is one-dimensional: on-body endpoints sit at distance 0 and
    off-body endpoints at their distance from the body surface.
    """
    prop = link.propagation
    if isinstance(prop, BodyContained):
        tx_on, rx_on = isinstance(tx, OnBody), isinstance(rx, OnBody)
        if tx_on and rx_on:
            return True
        if tx_on:
            return rx.distance_m <= prop.bubble_m
        if rx_on:
            return tx.distance_m <= prop.bubble_m
        # neither endpoint touches the body: no channel to ride on
        return False
    distance = abs(_distance_from_body(tx) - _distance_from_body(rx))
    return distance <= prop.radius_m


def eavesdrop_set(
    link: LinkTech, tx: Placement, observers: Iterable[Placement]
) -> list[Placement]:
    """Observers that can overhear ``tx`` on ``link``, in input order."""
    return [obs for obs in observers if reachable(link, tx, obs)]


@dataclass(frozen=True)
class SlotTable:
    link: str
    allocations: tuple[tuple[str, float], ...]

    @property
    def total_rate(self) -> float:
        return math.fsum(rate for _, rate in self.allocations)

    def rate_of(self, node_id: str) -> float:
        for nid, rate in self.allocations:
            if nid == node_id:
                return rate
        return 0.0


def allocate_tdma(link: LinkTech, demands: Sequence[tuple[str, float]]) -> SlotTable:
    """Admit every demand in full, or refuse the whole set.

    Nodes demanding 0 get no slot. Overload is an error rather than a
    fair-share degradation, so downstream energy numbers stay analytic.
    """
    for nid, rate in demands:
        if not (math.isfinite(rate) and rate >= 0):
            raise ValueError(f"demand for {nid!r} must be a non-negative rate, got {rate!r}")
    total = math.fsum(rate for _, rate in demands)
    if total > link.max_rate:
        deficit = total - link.max_rate
        raise OverloadError(
            f"link {link.name!r} overloaded: demand {total:g} bps exceeds "
            f"capacity {link.max_rate:g} bps by {deficit:g} bps",
            link=link.name,
            deficit=deficit,
        )
    return SlotTable(
        link=link.name,
        allocations=tuple((nid, float(rate)) for nid, rate in demands if rate > 0),
    )
