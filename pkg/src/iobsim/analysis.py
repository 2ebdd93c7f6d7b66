"""Battery-life-vs-rate projections, architecture comparison, lifetime tables."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .energy import (
    NO_HARVEST,
    Architecture,
    BatterySpec,
    ComputeModel,
    HarvesterSpec,
    LifetimeClass,
    PowerBreakdown,
    battery_life,
    classify_lifetime,
    comm_power,
    power_breakdown,
    sense_power,
)
from .engine import SimResult
from .link import LinkTech
from .scenario import DeviceClass, NodeSpec

INFEASIBLE = "INFEASIBLE"


@dataclass(frozen=True)
class SweepSpec:
    rate_min: float
    rate_max: float
    points: int
    device_class: DeviceClass
    link: LinkTech
    spacing: str = "log"
    battery: BatterySpec = field(default_factory=BatterySpec)
    harvester: HarvesterSpec = NO_HARVEST
    compute: Optional[ComputeModel] = None

    def __post_init__(self) -> None:
        if not 0 < self.rate_min < self.rate_max:
            raise ValueError("need 0 < rate_min < rate_max")
        if self.points < 2:
            raise ValueError("a sweep needs at least 2 points")
        if self.spacing not in ("log", "linear"):
            raise ValueError(f"spacing must be 'log' or 'linear', got {self.spacing!r}")

    @property
    def compute_model(self) -> ComputeModel:
        if self.compute is not None:
            return self.compute
        return ComputeModel(compression_factor=self.device_class.default_compression)

    def grid(self) -> np.ndarray:
        if self.spacing == "log":
            g = np.geomspace(self.rate_min, self.rate_max, self.points)
        else:
            g = np.linspace(self.rate_min, self.rate_max, self.points)
        # pin the end points exactly
        g[0], g[-1] = self.rate_min, self.rate_max
        return g


@dataclass(frozen=True)
class CurveRow:
    rate: float
    tx_rate: float
    sense_W: float
    compute_W: float
    comm_W: float
    total_W: float
    life_h: Optional[float]
    class_label: str
    feasible: bool


def _curve_row(spec: SweepSpec, rate: float) -> CurveRow:
    compute = spec.compute_model
    tx = compute.compression_factor * rate
    sense = sense_power(spec.device_class.sense_model, rate)
    comp = compute.isa_energy_per_bit * rate
    feasible = tx <= spec.link.max_rate
    if feasible:
        comm = comm_power(spec.link, tx)
    else:
        # reported at the demanded rate so the curve shows what would be needed
        comm = spec.link.energy_per_bit * tx + spec.link.static_power
    total = PowerBreakdown(sense, comp, comm).total
    if not feasible:
        return CurveRow(rate, tx, sense, comp, comm, total, None, INFEASIBLE, False)
    life = battery_life(spec.battery, total, spec.harvester)
    return CurveRow(rate, tx, sense, comp, comm, total, life, classify_lifetime(life).value, True)


def project_curve(spec: SweepSpec, workers: int = 1) -> list[CurveRow]:
    """Analytic battery life of a hub-offload node across a rate grid.

    Rows whose transmitted rate exceeds link capacity are kept and flagged
    INFEASIBLE. Output order follows the grid whatever ``workers`` is.
    """
    grid = [float(r) for r in spec.grid()]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda r: _curve_row(spec, r), grid))
    return [_curve_row(spec, r) for r in grid]


CURVE_COLUMNS = ("rate_bps", "sense_W", "comm_W", "total_W", "life_h", "class", "feasible")


def curve_to_csv(rows: list[CurveRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for r in rows:
        life = "" if r.life_h is None or math.isinf(r.life_h) else repr(r.life_h)
        w.writerow(
            (
                repr(r.rate),
                repr(r.sense_W),
                repr(r.comm_W),
                repr(r.total_W),
                life,
                r.class_label,
                "true" if r.feasible else "false",
            )
        )
    return buf.getvalue()


def gnuplot_script(csv_path: str, title: str = "Projected battery life vs data rate") -> str:
    """Plot script for a curve CSV; perpetual rows (empty life) plot at the top."""
    return f"""set datafile separator ','
set key autotitle columnhead
set logscale xy
set xlabel 'data rate (bit/s)'
set ylabel 'battery life (h)'
set title '{title}'
set yrange [1:1e6]
year = 8760
set arrow from graph 0, first year to graph 1, first year nohead dt 2
plot '{csv_path}' using 1:($5 > 0 ? $5 : 1e6) with lines title 'battery life'
"""


@dataclass(frozen=True)
class ArchitectureComparison:
    node_id: str
    standalone_link: str
    offload_link: str
    standalone: PowerBreakdown
    offload: PowerBreakdown

    @property
    def standalone_W(self) -> float:
        return self.standalone.total

    @property
    def offload_W(self) -> float:
        return self.offload.total

    @property
    def ratio(self) -> float:
        return self.standalone_W / self.offload_W if self.offload_W > 0 else math.inf


def compare_architectures(node: NodeSpec, wir: LinkTech, rf: LinkTech) -> ArchitectureComparison:
    """Same sensor two ways: own CPU + radio, or raw data to the hub over the body.

    The standalone side uses the node's local-compute cost and result rate,
    the offload side its ISA cost and compression. Raises CapacityError when
    either side's rate does not fit its link.
    """
    standalone = replace(node, architecture=Architecture.STANDALONE)
    offload = replace(node, architecture=Architecture.HUB_OFFLOAD)
    return ArchitectureComparison(
        node_id=node.id,
        standalone_link=rf.name,
        offload_link=wir.name,
        standalone=power_breakdown(standalone, rf),
        offload=power_breakdown(offload, wir),
    )


COMPARE_COLUMNS = (
    "node",
    "architecture",
    "link",
    "sense_W",
    "compute_W",
    "comm_W",
    "total_W",
    "ratio_standalone_over_offload",
)


def comparison_to_csv(cmp: ArchitectureComparison) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARE_COLUMNS)
    for arch, link, pb in (
        ("standalone", cmp.standalone_link, cmp.standalone),
        ("hub_offload", cmp.offload_link, cmp.offload),
    ):
        w.writerow(
            (
                cmp.node_id,
                arch,
                link,
                repr(pb.sense),
                repr(pb.compute),
                repr(pb.comm),
                repr(pb.total),
                repr(cmp.ratio),
            )
        )
    return buf.getvalue()


def classify_scenario(result: SimResult) -> list[tuple[str, LifetimeClass]]:
    return [(nid, classify_lifetime(o.lifetime_h)) for nid, o in result.outcomes.items()]

