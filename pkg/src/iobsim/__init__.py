"""Energy projection and simulation for hub-and-leaf body area networks."""

from .analysis import (
    ArchitectureComparison,
    CurveRow,
    SweepSpec,
    classify_scenario,
    compare_architectures,
    project_curve,
)
from .energy import (
    Architecture,
    BatterySpec,
    ComputeModel,
    HarvesterSpec,
    LifetimeClass,
    SensePowerModel,
    battery_life,
    classify_lifetime,
    comm_power,
    node_power,
    sense_power,
)
from .engine import EnergyLedger, SimResult, run, step
from .link import (
    BodyContained,
    CapacityError,
    LinkTech,
    OffBody,
    OnBody,
    OverloadError,
    Radiative,
    allocate_tdma,
    ble_link,
    eavesdrop_set,
    reachable,
    wir_link,
)
from .scenario import (
    DeviceClass,
    HubSpec,
    NodeSpec,
    Scenario,
    ScenarioError,
    default_catalog,
    load_scenario,
    parse_scenario,
    serialize_scenario,
    validate,
)

__version__ = "0.1.0"
