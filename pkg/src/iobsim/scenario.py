"""Scenario data model, device-class catalog, YAML loading and validation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

import yaml

from .energy import (
    Architecture,
    BatterySpec,
    ComputeModel,
    HarvesterSpec,
    SensePowerModel,
    node_power,
    tx_rate,
)
from .link import (
    LINK_PRESETS,
    BodyContained,
    LinkTech,
    OffBody,
    OnBody,
    OverloadError,
    Placement,
    Radiative,
    allocate_tdma,
    reachable,
)
from .units import UnitError, format_quantity, parse_quantity

SCHEMA_VERSION = 1
DEFAULT_EPOCH_S = 1.0
HARVEST_BAND_MAX_W = 200e-6

CALIBRATION_NOTE = (
    "Sensing-power coefficients are calibration constants chosen to place each "
    "class in its projected lifetime band; they are not measured device data."
)


@dataclass(frozen=True)
class DeviceClass:
    name: str
    sense_model: SensePowerModel
    typical_raw_rate: float
    default_compression: float = 1.0
    catalog_note: str = ""

    def __post_init__(self) -> None:
        if not self.typical_raw_rate > 0:
            raise ValueError(f"class {self.name!r}: typical_raw_rate must be > 0")
        if not 0.0 < self.default_compression <= 1.0:
            raise ValueError(f"class {self.name!r}: compression must lie in (0, 1]")


def default_catalog() -> list[DeviceClass]:
    """Wearable classes with calibration sensing models (see CALIBRATION_NOTE)."""
    return [
        DeviceClass(
            "biopotential-patch",
            SensePowerModel(2e-6, 0.3e-9),
            10e3,
            1.0,
            "ECG/EMG/EEG patch",
        ),
        DeviceClass(
            "smart-ring-fitness",
            SensePowerModel(10e-6, 0.3e-9),
            5e3,
            1.0,
            "ring or fitness tracker",
        ),
        DeviceClass(
            "earbud-audio",
            SensePowerModel(4e-3, 1e-9),
            256e3,
            1.0,
            "audio node with speaker drive",
        ),
        DeviceClass(
            "voice-pendant",
            SensePowerModel(2e-3, 1e-9),
            64e3,
            1.0,
            "voice-input pin or pendant",
        ),
        DeviceClass(
            "camera-video",
            SensePowerModel(50e-3, 0.5e-9),
            10e6,
            0.2,
            "first-person camera, frame compression on node",
        ),
    ]


def catalog_by_name(classes: Iterable[DeviceClass] | None = None) -> dict[str, DeviceClass]:
    return {c.name: c for c in (default_catalog() if classes is None else classes)}


@dataclass(frozen=True)
class NodeSpec:
    id: str
    device_class: DeviceClass
    raw_rate: float
    link: str
    architecture: Architecture = Architecture.HUB_OFFLOAD
    compute: ComputeModel = field(default_factory=ComputeModel)
    result_rate: Optional[float] = None
    battery: BatterySpec = field(default_factory=BatterySpec)
    harvester: HarvesterSpec = field(default_factory=HarvesterSpec)
    placement: Placement = field(default_factory=OnBody)


@dataclass(frozen=True)
class HubSpec:
    id: str = "hub"
    battery: BatterySpec = field(default_factory=lambda: BatterySpec(5000.0, 3.8))
    base_power: float = 150e-3
    hub_compute_energy_per_bit: float = 1e-9


@dataclass(frozen=True)
class Scenario:
    nodes: tuple[NodeSpec, ...]
    links: tuple[LinkTech, ...]
    duration: float
    hub: HubSpec = field(default_factory=HubSpec)
    seed: int = 0
    epoch: float = DEFAULT_EPOCH_S
    jitter: float = 0.0

    def link(self, name: str) -> LinkTech:
        for link in self.links:
            if link.name == name:
                return link
        raise KeyError(name)

    def node(self, node_id: str) -> NodeSpec:
        for node in self.nodes:
            if node.id == node_id:
                return node
        raise KeyError(node_id)


def make_node(
    node_id: str,
    device_class: DeviceClass,
    link: str,
    architecture: Architecture = Architecture.HUB_OFFLOAD,
    **overrides: Any,
) -> NodeSpec:
    """A node at its class defaults (typical rate, default compression)."""
    compute = overrides.pop(
        "compute", ComputeModel(compression_factor=device_class.default_compression)
    )
    raw_rate = overrides.pop("raw_rate", device_class.typical_raw_rate)
    return NodeSpec(
        id=node_id,
        device_class=device_class,
        raw_rate=raw_rate,
        link=link,
        architecture=architecture,
        compute=compute,
        **overrides,
    )


class ScenarioError(ValueError):
    """A scenario document is invalid; ``path`` names the offending entry."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message


@dataclass(frozen=True)
class Diagnostic:
    code: str
    path: str
    message: str
    severity: str = "error"

    @property
    def fatal(self) -> bool:
        return self.severity == "error"

    def __str__(self) -> str:
        return f"{self.severity}[{self.code}] {self.path}: {self.message}"


# -- loading ---------------------------------------------------------------


class _Reader:
    """Typed accessors over one mapping of the YAML tree, tracking its path."""

    def __init__(self, data: Any, path: str):
        if not isinstance(data, dict):
            raise ScenarioError(path, "expected a mapping")
        self.data = data
        self.path = path
        self._seen: set[str] = set()

    def sub(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def has(self, key: str) -> bool:
        return key in self.data

    def raw(self, key: str, default: Any = None, required: bool = False) -> Any:
        self._seen.add(key)
        if key not in self.data:
            if required:
                raise ScenarioError(self.sub(key), "missing required field")
            return default
        return self.data[key]

    def quantity(
        self, key: str, kind: str, default: float | None = None, positive: bool = False
    ) -> float:
        value = self.raw(key, required=default is None)
        if value is None:
            return default  # type: ignore[return-value]
        try:
            out = parse_quantity(value, kind)
        except UnitError as exc:
            raise ScenarioError(self.sub(key), str(exc)) from None
        if out < 0:
            raise ScenarioError(self.sub(key), f"negative quantity {value!r}")
        if positive and out == 0:
            raise ScenarioError(self.sub(key), f"must be > 0, got {value!r}")
        return out

    def text(self, key: str, default: str | None = None) -> str:
        value = self.raw(key, default, required=default is None)
        if not isinstance(value, (str, int)) or isinstance(value, bool):
            raise ScenarioError(self.sub(key), f"expected a name, got {value!r}")
        return str(value)

    def finish(self) -> None:
        extra = sorted(set(self.data) - self._seen)
        if extra:
            raise ScenarioError(self.sub(extra[0]), "unknown field")


def _items(data: Any, path: str) -> list[Any]:
    if data is None:
        return []
    if not isinstance(data, list):
        raise ScenarioError(path, "expected a list")
    return data


def _read_battery(data: Any, path: str, default: BatterySpec) -> BatterySpec:
    if data is None:
        return default
    r = _Reader(data, path)
    batt = BatterySpec(
        r.quantity("capacity", "charge", default.capacity_mah, positive=True),
        r.quantity("voltage", "voltage", default.nominal_voltage_v, positive=True),
    )
    r.finish()
    return batt


def _read_link(data: Any, path: str) -> LinkTech:
    r = _Reader(data, path)
    name = r.text("name")
    preset_name = r.text("preset", name if name in LINK_PRESETS else "")
    if preset_name:
        if preset_name not in LINK_PRESETS:
            raise ScenarioError(r.sub("preset"), f"unknown link preset {preset_name!r}")
        base = LINK_PRESETS[preset_name](name)
    else:
        base = None

    def q(key: str, kind: str, attr: str, positive: bool = False) -> float:
        return r.quantity(key, kind, getattr(base, attr) if base else None, positive)

    energy = q("energy_per_bit", "energy_per_bit", "energy_per_bit", positive=True)
    static = q("static_power", "power", "static_power")
    max_rate = q("max_rate", "rate", "max_rate", positive=True)
    carrier = q("carrier_limit", "frequency", "carrier_limit_hz", positive=True)
    prop_data = r.raw("propagation", required=base is None)
    if prop_data is None:
        propagation = base.propagation  # type: ignore[union-attr]
    else:
        pr = _Reader(prop_data, r.sub("propagation"))
        kind = pr.text("type")
        if kind == "body_contained":
            propagation = BodyContained(pr.quantity("bubble", "distance", 0.1))
        elif kind == "radiative":
            propagation = Radiative(pr.quantity("radius", "distance", 7.5, positive=True))
        else:
            raise ScenarioError(pr.sub("type"), f"unknown propagation type {kind!r}")
        pr.finish()
    r.finish()
    try:
        return LinkTech(name, energy, static, max_rate, propagation, carrier)
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from None


def _read_class(data: Any, path: str) -> DeviceClass:
    r = _Reader(data, path)
    name = r.text("name")
    try:
        cls = DeviceClass(
            name=name,
            sense_model=SensePowerModel(
                r.quantity("sense_static_power", "power"),
                r.quantity("sense_energy_per_bit", "energy_per_bit"),
            ),
            typical_raw_rate=r.quantity("typical_rate", "rate", positive=True),
            default_compression=r.quantity("compression", "fraction", 1.0, positive=True),
            catalog_note=r.text("note", ""),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(path, str(exc)) from None
    r.finish()
    return cls


def _read_placement(data: Any, path: str) -> Placement:
    if data is None:
        return OnBody()
    r = _Reader(data, path)
    if r.has("on_body") and r.has("off_body"):
        raise ScenarioError(path, "give exactly one of on_body / off_body")
    if r.has("off_body"):
        dist = r.quantity("off_body", "distance", positive=True)
        r.finish()
        return OffBody(dist)
    site = r.text("on_body", "torso")
    r.finish()
    return OnBody(site)


def _read_node(
    data: Any,
    path: str,
    classes: dict[str, DeviceClass],
) -> NodeSpec:
    r = _Reader(data, path)
    node_id = r.text("id")
    class_name = r.text("class")
    if class_name not in classes:
        raise ScenarioError(r.sub("class"), f"unknown device class {class_name!r}")
    cls = classes[class_name]
    link = r.text("link")
    arch_name = r.text("architecture", Architecture.HUB_OFFLOAD.value)
    try:
        arch = Architecture(arch_name)
    except ValueError:
        raise ScenarioError(
            r.sub("architecture"), f"unknown architecture {arch_name!r}"
        ) from None
    defaults = ComputeModel()
    try:
        compute = ComputeModel(
            isa_energy_per_bit=r.quantity(
                "isa_energy_per_bit", "energy_per_bit", defaults.isa_energy_per_bit
            ),
            local_compute_energy_per_bit=r.quantity(
                "local_compute_energy_per_bit",
                "energy_per_bit",
                defaults.local_compute_energy_per_bit,
            ),
            compression_factor=r.quantity(
                "compression", "fraction", cls.default_compression, positive=True
            ),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(r.sub("compression"), str(exc)) from None
    result_rate = None
    if r.has("result_rate"):
        result_rate = r.quantity("result_rate", "rate")
    node = NodeSpec(
        id=node_id,
        device_class=cls,
        raw_rate=r.quantity("raw_rate", "rate", cls.typical_raw_rate, positive=True),
        link=link,
        architecture=arch,
        compute=compute,
        result_rate=result_rate,
        battery=_read_battery(r.raw("battery"), r.sub("battery"), BatterySpec()),
        harvester=HarvesterSpec(r.quantity("harvest", "power", 0.0)),
        placement=_read_placement(r.raw("placement"), r.sub("placement")),
    )
    r.finish()
    return node


def parse_scenario(
    text: str, default_epoch: float | None = None, check: bool = True
) -> Scenario:
    """Parse and fully validate a YAML scenario document.

    Raises :class:`ScenarioError` naming the path of the first problem,
    including fatal diagnostics from :func:`validate` unless ``check`` is off.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError("", f"not valid YAML: {exc}") from None
    r = _Reader(data, "")
    version = r.raw("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError("schema_version", f"unsupported schema version {version!r}")

    classes = catalog_by_name()
    for i, item in enumerate(_items(r.raw("classes"), "classes")):
        cls = _read_class(item, f"classes[{i}]")
        classes[cls.name] = cls

    links = tuple(
        _read_link(item, f"links[{i}]")
        for i, item in enumerate(_items(r.raw("links", required=True), "links"))
    )
    nodes = tuple(
        _read_node(item, f"nodes[{i}]", classes)
        for i, item in enumerate(_items(r.raw("nodes", required=True), "nodes"))
    )

    hub_data = r.raw("hub")
    hub = HubSpec()
    if hub_data is not None:
        hr = _Reader(hub_data, "hub")
        hub = HubSpec(
            id=hr.text("id", hub.id),
            battery=_read_battery(hr.raw("battery"), "hub.battery", hub.battery),
            base_power=hr.quantity("base_power", "power", hub.base_power),
            hub_compute_energy_per_bit=hr.quantity(
                "compute_energy_per_bit", "energy_per_bit", hub.hub_compute_energy_per_bit
            ),
        )
        hr.finish()

    seed = r.raw("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ScenarioError("seed", f"seed must be an unsigned integer, got {seed!r}")
    epoch_default = DEFAULT_EPOCH_S if default_epoch is None else default_epoch
    scenario = Scenario(
        nodes=nodes,
        links=links,
        duration=r.quantity("duration", "time", positive=True),
        hub=hub,
        seed=seed,
        epoch=r.quantity("epoch", "time", epoch_default, positive=True),
        jitter=r.quantity("jitter", "fraction", 0.0),
    )
    r.finish()
    fatal = [d for d in validate(scenario) if d.fatal] if check else []
    if fatal:
        raise ScenarioError(fatal[0].path, f"[{fatal[0].code}] {fatal[0].message}")
    return scenario


def load_scenario(
    path: str, default_epoch: float | None = None, check: bool = True
) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read(), default_epoch=default_epoch, check=check)


# -- serialization ---------------------------------------------------------


def _battery_doc(b: BatterySpec) -> dict[str, str]:
    return {
        "capacity": format_quantity(b.capacity_mah, "charge"),
        "voltage": format_quantity(b.nominal_voltage_v, "voltage"),
    }


def _link_doc(link: LinkTech) -> dict[str, Any]:
    if isinstance(link.propagation, BodyContained):
        prop = {
            "type": "body_contained",
            "bubble": format_quantity(link.propagation.bubble_m, "distance"),
        }
    else:
        prop = {
            "type": "radiative",
            "radius": format_quantity(link.propagation.radius_m, "distance"),
        }
    return {
        "name": link.name,
        "energy_per_bit": format_quantity(link.energy_per_bit, "energy_per_bit"),
        "static_power": format_quantity(link.static_power, "power"),
        "max_rate": format_quantity(link.max_rate, "rate"),
        "carrier_limit": format_quantity(link.carrier_limit_hz, "frequency"),
        "propagation": prop,
    }


def _class_doc(cls: DeviceClass) -> dict[str, Any]:
    return {
        "name": cls.name,
        "sense_static_power": format_quantity(cls.sense_model.static_power, "power"),
        "sense_energy_per_bit": format_quantity(
            cls.sense_model.energy_per_sensed_bit, "energy_per_bit"
        ),
        "typical_rate": format_quantity(cls.typical_raw_rate, "rate"),
        "compression": cls.default_compression,
        "note": cls.catalog_note,
    }


def _node_doc(node: NodeSpec) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "id": node.id,
        "class": node.device_class.name,
        "link": node.link,
        "architecture": node.architecture.value,
        "raw_rate": format_quantity(node.raw_rate, "rate"),
        "compression": node.compute.compression_factor,
        "isa_energy_per_bit": format_quantity(
            node.compute.isa_energy_per_bit, "energy_per_bit"
        ),
        "local_compute_energy_per_bit": format_quantity(
            node.compute.local_compute_energy_per_bit, "energy_per_bit"
        ),
    }
    if node.result_rate is not None:
        doc["result_rate"] = format_quantity(node.result_rate, "rate")
    doc["battery"] = _battery_doc(node.battery)
    doc["harvest"] = format_quantity(node.harvester.harvest_power, "power")
    if isinstance(node.placement, OnBody):
        doc["placement"] = {"on_body": node.placement.site}
    else:
        doc["placement"] = {"off_body": format_quantity(node.placement.distance_m, "distance")}
    return doc


def serialize_scenario(s: Scenario) -> str:
    """Fully explicit YAML for ``s``; ``parse_scenario`` inverts it exactly."""
    classes: dict[str, DeviceClass] = {}
    for node in s.nodes:
        classes.setdefault(node.device_class.name, node.device_class)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "seed": s.seed,
        "duration": format_quantity(s.duration, "time"),
        "epoch": format_quantity(s.epoch, "time"),
        "jitter": s.jitter,
        "hub": {
            "id": s.hub.id,
            "battery": _battery_doc(s.hub.battery),
            "base_power": format_quantity(s.hub.base_power, "power"),
            "compute_energy_per_bit": format_quantity(
                s.hub.hub_compute_energy_per_bit, "energy_per_bit"
            ),
        },
        "classes": [_class_doc(c) for c in classes.values()],
        "links": [_link_doc(link) for link in s.links],
        "nodes": [_node_doc(n) for n in s.nodes],
    }
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True)


# -- validation ------------------------------------------------------------


def peak_demand(node: NodeSpec, jitter: float = 0.0) -> float:
    """Worst-case channel demand of a node, including traffic jitter."""
    return tx_rate(node) * (1.0 + jitter)


def validate(s: Scenario) -> list[Diagnostic]:
    """Check invariants and channel admission; never raises."""
    diags: list[Diagnostic] = []
    if not (math.isfinite(s.duration) and s.duration > 0):
        diags.append(Diagnostic("bad-duration", "duration", "duration must be > 0"))
    if not (math.isfinite(s.epoch) and s.epoch > 0):
        diags.append(Diagnostic("bad-epoch", "epoch", "epoch must be > 0"))
    if not 0.0 <= s.jitter < 1.0:
        diags.append(Diagnostic("bad-jitter", "jitter", "jitter must lie in [0, 1)"))
    if s.hub.base_power < 0 or s.hub.hub_compute_energy_per_bit < 0:
        diags.append(Diagnostic("negative-quantity", "hub", "hub powers must be >= 0"))

    link_names: dict[str, int] = {}
    for i, link in enumerate(s.links):
        if link.name in link_names:
            diags.append(
                Diagnostic("duplicate-id", f"links[{i}].name", f"duplicate link {link.name!r}")
            )
        link_names.setdefault(link.name, i)

    seen: dict[str, int] = {}
    per_link: dict[str, list[tuple[str, float]]] = {name: [] for name in link_names}
    for i, node in enumerate(s.nodes):
        path = f"nodes[{i}]"
        if node.id in seen:
            diags.append(
                Diagnostic("duplicate-id", f"{path}.id", f"duplicate node id {node.id!r}")
            )
        seen.setdefault(node.id, i)
        if not (math.isfinite(node.raw_rate) and node.raw_rate > 0):
            diags.append(Diagnostic("negative-quantity", f"{path}.raw_rate", "raw_rate must be > 0"))
            continue
        if node.result_rate is not None and not 0 <= node.result_rate <= node.raw_rate:
            diags.append(
                Diagnostic(
                    "result-rate",
                    f"{path}.result_rate",
                    "standalone result_rate must lie in [0, raw_rate]",
                )
            )
        if node.link not in link_names:
            diags.append(
                Diagnostic(
                    "unresolved-link", f"{path}.link", f"undefined link {node.link!r}"
                )
            )
            continue
        link = s.link(node.link)
        if not reachable(link, node.placement, OnBody("hub")):
            diags.append(
                Diagnostic(
                    "unreachable-hub",
                    f"{path}.placement",
                    f"node {node.id!r} cannot reach the on-body hub over {link.name!r}",
                )
            )
        per_link[node.link].append((node.id, peak_demand(node, max(s.jitter, 0.0))))
        if node.harvester.harvest_power > 0:
            try:
                p = node_power(node, link)
            except ValueError:
                continue
            if p > HARVEST_BAND_MAX_W:
                diags.append(
                    Diagnostic(
                        "harvest-band",
                        f"{path}.harvest",
                        f"node draws {p * 1e6:.1f} uW, above the 10-200 uW band "
                        "indoor harvesters can supply",
                        severity="warning",
                    )
                )

    for name, demands in per_link.items():
        try:
            allocate_tdma(s.link(name), demands)
        except OverloadError as exc:
            diags.append(
                Diagnostic(
                    "link-overload",
                    f"links[{link_names[name]}]",
                    f"{exc} (deficit {exc.deficit:g} bps)",
                )
            )
    return diags
