"""Deterministic epoch-based simulation of a scenario."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .energy import (
    Architecture,
    LifetimeClass,
    classify_lifetime,
    compute_energy_per_bit,
    tx_rate,
)
from .link import OverloadError, allocate_tdma
from .scenario import Scenario, peak_demand, validate

# epochs per kernel call; bounded so chunk-local sums stay small
CHUNK_EPOCHS = 1 << 20
# smaller chunks when per-epoch arrays (jitter, trace) must be materialised
ARRAY_CHUNK_EPOCHS = 1 << 14

TraceSink = Callable[[np.ndarray, np.ndarray], None]


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class NodeParams:
    """Per-node coefficients laid out as flat arrays for the kernels."""

    ids: tuple[str, ...]
    sense_static: np.ndarray
    sense_epb: np.ndarray
    compute_epb: np.ndarray
    comm_static: np.ndarray
    comm_epb: np.ndarray
    tx_ratio: np.ndarray
    raw_rate: np.ndarray
    harvest: np.ndarray
    capacity: np.ndarray

    @classmethod
    def from_scenario(cls, s: Scenario) -> NodeParams:
        rows = []
        for node in s.nodes:
            link = s.link(node.link)
            rows.append(
                (
                    node.device_class.sense_model.static_power,
                    node.device_class.sense_model.energy_per_sensed_bit,
                    compute_energy_per_bit(node),
                    link.static_power,
                    link.energy_per_bit,
                    tx_rate(node) / node.raw_rate,
                    node.raw_rate,
                    node.harvester.harvest_power,
                    node.battery.energy_joules,
                )
            )
        cols = np.array(rows, dtype=np.float64).reshape(len(rows), 9).T.copy()
        return cls(tuple(n.id for n in s.nodes), *cols)

    def kernel_args(self) -> tuple[np.ndarray, ...]:
        return (
            self.sense_static,
            self.sense_epb,
            self.compute_epb,
            self.comm_static,
            self.comm_epb,
            self.tx_ratio,
            self.raw_rate,
            self.harvest,
            self.capacity,
        )


@dataclass(frozen=True)
class SimState:
    """Whole-network state at simulated time ``t`` (seconds)."""

    params: NodeParams
    t: float
    alive: np.ndarray
    death_time: np.ndarray
    remaining: np.ndarray
    acc: np.ndarray
    bits: np.ndarray

    def copy(self) -> SimState:
        return replace(
            self,
            alive=self.alive.copy(),
            death_time=self.death_time.copy(),
            remaining=self.remaining.copy(),
            acc=self.acc.copy(),
            bits=self.bits.copy(),
        )

    def equals(self, other: SimState) -> bool:
        return (
            self.t == other.t
            and np.array_equal(self.alive, other.alive)
            and np.array_equal(self.death_time, other.death_time, equal_nan=True)
            and np.array_equal(self.remaining, other.remaining)
            and np.array_equal(self.acc, other.acc)
            and np.array_equal(self.bits, other.bits)
        )


def initial_state(s: Scenario) -> SimState:
    params = NodeParams.from_scenario(s)
    n = len(params.ids)
    return SimState(
        params=params,
        t=0.0,
        alive=np.ones(n, dtype=np.bool_),
        death_time=np.full(n, np.nan),
        remaining=params.capacity.copy(),
        acc=np.zeros((n, 4)),
        bits=np.zeros((n, 2)),
    )


def _advance(
    state: SimState,
    n_epochs: int,
    dt: float,
    advance,
    factors: np.ndarray | None = None,
    trace: np.ndarray | None = None,
) -> None:
    n = state.alive.shape[0]
    empty = np.zeros((0, n))
    advance(
        n_epochs,
        dt,
        state.t,
        empty if factors is None else factors,
        empty if trace is None else trace,
        *state.params.kernel_args(),
        state.alive,
        state.death_time,
        state.remaining,
        state.acc,
        state.bits,
    )


def step(state: SimState, epoch: float, backend: str | None = None) -> SimState:
    """One constant-rate epoch of length ``epoch`` seconds; returns a new state."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    new = state.copy()
    if epoch == 0:
        return new
    _advance(new, 1, epoch, _kernels.get_advance(backend))
    return replace(new, t=state.t + epoch)


@dataclass(frozen=True)
class EnergyLedger:
    sensed_J: float
    compute_J: float
    comm_J: float
    harvested_J: float
    initial_J: float
    final_J: float

    @property
    def consumed_J(self) -> float:
        return self.sensed_J + self.compute_J + self.comm_J

    def conservation_error(self) -> float:
        """Mismatch of initial - final + harvested = consumed.

        Relative to the largest term of the identity; the stored battery
        level cannot resolve a drain finer than one ulp of ``initial_J``.
        """
        lhs = self.initial_J - self.final_J
        rhs = self.consumed_J - self.harvested_J
        scale = max(self.initial_J, self.consumed_J, self.harvested_J, 1e-300)
        return abs(lhs - rhs) / scale


@dataclass(frozen=True)
class NodeOutcome:
    node_id: str
    died: bool
    death_time_s: float
    lifetime_h: float
    active_s: float
    bits_sensed: float
    bits_txed: float
    bits_computed: float

    @property
    def lifetime_class(self) -> LifetimeClass:
        return classify_lifetime(self.lifetime_h)


@dataclass(frozen=True)
class SimResult:
    duration_s: float
    epoch_s: float
    ledgers: dict[str, EnergyLedger]
    outcomes: dict[str, NodeOutcome]
    hub_energy_J: float
    hub_lifetime_h: float
    channel_utilization: dict[str, float]
    event_count: int

    @property
    def lifetimes(self) -> dict[str, float]:
        return {nid: o.lifetime_h for nid, o in self.outcomes.items()}

    def avg_power_W(self, node_id: str) -> float:
        o = self.outcomes[node_id]
        return self.ledgers[node_id].consumed_J / o.active_s if o.active_s > 0 else 0.0


def _projected_life_h(initial: float, final: float, elapsed: float) -> float:
    drained = initial - final
    if drained <= 0:
        return math.inf
    return elapsed * initial / drained / 3600.0


def _jitter_stream(s: Scenario, n_nodes: int):
    rng = np.random.default_rng(s.seed)

    def draw(k: int) -> np.ndarray:
        u = rng.random((k, n_nodes))
        return 1.0 + s.jitter * (2.0 * u - 1.0)

    return draw


def run(
    s: Scenario,
    backend: str | None = None,
    trace: Optional[TraceSink] = None,
) -> SimResult:
    """Simulate ``s`` for its full duration.

    ``trace``, if given, is called once per chunk with the epoch end times
    (shape ``(k,)``) and remaining energy per node (shape ``(k, n)``).
    """
    fatal = [d for d in validate(s) if d.fatal]
    if fatal:
        raise SimulationError(f"scenario rejected: {fatal[0]}")
    for link in s.links:
        demands = [(n.id, peak_demand(n, s.jitter)) for n in s.nodes if n.link == link.name]
        try:
            allocate_tdma(link, demands)
        except OverloadError as exc:
            raise SimulationError(f"admission failed at t=0: {exc}") from exc

    advance = _kernels.get_advance(backend)
    state = initial_state(s)
    n = len(s.nodes)
    dt = s.epoch
    full = int(math.floor(s.duration / dt))
    tail = s.duration - full * dt
    if tail <= dt * 1e-12:
        tail = 0.0
    needs_arrays = s.jitter > 0 or trace is not None
    chunk = ARRAY_CHUNK_EPOCHS if needs_arrays else CHUNK_EPOCHS
    draw = _jitter_stream(s, n) if s.jitter > 0 else None

    plan = []
    done = 0
    while done < full:
        k = min(chunk, full - done)
        plan.append((k, dt))
        done += k
    if tail > 0:
        plan.append((1, tail))

    epochs = 0
    for k, length in plan:
        t0 = epochs * dt
        factors = draw(k) if draw is not None else None
        buf = np.empty((k, n)) if trace is not None else None
        state = replace(state, t=t0)
        _advance(state, k, length, advance, factors, buf)
        if trace is not None:
            trace(t0 + length * np.arange(1, k + 1), buf)
        epochs += k
        if not state.alive.any():
            break

    return _collect(s, state, epochs)


def _collect(s: Scenario, state: SimState, epochs: int) -> SimResult:
    ledgers: dict[str, EnergyLedger] = {}
    outcomes: dict[str, NodeOutcome] = {}
    offload_bits = 0.0
    link_bits = {link.name: 0.0 for link in s.links}
    for i, node in enumerate(s.nodes):
        sensed, compute, comm, harvested = (float(v) for v in state.acc[i])
        initial = float(state.params.capacity[i])
        final = float(state.remaining[i])
        ledgers[node.id] = EnergyLedger(sensed, compute, comm, harvested, initial, final)
        died = not bool(state.alive[i])
        death = float(state.death_time[i])
        active = death if died else s.duration
        if died:
            life_h = death / 3600.0
        else:
            life_h = _projected_life_h(initial, final, s.duration)
        bits_sensed, bits_tx = (float(v) for v in state.bits[i])
        outcomes[node.id] = NodeOutcome(
            node_id=node.id,
            died=died,
            death_time_s=death,
            lifetime_h=life_h,
            active_s=active,
            bits_sensed=bits_sensed,
            bits_txed=bits_tx,
            bits_computed=bits_sensed if compute_energy_per_bit(node) > 0 else 0.0,
        )
        link_bits[node.link] += bits_tx
        if node.architecture is Architecture.HUB_OFFLOAD:
            offload_bits += bits_tx

    hub_energy = s.hub.base_power * s.duration + s.hub.hub_compute_energy_per_bit * offload_bits
    hub_life = (
        s.hub.battery.energy_joules / (hub_energy / s.duration) / 3600.0
        if hub_energy > 0
        else math.inf
    )
    utilization = {
        link.name: min(1.0, link_bits[link.name] / (link.max_rate * s.duration))
        for link in s.links
    }
    return SimResult(
        duration_s=s.duration,
        epoch_s=s.epoch,
        ledgers=ledgers,
        outcomes=outcomes,
        hub_energy_J=hub_energy,
        hub_lifetime_h=hub_life,
        channel_utilization=utilization,
        event_count=epochs,
    )


RESULT_COLUMNS = (
    "id",
    "class",
    "architecture",
    "link",
    "avg_power_W",
    "lifetime_h_or_PERPETUAL",
    "consumed_J",
    "harvested_J",
    "status",
    "lifetime_class",
)


def _fmt(x: float) -> str:
    return repr(float(x))


def result_rows(s: Scenario, result: SimResult) -> list[list[str]]:
    rows = []
    for node in s.nodes:
        o = result.outcomes[node.id]
        led = result.ledgers[node.id]
        life = "PERPETUAL" if math.isinf(o.lifetime_h) else _fmt(o.lifetime_h)
        rows.append(
            [
                node.id,
                node.device_class.name,
                node.architecture.value,
                node.link,
                _fmt(result.avg_power_W(node.id)),
                life,
                _fmt(led.consumed_J),
                _fmt(led.harvested_J),
                "dead" if o.died else "alive",
                o.lifetime_class.value,
            ]
        )
    return rows


def result_to_csv(s: Scenario, result: SimResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    writer.writerows(result_rows(s, result))
    return buf.getvalue()


class TraceWriter:
    """Trace sink writing long-format rows ``time_s,node,remaining_J``."""

    def __init__(self, fh, node_ids: tuple[str, ...] | list[str]):
        self._writer = csv.writer(fh, lineterminator="\n")
        self._ids = list(node_ids)
        self._writer.writerow(("time_s", "node", "remaining_J"))

    def __call__(self, times: np.ndarray, remaining: np.ndarray) -> None:
        for k, t in enumerate(times):
            row = remaining[k]
            self._writer.writerows(
                (_fmt(t), nid, _fmt(row[i])) for i, nid in enumerate(self._ids)
            )
