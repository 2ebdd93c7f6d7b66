"""``iobsim`` command line: project, simulate, compare, catalog, validate.

Exit codes: 0 success, 1 scenario/validation/capacity errors, 2 usage errors.
Diagnostics go to stderr; data to ``--out`` or stdout.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile
from dataclasses import replace
from typing import Sequence

from . import analysis, engine
from .energy import BatterySpec, ComputeModel, HarvesterSpec
from .link import LINK_PRESETS, CapacityError, LinkTech
from .scenario import (
    CALIBRATION_NOTE,
    Scenario,
    ScenarioError,
    catalog_by_name,
    default_catalog,
    load_scenario,
    validate,
)
from .units import UnitError, format_quantity, parse_quantity, parse_rate_range

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _q(text: str, kind: str) -> float:
    try:
        return parse_quantity(text, kind)
    except UnitError as exc:
        raise UsageError(str(exc)) from None


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".iobsim-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _table(csv_text: str) -> str:
    rows = list(csv.reader(io.StringIO(csv_text)))
    if not rows:
        return ""
    widths = [max(len(r[i]) for r in rows if i < len(r)) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _emit(args: argparse.Namespace, csv_text: str, stdout) -> None:
    if args.out:
        _write_atomic(args.out, csv_text)
    elif stdout.isatty():
        stdout.write(_table(csv_text))
    else:
        stdout.write(csv_text)


def _default_epoch() -> float | None:
    env = os.environ.get("IOBSIM_EPOCH")
    if not env:
        return None
    try:
        value = parse_quantity(env, "time")
    except UnitError as exc:
        raise UsageError(f"IOBSIM_EPOCH: {exc}") from None
    if value <= 0:
        raise UsageError("IOBSIM_EPOCH must be > 0")
    return value


def _load(args: argparse.Namespace, check: bool = True) -> Scenario:
    return load_scenario(args.scenario, default_epoch=_default_epoch(), check=check)


def _resolve_link(name: str, scenario: Scenario | None) -> LinkTech:
    if scenario is not None:
        try:
            return scenario.link(name)
        except KeyError:
            pass
    if name in LINK_PRESETS:
        return LINK_PRESETS[name](name)
    raise UsageError(f"unknown link {name!r} (presets: {', '.join(LINK_PRESETS)})")


def cmd_project(args: argparse.Namespace, stdout) -> int:
    scenario = _load(args) if args.scenario else None
    sweep = args.sweep or "1kbps:10Mbps:log:50"
    try:
        lo, hi, spacing, points = parse_rate_range(sweep)
    except UnitError as exc:
        raise UsageError(str(exc)) from None

    if args.node:
        if scenario is None:
            raise UsageError("--node needs --scenario")
        try:
            node = scenario.node(args.node)
        except KeyError:
            raise UsageError(f"no node {args.node!r} in scenario") from None
        device_class = node.device_class
        link = _resolve_link(args.link or node.link, scenario)
        battery, harvester, compute = node.battery, node.harvester, node.compute
    else:
        if not args.device_class:
            raise UsageError("project needs --class or --scenario/--node")
        classes = catalog_by_name()
        if args.device_class not in classes:
            raise UsageError(
                f"unknown class {args.device_class!r} (known: {', '.join(classes)})"
            )
        device_class = classes[args.device_class]
        link = _resolve_link(args.link or "wir", scenario)
        battery = BatterySpec()
        harvester = HarvesterSpec()
        compute = ComputeModel(compression_factor=device_class.default_compression)

    if args.battery:
        battery = replace(battery, capacity_mah=_q(args.battery, "charge"))
    if args.voltage:
        battery = replace(battery, nominal_voltage_v=_q(args.voltage, "voltage"))
    if args.harvest:
        harvester = HarvesterSpec(_q(args.harvest, "power"))
    if args.compression is not None:
        compute = replace(compute, compression_factor=args.compression)

    try:
        spec = analysis.SweepSpec(
            rate_min=lo,
            rate_max=hi,
            points=points,
            spacing=spacing,
            device_class=device_class,
            link=link,
            battery=battery,
            harvester=harvester,
            compute=compute,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = analysis.project_curve(spec, workers=args.workers)
    _emit(args, analysis.curve_to_csv(rows), stdout)
    if args.gnuplot:
        _write_atomic(args.gnuplot, analysis.gnuplot_script(args.out or "curve.csv"))
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, stdout) -> int:
    scenario = _load(args)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    if args.epoch:
        scenario = replace(scenario, epoch=_q(args.epoch, "time"))
    if args.duration:
        scenario = replace(scenario, duration=_q(args.duration, "time"))

    if args.trace:
        directory = os.path.dirname(os.path.abspath(args.trace))
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".iobsim-", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                sink = engine.TraceWriter(fh, [n.id for n in scenario.nodes])
                result = engine.run(scenario, backend=args.backend, trace=sink)
            os.replace(tmp, args.trace)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    else:
        result = engine.run(scenario, backend=args.backend)
    _emit(args, engine.result_to_csv(scenario, result), stdout)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace, stdout) -> int:
    scenario = _load(args)
    try:
        node = scenario.node(args.node)
    except KeyError:
        raise UsageError(f"no node {args.node!r} in scenario") from None
    wir = _resolve_link(args.wir_link, scenario)
    rf = _resolve_link(args.rf_link, scenario)
    cmp = analysis.compare_architectures(node, wir, rf)
    _emit(args, analysis.comparison_to_csv(cmp), stdout)
    return EXIT_OK


def cmd_catalog(args: argparse.Namespace, stdout) -> int:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        (
            "class",
            "typical_rate",
            "sense_static_power",
            "sense_energy_per_bit",
            "default_compression",
            "provenance",
            "note",
        )
    )
    for cls in default_catalog():
        w.writerow(
            (
                cls.name,
                format_quantity(cls.typical_raw_rate, "rate"),
                format_quantity(cls.sense_model.static_power, "power"),
                format_quantity(cls.sense_model.energy_per_sensed_bit, "energy_per_bit"),
                repr(cls.default_compression),
                "CALIBRATION",
                cls.catalog_note,
            )
        )
    print(f"note: {CALIBRATION_NOTE}", file=sys.stderr)
    _emit(args, buf.getvalue(), stdout)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace, stdout) -> int:
    scenario = _load(args, check=False)
    diags = validate(scenario)
    for d in diags:
        print(str(d), file=sys.stderr)
    if any(d.fatal for d in diags):
        return EXIT_ERROR
    print(f"{args.scenario}: ok ({len(scenario.nodes)} nodes, {len(scenario.links)} links)",
          file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iobsim", description="Body-area-network energy projection and simulation."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="analytic battery life vs data rate sweep")
    p.add_argument("--class", dest="device_class", help="device class from the catalog")
    p.add_argument("--link", help="link preset or scenario link name (default wir)")
    p.add_argument("--sweep", help="MIN:MAX:log|linear:POINTS, e.g. 1kbps:10Mbps:log:50")
    p.add_argument("--scenario", help="scenario file (links, or a node with --node)")
    p.add_argument("--node", help="take class, link, battery and harvester from this node")
    p.add_argument("--battery", help="battery capacity, e.g. 1000mAh")
    p.add_argument("--voltage", help="battery voltage, e.g. 3.0V")
    p.add_argument("--harvest", help="harvested power, e.g. 50uW")
    p.add_argument("--compression", type=float, help="compression factor in (0, 1]")
    p.add_argument("--workers", type=int, default=1, help="parallel sweep workers")
    p.add_argument("--gnuplot", help="also write a gnuplot script here")
    p.add_argument("--out", help="CSV output file (default stdout)")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("simulate", help="run the epoch simulation of a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--epoch", help="override the epoch length, e.g. 60s")
    p.add_argument("--duration", help="override the simulated duration, e.g. 365d")
    p.add_argument("--trace", help="write a per-epoch remaining-energy CSV here")
    p.add_argument("--backend", choices=("numba", "numpy"), help="kernel implementation")
    p.add_argument("--out", help="CSV output file (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="standalone-over-RF vs hub-offload power")
    p.add_argument("--scenario", required=True)
    p.add_argument("--node", required=True)
    p.add_argument("--rf-link", default="ble")
    p.add_argument("--wir-link", default="wir")
    p.add_argument("--out", help="CSV output file (default stdout)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("catalog", help="list the default device classes")
    p.add_argument("--out", help="CSV output file (default stdout)")
    p.set_defaults(func=cmd_catalog)

    p = sub.add_parser("validate", help="check a scenario and report diagnostics")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "workers", 1) < 1:
        print("iobsim: error: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args, stdout)
    except UsageError as exc:
        print(f"iobsim {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as exc:
        print(f"iobsim {args.command}: scenario error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (CapacityError, engine.SimulationError) as exc:
        print(f"iobsim {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"iobsim {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
