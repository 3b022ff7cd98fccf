"""Command-line driver: a JSON config in, CSV tables out.

Config keys map one-to-one onto scenario parameters.  A scalar value
overrides the default; a list turns the key into a sweep axis and the
run expands the cartesian product of all axes.  Two keys are reserved:

* ``paper_grid``: true merges in the standard 189-point sweep axes
  (demand growth x coal flex x RE build-out x solar share),
* ``data``: options for the base-year loader (year, RE energy target,
  installed solar MW for the wind-shape derivation, gap tolerance).

Results are written once, by the parent process, in scenario order, so
a sweep at any parallelism produces byte-identical files.  The manifest
is the only file carrying timing and is excluded from that guarantee.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from gridlab import __version__
from gridlab import dispatch as dsp
from gridlab import newsupply as new
from gridlab.errors import GridlabError, ParameterError
from gridlab.pipeline import ScenarioOutcome, evaluate_scenario
from gridlab.scenario import (
    BASE_YEAR,
    FINAL_YEAR,
    YEARS,
    ParamGrid,
    ScenarioParams,
    expand_param_grid,
    params_from_config,
)
from gridlab.shapes import (
    SLOT_HOURS,
    BaseYearData,
    PerMwShape,
    clean_series,
    derive_wind_shape,
    load_shape_csv,
    load_timeseries_csv,
    rescale_to_cuf,
    slots_in_year,
    synth_shapes,
    synth_solar_shape,
)

log = logging.getLogger("gridlab")

#: scenario coordinates repeated in every output table
AXIS_COLUMNS = (
    "demand_growth",
    "flex_limit",
    "re_2030",
    "solar_share",
    "new_option",
    "battery_size_fraction",
    "new_coal_size_fraction",
    "dedicated_solar_extra",
)

YEAR_COLUMNS = (
    "year",
    "demand_twh",
    "re_twh",
    "hydro_twh",
    "nuclear_twh",
    "coal_twh",
    "gas_twh",
    "curtailment_twh",
    "unmet_twh",
    "peak_unmet_gw",
    "capacity_requirement_gw",
    "new_capacity_gross_mw",
    "dedicated_solar_gw",
    "secondary_unmet_twh",
    "displaced_gas_twh",
    "displaced_coal_twh",
    "bonus_curtailment_twh",
    "flex_relaxed_slots",
)

_COMPONENTS = (
    "re_capex",
    "re_om",
    "coal_fuel",
    "gas_fuel_2019",
    "gas_fuel_nonapm",
    "new_capex",
    "new_fuel",
    "new_om",
    "biodiesel",
)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    return f"{float(value):.10g}"


# --- configuration -------------------------------------------------------


@dataclass(frozen=True)
class DataOptions:
    """Loader options carried under the reserved ``data`` config key."""

    year: int = BASE_YEAR
    base_file: str = "base_year.csv"
    solar_shape_file: str = "solar_shape.csv"
    re_annual_target_gwh: float | None = None
    solar_capacity_mw: float = 35_000.0
    max_gap_slots: int = 4


def parse_config(
    config: Mapping | None,
) -> tuple[list[ScenarioParams], ScenarioParams, DataOptions]:
    """Expand a config mapping into the scenario list it describes."""
    cfg = dict(config or {})
    paper = bool(cfg.pop("paper_grid", False))

    data_raw = cfg.pop("data", {})
    if not isinstance(data_raw, Mapping):
        raise ParameterError("config key 'data' must be a mapping")
    known = set(DataOptions.__dataclass_fields__)
    unknown = set(data_raw) - known
    if unknown:
        raise ParameterError(f"unknown data options: {sorted(unknown)}")
    data_opts = DataOptions(**data_raw)

    axes = {k: tuple(v) for k, v in cfg.items() if isinstance(v, (list, tuple))}
    overrides = {k: v for k, v in cfg.items() if k not in axes}
    base = params_from_config(overrides)

    if paper:
        merged = dict(ParamGrid.paper_grid().axes)
        merged.update(axes)
        axes = merged
    if axes:
        scenarios = expand_param_grid(ParamGrid(axes=axes), base)
    else:
        scenarios = [base]
    return scenarios, base, data_opts


def load_inputs(
    data_dir: str | Path | None,
    synthetic_seed: int | None,
    params: ScenarioParams,
    opts: DataOptions,
) -> tuple[BaseYearData, PerMwShape, PerMwShape]:
    """Base-year data plus the per-MW shapes new builds will follow."""
    if synthetic_seed is not None:
        base = synth_shapes(synthetic_seed)
        raw_solar = synth_solar_shape(base.year)
        solar_capacity_mw = 35_000.0
    elif data_dir is not None:
        directory = Path(data_dir)
        raw = load_timeseries_csv(directory / opts.base_file, opts.year)
        base = clean_series(raw, opts.max_gap_slots, opts.re_annual_target_gwh)
        shape_path = directory / opts.solar_shape_file
        if shape_path.exists():
            raw_solar = load_shape_csv(shape_path)
            if raw_solar.values.shape[0] != slots_in_year(opts.year):
                raise ParameterError(
                    f"{shape_path} has {raw_solar.values.shape[0]} slots, "
                    f"want {slots_in_year(opts.year)} for {opts.year}"
                )
        else:
            raw_solar = synth_solar_shape(opts.year)
        solar_capacity_mw = opts.solar_capacity_mw
    else:
        raise ParameterError("either a data directory or a synthetic seed is required")

    wind = derive_wind_shape(
        base.supply_by_fuel["re"], raw_solar, solar_capacity_mw, wind_cuf=params.wind_cuf
    )
    solar = rescale_to_cuf(raw_solar, params.solar_cuf)
    return base, solar, wind


# --- sweep execution ------------------------------------------------------

_WORKER_INPUTS: tuple | None = None


def _init_worker(base: BaseYearData, solar: PerMwShape, wind: PerMwShape) -> None:
    global _WORKER_INPUTS
    _WORKER_INPUTS = (base, solar, wind)


def _run_one(job: tuple[int, ScenarioParams]):
    """Evaluate one scenario; never let its failure sink the sweep."""
    index, params = job
    base, solar, wind = _WORKER_INPUTS
    try:
        outcome = evaluate_scenario(params, base, solar, wind)
        return index, None, outcome
    except Exception as exc:
        return index, f"{type(exc).__name__}: {exc}", None


@dataclass(frozen=True)
class RunManifest:
    """What a run produced, and from what."""

    version: str
    scenario_count: int
    failed: int
    parallelism: int
    synthetic_seed: int | None
    data_dir: str | None
    config_digest: str
    detail_scenario: int | None
    files: tuple[str, ...]
    wall_time_s: float

    def to_json(self, path=None) -> str:
        payload = {
            "version": self.version,
            "scenario_count": self.scenario_count,
            "failed": self.failed,
            "parallelism": self.parallelism,
            "synthetic_seed": self.synthetic_seed,
            "data_dir": self.data_dir,
            "config_digest": self.config_digest,
            "detail_scenario": self.detail_scenario,
            "files": list(self.files),
            "wall_time_s": round(self.wall_time_s, 3),
        }
        text = json.dumps(payload, indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def _axis_values(params: ScenarioParams) -> list:
    return [getattr(params, name) for name in AXIS_COLUMNS]


def _write_frontier(path: Path, ranked: Sequence[tuple[int, ScenarioOutcome]]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["rank", "scenario", *AXIS_COLUMNS, "npv_total_rs"]
            + [f"npv_{c}_rs" for c in _COMPONENTS]
            + [
                "levelized_existing_rs_per_kwh",
                "levelized_new_rs_per_kwh",
                "new_capacity_mw",
                "curtailment_twh",
            ]
        )
        for rank, (index, outcome) in enumerate(ranked):
            report = outcome.result.report
            row = [rank, index]
            row += [_fmt(v) for v in _axis_values(outcome.params)]
            row.append(_fmt(report.npv_total))
            row += [_fmt(report.npv_by_component.get(c, 0.0)) for c in _COMPONENTS]
            row.append(_fmt(report.levelized_existing))
            row.append(_fmt(report.levelized_new))
            row.append(_fmt(outcome.result.new_capacity_mw))
            row.append(_fmt(outcome.result.curtailment_twh))
            writer.writerow(row)


def _write_years(path: Path, outcomes: Sequence[tuple[int, ScenarioOutcome]]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scenario", *AXIS_COLUMNS, *YEAR_COLUMNS])
        for index, outcome in outcomes:
            prefix = [index] + [_fmt(v) for v in _axis_values(outcome.params)]
            for row in outcome.year_rows:
                writer.writerow(prefix + [_fmt(row[c]) for c in YEAR_COLUMNS])


def _write_failures(
    path: Path, failures: Sequence[tuple[int, str]], scenarios: Sequence[ScenarioParams]
) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scenario", *AXIS_COLUMNS, "error"])
        for index, message in failures:
            writer.writerow(
                [index] + [_fmt(v) for v in _axis_values(scenarios[index])] + [message]
            )


# --- figure data ----------------------------------------------------------

_MIX_KEYS = ("re", "hydro", "nuclear", "coal", "gas", "new")


def export_figures(
    out_dir: str | Path,
    detail: ScenarioOutcome | None = None,
    year: int = FINAL_YEAR,
) -> list[Path]:
    """Write the plot-ready CSVs for one scenario.

    With no scenario to draw from (an empty sweep, or every scenario
    failed) the files still appear with their documented headers and no
    rows, so downstream tooling never special-cases an empty run.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def _open(name: str, header: list[str]):
        path = out / name
        fh = path.open("w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        written.append(path)
        return fh, writer

    yd = detail.details.get(year) if detail is not None else None

    # annual generation mix, after NEW supply and displacement
    fh, writer = _open(
        "generation_mix.csv",
        ["year"] + [f"{k}_twh" for k in _MIX_KEYS] + ["unmet_twh", "curtailment_twh"],
    )
    with fh:
        if detail is not None:
            for yr in YEARS:
                d = detail.details.get(yr)
                if d is None:
                    continue
                rep = d.reporting
                energies = {
                    "re": rep.energy_twh("re"),
                    "hydro": rep.energy_twh("hydro"),
                    "nuclear": rep.energy_twh("nuclear"),
                    "coal": rep.energy_twh("coal_2019") + rep.energy_twh("coal_slack"),
                    "gas": rep.energy_twh("gas_2019") + rep.energy_twh("gas_slack"),
                    "new": rep.energy_twh("new"),
                }
                writer.writerow(
                    [yr]
                    + [_fmt(energies[k]) for k in _MIX_KEYS]
                    + [_fmt(rep.unmet_twh()), _fmt(rep.curtailment_twh())]
                )

    # unmet-demand load duration curve for the focus year
    fh, writer = _open(f"ldc_unmet_{year}.csv", ["rank", "unmet_mw"])
    with fh:
        if yd is not None:
            for rank, value in enumerate(dsp.load_duration_curve(yd.unmet)):
                writer.writerow([rank, f"{value:.3f}"])

    # chronological mix for the focus year; rows sum to demand exactly
    fh, writer = _open(
        f"chronological_mix_{year}.csv",
        ["slot", "demand_mw"] + [f"{k}_mw" for k in _MIX_KEYS] + ["unmet_mw"],
    )
    with fh:
        if yd is not None:
            rep = yd.reporting
            coal = rep.coal_total()
            gas = rep.gas_total()
            for s in range(rep.n_slots):
                writer.writerow(
                    [s, f"{rep.demand[s]:.3f}"]
                    + [
                        f"{rep.supply['re'][s]:.3f}",
                        f"{rep.supply['hydro'][s]:.3f}",
                        f"{rep.supply['nuclear'][s]:.3f}",
                        f"{coal[s]:.3f}",
                        f"{gas[s]:.3f}",
                        f"{rep.supply['new'][s]:.3f}",
                    ]
                    + [f"{rep.unmet[s]:.3f}"]
                )

    # coal output before and after NEW supply, slot by slot
    fh, writer = _open(f"coal_output_{year}.csv", ["slot", "pre_new_mw", "post_new_mw"])
    with fh:
        if yd is not None:
            pre = yd.dispatch.coal_total()
            post = yd.reporting.coal_total()
            for s in range(pre.shape[0]):
                writer.writerow([s, f"{pre[s]:.3f}", f"{post[s]:.3f}"])

    # annual coal plant load factor
    fh, writer = _open(
        "coal_plf.csv", ["year", "plf_pre_displacement", "plf_post_displacement"]
    )
    with fh:
        if detail is not None:
            for row, yr in zip(detail.year_rows, YEARS):
                d = detail.details.get(yr)
                if d is None:
                    continue
                hours = slots_in_year(yr) * SLOT_HOURS
                cap_mw = d.dispatch.capacity["coal_2019"] + d.dispatch.capacity["coal_slack"]
                cap_twh = float(cap_mw.max()) * hours / 1e6
                pre = row["coal_twh"]
                post = (
                    d.reporting.energy_twh("coal_2019")
                    + d.reporting.energy_twh("coal_slack")
                )
                if cap_twh > 0:
                    writer.writerow([yr, _fmt(pre / cap_twh), _fmt(post / cap_twh)])

    # battery state of charge for the focus year, when there is one
    if yd is not None and yd.trace is not None:
        path = out / f"soc_trace_{year}.csv"
        yd.trace.to_csv(path)
        written.append(path)
    return written


# --- the run itself --------------------------------------------------------


def _config_digest(config: Mapping | None) -> str:
    canonical = json.dumps(config or {}, sort_keys=True).encode()
    return hashlib.sha256(canonical).hexdigest()


def run(
    config: Mapping | None = None,
    data_dir: str | Path | None = None,
    out_dir: str | Path = "gridlab-out",
    parallelism: int = 1,
    synthetic_seed: int | None = None,
    detail_year: int | None = None,
) -> RunManifest:
    """Evaluate every scenario in the config and write the result tables.

    Scenario failures are isolated: the row lands in failures.csv and
    the sweep carries on.  The first successful scenario doubles as the
    detail scenario feeding the figure CSVs.
    """
    start = time.monotonic()
    if parallelism < 1:
        raise ParameterError("parallelism must be >= 1")
    scenarios, base_params, data_opts = parse_config(config)
    base, solar, wind = load_inputs(data_dir, synthetic_seed, base_params, data_opts)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    jobs = list(enumerate(scenarios))
    successes: list[tuple[int, ScenarioOutcome]] = []
    failures: list[tuple[int, str]] = []
    log.info("evaluating %d scenarios at parallelism %d", len(jobs), parallelism)
    if parallelism == 1:
        _init_worker(base, solar, wind)
        raw = map(_run_one, jobs)
        for index, error, outcome in raw:
            (failures.append((index, error)) if error else successes.append((index, outcome)))
    else:
        with ProcessPoolExecutor(
            max_workers=parallelism,
            initializer=_init_worker,
            initargs=(base, solar, wind),
        ) as pool:
            for index, error, outcome in pool.map(_run_one, jobs, chunksize=1):
                (failures.append((index, error)) if error else successes.append((index, outcome)))
    for index, message in failures:
        log.error("scenario %d failed: %s", index, message)

    ranked = sorted(
        successes,
        key=lambda pair: (
            pair[1].result.report.npv_total,
            pair[1].result.new_capacity_mw,
            pair[1].result.curtailment_twh,
            pair[0],
        ),
    )

    files: list[str] = []
    _write_frontier(out / "frontier.csv", ranked)
    files.append("frontier.csv")
    _write_years(out / "results_by_year.csv", successes)
    files.append("results_by_year.csv")
    _write_failures(out / "failures.csv", failures, scenarios)
    files.append("failures.csv")

    detail_index: int | None = None
    detail_outcome: ScenarioOutcome | None = None
    if successes:
        detail_index = successes[0][0]
        detail_outcome = evaluate_scenario(
            scenarios[detail_index], base, solar, wind, detail_years=YEARS
        )
    for path in export_figures(out, detail_outcome):
        files.append(path.name)

    dump_years = {FINAL_YEAR}
    if detail_year is not None:
        dump_years.add(detail_year)
    if detail_outcome is not None:
        for yr in sorted(dump_years):
            d = detail_outcome.details.get(yr)
            if d is None:
                raise ParameterError(f"detail year {yr} outside horizon {YEARS[0]}..{YEARS[-1]}")
            name = f"dispatch_{yr}.csv"
            dsp.to_csv(d.reporting, out / name)
            files.append(name)

    manifest = RunManifest(
        version=__version__,
        scenario_count=len(scenarios),
        failed=len(failures),
        parallelism=parallelism,
        synthetic_seed=synthetic_seed,
        data_dir=None if data_dir is None else str(data_dir),
        config_digest=_config_digest(config),
        detail_scenario=detail_index,
        files=tuple(files),
        wall_time_s=time.monotonic() - start,
    )
    manifest.to_json(out / "manifest.json")
    return manifest


# --- entry point ------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridlab",
        description="Half-hourly grid balancing sweeps: JSON config in, CSVs out.",
    )
    parser.add_argument("--config", help="JSON config file (axes, overrides, data options)")
    parser.add_argument("--data", help="directory holding base_year.csv (and optional solar_shape.csv)")
    parser.add_argument("--out", default="gridlab-out", help="output directory (default: %(default)s)")
    parser.add_argument(
        "--synthetic",
        type=int,
        metavar="SEED",
        help="generate the base year synthetically from this seed instead of --data",
    )
    parser.add_argument(
        "--parallelism", type=int, default=1, help="worker processes (default: %(default)s)"
    )
    parser.add_argument(
        "--year-detail",
        type=int,
        metavar="YEAR",
        help="also write a slot-level despatch CSV for this year",
    )
    parser.add_argument(
        "--validate-only",
        action="store_true",
        help="parse config and inputs, report the scenario count, run nothing",
    )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get("GRIDLAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)

    try:
        config = None
        if args.config:
            with open(args.config) as fh:
                config = json.load(fh)

        if args.validate_only:
            scenarios, base_params, data_opts = parse_config(config)
            if args.data is not None or args.synthetic is not None:
                load_inputs(args.data, args.synthetic, base_params, data_opts)
                print("inputs: ok")
            print(f"scenarios: {len(scenarios)}")
            return 0

        manifest = run(
            config=config,
            data_dir=args.data,
            out_dir=args.out,
            parallelism=args.parallelism,
            synthetic_seed=args.synthetic,
            detail_year=args.year_detail,
        )
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return 2
    except (GridlabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    print(
        f"evaluated {manifest.scenario_count - manifest.failed} of "
        f"{manifest.scenario_count} scenarios in {manifest.wall_time_s:.1f}s"
        f" -> {args.out}"
    )
    if manifest.failed:
        print(f"{manifest.failed} scenario(s) failed; see failures.csv", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
