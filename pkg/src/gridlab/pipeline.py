"""End-to-end evaluation of one scenario: shapes to cost report.

The pipeline stitches the modules together for each year 2021-2030:

1. scale demand and capacities (scenario),
2. net demand after must-run, merit despatch, coal flex (dispatch),
3. buffer audit and unmet residual (dispatch),
4. NEW supply sizing, SoC simulation, displacement loops (newsupply),
5. cash flows and NPV (economics).

Heavy slot-level arrays stay inside the worker; what comes back per
scenario is a flat summary suitable for CSV rows, so a grid sweep can
fan out across processes and still merge deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from gridlab import dispatch as dsp
from gridlab import economics as eco
from gridlab import newsupply as new
from gridlab.errors import InfeasibleError
from gridlab.scenario import (
    BASE_YEAR,
    YEARS,
    CapacityPath,
    ScenarioParams,
    build_capacity_path,
    project_demand,
)
from gridlab.shapes import (
    SLOT_HOURS,
    BaseYearData,
    HalfHourlySeries,
    PerMwShape,
    map_values_to_year,
    slots_in_year,
)


@dataclass
class YearDetail:
    """Slot-level leftovers for one year, kept only when asked for."""

    year: int
    dispatch: dsp.DispatchYear  # post-flex, pre-displacement
    reporting: dsp.DispatchYear  # NEW supply and displacement folded in
    demand: np.ndarray
    unmet: np.ndarray
    shortfall: np.ndarray
    curtailed_re: np.ndarray
    solar_gen: np.ndarray
    trace: new.SocTrace | None


@dataclass
class ScenarioOutcome:
    """Everything a sweep needs back from one evaluated scenario."""

    params: ScenarioParams
    result: eco.ScenarioResult
    plan: new.NewSupplyPlan
    year_rows: list[dict]
    details: dict[int, YearDetail] = field(default_factory=dict)


def _snap(value: float, epsilon: float = 1e-9) -> float:
    """Zero out float dust so downstream reports stay clean."""
    return 0.0 if abs(value) < epsilon else value


def _shape_for_year(values: np.ndarray, year: int) -> np.ndarray:
    if values.shape[0] == slots_in_year(year):
        return values
    return map_values_to_year(values, BASE_YEAR, year)


def _tranche_caps(
    base: BaseYearData, path: CapacityPath, p: ScenarioParams, year: int
) -> dict[str, np.ndarray]:
    """Per-slot tranche capacities for one year.

    The 2019 tranches follow the base-year output shape, shrunk when
    retirement eats into them; slack is whatever available capacity
    remains above that.  Coal availability carries the maintenance
    derate.
    """
    i = path.index(year)
    coal_avail = path.coal_total[i] * 1e3 * (1.0 - p.coal_peak_derate)
    gas_avail = path.gas_total[i] * 1e3

    base_coal = _shape_for_year(base.supply_by_fuel["coal"].values, year)
    base_gas = _shape_for_year(base.supply_by_fuel["gas"].values, year)
    coal_peak = float(np.max(base_coal))
    gas_peak = float(np.max(base_gas))

    f_coal = min(path.coal_2019_tranche[i] * 1e3 / coal_peak, 1.0) if coal_peak > 0 else 0.0
    f_gas = min(path.gas_2019_tranche[i] * 1e3 / gas_peak, 1.0) if gas_peak > 0 else 0.0

    cap_c19 = np.minimum(base_coal * f_coal, coal_avail)
    cap_g19 = np.minimum(base_gas * f_gas, gas_avail)
    return {
        "coal_2019": cap_c19,
        "gas_2019": cap_g19,
        "coal_slack": coal_avail - cap_c19,
        "gas_slack": gas_avail - cap_g19,
        "coal_avail": np.full(base_coal.shape, coal_avail),
        "gas_avail": np.full(base_gas.shape, gas_avail),
    }


def _year_supplies(
    base: BaseYearData,
    path: CapacityPath,
    p: ScenarioParams,
    year: int,
    solar_shape: np.ndarray,
    wind_shape: np.ndarray,
) -> dict[str, HalfHourlySeries]:
    """Must-run supply series for one year, scaled pro rata."""
    i = path.index(year)
    re_base = base.supply_by_fuel["re"].to_year(year)
    re_values = (
        re_base.values
        + path.solar_new[i] * 1e3 * solar_shape
        + path.wind_new[i] * 1e3 * wind_shape
    )
    hydro = base.supply_by_fuel["hydro"].to_year(year)
    hydro_factor = path.hydro[i] / p.hydro_2021
    nuclear = base.supply_by_fuel["nuclear"].to_year(year)
    nuclear_factor = path.nuclear[i] / p.nuclear_2021
    return {
        "re": HalfHourlySeries(year, re_values, label="re"),
        "hydro": HalfHourlySeries(year, hydro.values * hydro_factor, label="hydro"),
        "nuclear": HalfHourlySeries(year, nuclear.values * nuclear_factor, label="nuclear"),
    }


def dispatch_year(
    params: ScenarioParams,
    base: BaseYearData,
    path: CapacityPath,
    year: int,
    solar_shape: np.ndarray,
    wind_shape: np.ndarray,
) -> tuple[dsp.DispatchYear, dict]:
    """Steps 2-4 for one year: net demand, merit order, flex, buffer."""
    i = path.index(year)
    demand = project_demand(params, base, year)
    busbar = HalfHourlySeries(
        year, demand.values * (1.0 + params.ists_loss), label="busbar_demand"
    )
    supplies = _year_supplies(base, path, params, year, solar_shape, wind_shape)

    net, interim = dsp.net_demand(busbar, supplies["re"], supplies["hydro"], supplies["nuclear"])
    must = dsp.split_must_run(busbar, supplies["re"], supplies["hydro"], supplies["nuclear"])
    caps = _tranche_caps(base, path, params, year)
    dy = dsp.merit_dispatch(net, [(k, caps[k]) for k in dsp.TRANCHES])
    dy = dsp.attach_must_run(dy, must, interim.values)
    dy = dsp.apply_coal_flex(dy, params.flex_limit, supplies["re"])
    dy.check_balance()

    despatchable = (
        caps["coal_avail"] + caps["gas_avail"]
        + path.hydro[i] * 1e3 + path.nuclear[i] * 1e3
    )
    buffer = dsp.buffer_check(dy, busbar, despatchable, params.grid_buffer)
    unmet, cap_req = dsp.compute_unmet(dy, buffer)
    curtailed_re = (supplies["re"].values - must["re"]) + dy.flex_re_cut
    extras = {
        "busbar": busbar.values,
        "buffer": buffer,
        "capacity_requirement_mw": cap_req,
        "curtailed_re": curtailed_re,
        "re_available": supplies["re"].values,
    }
    return dy, extras


def _battery_plan(
    params: ScenarioParams,
    years_data: Mapping[int, tuple[dsp.DispatchYear, dict]],
    solar_shapes: Mapping[int, np.ndarray],
) -> tuple[new.NewSupplyPlan, dict[int, new.SocTrace], dict[int, np.ndarray]]:
    """Size and simulate the battery option year by year.

    Battery and dedicated solar only ever grow; each year re-simulates
    at the cumulative size under the daily-full-recharge assumption.
    """
    plan = new.NewSupplyPlan(option="battery_re")
    boundary = params.cycle_boundary_slot
    traces: dict[int, new.SocTrace] = {}
    solar_gens: dict[int, np.ndarray] = {}
    run_energy = run_inverter = run_solar_gw = 0.0

    for year in YEARS:
        dy, extras = years_data[year]
        unmet = dy.unmet
        shortfall = extras["buffer"].shortfall
        sized = new.size_battery(unmet, params, buffer_shortfall=shortfall)
        run_energy = max(run_energy, sized.energy_capacity_mwh)
        run_inverter = max(run_inverter, sized.inverter_capacity_mw)
        battery = new.BatterySpec(
            energy_capacity_mwh=run_energy,
            inverter_capacity_mw=run_inverter,
            dod_buffer=params.battery_dod_buffer,
            roundtrip_eff=params.battery_roundtrip_eff,
            size_fraction=params.battery_size_fraction,
            eff_split=params.battery_eff_split,
        )
        plan.battery_by_year[year] = battery

        shape = PerMwShape(solar_shapes[year], label="dedicated_solar")
        curtailed = extras["curtailed_re"]
        if battery.energy_capacity_mwh > 0:
            try:
                gw = new.size_dedicated_solar(
                    battery, curtailed, unmet, shape,
                    extra=params.dedicated_solar_extra, boundary_slot=boundary,
                )
            except InfeasibleError:
                # an undersized battery can never zero out secondary
                # unmet; build the solar its full-size design needed and
                # let the rest of the profile fall through to biodiesel
                gw = new.size_dedicated_solar(
                    battery.scaled(1.0), curtailed, unmet, shape,
                    extra=params.dedicated_solar_extra, boundary_slot=boundary,
                )
        else:
            gw = 0.0
        run_solar_gw = max(run_solar_gw, gw)
        plan.dedicated_solar_gw[year] = run_solar_gw
        solar_gen = shape.values * run_solar_gw * 1e3
        solar_gens[year] = solar_gen

        trace = new.simulate_soc(
            battery, unmet, curtailed, solar_gen,
            boundary_slot=boundary, cycle_reset=True,
        )
        traces[year] = trace
        plan.secondary_unmet_twh[year] = _snap(trace.secondary_unmet_twh())

        disp = new.displace_with_battery(trace, dy)
        per_day_coal = disp.per_day_mwh["coal_2019"] + disp.per_day_mwh["coal_slack"]
        bonus = new.coal_peak_bonus(dy, per_day_coal, params.flex_limit)
        plan.displaced_gas_nonapm_twh[year] = disp.displaced_gas_twh
        plan.displaced_coal_twh[year] = disp.displaced_coal_twh
        plan.displaced_by_tranche_twh[year] = dict(disp.displaced_twh)
        plan.bonus_curtailment_avoided_twh[year] = float(np.sum(bonus)) / 1e6

        peak_secondary = _snap(float(np.max(trace.secondary_unmet_mw)) if unmet.size else 0.0)
        diesel_aux = params.tech_costs["diesel_gen"].aux
        gross_bio = peak_secondary / (1.0 - diesel_aux)
        prev = plan.biodiesel_capacity_mw.get(year - 1, 0.0)
        plan.biodiesel_capacity_mw[year] = max(prev, gross_bio)

        plan.capacity_mw[year] = battery.inverter_capacity_mw
    plan.battery = plan.battery_by_year[YEARS[-1]]
    _fill_increments(plan)
    return plan, traces, solar_gens


def _thermal_plan(
    params: ScenarioParams,
    years_data: Mapping[int, tuple[dsp.DispatchYear, dict]],
) -> new.NewSupplyPlan:
    """Size a thermal NEW option; coal may be undersized deliberately."""
    option = params.new_option
    tech = params.tech_costs[option]
    plan = new.NewSupplyPlan(option=option)
    unmets = [years_data[y][0].unmet for y in YEARS]
    shortfalls = [years_data[y][1]["buffer"].shortfall for y in YEARS]
    build = new.size_new_capacity(unmets, shortfalls, option, tech.aux, years=YEARS)

    size_fraction = params.new_coal_size_fraction if option == "coal" else 1.0
    diesel_aux = params.tech_costs["diesel_gen"].aux
    for i, year in enumerate(YEARS):
        gross = build.installed_mw[i] * size_fraction
        net_cap = gross * (1.0 - tech.aux)
        plan.capacity_mw[year] = gross
        dy = years_data[year][0]
        secondary = np.maximum(dy.unmet - net_cap, 0.0)
        plan.secondary_unmet_twh[year] = _snap(float(np.sum(secondary)) * SLOT_HOURS / 1e6)
        peak_secondary = _snap(float(np.max(secondary)) if secondary.size else 0.0)
        prev = plan.biodiesel_capacity_mw.get(year - 1, 0.0)
        plan.biodiesel_capacity_mw[year] = max(prev, peak_secondary / (1.0 - diesel_aux))

        if option == "coal":
            served = np.minimum(dy.unmet, net_cap)
            rep = dy.copy()
            rep.supply["new"] = served
            rep.unmet = dy.unmet - served
            plan.displaced_gas_nonapm_twh[year] = new.displace_gas_with_new_coal(net_cap, rep)
        else:
            plan.displaced_gas_nonapm_twh[year] = 0.0
        plan.displaced_coal_twh[year] = 0.0
        plan.bonus_curtailment_avoided_twh[year] = 0.0
    _fill_increments(plan)
    return plan


def _fill_increments(plan: new.NewSupplyPlan) -> None:
    prev = 0.0
    for year in YEARS:
        cap = plan.capacity_mw.get(year, 0.0)
        plan.increments_mw[year] = max(cap - prev, 0.0)
        prev = max(prev, cap)


def _reporting_dispatch(
    params: ScenarioParams,
    dy: dsp.DispatchYear,
    plan: new.NewSupplyPlan,
    trace: new.SocTrace | None,
    year: int,
) -> dsp.DispatchYear:
    """Fold NEW supply and displacement into a copy, for exports.

    Every reduction is matched by an increase elsewhere, so slot sums
    against demand stay exact.  Displaced coal comes off the day's
    peak; the bonus lowers floor-bound slots and hands the energy back
    to RE (curtailment shrinks by the same amount).
    """
    rep = dy.copy()
    if plan.option == "battery_re" and trace is not None:
        served = trace.served_mw
    else:
        tech = params.tech_costs[plan.option]
        net_cap = plan.capacity_mw.get(year, 0.0) * (1.0 - tech.aux)
        served = np.minimum(rep.unmet, net_cap)
    rep.supply["new"] = rep.supply["new"] + served
    rep.unmet = np.maximum(rep.unmet - served, 0.0)

    coal_disp_twh = plan.displaced_coal_twh.get(year, 0.0)
    gas_disp_twh = plan.displaced_gas_nonapm_twh.get(year, 0.0)
    bonus_twh = plan.bonus_curtailment_avoided_twh.get(year, 0.0)

    if gas_disp_twh > 0:
        gas = rep.supply["gas_slack"]
        total = float(np.sum(gas)) * SLOT_HOURS
        if total > 0:
            cut = min(gas_disp_twh * 1e6 / total, 1.0)
            rep.supply["new"] = rep.supply["new"] + gas * cut
            rep.supply["gas_slack"] = gas * (1.0 - cut)

    if coal_disp_twh > 0 or bonus_twh > 0:
        coal = rep.supply["coal_2019"] + rep.supply["coal_slack"]
        n_days = rep.n_days
        per_day = np.zeros(n_days)
        # spread recorded volumes over days proportional to coal energy
        day_energy = coal.reshape(n_days, -1).sum(axis=1) * SLOT_HOURS
        total = float(day_energy.sum())
        if total > 0:
            per_day = (coal_disp_twh * 1e6) * day_energy / total
            for d in range(n_days):
                sl = slice(d * 48, (d + 1) * 48)
                level = new._lowered_daily_max(coal[sl], float(per_day[d]))
                cut = np.maximum(coal[sl] - level, 0.0)
                slack = rep.supply["coal_slack"][sl]
                take_slack = np.minimum(cut, slack)
                rep.supply["coal_slack"][sl] = slack - take_slack
                rep.supply["coal_2019"][sl] -= cut - take_slack
                rep.supply["new"][sl] += cut
        if bonus_twh > 0 and rep.flex_re_cut is not None:
            cut_profile = rep.flex_re_cut + rep.flex_hydro_cut
            weight = float(np.sum(cut_profile)) * SLOT_HOURS
            if weight > 0:
                scale = min(bonus_twh * 1e6 / weight, 1.0)
                give_back = cut_profile * scale
                slack = rep.supply["coal_slack"]
                take_slack = np.minimum(give_back, slack)
                rep.supply["coal_slack"] = slack - take_slack
                rep.supply["coal_2019"] -= give_back - take_slack
                re_part = np.minimum(give_back, rep.flex_re_cut)
                rep.supply["re"] = rep.supply["re"] + re_part
                rep.supply["hydro"] = rep.supply["hydro"] + (give_back - re_part)
                rep.curtailment = np.maximum(rep.curtailment - give_back, 0.0)
    return rep


def evaluate_scenario(
    params: ScenarioParams,
    base: BaseYearData,
    solar_shape: PerMwShape,
    wind_shape: PerMwShape,
    detail_years: tuple[int, ...] = (),
) -> ScenarioOutcome:
    """Run one scenario end to end and summarize it."""
    path = build_capacity_path(params, base)
    solar_by_year = {y: _shape_for_year(solar_shape.values, y) for y in YEARS}
    wind_by_year = {y: _shape_for_year(wind_shape.values, y) for y in YEARS}

    years_data: dict[int, tuple[dsp.DispatchYear, dict]] = {}
    for year in YEARS:
        years_data[year] = dispatch_year(
            params, base, path, year, solar_by_year[year], wind_by_year[year]
        )

    traces: dict[int, new.SocTrace] = {}
    solar_gens: dict[int, np.ndarray] = {}
    if params.new_option == "battery_re":
        plan, traces, solar_gens = _battery_plan(params, years_data, solar_by_year)
    else:
        plan = _thermal_plan(params, years_data)
    plan.validate()

    paths = eco.build_price_path(params)
    dispatch_by_year = {y: years_data[y][0] for y in YEARS}
    report = eco.npv_system_cost(
        dispatch_by_year, plan, paths, params.discount_rate, params, path
    )

    if params.new_option == "battery_re":
        new_capacity = plan.battery.inverter_capacity_mw if plan.battery else 0.0
    else:
        new_capacity = max(plan.capacity_mw.values(), default=0.0)
    curtailment = sum(dispatch_by_year[y].curtailment_twh() for y in YEARS)
    result = eco.ScenarioResult(
        params=params,
        report=report,
        new_capacity_mw=new_capacity,
        curtailment_twh=curtailment,
    )

    year_rows = []
    details: dict[int, YearDetail] = {}
    for year in YEARS:
        dy, extras = years_data[year]
        row = {
            "year": year,
            "demand_twh": float(np.sum(extras["busbar"])) * SLOT_HOURS / 1e6,
            "re_twh": dy.energy_twh("re"),
            "hydro_twh": dy.energy_twh("hydro"),
            "nuclear_twh": dy.energy_twh("nuclear"),
            "coal_twh": dy.energy_twh("coal_2019") + dy.energy_twh("coal_slack"),
            "gas_twh": dy.energy_twh("gas_2019") + dy.energy_twh("gas_slack"),
            "curtailment_twh": dy.curtailment_twh(),
            "unmet_twh": dy.unmet_twh(),
            "peak_unmet_gw": dy.peak_unmet_mw() / 1e3,
            "capacity_requirement_gw": extras["capacity_requirement_mw"] / 1e3,
            "new_capacity_gross_mw": plan.capacity_mw.get(year, 0.0),
            "dedicated_solar_gw": plan.dedicated_solar_gw.get(year, 0.0),
            "secondary_unmet_twh": plan.secondary_unmet_twh.get(year, 0.0),
            "displaced_gas_twh": plan.displaced_gas_nonapm_twh.get(year, 0.0),
            "displaced_coal_twh": plan.displaced_coal_twh.get(year, 0.0),
            "bonus_curtailment_twh": plan.bonus_curtailment_avoided_twh.get(year, 0.0),
            "flex_relaxed_slots": dy.relaxed_slots,
        }
        year_rows.append(row)
        if year in detail_years:
            trace = traces.get(year)
            rep = _reporting_dispatch(params, dy, plan, trace, year)
            rep.check_balance(tolerance=1.0)
            details[year] = YearDetail(
                year=year,
                dispatch=dy,
                reporting=rep,
                demand=extras["busbar"],
                unmet=dy.unmet.copy(),
                shortfall=extras["buffer"].shortfall,
                curtailed_re=extras["curtailed_re"],
                solar_gen=solar_gens.get(year, np.zeros(dy.n_slots)),
                trace=trace,
            )

    return ScenarioOutcome(
        params=params, result=result, plan=plan, year_rows=year_rows, details=details
    )
