"""Sizing and simulation of NEW supply: batteries, thermal, displacement.

Unmet demand left after despatch defines the NEW supply requirement.
This module sizes the chosen option (battery with dedicated solar, or
one of the thermal technologies), simulates battery state of charge,
and computes the fossil-displacement feedback loops: spare battery
throughput displacing non-APM gas and coal, and the knock-on reduction
in RE curtailment when displaced coal lowers the daily peak that sets
the coal flexibility floor.

Conventions for battery flows:

* ``charge_mw`` is measured on the source side (grid or solar, before
  charging losses); the battery gains ``charge * charge_eff`` per hour.
* ``discharge_mw`` is measured on the battery side; the grid receives
  ``discharge * discharge_eff``.
* State of charge is bookkeeping, not physics: the recorded discharge
  is the attempt (capped by the inverter only), so SoC dives below the
  depth-of-discharge floor, and below zero, by exactly the energy the
  battery failed to deliver.  Delivered energy is capped by the floor.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from gridlab.errors import InfeasibleError, ParameterError
from gridlab.shapes import SLOTS_PER_DAY, SLOT_HOURS, PerMwShape
from gridlab.dispatch import DispatchYear, day_index
from gridlab.scenario import NEW_OPTIONS, ScenarioParams

#: Default displacement priority: highest marginal cost first.  The
#: gas_2019 tranche is never displaced (committed utilisation pattern).
DISPLACEABLE_PRICES = {"gas_slack": 5.0, "coal_slack": 3.0, "coal_2019": 2.6}

_EPS = 1e-9


@dataclass(frozen=True)
class BatterySpec:
    """A battery's nameplate numbers plus the efficiency convention."""

    energy_capacity_mwh: float
    inverter_capacity_mw: float
    dod_buffer: float
    roundtrip_eff: float
    size_fraction: float = 1.0
    eff_split: str = "symmetric"

    def __post_init__(self):
        if self.energy_capacity_mwh < 0 or self.inverter_capacity_mw < 0:
            raise ParameterError("battery capacities must be >= 0")
        if self.energy_capacity_mwh > 0 and self.inverter_capacity_mw <= 0:
            raise ParameterError("a battery with energy needs a positive inverter")
        if not 0.0 < self.dod_buffer < 1.0:
            raise ParameterError("dod_buffer must lie in (0, 1)")
        if not 0.0 < self.roundtrip_eff <= 1.0:
            raise ParameterError("roundtrip_eff must lie in (0, 1]")
        if not 0.0 < self.size_fraction <= 1.0:
            raise ParameterError("size_fraction must lie in (0, 1]")
        if self.eff_split not in ("symmetric", "charge_only"):
            raise ParameterError(f"unknown eff_split {self.eff_split!r}")

    @property
    def usable_mwh(self) -> float:
        return self.energy_capacity_mwh * (1.0 - self.dod_buffer)

    @property
    def floor_mwh(self) -> float:
        return self.energy_capacity_mwh * self.dod_buffer

    @property
    def charge_eff(self) -> float:
        if self.eff_split == "charge_only":
            return self.roundtrip_eff
        return float(np.sqrt(self.roundtrip_eff))

    @property
    def discharge_eff(self) -> float:
        if self.eff_split == "charge_only":
            return 1.0
        return float(np.sqrt(self.roundtrip_eff))

    def scaled(self, size_fraction: float) -> "BatterySpec":
        """The same battery re-sized to a fraction of its full sizing."""
        if size_fraction <= 0:
            raise ParameterError("size_fraction must be > 0")
        full_energy = self.energy_capacity_mwh / self.size_fraction
        full_inverter = self.inverter_capacity_mw / self.size_fraction
        return BatterySpec(
            energy_capacity_mwh=full_energy * size_fraction,
            inverter_capacity_mw=full_inverter * size_fraction,
            dod_buffer=self.dod_buffer,
            roundtrip_eff=self.roundtrip_eff,
            size_fraction=size_fraction,
            eff_split=self.eff_split,
        )


@dataclass
class SocTrace:
    """Slot-level battery simulation output.

    ``soc_mwh`` may go negative: the shortfall below the DoD floor is
    exactly the battery-side energy that could not be delivered.
    """

    battery: BatterySpec
    soc_mwh: np.ndarray
    charge_mw: np.ndarray
    discharge_mw: np.ndarray
    served_mw: np.ndarray
    secondary_unmet_mw: np.ndarray
    charge_re_mw: np.ndarray
    charge_solar_mw: np.ndarray
    unmet_mw: np.ndarray
    source_re_mw: np.ndarray
    source_solar_mw: np.ndarray
    boundary_slot: int
    cycle_reset: bool

    @property
    def n_slots(self) -> int:
        return self.soc_mwh.shape[0]

    def secondary_unmet_twh(self) -> float:
        return float(np.sum(self.secondary_unmet_mw)) * SLOT_HOURS / 1e6

    def served_twh(self) -> float:
        return float(np.sum(self.served_mw)) * SLOT_HOURS / 1e6

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["slot", "soc_mwh", "charge_mw", "discharge_mw", "source"])
            for s in range(self.n_slots):
                if self.charge_re_mw[s] > 0 and self.charge_solar_mw[s] > 0:
                    source = "re+solar"
                elif self.charge_re_mw[s] > 0:
                    source = "re"
                elif self.charge_solar_mw[s] > 0:
                    source = "solar"
                else:
                    source = ""
                writer.writerow([
                    s, f"{self.soc_mwh[s]:.3f}", f"{self.charge_mw[s]:.3f}",
                    f"{self.discharge_mw[s]:.3f}", source,
                ])


@dataclass
class NewSupplyPlan:
    """The NEW supply decision for one scenario, year by year."""

    option: str
    capacity_mw: dict[int, float] = field(default_factory=dict)  # gross installed
    increments_mw: dict[int, float] = field(default_factory=dict)
    battery: BatterySpec | None = None
    battery_by_year: dict[int, BatterySpec] = field(default_factory=dict)
    dedicated_solar_gw: dict[int, float] = field(default_factory=dict)
    secondary_unmet_twh: dict[int, float] = field(default_factory=dict)
    displaced_gas_nonapm_twh: dict[int, float] = field(default_factory=dict)
    displaced_coal_twh: dict[int, float] = field(default_factory=dict)
    displaced_by_tranche_twh: dict[int, dict[str, float]] = field(default_factory=dict)
    bonus_curtailment_avoided_twh: dict[int, float] = field(default_factory=dict)
    biodiesel_capacity_mw: dict[int, float] = field(default_factory=dict)

    def validate(self) -> None:
        for name in ("displaced_gas_nonapm_twh", "displaced_coal_twh",
                     "bonus_curtailment_avoided_twh", "secondary_unmet_twh"):
            for year, value in getattr(self, name).items():
                if value < -_EPS:
                    raise ParameterError(f"{name}[{year}] is negative: {value}")

    def to_json(self, path=None) -> str:
        payload = {
            "option": self.option,
            "capacity_mw": self.capacity_mw,
            "increments_mw": self.increments_mw,
            "dedicated_solar_gw": self.dedicated_solar_gw,
            "secondary_unmet_twh": self.secondary_unmet_twh,
            "displaced_gas_nonapm_twh": self.displaced_gas_nonapm_twh,
            "displaced_coal_twh": self.displaced_coal_twh,
            "bonus_curtailment_avoided_twh": self.bonus_curtailment_avoided_twh,
        }
        if self.battery is not None:
            payload["battery"] = {
                "energy_capacity_mwh": self.battery.energy_capacity_mwh,
                "inverter_capacity_mw": self.battery.inverter_capacity_mw,
                "size_fraction": self.battery.size_fraction,
            }
        text = json.dumps(payload, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def cycle_windows(n_slots: int, boundary_slot: int) -> list[tuple[int, int]]:
    """Half-open 24h windows split at the daily cycle boundary.

    The leading (and trailing) partial window is kept, so every slot
    belongs to exactly one cycle.
    """
    if not 0 <= boundary_slot < SLOTS_PER_DAY:
        raise ParameterError("boundary_slot must lie in 0..47")
    edges = list(range(boundary_slot, n_slots, SLOTS_PER_DAY))
    if boundary_slot > 0:
        edges = [0] + edges
    edges.append(n_slots)
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _pad_cycles(arr: np.ndarray, boundary_slot: int) -> tuple[np.ndarray, int]:
    """Reshape a slot series to (cycles, 48), zero-padding both ends.

    Returns the matrix and the front padding length; padded slots are
    inert (no demand, no sources) and are trimmed off after the fact.
    """
    n = arr.shape[0]
    front = (SLOTS_PER_DAY - boundary_slot) % SLOTS_PER_DAY
    total = front + n
    back = (-total) % SLOTS_PER_DAY
    padded = np.concatenate([np.zeros(front), arr, np.zeros(back)])
    return padded.reshape(-1, SLOTS_PER_DAY), front


# --- capacity sizing ---------------------------------------------------


@dataclass(frozen=True)
class NewBuild:
    """Per-year capacity requirement and cumulative build schedule."""

    years: tuple[int, ...]
    required_mw: np.ndarray  # gross requirement per year
    installed_mw: np.ndarray  # running maximum (no retirement in horizon)
    increments_mw: np.ndarray


def size_new_capacity(
    unmet_by_year: Sequence[np.ndarray],
    shortfall_by_year: Sequence[np.ndarray],
    option: str,
    aux: float,
    years: Sequence[int] | None = None,
) -> NewBuild:
    """Gross NEW capacity needed per year, built cumulatively.

    The net requirement in a year is the worst slot of unmet demand
    plus buffer shortfall; thermal options gross up by their auxiliary
    consumption.  Capacity once built never retires inside the horizon,
    so increments only cover requirement beyond the installed maximum.
    """
    if option not in NEW_OPTIONS:
        raise ParameterError(f"unknown NEW option {option!r}")
    if len(unmet_by_year) != len(shortfall_by_year):
        raise ParameterError("unmet and shortfall must cover the same years")
    if not 0.0 <= aux < 1.0:
        raise ParameterError(f"aux {aux} outside [0, 1)")
    n = len(unmet_by_year)
    years = tuple(years) if years is not None else tuple(range(n))
    required = np.zeros(n)
    for i, (u, s) in enumerate(zip(unmet_by_year, shortfall_by_year)):
        u = np.asarray(u, dtype=float)
        s = np.asarray(s, dtype=float)
        net = float(np.max(u + s)) if u.size else 0.0
        required[i] = net / (1.0 - aux)
    installed = np.maximum.accumulate(required)
    increments = np.diff(installed, prepend=0.0)
    return NewBuild(years=years, required_mw=required,
                    installed_mw=installed, increments_mw=increments)


def size_battery(
    unmet: np.ndarray,
    params: ScenarioParams,
    buffer_shortfall: np.ndarray | None = None,
) -> BatterySpec:
    """Back-calculate battery size from the unmet-demand profile.

    The inverter covers the worst slot of unmet demand (plus buffer
    shortfall) after discharge losses.  Energy covers the worst 24h
    cycle of unmet energy, grossed up for the DoD buffer and discharge
    losses, and never less than one slot of full inverter output.
    Both scale linearly with the configured size fraction.
    """
    f = params.battery_size_fraction
    if f <= 0:
        raise ParameterError("battery_size_fraction must be > 0")
    unmet = np.asarray(unmet, dtype=float)
    need = unmet if buffer_shortfall is None else unmet + np.asarray(buffer_shortfall, dtype=float)
    eta_d = params.discharge_eff
    dod = params.battery_dod_buffer

    peak = float(np.max(need)) if need.size else 0.0
    inverter = peak / eta_d

    cycles, _ = _pad_cycles(unmet, params.cycle_boundary_slot)
    worst_cycle_mwh = float(np.max(cycles.sum(axis=1))) * SLOT_HOURS if cycles.size else 0.0
    energy = worst_cycle_mwh / ((1.0 - dod) * eta_d)
    energy = max(energy, inverter * SLOT_HOURS / (1.0 - dod))

    return BatterySpec(
        energy_capacity_mwh=energy * f,
        inverter_capacity_mw=inverter * f,
        dod_buffer=dod,
        roundtrip_eff=params.battery_roundtrip_eff,
        size_fraction=f,
        eff_split=params.battery_eff_split,
    )


# --- state-of-charge simulation ----------------------------------------


def _as_source(series, n: int, name: str) -> np.ndarray:
    if series is None:
        return np.zeros(n)
    arr = np.asarray(series, dtype=float)
    if arr.shape != (n,):
        raise ParameterError(f"{name} has shape {arr.shape}, want ({n},)")
    return arr


def simulate_soc(
    battery: BatterySpec,
    unmet,
    curtailed_re=None,
    dedicated_solar_gen=None,
    boundary_slot: int = 34,
    cycle_reset: bool = False,
) -> SocTrace:
    """Chronological battery simulation against the unmet profile.

    Slots with unmet demand discharge (never charge); all other slots
    charge from curtailed RE first, then dedicated solar, capped by the
    inverter, a 1C charging rate, and the remaining headroom.  With
    ``cycle_reset`` the state of charge snaps back to full at every
    cycle boundary, the daily-full-recharge assumption used for sizing
    and displacement accounting.
    """
    unmet = np.asarray(unmet, dtype=float)
    n = unmet.shape[0]
    re_src = _as_source(curtailed_re, n, "curtailed_re")
    sol_src = _as_source(dedicated_solar_gen, n, "dedicated_solar_gen")

    if cycle_reset:
        soc, charge, discharge, served, re_take, sol_take = _simulate_cycles(
            battery, unmet, re_src, sol_src, boundary_slot
        )
    else:
        soc, charge, discharge, served, re_take, sol_take = _simulate_chrono(
            battery, unmet, re_src, sol_src
        )
    # discharge losses round-trip through eta and leave +/- ulp dust on
    # "fully served" slots; snap anything below a watt so zero is zero
    secondary = np.maximum(unmet - served, 0.0)
    secondary[secondary < 1e-6] = 0.0
    return SocTrace(
        battery=battery,
        soc_mwh=soc,
        charge_mw=charge,
        discharge_mw=discharge,
        served_mw=served,
        secondary_unmet_mw=secondary,
        charge_re_mw=re_take,
        charge_solar_mw=sol_take,
        unmet_mw=unmet.copy(),
        source_re_mw=re_src,
        source_solar_mw=sol_src,
        boundary_slot=boundary_slot,
        cycle_reset=cycle_reset,
    )


def _simulate_chrono(battery, unmet, re_src, sol_src):
    e_cap = battery.energy_capacity_mwh
    inv = battery.inverter_capacity_mw
    floor = battery.floor_mwh
    eta_c = battery.charge_eff
    eta_d = battery.discharge_eff
    c_rate = e_cap  # 1C: at most the full energy capacity per hour

    n = unmet.shape[0]
    soc_out = np.empty(n)
    charge_out = np.zeros(n)
    discharge_out = np.zeros(n)
    served_out = np.zeros(n)
    re_out = np.zeros(n)
    sol_out = np.zeros(n)

    soc = e_cap
    for s in range(n):
        u = unmet[s]
        if u > 0:
            want = min(u / eta_d, inv)
            avail = max(soc - floor, 0.0) / SLOT_HOURS
            delivered = min(want, avail)
            served_out[s] = delivered * eta_d
            discharge_out[s] = want
            soc -= want * SLOT_HOURS
        else:
            head = max(e_cap - soc, 0.0) / (eta_c * SLOT_HOURS)
            cap = min(inv, c_rate, head)
            take_re = min(re_src[s], cap)
            take_sol = min(sol_src[s], cap - take_re)
            re_out[s] = take_re
            sol_out[s] = take_sol
            charge_out[s] = take_re + take_sol
            soc += charge_out[s] * eta_c * SLOT_HOURS
        soc_out[s] = soc
    return soc_out, charge_out, discharge_out, served_out, re_out, sol_out


def _simulate_cycles(battery, unmet, re_src, sol_src, boundary_slot):
    """Vectorized variant of the slot recursion, cycles independent."""
    e_cap = battery.energy_capacity_mwh
    inv = battery.inverter_capacity_mw
    floor = battery.floor_mwh
    eta_c = battery.charge_eff
    eta_d = battery.discharge_eff
    c_rate = e_cap

    u_m, front = _pad_cycles(unmet, boundary_slot)
    r_m, _ = _pad_cycles(re_src, boundary_slot)
    s_m, _ = _pad_cycles(sol_src, boundary_slot)
    n_cycles = u_m.shape[0]

    soc = np.full(n_cycles, e_cap)
    soc_m = np.empty_like(u_m)
    charge_m = np.zeros_like(u_m)
    discharge_m = np.zeros_like(u_m)
    served_m = np.zeros_like(u_m)
    re_m = np.zeros_like(u_m)
    sol_m = np.zeros_like(u_m)

    for s in range(SLOTS_PER_DAY):
        u = u_m[:, s]
        discharging = u > 0
        want = np.minimum(u / eta_d, inv)
        avail = np.maximum(soc - floor, 0.0) / SLOT_HOURS
        delivered = np.minimum(want, avail)

        head = np.maximum(e_cap - soc, 0.0) / (eta_c * SLOT_HOURS)
        cap = np.minimum(np.minimum(inv, c_rate), head)
        take_re = np.minimum(r_m[:, s], cap)
        take_sol = np.minimum(s_m[:, s], cap - take_re)

        discharge_m[:, s] = np.where(discharging, want, 0.0)
        served_m[:, s] = np.where(discharging, delivered * eta_d, 0.0)
        re_m[:, s] = np.where(discharging, 0.0, take_re)
        sol_m[:, s] = np.where(discharging, 0.0, take_sol)
        charge_m[:, s] = re_m[:, s] + sol_m[:, s]
        soc = soc + charge_m[:, s] * eta_c * SLOT_HOURS - discharge_m[:, s] * SLOT_HOURS
        soc_m[:, s] = soc

    n = unmet.shape[0]
    sl = slice(front, front + n)
    flat = lambda m: m.reshape(-1)[sl].copy()
    return (flat(soc_m), flat(charge_m), flat(discharge_m),
            flat(served_m), flat(re_m), flat(sol_m))


# --- dedicated solar sizing ---------------------------------------------


def _solar_gen(solar_shape: PerMwShape, capacity_gw: float, n: int) -> np.ndarray:
    if solar_shape.values.shape[0] != n:
        raise ParameterError("solar shape length must match the unmet series")
    return solar_shape.values * capacity_gw * 1e3


def _cycle_secondary_unmet(battery, unmet, re_src, solar, boundary_slot) -> float:
    trace = simulate_soc(battery, unmet, re_src, solar,
                         boundary_slot=boundary_slot, cycle_reset=True)
    return float(np.sum(trace.secondary_unmet_mw))


def _cycle_full_recharge(battery, unmet, re_src, solar, boundary_slot) -> bool:
    """Could every full cycle's sources refill one usable battery load?

    An energy-budget test: source MW through the inverter (and 1C cap),
    charge efficiency applied, summed over the cycle, against the usable
    capacity.  Budget rather than trace, because on days where unmet
    demand overlaps the solar window no trace can both serve load and
    show a full recharge; the daily-recharge assumption is an energy
    statement.  Partial windows at the year's edges are skipped: they
    lack a full day of sun by construction, not by undersizing.
    """
    cap = min(battery.inverter_capacity_mw, battery.energy_capacity_mwh)
    src = np.minimum(np.asarray(re_src, dtype=float) + solar, cap)
    src_m, _ = _pad_cycles(src, boundary_slot)
    budget = src_m.sum(axis=1) * battery.charge_eff * SLOT_HOURS

    n = np.asarray(unmet).shape[0]
    full = np.array([b - a == SLOTS_PER_DAY for a, b in cycle_windows(n, boundary_slot)])
    return bool(np.all(budget[full] >= battery.usable_mwh - 1e-6))


def _search_smallest(predicate, tolerance_gw: float, max_gw: float, what: str) -> float:
    """Smallest capacity satisfying a monotone predicate, by bisection."""
    if predicate(0.0):
        return 0.0
    hi = 1.0
    while not predicate(hi):
        hi *= 2.0
        if hi > max_gw:
            raise InfeasibleError(
                f"no dedicated solar capacity below {max_gw:g} GW achieves {what}"
            )
    lo = hi / 2.0 if hi > 1.0 else 0.0
    while hi - lo > tolerance_gw:
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            hi = mid
        else:
            lo = mid
    return hi


def size_for_full_recharge(
    battery: BatterySpec,
    curtailed_re,
    unmet,
    solar_shape: PerMwShape,
    boundary_slot: int = 34,
    tolerance_gw: float = 0.1,
    max_gw: float = 10_000.0,
) -> float:
    """Smallest dedicated solar that refills the battery every cycle."""
    if battery.energy_capacity_mwh <= 0:
        return 0.0
    unmet = np.asarray(unmet, dtype=float)
    n = unmet.shape[0]
    re_src = _as_source(curtailed_re, n, "curtailed_re")

    def ok(gw: float) -> bool:
        return _cycle_full_recharge(battery, unmet, re_src,
                                    _solar_gen(solar_shape, gw, n), boundary_slot)

    return _search_smallest(ok, tolerance_gw, max_gw, "full daily recharge")


def size_dedicated_solar(
    battery: BatterySpec,
    curtailed_re,
    unmet,
    solar_shape: PerMwShape,
    extra: float,
    boundary_slot: int = 34,
    tolerance_gw: float = 0.1,
    max_gw: float = 10_000.0,
) -> float:
    """Dedicated solar GW between minimum-service and full-recharge sizing.

    The minimum is the smallest capacity leaving zero secondary unmet
    in every cycle; the maximum additionally refills the battery daily.
    ``extra`` interpolates between the two.  Raises InfeasibleError if
    even the largest searched capacity cannot serve the unmet profile,
    which is the signature of a deliberately undersized battery.
    """
    if not 0.0 <= extra <= 1.0:
        raise ParameterError("extra must lie in [0, 1]")
    if battery.energy_capacity_mwh <= 0:
        return 0.0
    unmet = np.asarray(unmet, dtype=float)
    n = unmet.shape[0]
    re_src = _as_source(curtailed_re, n, "curtailed_re")

    def served(gw: float) -> bool:
        gap = _cycle_secondary_unmet(battery, unmet, re_src,
                                     _solar_gen(solar_shape, gw, n), boundary_slot)
        return gap <= _EPS

    minimum = _search_smallest(served, tolerance_gw, max_gw, "zero secondary unmet")
    if extra == 0.0:
        return minimum
    maximum = size_for_full_recharge(
        battery, curtailed_re, unmet, solar_shape,
        boundary_slot=boundary_slot, tolerance_gw=tolerance_gw, max_gw=max_gw,
    )
    maximum = max(maximum, minimum)
    return minimum + extra * (maximum - minimum)


# --- displacement -------------------------------------------------------


@dataclass(frozen=True)
class Displacement:
    """Battery spare throughput turned into fossil displacement."""

    spare_twh: float
    displaced_twh: dict[str, float]
    per_day_mwh: dict[str, np.ndarray]  # calendar-day attribution
    per_cycle_spare_mwh: np.ndarray

    @property
    def displaced_coal_twh(self) -> float:
        return self.displaced_twh.get("coal_2019", 0.0) + self.displaced_twh.get("coal_slack", 0.0)

    @property
    def displaced_gas_twh(self) -> float:
        return self.displaced_twh.get("gas_slack", 0.0)


def displace_with_battery(
    soc: SocTrace,
    dy: DispatchYear,
    prices: Mapping[str, float] | None = None,
) -> Displacement:
    """Spare battery throughput displacing fossil output, cycle by cycle.

    Spare energy per cycle is the conservative minimum of the unused
    discharge depth (the lowest state of charge kept above the floor)
    and the charging the sources could still have provided.  It
    displaces the most expensive displaceable tranche first, energy-
    matched against that tranche's output within the cycle; gas_2019 is
    never touched.  Volumes are attributed to the calendar day each
    cycle starts in.
    """
    prices = dict(DISPLACEABLE_PRICES) if prices is None else {
        k: prices[k] for k in DISPLACEABLE_PRICES if k in prices
    }
    order = sorted(prices, key=prices.get, reverse=True)
    battery = soc.battery
    eta_c = battery.charge_eff
    eta_d = battery.discharge_eff
    n = soc.n_slots
    windows = cycle_windows(n, soc.boundary_slot)
    n_days = n // SLOTS_PER_DAY

    # untapped charging per slot: leftover source up to the unused
    # inverter/1C headroom, in charging-eligible slots only
    leftover = (soc.source_re_mw - soc.charge_re_mw) + (soc.source_solar_mw - soc.charge_solar_mw)
    headroom = np.minimum(battery.inverter_capacity_mw,
                          battery.energy_capacity_mwh) - soc.charge_mw
    can_charge = soc.unmet_mw <= 0
    extra_charge = np.where(can_charge, np.minimum(leftover, np.maximum(headroom, 0.0)), 0.0)

    spare_cycle = np.zeros(len(windows))
    per_day = {name: np.zeros(n_days) for name in order}
    displaced_total = {name: 0.0 for name in order}

    for i, (a, b) in enumerate(windows):
        if soc.cycle_reset or a == 0:
            entry = battery.energy_capacity_mwh
        else:
            entry = float(soc.soc_mwh[a - 1])
        min_soc = min(entry, float(np.min(soc.soc_mwh[a:b])))
        depth_margin = max(min_soc - battery.floor_mwh, 0.0) * eta_d
        charge_margin = float(np.sum(extra_charge[a:b])) * SLOT_HOURS * eta_c * eta_d
        spare = min(depth_margin, charge_margin)
        spare_cycle[i] = spare

        day = min(a // SLOTS_PER_DAY, n_days - 1)
        for name in order:
            if spare <= 0:
                break
            output_mwh = float(np.sum(dy.supply[name][a:b])) * SLOT_HOURS
            take = min(spare, max(output_mwh, 0.0))
            per_day[name][day] += take
            displaced_total[name] += take
            spare -= take

    spare_twh = float(np.sum(spare_cycle)) / 1e6
    displaced_twh = {k: v / 1e6 for k, v in displaced_total.items()}
    return Displacement(
        spare_twh=spare_twh,
        displaced_twh=displaced_twh,
        per_day_mwh=per_day,
        per_cycle_spare_mwh=spare_cycle,
    )


def _lowered_daily_max(coal_day: np.ndarray, displaced_mwh: float) -> float:
    """Water-fill level after shaving displaced energy off the top.

    The day's 48 coal outputs, stacked descending, lose ``displaced``
    MWh from the top; the return value is the resulting new maximum.
    """
    if displaced_mwh <= 0:
        return float(np.max(coal_day))
    desc = np.sort(coal_day)[::-1]
    total = float(np.sum(desc)) * SLOT_HOURS
    if displaced_mwh >= total:
        return 0.0
    # drops[k] = energy removed once the level has sunk to desc[k+1]
    steps = (desc[:-1] - desc[1:]) * np.arange(1, desc.size) * SLOT_HOURS
    drops = np.cumsum(steps)
    k = int(np.searchsorted(drops, displaced_mwh, side="left"))
    removed_above = drops[k - 1] if k > 0 else 0.0
    if k < drops.size:
        start_level = desc[k]
        slots_above = k + 1
    else:
        start_level = desc[-1]
        slots_above = desc.size
    remaining = displaced_mwh - removed_above
    return float(start_level - remaining / (slots_above * SLOT_HOURS))


def coal_peak_bonus(
    dy: DispatchYear,
    coal_displaced_in_day,
    flex_limit: float,
) -> np.ndarray:
    """Avoided flex-induced curtailment per day, in MWh.

    Displaced coal comes off the top of each day's stacked output
    curve, lowering the daily maximum and with it the flexibility
    floor.  The avoided curtailment is what the flex pass would no
    longer have had to curtail at the lower floor, recomputed with the
    same slot arithmetic the flex pass itself uses.
    """
    if dy.flex_re_cut is None or dy.coal_flex_floor is None:
        raise ParameterError("coal_peak_bonus needs a flex-adjusted despatch year")
    displaced = np.asarray(coal_displaced_in_day, dtype=float)
    if displaced.ndim == 0:
        displaced = np.full(dy.n_days, float(displaced))
    if displaced.shape != (dy.n_days,):
        raise ParameterError(
            f"displaced energy has shape {displaced.shape}, want ({dy.n_days},)"
        )

    coal = dy.coal_total()
    days = day_index(dy.n_slots)
    cut = dy.flex_re_cut + dy.flex_hydro_cut
    # pre-flex net demand and absorbable must-run, reconstructed
    n_pre = (
        dy.supply["coal_2019"] + dy.supply["gas_2019"]
        + dy.supply["coal_slack"] + dy.supply["gas_slack"] + dy.unmet - cut
    )
    absorb = dy.supply["re"] + dy.supply["hydro"] + cut
    coal_cap = dy.capacity["coal_2019"] + dy.capacity["coal_slack"]

    bonus = np.zeros(dy.n_days)
    for d in range(dy.n_days):
        sl = slice(d * SLOTS_PER_DAY, (d + 1) * SLOTS_PER_DAY)
        day_disp = min(displaced[d], float(np.sum(coal[sl])) * SLOT_HOURS)
        if day_disp <= 0:
            continue
        new_max = _lowered_daily_max(coal[sl], day_disp)
        new_floor = flex_limit * new_max
        floor_slot = np.minimum.reduce([
            np.full(SLOTS_PER_DAY, new_floor),
            n_pre[sl] + absorb[sl],
            coal_cap[sl],
        ])
        new_cut = np.maximum(floor_slot - n_pre[sl], 0.0)
        avoided = cut[sl] - new_cut
        bonus[d] = float(np.sum(np.maximum(avoided, 0.0))) * SLOT_HOURS
    return bonus


def displace_gas_with_new_coal(new_coal_mw: float, dy: DispatchYear) -> float:
    """Displaced gas_slack energy (TWh) from spare NEW-coal headroom.

    NEW coal runs up into its headroom wherever non-APM gas is still
    generating; coal output only ever rises, so the flexibility floor
    of the combined fleet cannot be violated.
    """
    if new_coal_mw < 0:
        raise ParameterError("new_coal_mw must be >= 0")
    spare = np.maximum(new_coal_mw - dy.supply["new"], 0.0)
    displaced = np.minimum(spare, dy.supply["gas_slack"])
    return float(np.sum(displaced)) * SLOT_HOURS / 1e6


def undersize_residual(
    plan,
    size_fraction: float,
    unmet,
    curtailed_re=None,
    solar_gen=None,
    net_capacity_mw: float | None = None,
    boundary_slot: int = 34,
    assume_full_charging: bool = True,
) -> tuple[float, float]:
    """Secondary unmet when NEW supply is undersized, and its peak MW.

    ``plan`` may be a NewSupplyPlan or a bare BatterySpec (None for
    thermal).  Batteries re-simulate at the reduced size (cycle-reset
    when the daily-full-recharge assumption applies); thermal capacity
    simply truncates slot-wise.  The peak is what a biodiesel backstop
    must be able to serve.
    """
    if not 0.0 < size_fraction <= 1.0:
        raise ParameterError("size_fraction must lie in (0, 1]")
    battery = plan.battery if isinstance(plan, NewSupplyPlan) else plan
    unmet = np.asarray(unmet, dtype=float)
    if battery is not None:
        scaled = battery.scaled(size_fraction)
        trace = simulate_soc(
            scaled, unmet, curtailed_re, solar_gen,
            boundary_slot=boundary_slot, cycle_reset=assume_full_charging,
        )
        secondary = trace.secondary_unmet_mw
    else:
        if net_capacity_mw is None:
            raise ParameterError("thermal undersizing needs net_capacity_mw")
        secondary = np.maximum(unmet - net_capacity_mw * size_fraction, 0.0)
    twh = float(np.sum(secondary)) * SLOT_HOURS / 1e6
    peak = float(np.max(secondary)) if secondary.size else 0.0
    return twh, peak
