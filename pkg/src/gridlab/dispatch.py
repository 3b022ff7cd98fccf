"""Half-hourly despatch: net demand, tranche merit order, coal flex floors.

The despatch stack serves net demand (after must-run RE, hydro and
nuclear) from four existing-fleet tranches in a fixed order:
``coal_2019``, ``gas_2019``, ``coal_slack``, ``gas_slack``.  The first
two represent utilisation up to the observed base-year pattern, the
slack tranches the headroom above it.  A daily coal flexibility floor
then raises coal in low-net-demand slots, pushing out must-run supply
as curtailment.  A grid-buffer check and a ramp audit run post facto.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from gridlab.errors import DataIntegrityError, ParameterError
from gridlab.shapes import SLOTS_PER_DAY, SLOT_HOURS, HalfHourlySeries, slots_in_year

#: Fixed merit order of the existing-fleet tranches.
TRANCHES = ("coal_2019", "gas_2019", "coal_slack", "gas_slack")

#: Every supply key a fully assembled despatch year carries.
SUPPLY_KEYS = ("re", "hydro", "nuclear") + TRANCHES + ("new",)

#: Ramp-rate class edges in percent of nominal capacity per minute.
RAMP_CLASSES = ("<=0.5", "0.5-1", "1-2", ">2")

_TOL = 1e-6


def day_index(n_slots: int) -> np.ndarray:
    """Day ordinal for each slot of a 48-slot-per-day series."""
    if n_slots % SLOTS_PER_DAY:
        raise ParameterError(f"{n_slots} slots is not a whole number of days")
    return np.repeat(np.arange(n_slots // SLOTS_PER_DAY), SLOTS_PER_DAY)


def _values(series) -> np.ndarray:
    """Accept a half-hourly series or any array-like of MW values.

    Full-year series are the normal case; despatch arithmetic is
    length-agnostic, which keeps small hand-built instances cheap.
    """
    if isinstance(series, HalfHourlySeries):
        return series.values
    return np.atleast_1d(np.asarray(series, dtype=float))


def _wrap(year: int, values: np.ndarray, label: str):
    """Return a HalfHourlySeries when the length matches the year."""
    try:
        if values.shape[0] == slots_in_year(year):
            return HalfHourlySeries(year, values, label=label)
    except Exception:
        pass
    return values


@dataclass
class DispatchYear:
    """One year of slot-level despatch.

    ``demand`` is whatever the stack was asked to balance: net demand
    for a partial result straight out of merit_dispatch, full busbar
    demand once must-run supplies are attached.  The conservation
    invariant sum(supply) + unmet == demand holds in both states.
    """

    year: int
    demand: np.ndarray
    supply: dict[str, np.ndarray]
    capacity: dict[str, np.ndarray]
    curtailment: np.ndarray
    unmet: np.ndarray
    coal_daily_max: np.ndarray | None = None
    coal_flex_floor: np.ndarray | None = None
    flex_re_cut: np.ndarray | None = None
    flex_hydro_cut: np.ndarray | None = None
    relaxed_slots: int = 0

    @property
    def n_slots(self) -> int:
        return self.demand.shape[0]

    @property
    def n_days(self) -> int:
        return self.n_slots // SLOTS_PER_DAY

    def coal_total(self) -> np.ndarray:
        return self.supply["coal_2019"] + self.supply["coal_slack"]

    def gas_total(self) -> np.ndarray:
        return self.supply["gas_2019"] + self.supply["gas_slack"]

    def energy_twh(self, key: str) -> float:
        return float(np.sum(self.supply[key])) * SLOT_HOURS / 1e6

    def curtailment_twh(self) -> float:
        return float(np.sum(self.curtailment)) * SLOT_HOURS / 1e6

    def unmet_twh(self) -> float:
        return float(np.sum(self.unmet)) * SLOT_HOURS / 1e6

    def peak_unmet_mw(self) -> float:
        return float(np.max(self.unmet)) if self.n_slots else 0.0

    def check_balance(self, tolerance: float = _TOL) -> None:
        total = sum(self.supply.values()) + self.unmet
        worst = float(np.max(np.abs(total - self.demand))) if self.n_slots else 0.0
        if worst > tolerance:
            raise DataIntegrityError(
                f"despatch imbalance of {worst:.3e} MW exceeds {tolerance:.1e}"
            )

    def copy(self) -> "DispatchYear":
        return DispatchYear(
            year=self.year,
            demand=self.demand.copy(),
            supply={k: v.copy() for k, v in self.supply.items()},
            capacity={k: v.copy() for k, v in self.capacity.items()},
            curtailment=self.curtailment.copy(),
            unmet=self.unmet.copy(),
            coal_daily_max=None if self.coal_daily_max is None else self.coal_daily_max.copy(),
            coal_flex_floor=None if self.coal_flex_floor is None else self.coal_flex_floor.copy(),
            flex_re_cut=None if self.flex_re_cut is None else self.flex_re_cut.copy(),
            flex_hydro_cut=None if self.flex_hydro_cut is None else self.flex_hydro_cut.copy(),
            relaxed_slots=self.relaxed_slots,
        )


@dataclass(frozen=True)
class BufferReport:
    """Slot-level headroom audit against the grid capacity buffer."""

    headroom: np.ndarray
    requirement: np.ndarray
    shortfall: np.ndarray

    @property
    def worst_shortfall_mw(self) -> float:
        return float(np.max(self.shortfall)) if self.shortfall.size else 0.0


def net_demand(demand, re, hydro, nuclear):
    """Net demand after must-run supply, and the interim curtailment.

    Must-run output beyond demand cannot be absorbed and comes back as
    curtailment, reported as a single series.  Full-year inputs return
    HalfHourlySeries; bare arrays come back as arrays.
    """
    d, r, h, n = (_values(x) for x in (demand, re, hydro, nuclear))
    if len({a.shape[0] for a in (d, r, h, n)}) != 1:
        raise ParameterError("net_demand inputs must have equal lengths")
    must_run = r + h + n
    net = np.maximum(d - must_run, 0.0)
    curtailed = np.maximum(must_run - d, 0.0)
    year = getattr(demand, "year", 0)
    return (
        _wrap(year, net, "net_demand"),
        _wrap(year, curtailed, "curtailment"),
    )


def split_must_run(demand, re, hydro, nuclear) -> dict[str, np.ndarray]:
    """Per-source must-run supply after netting, curtailing RE first.

    Surplus beyond demand is taken out of RE, then hydro, then nuclear,
    so the returned supplies always sum to min(demand, must-run total).
    """
    d, r, h, n = (_values(x) for x in (demand, re, hydro, nuclear))
    surplus = np.maximum(r + h + n - d, 0.0)
    re_cut = np.minimum(surplus, r)
    hydro_cut = np.minimum(surplus - re_cut, h)
    nuclear_cut = surplus - re_cut - hydro_cut
    return {
        "re": r - re_cut,
        "hydro": h - hydro_cut,
        "nuclear": n - nuclear_cut,
    }


def _as_capacity(values, n_slots: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n_slots, float(arr))
    if arr.shape != (n_slots,):
        raise ParameterError(f"capacity for {name!r} has shape {arr.shape}, want ({n_slots},)")
    if np.any(arr < 0):
        raise ParameterError(f"capacity for {name!r} has negative entries")
    return arr


def merit_dispatch(net, tranches: Sequence[tuple[str, object]]) -> DispatchYear:
    """Greedy fill of net demand through the tranche stack, in order.

    Each tranche serves what remains of the slot's net demand, up to
    its own per-slot capacity; anything left after the last tranche is
    unmet.  The result is partial: must-run supplies are all zero and
    ``demand`` is the net series.
    """
    n = _values(net)
    n_slots = n.shape[0]
    supply: dict[str, np.ndarray] = {k: np.zeros(n_slots) for k in ("re", "hydro", "nuclear")}
    capacity: dict[str, np.ndarray] = {}
    remaining = n.copy()
    for name, cap in tranches:
        cap = _as_capacity(cap, n_slots, name)
        take = np.minimum(remaining, cap)
        supply[name] = take
        capacity[name] = cap
        remaining -= take
    supply["new"] = np.zeros(n_slots)
    return DispatchYear(
        year=getattr(net, "year", 0),
        demand=n.copy(),
        supply=supply,
        capacity=capacity,
        curtailment=np.zeros(n_slots),
        unmet=remaining,
    )


def attach_must_run(
    dy: DispatchYear,
    must_run: Mapping[str, np.ndarray],
    interim_curtailment: np.ndarray,
) -> DispatchYear:
    """Fold must-run supplies into a partial despatch result.

    ``demand`` becomes the full busbar demand (net + must-run served),
    keeping the conservation invariant intact.
    """
    out = dy.copy()
    for key in ("re", "hydro", "nuclear"):
        out.supply[key] = np.asarray(must_run[key], dtype=float).copy()
        out.demand = out.demand + out.supply[key]
    out.curtailment = out.curtailment + interim_curtailment
    return out


def apply_coal_flex(
    dy: DispatchYear,
    flex_limit: float,
    re_available: HalfHourlySeries | None = None,
    floor_day: np.ndarray | None = None,
) -> DispatchYear:
    """Enforce the daily coal flexibility floor by re-despatch.

    The floor for each day is ``flex_limit`` times that day's pre-flex
    maximum total coal output.  Slots already at or above the floor are
    untouched.  Below it, coal is raised to the floor (coal_2019 ahead
    of coal_slack) and the slot re-despatched: demand beyond the floor
    refills through gas_2019, remaining coal_slack headroom, then
    gas_slack; supply pushed out by the raise is curtailed from RE
    first, then hydro.  Where even full absorption of RE and hydro
    cannot carry the floor, it relaxes to the feasible level and the
    slot is counted in ``relaxed_slots``.

    An explicit ``floor_day`` (MW per day) replaces the default
    flex_limit * daily-max floors; displacement accounting uses this to
    replay the pass against a lowered coal ceiling.

    One pass suffices: floors come from pre-flex maxima and raising
    minima never changes a day's maximum.
    """
    if not 0.0 <= flex_limit < 1.0:
        raise ParameterError(f"flex_limit {flex_limit} outside [0, 1)")
    out = dy.copy()
    n_slots = out.n_slots
    days = day_index(n_slots)

    coal_pre = out.coal_total()
    daily_max = np.zeros(out.n_days)
    np.maximum.at(daily_max, days, coal_pre)
    if floor_day is None:
        floor_day = flex_limit * daily_max
    else:
        floor_day = np.asarray(floor_day, dtype=float)
        if floor_day.shape != (out.n_days,):
            raise ParameterError(
                f"floor_day has shape {floor_day.shape}, want ({out.n_days},)"
            )

    cap1 = out.capacity["coal_2019"]
    cap2 = out.capacity["gas_2019"]
    cap3 = out.capacity["coal_slack"]
    cap4 = out.capacity["gas_slack"]

    net = (
        out.supply["coal_2019"] + out.supply["gas_2019"]
        + out.supply["coal_slack"] + out.supply["gas_slack"] + out.unmet
    )
    absorb_re = out.supply["re"]
    if re_available is not None:
        absorb_re = np.minimum(absorb_re, _values(re_available))
    absorb_hydro = out.supply["hydro"]
    floor_slot = np.minimum.reduce(
        [np.broadcast_to(floor_day[days], net.shape), net + absorb_re + absorb_hydro, cap1 + cap3]
    )

    binding = coal_pre < floor_slot - _TOL
    relaxed = int(np.sum((coal_pre < floor_day[days] - _TOL) & (floor_slot < floor_day[days] - _TOL)))

    target = np.maximum(net, floor_slot)
    x1 = np.minimum(cap1, target)
    forced_slack = np.maximum(floor_slot - x1, 0.0)
    rest = target - x1 - forced_slack
    x2 = np.minimum(cap2, np.maximum(rest, 0.0))
    rest -= x2
    x3 = forced_slack + np.minimum(np.maximum(cap3 - forced_slack, 0.0), np.maximum(rest, 0.0))
    rest = target - x1 - x2 - x3
    x4 = np.minimum(cap4, np.maximum(rest, 0.0))
    unmet_new = np.maximum(target - x1 - x2 - x3 - x4, 0.0)

    pushed_out = np.maximum(floor_slot - net, 0.0)
    re_cut = np.minimum(pushed_out, absorb_re)
    hydro_cut = pushed_out - re_cut

    for key, new_vals in (
        ("coal_2019", x1), ("gas_2019", x2), ("coal_slack", x3), ("gas_slack", x4),
    ):
        out.supply[key] = np.where(binding, new_vals, out.supply[key])
    out.unmet = np.where(binding, unmet_new, out.unmet)
    re_cut = np.where(binding, re_cut, 0.0)
    hydro_cut = np.where(binding, hydro_cut, 0.0)
    out.supply["re"] = out.supply["re"] - re_cut
    out.supply["hydro"] = out.supply["hydro"] - hydro_cut
    out.curtailment = out.curtailment + re_cut + hydro_cut

    out.coal_daily_max = daily_max
    out.coal_flex_floor = floor_day
    out.flex_re_cut = re_cut
    out.flex_hydro_cut = hydro_cut
    out.relaxed_slots = relaxed
    return out


def buffer_check(
    dy: DispatchYear,
    demand,
    despatchable_capacity,
    grid_buffer: float,
) -> BufferReport:
    """Audit despatchable headroom against the required buffer.

    Headroom is despatchable capacity (everything but variable RE)
    minus despatchable output; the requirement scales with demand.
    """
    if grid_buffer < 0:
        raise ParameterError("grid_buffer must be >= 0")
    cap = _as_capacity(despatchable_capacity, dy.n_slots, "despatchable")
    output = (
        dy.coal_total() + dy.gas_total()
        + dy.supply["hydro"] + dy.supply["nuclear"] + dy.supply["new"]
    )
    headroom = cap - output
    requirement = grid_buffer * _values(demand)
    shortfall = np.maximum(requirement - headroom, 0.0)
    return BufferReport(headroom=headroom, requirement=requirement, shortfall=shortfall)


def ramp_audit(dy: DispatchYear, nominal_coal_in_operation) -> dict[str, int]:
    """Histogram of half-hourly coal ramp rates, in % of nominal per minute.

    Each slot pair is classed by |delta coal| over 30 minutes against
    the nominal coal in operation on the day being ramped into.  Purely
    diagnostic; despatch is never constrained by it.
    """
    nominal = np.asarray(nominal_coal_in_operation, dtype=float)
    if nominal.shape != (dy.n_days,):
        raise ParameterError(
            f"nominal coal per day has shape {nominal.shape}, want ({dy.n_days},)"
        )
    coal = dy.coal_total()
    days = day_index(dy.n_slots)
    pair_day = days[1:]
    nom = nominal[pair_day]
    delta = np.abs(np.diff(coal))
    bad = (nom <= 0) & (np.maximum(coal[1:], coal[:-1]) > 0)
    if np.any(bad):
        raise DataIntegrityError(
            "coal ran on a day with zero nominal coal in operation"
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        pct_per_min = np.where(nom > 0, delta / (30.0 * nom) * 100.0, 0.0)
    counts = {
        "<=0.5": int(np.sum(pct_per_min <= 0.5)),
        "0.5-1": int(np.sum((pct_per_min > 0.5) & (pct_per_min <= 1.0))),
        "1-2": int(np.sum((pct_per_min > 1.0) & (pct_per_min <= 2.0))),
        ">2": int(np.sum(pct_per_min > 2.0)),
    }
    return counts


def compute_unmet(
    dy: DispatchYear, buffer: BufferReport
) -> tuple[HalfHourlySeries, float]:
    """Unmet-energy series and the year's capacity requirement.

    The capacity requirement is the worst slot of unmet demand plus
    buffer shortfall; it is what any new supply must be able to serve.
    """
    unmet = _wrap(dy.year, dy.unmet.copy(), "unmet")
    requirement = float(np.max(dy.unmet + buffer.shortfall)) if dy.n_slots else 0.0
    return unmet, requirement


def to_csv(dy: DispatchYear, path) -> None:
    """One row per slot with demand, every supply key, curtailment, unmet."""
    keys = [k for k in SUPPLY_KEYS if k in dy.supply]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot", "demand_mw", *[f"{k}_mw" for k in keys],
                         "curtailment_mw", "unmet_mw"])
        for s in range(dy.n_slots):
            writer.writerow(
                [s, f"{dy.demand[s]:.3f}"]
                + [f"{dy.supply[k][s]:.3f}" for k in keys]
                + [f"{dy.curtailment[s]:.3f}", f"{dy.unmet[s]:.3f}"]
            )


def load_duration_curve(values: Iterable[float]) -> np.ndarray:
    """Slot values sorted descending, the standard duration-curve form."""
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
    return np.sort(arr)[::-1]


def duration_curve_csv(values, path, column: str = "unmet_mw") -> None:
    curve = load_duration_curve(values)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", column])
        for i, v in enumerate(curve):
            writer.writerow([i, f"{v:.3f}"])
