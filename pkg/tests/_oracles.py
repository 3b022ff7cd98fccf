"""Slow, independent reference computations for cross-checking fast paths.

Everything in here favours obviousness over speed: literal recursions,
bisection instead of closed forms, and an LP solver instead of the
greedy merit stack.
"""

import numpy as np
from scipy.optimize import linprog

from gridlab.dispatch import (
    TRANCHES,
    apply_coal_flex,
    attach_must_run,
    merit_dispatch,
    net_demand,
    split_must_run,
)
from gridlab.shapes import SLOTS_PER_DAY, SLOT_HOURS

UNMET_PRICE = 1.0e5  # Rs/kWh-scale penalty, far above any fuel


def random_flex_instance(rng, n_slots=SLOTS_PER_DAY):
    """A random despatch instance with strictly increasing tranche prices."""
    n = n_slots
    caps = {
        "coal_2019": rng.uniform(20.0, 70.0, n),
        "gas_2019": rng.uniform(5.0, 25.0, n),
        "coal_slack": rng.uniform(0.0, 40.0, n),
        "gas_slack": rng.uniform(0.0, 20.0, n),
    }
    prices = dict(zip(TRANCHES, np.sort(rng.uniform(2.0, 8.0, 4)) + np.arange(4) * 0.05))
    demand = rng.uniform(10.0, 200.0, n)
    re = rng.uniform(0.0, 60.0, n)
    hydro = rng.uniform(0.0, 15.0, n)
    nuclear = rng.uniform(0.0, 5.0, n)
    flex = rng.uniform(0.5, 0.8)
    return demand, re, hydro, nuclear, caps, prices, flex


def model_flex_dispatch(demand, re, hydro, nuclear, caps, flex):
    """The production path: net, merit order, must-run attach, flex floor."""
    net, interim = net_demand(demand, re, hydro, nuclear)
    must = split_must_run(demand, re, hydro, nuclear)
    pre = merit_dispatch(net, [(k, caps[k]) for k in TRANCHES])
    pre = attach_must_run(pre, must, interim)
    return pre, apply_coal_flex(pre, flex)


def dispatch_cost(dy, prices, unmet_price=UNMET_PRICE):
    cost = sum(float(np.sum(dy.supply[k])) * prices[k] for k in TRANCHES)
    return (cost + float(np.sum(dy.unmet)) * unmet_price) * SLOT_HOURS


def effective_floor(dy_pre):
    """Per-slot coal floor inputs implied by a pre-flex despatch."""
    net = sum(dy_pre.supply[k] for k in TRANCHES) + dy_pre.unmet
    absorb = dy_pre.supply["re"] + dy_pre.supply["hydro"]
    coal_cap = dy_pre.capacity["coal_2019"] + dy_pre.capacity["coal_slack"]
    coal_pre = dy_pre.coal_total()
    day_max = coal_pre.reshape(-1, SLOTS_PER_DAY).max(axis=1)
    return net, absorb, coal_cap, day_max


def lp_flex_cost(dy_pre, prices, flex, unmet_price=UNMET_PRICE):
    """Least-cost despatch honouring the same per-slot coal floor.

    Variables per slot: the four tranche outputs, unmet demand, and
    pushed-out must-run (free to curtail, bounded by what RE and hydro
    are supplying).  One block LP over the whole instance.
    """
    net, absorb, coal_cap, day_max = effective_floor(dy_pre)
    floor_day = np.repeat(flex * day_max, SLOTS_PER_DAY)
    floor_slot = np.minimum.reduce([floor_day, net + absorb, coal_cap])

    n = net.shape[0]
    c = np.concatenate([
        np.full(n, prices["coal_2019"]),
        np.full(n, prices["gas_2019"]),
        np.full(n, prices["coal_slack"]),
        np.full(n, prices["gas_slack"]),
        np.full(n, unmet_price),
        np.zeros(n),
    ]) * SLOT_HOURS
    eye = np.eye(n)
    zero = np.zeros((n, n))
    # balance: x1 + x2 + x3 + x4 + unmet - pushed == net
    a_eq = np.hstack([eye, eye, eye, eye, eye, -eye])
    # floor: x1 + x3 >= floor_slot
    a_ub = np.hstack([-eye, zero, -eye, zero, zero, zero])
    bounds = (
        [(0.0, caps) for caps in dy_pre.capacity["coal_2019"]]
        + [(0.0, caps) for caps in dy_pre.capacity["gas_2019"]]
        + [(0.0, caps) for caps in dy_pre.capacity["coal_slack"]]
        + [(0.0, caps) for caps in dy_pre.capacity["gas_slack"]]
        + [(0.0, None)] * n
        + [(0.0, float(a)) for a in absorb]
    )
    res = linprog(c, A_ub=a_ub, b_ub=-floor_slot, A_eq=a_eq, b_eq=net,
                  bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    return float(res.fun)


def reference_soc(battery, unmet, re_src, solar_src):
    """Literal slot-by-slot transcription of the battery state machine.

    Returns an array with columns soc, charge, discharge, served,
    charge_re, charge_solar.
    """
    e_cap = battery.energy_capacity_mwh
    soc = e_cap
    floor = battery.floor_mwh
    rows = []
    for u, r, s in zip(unmet, re_src, solar_src):
        if u > 0:
            want = min(u / battery.discharge_eff, battery.inverter_capacity_mw)
            avail = max(soc - floor, 0.0) / SLOT_HOURS
            served = min(want, avail) * battery.discharge_eff
            soc -= want * SLOT_HOURS
            rows.append((soc, 0.0, want, served, 0.0, 0.0))
        else:
            head = max(e_cap - soc, 0.0) / (battery.charge_eff * SLOT_HOURS)
            cap = min(battery.inverter_capacity_mw, e_cap, head)
            take_re = min(r, cap)
            take_sol = min(s, cap - take_re)
            soc += (take_re + take_sol) * battery.charge_eff * SLOT_HOURS
            rows.append((soc, take_re + take_sol, 0.0, 0.0, take_re, take_sol))
    return np.array(rows)


def shaved_level(day, energy_mwh):
    """Bisect the coal level that shaves ``energy_mwh`` off the day's top."""
    if energy_mwh <= 0:
        return float(day.max())
    if energy_mwh >= float(day.sum()) * SLOT_HOURS:
        return 0.0
    lo, hi = 0.0, float(day.max())
    for _ in range(150):
        mid = 0.5 * (lo + hi)
        removed = float(np.maximum(day - mid, 0.0).sum()) * SLOT_HOURS
        if removed > energy_mwh:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def brute_force_bonus(dy_pre, dy_flexed, displaced_mwh, flex):
    """Avoided curtailment per day by literally re-running the flex pass.

    The displaced energy is shaved off the top of each day's post-flex
    coal curve (bisected water-fill), the daily floor recomputed from
    the lowered maximum, and the flex re-despatch repeated against the
    pre-flex state with that floor.
    """
    coal = dy_flexed.coal_total()
    n_days = dy_flexed.n_days
    new_floor = np.empty(n_days)
    for d in range(n_days):
        day = coal[d * SLOTS_PER_DAY:(d + 1) * SLOTS_PER_DAY]
        shaved = min(float(displaced_mwh[d]), float(day.sum()) * SLOT_HOURS)
        new_floor[d] = flex * shaved_level(day, shaved)
    rerun = apply_coal_flex(dy_pre, flex, floor_day=new_floor)
    old_cut = dy_flexed.flex_re_cut + dy_flexed.flex_hydro_cut
    new_cut = rerun.flex_re_cut + rerun.flex_hydro_cut
    per_day = (old_cut - new_cut).reshape(n_days, SLOTS_PER_DAY).sum(axis=1)
    return per_day * SLOT_HOURS
