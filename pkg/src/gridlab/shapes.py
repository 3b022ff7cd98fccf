"""Half-hourly timeseries: loading, cleaning, and per-MW shapes.

Everything downstream despatches against half-hourly (30-minute) series
covering one calendar year: 17,520 slots normally, 17,568 in a leap
year.  This module owns the slot arithmetic, the base-year CSV loader
with its gap bookkeeping, the cleaning rules (interpolation, nearest
clean day, RE energy correction), CUF rescaling for per-MW shapes, and
a deterministic synthetic generator for self-contained runs.
"""

from __future__ import annotations

import calendar
import csv
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from gridlab.errors import (
    CadenceError,
    DataIntegrityError,
    DegenerateShapeError,
    InfeasibleError,
    ParameterError,
    TimeseriesParseError,
)

SLOTS_PER_DAY = 48
SLOT_HOURS = 0.5

#: column order of the base-year timeseries CSV
TIMESERIES_COLUMNS = (
    "timestamp",
    "demand_mw",
    "coal_mw",
    "gas_mw",
    "hydro_mw",
    "nuclear_mw",
    "re_mw",
)

#: fuels carried in BaseYearData.supply_by_fuel, in column order
FUELS = ("coal", "gas", "hydro", "nuclear", "re")


def days_in_year(year: int) -> int:
    return 366 if calendar.isleap(year) else 365


def slots_in_year(year: int) -> int:
    return SLOTS_PER_DAY * days_in_year(year)


def map_values_to_year(values: np.ndarray, from_year: int, to_year: int) -> np.ndarray:
    """Map a year-long slot array onto another year's slot grid.

    Years of equal length copy through.  A non-leap source mapped onto a
    leap year repeats 28 February as 29 February; a leap source mapped
    onto a non-leap year drops 29 February.  Day-of-year alignment is
    otherwise preserved.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (slots_in_year(from_year),):
        raise ParameterError(
            f"expected {slots_in_year(from_year)} slots for {from_year}, "
            f"got {values.shape}"
        )
    if days_in_year(from_year) == days_in_year(to_year):
        return values.copy()
    days = values.reshape(days_in_year(from_year), SLOTS_PER_DAY)
    feb29 = 59  # zero-based day-of-year of 29 February
    if days_in_year(to_year) == 366:
        out = np.vstack([days[:feb29], days[feb29 - 1 : feb29], days[feb29:]])
    else:
        out = np.vstack([days[:feb29], days[feb29 + 1 :]])
    return out.reshape(-1)


def _gap_runs(mask: np.ndarray) -> tuple[tuple[int, int], ...]:
    """Contiguous True runs of ``mask`` as half-open (start, stop) pairs."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return ()
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([idx[0]], idx[breaks + 1]))
    stops = np.concatenate((idx[breaks] + 1, [idx[-1] + 1]))
    return tuple((int(a), int(b)) for a, b in zip(starts, stops))


@dataclass(frozen=True)
class HalfHourlySeries:
    """One year of half-hourly MW values.

    Gaps (NaN) are permitted on freshly loaded data and are gone after
    cleaning.  Negative or infinite values are never allowed.
    """

    year: int
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        n = slots_in_year(self.year)
        if vals.shape != (n,):
            raise ParameterError(
                f"series '{self.label}' for {self.year} needs {n} slots, "
                f"got shape {vals.shape}"
            )
        if np.any(np.isinf(vals)):
            raise ParameterError(f"series '{self.label}' contains infinities")
        if np.any(vals[~np.isnan(vals)] < 0):
            raise ParameterError(f"series '{self.label}' contains negative MW")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def n_slots(self) -> int:
        return self.values.shape[0]

    @property
    def has_gaps(self) -> bool:
        return bool(np.any(np.isnan(self.values)))

    def gap_runs(self) -> tuple[tuple[int, int], ...]:
        return _gap_runs(np.isnan(self.values))

    def energy_gwh(self) -> float:
        """Annual energy in GWh, ignoring gaps."""
        return float(np.nansum(self.values)) * SLOT_HOURS / 1e3

    def energy_twh(self) -> float:
        return self.energy_gwh() / 1e3

    def to_year(self, year: int) -> "HalfHourlySeries":
        """Same shape mapped onto another year's slot grid (leap aware)."""
        return HalfHourlySeries(
            year=year,
            values=map_values_to_year(self.values, self.year, year),
            label=self.label,
        )


@dataclass(frozen=True)
class BaseYearData:
    """Cleaned (or raw, straight from the loader) base-year observations."""

    year: int
    demand: HalfHourlySeries
    supply_by_fuel: dict[str, HalfHourlySeries]
    re_correction_factor: float = 1.0
    gaps: dict[str, tuple[tuple[int, int], ...]] = field(default_factory=dict)

    def __post_init__(self):
        missing = set(FUELS) - set(self.supply_by_fuel)
        if missing:
            raise ParameterError(f"supply_by_fuel missing {sorted(missing)}")
        for name, series in self.supply_by_fuel.items():
            if series.year != self.year:
                raise ParameterError(f"fuel '{name}' is for {series.year}, not {self.year}")

    @property
    def n_slots(self) -> int:
        return self.demand.n_slots

    def supply_residual(self) -> np.ndarray:
        """Relative per-slot gap between summed fuel supply and demand.

        Diagnostic only: historical data never balances exactly and the
        model does not require it to.
        """
        total = np.zeros(self.n_slots)
        for series in self.supply_by_fuel.values():
            total += np.nan_to_num(series.values)
        demand = np.nan_to_num(self.demand.values)
        denom = np.where(demand > 0, demand, 1.0)
        return (total - demand) / denom

    def balance_ok(self, tolerance: float = 0.02) -> bool:
        return bool(np.all(np.abs(self.supply_residual()) <= tolerance))


@dataclass(frozen=True)
class PerMwShape:
    """Per-MW output shape: one year of slot fractions in [0, 1]."""

    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise ParameterError("shape values must be a non-empty 1-D array")
        if not np.all(np.isfinite(vals)):
            raise ParameterError(f"shape '{self.label}' has non-finite values")
        if vals.min() < 0 or vals.max() > 1 + 1e-12:
            raise ParameterError(f"shape '{self.label}' values must lie in [0, 1]")
        vals = np.clip(vals, 0.0, 1.0)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def achieved_cuf(self) -> float:
        return float(self.values.mean())


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------


def _parse_slot(stamp: str, year: int, line: int) -> int:
    try:
        ts = datetime.fromisoformat(stamp)
    except ValueError as exc:
        raise TimeseriesParseError(f"bad timestamp {stamp!r}: {exc}", line) from None
    if ts.year != year:
        raise TimeseriesParseError(f"timestamp {stamp!r} outside year {year}", line)
    if ts.minute not in (0, 30) or ts.second or ts.microsecond:
        raise CadenceError(f"line {line}: timestamp {stamp!r} is not on a 30-minute grid")
    day = ts.timetuple().tm_yday - 1
    return day * SLOTS_PER_DAY + ts.hour * 2 + ts.minute // 30


def load_timeseries_csv(path: str | Path, year: int) -> BaseYearData:
    """Load the base-year CSV into a raw (gap-bearing) BaseYearData.

    The file must carry the exact header
    ``timestamp,demand_mw,coal_mw,gas_mw,hydro_mw,nuclear_mw,re_mw`` with
    ISO-8601 timestamps at a strict 30-minute cadence.  Missing rows and
    empty cells become recorded gaps; negative or unparseable values
    raise :class:`TimeseriesParseError` with the offending line; more
    than 5% of rows absent raises :class:`DataIntegrityError`.
    """
    path = Path(path)
    n = slots_in_year(year)
    columns = {name: np.full(n, np.nan) for name in TIMESERIES_COLUMNS[1:]}
    seen = np.zeros(n, dtype=bool)

    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataIntegrityError(f"{path}: empty file") from None
        if [h.strip() for h in header] != list(TIMESERIES_COLUMNS):
            raise TimeseriesParseError(
                f"unexpected header {header!r}; expected {','.join(TIMESERIES_COLUMNS)}",
                line=1,
            )
        prev_slot = -1
        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(TIMESERIES_COLUMNS):
                raise TimeseriesParseError(
                    f"expected {len(TIMESERIES_COLUMNS)} fields, got {len(row)}", line
                )
            slot = _parse_slot(row[0].strip(), year, line)
            if slot <= prev_slot:
                raise CadenceError(
                    f"line {line}: timestamp {row[0]!r} does not advance the 30-minute grid"
                )
            prev_slot = slot
            seen[slot] = True
            for name, cell in zip(TIMESERIES_COLUMNS[1:], row[1:]):
                cell = cell.strip()
                if not cell:
                    continue  # gap
                try:
                    value = float(cell)
                except ValueError:
                    raise TimeseriesParseError(
                        f"bad value {cell!r} in column {name}", line
                    ) from None
                if math.isnan(value) or math.isinf(value):
                    raise TimeseriesParseError(f"non-finite value in column {name}", line)
                if value < 0:
                    raise TimeseriesParseError(
                        f"negative MW ({value}) in column {name}", line
                    )
                columns[name][slot] = value

    missing_rows = int(n - seen.sum())
    if missing_rows > 0.05 * n:
        raise DataIntegrityError(
            f"{path}: {missing_rows} of {n} rows missing ({missing_rows / n:.1%} > 5%)"
        )

    gaps = {
        name.removesuffix("_mw"): _gap_runs(np.isnan(values))
        for name, values in columns.items()
    }
    return BaseYearData(
        year=year,
        demand=HalfHourlySeries(year, columns["demand_mw"], "demand"),
        supply_by_fuel={
            fuel: HalfHourlySeries(year, columns[f"{fuel}_mw"], fuel) for fuel in FUELS
        },
        gaps={k: v for k, v in gaps.items() if v},
    )


def load_shape_csv(path: str | Path) -> PerMwShape:
    """Load a per-MW shape CSV with header ``slot,fraction``."""
    path = Path(path)
    fractions: list[float] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["slot", "fraction"]:
            raise TimeseriesParseError(f"unexpected header {header!r}; expected slot,fraction", 1)
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                slot = int(row[0])
                frac = float(row[1])
            except (ValueError, IndexError):
                raise TimeseriesParseError(f"bad shape row {row!r}", line) from None
            if slot != len(fractions):
                raise CadenceError(f"line {line}: slot {slot} out of order")
            if not 0.0 <= frac <= 1.0:
                raise TimeseriesParseError(f"fraction {frac} outside [0, 1]", line)
            fractions.append(frac)
    if not fractions:
        raise DataIntegrityError(f"{path}: no shape rows")
    return PerMwShape(np.array(fractions), label=path.stem)


# ---------------------------------------------------------------------------
# cleaning
# ---------------------------------------------------------------------------


def _fill_gaps(values: np.ndarray, max_gap_slots: int, label: str) -> np.ndarray:
    out = values.copy()
    mask = np.isnan(out)
    if not mask.any():
        return out
    if mask.all():
        raise DataIntegrityError(f"series '{label}' has no usable values")
    n = out.shape[0]
    for start, stop in _gap_runs(mask):
        length = stop - start
        if length <= max_gap_slots and start > 0 and stop < n:
            left, right = out[start - 1], out[stop]
            if not (np.isnan(left) or np.isnan(right)):
                steps = np.arange(1, length + 1) / (length + 1)
                out[start:stop] = left + (right - left) * steps
                continue
        # long gap (or gap at a boundary): copy the same slot-of-day from
        # the nearest day that has it, preferring the earlier day on ties
        for s in range(start, stop):
            day, sod = divmod(s, SLOTS_PER_DAY)
            n_days = n // SLOTS_PER_DAY
            filled = False
            for dist in range(1, n_days):
                for other in (day - dist, day + dist):
                    if 0 <= other < n_days:
                        candidate = values[other * SLOTS_PER_DAY + sod]
                        if not np.isnan(candidate):
                            out[s] = candidate
                            filled = True
                            break
                if filled:
                    break
            if not filled:
                raise DataIntegrityError(
                    f"series '{label}': slot {sod} of day is missing on every day"
                )
    return out


def clean_series(
    raw: BaseYearData,
    max_gap_slots: int = 4,
    re_annual_target: float | None = None,
) -> BaseYearData:
    """Fill gaps and apply the RE energy correction.

    Gaps of up to ``max_gap_slots`` slots are linearly interpolated;
    longer gaps copy the same slot from the nearest clean day.  When
    ``re_annual_target`` (GWh) is given, the RE series is multiplied by
    a single scalar so its annual energy matches the target exactly.
    """
    if max_gap_slots < 0:
        raise ParameterError("max_gap_slots must be >= 0")
    if re_annual_target is not None and re_annual_target <= 0:
        raise ParameterError(f"re_annual_target must be positive, got {re_annual_target}")

    demand = HalfHourlySeries(
        raw.year, _fill_gaps(raw.demand.values, max_gap_slots, "demand"), "demand"
    )
    supply: dict[str, HalfHourlySeries] = {}
    for fuel in FUELS:
        series = raw.supply_by_fuel[fuel]
        supply[fuel] = HalfHourlySeries(
            raw.year, _fill_gaps(series.values, max_gap_slots, fuel), fuel
        )

    factor = 1.0
    if re_annual_target is not None:
        current = supply["re"].energy_gwh()
        if current <= 0:
            raise DataIntegrityError("RE series has zero energy; cannot apply correction")
        factor = re_annual_target / current
        supply["re"] = HalfHourlySeries(raw.year, supply["re"].values * factor, "re")

    return BaseYearData(
        year=raw.year,
        demand=demand,
        supply_by_fuel=supply,
        re_correction_factor=factor,
        gaps=raw.gaps,
    )


# ---------------------------------------------------------------------------
# per-MW shapes
# ---------------------------------------------------------------------------


def rescale_to_cuf(
    shape: PerMwShape, target_cuf: float, tolerance: float = 1e-6, max_iter: int = 100
) -> PerMwShape:
    """Scale a shape to a target capacity utilisation factor.

    Values are multiplied up (or down) and clipped at 1.0, then
    re-measured; the clip-and-renormalise loop repeats until the mean is
    within ``tolerance`` of the target.  Clipping flattens the peak, the
    intended behaviour for prospective fleets with better siting than
    the historical one.
    """
    if not 0.0 < target_cuf < 1.0:
        raise ParameterError(f"target_cuf must lie in (0, 1), got {target_cuf}")
    values = shape.values.copy()
    mean = values.mean()
    if mean <= 0:
        raise ParameterError("cannot rescale an all-zero shape")
    ceiling = np.count_nonzero(values > 0) / values.size
    if target_cuf > ceiling + 1e-12:
        raise InfeasibleError(
            f"target CUF {target_cuf:.4f} exceeds the feasible ceiling "
            f"{ceiling:.4f} (fraction of non-zero slots)"
        )
    for _ in range(max_iter):
        mean = values.mean()
        if abs(mean - target_cuf) <= tolerance:
            break
        values = np.clip(values * (target_cuf / mean), 0.0, 1.0)
    return PerMwShape(values, label=shape.label)


def derive_wind_shape(
    re_series: HalfHourlySeries,
    solar_shape: PerMwShape,
    solar_capacity_mw: float,
    wind_cuf: float | None = None,
) -> PerMwShape:
    """Estimate the wind shape left after removing implied solar output.

    Subtracts ``solar_capacity_mw * solar_shape`` from the observed RE
    series slot by slot, floors at zero, and normalises by the implied
    wind peak.  Pass ``wind_cuf`` to additionally rescale the result to
    a prospective utilisation factor.
    """
    if solar_capacity_mw < 0:
        raise ParameterError("solar_capacity_mw must be >= 0")
    if re_series.has_gaps:
        raise ParameterError("derive_wind_shape needs a cleaned RE series")
    solar = solar_shape.values
    if solar.shape != re_series.values.shape:
        raise ParameterError(
            f"solar shape has {solar.size} slots, RE series has {re_series.n_slots}"
        )
    wind = np.maximum(re_series.values - solar_capacity_mw * solar, 0.0)
    peak = wind.max()
    if peak <= 0:
        raise DegenerateShapeError(
            "implied wind output is zero everywhere; solar capacity too large?"
        )
    shape = PerMwShape(wind / peak, label="wind")
    if wind_cuf is not None:
        shape = rescale_to_cuf(shape, wind_cuf)
    return shape


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

SYNTH_YEAR = 2021
#: synthetic annual demand, GWh (about 1,360 BU, the 2021 benchmark)
SYNTH_DEMAND_GWH = 1_360_000.0


def _hours_of_day() -> np.ndarray:
    return (np.arange(SLOTS_PER_DAY) + 0.5) * SLOT_HOURS


def _solar_bell() -> np.ndarray:
    h = _hours_of_day()
    bell = np.exp(-(((h - 12.5) / 3.0) ** 2))
    bell[bell < 0.02] = 0.0
    return bell / bell.max()


def synth_solar_shape(year: int = SYNTH_YEAR) -> PerMwShape:
    """Deterministic per-MW solar shape matching the synthetic generator."""
    n_days = days_in_year(year)
    day = np.arange(n_days)
    seasonal = 1.0 + 0.05 * np.sin(2 * np.pi * (day - 80) / n_days)
    values = np.outer(seasonal, _solar_bell()).reshape(-1)
    return PerMwShape(values / values.max(), label="solar")


def synth_shapes(seed: int, peakiness: float = 1.0) -> BaseYearData:
    """Generate a deterministic synthetic base year.

    Demand is bimodal within the day (morning and a stronger evening
    peak) with mild seasonality and seeded noise, whose amplitude all
    scales with ``peakiness``; zero peakiness gives perfectly flat
    demand.  Wind is monsoon-heavy, solar diurnal, and coal and gas
    jointly absorb the residual so the base year balances exactly.
    The same seed always reproduces identical arrays.
    """
    if peakiness < 0:
        raise ParameterError(f"peakiness must be >= 0, got {peakiness}")
    rng = np.random.default_rng(seed)
    n_days = days_in_year(SYNTH_YEAR)
    n = n_days * SLOTS_PER_DAY
    h = _hours_of_day()
    day = np.arange(n_days)

    morning = 0.12 * np.exp(-(((h - 9.8) / 2.2) ** 2))
    evening = 0.20 * np.exp(-(((h - 19.5) / 1.9) ** 2))
    diurnal = np.tile(morning + evening, n_days)
    seasonal = np.repeat(0.06 * np.sin(2 * np.pi * (day - 110) / n_days), SLOTS_PER_DAY)
    day_noise = np.repeat(rng.normal(0.0, 0.015, n_days), SLOTS_PER_DAY)
    slot_noise = rng.normal(0.0, 0.004, n)
    modulation = diurnal + seasonal + day_noise + slot_noise
    modulation -= modulation.mean()

    base_mw = SYNTH_DEMAND_GWH * 1e3 / (n * SLOT_HOURS)
    demand = np.maximum(base_mw * (1.0 + peakiness * modulation), 0.02 * base_mw)

    solar_season = 1.0 + 0.05 * np.sin(2 * np.pi * (day - 80) / n_days)
    solar_day_noise = 1.0 + 0.04 * rng.standard_normal(n_days)
    solar = 35_000.0 * np.outer(solar_season * solar_day_noise, _solar_bell()).reshape(-1)
    solar = np.maximum(solar, 0.0)

    monsoon = 1.0 + 0.9 * np.exp(-(((day - 205) / 48.0) ** 2))
    wind_noise = np.maximum(1.0 + 0.22 * rng.standard_normal(n_days), 0.2)
    wind_diurnal = 1.0 + 0.10 * np.cos(2 * np.pi * (h - 2.0) / 24.0)
    wind = 8_500.0 * np.outer(monsoon * wind_noise, wind_diurnal).reshape(-1)
    other_re = 2_500.0
    re = solar + wind + other_re

    hydro_season = 1.0 + 0.35 * np.exp(-(((day - 215) / 55.0) ** 2))
    hydro = 11_000.0 * np.repeat(hydro_season, SLOTS_PER_DAY) * (1.0 + np.tile(morning + evening, n_days))
    nuclear = np.full(n, 4_600.0)

    residual = np.maximum(demand - re - hydro - nuclear, 0.0)
    coal = 0.88 * residual
    gas = 0.12 * residual

    return BaseYearData(
        year=SYNTH_YEAR,
        demand=HalfHourlySeries(SYNTH_YEAR, demand, "demand"),
        supply_by_fuel={
            "coal": HalfHourlySeries(SYNTH_YEAR, coal, "coal"),
            "gas": HalfHourlySeries(SYNTH_YEAR, gas, "gas"),
            "hydro": HalfHourlySeries(SYNTH_YEAR, hydro, "hydro"),
            "nuclear": HalfHourlySeries(SYNTH_YEAR, nuclear, "nuclear"),
            "re": HalfHourlySeries(SYNTH_YEAR, re, "re"),
        },
    )
