"""Regenerates the synthetic fixtures in this directory.

Every file written here is SYNTHETIC: shapes are loosely modeled on 2020
reporting behavior but no value is real data. Output is deterministic.

    python3 fixtures/generate.py
"""

import csv
import datetime as dt
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent
START = dt.date(2020, 1, 22)


def days(start, end):
    n = (end - start).days + 1
    return [start + dt.timedelta(days=i) for i in range(n)]


def weekday_factor(d, strength):
    # Sunday and Monday report least, mid-week most.
    base = {6: 0.55, 0: 0.7, 1: 1.1, 2: 1.2, 3: 1.2, 4: 1.15, 5: 1.1}
    return 1.0 + strength * (base[d.weekday()] - 1.0)


def epidemic(rng, dates, onset, peak_rate, growth, decline_after=None, weekly=0.0):
    """Daily increments: exponential growth from `onset`, optional decline."""
    z = []
    for i, d in enumerate(dates):
        t = (d - onset).days
        if t < 0:
            z.append(0)
            continue
        lam = peak_rate * (1.0 - np.exp(-growth * (t + 1)))
        if decline_after is not None and t > decline_after:
            lam *= np.exp(-0.03 * (t - decline_after))
        lam *= weekday_factor(d, weekly)
        z.append(int(rng.poisson(max(lam, 0.0))))
    return z


def cumsum(z):
    return [int(v) for v in np.cumsum(z)]


def write(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# --- four-dialect excerpt ----------------------------------------------------

COUNTIES = [
    # fips, county, state, abbrev, onset, rate
    ("53061", "Snohomish", "Washington", "WA", dt.date(2020, 1, 22), 40),
    ("53033", "King", "Washington", "WA", dt.date(2020, 2, 28), 120),
    ("06037", "Los Angeles", "California", "CA", dt.date(2020, 1, 26), 300),
    ("17031", "Cook", "Illinois", "IL", dt.date(2020, 1, 24), 350),
    ("36047", "Kings", "New York", "NY", dt.date(2020, 3, 3), 500),
    ("36081", "Queens", "New York", "NY", dt.date(2020, 3, 3), 550),
    ("36005", "Bronx", "New York", "NY", dt.date(2020, 3, 4), 400),
    ("36085", "Richmond", "New York", "NY", dt.date(2020, 3, 6), 120),
    ("36061", "New York", "New York", "NY", dt.date(2020, 3, 1), 300),
    ("49035", "Salt Lake", "Utah", "UT", dt.date(2020, 3, 6), 60),
]
NYC = {"36047", "36081", "36005", "36085", "36061"}
END = dt.date(2020, 4, 30)


def four_dialects():
    rng = np.random.default_rng(20200122)
    dates = days(START, END)
    cases, deaths = {}, {}
    for fips, _, _, _, onset, rate in COUNTIES:
        z = epidemic(rng, dates, onset, rate, 0.08, weekly=0.4)
        cases[fips] = cumsum(z)
        dz = [int(rng.binomial(v, 0.04)) for v in z]
        deaths[fips] = cumsum([0] * 7 + dz[:-7])
    unassigned_wa = cumsum([int(rng.integers(0, 3)) if d >= dt.date(2020, 3, 10) else 0 for d in dates])

    # JHU: wide, m/d/yy, boroughs separate, pseudo-codes for unassigned and
    # out-of-state, one cruise-ship row without a code.
    hdr = ["UID", "iso2", "iso3", "code3", "FIPS", "Admin2", "Province_State", "Country_Region",
           "Lat", "Long_", "Combined_Key"]
    date_cols = [f"{d.month}/{d.day}/{d.strftime('%y')}" for d in dates]
    for metric, table in (("confirmed", cases), ("deaths", deaths)):
        rows = []
        h = hdr + (["Population"] if metric == "deaths" else []) + date_cols
        for i, (fips, county, state, _, _, _) in enumerate(COUNTIES):
            vals = list(table[fips])
            if fips == "17031" and metric == "confirmed":
                # a downward revision: order violation on one day
                k = dates.index(dt.date(2020, 4, 10))
                vals[k] = vals[k - 1] - 25
            row = [84000000 + int(fips), "US", "USA", 840, f"{int(fips)}.0", county, state, "US",
                   "0.0", "0.0", f"{county}, {state}, US"]
            if metric == "deaths":
                row.append(100000 + i)
            rows.append(row + vals)
        extra = [
            [84090053, "US", "USA", 840, "90053.0", "Unassigned", "Washington", "US", "0.0", "0.0",
             "Unassigned, Washington, US"] + ([0] if metric == "deaths" else [])
            + (unassigned_wa if metric == "confirmed" else [0] * len(dates)),
            [84080053, "US", "USA", 840, "80053.0", "Out of WA", "Washington", "US", "0.0", "0.0",
             "Out of WA, Washington, US"] + ([0] if metric == "deaths" else [])
            + [min(i // 20, 4) for i in range(len(dates))],
            [84088888, "US", "USA", 840, "", "", "Diamond Princess", "US", "0.0", "0.0",
             "Diamond Princess, US"] + ([0] if metric == "deaths" else []) + [0] * len(dates),
        ]
        write(HERE / "sources" / f"jhu_{metric}.csv", h, rows + extra)

    # USAFacts: wide, ISO dates, statewide unallocated as countyFIPS 0,
    # counts one day behind JHU.
    date_cols = [d.isoformat() for d in dates]
    for metric, table in (("confirmed", cases), ("deaths", deaths)):
        rows = []
        for fips, county, state, abbrev, _, _ in COUNTIES:
            vals = [0] + table[fips][:-1]
            rows.append([int(fips), f"{county} County", abbrev, int(fips[:2])] + vals)
        rows.append([0, "Statewide Unallocated", "WA", 53]
                    + (unassigned_wa if metric == "confirmed" else [0] * len(dates)))
        write(HERE / "sources" / f"usafacts_{metric}.csv",
              ["countyFIPS", "County Name", "State", "StateFIPS"] + date_cols, rows)

    # NYT: long, NYC already combined without a code, Unknown rows per state,
    # one row with a malformed code. Rows are emitted in shuffled order.
    rows = []
    for fips, county, state, _, onset, _ in COUNTIES:
        if fips in NYC:
            continue
        for i, d in enumerate(dates):
            if d < onset:
                continue
            rows.append([d.isoformat(), county, state, fips, cases[fips][i], deaths[fips][i]])
    nyc_onset = min(c[4] for c in COUNTIES if c[0] in NYC)
    for i, d in enumerate(dates):
        if d < nyc_onset:
            continue
        rows.append([d.isoformat(), "New York City", "New York", "",
                     sum(cases[f][i] for f in NYC), sum(deaths[f][i] for f in NYC)])
        if d >= dt.date(2020, 3, 10):
            rows.append([d.isoformat(), "Unknown", "Washington", "", unassigned_wa[i], 0])
    rows.append(["2020-04-01", "Nowhere", "Washington", "5306X", 3, 0])
    order = rng.permutation(len(rows))
    write(HERE / "sources" / "nyt_counties.csv",
          ["date", "county", "state", "fips", "cases", "deaths"], [rows[i] for i in order])

    # Atlantic: long per state per day, YYYYMMDD, many extra columns.
    states = sorted({(c[2], c[3]) for c in COUNTIES})
    rows = []
    for d_i, d in reversed(list(enumerate(dates))):
        if d < dt.date(2020, 3, 4):
            continue
        for state, abbrev in states:
            pos = sum(cases[c[0]][d_i] for c in COUNTIES if c[3] == abbrev)
            dea = sum(deaths[c[0]][d_i] for c in COUNTIES if c[3] == abbrev)
            rec = pos // 3 if d >= dt.date(2020, 3, 20) else ""
            rows.append([d.strftime("%Y%m%d"), abbrev, pos, "", 10 * pos + 7, dea, rec,
                         f"h{d_i}{abbrev}", "A"])
    write(HERE / "sources" / "atlantic_daily.csv",
          ["date", "state", "positive", "negative", "totalTestResults", "death", "recovered", "hash",
           "dataQualityGrade"], rows)

    # Demographic factors keyed by the canonical ID (one county missing).
    frows = []
    for fips, county, state, *_ in COUNTIES:
        if fips == "49035":
            continue
        frows.append([fips, int(rng.integers(100_000, 3_000_000)), round(float(rng.uniform(30, 45)), 1),
                      round(float(rng.uniform(0.05, 0.25)), 3)])
    frows.append(["99999", 1, 1.0, 0.1])  # not in any panel
    write(HERE / "sources" / "factors.csv", ["ID", "population", "median_age", "poverty_rate"], frows)


# --- Utah key space -----------------------------------------------------------

UTAH = [
    ("49003", "Box Elder"), ("49005", "Cache"), ("49033", "Rich"),
    ("49029", "Morgan"), ("49057", "Weber"), ("49035", "Salt Lake"),
]


def utah():
    rng = np.random.default_rng(49)
    dates = days(dt.date(2020, 3, 10), dt.date(2020, 4, 10))
    series = {f: cumsum([int(rng.poisson(5 + i)) for i in range(len(dates))]) for f, _ in UTAH}
    rows = []
    for f, name in UTAH:
        for i, d in enumerate(dates):
            rows.append([d.isoformat(), name, "Utah", f, series[f][i], 0])
    write(HERE / "utah" / "nyt_utah.csv", ["date", "county", "state", "fips", "cases", "deaths"], rows)
    cols = [f"{d.month}/{d.day}/{d.strftime('%y')}" for d in dates]
    bear = [sum(series[f][i] for f in ("49003", "49005", "49033")) for i in range(len(dates))]
    weber = [sum(series[f][i] for f in ("49029", "49057")) for i in range(len(dates))]
    rows = [
        [84070015, "", "Bear River", "Utah"] + bear,
        [84070020, "", "Weber-Morgan", "Utah"] + weber,
        [84049035, "49035.0", "Salt Lake", "Utah"] + series["49035"],
    ]
    write(HERE / "utah" / "jhu_utah.csv", ["UID", "FIPS", "Admin2", "Province_State"] + cols, rows)


# --- New Jersey deaths with a batch release ---------------------------------

NJ_START, NJ_END = dt.date(2020, 3, 15), dt.date(2020, 7, 25)
NJ_SPIKE, NJ_SPIKE_SIZE = dt.date(2020, 6, 25), 1854


def hump(dates, peak_day, peak, width):
    return [peak * np.exp(-0.5 * (((d - peak_day).days) / width) ** 2) for d in dates]


def nj():
    rng = np.random.default_rng(625)
    dates = days(NJ_START, NJ_END)
    out = {}
    for state, fips, peak_c, peak_d in (("New Jersey", "34", 3500, 300), ("New York", "36", 9000, 800)):
        lc = hump(dates, dt.date(2020, 4, 12), peak_c, 18)
        ld = hump(dates, dt.date(2020, 4, 20), peak_d, 20)
        zc = [int(rng.poisson(max(v, 0) * weekday_factor(d, 0.3) + 60)) for v, d in zip(lc, dates)]
        zd = [int(rng.poisson(max(v, 0) * weekday_factor(d, 0.3) + 15)) for v, d in zip(ld, dates)]
        if state == "New Jersey":
            zd[dates.index(NJ_SPIKE)] += NJ_SPIKE_SIZE
        out[state] = (fips, cumsum(zc), cumsum(zd))
    rows = []
    for i, d in enumerate(dates):
        for state, (fips, c, de) in out.items():
            rows.append([d.isoformat(), state, fips, c[i], de[i]])
    write(HERE / "nj" / "nyt_states.csv", ["date", "state", "fips", "cases", "deaths"], rows)
    rows = []
    for i, d in reversed(list(enumerate(dates))):
        for state, (fips, c, de) in out.items():
            abbrev = {"New Jersey": "NJ", "New York": "NY"}[state]
            # the Atlantic trails by a day and books the batch a day later
            j = max(i - 1, 0)
            rows.append([d.strftime("%Y%m%d"), abbrev, c[j], de[j], ""])
    write(HERE / "nj" / "atlantic_states.csv", ["date", "state", "positive", "death", "recovered"], rows)


# --- national series with a weekly reporting cycle ---------------------------

def national():
    rng = np.random.default_rng(7)
    dates = days(dt.date(2020, 3, 15), dt.date(2020, 7, 25))
    lc = [20000 + 12000 * np.sin(i / 40) + 300 * max(i - 90, 0) for i in range(len(dates))]
    # rise to about 2,100 a day by late April, slow decline, mild July uptick
    ld = [20 + 2100 * np.exp(-0.5 * ((i - 37) / 10) ** 2) if i < 37
          else 550 + 1550 * np.exp(-0.03 * (i - 37)) + 8 * max(i - 110, 0)
          for i in range(len(dates))]
    zc = [int(rng.poisson(max(v, 1) * weekday_factor(d, 0.8))) for v, d in zip(lc, dates)]
    zd = [int(rng.poisson(max(v, 1) * weekday_factor(d, 0.8))) for v, d in zip(ld, dates)]
    c, de = cumsum(zc), cumsum(zd)
    write(HERE / "national" / "nyt_us.csv", ["date", "cases", "deaths"],
          [[d.isoformat(), c[i], de[i]] for i, d in enumerate(dates)])


# --- planted slope changes at the dates of a published breakpoint table -------

# (state, fips, metric, break, level on 2020-03-15, slope before, slope change)
# Levels and slopes roughly follow the published daily counts for each state.
PLANTED_BREAKS = [
    ("California", "06", "cases", dt.date(2020, 6, 10), 300, 0.018, 0.03),
    ("Florida", "12", "cases", dt.date(2020, 6, 7), 300, 0.010, 0.07),
    ("Missouri", "29", "cases", dt.date(2020, 6, 23), 100, 0.010, 0.05),
    ("Nevada", "32", "cases", dt.date(2020, 6, 9), 60, 0.005, 0.055),
    ("South Carolina", "45", "deaths", dt.date(2020, 7, 13), 4, 0.008, 0.11),
    ("Texas", "48", "deaths", dt.date(2020, 7, 1), 8, 0.012, 0.065),
]


def state_breaks():
    rng = np.random.default_rng(6)
    dates = days(dt.date(2020, 3, 15), dt.date(2020, 7, 25))
    rows = []
    for state, fips, metric, brk, level, slope, change in PLANTED_BREAKS:
        phi = (brk - dates[0]).days + 1
        series = {}
        for m in ("cases", "deaths"):
            if m == metric:
                b0, b1, b2 = np.log(level), slope, change
            else:
                b0, b1, b2 = (np.log(400), 0.004, 0.0) if m == "cases" else (np.log(12), 0.002, 0.0)
            z = []
            for i in range(len(dates)):
                t = i + 1
                mu = np.exp(b0 + b1 * t + b2 * max(t - phi, 0))
                # overdispersed: gamma-Poisson with dispersion about 3
                z.append(int(rng.poisson(rng.gamma(mu / 2.0, 2.0))))
            series[m] = cumsum(z)
        for i, d in enumerate(dates):
            rows.append([d.isoformat(), state, fips, series["cases"][i], series["deaths"][i]])
    rows.sort(key=lambda r: (r[0], r[1]))
    write(HERE / "breaks" / "nyt_states_surrogate.csv", ["date", "state", "fips", "cases", "deaths"], rows)


if __name__ == "__main__":
    four_dialects()
    utah()
    nj()
    national()
    state_breaks()
