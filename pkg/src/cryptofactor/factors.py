"""Daily market, size (SMB) and momentum (WML) factors.

Portfolios are rebalanced weekly. Sort breakpoints and momentum scores use
only data dated strictly before the week starts; inside the week, portfolio
returns are weighted by each coin's market cap on its previous observation
day.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import TooFewObservations
from .ingest import daily_riskfree

WEEKDAYS = {"MON": 0, "TUE": 1, "WED": 2, "THU": 3, "FRI": 4, "SAT": 5, "SUN": 6}
BREAKPOINTS = (0.3, 0.7)
SIZE_SPLIT = 0.5
LOOKBACK_DAYS = 21
MIN_MOMENTUM_OBS = 15
MIN_COINS = 10
FACTOR_NAMES = ["mrkt", "smb", "wml"]


@dataclass
class WeeklySort:
    week_start: pd.Timestamp
    size_groups: dict                                   # coin -> Small / Middle / Big
    momentum_groups: dict = field(default_factory=dict)  # coin -> Low / Middle2 / High
    size_halves: dict = field(default_factory=dict)      # coin -> Small / Big (2x3 grid)
    formation_caps: dict = field(default_factory=dict)
    momentum_scores: dict = field(default_factory=dict)

    @property
    def has_momentum(self):
        return bool(self.momentum_groups)


def _count(n, share):
    return int(np.floor(n * share + 0.5))


def rank_groups(values, labels, breakpoints=BREAKPOINTS):
    """Assign bottom / middle / top labels by rank.

    ``values`` maps coin -> sort key. Ties are broken by coin id so the result
    is deterministic. With breakpoints (0.3, 0.7) ten coins split 3/4/3.
    """
    order = sorted(values, key=lambda c: (values[c], c))
    n = len(order)
    n_low = _count(n, breakpoints[0])
    n_high = min(_count(n, 1.0 - breakpoints[1]), n - n_low)
    out = {}
    for i, coin in enumerate(order):
        if i < n_low:
            out[coin] = labels[0]
        elif i >= n - n_high:
            out[coin] = labels[2]
        else:
            out[coin] = labels[1]
    return out


def split_halves(values, share=SIZE_SPLIT):
    order = sorted(values, key=lambda c: (values[c], c))
    n_small = _count(len(order), share)
    return {coin: ("Small" if i < n_small else "Big") for i, coin in enumerate(order)}


def weighted_daily(returns, caps):
    """Returns joined with their weighting cap (market cap on ``prev_date``),
    sorted by date."""
    cap = caps[["coin_id", "date", "market_cap_usd"]].rename(
        columns={"date": "prev_date", "market_cap_usd": "weight"})
    out = returns[["coin_id", "date", "prev_date", "ret"]].merge(
        cap, on=["coin_id", "prev_date"], how="left")
    return out.sort_values(["date", "coin_id"], kind="mergesort").reset_index(drop=True)


def value_weighted(frame, by):
    """Value-weighted mean of ``ret`` per group; groups with zero total weight
    are dropped."""
    f = frame[frame["weight"] > 0]
    wr = (f["ret"] * f["weight"]).groupby([f[c] for c in by]).sum()
    w = f["weight"].groupby([f[c] for c in by]).sum()
    return wr / w


def market_factor(returns, universe, caps, rf, log=None):
    """Value-weighted return of all eligible coins minus the daily risk-free
    rate.

    Returns
    -------
    pandas.DataFrame
        ``date, mrkt, rf_daily``.
    """
    daily = weighted_daily(returns, caps).merge(universe, on=["date", "coin_id"], how="inner")
    vw = value_weighted(daily, ["date"])
    out = pd.DataFrame({"date": vw.index, "market": vw.to_numpy()})
    out["rf_daily"] = daily_riskfree(rf, out["date"])
    out["mrkt"] = out["market"] - out["rf_daily"]
    if log is not None and len(returns):
        span = pd.date_range(returns["date"].min(), returns["date"].max(), freq="D")
        for d in span.difference(pd.DatetimeIndex(out["date"])):
            log.add("factors", "EMPTY_UNIVERSE", period=d.date())
    return out[["date", "mrkt", "rf_daily"]].reset_index(drop=True)


def week_starts(dates, anchor="MON"):
    dates = pd.DatetimeIndex(dates)
    if dates.empty:
        return pd.DatetimeIndex([])
    weekday = WEEKDAYS[anchor.upper()]
    first = dates.min() - pd.Timedelta(days=(dates.min().weekday() - weekday) % 7)
    return pd.date_range(first, dates.max(), freq="7D")


def weekly_sorts(returns, caps, universe, anchor="MON", breakpoints=BREAKPOINTS,
                 size_split=SIZE_SPLIT, lookback_days=LOOKBACK_DAYS,
                 min_momentum_obs=MIN_MOMENTUM_OBS, min_coins=MIN_COINS, log=None):
    """Form the weekly size and size x momentum sorts.

    Size groups split the coins eligible on the day before the week starts
    30/40/30 by market cap. The momentum grid splits the same coins at the
    median cap and then 30/40/30 by the compounded return over the trailing
    ``lookback_days`` (requires ``min_momentum_obs`` returns in the window).
    Weeks with fewer than ``min_coins`` coins are skipped; a week whose grid
    has an empty corner cell keeps its size sort but no momentum sort.
    """
    by_date = {d: g for d, g in universe.groupby("date")["coin_id"]}
    cap_idx = caps.set_index(["date", "coin_id"])["market_cap_usd"]
    rets = returns[["date", "coin_id", "ret"]].sort_values("date", kind="mergesort")
    ret_dates = rets["date"].to_numpy()

    sorts = []
    for start in week_starts(returns["date"], anchor):
        formation = start - pd.Timedelta(days=1)
        period = start.date()
        members = by_date.get(formation)
        if members is None or len(members) < min_coins:
            if log is not None:
                log.add("factors", "TOO_FEW_COINS", period=period,
                        detail=f"n={0 if members is None else len(members)}")
            continue
        caps_f = {c: float(cap_idx[(formation, c)]) for c in members}
        sort = WeeklySort(start, rank_groups(caps_f, ("Small", "Middle", "Big"), breakpoints),
                          formation_caps=caps_f)

        lo = np.searchsorted(ret_dates, np.datetime64(start - pd.Timedelta(days=lookback_days)), "left")
        hi = np.searchsorted(ret_dates, np.datetime64(start), "left")
        window = rets.iloc[lo:hi]
        window = window[window["coin_id"].isin(caps_f)]
        grouped = window.groupby("coin_id")["ret"]
        counts = grouped.count()
        growth = (1.0 + window["ret"]).groupby(window["coin_id"]).prod() - 1.0
        scores = {c: float(growth[c]) for c in counts.index if counts[c] >= min_momentum_obs}

        if len(scores) < min_coins:
            if log is not None:
                log.add("factors", "TOO_FEW_MOMENTUM_COINS", period=period, detail=f"n={len(scores)}")
            sorts.append(sort)
            continue
        halves = split_halves(caps_f, size_split)
        grid = {}
        for half in ("Small", "Big"):
            part = {c: s for c, s in scores.items() if halves[c] == half}
            grid.update(rank_groups(part, ("Low", "Middle2", "High"), breakpoints))
        cells = {(halves[c], g) for c, g in grid.items()}
        empty = [f"{h}-{g}" for h in ("Small", "Big") for g in ("Low", "High") if (h, g) not in cells]
        if empty:
            if log is not None:
                log.add("factors", "EMPTY_CELL", period=period, detail=";".join(empty))
        else:
            sort.momentum_groups = grid
            sort.size_halves = {c: halves[c] for c in grid}
            sort.momentum_scores = scores
        sorts.append(sort)
    return sorts


def _week_frame(daily, sort, labels):
    lo = np.searchsorted(daily["date"].to_numpy(), np.datetime64(sort.week_start), "left")
    hi = np.searchsorted(daily["date"].to_numpy(),
                         np.datetime64(sort.week_start + pd.Timedelta(days=7)), "left")
    week = daily.iloc[lo:hi]
    week = week[week["coin_id"].isin(labels)].copy()
    week["group"] = week["coin_id"].map(labels)
    return week


def portfolio_returns(daily, sorts, kind="size"):
    """Daily value-weighted returns of the sorted portfolios.

    ``kind='size'`` gives columns Small/Middle/Big; ``kind='grid'`` gives the
    six size x momentum cells named like ``Small-High``.
    """
    frames = []
    for sort in sorts:
        if kind == "size":
            labels = sort.size_groups
        else:
            if not sort.has_momentum:
                continue
            labels = {c: f"{sort.size_halves[c]}-{g}" for c, g in sort.momentum_groups.items()}
        week = _week_frame(daily, sort, labels)
        if week.empty:
            continue
        frames.append(value_weighted(week, ["date", "group"]).unstack("group"))
    if not frames:
        return pd.DataFrame()
    out = pd.concat(frames).sort_index()
    out.index.name = "date"
    return out


def smb_factor(sorts, returns, caps, log=None):
    """Small-cap minus big-cap portfolio return, per day."""
    ports = portfolio_returns(weighted_daily(returns, caps), sorts, "size")
    if ports.empty or not {"Small", "Big"} <= set(ports.columns):
        return pd.DataFrame(columns=["date", "smb"])
    smb = (ports["Small"] - ports["Big"])
    if log is not None:
        for d in smb.index[smb.isna()]:
            log.add("factors", "SMB_EMPTY_PORTFOLIO", period=d.date())
    smb = smb.dropna()
    return pd.DataFrame({"date": smb.index, "smb": smb.to_numpy()})


def wml_from_corners(small_high, big_high, small_low, big_low):
    return 0.5 * (small_high + big_high) - 0.5 * (small_low + big_low)


def wml_factor(sorts, returns, caps, log=None):
    """Winners minus losers averaged over the two size halves."""
    ports = portfolio_returns(weighted_daily(returns, caps), sorts, "grid")
    corners = ["Small-High", "Big-High", "Small-Low", "Big-Low"]
    if ports.empty or not set(corners) <= set(ports.columns):
        return pd.DataFrame(columns=["date", "wml"])
    wml = wml_from_corners(*(ports[c] for c in corners))
    if log is not None:
        for d in wml.index[wml.isna()]:
            log.add("factors", "WML_EMPTY_PORTFOLIO", period=d.date())
    wml = wml.dropna()
    return pd.DataFrame({"date": wml.index, "wml": wml.to_numpy()})


def build_factors(returns, universe, prices, rf, anchor="MON", breakpoints=BREAKPOINTS,
                  min_coins=MIN_COINS, log=None):
    """Full daily factor table ``date, mrkt, smb, wml, rf_daily``.

    Only days on which all three factors exist are kept, so every risk model
    is estimated on the same days.
    """
    mrkt = market_factor(returns, universe, prices, rf, log)
    sorts = weekly_sorts(returns, prices, universe, anchor=anchor, breakpoints=breakpoints,
                         min_coins=min_coins, log=log)
    smb = smb_factor(sorts, returns, prices, log)
    wml = wml_factor(sorts, returns, prices, log)
    table = mrkt.merge(smb, on="date", how="left").merge(wml, on="date", how="left")
    complete = table[FACTOR_NAMES].notna().all(axis=1)
    if log is not None:
        for d in table.loc[~complete, "date"]:
            log.add("factors", "INCOMPLETE_FACTORS", period=d.date())
    table = table.loc[complete, ["date", *FACTOR_NAMES, "rf_daily"]].reset_index(drop=True)
    return table, sorts


def factor_correlations(factors, columns=FACTOR_NAMES, min_obs=30):
    """Pearson correlations over dates where every factor is observed."""
    data = factors[list(columns)].dropna()
    if len(data) < min_obs:
        raise TooFewObservations(f"{len(data)} common observations, need {min_obs}")
    return data.corr(method="pearson")
