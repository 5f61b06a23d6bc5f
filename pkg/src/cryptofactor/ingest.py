"""Loading and validation of the raw input files, daily returns and the
eligible-coin universe."""

from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (BadCategory, BadDate, BadNumeric, DataError, DuplicateKey,
                     EmptySeries, MissingColumn)
from .stagelog import logger

PRICE_COLUMNS = ["date", "coin_id", "close_usd", "volume_usd", "market_cap_usd"]
META_COLUMNS = ["coin_id", "category", "subreddit", "is_stablecoin"]
FOLLOWER_COLUMNS = ["date", "coin_id", "followers"]
RISKFREE_COLUMNS = ["date", "annual_rate"]

MCAP_FLOOR = 1_000_000.0
MIN_YEARS = 3
MAX_GAP_DAYS = 7
DAYS_PER_YEAR = 365
RATE_FLOOR = -0.05

_TRUE = {"true", "1", "yes", "y", "t"}
_FALSE = {"false", "0", "no", "n", "f", ""}


def _read(path, columns):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: file not found")
    df = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    df.columns = [c.strip() for c in df.columns]
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise MissingColumn(path, missing)
    df = df[columns].copy()
    df["_line"] = np.arange(len(df)) + 2
    blank = df[columns].apply(lambda s: s.fillna("").str.strip().eq("")).all(axis=1)
    df = df[~blank]
    for c in columns:
        df[c] = df[c].str.strip()
    return path, df


def _dates(df, path, col="date"):
    parsed = pd.to_datetime(df[col], format="%Y-%m-%d", errors="coerce")
    bad = parsed.isna()
    if bad.any():
        raise BadDate(path, col, df.loc[bad, "_line"])
    return parsed


def _numbers(df, path, col, valid):
    parsed = pd.to_numeric(df[col], errors="coerce")
    ok = np.isfinite(parsed) & valid(parsed)
    if not ok.all():
        raise BadNumeric(path, col, df.loc[~ok, "_line"])
    # to_numeric is not always correctly rounded; astype(float) is, so values
    # written with full precision read back bit for bit
    return df[col].astype(float)


def _unique(df, path, key):
    dup = df.duplicated(key, keep=False)
    if dup.any():
        first = df[dup].iloc[0]
        label = tuple(str(first[k].date()) if k == "date" else first[k] for k in key)
        same = (df[key] == first[key]).all(axis=1)
        raise DuplicateKey(path, label if len(label) > 1 else label[0], df.loc[same, "_line"])


def load_prices(path):
    """Read ``prices.csv`` into a validated frame sorted by coin and date.

    Closing prices must be strictly positive; volume and market cap must be
    non-negative.
    """
    path, df = _read(path, PRICE_COLUMNS)
    df["date"] = _dates(df, path)
    if (df["coin_id"] == "").any():
        raise BadNumeric(path, "coin_id", df.loc[df["coin_id"] == "", "_line"])
    df["close_usd"] = _numbers(df, path, "close_usd", lambda s: s > 0)
    df["volume_usd"] = _numbers(df, path, "volume_usd", lambda s: s >= 0)
    df["market_cap_usd"] = _numbers(df, path, "market_cap_usd", lambda s: s >= 0)
    _unique(df, path, ["coin_id", "date"])
    df = df.sort_values(["coin_id", "date"], kind="mergesort")
    return df[PRICE_COLUMNS].reset_index(drop=True)


def load_meta(path):
    path, df = _read(path, META_COLUMNS)
    if (df["coin_id"] == "").any():
        raise BadNumeric(path, "coin_id", df.loc[df["coin_id"] == "", "_line"])
    cat = df["category"].str.lower()
    bad = ~cat.isin(["coin", "token"])
    if bad.any():
        raise BadCategory(path, "category", df.loc[bad, "_line"])
    df["category"] = cat.map({"coin": "Coin", "token": "Token"})
    flag = df["is_stablecoin"].str.lower()
    bad = ~flag.isin(_TRUE | _FALSE)
    if bad.any():
        raise BadCategory(path, "is_stablecoin", df.loc[bad, "_line"])
    df["is_stablecoin"] = flag.isin(_TRUE)
    _unique(df, path, ["coin_id"])
    df = df.sort_values("coin_id", kind="mergesort")
    return df[META_COLUMNS].reset_index(drop=True)


def load_followers(path):
    path, df = _read(path, FOLLOWER_COLUMNS)
    df["date"] = _dates(df, path)
    counts = _numbers(df, path, "followers", lambda s: (s >= 0) & (s == np.floor(s)))
    df["followers"] = counts.astype(np.int64)
    _unique(df, path, ["coin_id", "date"])
    df = df.sort_values(["coin_id", "date"], kind="mergesort")
    return df[FOLLOWER_COLUMNS].reset_index(drop=True)


def load_riskfree(path, start=None, end=None):
    """Read ``riskfree.csv`` and forward-fill it to a daily calendar.

    The result covers ``start``..``end`` (defaults: the file's own span).
    Days before the first quote take the first quoted rate.

    Raises
    ------
    EmptySeries
        If the file has no rows, or no quote falls on or before ``end``.
    """
    path, df = _read(path, RISKFREE_COLUMNS)
    if df.empty:
        raise EmptySeries(f"{path}: no rates")
    df["date"] = _dates(df, path)
    df["annual_rate"] = _numbers(df, path, "annual_rate", lambda s: s >= RATE_FLOOR)
    _unique(df, path, ["date"])
    rates = df.set_index("date")["annual_rate"].sort_index()
    start = rates.index[0] if start is None else pd.Timestamp(start)
    end = rates.index[-1] if end is None else pd.Timestamp(end)
    if rates.index[0] > end:
        raise EmptySeries(f"{path}: first rate {rates.index[0].date()} is after sample end {end.date()}")
    if rates.index[0] > start:
        logger.info("risk-free series starts %s; earlier days use the first quote",
                    rates.index[0].date())
    days = pd.date_range(start, end, freq="D")
    grid = rates.reindex(rates.index.union(days)).ffill().bfill()
    out = grid.reindex(days)
    out.index.name = "date"
    out.name = "annual_rate"
    return out


def daily_riskfree(rf, dates):
    """Daily risk-free rate (annual / 365) on the given dates."""
    dates = pd.DatetimeIndex(dates)
    full = rf.reindex(rf.index.union(dates.unique())).ffill().bfill()
    rate = full.reindex(dates)
    return rate.to_numpy() / DAYS_PER_YEAR


def compute_returns(prices, rf, max_gap_days=MAX_GAP_DAYS, log=None):
    """Simple daily returns and excess returns.

    A return on day ``d`` uses the coin's immediately preceding observation;
    if that lies more than ``max_gap_days`` calendar days back the chain is
    broken and no return is produced for ``d``.

    Returns
    -------
    pandas.DataFrame
        ``coin_id, date, prev_date, ret, rf_daily, excess_ret``.
    """
    df = prices.sort_values(["coin_id", "date"], kind="mergesort")
    grouped = df.groupby("coin_id", sort=False)
    prev_close = grouped["close_usd"].shift(1)
    prev_date = grouped["date"].shift(1)
    gap = (df["date"] - prev_date).dt.days
    has_prev = prev_close.notna()
    broken = has_prev & (gap > max_gap_days)
    if log is not None:
        for coin, date, g in zip(df.loc[broken, "coin_id"], df.loc[broken, "date"], gap[broken]):
            log.add("ingest", "GAP", coin, date.date(), f"gap_days={int(g)}")
    n_broken = int(broken.sum())
    if n_broken:
        logger.info("%d return chains broken by gaps > %d days", n_broken, max_gap_days)

    keep = has_prev & ~broken
    out = pd.DataFrame({
        "coin_id": df.loc[keep, "coin_id"].to_numpy(),
        "date": df.loc[keep, "date"].to_numpy(),
        "prev_date": prev_date[keep].to_numpy(),
        "ret": (df.loc[keep, "close_usd"] / prev_close[keep] - 1.0).to_numpy(),
    })
    out["rf_daily"] = daily_riskfree(rf, out["date"])
    out["excess_ret"] = out["ret"] - out["rf_daily"]
    return out


def build_universe(prices, meta, mcap_floor=MCAP_FLOOR, log=None):
    """Per-day eligible coins.

    A coin is eligible on a day when its market cap is at least
    ``mcap_floor``, its volume is positive and it is not flagged as a
    stablecoin. Coins missing from ``meta`` are treated as non-stablecoins.

    Returns
    -------
    pandas.DataFrame
        ``date, coin_id`` rows, one per eligible coin-day.
    """
    if not mcap_floor > 0:
        raise ValueError("mcap_floor must be positive")
    stable = set(meta.loc[meta["is_stablecoin"], "coin_id"])
    known = set(meta["coin_id"])
    if log is not None:
        for coin in sorted(set(prices["coin_id"]) - known):
            log.add("ingest", "NO_META", coin, detail="treated as non-stablecoin")
        for coin in sorted(stable & set(prices["coin_id"])):
            log.add("ingest", "STABLECOIN", coin)
    mask = (
        (prices["market_cap_usd"] >= mcap_floor)
        & (prices["volume_usd"] > 0)
        & ~prices["coin_id"].isin(stable)
    )
    out = prices.loc[mask, ["date", "coin_id"]]
    return out.sort_values(["date", "coin_id"], kind="mergesort").reset_index(drop=True)


def build_regression_sample(universe, meta, min_years=MIN_YEARS, log=None):
    """Coins with a listed subreddit and at least ``min_years * 365`` eligible
    days (not necessarily contiguous)."""
    need = min_years * DAYS_PER_YEAR
    days = universe.groupby("coin_id")["date"].nunique()
    subreddit = meta.set_index("coin_id")["subreddit"].fillna("")
    sample = set()
    for coin in sorted(days.index):
        if subreddit.get(coin, "") == "":
            if log is not None:
                log.add("ingest", "NO_SUBREDDIT", coin)
            continue
        if days[coin] < need:
            if log is not None:
                log.add("ingest", "TOO_FEW_ELIGIBLE_DAYS", coin, detail=f"{days[coin]}<{need}")
            continue
        sample.add(coin)
    return frozenset(sample)


def sample_span(prices):
    return prices["date"].min(), prices["date"].max()

