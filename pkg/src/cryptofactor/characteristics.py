"""Monthly coin characteristics, investor-base changes and the lagged panel.

Each characteristic has a scalar form operating on one coin-month of data
and a vectorised form used by the pipeline; the two are kept separate so the
scalar forms can check the vectorised ones.
"""

import numpy as np
import pandas as pd

from .errors import EmptyPanel, Missing, TooFewObservations

RAW = "raw"
LOG = "log"
VOLUME_UNIT = 1e6
CHAR_COLUMNS = ["size", "mom", "volume", "amihud"]
PANEL_COLUMNS = ["coin_id", "month", "ivol", "d_investor_base", "size", "mom", "volume",
                 "amihud", "category"]
REGRESSORS = ["d_investor_base", "size", "mom", "volume", "amihud", "category"]


def size_char(caps):
    """Log of the last observed market cap in the month."""
    caps = np.asarray(caps, dtype=float)
    if caps.size == 0 or not caps[-1] > 0:
        raise Missing("no positive market cap in month")
    return float(np.log(caps[-1]))


def mom_char(closes):
    """Return from the month's first to its last close."""
    closes = np.asarray(closes, dtype=float)
    if closes.size < 2:
        raise Missing("fewer than two prices in month")
    return float(closes[-1] / closes[0] - 1.0)


def volume_char(volumes):
    """Mean log dollar volume over days with positive volume."""
    v = np.asarray(volumes, dtype=float)
    v = v[v > 0]
    if v.size == 0:
        raise Missing("no positive volume in month")
    return float(np.mean(np.log(v)))


def amihud_char(returns, volumes):
    """Mean of |r_d| / (Q_d / 1e6) over days with a return and positive
    dollar volume."""
    r = np.asarray(returns, dtype=float)
    q = np.asarray(volumes, dtype=float)
    ok = np.isfinite(r) & (q > 0)
    if not ok.any():
        raise Missing("no valid return/volume days in month")
    terms = np.abs(r[ok]) / (q[ok] / VOLUME_UNIT)
    # shifted mean: exact when every day has the same term
    return float(terms[0] + np.mean(terms - terms[0]))


def delta_investor_base(prev_end, end, mode=RAW):
    """Change in followers between consecutive month ends."""
    if prev_end is None or end is None:
        raise Missing("follower endpoint missing")
    if mode == RAW:
        return float(end) - float(prev_end)
    if mode == LOG:
        if prev_end <= 0 or end <= 0:
            raise Missing("log change undefined for zero followers")
        return float(np.log(end / prev_end))
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# vectorised forms
# ---------------------------------------------------------------------------

def monthly_characteristics(prices, returns):
    """Size, momentum, volume and Amihud illiquidity per coin-month.

    Missing values are NaN.
    """
    p = prices.sort_values(["coin_id", "date"], kind="mergesort").copy()
    p["month"] = p["date"].dt.to_period("M")
    g = p.groupby(["coin_id", "month"], sort=True)
    last_cap = g["market_cap_usd"].last()
    first_close = g["close_usd"].first()
    last_close = g["close_usd"].last()
    n_close = g["close_usd"].count()
    p["log_volume"] = np.log(p["volume_usd"].where(p["volume_usd"] > 0))
    out = pd.DataFrame({
        "size": np.log(last_cap.where(last_cap > 0)),
        "mom": (last_close / first_close - 1.0).where(n_close >= 2),
        "volume": p.groupby(["coin_id", "month"], sort=True)["log_volume"].mean(),
    })

    r = returns[["coin_id", "date", "ret"]].merge(
        prices[["coin_id", "date", "volume_usd"]], on=["coin_id", "date"], how="inner")
    r = r[(r["volume_usd"] > 0) & np.isfinite(r["ret"])]
    r = r.assign(month=r["date"].dt.to_period("M"),
                 term=r["ret"].abs() / (r["volume_usd"] / VOLUME_UNIT))
    g = r.groupby(["coin_id", "month"])["term"]
    shift = g.transform("first")
    out["amihud"] = g.first() + (r["term"] - shift).groupby([r["coin_id"], r["month"]]).mean()
    return out.reset_index()[["coin_id", "month", *CHAR_COLUMNS]]


def month_end_followers(followers):
    f = followers.sort_values(["coin_id", "date"], kind="mergesort")
    f = f.assign(month=f["date"].dt.to_period("M"))
    end = f.groupby(["coin_id", "month"], sort=True)["followers"].last()
    return end.reset_index()


def investor_base_changes(followers, mode=RAW, scale=1.0):
    """Month-over-month follower change per coin, using the last observation
    in each calendar month. Months whose previous month has no observation
    get no value."""
    if mode not in (RAW, LOG):
        raise ValueError(f"unknown mode {mode!r}")
    end = month_end_followers(followers)
    prev = end.assign(month=end["month"] + 1).rename(columns={"followers": "prev"})
    both = end.merge(prev, on=["coin_id", "month"], how="inner")
    cur = both["followers"].astype(float)
    before = both["prev"].astype(float)
    if mode == RAW:
        d = cur - before
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.log(cur / before).where((cur > 0) & (before > 0))
    both["d_investor_base"] = d / scale
    return both[["coin_id", "month", "d_investor_base"]].dropna().reset_index(drop=True)


def winsorize_columns(panel, columns, limits=(0.01, 0.99)):
    out = panel.copy()
    for c in columns:
        lo, hi = out[c].quantile(list(limits))
        out[c] = out[c].clip(lo, hi)
    return out


def assemble_panel(ivol, chars, followers, meta, dib_mode=RAW, dib_scale=1.0, lag=1, log=None):
    """Join ivol in month t with characteristics and investor-base change in
    month t - lag.

    Rows missing any field are dropped (one log entry per dropped row).
    The category dummy is 1 for coins and 0 for tokens.

    Raises
    ------
    EmptyPanel
        If no complete row remains.
    """
    dib = investor_base_changes(followers, dib_mode, dib_scale)
    regs = chars.merge(dib, on=["coin_id", "month"], how="outer")
    regs = regs.assign(month=regs["month"] + lag)
    dep = ivol[["coin_id", "month", "ivol"]]
    panel = dep.merge(regs, on=["coin_id", "month"], how="left")
    category = meta.set_index("coin_id")["category"].map({"Coin": 1, "Token": 0})
    panel["category"] = panel["coin_id"].map(category)
    panel = panel[PANEL_COLUMNS]

    fields = PANEL_COLUMNS[2:]
    values = panel[fields].to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    drop = bad.any(axis=1)
    if log is not None:
        for (coin, month), row in zip(panel.loc[drop, ["coin_id", "month"]].itertuples(index=False),
                                      bad[drop]):
            missing = [f for f, b in zip(fields, row) if b]
            log.add("panel", "MISSING_" + missing[0].upper(), coin, month, ";".join(missing))
    panel = panel[~drop].copy()
    if panel.empty:
        raise EmptyPanel("no coin-month has ivol and all lagged regressors")
    panel["category"] = panel["category"].astype(int)
    return panel.sort_values(["coin_id", "month"], kind="mergesort").reset_index(drop=True)


def summary_stats(panel, columns=None):
    """Mean, sample sd, quartiles, extremes and count for each column."""
    columns = columns or [c for c in PANEL_COLUMNS[2:] if c in panel.columns]
    if panel.empty:
        raise ValueError("empty panel")
    rows = {}
    for c in columns:
        s = panel[c].dropna().astype(float)
        rows[c] = {
            "mean": s.mean(),
            "sd": s.std(ddof=1),
            "min": s.min(),
            "p25": s.quantile(0.25),
            "median": s.median(),
            "p75": s.quantile(0.75),
            "max": s.max(),
            "n": int(s.size),
        }
    out = pd.DataFrame.from_dict(rows, orient="index")
    out.index.name = "variable"
    return out


def panel_correlations(panel, columns=None, min_obs=30):
    """Pearson correlations on pairwise-complete observations."""
    columns = columns or [c for c in PANEL_COLUMNS[2:] if c in panel.columns]
    data = panel[columns].astype(float)
    counts = data.notna().astype(int)
    pair_n = counts.T @ counts
    if pair_n.to_numpy().min() < min_obs:
        raise TooFewObservations(f"some column pairs have fewer than {min_obs} observations")
    return data.corr(method="pearson")
