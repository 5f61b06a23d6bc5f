"""Per coin-month factor regressions and idiosyncratic volatility."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .econometrics import ols
from .errors import RankDeficient, SingularDesign, TooFewObservations

CAPM = "CAPM"
THREE_FACTOR = "ThreeFactor"
MODEL_FACTORS = {CAPM: ("mrkt",), THREE_FACTOR: ("mrkt", "smb", "wml")}
MIN_OBS = 10
DOF_POPULATION = "population"
DOF_OLS = "ols"
# Simple returns computed from stored prices carry absolute rounding error
# around 1e-16; residuals below this floor are indistinguishable from zero.
RESID_FLOOR = 1e-13

IVOL_COLUMNS = ["coin_id", "month", "model", "alpha", "beta_mrkt", "beta_smb", "beta_wml",
                "n_obs", "r2", "ivol"]


@dataclass
class RiskFit:
    coin_id: str
    month: pd.Period
    model: str
    alpha: float
    betas: dict
    residuals: np.ndarray = field(repr=False)
    n_obs: int
    r2: float
    ivol: float
    rss: float
    standard_errors: dict = field(default_factory=dict)


def _fit(y, X, coin_id, month, model, dof):
    names = list(MODEL_FACTORS[model])
    try:
        fit = ols(X, y, intercept=True, names=names)
    except RankDeficient as exc:
        raise SingularDesign(coin_id, month) from exc
    resid = fit.residuals.copy()
    resid[np.abs(resid) < RESID_FLOOR] = 0.0
    rss = float(resid @ resid)
    n = len(y)
    denom = n if dof == DOF_POPULATION else n - fit.k
    return RiskFit(
        coin_id=coin_id,
        month=month,
        model=model,
        alpha=float(fit.coefficients[0]),
        betas=dict(zip(names, map(float, fit.coefficients[1:]))),
        residuals=resid,
        n_obs=n,
        r2=fit.r2,
        ivol=float(np.sqrt(rss / denom)),
        rss=rss,
        standard_errors=dict(zip(fit.names, map(float, fit.standard_errors))),
    )


def fit_model(excess, factors, model=THREE_FACTOR, coin_id="", month=None,
              min_obs=MIN_OBS, dof=DOF_POPULATION):
    """Regress one coin's daily excess returns for one month on the factors.

    Parameters
    ----------
    excess : pandas.Series
        Excess returns indexed by date.
    factors : pandas.DataFrame
        Factor table indexed by date (or with a ``date`` column).
    model : {'CAPM', 'ThreeFactor'}
    dof : {'population', 'ols'}
        Divide the residual sum of squares by n, or by n minus the number of
        estimated coefficients.
    """
    if model not in MODEL_FACTORS:
        raise ValueError(f"unknown model {model!r}")
    if "date" in factors.columns:
        factors = factors.set_index("date")
    cols = list(MODEL_FACTORS[model])
    data = pd.concat([excess.rename("_y"), factors[cols]], axis=1, join="inner").dropna()
    if len(data) < min_obs:
        raise TooFewObservations(f"{coin_id} {month}: {len(data)} observations, need {min_obs}")
    return _fit(data["_y"].to_numpy(), data[cols].to_numpy(), coin_id, month, model, dof)


def winsorize(values, lower, upper):
    lo, hi = np.nanquantile(values, [lower, upper])
    return np.clip(values, lo, hi)


def fit_panel(returns, factors, model=THREE_FACTOR, sample=None, min_obs=MIN_OBS,
              dof=DOF_POPULATION, winsor=None, threads=1, log=None):
    """Fit every (coin, calendar month) with at least ``min_obs`` days that
    have both a coin return and the model's factors.

    Returns a list of :class:`RiskFit` ordered by coin then month.
    """
    cols = list(MODEL_FACTORS[model])
    data = returns[["coin_id", "date", "excess_ret"]]
    if sample is not None:
        data = data[data["coin_id"].isin(sample)]
    data = data.merge(factors[["date", *cols]], on="date", how="inner").dropna()
    if winsor is not None:
        data = data.assign(excess_ret=winsorize(data["excess_ret"].to_numpy(), *winsor))
    data = data.sort_values(["coin_id", "date"], kind="mergesort")
    data["month"] = data["date"].dt.to_period("M")

    jobs = []
    for (coin, month), g in data.groupby(["coin_id", "month"], sort=True):
        if len(g) < min_obs:
            if log is not None:
                log.add("ivol", "TOO_FEW_OBS", coin, month, f"model={model};n={len(g)}")
            continue
        jobs.append((coin, month, g["excess_ret"].to_numpy(), g[cols].to_numpy()))

    def run(job):
        coin, month, y, X = job
        try:
            return _fit(y, X, coin, month, model, dof)
        except SingularDesign:
            return None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    fits = []
    for job, res in zip(jobs, results):
        if res is None:
            if log is not None:
                log.add("ivol", "SINGULAR_DESIGN", job[0], job[1], f"model={model}")
        else:
            fits.append(res)
    return fits


def fits_to_frame(fits):
    rows = []
    for f in fits:
        se = f.standard_errors
        rows.append({
            "coin_id": f.coin_id,
            "month": f.month,
            "model": f.model,
            "alpha": f.alpha,
            "beta_mrkt": f.betas.get("mrkt", np.nan),
            "beta_smb": f.betas.get("smb", np.nan),
            "beta_wml": f.betas.get("wml", np.nan),
            "n_obs": f.n_obs,
            "r2": f.r2,
            "ivol": f.ivol,
            "rss": f.rss,
            "se_mrkt": se.get("mrkt", np.nan),
            "se_smb": se.get("smb", np.nan),
            "se_wml": se.get("wml", np.nan),
        })
    if not rows:
        return pd.DataFrame(columns=IVOL_COLUMNS + ["rss", "se_mrkt", "se_smb", "se_wml"])
    return pd.DataFrame(rows)


def ivol_panel(returns, factors, model=THREE_FACTOR, sample=None, min_obs=MIN_OBS,
               dof=DOF_POPULATION, winsor=None, threads=1, log=None):
    """One row per fitted (coin, month): alpha, loadings, fit quality, ivol."""
    return fits_to_frame(fit_panel(returns, factors, model, sample, min_obs, dof,
                                   winsor, threads, log))


def ew_ivol_series(panel):
    """Equal-weighted cross-sectional mean ivol per month, in percent."""
    if panel.empty:
        raise ValueError("empty ivol panel")
    if "model" in panel.columns and panel["model"].nunique() > 1:
        raise ValueError("ivol panel mixes risk models; select one first")
    mean = panel.groupby("month", sort=True)["ivol"].mean() * 100.0
    return pd.DataFrame({"month": mean.index, "mean_ivol_percent": mean.to_numpy()})
