"""Seeded synthetic market, follower and panel data with known ground truth.

Randomness comes from numpy's PCG64 bit generator. A root
``SeedSequence(seed)`` is spawned into one stream for market-wide draws and
one stream per coin, so each coin's data depends only on the seed and its
position, never on how many draws other coins consumed.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .characteristics import RAW, investor_base_changes
from .econometrics import HOMOSKEDASTIC, FeFit, _cluster_cov, _terms, ols, prepare_panel
from .errors import ConfigError
from .ingest import daily_riskfree


class InvalidConfig(ConfigError):
    pass


@dataclass
class SynthConfig:
    seed: int = 7
    n_coins: int = 100
    n_days: int = 1095
    start: str = "2019-01-01"
    # latent daily factor process (MRKT, SMB, WML)
    factor_means: tuple = (0.001, 0.0, 0.0)
    factor_vols: tuple = (0.035, 0.02, 0.02)
    # loadings: explicit per-coin (beta, s, w) or drawn from a normal law
    loadings: Optional[list] = None
    loading_mean: tuple = (1.0, 0.3, 0.0)
    loading_sd: tuple = (0.3, 0.3, 0.3)
    alpha_sd: float = 0.0
    # idiosyncratic volatility: per-coin base sigma or a uniform range.
    # A coin whose base sigma is 0 is noise-free in every month.
    idio_sigma: Optional[list] = None
    idio_sigma_range: tuple = (0.02, 0.05)
    # panel relation: sigma_it = base_i + month_t + b1 * dIB_i,t-1 + noise
    panel_b1: float = 2e-6
    month_effect_sd: float = 0.004
    panel_noise_sd: float = 0.002
    sigma_floor: float = 0.002
    dib_mode: str = RAW
    dib_scale: float = 1.0
    # followers: geometric drift plus integer noise, floored at 0
    follower_init_range: tuple = (2000.0, 50000.0)
    follower_drift: float = 0.0005
    follower_vol: float = 0.01
    follower_int_noise: float = 3.0
    follower_obs_every: int = 1
    # market cap and volume
    price_init_range: tuple = (0.5, 500.0)
    cap_init_range: tuple = (5e7, 5e10)
    turnover_range: tuple = (0.01, 0.2)
    # special coins, taken from the end of the coin list
    n_stablecoins: int = 3
    n_marginal: int = 4
    n_defunct: int = 3
    marginal_zero_volume_prob: float = 0.05
    frac_no_subreddit: float = 0.05
    frac_token: float = 0.5
    riskfree_rate: float = 0.02
    riskfree_every: int = 7

    def validate(self):
        if self.n_coins < 2:
            raise InvalidConfig("n_coins must be >= 2")
        if self.n_days < 60:
            raise InvalidConfig("n_days must be >= 60")
        special = self.n_stablecoins + self.n_marginal + self.n_defunct
        if special > self.n_coins:
            raise InvalidConfig("more special coins than coins")
        if self.loadings is not None and len(self.loadings) != self.n_coins:
            raise InvalidConfig("loadings must list one (beta, s, w) per coin")
        if self.idio_sigma is not None:
            if len(self.idio_sigma) != self.n_coins or min(self.idio_sigma) < 0:
                raise InvalidConfig("idio_sigma must list one non-negative sigma per coin")
        if min(self.factor_vols) < 0 or self.sigma_floor < 0:
            raise InvalidConfig("volatilities must be non-negative")
        if self.dib_mode not in ("raw", "log"):
            raise InvalidConfig("dib_mode must be 'raw' or 'log'")
        if self.follower_obs_every < 1 or self.riskfree_every < 1:
            raise InvalidConfig("observation spacing must be >= 1 day")

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfig(f"unknown synth options: {sorted(unknown)}")
        return cls(**data)


@dataclass
class SynthData:
    prices: pd.DataFrame
    meta: pd.DataFrame
    followers: pd.DataFrame
    riskfree: pd.DataFrame
    factors: pd.DataFrame
    sigma: pd.DataFrame
    truth: dict = field(default_factory=dict)


def _roles(n, cfg):
    roles = ["regular"] * n
    pos = n
    for role, count in (("stable", cfg.n_stablecoins), ("marginal", cfg.n_marginal),
                        ("defunct", cfg.n_defunct)):
        for _ in range(count):
            pos -= 1
            roles[pos] = role
    return roles


def _log_uniform(rng, lo, hi):
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def _followers(rng, cfg, dates):
    n = len(dates)
    f0 = _log_uniform(rng, *cfg.follower_init_range)
    steps = cfg.follower_drift + cfg.follower_vol * rng.standard_normal(n)
    steps[0] = 0.0
    level = np.round(f0 * np.exp(np.cumsum(steps)))
    noise = np.round(cfg.follower_int_noise * rng.standard_normal(n))
    counts = np.maximum(level + noise, 0).astype(np.int64)
    keep = np.arange(n) % cfg.follower_obs_every == 0
    keep[-1] = True
    return pd.DataFrame({"date": dates[keep], "followers": counts[keep]})


def generate(config=None, out_dir=None):
    """Generate a full input file set plus ground truth.

    Coin returns follow ``rf + alpha + beta*MRKT + s*SMB + w*WML + eps`` with
    eps ~ N(0, sigma_it^2) where sigma_it depends on the coin's lagged
    follower change through ``panel_b1``. When ``out_dir`` is given, writes
    ``prices.csv, meta.csv, followers.csv, riskfree.csv, truth.json,
    truth_factors.csv, truth_sigma.csv`` there.
    """
    cfg = config or SynthConfig()
    cfg.validate()
    n, T = cfg.n_coins, cfg.n_days
    dates = pd.date_range(cfg.start, periods=T, freq="D")
    months = dates.to_period("M")
    month_index = pd.PeriodIndex(sorted(set(months)))
    seq = np.random.SeedSequence(cfg.seed)
    streams = [np.random.Generator(np.random.PCG64(s)) for s in seq.spawn(n + 1)]
    market = streams[0]

    latent = market.standard_normal((T, 3)) * np.asarray(cfg.factor_vols) + np.asarray(cfg.factor_means)
    month_effect = pd.Series(cfg.month_effect_sd * market.standard_normal(len(month_index)),
                             index=month_index)

    rf_rows = pd.DataFrame({"date": dates[:: cfg.riskfree_every]})
    k = np.arange(len(rf_rows))
    rf_rows["annual_rate"] = np.round(cfg.riskfree_rate * (1.0 + 0.25 * np.sin(k / 13.0)), 6)
    rf_series = rf_rows.set_index("date")["annual_rate"]
    rf_daily = daily_riskfree(rf_series, dates)

    roles = _roles(n, cfg)
    width = max(3, len(str(n - 1)))
    prices, meta, followers, sigma_rows, coins_truth = [], [], [], [], []
    for i in range(n):
        rng = streams[i + 1]
        coin = f"coin{i:0{width}d}"
        role = roles[i]
        if cfg.loadings is not None:
            beta, s, w = map(float, cfg.loadings[i])
        else:
            beta, s, w = (float(v) for v in rng.normal(cfg.loading_mean, cfg.loading_sd))
        alpha = float(cfg.alpha_sd * rng.standard_normal())
        if cfg.idio_sigma is not None:
            base = float(cfg.idio_sigma[i])
        else:
            base = float(rng.uniform(*cfg.idio_sigma_range))
        token = bool(rng.uniform() < cfg.frac_token)
        has_sub = bool(rng.uniform() >= cfg.frac_no_subreddit)
        price0 = _log_uniform(rng, *cfg.price_init_range)
        cap0 = _log_uniform(rng, *cfg.cap_init_range)
        if role == "marginal":
            cap0 = _log_uniform(rng, 5e5, 3e6)
        turnover = float(rng.uniform(*cfg.turnover_range))

        fol = _followers(rng, cfg, dates)
        fol.insert(1, "coin_id", coin)
        dib = investor_base_changes(fol, cfg.dib_mode, cfg.dib_scale).set_index("month")["d_investor_base"]
        lagged = dib.reindex(month_index - 1).to_numpy()
        lagged = np.where(np.isfinite(lagged), lagged, 0.0)
        noise = cfg.panel_noise_sd * rng.standard_normal(len(month_index))
        if base == 0.0:
            sig_m = np.zeros(len(month_index))
        else:
            raw = base + month_effect.to_numpy() + cfg.panel_b1 * lagged + noise
            sig_m = np.maximum(raw, cfg.sigma_floor)
        sig_d = pd.Series(sig_m, index=month_index).reindex(months).to_numpy()

        z = rng.standard_normal(T)
        if role == "stable":
            close = 1.0 + 0.001 * rng.standard_normal(T)
            ret = None
        else:
            ret = rf_daily + alpha + latent @ np.array([beta, s, w]) + sig_d * z
            ret = np.maximum(ret, -0.9)
            close = np.empty(T)
            close[0] = price0
            for d in range(1, T):
                close[d] = close[d - 1] * (1.0 + ret[d])
        supply = cap0 / close[0]
        cap = close * supply
        if role == "stable":
            cap = 1e9 * close
        volume = cap * turnover * np.exp(0.3 * rng.standard_normal(T))
        if role == "marginal":
            volume[rng.uniform(size=T) < cfg.marginal_zero_volume_prob] = 0.0
        alive = np.ones(T, dtype=bool)
        if role == "defunct":
            alive[int(rng.integers(T // 3, 2 * T // 3)):] = False

        prices.append(pd.DataFrame({
            "date": dates[alive], "coin_id": coin, "close_usd": close[alive],
            "volume_usd": volume[alive], "market_cap_usd": cap[alive],
        }))
        fol = fol[fol["date"] <= dates[alive][-1]]
        followers.append(fol)
        meta.append({"coin_id": coin, "category": "token" if token else "coin",
                     "subreddit": f"r/{coin}" if has_sub else "",
                     "is_stablecoin": "true" if role == "stable" else "false"})
        sigma_rows.append(pd.DataFrame({"coin_id": coin, "month": month_index.astype(str),
                                        "sigma": sig_m}))
        coins_truth.append({"coin_id": coin, "role": role, "alpha": alpha, "beta_mrkt": beta,
                            "beta_smb": s, "beta_wml": w, "base_sigma": base})

    factors = pd.DataFrame({"date": dates, "mrkt": latent[:, 0], "smb": latent[:, 1],
                            "wml": latent[:, 2], "rf_daily": rf_daily})
    data = SynthData(
        prices=pd.concat(prices, ignore_index=True),
        meta=pd.DataFrame(meta),
        followers=pd.concat(followers, ignore_index=True),
        riskfree=rf_rows,
        factors=factors,
        sigma=pd.concat(sigma_rows, ignore_index=True),
        truth={"config": asdict(cfg), "panel_b1": cfg.panel_b1, "dib_mode": cfg.dib_mode,
               "dib_scale": cfg.dib_scale, "coins": coins_truth},
    )
    if out_dir is not None:
        write(data, out_dir)
    return data


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    return obj


def write(data, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def dump(frame, name):
        frame = frame.copy()
        if "date" in frame.columns:
            frame["date"] = frame["date"].dt.strftime("%Y-%m-%d")
        frame.to_csv(out / name, index=False, lineterminator="\n")

    dump(data.prices, "prices.csv")
    dump(data.meta, "meta.csv")
    dump(data.followers[["date", "coin_id", "followers"]], "followers.csv")
    dump(data.riskfree, "riskfree.csv")
    dump(data.factors, "truth_factors.csv")
    dump(data.sigma, "truth_sigma.csv")
    (out / "truth.json").write_text(json.dumps(_json_ready(data.truth), indent=2, sort_keys=True) + "\n")
    return out


# ---------------------------------------------------------------------------
# panels with known fixed-effects structure, and the dummy-variable oracle
# ---------------------------------------------------------------------------

def fe_panel(seed, n_coins=50, n_months=60, betas=(0.5,), b0=0.1, noise_sd=1.0,
             missing=0.0, fe_sd=1.0):
    """Panel ``y = b0 + sum_k beta_k x_k + a_i + d_t + noise``.

    Regressors are correlated with both effects so that ignoring them would
    bias the slopes. ``missing`` drops that share of rows at random.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    a = fe_sd * rng.standard_normal(n_coins)
    d = fe_sd * rng.standard_normal(n_months)
    ci, ti = np.meshgrid(np.arange(n_coins), np.arange(n_months), indexing="ij")
    ci, ti = ci.ravel(), ti.ravel()
    frame = pd.DataFrame({
        "coin_id": [f"c{c:03d}" for c in ci],
        "month": pd.Period("2015-01", "M") + ti,
    })
    y = b0 + a[ci] + d[ti]
    for j, b in enumerate(betas):
        x = 0.5 * a[ci] - 0.3 * d[ti] + rng.standard_normal(ci.size)
        frame[f"x{j + 1}"] = x
        y = y + b * x
    frame["y"] = y + noise_sd * rng.standard_normal(ci.size)
    if missing > 0:
        frame = frame[rng.uniform(size=len(frame)) >= missing]
    return frame.reset_index(drop=True)


def _dummies(codes, size):
    out = np.zeros((codes.size, size - 1))
    rows = np.flatnonzero(codes > 0)
    out[rows, codes[rows] - 1] = 1.0
    return out


def oracle_fe(panel, spec, max_rows=50_000):
    """Fixed-effects regression by explicit dummy expansion.

    Builds an intercept, ``n_coins - 1`` coin dummies and ``n_months - 1``
    month dummies and runs plain OLS. Used as an independent reference for
    :func:`cryptofactor.econometrics.two_way_fe`.
    """
    frame, dropped = prepare_panel(panel, spec)
    n = len(frame)
    if n > max_rows:
        raise ValueError(f"{n} rows is too many for dummy expansion (max {max_rows})")
    coin_codes, coins = pd.factorize(frame[spec.entity], sort=True)
    month_codes, months = pd.factorize(frame[spec.time], sort=True)
    blocks = [frame[list(spec.regressors)].to_numpy(dtype=float)]
    if spec.fe_coin:
        blocks.append(_dummies(coin_codes, len(coins)))
    if spec.fe_month:
        blocks.append(_dummies(month_codes, len(months)))
    X = np.hstack(blocks)
    y = frame[spec.dependent].to_numpy(dtype=float)
    fit = ols(X, y, intercept=True)
    k = len(spec.regressors)
    sel = slice(1, 1 + k)
    if spec.se_type == HOMOSKEDASTIC:
        cov = fit.rss / (fit.n - fit.k) * fit.xtx_inv
    else:
        Xfull = np.column_stack([np.ones(n), X])
        cov = _cluster_cov(Xfull, fit.residuals, fit.xtx_inv, frame[spec.entity].to_numpy(),
                           n, k, len(months), spec)
    # within R2 is measured against the variation the effects leave unexplained
    base_blocks = blocks[1:]
    if base_blocks:
        base = ols(np.hstack(base_blocks), y, intercept=True)
        tss_within = base.rss
    else:
        tss_within = float(np.sum((y - y.mean()) ** 2))
    within_r2 = min(max(1.0 - fit.rss / tss_within, 0.0), 1.0) if tss_within > 0 else 0.0
    return FeFit(
        spec=spec,
        terms=_terms(list(spec.regressors), fit.coefficients[sel], cov[sel, sel], set(),
                     spec.regressors),
        within_r2=within_r2,
        n_rows=n,
        n_coins=len(coins),
        n_months=len(months),
        dropped_singletons=dropped,
        dof=fit.n - fit.k,
        rss=fit.rss,
        residuals=fit.residuals,
    )
