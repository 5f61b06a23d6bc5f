import numpy as np
import pandas as pd
import pytest

from cryptofactor import riskmodel as rm
from cryptofactor.errors import TooFewObservations
from cryptofactor.stagelog import StageLog


def month_factors(rng, n=30, start="2021-03-01"):
    dates = pd.date_range(start, periods=n)
    return pd.DataFrame({"date": dates, "mrkt": 0.03 * rng.standard_normal(n),
                         "smb": 0.02 * rng.standard_normal(n),
                         "wml": 0.02 * rng.standard_normal(n)})


def test_zero_noise_recovery(rng):
    f = month_factors(rng)
    y = pd.Series(0.001 + 1.2 * f["mrkt"].to_numpy(), index=f["date"])
    fit = rm.fit_model(y, f, rm.CAPM)
    assert fit.alpha == pytest.approx(0.001, abs=1e-14)
    assert fit.betas["mrkt"] == pytest.approx(1.2, abs=1e-12)
    assert (fit.residuals == 0).all()
    assert fit.ivol == 0.0
    assert fit.n_obs == 30


def test_constant_response(rng):
    f = month_factors(rng)
    y = pd.Series(0.0037, index=f["date"])
    fit = rm.fit_model(y, f, rm.THREE_FACTOR)
    assert fit.alpha == pytest.approx(0.0037, abs=1e-15)
    assert all(abs(b) < 1e-12 for b in fit.betas.values())
    assert fit.ivol == 0.0


def test_residuals_orthogonal(rng):
    f = month_factors(rng)
    y = pd.Series(0.01 * rng.standard_normal(30) + f["smb"].to_numpy(), index=f["date"])
    fit = rm.fit_model(y, f, rm.THREE_FACTOR)
    X = np.column_stack([np.ones(30), f[["mrkt", "smb", "wml"]].to_numpy()])
    scale = np.linalg.norm(X, axis=0) * np.linalg.norm(y.to_numpy())
    assert np.all(np.abs(X.T @ fit.residuals) < 1e-10 * scale)


def test_constant_shift_only_moves_intercept(rng):
    f = month_factors(rng)
    y = pd.Series(0.02 * rng.standard_normal(30), index=f["date"])
    a = rm.fit_model(y, f, rm.THREE_FACTOR)
    b = rm.fit_model(y + 0.05, f, rm.THREE_FACTOR)
    assert b.alpha - a.alpha == pytest.approx(0.05, abs=1e-14)
    np.testing.assert_allclose(a.residuals, b.residuals, atol=1e-14)
    assert a.ivol == pytest.approx(b.ivol, rel=1e-10)


def test_three_factor_rss_not_above_capm(rng):
    for _ in range(50):
        f = month_factors(rng)
        y = pd.Series(f["mrkt"].to_numpy() + 0.02 * rng.standard_normal(30), index=f["date"])
        assert rm.fit_model(y, f, rm.THREE_FACTOR).rss <= rm.fit_model(y, f, rm.CAPM).rss


def test_recovery_improves_as_noise_shrinks(rng):
    f = month_factors(rng, n=60)
    b = np.array([0.9, -0.4, 0.3])
    errors = []
    for sigma in (1e-2, 1e-4, 1e-6, 0.0):
        y = f[["mrkt", "smb", "wml"]].to_numpy() @ b + sigma * rng.standard_normal(60)
        fit = rm.fit_model(pd.Series(y, index=f["date"]), f, rm.THREE_FACTOR)
        errors.append(max(abs(fit.betas[k] - v) for k, v in zip(("mrkt", "smb", "wml"), b)))
    assert errors == sorted(errors, reverse=True)
    assert errors[-1] < 1e-12


def test_dof_options(rng):
    f = month_factors(rng)
    y = pd.Series(0.02 * rng.standard_normal(30), index=f["date"])
    pop = rm.fit_model(y, f, rm.THREE_FACTOR)
    adj = rm.fit_model(y, f, rm.THREE_FACTOR, dof=rm.DOF_OLS)
    assert pop.ivol == pytest.approx(np.sqrt(pop.rss / 30), rel=1e-14)
    assert adj.ivol == pytest.approx(np.sqrt(pop.rss / 26), rel=1e-14)


def test_too_few_observations(rng):
    f = month_factors(rng, n=5)
    with pytest.raises(TooFewObservations):
        rm.fit_model(pd.Series(0.0, index=f["date"]), f, rm.CAPM)


def _panel_returns(rng, days_by_coin, start="2021-01-01"):
    rows = []
    factors = month_factors(rng, n=62, start=start)
    for coin, days in days_by_coin.items():
        d = factors["date"].iloc[:days]
        rows.append(pd.DataFrame({"coin_id": coin, "date": d,
                                  "excess_ret": 0.02 * rng.standard_normal(len(d))}))
    return pd.concat(rows, ignore_index=True), factors


def test_panel_counts_and_skips(rng):
    returns, factors = _panel_returns(rng, {"a": 31, "b": 5})
    log = StageLog()
    fits = rm.fit_panel(returns, factors, rm.CAPM, log=log)
    assert [(f.coin_id, str(f.month), f.n_obs) for f in fits] == [("a", "2021-01", 31)]
    assert log.count("TOO_FEW_OBS") == 1
    entry = log.to_frame().iloc[0]
    assert entry["coin_id"] == "b"


def test_panel_deterministic_and_thread_independent(rng):
    returns, factors = _panel_returns(rng, {f"c{i}": 62 for i in range(8)})
    a = rm.ivol_panel(returns, factors, rm.THREE_FACTOR)
    b = rm.ivol_panel(returns, factors, rm.THREE_FACTOR)
    c = rm.ivol_panel(returns.sample(frac=1, random_state=1), factors, rm.THREE_FACTOR, threads=4)
    pd.testing.assert_frame_equal(a, b)
    pd.testing.assert_frame_equal(a, c)
    assert len(a) == 16


def test_capm_rows_leave_smb_wml_empty(rng):
    returns, factors = _panel_returns(rng, {"a": 31})
    frame = rm.ivol_panel(returns, factors, rm.CAPM)
    assert frame[["beta_smb", "beta_wml"]].isna().all().all()
    assert list(frame.columns[:10]) == rm.IVOL_COLUMNS


def test_singular_design_logged():
    dates = pd.date_range("2021-01-01", periods=20)
    factors = pd.DataFrame({"date": dates, "mrkt": 0.01, "smb": 0.0, "wml": 0.0})
    returns = pd.DataFrame({"coin_id": "a", "date": dates, "excess_ret": np.linspace(0, 1, 20)})
    log = StageLog()
    assert rm.fit_panel(returns, factors, rm.CAPM, log=log) == []
    assert log.count("SINGULAR_DESIGN") == 1


def test_ew_ivol_series():
    panel = pd.DataFrame({"coin_id": ["a", "b", "a"],
                          "month": pd.PeriodIndex(["2021-01", "2021-01", "2021-02"], freq="M"),
                          "ivol": [0.02, 0.04, 0.05]})
    s = rm.ew_ivol_series(panel)
    assert list(s["month"].astype(str)) == ["2021-01", "2021-02"]
    assert s["mean_ivol_percent"].iloc[0] == pytest.approx(3.0, rel=1e-15)
    assert s["mean_ivol_percent"].iloc[1] == pytest.approx(5.0, rel=1e-15)


def test_ew_ivol_rejects_mixed_models():
    panel = pd.DataFrame({"coin_id": ["a", "a"], "month": pd.PeriodIndex(["2021-01"] * 2, freq="M"),
                          "model": [rm.CAPM, rm.THREE_FACTOR], "ivol": [0.1, 0.1]})
    with pytest.raises(ValueError):
        rm.ew_ivol_series(panel)
