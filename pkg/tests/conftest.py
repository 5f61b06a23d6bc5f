import numpy as np
import pandas as pd
import pytest

from cryptofactor import factors as factors_mod
from cryptofactor import ingest, synth

# acceptance outcomes, filled in by test_acceptance and printed at the end
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def csv(tmp_path):
    def make(name, header, rows):
        return write_csv(tmp_path / name, header, rows)
    return make


def rf_zero(start="2020-01-01", end="2024-12-31"):
    days = pd.date_range(start, end, freq="D")
    return pd.Series(0.0, index=pd.DatetimeIndex(days, name="date"), name="annual_rate")


@pytest.fixture(scope="session")
def small_market(tmp_path_factory):
    """A small synthetic market written to disk and pushed through ingest and
    factor construction."""
    out = tmp_path_factory.mktemp("market")
    cfg = synth.SynthConfig(seed=11, n_coins=30, n_days=240, n_stablecoins=1, n_marginal=2,
                            n_defunct=1)
    data = synth.generate(cfg, out)
    prices = ingest.load_prices(out / "prices.csv")
    meta = ingest.load_meta(out / "meta.csv")
    start, end = ingest.sample_span(prices)
    rf = ingest.load_riskfree(out / "riskfree.csv", start, end)
    returns = ingest.compute_returns(prices, rf)
    universe = ingest.build_universe(prices, meta)
    table, sorts = factors_mod.build_factors(returns, universe, prices, rf)
    return {
        "dir": out, "data": data, "prices": prices, "meta": meta, "rf": rf,
        "returns": returns, "universe": universe, "factors": table, "sorts": sorts,
        "followers": ingest.load_followers(out / "followers.csv"),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
