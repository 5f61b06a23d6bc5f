"""Pipeline stages. Each stage reads its inputs from the raw files named in
the config and from earlier stages' outputs in the output directory, and
writes CSV artifacts headed by a provenance block."""

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pandas as pd

from . import characteristics as chars_mod
from . import econometrics as ec
from . import factors as factors_mod
from . import ingest, plotting, riskmodel, synth
from .errors import ConfigError
from .stagelog import StageLog, logger

STAGES = ("ingest", "factors", "ivol", "chars", "panel", "vif", "report")
MODELS = (riskmodel.THREE_FACTOR, riskmodel.CAPM)
PANEL_FILES = {riskmodel.THREE_FACTOR: "panel.csv", riskmodel.CAPM: "panel_capm.csv"}
CONTROLS = ["size", "mom", "volume", "amihud", "category"]
NESTED = [("(1)", ["d_investor_base"])] + [
    (f"({i + 2})", ["d_investor_base", *CONTROLS[: i + 1]]) for i in range(len(CONTROLS))
]
VIF_SETS = {
    "vif.csv": ["d_investor_base", "size", "mom", "volume", "amihud"],
    "vif_no_volume.csv": ["d_investor_base", "size", "mom", "amihud"],
    "vif_no_size.csv": ["d_investor_base", "mom", "volume", "amihud"],
}
_SYNTH_ONLY = ("synth", "seed", "threads", "base_dir")
FULL_PRECISION = "%.17g"
DEFAULT_PRECISION = "%.10g"


# ---------------------------------------------------------------------------
# file helpers
# ---------------------------------------------------------------------------

def _header(cfg, stage):
    return f"# cryptofactor {stage}\n# config: {cfg.provenance()}\n"


def write_csv(frame, path, cfg, stage, float_format=DEFAULT_PRECISION):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = frame.copy()
    for col in frame.columns:
        if pd.api.types.is_datetime64_any_dtype(frame[col]):
            frame[col] = frame[col].dt.strftime("%Y-%m-%d")
        elif isinstance(frame[col].dtype, pd.PeriodDtype):
            frame[col] = frame[col].astype(str)
    with open(path, "w", newline="") as fh:
        fh.write(_header(cfg, stage))
        frame.to_csv(fh, index=False, float_format=float_format, lineterminator="\n")
    return path


def write_text(text, path, cfg, stage):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_header(cfg, stage) + text)
    return path


def read_csv(path, needed_by, dates=(), months=()):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path} not found; run the '{needed_by}' stage first")
    frame = pd.read_csv(path, comment="#", dtype={"coin_id": str})
    for col in dates:
        frame[col] = pd.to_datetime(frame[col], format="%Y-%m-%d")
    for col in months:
        frame[col] = pd.PeriodIndex(frame[col], freq="M")
    return frame


def _write_log(log, cfg, stage):
    return write_csv(log.to_frame(), cfg.out / f"{stage}_log.csv", cfg, stage)


def _load_raw(cfg, followers=False):
    prices = ingest.load_prices(cfg.path("prices"))
    meta = ingest.load_meta(cfg.path("meta"))
    start, end = ingest.sample_span(prices)
    rf = ingest.load_riskfree(cfg.path("riskfree"), start, end)
    out = {"prices": prices, "meta": meta, "rf": rf}
    if followers:
        out["followers"] = ingest.load_followers(cfg.path("followers"))
    return out


def _winsor(cfg):
    return tuple(cfg.winsor_limits) if cfg.winsorize else None


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_ingest(cfg):
    raw = _load_raw(cfg, followers=True)
    log = StageLog()
    returns = ingest.compute_returns(raw["prices"], raw["rf"], cfg.max_gap_days, log=log)
    universe = ingest.build_universe(raw["prices"], raw["meta"], cfg.mcap_floor, log=log)
    sample = ingest.build_regression_sample(universe, raw["meta"], cfg.min_years, log=log)
    out = cfg.out
    written = [
        write_csv(returns, out / "returns.csv", cfg, "ingest", FULL_PRECISION),
        write_csv(universe, out / "universe.csv", cfg, "ingest"),
        write_csv(pd.DataFrame({"coin_id": sorted(sample)}), out / "sample.csv", cfg, "ingest"),
        _write_log(log, cfg, "ingest"),
    ]
    logger.info("ingest: %d returns, %d coins in regression sample", len(returns), len(sample))
    return written


def _returns(cfg):
    return read_csv(cfg.out / "returns.csv", "ingest", dates=("date", "prev_date"))


def stage_factors(cfg):
    raw = _load_raw(cfg)
    returns = _returns(cfg)
    universe = read_csv(cfg.out / "universe.csv", "ingest", dates=("date",))
    log = StageLog()
    table, sorts = factors_mod.build_factors(returns, universe, raw["prices"], raw["rf"],
                                             anchor=cfg.week_anchor, min_coins=cfg.min_coins,
                                             log=log)
    rows = []
    for s in sorts:
        for coin in sorted(s.size_groups):
            rows.append({
                "week_start": s.week_start, "coin_id": coin,
                "formation_cap": s.formation_caps[coin], "size_group": s.size_groups[coin],
                "size_half": s.size_halves.get(coin, ""),
                "momentum_score": s.momentum_scores.get(coin, np.nan),
                "momentum_group": s.momentum_groups.get(coin, ""),
            })
    out = cfg.out
    written = [
        write_csv(table, out / "factors.csv", cfg, "factors"),
        write_csv(pd.DataFrame(rows), out / "weekly_sorts.csv", cfg, "factors"),
        _write_log(log, cfg, "factors"),
    ]
    if len(table) >= 30:
        corr = factors_mod.factor_correlations(table).reset_index(names="factor")
        written.append(write_csv(corr, out / "factor_correlations.csv", cfg, "factors"))
    logger.info("factors: %d complete factor days", len(table))
    return written


def stage_ivol(cfg):
    returns = _returns(cfg)
    sample = set(read_csv(cfg.out / "sample.csv", "ingest")["coin_id"])
    table = read_csv(cfg.out / "factors.csv", "factors", dates=("date",))
    log = StageLog()
    panels, ew = [], []
    for model in MODELS:
        p = riskmodel.ivol_panel(returns, table, model, sample=sample, min_obs=cfg.min_obs,
                                 dof=cfg.ivol_dof, winsor=_winsor(cfg), threads=cfg.threads,
                                 log=log)
        panels.append(p)
        if not p.empty:
            s = riskmodel.ew_ivol_series(p)
            s.insert(0, "model", model)
            ew.append(s)
    ivol = pd.concat(panels, ignore_index=True)[riskmodel.IVOL_COLUMNS]
    out = cfg.out
    return [
        write_csv(ivol, out / "ivol.csv", cfg, "ivol"),
        write_csv(pd.concat(ew, ignore_index=True) if ew else
                  pd.DataFrame(columns=["model", "month", "mean_ivol_percent"]),
                  out / "ew_ivol.csv", cfg, "ivol"),
        _write_log(log, cfg, "ivol"),
    ]


def stage_chars(cfg):
    raw = _load_raw(cfg, followers=True)
    returns = _returns(cfg)
    table = chars_mod.monthly_characteristics(raw["prices"], returns)
    dib = chars_mod.investor_base_changes(raw["followers"], cfg.dib_mode, cfg.dib_scale)
    table = table.merge(dib, on=["coin_id", "month"], how="outer")
    table = table.sort_values(["coin_id", "month"], kind="mergesort")
    return [write_csv(table, cfg.out / "characteristics.csv", cfg, "chars")]


def _dib_label(cfg):
    unit = "" if cfg.dib_scale == 1 else f" / {cfg.dib_scale:g}"
    return f"d_investor_base = {cfg.dib_mode} change in subreddit followers{unit}"


def fit_nested(panel, se_type):
    return [ec.two_way_fe(panel, ec.FeSpec("ivol", tuple(regs), se_type=se_type))
            for _, regs in NESTED]


def stage_panel(cfg):
    raw = _load_raw(cfg, followers=True)
    ivol = read_csv(cfg.out / "ivol.csv", "ivol", months=("month",))
    table = read_csv(cfg.out / "characteristics.csv", "chars", months=("month",))
    table = table[["coin_id", "month", *chars_mod.CHAR_COLUMNS]]
    log = StageLog()
    out = cfg.out
    written, results, texts = [], [], []
    columns = [name for name, _ in NESTED]
    for model in MODELS:
        dep = ivol[ivol["model"] == model]
        panel = chars_mod.assemble_panel(dep, table, raw["followers"], raw["meta"],
                                         cfg.dib_mode, cfg.dib_scale, log=log)
        if cfg.winsorize:
            panel = chars_mod.winsorize_columns(panel, chars_mod.CHAR_COLUMNS + ["d_investor_base"],
                                                cfg.winsor_limits)
        written.append(write_csv(panel, out / PANEL_FILES[model], cfg, "panel"))
        se_types = [cfg.se_type] + [s for s in ec.SE_TYPES if s != cfg.se_type]
        for se_type in se_types:
            fits = fit_nested(panel, se_type)
            results.append(ec.results_frame(fits, columns, model))
            texts.append(ec.regression_table(fits, columns, title=f"IVOL model: {model}, SE: {se_type}"))
    text = _dib_label(cfg) + "\n\n" + "\n".join(texts)
    written += [
        write_csv(pd.concat(results, ignore_index=True), out / "results.csv", cfg, "panel"),
        write_text(text, out / "results.txt", cfg, "panel"),
        _write_log(log, cfg, "panel"),
    ]
    return written


def stage_vif(cfg):
    panel = read_csv(cfg.out / "panel.csv", "panel", months=("month",))
    return [write_csv(ec.vif(panel, regs), cfg.out / name, cfg, "vif")
            for name, regs in VIF_SETS.items()]


def _truth_path(cfg):
    if cfg.truth:
        return cfg.path("truth")
    candidate = cfg.path("prices").parent / "truth.json"
    return candidate if candidate.is_file() else None


def truth_vs_estimate(truth, results, ivol, truth_sigma=None):
    """Compare synthetic ground truth with pipeline estimates."""
    rows = []
    b1 = truth["panel_b1"]
    sel = results[(results["model"] == riskmodel.THREE_FACTOR) & (results["term"] == "d_investor_base")]
    for _, r in sel.iterrows():
        rows.append({"quantity": f"b1 {r['column']} {r['se_type']}", "truth": b1,
                     "estimate": r["estimate"], "se": r["se"],
                     "detail": f"t_vs_truth={(r['estimate'] - b1) / r['se']:.3f}"})
    coins = pd.DataFrame(truth["coins"]).set_index("coin_id")
    est = ivol[ivol["model"] == riskmodel.THREE_FACTOR].groupby("coin_id")["beta_mrkt"].mean()
    common = est.index.intersection(coins.index)
    if len(common) > 2:
        rows.append({"quantity": "corr(mean beta_mrkt, true beta)", "truth": 1.0,
                     "estimate": float(np.corrcoef(est[common], coins.loc[common, "beta_mrkt"])[0, 1]),
                     "se": np.nan, "detail": f"coins={len(common)}"})
    if truth_sigma is not None:
        three = ivol[ivol["model"] == riskmodel.THREE_FACTOR]
        three = three.assign(month=three["month"].astype(str))
        m = three.merge(truth_sigma.assign(month=truth_sigma["month"].astype(str)),
                        on=["coin_id", "month"])
        if len(m) > 2:
            rows.append({"quantity": "corr(ivol, true sigma)", "truth": 1.0,
                         "estimate": float(np.corrcoef(m["ivol"], m["sigma"])[0, 1]),
                         "se": np.nan, "detail": f"coin_months={len(m)}"})
    return pd.DataFrame(rows, columns=["quantity", "truth", "estimate", "se", "detail"])


def stage_report(cfg):
    out = cfg.out
    factor_table = read_csv(out / "factors.csv", "factors", dates=("date",))
    ivol = read_csv(out / "ivol.csv", "ivol", months=("month",))
    ew = read_csv(out / "ew_ivol.csv", "ivol", months=("month",))
    panel = read_csv(out / "panel.csv", "panel", months=("month",))
    results = read_csv(out / "results.csv", "panel")
    vifs = {name: read_csv(out / name, "vif") for name in VIF_SETS}
    results_txt = out / "results.txt"
    if not results_txt.is_file():
        raise ConfigError(f"{results_txt} not found; run the 'panel' stage first")

    stats = chars_mod.summary_stats(panel)
    corr_cols = ["ivol", *chars_mod.REGRESSORS]
    corr = chars_mod.panel_correlations(panel, corr_cols)
    written = [
        write_csv(stats.reset_index(), out / "summary_stats.csv", cfg, "report"),
        write_csv(corr.reset_index(names="variable"), out / "panel_correlations.csv", cfg, "report"),
    ]
    figures = out / "figures"
    series = {m: g.drop(columns="model") for m, g in ew.groupby("model")}
    written.append(plotting.plot_ew_ivol(series, figures / "ew_ivol.png"))
    written.append(plotting.plot_factor_cumulative(factor_table, figures / "factors_cumulative.png"))
    written.append(plotting.plot_correlation_matrix(corr, figures / "panel_correlations.png"))
    fcorr = None
    if len(factor_table) >= 30:
        fcorr = factors_mod.factor_correlations(factor_table)
        written.append(plotting.plot_correlation_matrix(fcorr, figures / "factor_correlations.png",
                                                        "Factor correlations"))

    sections = []
    if fcorr is not None:
        sections.append("Factor correlations\n" + fcorr.to_string(float_format=lambda v: f"{v:.3f}"))
    sections.append("Summary statistics\n" + stats.to_string(float_format=lambda v: f"{v:.4g}"))
    sections.append("Panel correlations\n" + corr.to_string(float_format=lambda v: f"{v:.3f}"))
    body = results_txt.read_text().split("\n", 2)[2]
    sections.append(body.rstrip())
    for name, frame in vifs.items():
        sections.append(f"VIF ({name})\n" + frame.to_string(index=False, float_format=lambda v: f"{v:.3f}"))
    sections.append("Equal-weighted ivol (%)\n" + ew.to_string(index=False, float_format=lambda v: f"{v:.3f}"))

    truth_file = _truth_path(cfg)
    if truth_file is not None:
        truth = json.loads(Path(truth_file).read_text())
        sigma_file = Path(truth_file).parent / "truth_sigma.csv"
        sigma = pd.read_csv(sigma_file, dtype={"coin_id": str}) if sigma_file.is_file() else None
        tve = truth_vs_estimate(truth, results, ivol, sigma)
        written.append(write_csv(tve, out / "truth_vs_estimate.csv", cfg, "report"))
        sections.append("Truth vs estimate\n" + tve.to_string(index=False))
    written.append(write_text("\n\n".join(sections) + "\n", out / "report.txt", cfg, "report"))
    return written


def stage_synth(cfg):
    """Write a synthetic input set and a ready-to-run config into the output
    directory."""
    options = dict(cfg.synth)
    options["seed"] = cfg.seed
    options.setdefault("dib_mode", cfg.dib_mode)
    options.setdefault("dib_scale", cfg.dib_scale)
    scfg = synth.SynthConfig.from_dict(options)
    synth.generate(scfg, cfg.out)
    # analysis settings carry over from the invoking config; paths point at
    # the generated files
    run_cfg = {k: v for k, v in asdict(cfg).items() if k not in _SYNTH_ONLY}
    run_cfg.update({
        "prices": "prices.csv", "meta": "meta.csv", "followers": "followers.csv",
        "riskfree": "riskfree.csv", "truth": "truth.json", "output_dir": "results",
        "dib_mode": scfg.dib_mode, "dib_scale": scfg.dib_scale,
        "winsor_limits": list(cfg.winsor_limits),
    })
    path = cfg.out / "config.json"
    path.write_text(json.dumps(run_cfg, indent=2, sort_keys=True) + "\n")
    logger.info("synth: %d coins x %d days written to %s", scfg.n_coins, scfg.n_days, cfg.out)
    return [path] + [cfg.out / n for n in ("prices.csv", "meta.csv", "followers.csv",
                                           "riskfree.csv", "truth.json")]


STAGE_FUNCS = {
    "ingest": stage_ingest,
    "factors": stage_factors,
    "ivol": stage_ivol,
    "chars": stage_chars,
    "panel": stage_panel,
    "vif": stage_vif,
    "report": stage_report,
    "synth": stage_synth,
}


def run(subcommand, cfg):
    if subcommand == "all":
        written = []
        for stage in STAGES:
            written += STAGE_FUNCS[stage](cfg)
        return written
    if subcommand not in STAGE_FUNCS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    return STAGE_FUNCS[subcommand](cfg)
