"""Least squares, two-way fixed-effects panel regression and VIF diagnostics."""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg, stats

from .errors import RankDeficient, TooFewGroups, Underdetermined
from .stagelog import logger

HOMOSKEDASTIC = "homoskedastic"
CLUSTER_COIN = "cluster_coin"
SE_TYPES = (HOMOSKEDASTIC, CLUSTER_COIN)

VIF_THRESHOLD = 10.0
# auxiliary fits closer than this to a perfect fit are reported as infinite VIF
_PERFECT_FIT = 1e-12


@dataclass
class OlsFit:
    coefficients: np.ndarray
    standard_errors: np.ndarray
    t_stats: np.ndarray
    residuals: np.ndarray
    r2: float
    n: int
    k: int
    names: list
    xtx_inv: np.ndarray
    rss: float

    def params(self):
        return pd.Series(self.coefficients, index=self.names)


def ols(X, y, intercept=True, names=None, rank_tol=1e-10):
    """Ordinary least squares through a Householder QR factorisation.

    Columns are scaled to unit norm before factorising so that the rank test
    (``|R_jj| < rank_tol * max|R_ii|``) does not depend on the units of the
    regressors.

    Parameters
    ----------
    X : array_like, shape (n,) or (n, p)
        Regressors, without a constant column.
    y : array_like, shape (n,)
    intercept : bool
        Prepend a column of ones. The intercept is reported as ``const``.
    names : list of str, optional
        Regressor names; defaults to ``x0, x1, ...``.

    Raises
    ------
    Underdetermined
        If there are not more rows than columns.
    RankDeficient
        For the first column that is (numerically) a linear combination of
        the preceding ones.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    if y.shape[0] != n:
        raise ValueError(f"X has {n} rows but y has {y.shape[0]}")
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise ValueError("names do not match the number of columns")
    if intercept:
        X = np.column_stack([np.ones(n), X])
        names = ["const"] + names
    k = X.shape[1]
    if k == 0:
        raise Underdetermined("design matrix has no columns")
    if n <= k:
        raise Underdetermined(f"{n} observations for {k} parameters")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in regression inputs")

    norms = np.linalg.norm(X, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise RankDeficient(int(zero[0]), names[zero[0]])
    Q, R = np.linalg.qr(X / norms)
    diag = np.abs(np.diag(R))
    bad = np.flatnonzero(diag < rank_tol * diag.max())
    if bad.size:
        raise RankDeficient(int(bad[0]), names[bad[0]])

    qty = Q.T @ y
    coef = linalg.solve_triangular(R, qty) / norms
    resid = y - Q @ qty
    r_inv = linalg.solve_triangular(R, np.eye(k))
    xtx_inv = (r_inv @ r_inv.T) / np.outer(norms, norms)

    rss = float(resid @ resid)
    sigma2 = rss / (n - k)
    se = np.sqrt(sigma2 * np.diag(xtx_inv))
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = coef / se
    if intercept:
        tss = float(np.sum((y - y.mean()) ** 2))
    else:
        tss = float(y @ y)
    r2 = min(max(1.0 - rss / tss, 0.0), 1.0) if tss > 0 else 0.0
    return OlsFit(coef, se, tstat, resid, r2, n, k, names, xtx_inv, rss)


# ---------------------------------------------------------------------------
# two-way fixed effects
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeSpec:
    dependent: str
    regressors: tuple
    fe_coin: bool = True
    fe_month: bool = True
    se_type: str = HOMOSKEDASTIC
    entity: str = "coin_id"
    time: str = "month"

    def __post_init__(self):
        regs = tuple(self.regressors)
        object.__setattr__(self, "regressors", regs)
        if not regs:
            raise ValueError("at least one regressor is required")
        if len(set(regs)) != len(regs):
            raise ValueError(f"duplicate regressors in {regs}")
        if self.dependent in regs:
            raise ValueError("dependent variable listed as a regressor")
        if self.se_type not in SE_TYPES:
            raise ValueError(f"se_type must be one of {SE_TYPES}")


@dataclass
class FeTerm:
    name: str
    beta: float
    se: float
    t: float
    p: float
    status: str = "estimated"


@dataclass
class FeFit:
    spec: FeSpec
    terms: dict
    within_r2: float
    n_rows: int
    n_coins: int
    n_months: int
    dropped_singletons: int
    dof: int
    rss: float
    residuals: np.ndarray = field(repr=False, default=None)

    @property
    def params(self):
        return pd.Series({name: term.beta for name, term in self.terms.items()})

    @property
    def bse(self):
        return pd.Series({name: term.se for name, term in self.terms.items()})

    def absorbed(self):
        return [name for name, term in self.terms.items() if term.status == "absorbed"]


def drop_singletons(frame, spec):
    """Iteratively remove coins and months observed only once.

    Returns the reduced frame and the number of rows removed. Removing a
    singleton month can create a singleton coin and vice versa, hence the
    loop.
    """
    keys = [(spec.entity, spec.fe_coin), (spec.time, spec.fe_month)]
    active = [col for col, on in keys if on]
    out = frame
    while active:
        before = len(out)
        for col in active:
            counts = out[col].map(out[col].value_counts())
            out = out[counts.to_numpy() > 1]
        if len(out) == before:
            break
    return out, len(frame) - len(out)


def prepare_panel(panel, spec):
    cols = [spec.entity, spec.time, spec.dependent, *spec.regressors]
    missing = [c for c in cols if c not in panel.columns]
    if missing:
        raise KeyError(f"panel lacks columns {missing}")
    frame = panel[cols].dropna()
    frame, dropped = drop_singletons(frame, spec)
    frame = frame.sort_values([spec.entity, spec.time], kind="mergesort")
    n_coins = frame[spec.entity].nunique()
    n_months = frame[spec.time].nunique()
    if (spec.fe_coin and n_coins < 2) or (spec.fe_month and n_months < 2) or len(frame) < 2:
        raise TooFewGroups(
            f"need >= 2 coins and >= 2 months after dropping singletons, "
            f"have {n_coins} coins, {n_months} months"
        )
    return frame, dropped


def _group_codes(values):
    codes, uniques = pd.factorize(values, sort=True)
    return codes, len(uniques)


def demean(values, groupings, tol=1e-12, max_sweeps=100):
    """Alternating projections: subtract group means for each grouping in turn.

    ``values`` is an (n, m) array, ``groupings`` a list of integer code
    arrays. Iterates until the largest mean removed in a sweep falls below
    ``tol`` times the column's scale. With a single grouping one sweep is
    exact.
    """
    v = np.array(values, dtype=float, copy=True)
    if not groupings:
        return v - v.mean(axis=0), 1
    scale = np.maximum(np.abs(v).max(axis=0), np.finfo(float).tiny)
    prepared = []
    for codes in groupings:
        size = int(codes.max()) + 1
        prepared.append((codes, size, np.bincount(codes, minlength=size).astype(float)))
    for sweep in range(1, max_sweeps + 1):
        change = np.zeros(v.shape[1])
        for codes, size, counts in prepared:
            for j in range(v.shape[1]):
                means = np.bincount(codes, weights=v[:, j], minlength=size) / counts
                v[:, j] -= means[codes]
                change[j] = max(change[j], np.abs(means).max())
        if len(prepared) == 1 or np.all(change < tol * scale):
            return v, sweep
    logger.warning("fixed-effects demeaning did not converge in %d sweeps", max_sweeps)
    return v, max_sweeps


def _fe_dof(n, k, n_coins, n_months, spec):
    dof = n - k - 1
    if spec.fe_coin:
        dof -= n_coins - 1
    if spec.fe_month:
        dof -= n_months - 1
    return dof


def _cluster_cov(Xt, resid, bread, clusters, n, k, n_months, spec):
    codes, n_groups = _group_codes(clusters)
    if n_groups < 2:
        raise TooFewGroups("clustered standard errors need at least 2 coins")
    scores = Xt * resid[:, None]
    sums = np.column_stack(
        [np.bincount(codes, weights=scores[:, j], minlength=n_groups) for j in range(Xt.shape[1])]
    )
    meat = sums.T @ sums
    # coin effects are nested in coin clusters and do not enter the count
    used = k + 1 + ((n_months - 1) if spec.fe_month else 0)
    factor = n_groups / (n_groups - 1) * (n - 1) / (n - used)
    return factor * bread @ meat @ bread


def _terms(names, beta, cov, absorbed, order):
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = beta / se
    p = 2.0 * stats.norm.sf(np.abs(t))
    est = {name: FeTerm(name, float(b), float(s), float(tt), float(pp))
           for name, b, s, tt, pp in zip(names, beta, se, t, p)}
    terms = {}
    for name in order:
        if name in absorbed:
            terms[name] = FeTerm(name, np.nan, np.nan, np.nan, np.nan, "absorbed")
        else:
            terms[name] = est[name]
    return terms


def two_way_fe(panel, spec, tol=1e-12, max_sweeps=100):
    """Fixed-effects regression by the within transformation.

    The dependent variable and every regressor are demeaned by coin and by
    month (alternating until converged), then regressed on each other without
    a constant. Regressors with no variation left after demeaning (e.g. a
    coin-level dummy under coin effects) are reported with status
    ``absorbed`` instead of failing.
    """
    frame, dropped = prepare_panel(panel, spec)
    n = len(frame)
    groupings, sizes = [], {}
    for col, on in ((spec.entity, spec.fe_coin), (spec.time, spec.fe_month)):
        codes, size = _group_codes(frame[col].to_numpy())
        sizes[col] = size
        if on:
            groupings.append(codes)
    n_coins, n_months = sizes[spec.entity], sizes[spec.time]

    raw = frame[[spec.dependent, *spec.regressors]].to_numpy(dtype=float)
    within, _ = demean(raw, groupings, tol=tol, max_sweeps=max_sweeps)
    y_t = within[:, 0]

    keep, absorbed = [], set()
    for j, name in enumerate(spec.regressors, start=1):
        centred = np.linalg.norm(raw[:, j] - raw[:, j].mean())
        if centred == 0 or np.linalg.norm(within[:, j]) <= 1e-9 * centred:
            absorbed.add(name)
            logger.info("regressor %s absorbed by fixed effects", name)
        else:
            keep.append(j)
    if not keep:
        raise RankDeficient(0, spec.regressors[0])
    names = [spec.regressors[j - 1] for j in keep]
    X_t = within[:, keep]
    fit = ols(X_t, y_t, intercept=False, names=names)
    k = len(keep)
    dof = _fe_dof(n, k, n_coins, n_months, spec)
    if dof <= 0:
        raise Underdetermined(f"no residual degrees of freedom ({n} rows)")

    if spec.se_type == HOMOSKEDASTIC:
        cov = fit.rss / dof * fit.xtx_inv
    else:
        cov = _cluster_cov(X_t, fit.residuals, fit.xtx_inv, frame[spec.entity].to_numpy(),
                           n, k, n_months, spec)
    tss = float(y_t @ y_t)
    within_r2 = min(max(1.0 - fit.rss / tss, 0.0), 1.0) if tss > 0 else 0.0
    return FeFit(
        spec=spec,
        terms=_terms(names, fit.coefficients, cov, absorbed, spec.regressors),
        within_r2=within_r2,
        n_rows=n,
        n_coins=n_coins,
        n_months=n_months,
        dropped_singletons=dropped,
        dof=dof,
        rss=fit.rss,
        residuals=fit.residuals,
    )


# ---------------------------------------------------------------------------
# variance inflation factors
# ---------------------------------------------------------------------------

def vif(panel, regressors, threshold=VIF_THRESHOLD):
    """Variance inflation factor of each regressor against all the others.

    Each auxiliary regression includes an intercept. Perfectly collinear
    regressors get ``inf``.

    Returns
    -------
    pandas.DataFrame
        Columns ``regressor, vif, r2_aux, flagged``.
    """
    regressors = list(regressors)
    if len(regressors) < 2:
        raise ValueError("VIF needs at least two regressors")
    data = panel[regressors].dropna().to_numpy(dtype=float)
    rows = []
    for j, name in enumerate(regressors):
        others = np.delete(data, j, axis=1)
        try:
            fit = ols(others, data[:, j], intercept=True)
            r2 = fit.r2
        except RankDeficient:
            r2 = 1.0
        if 1.0 - r2 < _PERFECT_FIT:
            value, r2 = np.inf, 1.0
        else:
            value = 1.0 / (1.0 - r2)
        rows.append((name, value, r2, bool(value > threshold)))
    return pd.DataFrame(rows, columns=["regressor", "vif", "r2_aux", "flagged"])


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------

def stars(p):
    if not np.isfinite(p):
        return ""
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.10:
        return "*"
    return ""


def _fmt(x):
    return f"{x:.4g}"


def regression_table(fits, column_names=None, title=None):
    """Side-by-side text table of nested fixed-effects specifications.

    Coefficients carry significance stars at the 10/5/1% two-sided levels,
    standard errors appear in parentheses beneath.
    """
    fits = list(fits)
    if column_names is None:
        column_names = [f"({i + 1})" for i in range(len(fits))]
    if fits and len({f.spec.dependent for f in fits}) > 1:
        raise ValueError("fits in one table must share the dependent variable")

    lines = []
    if title:
        lines.append(title)
    dep = fits[0].spec.dependent if fits else ""
    lines.append(f"Dependent variable: {dep}")
    terms = []
    for f in fits:
        terms.extend(t for t in f.spec.regressors if t not in terms)

    label_w = max([len("Observations"), *(len(t) for t in terms)]) + 2
    col_w = 14
    header = " " * label_w + "".join(f"{c:>{col_w}}" for c in column_names)
    rule = "-" * len(header)
    lines += [rule, header, rule]
    if not fits:
        return "\n".join(lines) + "\n"

    for term in terms:
        coef_row, se_row = [], []
        for f in fits:
            t = f.terms.get(term)
            if t is None:
                coef_row.append("")
                se_row.append("")
            elif t.status == "absorbed":
                coef_row.append("absorbed")
                se_row.append("")
            else:
                coef_row.append(_fmt(t.beta) + stars(t.p))
                se_row.append(f"({_fmt(t.se)})")
        lines.append(f"{term:<{label_w}}" + "".join(f"{c:>{col_w}}" for c in coef_row))
        lines.append(" " * label_w + "".join(f"{c:>{col_w}}" for c in se_row))
    lines.append(rule)

    def footer(label, values):
        lines.append(f"{label:<{label_w}}" + "".join(f"{v:>{col_w}}" for v in values))

    footer("Coin FE", ["Yes" if f.spec.fe_coin else "No" for f in fits])
    footer("Month FE", ["Yes" if f.spec.fe_month else "No" for f in fits])
    footer("SE", ["cluster" if f.spec.se_type == CLUSTER_COIN else "homosk." for f in fits])
    footer("Observations", [str(f.n_rows) for f in fits])
    footer("Within R2", [f"{f.within_r2:.4f}" for f in fits])
    lines.append(rule)
    lines.append("* p<0.10, ** p<0.05, *** p<0.01 (two-sided, normal)")
    return "\n".join(lines) + "\n"


def results_frame(fits, column_names, model):
    """Long machine-readable form of a list of fits."""
    rows = []
    for col, f in zip(column_names, fits):
        for term in f.terms.values():
            rows.append({
                "model": model,
                "column": col,
                "se_type": f.spec.se_type,
                "term": term.name,
                "estimate": term.beta,
                "se": term.se,
                "t": term.t,
                "p": term.p,
                "stars": stars(term.p),
                "status": term.status,
                "n_rows": f.n_rows,
                "n_coins": f.n_coins,
                "n_months": f.n_months,
                "within_r2": f.within_r2,
            })
    return pd.DataFrame(rows)
