"""Report figures. Everything renders off-screen to PNG files."""

from contextlib import contextmanager

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps or version strings in the files, so reruns are byte-identical
_PNG_META = {"Software": None}

_STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "lines.linewidth": 1.2,
    "figure.dpi": 100,
    "savefig.dpi": 150,
}


@contextmanager
def report_style():
    with matplotlib.rc_context(_STYLE):
        yield


def _save(fig, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", metadata=_PNG_META, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_ew_ivol(series_by_model, path):
    """Equal-weighted mean ivol (percent) per month, one line per model."""
    with report_style():
        fig, ax = plt.subplots(figsize=(7, 3))
        for model, series in sorted(series_by_model.items()):
            x = series["month"].dt.to_timestamp()
            ax.plot(x, series["mean_ivol_percent"], label=model)
        ax.set_ylabel("idiosyncratic volatility (%)")
        ax.set_title("Equal-weighted average idiosyncratic volatility")
        ax.legend()
        return _save(fig, path)


def plot_factor_cumulative(factors, path):
    with report_style():
        fig, ax = plt.subplots(figsize=(7, 3))
        for name in ("mrkt", "smb", "wml"):
            ax.plot(factors["date"], np.cumprod(1.0 + factors[name].to_numpy()), label=name.upper())
        ax.set_yscale("log")
        ax.set_ylabel("growth of $1")
        ax.set_title("Cumulative factor returns")
        ax.legend()
        return _save(fig, path)


def plot_correlation_matrix(corr, path, title="Pearson correlations"):
    labels = list(corr.columns)
    with report_style():
        fig, ax = plt.subplots(figsize=(1.0 + 0.7 * len(labels), 0.8 + 0.6 * len(labels)))
        im = ax.imshow(corr.to_numpy(), vmin=-1, vmax=1, cmap="RdBu_r")
        ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right")
        ax.set_yticks(range(len(labels)), labels)
        for i in range(len(labels)):
            for j in range(len(labels)):
                ax.text(j, i, f"{corr.iat[i, j]:.2f}", ha="center", va="center", fontsize=7)
        ax.set_title(title)
        fig.colorbar(im, ax=ax, shrink=0.8)
        return _save(fig, path)
