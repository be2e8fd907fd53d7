"""Figure rendering for the report commands.

Every function takes a finished Report and writes one PNG next to the
delimited outputs. Rendering is deterministic: fixed canvas, fixed ordering,
no timestamps in the file metadata.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .reports import Report

_SAVE_KWARGS = {"dpi": 120, "metadata": {"Date": None}}


def _save(fig, path) -> None:
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_rmse_figure(report: Report, path) -> None:
    """Grouped bars: monitor RMSE next to baseline RMSE per pool member."""
    rows = [r for r in report.row_dicts() if r["status"] == "ok"]
    models = [r["model_id"] for r in rows]
    monitor = [r["monitor_rmse"] for r in rows]
    baseline = [r["baseline_rmse"] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = range(len(models))
    width = 0.38
    ax.bar([x - width / 2 for x in xs], monitor, width, label="monitor")
    ax.bar([x + width / 2 for x in xs], baseline, width, label="holdout baseline")
    ax.set_xticks(list(xs), models)
    ax.set_ylabel("RMSE of predicted sMAPE")
    ax.set_title("Error prediction quality per monitored model")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def save_ranking_figure(report: Report, path) -> None:
    """Dot plot of realized vs predicted mean sMAPE, in true-rank order."""
    rows = report.row_dicts()
    models = [r["model_id"] for r in rows]
    ys = range(len(models), 0, -1)
    fig, ax = plt.subplots(figsize=(7, 0.6 * len(models) + 2))
    ax.scatter([r["true_mean"] for r in rows], ys, label="realized", marker="o")
    ax.scatter(
        [r["predicted_mean"] for r in rows], ys, label="predicted", marker="x"
    )
    ax.set_yticks(list(ys), models)
    ax.set_xlabel("mean sMAPE")
    ax.set_title("Model ranking: realized vs predicted")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def save_curve_figure(report: Report, path, title: str) -> None:
    """Per-period mean lines with a one-standard-deviation band."""
    rows = report.row_dicts()
    strategies = sorted({r["strategy"] for r in rows})
    fig, ax = plt.subplots(figsize=(7, 4))
    for strategy in strategies:
        mine = [r for r in rows if r["strategy"] == strategy]
        mine.sort(key=lambda r: r["period"])
        xs = [r["period"] for r in mine]
        means = [r["mean"] for r in mine]
        stds = [r["std"] for r in mine]
        line = ax.plot(xs, means, marker="o", label=strategy)[0]
        ax.fill_between(
            xs,
            [m - s for m, s in zip(means, stds)],
            [m + s for m, s in zip(means, stds)],
            alpha=0.15,
            color=line.get_color(),
        )
    ax.set_xlabel("period index within the horizon")
    ax.set_ylabel("realized sMAPE")
    ax.set_title(title)
    ax.set_xticks(sorted({r["period"] for r in rows}))
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def save_sentinel_figure(
    report: Report, alert_counts: dict, path
) -> None:
    """Sentinel curve plus re-selection counts per checkpoint step."""
    rows = report.row_dicts()
    strategies = sorted({r["strategy"] for r in rows})
    fig, (ax, ax2) = plt.subplots(
        2, 1, figsize=(7, 6), sharex=False, height_ratios=[3, 1]
    )
    for strategy in strategies:
        mine = [r for r in rows if r["strategy"] == strategy]
        mine.sort(key=lambda r: r["period"])
        ax.plot(
            [r["period"] for r in mine],
            [r["mean"] for r in mine],
            marker="o",
            label=strategy,
        )
    ax.set_xlabel("period index within the horizon")
    ax.set_ylabel("realized sMAPE")
    ax.set_title("Sentinel run")
    ax.set_xticks(sorted({r["period"] for r in rows}))
    ax.legend()
    steps = sorted(alert_counts)
    ax2.bar([str(s) for s in steps], [alert_counts[s] for s in steps])
    ax2.set_xlabel("checkpoint step")
    ax2.set_ylabel("re-selections")
    fig.tight_layout()
    _save(fig, path)
