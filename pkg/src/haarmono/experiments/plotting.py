"""PNG figures written next to the CSV tables (opt-in, ``--plot``)."""

from __future__ import annotations

from pathlib import Path

from .harness import ExperimentResult


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _figure1(ax, result: ExperimentResult):
    rows = [dict(zip(result.columns, r)) for r in result.rows]
    for n_h in sorted({r["n_h"] for r in rows}):
        sel = [r for r in rows if r["n_h"] == n_h]
        x = [r["x"] for r in sel]
        line = ax.plot(x, [r["delta"] for r in sel], marker=".", label=f"n_h = {n_h}")[0]
        ax.fill_between(x, [-r["band"] for r in sel], [r["band"] for r in sel], color=line.get_color(), alpha=0.15)
    ax.axhline(0.0, color="k", lw=0.5)
    ax.set_xscale("symlog", linthresh=5.0)
    ax.set_xlabel("x")
    ax.set_ylabel("log-tail error")


def _figure2(ax, result: ExperimentResult):
    rows = [dict(zip(result.columns, r)) for r in result.rows]
    for m in sorted({r["m"] for r in rows}):
        sel = [r for r in rows if r["m"] == m]
        ax.plot([r["k"] for r in sel], [r["delta"] for r in sel], label=f"m = {m}")
    ax.set_xscale("log")
    ax.set_xlabel("k")
    ax.set_ylabel("L_tilde - L")


def _power(ax, result: ExperimentResult):
    rows = [dict(zip(result.columns, r)) for r in result.rows]
    for test in dict.fromkeys(r["test"] for r in rows):
        sel = [r for r in rows if r["test"] == test]
        ax.errorbar(
            [r["offset"] for r in sel],
            [r["beta_bar"] for r in sel],
            yerr=[2 * r["se"] for r in sel],
            marker="o",
            capsize=3,
            label=f"{test} ({sel[0]['snr_rule']})",
        )
    ax.set_xlabel("amplitude offset from sqrt(R)")
    ax.set_ylabel("average type II error")
    ax.set_ylim(-0.02, 1.02)


_DRAWERS = {"figure1": _figure1, "figure2": _figure2, "power_sweep": _power}


def render(result: ExperimentResult, csv_path) -> Path | None:
    """Draw the result to ``csv_path`` with a ``.png`` suffix; ``None`` if there is no figure for it."""
    drawer = _DRAWERS.get(result.config.experiment)
    if drawer is None:
        return None
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    drawer(ax, result)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out = Path(csv_path).with_suffix(".png")
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(out, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return out
