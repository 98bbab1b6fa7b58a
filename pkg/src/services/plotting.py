"""SVG plots of sweep results.

Uses the non-interactive Agg backend and a fixed SVG hash salt with no date
metadata, so the same rows always produce the same file.
"""

import logging
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

logger = logging.getLogger(__name__)

AXIS_LABELS = {
    "mu": "signal mean photon number",
    "distance": "fibre length (km)",
}

SVG_HASH_SALT = "qkdrate"


def plot_sweep(rows: Sequence, axis: str, path: Path) -> None:
    """One curve per variant; distance sweeps use a logarithmic rate axis.

    Failed points and, on a log axis, zero rates are left as gaps.
    """
    log_scale = axis == "distance"
    variants: list[str] = []
    for row in rows:
        if row.variant not in variants:
            variants.append(row.variant)

    with plt.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.8))
        for variant in variants:
            mine = [r for r in rows if r.variant == variant]
            x = np.array([r.axis_value for r in mine], dtype=float)
            y = np.array(
                [np.nan if r.rate_per_pulse is None else r.rate_per_pulse for r in mine],
                dtype=float,
            )
            if log_scale:
                y[y <= 0.0] = np.nan
            style = "--" if variant in ("analytic", "separate") else "-"
            ax.plot(x, y, style, marker=".", label=variant)
        if log_scale and any(r.rate_per_pulse is not None and r.rate_per_pulse > 0.0 for r in rows):
            ax.set_yscale("log")
        ax.set_xlabel(AXIS_LABELS.get(axis, axis))
        ax.set_ylabel("key rate per pulse")
        ax.grid(True, which="both", alpha=0.3)
        if variants:
            ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    logger.debug("Plotted %d row(s) to %s", len(rows), path)
