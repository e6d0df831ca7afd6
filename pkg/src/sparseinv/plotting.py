"""Section figures for certificates and oracle labels (rendered off-screen)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def section_figure(points: np.ndarray, axes: tuple[int, int], cert_in: np.ndarray,
                   oracle_in: np.ndarray | None, names: Sequence[str], path: str | Path,
                   title: str = "") -> Path:
    """Scatter a 2-D section: certificate membership as fill, oracle labels as markers."""
    i, j = axes
    fig, ax = plt.subplots(figsize=(4.2, 4.0))
    ax.scatter(points[~cert_in, i], points[~cert_in, j], s=9, c="0.85", marker="s",
               linewidths=0, label="outside certificate")
    ax.scatter(points[cert_in, i], points[cert_in, j], s=9, c="tab:blue", marker="s",
               linewidths=0, alpha=0.45, label="certificate")
    if oracle_in is not None and oracle_in.any():
        ax.scatter(points[oracle_in, i], points[oracle_in, j], s=2, c="k", marker=".",
                   label="simulated in")
    ax.set_xlabel(names[i])
    ax.set_ylabel(names[j])
    ax.set_aspect("equal", adjustable="box")
    if title:
        ax.set_title(title, fontsize=9)
    ax.legend(loc="upper right", fontsize=6, markerscale=2, framealpha=0.8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
