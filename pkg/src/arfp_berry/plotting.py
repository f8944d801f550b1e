"""Figure rendering for phase maps (non-interactive backend)."""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_write  # noqa: E402


def phase_map_png(grid, title: str | None = None) -> bytes:
    """Color map of gamma_n over (rho, z); missing points are left blank."""
    fig, ax = plt.subplots(figsize=(5.2, 4.2), dpi=120)
    try:
        data = np.ma.masked_invalid(grid.gamma.T)
        extent = (grid.rho_axis[0], grid.rho_axis[-1], grid.z_axis[0], grid.z_axis[-1])
        im = ax.imshow(data, origin="lower", extent=extent, aspect="auto", cmap="RdBu_r")
        fig.colorbar(im, ax=ax, label=r"$\gamma_n$ (rad)")
        ax.set_xlabel(r"$\rho$")
        ax.set_ylabel(r"$z$")
        ax.set_title(title or f"{grid.config.get('kind', '')}, n = {grid.n:g}")
        fig.tight_layout()
        buf = io.BytesIO()
        fig.savefig(buf, format="png", metadata={"Software": None})
        return buf.getvalue()
    finally:
        plt.close(fig)


def write_phase_map(grid, path, title: str | None = None) -> Path:
    return atomic_write(path, phase_map_png(grid, title))
