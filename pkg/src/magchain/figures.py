"""PNG rendering for the report subcommands.

Headless Agg backend; each function writes one file. The CSV outputs stay
the source of record, these are quick-look views of the same arrays.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import ObservabilityMap, ReplayResult, SensitivityReport
from .geometry import BendConfig, angles_from_bend


def _edges(centers: np.ndarray) -> np.ndarray:
    """Cell boundaries around sample points; single points get unit width."""
    c = np.asarray(centers, dtype=float)
    if c.size == 1:
        return np.array([c[0] - 0.5, c[0] + 0.5])
    mid = 0.5 * (c[:-1] + c[1:])
    return np.concatenate([[2 * c[0] - mid[0]], mid, [2 * c[-1] - mid[-1]]])


def save_observability_figure(path, omap: ObservabilityMap, label: str = "") -> None:
    phi_deg = np.rad2deg(omap.grid.phi_values)
    psi_deg = np.rad2deg(omap.grid.psi_values)
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    mesh = ax.pcolormesh(
        _edges(phi_deg), _edges(psi_deg), omap.chi.T, vmin=0.0, vmax=1.0, cmap="viridis"
    )
    fig.colorbar(mesh, ax=ax, label="observability index")
    ax.set_xlabel("bend direction phi (deg)")
    ax.set_ylabel("bend angle psi (deg)")
    ax.set_title(f"observability {label}".strip())
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sensitivity_figure(path, report: SensitivityReport, label: str = "") -> None:
    phi_deg = np.rad2deg(report.grid.phi_values)
    psi_deg = np.rad2deg(report.grid.psi_values)
    levels = report.noise_levels
    fig, axes = plt.subplots(
        1, len(levels), figsize=(4.0 * len(levels), 3.8), sharey=True, squeeze=False
    )
    for k, (ax, level) in enumerate(zip(axes[0], levels)):
        for i, phi in enumerate(phi_deg):
            ax.plot(psi_deg, 1e3 * report.max_tip_error[i, :, k], marker="o",
                    markersize=3, label=f"phi={phi:g}")
        ax.set_xlabel("bend angle psi (deg)")
        ax.set_title(f"noise level {level:g}")
        ax.grid(alpha=0.3)
    axes[0, 0].set_ylabel("max tip error (mm)")
    axes[0, 0].legend(fontsize=8)
    fig.suptitle(f"tip-error sensitivity {label}".strip())
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_replay_figure(path, result: ReplayResult, label: str = "") -> None:
    ticks = []
    for k in range(result.centers.shape[0]):
        psi, phi = angles_from_bend(BendConfig(result.centers[k]))
        ticks.append(f"({np.rad2deg(phi):g}, {np.rad2deg(psi):g})")
    x = np.arange(len(ticks))
    fig, ax = plt.subplots(figsize=(max(6.0, 0.35 * len(ticks)), 4.2))
    ax.plot(x, 1e3 * result.mean_error_start, "o-", label="uncalibrated mean")
    ax.plot(x, 1e3 * result.mean_error_final, "s-", label="calibrated mean")
    ax.plot(x, 1e3 * result.max_error_start, "o--", alpha=0.4, label="uncalibrated max")
    ax.plot(x, 1e3 * result.max_error_final, "s--", alpha=0.4, label="calibrated max")
    ax.set_xticks(x)
    ax.set_xticklabels(ticks, rotation=90, fontsize=7)
    ax.set_xlabel("configuration (phi deg, psi deg)")
    ax.set_ylabel("tip error (mm)")
    ax.set_title(f"calibration replay {label}".strip())
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
