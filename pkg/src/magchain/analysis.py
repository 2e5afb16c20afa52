"""Observability maps and Monte Carlo noise studies over bend workspaces.

Observability is the reciprocal condition number chi = sigma_min/sigma_max
of the measurement Jacobian: near 1 every shape direction moves the
sensors equally, near 0 some direction is invisible. The noise studies
corrupt synthetic readings with seeded Gaussian noise and report worst-case
tip error per workspace cell. A noise level is the three-sigma magnitude
of the per-channel noise as a fraction of the reading norm, so level 0.05
reproduces the "5% of signal" study.

Every random draw comes from an independent generator keyed by
(seed, cell index, sample index); results are bit-identical across runs
and independent of worker scheduling.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .estimator import calibrate_gains, estimate_batch, GainTable
from .field import (
    FD_STEP,
    CoincidentGeometryError,
    SceneSpec,
    forward_measurement_batch,
)
from .geometry import BendConfig, tip_positions_batch


@dataclass(frozen=True)
class WorkspaceGrid:
    """Rectangular (phi, psi) grid in radians, psi restricted to [0, pi]."""

    phi_values: np.ndarray
    psi_values: np.ndarray

    def __post_init__(self):
        phi = np.atleast_1d(np.asarray(self.phi_values, dtype=float))
        psi = np.atleast_1d(np.asarray(self.psi_values, dtype=float))
        if phi.size == 0 or psi.size == 0:
            raise ValueError("grid axes must be non-empty")
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(psi))):
            raise ValueError("grid angles must be finite")
        if np.any(psi < 0.0) or np.any(psi > np.pi):
            raise ValueError("psi values must lie in [0, pi]")
        object.__setattr__(self, "phi_values", phi)
        object.__setattr__(self, "psi_values", psi)

    @classmethod
    def from_degrees(cls, phi_deg, psi_deg) -> "WorkspaceGrid":
        return cls(np.deg2rad(phi_deg), np.deg2rad(psi_deg))

    @property
    def shape(self) -> tuple[int, int]:
        return self.phi_values.size, self.psi_values.size

    def gamma_cells(self) -> np.ndarray:
        """Bend vectors for every cell, row-major with phi outer."""
        phi = np.repeat(self.phi_values, self.psi_values.size)
        psi = np.tile(self.psi_values, self.phi_values.size)
        return psi[:, None] * np.stack([-np.sin(phi), np.cos(phi)], axis=1)


@dataclass(frozen=True)
class ObservabilityMap:
    """chi per grid cell; cells whose forward model failed hold NaN and an
    entry in failures as (phi index, psi index, message)."""

    grid: WorkspaceGrid
    chi: np.ndarray
    failures: tuple = ()


@dataclass(frozen=True)
class SensitivityReport:
    """Worst-case tip error per cell and noise level.

    max_tip_error has shape (phi, psi, level) in meters; solver_failures
    counts non-converged samples per cell and level.
    """

    grid: WorkspaceGrid
    noise_levels: tuple
    max_tip_error: np.ndarray
    solver_failures: np.ndarray
    seed: int
    samples: int


@dataclass(frozen=True)
class ReplayResult:
    """End-to-end calibrated estimation rehearsal on synthetic data.

    Per-configuration tip-error statistics are recorded twice: after the
    identity-gain stage (start) and after the scheduled-gain rounds
    (final), over the same noisy samples used for calibration.
    """

    centers: np.ndarray
    noise_level: float
    samples: int
    seed: int
    channel_scales: np.ndarray
    mean_error_start: np.ndarray
    max_error_start: np.ndarray
    mean_error_final: np.ndarray
    max_error_final: np.ndarray
    failures_start: int
    failures_final: int
    table: GainTable


def _jacobian_cells(scene: SceneSpec, gammas: np.ndarray) -> np.ndarray:
    """Batched central-difference measurement Jacobians, shape (C, 3m, 2)."""
    c = gammas.shape[0]
    probes = np.repeat(gammas, 4, axis=0)
    probes[0::4, 0] += FD_STEP
    probes[1::4, 0] -= FD_STEP
    probes[2::4, 1] += FD_STEP
    probes[3::4, 1] -= FD_STEP
    q = forward_measurement_batch(scene, probes)
    jac = np.empty((c, q.shape[1], 2))
    jac[:, :, 0] = -(q[0::4] - q[1::4]) / (2.0 * FD_STEP)
    jac[:, :, 1] = -(q[2::4] - q[3::4]) / (2.0 * FD_STEP)
    return jac


def _chi_from_jacobian(jac: np.ndarray) -> np.ndarray:
    s = np.linalg.svd(jac, compute_uv=False)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(s[:, 0] > 0.0, s[:, 1] / s[:, 0], np.nan)


def observability_map(scene: SceneSpec, grid: WorkspaceGrid) -> ObservabilityMap:
    """chi over the grid; failing cells are NaN with a diagnostic."""
    cells = grid.gamma_cells()
    n_phi, n_psi = grid.shape
    failures = []
    try:
        chi = _chi_from_jacobian(_jacobian_cells(scene, cells))
    except (CoincidentGeometryError, FloatingPointError):
        # isolate the failing cells one by one
        chi = np.full(cells.shape[0], np.nan)
        for c in range(cells.shape[0]):
            try:
                chi[c] = _chi_from_jacobian(_jacobian_cells(scene, cells[c : c + 1]))[0]
            except (CoincidentGeometryError, FloatingPointError) as exc:
                failures.append((c // n_psi, c % n_psi, str(exc)))
    for c in np.flatnonzero(~np.isfinite(chi)):
        idx = (int(c) // n_psi, int(c) % n_psi)
        if not any(f[:2] == idx for f in failures):
            failures.append((*idx, "zero or non-finite Jacobian"))
    return ObservabilityMap(grid=grid, chi=chi.reshape(n_phi, n_psi), failures=tuple(failures))


def _cell_noise(size: int, seed: int, cell_index: int, samples: int) -> np.ndarray:
    """Unit-variance draws, one independent stream per (seed, cell, sample)."""
    return np.stack(
        [
            np.random.default_rng([seed, cell_index, t]).standard_normal(size)
            for t in range(samples)
        ]
    )


def _sweep_cell(args) -> tuple[np.ndarray, np.ndarray]:
    scene, gamma, qbar, levels, samples, seed, cell_index = args
    unit = _cell_noise(qbar.size, seed, cell_index, samples)
    sigma = np.linalg.norm(qbar) / 3.0 * levels
    readings = (qbar[None, None, :] + sigma[:, None, None] * unit[None, :, :]).reshape(
        levels.size * samples, qbar.size
    )
    est_gamma, _, status = estimate_batch(scene, readings)
    true_tip = tip_positions_batch(scene.chain, scene.base, gamma[None, :])[0]
    tips = tip_positions_batch(scene.chain, scene.base, est_gamma)
    err = np.linalg.norm(tips - true_tip, axis=1).reshape(levels.size, samples)
    fails = (status != 0).reshape(levels.size, samples).sum(axis=1)
    return err.max(axis=1), fails


def sensitivity_sweep(scene: SceneSpec, grid: WorkspaceGrid, noise_levels,
                      samples: int, seed: int, workers: int = 1) -> SensitivityReport:
    """Monte Carlo worst-case tip error per cell and noise level.

    Estimation runs with identity gains (no scheduled table) and the
    standard multi-start, so nothing about the true bend leaks into the
    solve. Solver failures are counted per cell but their errors still
    participate in the max.
    """
    levels = np.atleast_1d(np.asarray(noise_levels, dtype=float))
    if levels.size == 0 or np.any(levels < 0.0) or not np.all(np.isfinite(levels)):
        raise ValueError("noise levels must be finite and nonnegative")
    if samples < 1:
        raise ValueError("need at least one sample per cell")
    cells = grid.gamma_cells()
    qbar = forward_measurement_batch(scene, cells)
    jobs = [
        (scene, cells[c], qbar[c], levels, samples, seed, c)
        for c in range(cells.shape[0])
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(job) for job in jobs]
    n_phi, n_psi = grid.shape
    max_err = np.array([r[0] for r in results]).reshape(n_phi, n_psi, levels.size)
    failures = np.array([r[1] for r in results]).reshape(n_phi, n_psi, levels.size)
    return SensitivityReport(
        grid=grid,
        noise_levels=tuple(float(v) for v in levels),
        max_tip_error=max_err,
        solver_failures=failures,
        seed=int(seed),
        samples=int(samples),
    )


def replay_experiment(scene: SceneSpec, configs, noise_level: float, samples: int,
                      seed: int, channel_scales=None, outer_iters: int = 2) -> ReplayResult:
    """Simulated end-to-end protocol: noisy samples at known configurations
    calibrate a gain table, then the same samples are re-estimated with the
    scheduled gains.

    channel_scales stretches the per-channel sigma to model sensors of
    unequal quality; default is uniform.
    """
    configs = list(configs)
    if len(configs) == 0:
        raise ValueError("need at least one configuration")
    if samples < 1:
        raise ValueError("need at least one sample per configuration")
    if noise_level < 0.0 or not np.isfinite(noise_level):
        raise ValueError("noise level must be finite and nonnegative")
    size = scene.measurement_size
    if channel_scales is None:
        scales = np.ones(size)
    else:
        scales = np.asarray(channel_scales, dtype=float)
        if scales.shape != (size,):
            raise ValueError(f"channel_scales must have shape ({size},), got {scales.shape}")
        if np.any(scales <= 0.0) or not np.all(np.isfinite(scales)):
            raise ValueError("channel_scales must be positive and finite")

    centers = np.array([c.gamma for c in configs])
    qbar = forward_measurement_batch(scene, centers)
    sample_sets = []
    for k in range(len(configs)):
        unit = _cell_noise(size, seed, k, samples)
        sigma = noise_level * np.linalg.norm(qbar[k]) / 3.0 * scales
        sample_sets.append(qbar[k] + sigma * unit)
    table = calibrate_gains(scene, configs, sample_sets)

    readings = np.concatenate(sample_sets, axis=0)
    true_tips = np.repeat(
        tip_positions_batch(scene.chain, scene.base, centers), samples, axis=0
    )

    def stage_errors(gamma, status):
        tips = tip_positions_batch(scene.chain, scene.base, gamma)
        err = np.linalg.norm(tips - true_tips, axis=1).reshape(len(configs), samples)
        return err.mean(axis=1), err.max(axis=1), int(np.sum(status != 0))

    g0, _, s0 = estimate_batch(scene, readings)
    mean0, max0, fail0 = stage_errors(g0, s0)
    gf, _, sf = estimate_batch(scene, readings, table, outer_iters)
    mean_f, max_f, fail_f = stage_errors(gf, sf)

    return ReplayResult(
        centers=centers,
        noise_level=float(noise_level),
        samples=int(samples),
        seed=int(seed),
        channel_scales=scales,
        mean_error_start=mean0,
        max_error_start=max0,
        mean_error_final=mean_f,
        max_error_final=max_f,
        failures_start=fail0,
        failures_final=fail_f,
        table=table,
    )
