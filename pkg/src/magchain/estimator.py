"""Weighted nonlinear least-squares shape estimation with gain scheduling.

Solves gamma_hat = argmin ||K (q_bar - q(gamma))||^2 with a small dense
Levenberg-Marquardt iteration written directly on the two bend parameters.
Gains K are diagonal per-channel weights; a gain table maps workspace
regions (nearest center wins) to calibrated gains, and the outer loop
re-solves with the scheduled gains a fixed number of rounds.

All solver arithmetic is lane-independent, so batched solves are
bit-identical to solving each reading alone.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .field import SceneSpec, forward_measurement_batch
from .geometry import BendConfig

DAMPING_INIT = 1e-3
DAMPING_FACTOR = 10.0
DAMPING_MIN = 1e-12
DAMPING_MAX = 1e12
RESIDUAL_DECREASE_TOL = 1e-12  # Tesla, weighted
STEP_TOL = 1e-9  # rad
MAX_ITERATIONS = 200
DEGENERATE_RATIO = 1e-14
GAIN_CLAMP = 1e9  # 1/Tesla, stands in for 1/0 on perfect channels
FD_STEP = 1e-6  # rad, solver-internal Jacobian step

_SEED_PSI_DEG = (45.0, 90.0, 135.0)
_SEED_PHI_DEG = (0.0, 90.0, 180.0, 270.0)


class SolverStatus(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    DEGENERATE_JACOBIAN = "degenerate_jacobian"


_STATUS_BY_CODE = (SolverStatus.CONVERGED, SolverStatus.MAX_ITERS, SolverStatus.DEGENERATE_JACOBIAN)


@dataclass(frozen=True)
class EstimateResult:
    """Solver output: canonical bend, weighted residual norm, bookkeeping."""

    gamma: BendConfig
    residual_norm: float
    iterations_outer: int
    solver_status: SolverStatus


@dataclass(frozen=True)
class GainTable:
    """Calibrated per-region sensor gains.

    centers: (K, 2) bend vectors gamma_bar_k; gains: (K, 3m) diagonal
    entries in 1/Tesla. Regions are Voronoi cells of the centers.
    """

    centers: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        gains = np.atleast_2d(np.asarray(self.gains, dtype=float))
        if centers.ndim != 2 or centers.shape[1] != 2:
            raise ValueError(f"centers must be (K, 2), got {centers.shape}")
        if gains.ndim != 2 or gains.shape[0] != centers.shape[0]:
            raise ValueError(
                f"gains must be (K, 3m) with K = {centers.shape[0]}, got {gains.shape}"
            )
        if centers.shape[0] == 0:
            raise ValueError("gain table must have at least one entry")
        if not np.all(np.isfinite(centers)):
            raise ValueError("centers must be finite")
        if not np.all(np.isfinite(gains)) or np.any(gains < 0.0):
            raise ValueError("gains must be finite and nonnegative")
        diff = centers[:, None, :] - centers[None, :, :]
        same = np.all(diff == 0.0, axis=2)
        same[np.diag_indices(centers.shape[0])] = False
        if np.any(same):
            i, j = np.argwhere(same)[0]
            raise ValueError(f"centers {i} and {j} coincide")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "gains", gains)

    @property
    def size(self) -> int:
        return self.centers.shape[0]


def assign_manifold(table: GainTable, gamma: BendConfig) -> int:
    """Index of the nearest gain center in Euclidean gamma distance.

    Ties go to the lowest index.
    """
    return int(_assign_batch(table, gamma.gamma[None, :])[0])


def _assign_batch(table: GainTable, gammas: np.ndarray) -> np.ndarray:
    diff = gammas[:, None, :] - table.centers[None, :, :]
    dist2 = np.einsum("bkj,bkj->bk", diff, diff)
    return np.argmin(dist2, axis=1)


def multistart_inits() -> np.ndarray:
    """Initial bend vectors for the identity-gain solve: straight plus a
    coarse ring of bent shapes."""
    inits = [np.zeros(2)]
    for psi_deg in _SEED_PSI_DEG:
        for phi_deg in _SEED_PHI_DEG:
            psi = np.deg2rad(psi_deg)
            phi = np.deg2rad(phi_deg)
            inits.append(psi * np.array([-np.sin(phi), np.cos(phi)]))
    return np.array(inits)


def solver_settings() -> dict:
    """Solver constants, for run manifests."""
    return {
        "algorithm": "levenberg-marquardt",
        "damping_init": DAMPING_INIT,
        "damping_factor": DAMPING_FACTOR,
        "residual_decrease_tol": RESIDUAL_DECREASE_TOL,
        "step_tol": STEP_TOL,
        "max_iterations": MAX_ITERATIONS,
        "degenerate_ratio": DEGENERATE_RATIO,
        "multistart_inits": len(_SEED_PSI_DEG) * len(_SEED_PHI_DEG) + 1,
        "gain_clamp": GAIN_CLAMP,
        "fd_step": FD_STEP,
    }


def _residual_norms(scene: SceneSpec, gammas: np.ndarray, readings: np.ndarray,
                    gains: np.ndarray) -> np.ndarray:
    q = forward_measurement_batch(scene, gammas)
    r = gains * (readings - q)
    return np.sqrt(np.einsum("bi,bi->b", r, r))


def _weighted_jacobian(scene: SceneSpec, gammas: np.ndarray, gains: np.ndarray) -> np.ndarray:
    """A = K * J with J = -dq/dgamma, central differences, shape (B, 3m, 2)."""
    b = gammas.shape[0]
    probes = np.repeat(gammas, 4, axis=0)
    probes[0::4, 0] += FD_STEP
    probes[1::4, 0] -= FD_STEP
    probes[2::4, 1] += FD_STEP
    probes[3::4, 1] -= FD_STEP
    q = forward_measurement_batch(scene, probes)
    jac = np.empty((b, q.shape[1], 2))
    jac[:, :, 0] = -(q[0::4] - q[1::4]) / (2.0 * FD_STEP)
    jac[:, :, 1] = -(q[2::4] - q[3::4]) / (2.0 * FD_STEP)
    return gains[:, :, None] * jac


def _project_workspace(gammas: np.ndarray) -> np.ndarray:
    """Rescale bends with psi > pi back onto the workspace boundary."""
    psi = np.sqrt(np.einsum("bj,bj->b", gammas, gammas))
    over = psi > np.pi
    if np.any(over):
        gammas = gammas.copy()
        gammas[over] *= (np.pi / psi[over])[:, None]
    return gammas


def _lm_lockstep(scene: SceneSpec, readings: np.ndarray, gains: np.ndarray,
                 inits: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Levenberg-Marquardt over a batch of independent lanes.

    Returns (gamma (B, 2), residual_norm (B,), status_code (B,) int8).
    Lanes are frozen as they converge; arithmetic in one lane never reads
    another, so results do not depend on the batch composition.
    """
    n_lanes = readings.shape[0]
    gamma = inits.astype(float).copy()
    cost = _residual_norms(scene, gamma, readings, gains)
    lam = np.full(n_lanes, DAMPING_INIT)
    status = np.full(n_lanes, 1, dtype=np.int8)  # max_iters unless converged
    active = np.arange(n_lanes)
    jac = _weighted_jacobian(scene, gamma, gains)
    need_jac = np.zeros(n_lanes, dtype=bool)

    for _ in range(MAX_ITERATIONS):
        if active.size == 0:
            break
        refresh = active[need_jac[active]]
        if refresh.size:
            jac[refresh] = _weighted_jacobian(scene, gamma[refresh], gains[refresh])
            need_jac[refresh] = False

        a = jac[active]
        q = forward_measurement_batch(scene, gamma[active])
        r = gains[active] * (readings[active] - q)
        h00 = np.einsum("bi,bi->b", a[:, :, 0], a[:, :, 0])
        h11 = np.einsum("bi,bi->b", a[:, :, 1], a[:, :, 1])
        h01 = np.einsum("bi,bi->b", a[:, :, 0], a[:, :, 1])
        # gradient of 0.5*||r||^2 is A^T r with A = d r / d gamma = K J
        g0 = np.einsum("bi,bi->b", a[:, :, 0], r)
        g1 = np.einsum("bi,bi->b", a[:, :, 1], r)

        m00 = h00 * (1.0 + lam[active])
        m11 = h11 * (1.0 + lam[active])
        det = m00 * m11 - h01 * h01
        solvable = (det > 0.0) & np.isfinite(det)
        safe_det = np.where(solvable, det, 1.0)
        d0 = (-g0 * m11 + g1 * h01) / safe_det
        d1 = (-g1 * m00 + g0 * h01) / safe_det

        trial = gamma[active].copy()
        trial[:, 0] += np.where(solvable, d0, 0.0)
        trial[:, 1] += np.where(solvable, d1, 0.0)
        trial = _project_workspace(trial)
        trial_cost = _residual_norms(scene, trial, readings[active], gains[active])

        accept = solvable & (trial_cost < cost[active])
        step = np.sqrt(np.where(solvable, d0 * d0 + d1 * d1, np.inf))
        decrease = cost[active] - trial_cost
        # a vanishing proposed step means no damped step can improve the
        # residual beyond float precision: converged whether accepted or not
        tiny = solvable & (step < STEP_TOL)
        done = (accept & (decrease < RESIDUAL_DECREASE_TOL)) | tiny

        gamma[active] = np.where(accept[:, None], trial, gamma[active])
        cost[active] = np.where(accept, trial_cost, cost[active])
        lam[active] = np.where(
            accept,
            np.maximum(lam[active] / DAMPING_FACTOR, DAMPING_MIN),
            np.minimum(lam[active] * DAMPING_FACTOR, DAMPING_MAX),
        )
        need_jac[active] = accept

        status[active[done]] = 0
        active = active[~done]

    # degeneracy is judged at the returned point
    a = _weighted_jacobian(scene, gamma, gains)
    h00 = np.einsum("bi,bi->b", a[:, :, 0], a[:, :, 0])
    h11 = np.einsum("bi,bi->b", a[:, :, 1], a[:, :, 1])
    h01 = np.einsum("bi,bi->b", a[:, :, 0], a[:, :, 1])
    trace = h00 + h11
    gap = np.sqrt((h00 - h11) ** 2 + 4.0 * h01 * h01)
    eig_max = 0.5 * (trace + gap)
    eig_min = 0.5 * (trace - gap)
    degenerate = (eig_max <= 0.0) | (eig_min < DEGENERATE_RATIO**2 * eig_max)
    status[degenerate] = 2
    return gamma, cost, status


def _solve_multistart(scene: SceneSpec, readings: np.ndarray,
                      gains: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run every init on every lane; keep the lowest weighted residual.

    Exact ties keep the earliest init (straight first).
    """
    inits = multistart_inits()
    n_seeds = inits.shape[0]
    n_lanes = readings.shape[0]
    lane_readings = np.tile(readings, (n_seeds, 1))
    lane_gains = np.tile(gains, (n_seeds, 1))
    lane_inits = np.repeat(inits, n_lanes, axis=0)
    gamma, cost, status = _lm_lockstep(scene, lane_readings, lane_gains, lane_inits)
    gamma = gamma.reshape(n_seeds, n_lanes, 2)
    cost = cost.reshape(n_seeds, n_lanes)
    status = status.reshape(n_seeds, n_lanes)
    best = np.argmin(cost, axis=0)
    rows = np.arange(n_lanes)
    return gamma[best, rows], cost[best, rows], status[best, rows]


def _check_reading(scene: SceneSpec, reading: np.ndarray) -> np.ndarray:
    reading = np.asarray(reading, dtype=float)
    if reading.shape != (scene.measurement_size,):
        raise ValueError(
            f"reading must have shape ({scene.measurement_size},), got {reading.shape}"
        )
    return reading


def _check_gain(scene: SceneSpec, gain: np.ndarray) -> np.ndarray:
    gain = np.asarray(gain, dtype=float)
    if gain.shape != (scene.measurement_size,):
        raise ValueError(
            f"gain must have shape ({scene.measurement_size},), got {gain.shape}"
        )
    if not np.all(np.isfinite(gain)) or np.any(gain < 0.0):
        raise ValueError("gain entries must be finite and nonnegative")
    return gain


def solve_weighted(scene: SceneSpec, reading: np.ndarray, gain: np.ndarray,
                   init: BendConfig) -> EstimateResult:
    """Single local solve of the weighted problem from one starting bend."""
    reading = _check_reading(scene, reading)
    gain = _check_gain(scene, gain)
    gamma, cost, status = _lm_lockstep(
        scene, reading[None, :], gain[None, :], init.gamma[None, :]
    )
    return EstimateResult(
        gamma=BendConfig(gamma[0]),
        residual_norm=float(cost[0]),
        iterations_outer=0,
        solver_status=_STATUS_BY_CODE[status[0]],
    )


def estimate_shape(scene: SceneSpec, reading: np.ndarray, table: GainTable | None = None,
                   outer_iters: int = 0) -> EstimateResult:
    """Full estimation: identity-gain multi-start solve, then outer_iters
    rounds of nearest-region gain scheduling, each re-solved warm."""
    reading = _check_reading(scene, reading)
    gamma, cost, status = estimate_batch(scene, reading[None, :], table, outer_iters)
    return EstimateResult(
        gamma=BendConfig(gamma[0]),
        residual_norm=float(cost[0]),
        iterations_outer=outer_iters,
        solver_status=_STATUS_BY_CODE[status[0]],
    )


def estimate_batch(scene: SceneSpec, readings: np.ndarray, table: GainTable | None = None,
                   outer_iters: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched estimate_shape over rows of readings (B, 3m).

    Returns (gamma (B, 2), residual_norm (B,), status_code (B,)).
    """
    readings = np.asarray(readings, dtype=float)
    if readings.ndim != 2 or readings.shape[1] != scene.measurement_size:
        raise ValueError(
            f"readings must have shape (B, {scene.measurement_size}), got {readings.shape}"
        )
    if outer_iters < 0:
        raise ValueError("outer_iters must be >= 0")
    if outer_iters > 0:
        if table is None:
            raise ValueError("outer_iters > 0 requires a gain table")
        if table.gains.shape[1] != scene.measurement_size:
            raise ValueError(
                f"gain table has {table.gains.shape[1]} channels, "
                f"scene has {scene.measurement_size}"
            )
    identity = np.ones_like(readings)
    gamma, cost, status = _solve_multistart(scene, readings, identity)
    for _ in range(outer_iters):
        region = _assign_batch(table, gamma)
        gains = table.gains[region]
        gamma, cost, status = _lm_lockstep(scene, readings, gains, gamma)
    return gamma, cost, status


def calibrate_gains(scene: SceneSpec, configs: list[BendConfig],
                    samples: list[np.ndarray]) -> GainTable:
    """Per-region gains from recorded samples: reciprocal of the
    componentwise worst deviation from the model prediction.

    Channels that never deviate get the clamp value instead of infinity,
    preserving the trust ordering.
    """
    if len(configs) == 0:
        raise ValueError("need at least one calibration configuration")
    if len(samples) != len(configs):
        raise ValueError(
            f"got {len(samples)} sample sets for {len(configs)} configurations"
        )
    centers = np.array([c.gamma for c in configs])
    predicted = forward_measurement_batch(scene, centers)
    gains = np.empty((len(configs), scene.measurement_size))
    for k, sample_set in enumerate(samples):
        arr = np.atleast_2d(np.asarray(sample_set, dtype=float))
        if arr.shape[1] != scene.measurement_size:
            raise ValueError(
                f"config {k}: samples must have {scene.measurement_size} channels, "
                f"got {arr.shape[1]}"
            )
        worst = np.max(np.abs(arr - predicted[k]), axis=0)
        with np.errstate(divide="ignore"):
            gains[k] = np.minimum(1.0 / worst, GAIN_CLAMP)
    return GainTable(centers=centers, gains=gains)
