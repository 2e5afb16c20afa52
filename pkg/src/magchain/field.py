"""Dipole-superposition forward measurement model and its Jacobian.

Each ball is treated as a perfect point dipole (exact outside a uniformly
magnetized sphere):

    B(r) = mu0 / (4 pi |r|^3) * (3 rhat rhat^T - I) @ m,   r = probe - source.

A sensor reading is the superposition over all balls, expressed in the
sensor's own measurement frame; readings of the m sensors are stacked into
one 3m-vector (Tesla) in sensor order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .geometry import (
    BendConfig,
    ChainSpec,
    FramePose,
    _check_rotation,
    chain_geometry_batch,
)

MU0 = 4.0e-7 * np.pi  # vacuum permeability [T m / A]
_COEF = MU0 / (4.0 * np.pi)  # = 1e-7

#: N42 NdFeB remanence [T]; dipole moment of a sphere is Br * V / mu0.
N42_REMANENCE = 1.32

#: Central finite-difference step [rad] for the measurement Jacobian.
FD_STEP = 1e-6


def sphere_dipole_moment(diameter: float, remanence: float = N42_REMANENCE) -> float:
    """Dipole magnitude [A m^2] of a uniformly magnetized sphere."""
    volume = np.pi * diameter**3 / 6.0
    return float(remanence * volume / MU0)


class CoincidentGeometryError(ValueError):
    """A field source coincides with a probe point, making the dipole field singular."""

    def __init__(self, ball_index: int | None = None, sensor_index: int | None = None):
        self.ball_index = ball_index
        self.sensor_index = sensor_index
        if ball_index is None:
            msg = "source and probe positions coincide; dipole field is singular"
        else:
            msg = f"ball {ball_index} coincides with sensor {sensor_index}; dipole field is singular"
        super().__init__(msg)


@dataclass(frozen=True, eq=False)
class SensorSpec:
    """A 3-axis field sensor: position [m] and measurement-frame rotation."""

    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        R = np.array(_check_rotation(self.rotation, "sensor rotation"))
        p.flags.writeable = False
        R.flags.writeable = False
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "rotation", R)

    @classmethod
    def axis_aligned(cls, position) -> "SensorSpec":
        """Sensor whose measurement axes coincide with the global frame."""
        return cls(np.asarray(position, dtype=float), np.eye(3))


@dataclass(frozen=True, eq=False)
class SceneSpec:
    """Base frame, sensor array and chain geometry of one sensing setup."""

    base: FramePose
    sensors: tuple[SensorSpec, ...]
    chain: ChainSpec

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        if len(self.sensors) < 1:
            raise ValueError("scene needs at least one sensor")
        pos = np.array([s.position for s in self.sensors])
        for j in range(len(pos)):
            for i in range(j):
                if np.array_equal(pos[i], pos[j]):
                    raise ValueError(f"sensors {i} and {j} share the same position")

    @property
    def num_sensors(self) -> int:
        return len(self.sensors)

    @property
    def measurement_size(self) -> int:
        """Length of the stacked measurement vector, 3 * num_sensors."""
        return 3 * len(self.sensors)

    @cached_property
    def _sensor_positions(self) -> np.ndarray:
        a = np.array([s.position for s in self.sensors])
        a.flags.writeable = False
        return a

    @cached_property
    def _sensor_rotations(self) -> np.ndarray:
        a = np.array([s.rotation for s in self.sensors])
        a.flags.writeable = False
        return a

    @cached_property
    def _sensors_axis_aligned(self) -> bool:
        return bool(np.all(self._sensor_rotations == np.eye(3)))


def dipole_field(source_pos, moment, probe_pos) -> np.ndarray:
    """Point-dipole field [T] at probe_pos from a dipole at source_pos."""
    r = np.asarray(probe_pos, dtype=float) - np.asarray(source_pos, dtype=float)
    dist = np.linalg.norm(r)
    if dist == 0.0:
        raise CoincidentGeometryError()
    m = np.asarray(moment, dtype=float)
    rhat = r / dist
    return _COEF / dist**3 * (3.0 * np.dot(rhat, m) * rhat - m)


def forward_measurement_batch(scene: SceneSpec, gammas: np.ndarray) -> np.ndarray:
    """Stacked sensor readings for a batch of bend vectors.

    gammas: (B, 2). Returns (B, 3m) in Tesla. Row b is bit-identical to a
    single-row evaluation of gammas[b].
    """
    gammas = np.asarray(gammas, dtype=float).reshape(-1, 2)
    positions, moments = chain_geometry_batch(scene.chain, scene.base, gammas)
    # r[b, j, i, :]: ball i relative to sensor j
    r = positions[:, None, :, :] - scene._sensor_positions[None, :, None, :]
    d2 = np.sum(r * r, axis=-1)
    if not np.all(d2 > 0.0):
        b, j, i = np.argwhere(d2 == 0.0)[0]
        raise CoincidentGeometryError(int(i), int(j))
    inv_d2 = 1.0 / d2
    inv_d3 = inv_d2 * np.sqrt(inv_d2)
    proj = np.sum(r * moments[:, None, :, :], axis=-1)  # (B, m, n)
    terms = (3.0 * proj * inv_d2)[..., None] * r - moments[:, None, :, :]
    fields = _COEF * np.sum(inv_d3[..., None] * terms, axis=2)  # (B, m, 3)
    if not scene._sensors_axis_aligned:
        # reading in sensor frame: R_Sj^T @ B  ==  B (row) @ R_Sj
        fields = np.einsum("bmi,mij->bmj", fields, scene._sensor_rotations)
    out = fields.reshape(gammas.shape[0], -1)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite sensor reading; ball too close to a sensor")
    return out


def forward_measurement(scene: SceneSpec, bend: BendConfig) -> np.ndarray:
    """Stacked 3m sensor reading [T] for one bend configuration."""
    return forward_measurement_batch(scene, bend.gamma[None, :])[0]


def measurement_jacobian(scene: SceneSpec, bend: BendConfig, step: float = FD_STEP) -> np.ndarray:
    """Jacobian -d q / d gamma, (3m, 2), by central finite differences."""
    g = bend.gamma
    probes = np.array(
        [
            [g[0] + step, g[1]],
            [g[0] - step, g[1]],
            [g[0], g[1] + step],
            [g[0], g[1] - step],
        ]
    )
    q = forward_measurement_batch(scene, probes)
    jac = np.empty((scene.measurement_size, 2))
    jac[:, 0] = -(q[0] - q[1]) / (2.0 * step)
    jac[:, 1] = -(q[2] - q[3]) / (2.0 * step)
    return jac


def validate_clearance(scene: SceneSpec, gammas: np.ndarray) -> None:
    """Check every ball stays farther than d/2 from every sensor.

    gammas: (B, 2) workspace sample. Raises ValueError naming the offending
    bend row, ball and sensor on the first violation.
    """
    gammas = np.asarray(gammas, dtype=float).reshape(-1, 2)
    positions, _ = chain_geometry_batch(scene.chain, scene.base, gammas)
    r = positions[:, None, :, :] - scene._sensor_positions[None, :, None, :]
    dist = np.sqrt(np.sum(r * r, axis=-1))
    limit = scene.chain.d / 2.0
    if np.min(dist) <= limit:
        b, j, i = np.argwhere(dist <= limit)[0]
        raise ValueError(
            f"ball {i} passes within d/2 = {limit} m of sensor {j} "
            f"at workspace sample {b}"
        )
