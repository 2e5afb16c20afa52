"""Reference sensing scenes and workspace grids.

Global frame: origin at the center of the sensor array, z axis normal to
the sensor plane and pointing toward the robot. Four axis-aligned sensors
sit in the plane at radius 40.5 mm, 90 degrees apart, starting on +x. The
proximal ball of the chain is 150 mm above the plane in both placements.

Configuration I: the undeflected chain points toward the sensor plane
(base axis mapped to -z), so the base point sits one ball diameter beyond
the proximal ball. Up to a small four-sensor ripple, observability is
independent of the bending-plane angle phi.

Configuration II: the undeflected chain points along +x, parallel to the
sensor plane. Plane angles are laid out so that phi = 0 bends the chain
toward the plane, phi = 180 deg away from it, and phi = +/-90 deg moves
it parallel to the plane.
"""

from __future__ import annotations

import numpy as np

from .field import SceneSpec, SensorSpec, sphere_dipole_moment
from .geometry import ChainSpec, FramePose

SENSOR_RADIUS = 0.0405  # m
PROXIMAL_DISTANCE = 0.150  # m, proximal ball center to sensor plane
DEFAULT_BALL_COUNT = 10
DEFAULT_BALL_DIAMETER = 6.35e-3  # m

# Base orientations; columns are the images of the base axes e1, e2, e3.
_ROT_CONFIG_I = np.array(
    [
        [1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, -1.0],
    ]
)
_ROT_CONFIG_II = np.array(
    [
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 0.0],
        [-1.0, 0.0, 0.0],
    ]
)


def default_chain(
    n: int = DEFAULT_BALL_COUNT, d: float = DEFAULT_BALL_DIAMETER, mu: float | None = None
) -> ChainSpec:
    """N42 ball chain; mu defaults to the sphere dipole moment for diameter d."""
    if mu is None:
        mu = sphere_dipole_moment(d)
    return ChainSpec(n=n, d=d, mu=mu)


def sensor_array(radius: float = SENSOR_RADIUS, count: int = 4) -> tuple[SensorSpec, ...]:
    """Axis-aligned sensors in the z = 0 plane, evenly spaced on a circle."""
    sensors = []
    for j in range(count):
        theta = 2.0 * np.pi * j / count
        position = radius * np.array([np.cos(theta), np.sin(theta), 0.0])
        sensors.append(SensorSpec.axis_aligned(position))
    return tuple(sensors)


def config_i_scene(chain: ChainSpec | None = None) -> SceneSpec:
    """Configuration I: undeflected chain pointing toward the sensor plane."""
    chain = chain or default_chain()
    base = FramePose(np.array([0.0, 0.0, PROXIMAL_DISTANCE + chain.d]), _ROT_CONFIG_I)
    return SceneSpec(base=base, sensors=sensor_array(), chain=chain)


def config_ii_scene(chain: ChainSpec | None = None) -> SceneSpec:
    """Configuration II: undeflected chain parallel to the sensor plane."""
    chain = chain or default_chain()
    base = FramePose(np.array([0.0, 0.0, PROXIMAL_DISTANCE]), _ROT_CONFIG_II)
    return SceneSpec(base=base, sensors=sensor_array(), chain=chain)


PRESET_SCENES = {
    "config-I": config_i_scene,
    "config-II": config_ii_scene,
}


def canonical_angle_grid(
    phi_deg_values, psi_deg_values, dedupe: bool = True
) -> list[tuple[float, float]]:
    """Canonicalize a (phi, psi) degree grid, row-major with phi outer.

    Negative psi folds to (|psi|, phi + 180); phi wraps to (-180, 180].
    With dedupe, canonically identical cells keep their first occurrence
    (all psi = 0 cells collapse to one straight configuration).
    """
    out: list[tuple[float, float]] = []
    for phi in phi_deg_values:
        for psi in psi_deg_values:
            phi_c, psi_c = float(phi), float(psi)
            if psi_c < 0.0:
                phi_c, psi_c = phi_c + 180.0, -psi_c
            if psi_c == 0.0:
                phi_c = 0.0
            phi_c = phi_c - 360.0 * np.ceil((phi_c - 180.0) / 360.0)
            cell = (float(phi_c), psi_c)
            if dedupe and cell in out:
                continue
            out.append(cell)
    return out


def sensitivity_grid_degrees() -> tuple[list[float], list[float]]:
    """Noise-study workspace covering all four half-planes of bending.

    phi rows 0 and 180 sweep toward/away from the sensor plane in
    Configuration II; +/-90 sweep parallel to it.
    """
    return [0.0, 90.0, 180.0, -90.0], [float(k * 30) for k in range(7)]


def replay_grid_degrees() -> list[tuple[float, float]]:
    """Calibration/replay configurations phi = j*90 (j = 0..4), psi = k*30 (k = 0..6).

    Canonicalized and deduplicated: phi = 360 aliases phi = 0, and all
    psi = 0 cells are one configuration.
    """
    return canonical_angle_grid(
        [float(j * 90) for j in range(5)], [float(k * 30) for k in range(7)]
    )
