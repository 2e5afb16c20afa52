"""Point-dipole field model and stacked sensor measurements."""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from magchain.field import (
    MU0,
    CoincidentGeometryError,
    SceneSpec,
    SensorSpec,
    dipole_field,
    forward_measurement,
    forward_measurement_batch,
    measurement_jacobian,
    sphere_dipole_moment,
    validate_clearance,
)
from magchain.geometry import BendConfig, ChainSpec, FramePose, bend_from_angles, chain_state
from magchain.scenes import config_i_scene, default_chain

# Frozen hand evaluations of the closed-form special cases:
#   axial:      B_z = 1e-7 * 2 m / z^3   at (0, 0, z)
#   equatorial: B_z = -1e-7 * m / x^3    at (x, 0, 0)
# for a dipole m * e_z at the origin, m = 0.141 A m^2.
AXIAL_BZ = 8.355555555555554e-06  # z = 0.15 m
EQUATORIAL_BZ = -1.4099999999999994e-05  # x = 0.10 m


def test_dipole_axial_oracle():
    B = dipole_field([0.0, 0.0, 0.0], [0.0, 0.0, 0.141], [0.0, 0.0, 0.15])
    np.testing.assert_allclose(B, [0.0, 0.0, AXIAL_BZ], rtol=1e-12, atol=1e-30)


def test_dipole_equatorial_oracle():
    B = dipole_field([0.0, 0.0, 0.0], [0.0, 0.0, 0.141], [0.10, 0.0, 0.0])
    np.testing.assert_allclose(B, [0.0, 0.0, EQUATORIAL_BZ], rtol=1e-12, atol=1e-30)


def test_dipole_prefactor_is_mu0_over_4pi():
    assert MU0 / (4.0 * np.pi) == pytest.approx(1e-7, rel=1e-15)


def test_dipole_linearity_and_superposition():
    rng = np.random.default_rng(3)
    src_a, src_b = rng.normal(size=3) * 0.01, rng.normal(size=3) * 0.01
    m_a, m_b = rng.normal(size=3) * 0.1, rng.normal(size=3) * 0.1
    probe = np.array([0.05, -0.03, 0.08])
    both = dipole_field(src_a, m_a, probe) + dipole_field(src_b, m_b, probe)
    np.testing.assert_allclose(
        dipole_field(src_a, 2.0 * m_a, probe), 2.0 * dipole_field(src_a, m_a, probe),
        rtol=1e-15,
    )
    # field of two dipoles is the sum of the one-dipole fields by construction;
    # checked through the independent accumulation order
    np.testing.assert_allclose(
        both, dipole_field(src_b, m_b, probe) + dipole_field(src_a, m_a, probe), rtol=1e-15
    )


def test_dipole_inverse_cube_scaling():
    m = np.array([0.03, -0.01, 0.12])
    probe = np.array([0.04, 0.02, 0.07])
    near = dipole_field(np.zeros(3), m, probe)
    far = dipole_field(np.zeros(3), m, 2.0 * probe)
    np.testing.assert_allclose(far, near / 8.0, rtol=1e-12)


def test_dipole_mirror_symmetry():
    # moment along +z: the field is symmetric under z -> -z up to B_z parity
    m = np.array([0.0, 0.0, 0.141])
    up = dipole_field(np.zeros(3), m, [0.03, 0.01, 0.05])
    down = dipole_field(np.zeros(3), m, [0.03, 0.01, -0.05])
    np.testing.assert_allclose(up[2], down[2], rtol=1e-14)
    np.testing.assert_allclose(up[:2], -down[:2], rtol=1e-14)


def test_dipole_coincident_probe_raises():
    with pytest.raises(CoincidentGeometryError):
        dipole_field([0.01, 0.0, 0.0], [0.0, 0.0, 0.1], [0.01, 0.0, 0.0])


def test_sphere_dipole_moment_value():
    # Br * (pi d^3 / 6) / mu0 = Br * d^3 / (24e-7) for the 6.35 mm N42 ball
    assert sphere_dipole_moment(6.35e-3) == pytest.approx(0.14082633125, rel=1e-14)
    assert sphere_dipole_moment(6.35e-3, remanence=0.0) == 0.0


def test_forward_measurement_is_dipole_sum():
    scene = config_i_scene()
    bend = bend_from_angles(np.deg2rad(110.0), np.deg2rad(-35.0))
    state = chain_state(scene.chain, scene.base, bend)
    reading = forward_measurement(scene, bend)
    for j, sensor in enumerate(scene.sensors):
        expected = np.zeros(3)
        for pos, mom in zip(state.positions, state.moments):
            expected += dipole_field(pos, mom, sensor.position)
        np.testing.assert_allclose(reading[3 * j : 3 * j + 3], expected, rtol=1e-12)


def test_single_ball_forward_equals_dipole_field():
    chain = ChainSpec(n=1, d=6.35e-3, mu=0.14)
    base = FramePose.identity()
    sensors = (
        SensorSpec(np.array([0.05, 0.01, -0.02]), np.eye(3)),
        SensorSpec(np.array([-0.03, 0.04, 0.06]), np.eye(3)),
    )
    scene = SceneSpec(chain=chain, base=base, sensors=sensors)
    bend = bend_from_angles(np.deg2rad(40.0), np.deg2rad(-60.0))
    state = chain_state(chain, base, bend)
    reading = forward_measurement(scene, bend)
    for j, sensor in enumerate(sensors):
        expected = dipole_field(state.positions[0], state.moments[0], sensor.position)
        np.testing.assert_allclose(reading[3 * j : 3 * j + 3], expected, atol=0.0)


def test_rotated_sensor_reads_in_its_own_frame():
    R = Rotation.from_rotvec([0.4, -0.7, 0.2]).as_matrix()
    position = np.array([0.03, 0.02, 0.0])
    chain = default_chain()
    base = FramePose(np.array([0.0, 0.0, 0.15]), np.diag([1.0, -1.0, -1.0]))
    plain = SceneSpec(base=base, sensors=(SensorSpec.axis_aligned(position),), chain=chain)
    tilted = SceneSpec(base=base, sensors=(SensorSpec(position, R),), chain=chain)
    bend = bend_from_angles(1.1, 0.6)
    np.testing.assert_allclose(
        forward_measurement(tilted, bend), R.T @ forward_measurement(plain, bend), rtol=1e-12
    )


def test_straight_chain_four_fold_sensor_symmetry():
    # at gamma = 0 the config-I scene is symmetric under 90 degree rotations,
    # so all four sensors see the same field magnitude
    reading = forward_measurement(config_i_scene(), BendConfig(np.zeros(2))).reshape(4, 3)
    mags = np.linalg.norm(reading, axis=1)
    np.testing.assert_allclose(mags, mags[0], rtol=1e-12)


def test_zero_moment_chain_reads_zero():
    scene = config_i_scene(chain=default_chain(mu=0.0))
    reading = forward_measurement(scene, bend_from_angles(1.0, 0.3))
    assert np.array_equal(reading, np.zeros(12))


def test_forward_batch_rows_bit_identical_to_single():
    scene = config_i_scene()
    gammas = np.array([[0.0, 0.0], [0.9, -1.2], [np.pi, 0.0], [0.001, 2.8]])
    batch = forward_measurement_batch(scene, gammas)
    for b in range(gammas.shape[0]):
        row = forward_measurement_batch(scene, gammas[b : b + 1])[0]
        assert np.array_equal(batch[b], row)


def test_jacobian_consistent_across_step_sizes():
    scene = config_i_scene()
    bend = bend_from_angles(np.deg2rad(75.0), np.deg2rad(20.0))
    J1 = measurement_jacobian(scene, bend, step=1e-6)
    J2 = measurement_jacobian(scene, bend, step=5e-7)
    scale = np.max(np.abs(J1))
    np.testing.assert_allclose(J1, J2, atol=1e-6 * scale)


def test_jacobian_same_for_wrapped_plane_angle():
    scene = config_i_scene()
    a = measurement_jacobian(scene, bend_from_angles(1.1, 0.4))
    b = measurement_jacobian(scene, bend_from_angles(1.1, 0.4 + 2.0 * np.pi))
    scale = np.max(np.abs(a))
    np.testing.assert_allclose(a, b, atol=1e-9 * scale)


def test_jacobian_sign_convention():
    # J = -dq/dgamma: a forward step in gamma changes q by about -J @ step
    scene = config_i_scene()
    bend = bend_from_angles(0.8, -0.5)
    J = measurement_jacobian(scene, bend)
    delta = np.array([3e-7, -2e-7])
    q0 = forward_measurement_batch(scene, bend.gamma[None, :])[0]
    q1 = forward_measurement_batch(scene, (bend.gamma + delta)[None, :])[0]
    np.testing.assert_allclose(q1 - q0, -J @ delta, atol=1e-12 * np.max(np.abs(q0)))


def _collision_scene():
    # second ball of a straight 2-ball chain lands exactly on the sensor
    chain = ChainSpec(n=2, d=6.35e-3, mu=0.1)
    sensor = SensorSpec.axis_aligned([0.0, 0.0, 2.0 * chain.d])
    return SceneSpec(base=FramePose.identity(), sensors=(sensor,), chain=chain)


def test_coincident_ball_sensor_raises_with_indices():
    scene = _collision_scene()
    with pytest.raises(CoincidentGeometryError) as excinfo:
        forward_measurement_batch(scene, np.zeros((1, 2)))
    assert excinfo.value.ball_index == 1
    assert excinfo.value.sensor_index == 0
    assert "ball 1" in str(excinfo.value)


def test_validate_clearance_names_offender():
    with pytest.raises(ValueError, match="ball 1 .* sensor 0"):
        validate_clearance(_collision_scene(), np.zeros((1, 2)))
    # config-I workspace keeps everything far from the array
    validate_clearance(config_i_scene(), np.array([[0.0, 0.0], [np.pi, 0.0]]))


def test_scene_rejects_duplicate_sensors():
    chain = default_chain()
    s = SensorSpec.axis_aligned([0.01, 0.0, 0.0])
    with pytest.raises(ValueError):
        SceneSpec(base=FramePose.identity(), sensors=(s, s), chain=chain)
