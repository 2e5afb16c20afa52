"""Acceptance suite: eight end-to-end checks, one printed verdict line each.

Every check computes its quantities first, prints a single
"criterion N: PASS|FAIL | ..." line with the measured numbers, then
asserts the stated bounds. Checks that fail do so honestly; the bounds are
not loosened to make them green.
"""

import time

import numpy as np
import pytest

from magchain.analysis import (
    WorkspaceGrid,
    observability_map,
    replay_experiment,
    sensitivity_sweep,
)
from magchain.estimator import estimate_batch, estimate_shape
from magchain.field import dipole_field, forward_measurement_batch, measurement_jacobian
from magchain.geometry import bend_from_angles, tip_position, FramePose, ChainSpec
from magchain.scenes import (
    canonical_angle_grid,
    config_i_scene,
    config_ii_scene,
    replay_grid_degrees,
    sensitivity_grid_degrees,
)

SEED = 20260825

FINE_PHI = np.arange(-180.0, 181.0, 10.0)  # 37 values
FINE_PSI = np.arange(0.0, 181.0, 10.0)  # 19 values


def announce(capsys, line):
    with capsys.disabled():
        print("\n" + line, flush=True)


def verdict(ok):
    return "PASS" if ok else "FAIL"


def test_criterion_1_noise_free_round_trip(capsys):
    # 13 x 7 bend grid, psi from 30 to 180 deg; exact recovery in both scenes
    cells = canonical_angle_grid(
        [float(v) for v in range(-180, 181, 30)], np.linspace(30.0, 180.0, 7)
    )
    gammas = np.array(
        [bend_from_angles(np.deg2rad(psi), np.deg2rad(phi)).gamma for phi, psi in cells]
    )
    t0 = time.perf_counter()
    worst = {}
    for label, factory in (("I", config_i_scene), ("II", config_ii_scene)):
        scene = factory()
        readings = forward_measurement_batch(scene, gammas)
        est, _, _ = estimate_batch(scene, readings)
        worst[label] = float(np.linalg.norm(est - gammas, axis=1).max())
    elapsed = time.perf_counter() - t0
    ok = worst["I"] < 1e-6 and worst["II"] < 1e-6 and elapsed < 30.0
    line = (
        f"criterion 1: {verdict(ok)} | max |gamma_hat - gamma|: "
        f"config I {worst['I']:.2e} rad, config II {worst['II']:.2e} rad "
        f"(bound 1e-6) | {len(cells)} cells | {elapsed:.1f}s (budget 30s)"
    )
    announce(capsys, line)
    assert ok, line


def test_criterion_2_observability_config_i(capsys):
    grid = WorkspaceGrid.from_degrees(FINE_PHI, FINE_PSI)
    t0 = time.perf_counter()
    omap = observability_map(config_i_scene(), grid)
    elapsed = time.perf_counter() - t0
    chi = omap.chi
    chi_straight = float(chi[0, 0])
    fold = chi[:, -1]
    fold_lo, fold_hi = float(fold.min()), float(fold.max())
    # symmetry clause: across phi at fixed psi, all values within 1e-3 of
    # each other (worst row range)
    row_range = float((chi.max(axis=0) - chi.min(axis=0)).max())
    straight_ok = chi_straight >= 0.90
    fold_ok = fold_lo >= 0.25 and fold_hi <= 0.45
    sym_ok = row_range <= 1e-3
    time_ok = elapsed < 10.0
    ok = straight_ok and fold_ok and sym_ok and time_ok
    line = (
        f"criterion 2: {verdict(ok)} | chi(straight) {chi_straight:.4f} (>= 0.90: "
        f"{verdict(straight_ok)}) | chi(psi=180) in [{fold_lo:.4f}, {fold_hi:.4f}] "
        f"(band [0.25, 0.45]: {verdict(fold_ok)}) | worst phi-range {row_range:.2e} "
        f"(<= 1e-3: {verdict(sym_ok)}) | {elapsed:.2f}s (budget 10s)"
    )
    announce(capsys, line)
    assert ok, line


def test_criterion_3_observability_config_ii(capsys):
    grid = WorkspaceGrid.from_degrees(FINE_PHI, FINE_PSI)
    omap = observability_map(config_ii_scene(), grid)
    chi = omap.chi
    chi_min = float(chi.min())
    chi_straight = float(chi[0, 0])
    # ridge profile over phi (best chi over psi), periodic; phi = 180
    # duplicates phi = -180 and is dropped
    ridge = chi[:-1].max(axis=1)
    phi_u = FINE_PHI[:-1]
    n = ridge.size
    maxima = [
        float(phi_u[i])
        for i in range(n)
        if ridge[i] > ridge[(i - 1) % n] and ridge[i] > ridge[(i + 1) % n]
    ]
    targets = np.array([-135.0, -90.0, -45.0, 45.0, 90.0, 135.0])
    offsets = [float(np.min(np.abs(targets - m))) for m in maxima]
    min_ok = chi_min > 0.40
    straight_ok = 0.45 <= chi_straight <= 0.65
    maxima_ok = len(maxima) > 0 and all(off <= 15.0 for off in offsets)
    ok = min_ok and straight_ok and maxima_ok
    line = (
        f"criterion 3: {verdict(ok)} | min chi {chi_min:.4f} (> 0.40: {verdict(min_ok)}) "
        f"| chi(straight) {chi_straight:.4f} (in [0.45, 0.65]: {verdict(straight_ok)}) "
        f"| ridge maxima at phi = {maxima} deg, offsets {offsets} "
        f"(<= 15 deg of +-45/90/135: {verdict(maxima_ok)})"
    )
    announce(capsys, line)
    assert ok, line


def test_criterion_4_sensitivity_config_i(capsys):
    scene = config_i_scene()
    grid = WorkspaceGrid.from_degrees(*sensitivity_grid_degrees())
    t0 = time.perf_counter()
    report = sensitivity_sweep(scene, grid, [0.0, 0.05], samples=100, seed=SEED)
    elapsed = time.perf_counter() - t0
    length = scene.chain.total_length
    k1 = report.max_tip_error[:, :, 1]
    worst_frac = float(k1.max() / length)
    envelope_ok = bool(np.all(k1 <= 0.05 * length))
    spreads = (k1.max(axis=0) - k1.min(axis=0)) / k1.min(axis=0)
    spread_max = float(spreads.max())
    spread_ok = bool(np.all(spreads <= 0.30))
    zero_max = float(report.max_tip_error[:, :, 0].max())
    zero_ok = zero_max < 1e-6 * length
    time_ok = elapsed < 300.0
    ok = envelope_ok and spread_ok and zero_ok and time_ok
    line = (
        f"criterion 4: {verdict(ok)} | k=1 worst tip error {100 * worst_frac:.2f}% of "
        f"chain length (<= 5%: {verdict(envelope_ok)}) | phi-spread max "
        f"{100 * spread_max:.1f}% (<= 30%: {verdict(spread_ok)}) | zero-noise max "
        f"{zero_max:.2e} m (< {1e-6 * length:.2e}: {verdict(zero_ok)}) | "
        f"{elapsed:.0f}s (budget 300s)"
    )
    announce(capsys, line)
    assert ok, line


def test_criterion_5_sensitivity_config_ii(capsys):
    scene = config_ii_scene()
    grid = WorkspaceGrid.from_degrees(*sensitivity_grid_degrees())
    report = sensitivity_sweep(scene, grid, [0.0, 0.05, 0.10], samples=100, seed=SEED)
    k2 = report.max_tip_error[:, :, 2]
    # grid rows: phi = 0 (toward), 90 (parallel), 180 (away), -90 (parallel)
    parallel = np.concatenate([k2[1], k2[3]])
    ratio = float(parallel.max() / parallel.min())
    parallel_ok = ratio <= 2.0
    extreme = float(max(k2[0, -1], k2[2, -1]))
    straight = float(max(k2[0, 0], k2[2, 0]))
    bend_ok = extreme > straight
    ok = parallel_ok and bend_ok
    line = (
        f"criterion 5: {verdict(ok)} | parallel-plane max/min over psi {ratio:.2f} "
        f"(<= 2: {verdict(parallel_ok)}) | toward/away far-bend error {extreme:.4f} m vs "
        f"straight {straight:.4f} m (strictly larger: {verdict(bend_ok)})"
    )
    announce(capsys, line)
    assert ok, line


def test_criterion_6_calibration_improves_accuracy(capsys):
    scene = config_i_scene()
    scales = 5.0 ** (np.arange(12) / 11.0)  # sigma spread exactly 5x
    configs = [
        bend_from_angles(np.deg2rad(psi), np.deg2rad(phi))
        for phi, psi in replay_grid_degrees()
    ]
    result = replay_experiment(
        scene, configs, 0.05, samples=10, seed=SEED, channel_scales=scales, outer_iters=2
    )
    trials = len(configs) * result.samples
    spread = float(scales.max() / scales.min())
    mean_start = float(result.mean_error_start.mean())
    mean_final = float(result.mean_error_final.mean())
    improve_ok = mean_final <= mean_start
    trials_ok = trials >= 100
    spread_ok = spread >= 4.0
    ok = improve_ok and trials_ok and spread_ok
    line = (
        f"criterion 6: {verdict(ok)} | mean tip error {1e3 * mean_start:.3f} mm "
        f"uncalibrated -> {1e3 * mean_final:.3f} mm with scheduled gains "
        f"(improves: {verdict(improve_ok)}) | {trials} trials (>= 100: "
        f"{verdict(trials_ok)}) | channel sigma spread {spread:.1f}x (>= 4x: "
        f"{verdict(spread_ok)})"
    )
    announce(capsys, line)
    assert ok, line


def test_criterion_7_solve_time_budget(capsys):
    scene = config_i_scene()
    centers_deg = replay_grid_degrees()
    configs = [
        bend_from_angles(np.deg2rad(psi), np.deg2rad(phi)) for phi, psi in centers_deg
    ]
    result = replay_experiment(
        scene, configs, 0.05, samples=2, seed=SEED, outer_iters=2
    )
    qbar = forward_measurement_batch(scene, np.array([c.gamma for c in configs]))
    rng = np.random.default_rng(SEED)
    sigma = 0.05 * np.linalg.norm(qbar, axis=1) / 3.0
    readings = qbar + sigma[:, None] * rng.standard_normal(qbar.shape)
    timings = []
    for k in range(readings.shape[0]):
        t0 = time.perf_counter()
        estimate_shape(scene, readings[k], table=result.table, outer_iters=2)
        timings.append(time.perf_counter() - t0)
    mean_s = float(np.mean(timings))
    ok = mean_s <= 0.25
    line = (
        f"criterion 7: {verdict(ok)} | mean estimate_shape wall time with two "
        f"scheduled rounds: {1e3 * mean_s:.1f} ms over {len(timings)} solves "
        f"(budget 250 ms), max {1e3 * max(timings):.1f} ms"
    )
    announce(capsys, line)
    assert ok, line


def test_criterion_8_oracle_equivalences(capsys):
    # frozen hand evaluations of the dipole special cases
    axial = dipole_field([0, 0, 0], [0, 0, 0.141], [0, 0, 0.15])
    equatorial = dipole_field([0, 0, 0], [0, 0, 0.141], [0.10, 0, 0])
    axial_err = abs(axial[2] - 8.355555555555554e-06) / 8.355555555555554e-06
    equ_err = abs(equatorial[2] - -1.4099999999999994e-05) / 1.4099999999999994e-05
    field_ok = axial_err < 1e-12 and equ_err < 1e-12

    # frozen brute-force tips (independent rotation library, one rotation
    # per ball) for the 10-ball 6.35 mm chain at an identity base
    chain = ChainSpec(n=10, d=6.35e-3, mu=0.14)
    base = FramePose.identity()
    oracle = [
        (180.0, 0.0, [0.04009232211818652, 0.0, -0.0063500000000000015]),
        (90.0, 0.0, [0.04351720003735469, 0.0, 0.03716720003735468]),
        (120.0, 45.0, [0.03398481859387732, 0.03398481859387732, 0.021398488185349854]),
    ]
    tip_err = 0.0
    for psi_deg, phi_deg, expected in oracle:
        bend = bend_from_angles(np.deg2rad(psi_deg), np.deg2rad(phi_deg))
        tip = tip_position(chain, base, bend)
        tip_err = max(tip_err, float(np.max(np.abs(tip - np.array(expected)))))
    tip_ok = tip_err < 1e-12

    scene = config_i_scene()
    bend = bend_from_angles(np.deg2rad(75.0), np.deg2rad(20.0))
    J1 = measurement_jacobian(scene, bend, step=1e-6)
    J2 = measurement_jacobian(scene, bend, step=5e-7)
    jac_err = float(np.max(np.abs(J1 - J2)) / np.max(np.abs(J1)))
    jac_ok = jac_err < 1e-4

    ok = field_ok and tip_ok and jac_ok
    line = (
        f"criterion 8: {verdict(ok)} | dipole axial/equatorial rel err "
        f"{axial_err:.1e}/{equ_err:.1e} (< 1e-12: {verdict(field_ok)}) | tip vs "
        f"brute force {tip_err:.1e} m (< 1e-12: {verdict(tip_ok)}) | Jacobian "
        f"two-step rel err {jac_err:.1e} (< 1e-4: {verdict(jac_ok)})"
    )
    announce(capsys, line)
    assert ok, line
