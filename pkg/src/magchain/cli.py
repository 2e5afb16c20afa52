"""Batch command-line front end.

Every run is a subcommand plus a JSON run config; outputs land in --out as
delimited data files, a JSON run manifest, and (for the report subcommands
observability, sensitivity and replay) PNG figures unless --no-figures.

Exit codes: 0 success, 2 configuration or input-file error, 3 model or
solver failure that poisons the whole run. Row-level estimation failures
are recorded in the output CSV instead of failing the run.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__, io
from .analysis import observability_map, replay_experiment, sensitivity_sweep
from .config import ConfigError, RunConfig, load_run_config
from .estimator import (
    _STATUS_BY_CODE,
    calibrate_gains,
    estimate_batch,
    solver_settings,
)
from .field import CoincidentGeometryError, forward_measurement_batch
from .geometry import BendConfig, angles_from_bend, bend_from_angles

_MATCH_TOL = 1e-6  # rad, matching sample labels to configuration centers


def _grid_angles_deg(grid) -> np.ndarray:
    """(phi_deg, psi_deg) per cell, row-major with phi outer."""
    phi = np.array([io.deg(v) for v in grid.phi_values])
    psi = np.array([io.deg(v) for v in grid.psi_values])
    return np.column_stack(
        [np.repeat(phi, psi.size), np.tile(psi, phi.size)]
    )


def _configs_from_degrees(configs_deg) -> list[BendConfig]:
    configs = [
        bend_from_angles(np.deg2rad(psi), np.deg2rad(phi)) for phi, psi in configs_deg
    ]
    centers = np.array([c.gamma for c in configs])
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt(np.einsum("ikj,ikj->ik", diff, diff))
    dist[np.diag_indices(len(configs))] = np.inf
    if np.any(dist < _MATCH_TOL):
        i, j = np.argwhere(dist < _MATCH_TOL)[0]
        raise ConfigError(
            f"configs_deg entries {i} and {j} are the same configuration "
            f"(phi={configs_deg[i][0]:g}, psi={configs_deg[i][1]:g} aliases "
            f"phi={configs_deg[j][0]:g}, psi={configs_deg[j][1]:g})"
        )
    return configs


def cmd_forward(cfg: RunConfig, args) -> tuple[dict, dict]:
    readings = forward_measurement_batch(cfg.scene, cfg.grid.gamma_cells())
    io.write_readings_csv(
        os.path.join(args.out, "readings.csv"), _grid_angles_deg(cfg.grid), readings
    )
    return {"readings": "readings.csv"}, {"rows": int(readings.shape[0])}


def cmd_estimate(cfg: RunConfig, args) -> tuple[dict, dict]:
    _, readings = io.read_readings_csv(cfg.readings_path, cfg.scene)
    table = (
        io.read_gain_table(cfg.gain_table_path, cfg.scene) if cfg.gain_table_path else None
    )
    rows, failed = [], 0
    try:
        gamma, _, status = estimate_batch(cfg.scene, readings, table, cfg.outer_iters)
        resid = np.linalg.norm(
            forward_measurement_batch(cfg.scene, gamma) - readings, axis=1
        )
        for b in range(readings.shape[0]):
            psi, phi = angles_from_bend(BendConfig(gamma[b]))
            rows.append(
                {
                    "phi_deg": io.deg(phi),
                    "psi_deg": io.deg(psi),
                    "residual_norm_t": resid[b],
                    "solver_status": _STATUS_BY_CODE[status[b]].value,
                }
            )
    except (CoincidentGeometryError, FloatingPointError):
        # batch solve poisoned; isolate per row so one bad reading cannot
        # take down the rest
        rows, failed = [], 0
        for b in range(readings.shape[0]):
            try:
                gamma, _, status = estimate_batch(
                    cfg.scene, readings[b : b + 1], table, cfg.outer_iters
                )
                resid = np.linalg.norm(
                    forward_measurement_batch(cfg.scene, gamma) - readings[b : b + 1],
                    axis=1,
                )
                psi, phi = angles_from_bend(BendConfig(gamma[0]))
                rows.append(
                    {
                        "phi_deg": io.deg(phi),
                        "psi_deg": io.deg(psi),
                        "residual_norm_t": resid[0],
                        "solver_status": _STATUS_BY_CODE[status[0]].value,
                    }
                )
            except (CoincidentGeometryError, FloatingPointError) as exc:
                failed += 1
                rows.append(
                    {
                        "phi_deg": np.nan,
                        "psi_deg": np.nan,
                        "residual_norm_t": np.nan,
                        "solver_status": "error",
                        "error": str(exc),
                    }
                )
    io.write_estimates_csv(os.path.join(args.out, "estimates.csv"), rows)
    return {"estimates": "estimates.csv"}, {"rows": len(rows), "failed_rows": failed}


def cmd_observability(cfg: RunConfig, args) -> tuple[dict, dict]:
    omap = observability_map(cfg.scene, cfg.grid)
    io.write_observability_csv(os.path.join(args.out, "observability.csv"), omap)
    outputs = {"map": "observability.csv"}
    if not args.no_figures:
        from . import figures

        figures.save_observability_figure(
            os.path.join(args.out, "observability.png"), omap, label=cfg.scene_label
        )
        outputs["figure"] = "observability.png"
    return outputs, {
        "cells": int(np.prod(omap.chi.shape)),
        "failed_cells": len(omap.failures),
    }


def cmd_sensitivity(cfg: RunConfig, args) -> tuple[dict, dict]:
    report = sensitivity_sweep(
        cfg.scene, cfg.grid, cfg.noise_levels, cfg.samples, cfg.seed, workers=args.threads
    )
    io.write_sensitivity_csv(os.path.join(args.out, "sensitivity.csv"), report)
    outputs = {"report": "sensitivity.csv"}
    if not args.no_figures:
        from . import figures

        figures.save_sensitivity_figure(
            os.path.join(args.out, "sensitivity.png"), report, label=cfg.scene_label
        )
        outputs["figure"] = "sensitivity.png"
    return outputs, {
        "cells": int(np.prod(report.max_tip_error.shape[:2])),
        "levels": list(report.noise_levels),
        "samples": report.samples,
        "solver_failures": int(report.solver_failures.sum()),
    }


def cmd_calibrate(cfg: RunConfig, args) -> tuple[dict, dict]:
    labels, samples = io.read_readings_csv(cfg.samples_path, cfg.scene)
    configs = _configs_from_degrees(cfg.configs_deg)
    centers = np.array([c.gamma for c in configs])

    label_phi = np.deg2rad(labels[:, 0])
    label_psi = np.deg2rad(labels[:, 1])
    label_gamma = label_psi[:, None] * np.column_stack(
        [-np.sin(label_phi), np.cos(label_phi)]
    )
    diff = label_gamma[:, None, :] - centers[None, :, :]
    dist = np.sqrt(np.einsum("bkj,bkj->bk", diff, diff))
    assign = np.argmin(dist, axis=1)
    nearest = dist[np.arange(labels.shape[0]), assign]
    if np.any(nearest > _MATCH_TOL):
        r = int(np.argmax(nearest > _MATCH_TOL))
        raise ConfigError(
            f"{cfg.samples_path} row {r + 2}: configuration "
            f"(phi={labels[r, 0]:g}, psi={labels[r, 1]:g}) is not in configs_deg"
        )
    grouped = [samples[assign == k] for k in range(len(configs))]
    for k, group in enumerate(grouped):
        if group.shape[0] == 0:
            phi, psi = cfg.configs_deg[k]
            raise ConfigError(
                f"{cfg.samples_path}: no samples for configuration "
                f"(phi={phi:g}, psi={psi:g})"
            )

    table = calibrate_gains(cfg.scene, configs, grouped)
    io.write_gain_table(os.path.join(args.out, "gain_table.json"), table)

    qbar = forward_measurement_batch(cfg.scene, centers)
    worst = np.max(
        [np.max(np.abs(grouped[k] - qbar[k]), axis=0) for k in range(len(configs))],
        axis=0,
    )
    names = [f"b{axis}_s{j}" for j in range(cfg.scene.num_sensors) for axis in "xyz"]
    print("per-channel worst model deviation across configurations:")
    for name, dev, gain in zip(names, worst, table.gains.min(axis=0)):
        print(f"  {name}: {dev:.3e} T (min gain {gain:.3e} /T)")
    return {"gain_table": "gain_table.json"}, {
        "configurations": len(configs),
        "samples": int(samples.shape[0]),
    }


def cmd_replay(cfg: RunConfig, args) -> tuple[dict, dict]:
    configs = _configs_from_degrees(cfg.configs_deg)
    result = replay_experiment(
        cfg.scene,
        configs,
        cfg.noise_level,
        cfg.samples,
        cfg.seed,
        channel_scales=cfg.channel_scales,
        outer_iters=cfg.outer_iters,
    )
    io.write_replay_csv(os.path.join(args.out, "replay.csv"), result)
    io.write_gain_table(os.path.join(args.out, "gain_table.json"), result.table)
    outputs = {"report": "replay.csv", "gain_table": "gain_table.json"}
    if not args.no_figures:
        from . import figures

        figures.save_replay_figure(
            os.path.join(args.out, "replay.png"), result, label=cfg.scene_label
        )
        outputs["figure"] = "replay.png"
    summary = {
        "configurations": len(configs),
        "samples_per_configuration": result.samples,
        "mean_tip_error_start_m": float(result.mean_error_start.mean()),
        "mean_tip_error_final_m": float(result.mean_error_final.mean()),
        "max_tip_error_start_m": float(result.max_error_start.max()),
        "max_tip_error_final_m": float(result.max_error_final.max()),
        "solver_failures_start": result.failures_start,
        "solver_failures_final": result.failures_final,
    }
    print(
        "replay mean tip error: "
        f"{1e3 * summary['mean_tip_error_start_m']:.3f} mm uncalibrated -> "
        f"{1e3 * summary['mean_tip_error_final_m']:.3f} mm calibrated"
    )
    return outputs, summary


_DISPATCH = {
    "forward": cmd_forward,
    "estimate": cmd_estimate,
    "observability": cmd_observability,
    "sensitivity": cmd_sensitivity,
    "calibrate": cmd_calibrate,
    "replay": cmd_replay,
}

_HELP = {
    "forward": "simulate sensor readings over a bend grid",
    "estimate": "estimate bend configurations from a readings file",
    "observability": "map the observability index over a bend grid",
    "sensitivity": "Monte Carlo tip-error sweep over noise levels",
    "calibrate": "fit per-channel gains from labeled samples",
    "replay": "end-to-end calibrate-then-estimate rehearsal",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="magchain",
        description="magnetic ball-chain shape estimation toolbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in _HELP.items():
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", required=True, help="run-config JSON path")
        p.add_argument("--out", default=".", help="output directory, created if missing")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
        p.add_argument(
            "--no-figures", action="store_true", help="skip PNG rendering for reports"
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_run_config(args.config, seed_override=args.seed)
        if cfg.command != args.command:
            raise ConfigError(
                f"config.command is '{cfg.command}' but the "
                f"'{args.command}' subcommand was invoked"
            )
        os.makedirs(args.out, exist_ok=True)
        outputs, summary = _DISPATCH[args.command](cfg, args)
        manifest = {
            "command": cfg.command,
            "package_version": __version__,
            "scene": cfg.scene_label,
            "scene_hash": io.scene_hash(cfg.scene),
            "seed": cfg.seed,
            "threads": args.threads,
            "solver": solver_settings(),
            "options": cfg.options_echo,
            "outputs": outputs,
            "summary": summary,
        }
        io.write_manifest(os.path.join(args.out, "manifest.json"), manifest)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CoincidentGeometryError, FloatingPointError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
