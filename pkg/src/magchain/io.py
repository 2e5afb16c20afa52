"""File formats for the batch CLI: readings CSV, result CSVs, gain-table
JSON, and run manifests.

Angles are degrees and fields are Tesla at the file boundary. Floats are
written with repr, the shortest digits that round-trip exactly, so a rerun
with the same inputs produces byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json

import numpy as np

from .analysis import ObservabilityMap, ReplayResult, SensitivityReport
from .config import ConfigError
from .estimator import GainTable
from .field import SceneSpec
from .geometry import BendConfig, angles_from_bend


def fmt(x) -> str:
    return repr(float(x))


def deg(rad) -> float:
    # rounding at 1e-12 deg keeps whole-degree grid angles clean through
    # the radian round trip (rad2deg(deg2rad(30)) != 30 exactly); + 0.0
    # drops negative zero
    return round(float(np.rad2deg(rad)), 12) + 0.0


def _channel_names(m: int) -> list[str]:
    return [f"b{axis}_s{j}" for j in range(m) for axis in "xyz"]


def write_readings_csv(path, angles_deg: np.ndarray, readings: np.ndarray) -> None:
    """One row per configuration: phi_deg, psi_deg, then 3m Tesla columns."""
    m = readings.shape[1] // 3
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phi_deg", "psi_deg"] + _channel_names(m))
        for (phi, psi), row in zip(angles_deg, readings):
            writer.writerow([fmt(phi), fmt(psi)] + [fmt(v) for v in row])


def read_readings_csv(path, scene: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """Returns (angles_deg (R, 2), readings (R, 3m)); validates the header."""
    expected = ["phi_deg", "psi_deg"] + _channel_names(scene.num_sensors)
    try:
        fh = open(path, newline="")
    except FileNotFoundError as exc:
        raise ConfigError(f"readings file not found: {path}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise ConfigError(
                f"{path}: expected columns {expected[:3]}...[{len(expected)} total], "
                f"got {header[:3] if header else header}...[{len(header or [])} total]"
            )
        angles, readings = [], []
        for ln, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise ConfigError(f"{path}:{ln}: expected {len(expected)} fields, got {len(row)}")
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise ConfigError(f"{path}:{ln}: {exc}") from exc
            angles.append(values[:2])
            readings.append(values[2:])
    if not readings:
        raise ConfigError(f"{path}: no data rows")
    return np.array(angles), np.array(readings)


def write_estimates_csv(path, rows: list[dict]) -> None:
    cols = ["phi_deg", "psi_deg", "residual_norm_t", "solver_status", "error"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow(
                [
                    fmt(row["phi_deg"]),
                    fmt(row["psi_deg"]),
                    fmt(row["residual_norm_t"]),
                    row["solver_status"],
                    row.get("error", ""),
                ]
            )


def write_observability_csv(path, omap: ObservabilityMap) -> None:
    """Long format: phi_deg, psi_deg, chi; row-major with phi outer."""
    phi_deg = [deg(v) for v in omap.grid.phi_values]
    psi_deg = [deg(v) for v in omap.grid.psi_values]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phi_deg", "psi_deg", "chi"])
        for i, phi in enumerate(phi_deg):
            for j, psi in enumerate(psi_deg):
                writer.writerow([fmt(phi), fmt(psi), fmt(omap.chi[i, j])])


def write_sensitivity_csv(path, report: SensitivityReport) -> None:
    """Long format with one row per (cell, noise level)."""
    phi_deg = [deg(v) for v in report.grid.phi_values]
    psi_deg = [deg(v) for v in report.grid.psi_values]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["phi_deg", "psi_deg", "noise_level", "max_tip_error_m", "solver_failures"]
        )
        for i, phi in enumerate(phi_deg):
            for j, psi in enumerate(psi_deg):
                for k, level in enumerate(report.noise_levels):
                    writer.writerow(
                        [
                            fmt(phi),
                            fmt(psi),
                            fmt(level),
                            fmt(report.max_tip_error[i, j, k]),
                            str(int(report.solver_failures[i, j, k])),
                        ]
                    )


def write_replay_csv(path, result: ReplayResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "phi_deg",
                "psi_deg",
                "mean_error_start_m",
                "max_error_start_m",
                "mean_error_final_m",
                "max_error_final_m",
            ]
        )
        for k in range(result.centers.shape[0]):
            psi, phi = angles_from_bend(BendConfig(result.centers[k]))
            writer.writerow(
                [
                    fmt(deg(phi)),
                    fmt(deg(psi)),
                    fmt(result.mean_error_start[k]),
                    fmt(result.max_error_start[k]),
                    fmt(result.mean_error_final[k]),
                    fmt(result.max_error_final[k]),
                ]
            )


def write_gain_table(path, table: GainTable) -> None:
    """Gain-table JSON: centers as (psi_deg, phi_deg), gains in 1/Tesla."""
    entries = []
    for k in range(table.size):
        psi, phi = angles_from_bend(BendConfig(table.centers[k]))
        entries.append(
            {
                "psi_deg": deg(psi),
                "phi_deg": deg(phi),
                "gains_per_tesla": [float(g) for g in table.gains[k]],
            }
        )
    with open(path, "w") as fh:
        json.dump({"entries": entries}, fh, indent=2)
        fh.write("\n")


def read_gain_table(path, scene: SceneSpec) -> GainTable:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"gain table not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"gain table is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "entries" not in doc or not isinstance(doc["entries"], list):
        raise ConfigError(f"{path}: gain table must be an object with an entries list")
    centers, gains = [], []
    for k, entry in enumerate(doc["entries"]):
        if not isinstance(entry, dict) or not {"psi_deg", "phi_deg", "gains_per_tesla"} <= set(
            entry
        ):
            raise ConfigError(
                f"{path}: entries[{k}] needs psi_deg, phi_deg and gains_per_tesla"
            )
        psi = np.deg2rad(float(entry["psi_deg"]))
        phi = np.deg2rad(float(entry["phi_deg"]))
        centers.append(psi * np.array([-np.sin(phi), np.cos(phi)]))
        row = entry["gains_per_tesla"]
        if len(row) != scene.measurement_size:
            raise ConfigError(
                f"{path}: entries[{k}] has {len(row)} gains, scene needs "
                f"{scene.measurement_size}"
            )
        gains.append([float(g) for g in row])
    try:
        return GainTable(centers=np.array(centers), gains=np.array(gains))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def scene_hash(scene: SceneSpec) -> str:
    """sha256 over the scene's numeric content, for run manifests."""
    payload = {
        "chain": {"n": scene.chain.n, "d": fmt(scene.chain.d), "mu": fmt(scene.chain.mu)},
        "base": {
            "position": [fmt(v) for v in scene.base.position],
            "rotation": [[fmt(v) for v in row] for row in scene.base.rotation],
        },
        "sensors": [
            {
                "position": [fmt(v) for v in s.position],
                "rotation": [[fmt(v) for v in row] for row in s.rotation],
            }
            for s in scene.sensors
        ],
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(path, manifest: dict) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
