"""Run-configuration loading for the batch CLI.

A run is one JSON document: a command name, a scene (preset label or a
full custom description), an options block for the command, and an
optional seed. Validation is strict: unknown keys are rejected and every
error message names the offending field. Units at the file boundary are
millimeters, degrees, and Tesla.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .analysis import WorkspaceGrid
from .field import SceneSpec, SensorSpec
from .geometry import ChainSpec, FramePose
from .scenes import PRESET_SCENES, default_chain, replay_grid_degrees

COMMANDS = ("forward", "estimate", "observability", "sensitivity", "calibrate", "replay")


class ConfigError(Exception):
    """Invalid run configuration; the message names the offending field."""


@dataclass(frozen=True)
class RunConfig:
    command: str
    scene: SceneSpec
    scene_label: str
    seed: int | None = None
    grid: WorkspaceGrid | None = None
    noise_levels: tuple = ()
    noise_level: float | None = None
    samples: int | None = None
    outer_iters: int = 0
    readings_path: str | None = None
    samples_path: str | None = None
    gain_table_path: str | None = None
    channel_scales: tuple | None = None
    configs_deg: tuple = ()
    options_echo: dict = field(default_factory=dict)


def _require(obj: dict, key: str, kind, path: str):
    if key not in obj:
        raise ConfigError(f"{path}.{key} is required")
    return _typed(obj[key], kind, f"{path}.{key}")


def _typed(value, kind, path: str):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path} must be a number")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path} must be an integer")
        return value
    if not isinstance(value, kind):
        raise ConfigError(f"{path} must be a {kind.__name__}")
    return value


def _no_extras(obj: dict, allowed, path: str):
    extras = set(obj) - set(allowed)
    if extras:
        raise ConfigError(f"unknown key {path}.{sorted(extras)[0]}")


def _vector_mm(value, path: str) -> np.ndarray:
    value = _typed(value, list, path)
    if len(value) != 3:
        raise ConfigError(f"{path} must have 3 entries")
    return np.array([_typed(v, float, f"{path}[{i}]") for i, v in enumerate(value)]) * 1e-3


def _rotation(value, path: str) -> np.ndarray:
    value = _typed(value, list, path)
    if len(value) != 3 or any(not isinstance(r, list) or len(r) != 3 for r in value):
        raise ConfigError(f"{path} must be a 3x3 matrix")
    return np.array(
        [[_typed(v, float, f"{path}[{i}][{j}]") for j, v in enumerate(row)]
         for i, row in enumerate(value)]
    )


def _parse_chain(obj, path: str) -> ChainSpec:
    obj = _typed(obj, dict, path)
    _no_extras(obj, ("n", "d_mm", "mu"), path)
    n = _require(obj, "n", int, path)
    d_mm = _require(obj, "d_mm", float, path)
    if n < 1:
        raise ConfigError(f"{path}.n must be positive")
    if d_mm <= 0.0:
        raise ConfigError(f"{path}.d_mm must be positive (ball diameter)")
    mu = _typed(obj["mu"], float, f"{path}.mu") if "mu" in obj else None
    if mu is not None and mu < 0.0:
        raise ConfigError(f"{path}.mu must be nonnegative")
    return default_chain(n=n, d=d_mm * 1e-3, mu=mu)


def _parse_scene(obj, path: str = "scene") -> tuple[SceneSpec, str]:
    if isinstance(obj, str):
        if obj not in PRESET_SCENES:
            raise ConfigError(
                f"{path} must be one of {sorted(PRESET_SCENES)} or a scene object"
            )
        return PRESET_SCENES[obj](), obj
    obj = _typed(obj, dict, path)
    _no_extras(obj, ("chain", "base", "sensors"), path)
    chain = _parse_chain(_require(obj, "chain", dict, path), f"{path}.chain")
    base_obj = _require(obj, "base", dict, path)
    _no_extras(base_obj, ("position_mm", "rotation"), f"{path}.base")
    position = _vector_mm(
        _require(base_obj, "position_mm", list, f"{path}.base"), f"{path}.base.position_mm"
    )
    rotation = (
        _rotation(base_obj["rotation"], f"{path}.base.rotation")
        if "rotation" in base_obj
        else np.eye(3)
    )
    sensors_obj = _require(obj, "sensors", list, path)
    if len(sensors_obj) == 0:
        raise ConfigError(f"{path}.sensors must be non-empty")
    sensors = []
    for j, s in enumerate(sensors_obj):
        s = _typed(s, dict, f"{path}.sensors[{j}]")
        _no_extras(s, ("position_mm", "rotation"), f"{path}.sensors[{j}]")
        pos = _vector_mm(
            _require(s, "position_mm", list, f"{path}.sensors[{j}]"),
            f"{path}.sensors[{j}].position_mm",
        )
        rot = (
            _rotation(s["rotation"], f"{path}.sensors[{j}].rotation")
            if "rotation" in s
            else np.eye(3)
        )
        sensors.append(SensorSpec(position=pos, rotation=rot))
    try:
        base = FramePose(position=position, rotation=rotation)
        scene = SceneSpec(base=base, sensors=tuple(sensors), chain=chain)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return scene, "custom"


def _parse_grid(obj, path: str) -> WorkspaceGrid:
    obj = _typed(obj, dict, path)
    _no_extras(obj, ("phi_deg", "psi_deg"), path)
    phi = _require(obj, "phi_deg", list, path)
    psi = _require(obj, "psi_deg", list, path)
    phi = [_typed(v, float, f"{path}.phi_deg[{i}]") for i, v in enumerate(phi)]
    psi = [_typed(v, float, f"{path}.psi_deg[{i}]") for i, v in enumerate(psi)]
    try:
        return WorkspaceGrid.from_degrees(phi, psi)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_configs_deg(obj, path: str) -> tuple:
    obj = _typed(obj, list, path)
    if len(obj) == 0:
        raise ConfigError(f"{path} must be non-empty")
    out = []
    for i, pair in enumerate(obj):
        pair = _typed(pair, list, f"{path}[{i}]")
        if len(pair) != 2:
            raise ConfigError(f"{path}[{i}] must be [phi_deg, psi_deg]")
        out.append(
            (
                _typed(pair[0], float, f"{path}[{i}][0]"),
                _typed(pair[1], float, f"{path}[{i}][1]"),
            )
        )
    return tuple(out)


def _parse_levels(obj, path: str) -> tuple:
    obj = _typed(obj, list, path)
    if len(obj) == 0:
        raise ConfigError(f"{path} must be non-empty")
    levels = [_typed(v, float, f"{path}[{i}]") for i, v in enumerate(obj)]
    if any(v < 0.0 for v in levels):
        raise ConfigError(f"{path} entries must be nonnegative")
    return tuple(levels)


_OPTION_KEYS = {
    "forward": ("grid",),
    "estimate": ("readings", "gain_table", "outer_iters"),
    "observability": ("grid",),
    "sensitivity": ("grid", "noise_levels", "samples"),
    "calibrate": ("samples", "configs_deg"),
    "replay": ("noise_level", "samples", "outer_iters", "channel_scales", "configs_deg"),
}


def load_run_config(path: str, seed_override: int | None = None) -> RunConfig:
    """Parse and validate a run-config JSON file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_run_config(doc, seed_override)


def parse_run_config(doc, seed_override: int | None = None) -> RunConfig:
    doc = _typed(doc, dict, "config")
    _no_extras(doc, ("command", "scene", "options", "seed"), "config")
    command = _require(doc, "command", str, "config")
    if command not in COMMANDS:
        raise ConfigError(f"config.command must be one of {list(COMMANDS)}")
    scene, label = _parse_scene(_require(doc, "scene", object, "config"))
    seed = seed_override
    if seed is None and "seed" in doc:
        seed = _typed(doc["seed"], int, "config.seed")
    if seed is not None and seed < 0:
        raise ConfigError("config.seed must be nonnegative")

    options = _typed(doc.get("options", {}), dict, "config.options")
    _no_extras(options, _OPTION_KEYS[command], "config.options")
    opt = "config.options"
    kwargs: dict = {}

    if command in ("forward", "observability", "sensitivity"):
        kwargs["grid"] = _parse_grid(_require(options, "grid", dict, opt), f"{opt}.grid")
    if command == "estimate":
        kwargs["readings_path"] = _require(options, "readings", str, opt)
        if "gain_table" in options:
            kwargs["gain_table_path"] = _typed(options["gain_table"], str, f"{opt}.gain_table")
        kwargs["outer_iters"] = _typed(options.get("outer_iters", 0), int, f"{opt}.outer_iters")
        if kwargs["outer_iters"] < 0:
            raise ConfigError(f"{opt}.outer_iters must be >= 0")
        if kwargs["outer_iters"] > 0 and "gain_table" not in options:
            raise ConfigError(f"{opt}.gain_table is required when outer_iters > 0")
    if command == "sensitivity":
        kwargs["noise_levels"] = _parse_levels(
            _require(options, "noise_levels", list, opt), f"{opt}.noise_levels"
        )
        kwargs["samples"] = _require(options, "samples", int, opt)
        if kwargs["samples"] < 1:
            raise ConfigError(f"{opt}.samples must be positive")
        if seed is None:
            raise ConfigError("config.seed (or --seed) is required for sensitivity")
    if command == "calibrate":
        kwargs["samples_path"] = _require(options, "samples", str, opt)
        kwargs["configs_deg"] = (
            _parse_configs_deg(options["configs_deg"], f"{opt}.configs_deg")
            if "configs_deg" in options
            else tuple(replay_grid_degrees())
        )
    if command == "replay":
        kwargs["noise_level"] = _require(options, "noise_level", float, opt)
        if kwargs["noise_level"] < 0.0:
            raise ConfigError(f"{opt}.noise_level must be nonnegative")
        kwargs["samples"] = _require(options, "samples", int, opt)
        if kwargs["samples"] < 1:
            raise ConfigError(f"{opt}.samples must be positive")
        kwargs["outer_iters"] = _typed(options.get("outer_iters", 2), int, f"{opt}.outer_iters")
        if kwargs["outer_iters"] < 0:
            raise ConfigError(f"{opt}.outer_iters must be >= 0")
        if "channel_scales" in options:
            scales = _typed(options["channel_scales"], list, f"{opt}.channel_scales")
            if len(scales) != scene.measurement_size:
                raise ConfigError(
                    f"{opt}.channel_scales must have {scene.measurement_size} entries"
                )
            kwargs["channel_scales"] = tuple(
                _typed(v, float, f"{opt}.channel_scales[{i}]") for i, v in enumerate(scales)
            )
        kwargs["configs_deg"] = (
            _parse_configs_deg(options["configs_deg"], f"{opt}.configs_deg")
            if "configs_deg" in options
            else tuple(replay_grid_degrees())
        )
        if seed is None:
            raise ConfigError("config.seed (or --seed) is required for replay")

    return RunConfig(
        command=command,
        scene=scene,
        scene_label=label,
        seed=seed,
        options_echo=options,
        **kwargs,
    )
