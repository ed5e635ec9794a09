"""World constants for the ragdoll and their key-value file format."""
from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path


@dataclass(frozen=True)
class WorldConfig:
    """Every tunable constant of the surrogate runner.

    Lengths in meters, masses in kilograms, angles in radians, torques in N*m.
    Joint angles are child-minus-parent; positive hip angle swings the thigh
    forward, negative knee angle folds the shank back.
    """

    gravity: float = 9.81
    dt: float = 0.005
    substeps: int = 2
    velocity_iterations: int = 12
    position_iterations: int = 2
    baumgarte: float = 0.2

    torso_length: float = 0.82
    torso_com: float = 0.35
    torso_mass: float = 45.0
    thigh_length: float = 0.45
    thigh_mass: float = 8.0
    shank_length: float = 0.45
    shank_mass: float = 4.0
    foot_length: float = 0.26
    foot_heel: float = 0.06
    ankle_height: float = 0.08
    foot_mass: float = 1.2

    hip_min: float = -0.5
    hip_max: float = 2.0
    knee_min: float = -2.4
    knee_max: float = 0.0
    ankle_min: float = -0.7
    ankle_max: float = 0.7

    hip_stiffness: float = 800.0
    hip_damping: float = 20.0
    knee_stiffness: float = 800.0
    knee_damping: float = 15.0
    ankle_stiffness: float = 1500.0
    ankle_damping: float = 20.0

    hip_torque: float = 900.0
    knee_torque: float = 900.0

    friction: float = 0.9
    contact_stiffness: float = 2.0e5
    contact_damping: float = 4.0e3
    contact_tolerance: float = 0.01
    joint_tolerance: float = 0.01
    limit_tolerance: float = 0.05

    finish_distance: float = 100.0

    def __post_init__(self):
        problems = []
        if not self.dt > 0:
            problems.append("dt must be positive")
        if self.substeps < 1 or self.velocity_iterations < 1 or self.position_iterations < 0:
            problems.append("substeps and velocity_iterations must be >= 1")
        for name in ("torso_mass", "thigh_mass", "shank_mass", "foot_mass"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        for name in ("torso_length", "thigh_length", "shank_length", "foot_length", "ankle_height"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        if not 0 <= self.foot_heel <= self.foot_length:
            problems.append("foot_heel must lie within the foot")
        if not 0 < self.torso_com < self.torso_length:
            problems.append("torso_com must lie within the torso")
        for joint in ("hip", "knee", "ankle"):
            lo, hi = getattr(self, f"{joint}_min"), getattr(self, f"{joint}_max")
            if not lo <= 0.0 <= hi:
                problems.append(f"{joint} limits must bracket the standing angle 0")
        if not self.finish_distance > 0:
            problems.append("finish_distance must be positive")
        if self.friction < 0 or self.contact_stiffness <= 0 or self.contact_damping < 0:
            problems.append("contact constants must be non-negative (stiffness positive)")
        if not math.isfinite(self.gravity):
            problems.append("gravity must be finite")
        if problems:
            raise ValueError("invalid WorldConfig: " + "; ".join(problems))

    @property
    def step_us(self) -> int:
        return int(round(self.dt * 1e6))

    def replace(self, **changes) -> "WorldConfig":
        return dataclasses.replace(self, **changes)


def coerce_fields(cls, values: dict[str, str], section: str = "") -> dict:
    """Convert string values from a config file to the dataclass field types."""
    known = {f.name: f for f in fields(cls)}
    out = {}
    for key, raw in values.items():
        name = key.replace("-", "_")
        if name not in known:
            where = f" in [{section}]" if section else ""
            raise ValueError(f"unknown key {key!r}{where}")
        default = known[name].default
        if isinstance(default, bool):
            out[name] = raw.strip().lower() in ("1", "true", "yes", "on")
        elif isinstance(default, int):
            out[name] = int(raw)
        elif isinstance(default, float):
            out[name] = float(raw)
        else:
            out[name] = raw.strip()
    return out


def load_world_config(path: str | Path) -> WorldConfig:
    """Load the ``[world]`` section of an INI-style config file (missing keys keep defaults)."""
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    if not parser.has_section("world"):
        return WorldConfig()
    return WorldConfig(**coerce_fields(WorldConfig, dict(parser.items("world")), "world"))


def dump_world_config(config: WorldConfig) -> str:
    lines = ["[world]"]
    lines += [f"{f.name} = {getattr(config, f.name)!r}" for f in fields(config)]
    return "\n".join(lines) + "\n"
