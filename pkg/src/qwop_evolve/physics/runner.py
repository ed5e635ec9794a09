"""Runner body model, state, and episode playback."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from ..genome import ControlTimeline, KeyMask
from . import kernel
from .config import WorldConfig

LINKS = ("torso", "l_thigh", "l_shank", "l_foot", "r_thigh", "r_shank", "r_foot")
JOINTS = ("l_hip", "l_knee", "l_ankle", "r_hip", "r_knee", "r_ankle")
TORSO = 0
N_CONTACTS = 10


class Outcome(enum.Enum):
    RUNNING = kernel.RUNNING
    WON = kernel.WON
    FELL = kernel.FELL
    TIMED_OUT = kernel.TIMED_OUT


EpisodeOutcome = Outcome


class Model(NamedTuple):
    invm: np.ndarray
    invi: np.ndarray
    jint: np.ndarray
    jf: np.ndarray
    cint: np.ndarray
    cf: np.ndarray
    params: np.ndarray
    standing: np.ndarray


@lru_cache(maxsize=32)
def build_model(config: WorldConfig) -> Model:
    c = config
    y_knee = c.ankle_height + c.shank_length
    y_hip = y_knee + c.thigh_length

    torso_com = np.array([0.0, y_hip + c.torso_com])
    thigh_com = np.array([0.0, y_knee + 0.5 * c.thigh_length])
    shank_com = np.array([0.0, c.ankle_height + 0.5 * c.shank_length])
    foot_com = np.array([0.5 * c.foot_length - c.foot_heel, 0.5 * c.ankle_height])
    coms = np.array([torso_com, thigh_com, shank_com, foot_com, thigh_com, shank_com, foot_com])

    masses = np.array([c.torso_mass, c.thigh_mass, c.shank_mass, c.foot_mass,
                       c.thigh_mass, c.shank_mass, c.foot_mass])
    off = 0.5 * c.torso_length - c.torso_com
    torso_i = c.torso_mass * (c.torso_length ** 2 / 12.0 + off * off)
    thigh_i = c.thigh_mass * c.thigh_length ** 2 / 12.0
    shank_i = c.shank_mass * c.shank_length ** 2 / 12.0
    foot_i = c.foot_mass * (c.foot_length ** 2 + c.ankle_height ** 2) / 12.0
    inertia = np.array([torso_i, thigh_i, shank_i, foot_i, thigh_i, shank_i, foot_i])

    hip = np.array([0.0, y_hip])
    knee = np.array([0.0, y_knee])
    ankle = np.array([0.0, c.ankle_height])

    def joint(parent, child, anchor, lo, hi, k, d, key, torque):
        ap = anchor - coms[parent]
        ac = anchor - coms[child]
        return (parent, child, int(key)), (ap[0], ap[1], ac[0], ac[1], lo, hi, k, d, torque)

    specs = [
        joint(0, 1, hip, c.hip_min, c.hip_max, c.hip_stiffness, c.hip_damping, KeyMask.Q, c.hip_torque),
        joint(1, 2, knee, c.knee_min, c.knee_max, c.knee_stiffness, c.knee_damping, KeyMask.O, -c.knee_torque),
        joint(2, 3, ankle, c.ankle_min, c.ankle_max, c.ankle_stiffness, c.ankle_damping, 0, 0.0),
        joint(0, 4, hip, c.hip_min, c.hip_max, c.hip_stiffness, c.hip_damping, KeyMask.W, c.hip_torque),
        joint(4, 5, knee, c.knee_min, c.knee_max, c.knee_stiffness, c.knee_damping, KeyMask.P, -c.knee_torque),
        joint(5, 6, ankle, c.ankle_min, c.ankle_max, c.ankle_stiffness, c.ankle_damping, 0, 0.0),
    ]
    jint = np.array([s[0] for s in specs], dtype=np.int64)
    jf = np.array([s[1] for s in specs], dtype=np.float64)

    head = np.array([0.0, y_hip + c.torso_length])
    heel = np.array([-c.foot_heel, 0.0])
    toe = np.array([c.foot_length - c.foot_heel, 0.0])
    points = [(0, hip, 1), (0, head, 1)]
    for shank, foot in ((2, 3), (5, 6)):
        points += [(shank, knee, 0), (shank, ankle, 0), (foot, heel, 0), (foot, toe, 0)]
    cint = np.array([(b, torso) for b, _, torso in points], dtype=np.int64)
    cf = np.array([p - coms[b] for b, p, _ in points], dtype=np.float64)

    params = np.zeros(8)
    params[kernel.P_GRAVITY] = c.gravity
    params[kernel.P_DT] = c.dt
    params[kernel.P_BETA] = c.baumgarte
    params[kernel.P_MU] = c.friction
    params[kernel.P_KC] = c.contact_stiffness
    params[kernel.P_DC] = c.contact_damping
    params[kernel.P_CONTACT_TOL] = c.contact_tolerance
    params[kernel.P_FINISH] = c.finish_distance

    for arr in (jint, jf, cint, cf, params, coms):
        arr.setflags(write=False)
    return Model(1.0 / masses, 1.0 / inertia, jint, jf, cint, cf, params, coms)


@dataclass
class RunnerState:
    """Kinematic state of the seven links plus the simulation clock."""

    pos: np.ndarray
    angle: np.ndarray
    vel: np.ndarray
    angvel: np.ndarray
    steps: int = 0
    dt: float = field(default=0.005, repr=False)
    # accumulated solver impulses carried between steps for warm starting
    joint_impulses: np.ndarray = field(default_factory=lambda: np.zeros((len(JOINTS), 5)), repr=False)
    contact_impulses: np.ndarray = field(default_factory=lambda: np.zeros((N_CONTACTS, 2)), repr=False)

    @property
    def sim_clock(self) -> float:
        return self.steps * self.dt

    @property
    def torso_x(self) -> float:
        return float(self.pos[TORSO, 0])

    def copy(self) -> "RunnerState":
        return RunnerState(self.pos.copy(), self.angle.copy(), self.vel.copy(),
                           self.angvel.copy(), self.steps, self.dt,
                           self.joint_impulses.copy(), self.contact_impulses.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.pos).all() and np.isfinite(self.angle).all()
                    and np.isfinite(self.vel).all() and np.isfinite(self.angvel).all())

    def joint_angles(self, config: WorldConfig) -> np.ndarray:
        jint = build_model(config).jint
        return self.angle[jint[:, 1]] - self.angle[jint[:, 0]]


class Diagnostics(NamedTuple):
    penetration: float
    joint_gap: float
    limit_overshoot: float
    lowest_torso_point: float


def diagnostics(state: RunnerState, config: WorldConfig) -> Diagnostics:
    m = build_model(config)
    out = np.empty(4)
    kernel.measure(state.pos, state.angle, m.jint, m.jf, m.cint, m.cf, out)
    return Diagnostics(*(float(v) for v in out))


def init_runner(config: WorldConfig | None = None) -> RunnerState:
    config = config or WorldConfig()
    m = build_model(config)
    n = len(LINKS)
    return RunnerState(m.standing.copy(), np.zeros(n), np.zeros((n, 2)), np.zeros(n), 0, config.dt)


def step(state: RunnerState, mask: KeyMask | int, config: WorldConfig | None = None) -> RunnerState:
    """Advance one ``dt`` under a fixed key mask; the input state is left untouched."""
    config = config or WorldConfig()
    if not state.is_finite():
        raise ValueError("refusing to step a non-finite runner state")
    m = build_model(config)
    new = state.copy()
    kernel.step(new.pos, new.angle, new.vel, new.angvel, new.joint_impulses,
                new.contact_impulses, int(mask), m.invm, m.invi,
                m.jint, m.jf, m.cint, m.cf, m.params, config.substeps,
                config.velocity_iterations, config.position_iterations)
    new.steps += 1
    return new


def check_termination(state: RunnerState, config: WorldConfig, time_limit_s: float) -> Outcome:
    lowest = diagnostics(state, config).lowest_torso_point
    code = kernel.classify(state.pos, lowest, config.finish_distance, config.contact_tolerance,
                           state.steps, _max_steps(time_limit_s, config))
    return Outcome(code)


def _max_steps(time_limit_s: float, config: WorldConfig) -> int:
    return int(round(time_limit_s * 1e6)) // config.step_us


@dataclass(frozen=True)
class EpisodeResult:
    outcome: Outcome
    distance_m: float
    elapsed_s: float
    steps: int
    torso_x: float


@dataclass(frozen=True)
class Trace:
    """Per-step link poses; ``poses[n]`` is the state after step ``n + 1``."""

    dt: float
    masks: np.ndarray
    poses: np.ndarray

    def __len__(self) -> int:
        return len(self.masks)

    def to_text(self) -> str:
        header = ["step", "t_s", "mask"]
        for name in LINKS:
            header += [f"{name}_x", f"{name}_y", f"{name}_theta"]
        lines = ["# " + ", ".join(header)]
        for n in range(len(self.masks)):
            row = [str(n + 1), f"{(n + 1) * self.dt:.3f}", format(int(self.masks[n]), "04b")]
            row += [f"{v:.6f}" for v in self.poses[n].ravel()]
            lines.append(", ".join(row))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class EpisodeStats:
    """Worst-case solver quality over an episode."""

    max_penetration: float
    max_joint_gap: float
    max_limit_overshoot: float
    finite: bool


def schedule_arrays(timeline: ControlTimeline) -> tuple[np.ndarray, np.ndarray]:
    if len(timeline) == 0:
        raise ValueError("cannot play an empty timeline")
    masks = np.array([int(e.mask) for e in timeline], dtype=np.int64)
    ends = np.cumsum([int(e.duration_ms) * 1000 for e in timeline]).astype(np.int64)
    return masks, ends


def reported_distance(torso_x: float, outcome: Outcome, config: WorldConfig) -> float:
    """Torso progress floored at zero and rounded to 0.1 m.

    Only a win may report the finish distance or more: a runner that falls in
    the very step it crosses the line is held just short of it.
    """
    if not np.isfinite(torso_x):
        return 0.0
    distance = round(max(torso_x, 0.0), 1)
    if outcome is not Outcome.WON:
        distance = min(distance, math.ceil(config.finish_distance * 10 - 1) / 10)
    return distance


def run_episode(timeline: ControlTimeline, config: WorldConfig | None = None,
                time_limit_s: float = 45.0, trace: bool = False,
                stats: bool = False):
    """Play ``timeline`` in a loop from the standing pose until the episode ends.

    Returns an :class:`EpisodeResult`, followed by a :class:`Trace` when
    ``trace`` is set and an :class:`EpisodeStats` when ``stats`` is set.
    """
    config = config or WorldConfig()
    m = build_model(config)
    masks, ends = schedule_arrays(timeline)
    state = init_runner(config)
    max_steps = _max_steps(time_limit_s, config)
    if max_steps < 1:
        raise ValueError(f"time limit {time_limit_s} s is shorter than one step")
    n_trace = max_steps if trace else 1
    poses = np.zeros((n_trace, len(LINKS), 3))
    tmasks = np.zeros(n_trace, dtype=np.int64)
    diag = np.zeros(4)
    steps, code = kernel.simulate(
        state.pos, state.angle, state.vel, state.angvel, state.joint_impulses,
        state.contact_impulses, m.invm, m.invi, m.jint, m.jf,
        m.cint, m.cf, m.params, config.substeps, config.velocity_iterations,
        config.position_iterations, masks, ends, config.step_us, max_steps,
        poses, tmasks, trace, diag)
    torso_x = float(state.pos[TORSO, 0])
    outcome = Outcome(code)
    result = EpisodeResult(outcome, reported_distance(torso_x, outcome, config),
                           steps * config.dt, int(steps), torso_x)
    out: list = [result]
    if trace:
        out.append(Trace(config.dt, tmasks[:steps].copy(), poses[:steps].copy()))
    if stats:
        out.append(EpisodeStats(float(diag[0]), float(diag[1]), float(diag[2]), bool(diag[3])))
    return out[0] if len(out) == 1 else tuple(out)
