"""Deterministic planar quadruped simulator with actuator-failure injection.

Side-view (x horizontal, z up) rigid torso with four two-joint legs hanging
from hip points spaced along the torso, eight torque-controlled actuators
total. Legs are massless kinematic chains: each joint is a damped double
integrator driven by commanded torque plus the Jacobian-transpose share of
its foot's ground reaction force; the torso carries all mass and receives
the contact forces directly. Ground contact is a penalty spring-damper with
a Coulomb friction clamp. Integration is semi-implicit Euler, `substeps`
per control step.

Everything is float64 and single-threaded: identical (seed, failure, action
sequence) produces bit-identical trajectories. The inner loop is scalar
Python on purpose; at 8 joints numpy's per-call overhead costs more than it
saves.

Conventions:
  * leg l owns actuator indices {2l, 2l+1} = (hip, knee); leg 0 is frontmost;
  * hip angle 0 points the upper link straight down in the torso frame,
    positive swings the foot forward; knee angle is relative to the upper link;
  * pitch is counterclockwise in the (x, z) plane (nose-up positive).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import configio
from .failure import NOMINAL, FailureSpec, apply_failure

TORQUE_COST_WEIGHT = 1e-6
CONTACT_COST_WEIGHT = 1e-3

OBS_DIM = 27
NUM_ACTUATORS = 8


class EpisodeFinished(RuntimeError):
    """step() was called on an episode that already ended."""


def reward(v_fwd: float, torques, contact_forces, falling: bool,
           legacy: bool = False) -> float:
    """Per-step reward: v_fwd - 1e-6*||u||^2 - 1e-3*||f||^2 + s.

    `s` is 1 while the robot is standing and 0 on the step it falls; with
    legacy=True the survival term is a constant +1 instead (the older
    formulation that rewards falling and standing alike).
    """
    u = np.asarray(torques, dtype=float)
    f = np.asarray(contact_forces, dtype=float)
    if not (math.isfinite(v_fwd) and np.all(np.isfinite(u)) and np.all(np.isfinite(f))):
        raise ValueError("reward inputs must be finite")
    s = 1.0 if legacy else (0.0 if falling else 1.0)
    return float(v_fwd - TORQUE_COST_WEIGHT * u.dot(u) - CONTACT_COST_WEIGHT * f.dot(f) + s)


@dataclass
class SimConfig:
    """Physical and episode parameters of the planar quadruped."""

    dt: float = 0.01                # control step [s]
    substeps: int = 4               # integrator substeps per control step
    gravity: float = 9.81           # [m/s^2], acts along -z
    max_torque: float = 12.0        # [N*m] per actuator at |action| = 1

    torso_mass: float = 8.0         # [kg]; legs add link_mass each
    torso_length: float = 0.6       # [m]
    torso_inertia: float = 0.5      # [kg*m^2] about the pitch axis
    link_mass: float = 0.4          # [kg] per leg link (8 links)
    upper_leg_length: float = 0.15  # [m]
    lower_leg_length: float = 0.15  # [m]

    ground_stiffness: float = 6000.0   # [N/m] penetration spring
    ground_damping: float = 80.0       # [N*s/m] normal damper, contact-gated
    tangent_stiffness: float = 1500.0  # [N/m] bristle spring to the contact anchor
    tangent_damping: float = 30.0      # [N*s/m] slip damping, pre-clamp
    friction_coeff: float = 1.0        # Coulomb clamp |ft| <= mu*fn, slides the anchor
    contact_force_clip: float = 1.0    # [N] per-foot cap for the reward's f term

    hip_inertia: float = 0.08       # [kg*m^2] reflected inertia at the hip
    knee_inertia: float = 0.04      # [kg*m^2]
    joint_damping: float = 0.6      # [N*m*s/rad]
    hip_spring: float = 8.0         # [N*m/rad] passive centering to the stance;
    knee_spring: float = 12.0       # not an actuator, so failures never scale it
    hip_limit: float = 1.0          # [rad], |hip| <= hip_limit
    knee_limit: float = 1.8         # [rad], |knee| <= knee_limit

    stand_hip_angle: float = 0.45   # canonical stance of the front leg pair;
    stand_knee_angle: float = -0.6  # the hind pair mirrors it (sawhorse stance)
    reset_noise: float = 0.05       # [rad] uniform joint-angle noise at reset

    healthy_z_range: tuple[float, float] | None = None  # default from standing height
    horizon: int = 500              # episode length [control steps]
    clock_period: int = 50          # steps per clock_phase cycle in the observation
    legacy_reward: bool = False     # use the constant +1 survival term

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.healthy_z_range is not None:
            lo, hi = self.healthy_z_range
            if not lo < hi:
                raise ValueError("healthy_z_range must satisfy z_min < z_max")

    @property
    def total_mass(self) -> float:
        return self.torso_mass + 8 * self.link_mass

    @property
    def hip_offsets(self) -> tuple[float, float, float, float]:
        """Leg attachment points along the torso, front (leg 0) to back."""
        half = 0.45 * self.torso_length
        return (half, half / 3.0, -half / 3.0, -half)

    @property
    def standing_height(self) -> float:
        a = self.stand_hip_angle
        b = self.stand_hip_angle + self.stand_knee_angle
        return self.upper_leg_length * math.cos(a) + self.lower_leg_length * math.cos(b)

    def rest_pose(self) -> list[float]:
        """Per-joint rest angles: front pair as configured, hind pair mirrored."""
        h, k = self.stand_hip_angle, self.stand_knee_angle
        return [h, k, h, k, -h, -k, -h, -k]

    @property
    def healthy_z(self) -> tuple[float, float]:
        if self.healthy_z_range is not None:
            return self.healthy_z_range
        return (0.3 * self.standing_height, 1.5 * self.standing_height)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "healthy_z_range" and value is not None:
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, raw: dict[str, str]) -> "SimConfig":
        kwargs = {}
        for f in fields(cls):
            if f.name not in raw:
                continue
            text = str(raw[f.name])
            if f.name == "healthy_z_range":
                values = configio.as_float_list(text, f.name)
                kwargs[f.name] = tuple(values) if values else None
            elif f.type == "int":
                kwargs[f.name] = configio.as_int(text, f.name)
            elif f.type == "bool":
                kwargs[f.name] = configio.as_bool(text, f.name)
            else:
                kwargs[f.name] = configio.as_float(text, f.name)
        unknown = set(raw) - {f.name for f in fields(cls)}
        if unknown:
            raise configio.ConfigError(f"unknown sim keys: {sorted(unknown)}")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path, section: str = "sim") -> "SimConfig":
        sections = configio.read_config(path)
        return cls.from_dict(sections.get(section, {}))

    def with_overrides(self, **kwargs) -> "SimConfig":
        return replace(self, **kwargs)


class PlanarQuadruped:
    """Episodic environment around the planar quadruped dynamics.

    Observation layout (width 27, never encodes the failure):
      [0:8]   joint angles            [8:16]  joint velocities
      [16:21] torso z, pitch, vx, vz, pitch rate
      [21:25] per-foot contact flags  [25]    clock phase in [0,1)
      [26]    padding (0.0)
    """

    def __init__(self, config: SimConfig | None = None, *,
                 failure_injection: bool = True, record_trace: bool = False):
        self.config = config or SimConfig()
        self.failure_injection = failure_injection
        self.record_trace = record_trace
        self.trace: list[tuple] = []
        self._ready = False

    # ------------------------------------------------------------------
    # episode control

    def reset(self, seed: int, failure: FailureSpec = NOMINAL) -> np.ndarray:
        """Start an episode: canonical crouch plus seeded joint-angle noise."""
        if not isinstance(failure, FailureSpec):
            raise TypeError("failure must be a FailureSpec")
        cfg = self.config
        rng = np.random.Generator(np.random.PCG64(seed))

        self._x = 0.0
        self._z = cfg.standing_height
        self._vx = 0.0
        self._vz = 0.0
        self._pitch = 0.0
        self._pitch_rate = 0.0
        rest = cfg.rest_pose()
        noise = rng.uniform(-cfg.reset_noise, cfg.reset_noise, NUM_ACTUATORS)
        self._q = [float(rest[i] + noise[i]) for i in range(NUM_ACTUATORS)]
        self._qd = [0.0] * NUM_ACTUATORS
        self._clamp_joints()

        self.failure = failure
        self.step_count = 0
        self.done = False
        self.falling = False
        self._x0 = 0.0
        self._anchors = [None, None, None, None]  # friction anchor per foot
        self._ready = True
        if self.record_trace:
            self.trace = []
        return self.observation()

    def step(self, action) -> tuple[np.ndarray, float, bool, dict]:
        """Advance one control step; returns (observation, reward, done, info)."""
        if not self._ready:
            raise EpisodeFinished("reset() must be called before step()")
        if self.done:
            raise EpisodeFinished("episode already finished; call reset()")
        action = np.asarray(action, dtype=float)
        if action.shape != (NUM_ACTUATORS,):
            raise ValueError(f"action must have shape ({NUM_ACTUATORS},), got {action.shape}")
        if not np.all(np.isfinite(action)):
            raise ValueError("action components must be finite")

        cfg = self.config
        torques = np.clip(action, -1.0, 1.0) * cfg.max_torque
        if self.failure_injection:
            torques = apply_failure(torques, self.failure)

        x_before = self._x
        h = cfg.dt / cfg.substeps
        f_clip = cfg.contact_force_clip
        clipped_sum = [0.0, 0.0, 0.0, 0.0]
        tq = torques.tolist()
        for _ in range(cfg.substeps):
            fn = self._substep(tq, h)
            for i in range(4):
                clipped_sum[i] += fn[i] if fn[i] < f_clip else f_clip
        inv = 1.0 / cfg.substeps
        f_impact = [c * inv for c in clipped_sum]

        v_fwd = (self._x - x_before) / cfg.dt
        z_lo, z_hi = cfg.healthy_z
        self.falling = self._z < z_lo or self._z > z_hi
        r = reward(v_fwd, torques, f_impact, self.falling, legacy=cfg.legacy_reward)

        self.step_count += 1
        self.done = self.falling or self.step_count >= cfg.horizon
        info = {
            "v_fwd": v_fwd,
            "torque_sq": float(torques.dot(torques)),
            "contact_force_sq": sum(f * f for f in f_impact),
            "falling": self.falling,
            "progress": self._x - self._x0,
        }
        if self.record_trace:
            self.trace.append((self.step_count * cfg.dt, self._x, self._z,
                               self._pitch, r, self.done))
        return self.observation(), r, self.done, info

    # ------------------------------------------------------------------
    # dynamics

    def _substep(self, torques: list, h: float) -> list:
        """One semi-implicit Euler substep; returns per-foot normal forces."""
        cfg = self.config
        q, qd = self._q, self._qd
        x, z, pitch = self._x, self._z, self._pitch
        w = self._pitch_rate
        vx, vz = self._vx, self._vz
        kg, cg = cfg.ground_stiffness, cfg.ground_damping
        kt, ct = cfg.tangent_stiffness, cfg.tangent_damping
        mu = cfg.friction_coeff
        b = cfg.joint_damping

        feet = self._leg_kinematics()
        force_x = 0.0
        force_z = 0.0
        torque_torso = 0.0
        normals = [0.0, 0.0, 0.0, 0.0]
        qdd = [0.0] * NUM_ACTUATORS
        rest = cfg.rest_pose()
        anchors = self._anchors
        for leg in range(4):
            fx, fz, jhx, jhz, jkx, jkz = feet[leg]
            hip, knee = 2 * leg, 2 * leg + 1
            tau_h = torques[hip] - b * qd[hip] + cfg.hip_spring * (rest[hip] - q[hip])
            tau_k = torques[knee] - b * qd[knee] + cfg.knee_spring * (rest[knee] - q[knee])
            contact = False
            if fz < 0.0:
                relx = fx - x
                relz = fz - z
                vfx = vx - w * relz + jhx * qd[hip] + jkx * qd[knee]
                vfz = vz + w * relx + jhz * qd[hip] + jkz * qd[knee]
                fn = -kg * fz - cg * vfz
                if fn > 0.0:
                    contact = True
                    if anchors[leg] is None:
                        anchors[leg] = fx
                    ft = -kt * (fx - anchors[leg]) - ct * vfx
                    cap = mu * fn
                    if ft > cap:
                        ft = cap
                        anchors[leg] = fx + cap / kt  # anchor slides to the cap
                    elif ft < -cap:
                        ft = -cap
                        anchors[leg] = fx - cap / kt
                    normals[leg] = fn
                    force_x += ft
                    force_z += fn
                    torque_torso += relx * fn - relz * ft
                    tau_h += jhx * ft + jhz * fn
                    tau_k += jkx * ft + jkz * fn
            if not contact:
                anchors[leg] = None
            qdd[hip] = tau_h / cfg.hip_inertia
            qdd[knee] = tau_k / cfg.knee_inertia

        m = cfg.total_mass
        self._vx = vx = vx + (force_x / m) * h
        self._vz = vz = vz + (force_z / m - cfg.gravity) * h
        self._pitch_rate = w = w + (torque_torso / cfg.torso_inertia) * h
        self._x = x + vx * h
        self._z = z + vz * h
        self._pitch = pitch + w * h
        for i in range(NUM_ACTUATORS):
            qd[i] += qdd[i] * h
            q[i] += qd[i] * h
        self._clamp_joints()
        return normals

    def _leg_kinematics(self) -> list:
        """Per-leg (foot_x, foot_z, jac_hip_x, jac_hip_z, jac_knee_x, jac_knee_z)."""
        cfg = self.config
        l1, l2 = cfg.upper_leg_length, cfg.lower_leg_length
        pitch = self._pitch
        cth, sth = math.cos(pitch), math.sin(pitch)
        out = []
        q = self._q
        for leg, d in enumerate(cfg.hip_offsets):
            a_up = pitch + q[2 * leg]
            a_lo = a_up + q[2 * leg + 1]
            s_up, c_up = math.sin(a_up), math.cos(a_up)
            s_lo, c_lo = math.sin(a_lo), math.cos(a_lo)
            jkx, jkz = l2 * c_lo, l2 * s_lo
            out.append((
                self._x + d * cth + l1 * s_up + l2 * s_lo,
                self._z + d * sth - l1 * c_up - l2 * c_lo,
                l1 * c_up + jkx,
                l1 * s_up + jkz,
                jkx,
                jkz,
            ))
        return out

    def _clamp_joints(self) -> None:
        cfg = self.config
        q, qd = self._q, self._qd
        for i in range(NUM_ACTUATORS):
            limit = cfg.hip_limit if i % 2 == 0 else cfg.knee_limit
            if q[i] > limit:
                q[i] = limit
                qd[i] = 0.0
            elif q[i] < -limit:
                q[i] = -limit
                qd[i] = 0.0

    # ------------------------------------------------------------------
    # introspection

    @property
    def pos(self) -> np.ndarray:
        return np.array([self._x, self._z])

    @property
    def pitch(self) -> float:
        return self._pitch

    @property
    def q(self) -> np.ndarray:
        return np.array(self._q)

    @property
    def qd(self) -> np.ndarray:
        return np.array(self._qd)

    def observation(self) -> np.ndarray:
        cfg = self.config
        feet = self._leg_kinematics()
        phase = (self.step_count % cfg.clock_period) / cfg.clock_period
        values = list(self._q) + list(self._qd) + [
            self._z, self._pitch, self._vx, self._vz, self._pitch_rate,
        ] + [1.0 if f[1] < 0.0 else 0.0 for f in feet] + [phase, 0.0]
        obs = np.array(values)
        if not np.all(np.isfinite(obs)):
            raise FloatingPointError("non-finite state; simulation diverged")
        return obs

    def mechanical_energy(self) -> float:
        """Kinetic + gravitational + spring (ground and joint) energy."""
        cfg = self.config
        kinetic = (0.5 * cfg.total_mass * (self._vx ** 2 + self._vz ** 2)
                   + 0.5 * cfg.torso_inertia * self._pitch_rate ** 2)
        spring = 0.0
        rest = cfg.rest_pose()
        for i in range(NUM_ACTUATORS):
            if i % 2 == 0:
                inertia, k = cfg.hip_inertia, cfg.hip_spring
            else:
                inertia, k = cfg.knee_inertia, cfg.knee_spring
            kinetic += 0.5 * inertia * self._qd[i] ** 2
            spring += 0.5 * k * (self._q[i] - rest[i]) ** 2
        for leg, f in enumerate(self._leg_kinematics()):
            if f[1] < 0.0:
                spring += 0.5 * cfg.ground_stiffness * f[1] ** 2
            if self._anchors[leg] is not None:
                spring += 0.5 * cfg.tangent_stiffness * (f[0] - self._anchors[leg]) ** 2
        return kinetic + cfg.total_mass * cfg.gravity * self._z + spring

    def get_state(self) -> dict:
        """Snapshot of the full dynamic state (for checkpoint/resume)."""
        return {
            "pos": [self._x, self._z],
            "vel": [self._vx, self._vz],
            "pitch": self._pitch,
            "pitch_rate": self._pitch_rate,
            "q": list(self._q),
            "qd": list(self._qd),
            "leg": self.failure.leg,
            "k": self.failure.k,
            "step_count": self.step_count,
            "done": self.done,
            "falling": self.falling,
            "x0": self._x0,
            "anchors": list(self._anchors),
        }

    def set_state(self, state: dict) -> None:
        self._x, self._z = (float(v) for v in state["pos"])
        self._vx, self._vz = (float(v) for v in state["vel"])
        self._pitch = float(state["pitch"])
        self._pitch_rate = float(state["pitch_rate"])
        self._q = [float(v) for v in state["q"]]
        self._qd = [float(v) for v in state["qd"]]
        self.failure = FailureSpec(leg=int(state["leg"]), k=float(state["k"]))
        self.step_count = int(state["step_count"])
        self.done = bool(state["done"])
        self.falling = bool(state["falling"])
        self._x0 = float(state["x0"])
        self._anchors = [None if a is None else float(a) for a in state["anchors"]]
        self._ready = True

    def write_trace_csv(self, path) -> None:
        """Dump the recorded trajectory, one row per step."""
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "torso_x", "torso_z", "pitch", "reward", "done"])
            for row in self.trace:
                writer.writerow(row)
