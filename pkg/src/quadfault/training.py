"""Training orchestrator: curriculum -> failure draw -> rollout -> PPO.

One orchestrator owns the curriculum, the policy parameters and the
normalizer statistics. Rollout workers are independent simulator instances
with private RNG streams, stepped round-robin with a barrier per PPO
iteration, so runs are bit-reproducible for any worker count and a resumed
run continues exactly where the checkpoint left off.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import configio
from .agent import (PolicyParams, PPOConfig, ReturnScaler, RunningNorm, Trajectory,
                    act, init_policy, make_optimizer, ppo_update, value_estimate)
from .checkpoint import load_checkpoint, save_checkpoint
from .curriculum import CurriculumState, make_curriculum
from .failure import rng_stream, sample_failure
from .simulator import PlanarQuadruped, SimConfig

RUNLOG_COLUMNS = (
    "update", "env_steps", "episodes", "mean_return", "mean_distance",
    "L", "U", "g_threshold", "policy_loss", "value_loss", "entropy",
    "clip_fraction", "approx_kl",
)


@dataclass
class TrainConfig:
    """Everything a training run needs; flag-for-flag mirror of [train]."""

    mode: str = "baseline"
    total_env_steps: int = 300_000
    seed: int = 0
    num_workers: int = 1
    train_interval_clamp: tuple[float, float] | None = None
    checkpoint_every: int = 100_000
    output_dir: str | None = None
    curriculum_m: int = 10
    curriculum_delta: float = 0.01
    g_threshold: float | None = None   # None: random-policy warmup sets it
    warmup_episodes: int = 20
    fixed_k: float = 1.0
    lcdr_N: int = 11
    obs_norm: bool = True
    reward_scaling: bool = True
    log_interval: int = 1              # RunLog row every n updates
    verbose: bool = True               # progress lines on stdout
    ppo: PPOConfig = field(default_factory=PPOConfig)
    sim: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        if self.total_env_steps < self.ppo.horizon:
            raise ValueError("total_env_steps must cover at least one horizon")
        if self.num_workers < 1:
            raise ValueError("num_workers must be >= 1")

    def semantic_dict(self) -> dict:
        """Fields that define the run's trajectory (used to vet resumes)."""
        out = {}
        for f in fields(self):
            if f.name in ("output_dir", "checkpoint_every", "log_interval", "verbose"):
                continue
            value = getattr(self, f.name)
            if f.name in ("ppo", "sim"):
                value = value.__dict__.copy()
                if f.name == "sim" and value.get("healthy_z_range") is not None:
                    value["healthy_z_range"] = list(value["healthy_z_range"])
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    def to_sections(self) -> dict:
        train = {}
        for f in fields(self):
            if f.name in ("ppo", "sim"):
                continue
            train[f.name] = getattr(self, f.name)
        return {"train": train, "ppo": self.ppo.__dict__.copy(), "sim": self.sim.to_dict()}

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        sections = configio.read_config(path)
        return cls.from_sections(sections)

    @classmethod
    def from_sections(cls, sections: dict) -> "TrainConfig":
        raw = dict(sections.get("train", {}))
        kwargs = {}
        int_keys = {"total_env_steps", "seed", "num_workers", "checkpoint_every",
                    "curriculum_m", "warmup_episodes", "lcdr_N", "log_interval"}
        float_keys = {"curriculum_delta", "fixed_k"}
        bool_keys = {"obs_norm", "reward_scaling", "verbose"}
        for key, text in raw.items():
            if key == "mode":
                kwargs["mode"] = text
            elif key == "output_dir":
                kwargs["output_dir"] = None if text.lower() == "none" else text
            elif key == "train_interval_clamp":
                values = configio.as_float_list(text, key)
                kwargs[key] = tuple(values) if values else None
            elif key == "g_threshold":
                kwargs[key] = None if text.lower() == "none" else configio.as_float(text, key)
            elif key in int_keys:
                kwargs[key] = configio.as_int(text, key)
            elif key in float_keys:
                kwargs[key] = configio.as_float(text, key)
            elif key in bool_keys:
                kwargs[key] = configio.as_bool(text, key)
            else:
                raise configio.ConfigError(f"unknown train key: {key}")
        kwargs["ppo"] = PPOConfig.from_dict(sections.get("ppo", {}))
        kwargs["sim"] = SimConfig.from_dict(sections.get("sim", {}))
        return cls(**kwargs)


class RunLog:
    """Per-update records; env_steps is strictly increasing."""

    def __init__(self, rows: list[dict] | None = None, meta: dict | None = None):
        self.rows = rows or []
        self.meta = meta or {}

    def append(self, row: dict) -> None:
        if self.rows and row["env_steps"] <= self.rows[-1]["env_steps"]:
            raise ValueError("env_steps must be strictly increasing")
        self.rows.append(row)

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=RUNLOG_COLUMNS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)

    def column(self, name: str) -> list:
        return [row[name] for row in self.rows]


@dataclass
class TrainResult:
    params: PolicyParams
    run_log: RunLog
    obs_norm: RunningNorm
    curriculum: CurriculumState
    checkpoint_payload: dict


class _Worker:
    """One simulator instance plus its private RNG streams and episode state."""

    def __init__(self, index: int, config: TrainConfig):
        self.index = index
        self.env = PlanarQuadruped(config.sim)
        self.failure_rng = rng_stream(config.seed, "failure", index)
        self.reset_rng = rng_stream(config.seed, "reset", index)
        self.action_rng = rng_stream(config.seed, "action", index)
        self.episode_return = 0.0
        self.episode_steps = 0
        self.return_acc = 0.0
        self.obs = None

    def start_episode(self, curriculum: CurriculumState) -> np.ndarray:
        low, high = curriculum.current_interval()
        spec = sample_failure(self.failure_rng, low, high)
        seed = int(self.reset_rng.integers(0, 2 ** 31))
        self.obs = self.env.reset(seed, spec)
        self.episode_return = 0.0
        self.episode_steps = 0
        self.return_acc = 0.0
        return self.obs

    def rng_states(self) -> dict:
        return {
            "failure": self.failure_rng.bit_generator.state,
            "reset": self.reset_rng.bit_generator.state,
            "action": self.action_rng.bit_generator.state,
        }

    def load_rng_states(self, states: dict) -> None:
        self.failure_rng.bit_generator.state = states["failure"]
        self.reset_rng.bit_generator.state = states["reset"]
        self.action_rng.bit_generator.state = states["action"]

    def state_dict(self) -> dict:
        return {
            "env": self.env.get_state(),
            "episode_return": self.episode_return,
            "episode_steps": self.episode_steps,
            "return_acc": self.return_acc,
            "rng": self.rng_states(),
        }

    def load_state_dict(self, state: dict) -> None:
        self.env.set_state(state["env"])
        self.obs = self.env.observation()
        self.episode_return = float(state["episode_return"])
        self.episode_steps = int(state["episode_steps"])
        self.return_acc = float(state["return_acc"])
        self.load_rng_states(state["rng"])


class Orchestrator:
    """Owns one training run end to end."""

    def __init__(self, config: TrainConfig, resume_from: str | None = None):
        self.config = config
        self.out_dir = Path(config.output_dir) if config.output_dir else None
        if self.out_dir:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            configio.write_config(self.out_dir / "effective.cfg", config.to_sections())

        init_rng = rng_stream(config.seed, "init")
        self.params = init_policy(init_rng)
        self.optimizer = make_optimizer(self.params)
        self.ppo_rng = rng_stream(config.seed, "ppo")
        self.obs_norm = RunningNorm(dim=27)
        self.return_scaler = ReturnScaler()
        self.curriculum = make_curriculum(
            config.mode, m=config.curriculum_m, delta=config.curriculum_delta,
            g_threshold=config.g_threshold if config.g_threshold is not None else 0.0,
            fixed_k=config.fixed_k, lcdr_N=config.lcdr_N,
            total_steps_T=config.total_env_steps,
            interval_clamp=config.train_interval_clamp,
        )
        self.workers = [_Worker(i, config) for i in range(config.num_workers)]
        self.env_steps = 0
        self.update_index = 0
        self.episodes_done = 0
        self.warmup_done = config.mode not in ("acdr_e2h", "acdr_h2e") or \
            config.g_threshold is not None
        self.run_log = RunLog(meta={"config": config.semantic_dict()})
        self._episode_window: list[tuple[float, float]] = []
        self._started = False

        if resume_from is not None:
            self._load(resume_from)

    # ------------------------------------------------------------------

    def train(self) -> TrainResult:
        config = self.config
        if not self._started:
            if not self.warmup_done:
                self._warmup()
            for worker in self.workers:
                worker.start_episode(self.curriculum)
                self._observe(worker.obs)
            self._started = True
        while self.env_steps < config.total_env_steps:
            self._iteration()
            if self.out_dir and self.env_steps // config.checkpoint_every > \
                    (self.env_steps - self._steps_per_iteration()) // config.checkpoint_every:
                save_checkpoint(self.out_dir / "checkpoint.json", self._payload())
        payload = self._payload()
        if self.out_dir:
            save_checkpoint(self.out_dir / "checkpoint_final.json", payload)
            self.run_log.write_csv(self.out_dir / "runlog.csv")
            self.curriculum.write_trace_csv(self.out_dir / "curriculum_trace.csv")
        return TrainResult(params=self.params, run_log=self.run_log,
                           obs_norm=self.obs_norm, curriculum=self.curriculum,
                           checkpoint_payload=payload)

    # ------------------------------------------------------------------

    def _steps_per_iteration(self) -> int:
        return self.config.ppo.horizon * self.config.num_workers

    def _observe(self, raw_obs: np.ndarray) -> np.ndarray:
        """Track normalizer statistics on every new raw observation."""
        if self.config.obs_norm:
            self.obs_norm.update(raw_obs)
        return raw_obs

    def _normalized(self, raw_obs: np.ndarray) -> np.ndarray:
        if self.config.obs_norm:
            return self.obs_norm.normalize(raw_obs)
        return raw_obs

    def _warmup(self) -> None:
        """Estimate the initial adaptive threshold from a random-policy burn-in."""
        config = self.config
        worker = self.workers[0]
        returns = []
        for _ in range(config.warmup_episodes):
            obs = worker.start_episode(self.curriculum)
            self._observe(obs)
            done = False
            while not done:
                action, _, _ = act(self.params, self._normalized(obs), worker.action_rng)
                obs, r, done, info = worker.env.step(action)
                self._observe(obs)
                worker.episode_return += r
                self.env_steps += 1
            returns.append(worker.episode_return)
        threshold = sum(returns) / len(returns)
        self.curriculum.g_threshold = threshold
        self.run_log.meta["warmup_g_threshold"] = threshold
        self.run_log.meta["warmup_env_steps"] = self.env_steps
        self.warmup_done = True

    def _collect_segment(self, worker: _Worker) -> Trajectory:
        config = self.config
        ppo = config.ppo
        horizon = ppo.horizon
        obs_buf = np.empty((horizon, 27))
        act_buf = np.empty((horizon, 8))
        rew_buf = np.empty(horizon)
        val_buf = np.empty(horizon)
        logp_buf = np.empty(horizon)
        done_buf = np.zeros(horizon)
        for t in range(horizon):
            norm_obs = self._normalized(worker.obs)
            action, log_prob, value = act(self.params, norm_obs, worker.action_rng)
            next_obs, r, done, info = worker.env.step(action)
            worker.episode_return += r
            worker.episode_steps += 1
            worker.return_acc = ppo.gamma * worker.return_acc + r
            if config.reward_scaling:
                self.return_scaler.update(worker.return_acc)
                r_train = self.return_scaler.scale(r)
            else:
                r_train = r
            obs_buf[t] = norm_obs
            act_buf[t] = action
            rew_buf[t] = r_train
            val_buf[t] = value
            logp_buf[t] = log_prob
            done_buf[t] = 1.0 if done else 0.0
            if done:
                self.episodes_done += 1
                self._episode_window.append((worker.episode_return, info["progress"]))
                self.curriculum.record_return(worker.episode_return)
                next_obs = worker.start_episode(self.curriculum)
            self._observe(next_obs)
            worker.obs = next_obs
        if done_buf[-1]:
            bootstrap = 0.0
        else:
            bootstrap = float(value_estimate(self.params, self._normalized(worker.obs)))
        return Trajectory(obs=obs_buf, actions=act_buf, rewards=rew_buf,
                          values=val_buf, log_probs=logp_buf, dones=done_buf,
                          bootstrap_value=bootstrap)

    def _iteration(self) -> None:
        config = self.config
        trajectories = [self._collect_segment(worker) for worker in self.workers]
        self.env_steps += self._steps_per_iteration()
        self.curriculum.advance_steps(self._steps_per_iteration())
        self.params, diag = ppo_update(self.params, trajectories, config.ppo,
                                       self.optimizer, self.ppo_rng)
        self.update_index += 1
        if self.update_index % config.log_interval == 0:
            self._log_row(diag)

    def _log_row(self, diag: dict) -> None:
        low, high = self.curriculum.current_interval()
        window = self._episode_window
        row = {
            "update": self.update_index,
            "env_steps": self.env_steps,
            "episodes": self.episodes_done,
            "mean_return": sum(r for r, _ in window) / len(window) if window else "",
            "mean_distance": sum(d for _, d in window) / len(window) if window else "",
            "L": low,
            "U": high,
            "g_threshold": self.curriculum.g_threshold,
            "policy_loss": diag["policy_loss"],
            "value_loss": diag["value_loss"],
            "entropy": diag["entropy"],
            "clip_fraction": diag["clip_fraction"],
            "approx_kl": diag["approx_kl"],
        }
        self._episode_window = []
        self.run_log.append(row)
        if self.out_dir:
            self._stream_row(row)
        self._progress_line(row)

    def _stream_row(self, row: dict) -> None:
        path = self.out_dir / "runlog.csv"
        new_file = not path.exists()
        with open(path, "a", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=RUNLOG_COLUMNS)
            if new_file:
                writer.writeheader()
            writer.writerow(row)

    def _progress_line(self, row: dict) -> None:
        if not self.config.verbose:
            return
        ret = row["mean_return"]
        ret_text = f"{ret:9.2f}" if ret != "" else "     --  "
        print(f"[{self.config.mode}] update {row['update']:5d} "
              f"steps {row['env_steps']:8d} return {ret_text} "
              f"interval [{row['L']:.3f}, {row['U']:.3f}]")

    # ------------------------------------------------------------------
    # checkpointing

    def _payload(self) -> dict:
        return {
            "config": self.config.semantic_dict(),
            "params": {
                "policy": [np.asarray(p) for p in self.params.policy],
                "log_std": self.params.log_std,
                "value": [np.asarray(p) for p in self.params.value],
            },
            "optimizer": self.optimizer.state_dict(),
            "obs_norm": self.obs_norm.state_dict(),
            "return_scaler": self.return_scaler.state_dict(),
            "ppo_rng": self.ppo_rng.bit_generator.state,
            "curriculum": self.curriculum.state_dict(),
            "workers": [w.state_dict() for w in self.workers],
            "env_steps": self.env_steps,
            "update_index": self.update_index,
            "episodes_done": self.episodes_done,
            "episode_window": [list(pair) for pair in self._episode_window],
            "warmup_done": self.warmup_done,
            "started": self._started,
            "runlog_rows": self.run_log.rows,
            "runlog_meta": self.run_log.meta,
        }

    def _load(self, path: str) -> None:
        payload = load_checkpoint(path)
        def run_identity(config_dict):
            # the step budget only decides where the run stops; everything
            # else must match for the resumed trajectory to be exact
            return {k: v for k, v in config_dict.items() if k != "total_env_steps"}
        if run_identity(payload["config"]) != run_identity(self.config.semantic_dict()):
            raise ValueError("checkpoint was produced by a different training config")
        self.params = PolicyParams(
            policy=[np.array(p) for p in payload["params"]["policy"]],
            log_std=np.array(payload["params"]["log_std"]),
            value=[np.array(p) for p in payload["params"]["value"]],
        )
        self.optimizer = make_optimizer(self.params)
        self.optimizer.load_state_dict(payload["optimizer"])
        self.obs_norm = RunningNorm.from_state_dict(payload["obs_norm"])
        self.return_scaler = ReturnScaler.from_state_dict(payload["return_scaler"])
        self.ppo_rng.bit_generator.state = payload["ppo_rng"]
        self.curriculum = CurriculumState.from_state_dict(payload["curriculum"])
        for worker, state in zip(self.workers, payload["workers"]):
            worker.load_state_dict(state)
        self.env_steps = int(payload["env_steps"])
        self.update_index = int(payload["update_index"])
        self.episodes_done = int(payload["episodes_done"])
        self._episode_window = [tuple(pair) for pair in payload["episode_window"]]
        self.warmup_done = bool(payload["warmup_done"])
        self._started = bool(payload["started"])
        self.run_log = RunLog(rows=list(payload["runlog_rows"]),
                              meta=dict(payload["runlog_meta"]))
        if self.out_dir:
            self.run_log.write_csv(self.out_dir / "runlog.csv")


def train(config: TrainConfig, resume_from: str | None = None) -> TrainResult:
    """Run (or resume) one training; see TrainConfig for the knobs."""
    return Orchestrator(config, resume_from=resume_from).train()
