"""PPO learner: Gaussian MLP policy + value function, GAE, clipped surrogate.

Networks are 27 -> 64 -> 64 -> out tanh MLPs (separate actor and critic)
with a state-independent log-std vector on the actor. Gradients are
reverse-mode by hand (see nets.py); optimization is Adam. The clipped
surrogate, value MSE and entropy bonus follow the standard PPO recipe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import configio
from .nets import Adam, init_mlp, mlp_backward, mlp_forward

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_2PI = math.log(2.0 * math.pi)


class TrainingDiverged(RuntimeError):
    """Non-finite loss or network output; carries the last diagnostics."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class PPOConfig:
    """PPO hyperparameters (experiment defaults)."""

    learning_rate: float = 0.00022
    horizon: int = 128            # rollout segment length per update
    minibatch_count: int = 4      # minibatches per epoch
    epochs: int = 4
    clip_epsilon: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    vf_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float | None = 0.5   # global grad clip; None disables
    target_kl: float | None = None      # optionally stop the update early past this KL
    bound_coef: float = 10.0            # penalty keeping the action mean inside [-1, 1]

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must be in [0, 1]")
        if self.clip_epsilon <= 0.0:
            raise ValueError("clip_epsilon must be positive")

    @classmethod
    def from_dict(cls, raw: dict[str, str]) -> "PPOConfig":
        kwargs = {}
        optional = {"max_grad_norm", "target_kl"}
        for f in fields(cls):
            if f.name not in raw:
                continue
            text = str(raw[f.name])
            if f.name in optional:
                kwargs[f.name] = None if text.lower() == "none" else \
                    configio.as_float(text, f.name)
            elif f.type == "int":
                kwargs[f.name] = configio.as_int(text, f.name)
            else:
                kwargs[f.name] = configio.as_float(text, f.name)
        unknown = set(raw) - {f.name for f in fields(cls)}
        if unknown:
            raise configio.ConfigError(f"unknown ppo keys: {sorted(unknown)}")
        return cls(**kwargs)


@dataclass
class PolicyParams:
    """All learnable parameters: actor layers, log-std vector, critic layers."""

    policy: list[np.ndarray]
    log_std: np.ndarray
    value: list[np.ndarray]

    def flat(self) -> list[np.ndarray]:
        """Fixed-order view [policy..., log_std, value...] shared with Adam."""
        return [*self.policy, self.log_std, *self.value]

    def finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.flat())

    def copy(self) -> "PolicyParams":
        return PolicyParams(policy=[p.copy() for p in self.policy],
                            log_std=self.log_std.copy(),
                            value=[p.copy() for p in self.value])

    def clamp_log_std(self) -> None:
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)


def init_policy(rng: np.random.Generator, obs_dim: int = 27, act_dim: int = 8,
                hidden: int = 64) -> PolicyParams:
    """Orthogonal init, policy output gain 0.01, value gain 1.0, log-std 0."""
    return PolicyParams(
        policy=init_mlp(rng, [obs_dim, hidden, hidden, act_dim], out_gain=0.01),
        log_std=np.zeros(act_dim),
        value=init_mlp(rng, [obs_dim, hidden, hidden, 1], out_gain=1.0),
    )


@dataclass
class Trajectory:
    """Parallel per-step records of one rollout segment plus its bootstrap."""

    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    log_probs: np.ndarray
    dones: np.ndarray
    bootstrap_value: float = 0.0

    def __post_init__(self):
        n = len(self.rewards)
        for name in ("obs", "actions", "values", "log_probs", "dones"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"trajectory field {name} length mismatch")

    def __len__(self) -> int:
        return len(self.rewards)


# ----------------------------------------------------------------------
# acting

def gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Log density of a diagonal Gaussian, summed over action dims. Batched."""
    z = (actions - mean) / np.exp(log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * LOG_2PI * mean.shape[-1]


def policy_mean(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    out, _ = mlp_forward(params.policy, np.atleast_2d(obs))
    return out[0] if obs.ndim == 1 else out


def value_estimate(params: PolicyParams, obs: np.ndarray) -> float | np.ndarray:
    out, _ = mlp_forward(params.value, np.atleast_2d(obs))
    return float(out[0, 0]) if obs.ndim == 1 else out[:, 0]


def act(params: PolicyParams, obs: np.ndarray, rng: np.random.Generator):
    """Sample an action; returns (clipped action, log-prob of raw sample, value).

    The log-prob is the density of the pre-clamp Gaussian sample, which is
    what the surrogate ratio needs.
    """
    mean = policy_mean(params, obs)
    if not np.all(np.isfinite(mean)):
        raise TrainingDiverged("policy network produced non-finite action mean")
    std = np.exp(params.log_std)
    raw = mean + std * rng.standard_normal(mean.shape)
    log_prob = float(gaussian_log_prob(mean, params.log_std, raw))
    value = value_estimate(params, obs)
    return np.clip(raw, -1.0, 1.0), log_prob, value


def act_deterministic(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    """Mean action, clipped; used for evaluation."""
    return np.clip(policy_mean(params, obs), -1.0, 1.0)


# ----------------------------------------------------------------------
# advantage estimation

def compute_gae(rewards, values, dones, bootstrap_value: float,
                gamma: float, lam: float):
    """GAE(gamma, lam) with bootstrap cut at done flags.

    Returns (advantages, returns) where returns = advantages + values.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    if not (len(rewards) == len(values) == len(dones)):
        raise ValueError("rewards, values, dones must have equal length")
    if not (0.0 <= gamma <= 1.0 and 0.0 <= lam <= 1.0):
        raise ValueError("gamma and lambda must be in [0, 1]")
    n = len(rewards)
    advantages = np.zeros(n)
    carry = 0.0
    for t in range(n - 1, -1, -1):
        next_value = bootstrap_value if t == n - 1 else values[t + 1]
        non_terminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * non_terminal - values[t]
        carry = delta + gamma * lam * non_terminal * carry
        advantages[t] = carry
    return advantages, advantages + values


# ----------------------------------------------------------------------
# PPO objective

def ppo_loss_and_grads(params: PolicyParams, batch: dict, cfg: PPOConfig):
    """Loss, gradients and diagnostics of the clipped PPO objective.

    batch keys: obs (B,O), actions (B,A), log_probs (B,), advantages (B,)
    (already normalized), returns (B,). The returned grads align with
    params.flat().
    """
    obs = batch["obs"]
    actions = batch["actions"]
    old_logp = batch["log_probs"]
    adv = batch["advantages"]
    rets = batch["returns"]
    n = len(obs)
    eps = cfg.clip_epsilon

    mean, cache_pi = mlp_forward(params.policy, obs)
    values, cache_v = mlp_forward(params.value, obs)
    values = values[:, 0]
    log_std = params.log_std
    inv_var = np.exp(-2.0 * log_std)

    logp = gaussian_log_prob(mean, log_std, actions)
    ratio = np.exp(logp - old_logp)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    policy_loss = -np.mean(np.minimum(unclipped, clipped))
    value_err = values - rets
    value_loss = np.mean(value_err ** 2)
    entropy = float(np.sum(log_std) + 0.5 * len(log_std) * (1.0 + LOG_2PI))
    excess = np.maximum(np.abs(mean) - 1.0, 0.0)  # pre-clip mean outside the box
    bound_loss = np.sum(excess ** 2) / n
    loss = (policy_loss + cfg.vf_coef * value_loss - cfg.entropy_coef * entropy
            + cfg.bound_coef * bound_loss)

    # d loss / d ratio: active only where the unclipped branch is the minimum
    use_unclipped = unclipped <= clipped
    dratio = np.where(use_unclipped, -adv / n, 0.0)
    dlogp = dratio * ratio
    diff = actions - mean
    dmean = dlogp[:, None] * diff * inv_var
    dmean += cfg.bound_coef * 2.0 * excess * np.sign(mean) / n
    dlog_std = np.sum(dlogp[:, None] * (diff * diff * inv_var - 1.0), axis=0)
    dlog_std -= cfg.entropy_coef  # entropy bonus pushes log-std up
    dvalues = cfg.vf_coef * 2.0 * value_err / n

    policy_grads = mlp_backward(params.policy, cache_pi, dmean)
    value_grads = mlp_backward(params.value, cache_v, dvalues[:, None])
    grads = [*policy_grads, dlog_std, *value_grads]

    diagnostics = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": entropy,
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > eps)),
        "approx_kl": float(np.mean(old_logp - logp)),
    }
    return float(loss), grads, diagnostics


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    """Zero-mean unit-std over the whole update batch."""
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def make_optimizer(params: PolicyParams) -> Adam:
    return Adam([p.shape for p in params.flat()])


def ppo_update(params: PolicyParams, trajectories: list[Trajectory], cfg: PPOConfig,
               optimizer: Adam, rng: np.random.Generator):
    """One PPO update over the collected segments; mutates params in place.

    Runs cfg.epochs passes of cfg.minibatch_count shuffled minibatches.
    Advantages are normalized once over the whole batch. Returns
    (params, diagnostics averaged over minibatches).
    """
    if not trajectories:
        raise ValueError("ppo_update needs at least one trajectory")
    adv_parts = []
    ret_parts = []
    for traj in trajectories:
        adv, ret = compute_gae(traj.rewards, traj.values, traj.dones,
                               traj.bootstrap_value, cfg.gamma, cfg.gae_lambda)
        adv_parts.append(adv)
        ret_parts.append(ret)
    batch = {
        "obs": np.concatenate([t.obs for t in trajectories]),
        "actions": np.concatenate([t.actions for t in trajectories]),
        "log_probs": np.concatenate([t.log_probs for t in trajectories]),
        "advantages": normalize_advantages(np.concatenate(adv_parts)),
        "returns": np.concatenate(ret_parts),
    }
    n = len(batch["obs"])
    flat = params.flat()
    totals: dict[str, float] = {}
    count = 0
    stop = False
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for idx in np.array_split(order, cfg.minibatch_count):
            mini = {key: arr[idx] for key, arr in batch.items()}
            loss, grads, diag = ppo_loss_and_grads(params, mini, cfg)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite PPO loss: {loss}", diag)
            if cfg.target_kl is not None and abs(diag["approx_kl"]) > cfg.target_kl:
                stop = True  # policy already drifted past the trust region
                break
            if cfg.max_grad_norm is not None:
                clip_grad_norm(grads, cfg.max_grad_norm)
            optimizer.step(flat, grads, cfg.learning_rate)
            params.clamp_log_std()
            for key, value in diag.items():
                totals[key] = totals.get(key, 0.0) + value
            count += 1
        if stop:
            break
    if count == 0:  # first minibatch already past target_kl; report it unstepped
        _, _, diag = ppo_loss_and_grads(params, batch, cfg)
        return params, diag
    return params, {key: value / count for key, value in totals.items()}


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale grads in place so their global L2 norm is at most max_norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total


# ----------------------------------------------------------------------
# normalization state

class RunningNorm:
    """Streaming mean/variance normalizer (parallel Welford merge)."""

    def __init__(self, dim: int, clip: float = 10.0):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 1e-4
        self.clip = clip

    def update(self, batch: np.ndarray) -> None:
        batch = np.atleast_2d(np.asarray(batch, dtype=float))
        n = len(batch)
        if n == 0:
            return
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        delta = b_mean - self.mean
        total = self.count + n
        self.mean = self.mean + delta * (n / total)
        m2 = self.var * self.count + b_var * n + delta ** 2 * (self.count * n / total)
        self.var = m2 / total
        self.count = total

    def normalize(self, x: np.ndarray) -> np.ndarray:
        scaled = (x - self.mean) / np.sqrt(self.var + 1e-8)
        return np.clip(scaled, -self.clip, self.clip)

    def state_dict(self) -> dict:
        return {"mean": self.mean.copy(), "var": self.var.copy(),
                "count": self.count, "clip": self.clip}

    @classmethod
    def from_state_dict(cls, state: dict) -> "RunningNorm":
        mean = np.array(state["mean"], dtype=float)
        out = cls(dim=len(mean), clip=float(state["clip"]))
        out.mean = mean
        out.var = np.array(state["var"], dtype=float)
        out.count = float(state["count"])
        return out


class ReturnScaler:
    """Reward scaling by the running std of the discounted return.

    Each worker feeds its own discounted-return accumulator after every
    step; rewards used for PPO targets are divided by the running std.
    Raw rewards (curriculum returns, logs, evaluation) are never touched.
    """

    def __init__(self, clip: float = 10.0):
        self.var = 1.0
        self.mean = 0.0
        self.count = 1e-4
        self.clip = clip

    def update(self, discounted_return: float) -> None:
        delta = discounted_return - self.mean
        total = self.count + 1.0
        self.mean += delta / total
        self.var = (self.var * self.count + delta * (discounted_return - self.mean)) / total
        self.count = total

    def scale(self, reward: float) -> float:
        scaled = reward / math.sqrt(self.var + 1e-8)
        return float(np.clip(scaled, -self.clip, self.clip))

    def state_dict(self) -> dict:
        return {"var": self.var, "mean": self.mean, "count": self.count, "clip": self.clip}

    @classmethod
    def from_state_dict(cls, state: dict) -> "ReturnScaler":
        out = cls(clip=float(state["clip"]))
        out.var = float(state["var"])
        out.mean = float(state["mean"])
        out.count = float(state["count"])
        return out
