"""Evaluation protocols: plain/broken conditions, k sweeps, comparisons.

A condition fixes how the per-trial failure is drawn (k fixed, uniform on
an interval, or a grid of values) and how many trials per seed to run.
Policies act deterministically (network mean) with frozen normalizer
statistics; reported rewards and distances are raw simulator quantities.
Cross-seed standard errors are computed over per-seed means, not pooled
trials.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import PolicyParams, RunningNorm, act_deterministic
from .checkpoint import load_checkpoint
from .failure import K_MAX, FailureSpec, rng_stream, sample_leg
from .simulator import PlanarQuadruped, SimConfig

DEFAULT_SEEDS = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class EvalCondition:
    """How failures are drawn during evaluation episodes."""

    name: str
    kind: str                      # "fixed" | "uniform" | "grid"
    k_fixed: float = 1.0
    k_low: float = 0.0
    k_high: float = 0.5
    k_grid: tuple[float, ...] = ()
    trials: int = 100
    seeds: tuple[int, ...] = DEFAULT_SEEDS

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.kind not in ("fixed", "uniform", "grid"):
            raise ValueError(f"unknown condition kind {self.kind!r}")
        if self.kind == "grid":
            if not self.k_grid:
                raise ValueError("grid condition needs k values")
            if any(not 0.0 <= k <= K_MAX for k in self.k_grid):
                raise ValueError(f"grid values must lie in [0, {K_MAX}]")

    def identity(self) -> tuple:
        """Condition fingerprint; compared policies must share it."""
        return (self.name, self.kind, self.k_fixed, self.k_low, self.k_high,
                self.k_grid, self.trials, self.seeds)


def plain_condition(trials: int = 100, seeds=DEFAULT_SEEDS) -> EvalCondition:
    """Undamaged robots: k fixed at 1.0 (leg choice is irrelevant)."""
    return EvalCondition(name="plain", kind="fixed", k_fixed=1.0,
                         trials=trials, seeds=tuple(seeds))


def broken_condition(trials: int = 100, seeds=DEFAULT_SEEDS) -> EvalCondition:
    """Damaged robots: k uniform on [0, 0.5], leg uniform per trial."""
    return EvalCondition(name="broken", kind="uniform", k_low=0.0, k_high=0.5,
                         trials=trials, seeds=tuple(seeds))


def k_sweep_condition(values, trials: int = 10, seeds=DEFAULT_SEEDS) -> EvalCondition:
    """Grid of fixed failure coefficients, `trials` episodes per (seed, k)."""
    return EvalCondition(name="k_sweep", kind="grid", k_grid=tuple(values),
                         trials=trials, seeds=tuple(seeds))


def ci_preset(condition_factory, **kwargs) -> EvalCondition:
    """Desk-scale preset: 2 seeds x 10 trials."""
    kwargs.setdefault("trials", 10)
    kwargs.setdefault("seeds", (0, 1))
    return condition_factory(**kwargs)


@dataclass
class EvalReport:
    """Per-trial rows and cross-seed aggregates for one (policy, condition)."""

    policy: str
    condition: EvalCondition
    rows: list[dict] = field(default_factory=list)  # seed, trial, k, leg, reward, distance, fell

    @property
    def seed_means(self) -> dict[int, tuple[float, float]]:
        out = {}
        for seed in self.condition.seeds:
            rows = [r for r in self.rows if r["seed"] == seed]
            out[seed] = (sum(r["reward"] for r in rows) / len(rows),
                         sum(r["distance"] for r in rows) / len(rows))
        return out

    def summary(self) -> dict:
        means = list(self.seed_means.values())
        rewards = np.array([m[0] for m in means])
        distances = np.array([m[1] for m in means])
        n = len(means)
        fell = sum(1 for r in self.rows if r["fell"])
        return {
            "policy": self.policy,
            "condition": self.condition.name,
            "mean_reward": float(rewards.mean()),
            "se_reward": float(rewards.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
            "mean_distance": float(distances.mean()),
            "se_distance": float(distances.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
            "fall_fraction": fell / len(self.rows),
        }

    def per_k_curve(self) -> list[dict]:
        """Mean reward/distance per grid value, SE across seeds."""
        out = []
        for k in sorted(set(r["k"] for r in self.rows)):
            seed_means = []
            for seed in self.condition.seeds:
                rows = [r for r in self.rows if r["seed"] == seed and r["k"] == k]
                if rows:
                    seed_means.append((sum(r["reward"] for r in rows) / len(rows),
                                       sum(r["distance"] for r in rows) / len(rows)))
            rewards = np.array([m[0] for m in seed_means])
            distances = np.array([m[1] for m in seed_means])
            n = len(seed_means)
            out.append({
                "k": k,
                "mean_reward": float(rewards.mean()),
                "se_reward": float(rewards.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
                "mean_distance": float(distances.mean()),
                "se_distance": float(distances.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
            })
        return out

    # ------------------------------------------------------------------

    def write_trials_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["policy", "condition", "seed", "trial", "k", "leg",
                             "reward", "distance"])
            for r in self.rows:
                writer.writerow([self.policy, self.condition.name, r["seed"],
                                 r["trial"], r["k"], r["leg"], r["reward"],
                                 r["distance"]])

    def to_payload(self) -> dict:
        cond = self.condition
        return {
            "policy": self.policy,
            "condition": {
                "name": cond.name, "kind": cond.kind, "k_fixed": cond.k_fixed,
                "k_low": cond.k_low, "k_high": cond.k_high,
                "k_grid": list(cond.k_grid), "trials": cond.trials,
                "seeds": list(cond.seeds),
            },
            "rows": self.rows,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "EvalReport":
        c = payload["condition"]
        condition = EvalCondition(name=c["name"], kind=c["kind"], k_fixed=c["k_fixed"],
                                  k_low=c["k_low"], k_high=c["k_high"],
                                  k_grid=tuple(c["k_grid"]), trials=int(c["trials"]),
                                  seeds=tuple(int(s) for s in c["seeds"]))
        rows = [dict(r) for r in payload["rows"]]
        for r in rows:
            r["seed"] = int(r["seed"])
            r["trial"] = int(r["trial"])
            r["leg"] = int(r["leg"])
            r["fell"] = bool(r["fell"])
        return cls(policy=payload["policy"], condition=condition, rows=rows)


# ----------------------------------------------------------------------
# running evaluations

def load_policy(checkpoint_path) -> tuple[PolicyParams, RunningNorm, SimConfig, bool]:
    """Pull policy, frozen normalizer and sim config out of a checkpoint."""
    payload = load_checkpoint(checkpoint_path)
    params = PolicyParams(
        policy=[np.array(p) for p in payload["params"]["policy"]],
        log_std=np.array(payload["params"]["log_std"]),
        value=[np.array(p) for p in payload["params"]["value"]],
    )
    obs_norm = RunningNorm.from_state_dict(payload["obs_norm"])
    sim_cfg = SimConfig.from_dict({k: v for k, v in payload["config"]["sim"].items()
                                   if v is not None})
    return params, obs_norm, sim_cfg, bool(payload["config"]["obs_norm"])


def run_episode(env: PlanarQuadruped, params: PolicyParams,
                obs_norm: RunningNorm | None, seed: int,
                failure: FailureSpec) -> tuple[float, float, bool]:
    """One deterministic-policy episode; returns (return, distance, fell)."""
    obs = env.reset(seed, failure)
    total = 0.0
    done = False
    info = {"progress": 0.0, "falling": False}
    while not done:
        policy_obs = obs_norm.normalize(obs) if obs_norm is not None else obs
        action = act_deterministic(params, policy_obs)
        obs, r, done, info = env.step(action)
        total += r
    return total, info["progress"], info["falling"]


def _trial_failures(condition: EvalCondition, rng: np.random.Generator) -> list[tuple]:
    """Per-trial (trial_index, k, leg) list for one seed."""
    out = []
    if condition.kind == "grid":
        trial = 0
        for k in condition.k_grid:
            for _ in range(condition.trials):
                out.append((trial, float(k), sample_leg(rng)))
                trial += 1
    else:
        for trial in range(condition.trials):
            if condition.kind == "fixed":
                k = condition.k_fixed
            else:
                k = condition.k_low + (condition.k_high - condition.k_low) * rng.random()
            out.append((trial, float(k), sample_leg(rng)))
    return out


def evaluate(params: PolicyParams, condition: EvalCondition, *,
             obs_norm: RunningNorm | None = None,
             sim_config: SimConfig | None = None,
             policy_name: str = "policy") -> EvalReport:
    """Run the condition's full protocol; never mutates params or normalizer.

    Every (seed, trial) episode draws its failure from the seed's dedicated
    RNG stream, so the same checkpoint and seeds reproduce the report
    bit for bit.
    """
    env = PlanarQuadruped(sim_config or SimConfig())
    report = EvalReport(policy=policy_name, condition=condition)
    for seed in condition.seeds:
        draw_rng = rng_stream(seed, "eval-draw", condition.name)
        reset_rng = rng_stream(seed, "eval-reset", condition.name)
        for trial, k, leg in _trial_failures(condition, draw_rng):
            failure = FailureSpec(leg=leg, k=k)
            episode_seed = int(reset_rng.integers(0, 2 ** 31))
            total, distance, fell = run_episode(env, params, obs_norm,
                                                episode_seed, failure)
            report.rows.append({
                "seed": int(seed), "trial": trial, "k": k, "leg": leg,
                "reward": total, "distance": distance, "fell": fell,
            })
    return report


def evaluate_checkpoint(checkpoint_path, condition: EvalCondition,
                        policy_name: str | None = None) -> EvalReport:
    params, obs_norm, sim_cfg, use_norm = load_policy(checkpoint_path)
    name = policy_name or Path(checkpoint_path).stem
    return evaluate(params, condition, obs_norm=obs_norm if use_norm else None,
                    sim_config=sim_cfg, policy_name=name)


# ----------------------------------------------------------------------
# comparisons

@dataclass
class ComparisonTable:
    """Policies ranked per condition by mean reward and by mean distance."""

    condition: str
    entries: list[dict]  # policy, mean/se reward, mean/se distance, ranks

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["policy", "condition", "mean_reward", "se_reward",
                             "mean_distance", "se_distance", "rank_reward",
                             "rank_distance"])
            for e in self.entries:
                writer.writerow([e["policy"], self.condition, e["mean_reward"],
                                 e["se_reward"], e["mean_distance"], e["se_distance"],
                                 e["rank_reward"], e["rank_distance"]])


def _ranks(values: list[float]) -> list[int]:
    """Competition ranking, ties share the better rank."""
    order = sorted(values, reverse=True)
    return [1 + order.index(v) for v in values]


def compare(reports: list[EvalReport]) -> ComparisonTable:
    """Rank >= 2 reports taken under the identical condition."""
    if len(reports) < 2:
        raise ValueError("compare needs at least two reports")
    identities = {r.condition.identity() for r in reports}
    if len(identities) != 1:
        raise ValueError("reports were taken under different conditions")
    entries = [r.summary() for r in reports]
    reward_ranks = _ranks([e["mean_reward"] for e in entries])
    distance_ranks = _ranks([e["mean_distance"] for e in entries])
    for entry, rr, rd in zip(entries, reward_ranks, distance_ranks):
        entry["rank_reward"] = rr
        entry["rank_distance"] = rd
    entries.sort(key=lambda e: e["rank_reward"])
    return ComparisonTable(condition=reports[0].condition.name, entries=entries)


def write_summary_csv(path, reports: list[EvalReport]) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "condition", "mean_reward", "se_reward",
                         "mean_distance", "se_distance"])
        for report in reports:
            s = report.summary()
            writer.writerow([s["policy"], s["condition"], s["mean_reward"],
                             s["se_reward"], s["mean_distance"], s["se_distance"]])


# ----------------------------------------------------------------------
# plots

def plot_comparison(path, reports: list[EvalReport], metric: str = "reward") -> None:
    """Bar chart with cross-seed SE error bars for one condition."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    summaries = [r.summary() for r in reports]
    names = [s["policy"] for s in summaries]
    means = [s[f"mean_{metric}"] for s in summaries]
    errs = [s[f"se_{metric}"] for s in summaries]
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(names), 3.2))
    ax.bar(range(len(names)), means, yerr=errs, capsize=4,
           color="tab:green" if reports[0].condition.name == "broken" else "tab:blue")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(f"average {metric}")
    ax.set_title(f"{reports[0].condition.name} condition")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_k_curves(path, reports: list[EvalReport], metric: str = "reward") -> None:
    """Per-k curves (one line per policy) for sweep reports."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    for report in reports:
        curve = report.per_k_curve()
        ks = [c["k"] for c in curve]
        means = [c[f"mean_{metric}"] for c in curve]
        errs = [c[f"se_{metric}"] for c in curve]
        ax.errorbar(ks, means, yerr=errs, marker="o", markersize=3,
                    capsize=3, label=report.policy)
    ax.set_xlabel("failure coefficient k")
    ax.set_ylabel(f"average {metric}")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
