"""Orchestrator contracts: determinism, accounting, checkpoint resume."""

import numpy as np
import pytest

from quadfault.agent import PPOConfig
from quadfault.curriculum import lcdr_interval
from quadfault.simulator import SimConfig
from quadfault.training import Orchestrator, RunLog, TrainConfig, train

FAST_SIM = dict(horizon=60)


def fast_config(**kw):
    defaults = dict(mode="baseline", total_env_steps=2048, seed=0, verbose=False,
                    sim=SimConfig(**FAST_SIM))
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestDeterminism:
    def test_identical_runs_identical_logs(self):
        a = train(fast_config())
        b = train(fast_config())
        assert a.run_log.rows == b.run_log.rows
        for pa, pb in zip(a.params.flat(), b.params.flat()):
            assert np.array_equal(pa, pb)

    def test_seed_changes_log(self):
        a = train(fast_config(seed=0))
        b = train(fast_config(seed=1))
        assert a.run_log.rows != b.run_log.rows


class TestAccounting:
    def test_env_steps_strictly_increasing(self):
        result = train(fast_config())
        steps = [row["env_steps"] for row in result.run_log.rows]
        assert all(b > a for a, b in zip(steps, steps[1:]))
        assert steps[-1] >= 2048

    def test_episode_returns_feed_curriculum(self):
        # number of returns consumed by the curriculum == completed episodes
        config = fast_config(mode="acdr_h2e", g_threshold=1e9,  # never fires
                             curriculum_m=10 ** 9)
        result = train(config)
        episodes = result.run_log.rows[-1]["episodes"]
        assert len(result.curriculum.buffer) == episodes > 0

    def test_baseline_k_always_one(self):
        result = train(fast_config())
        assert result.curriculum.current_interval() == (1.0, 1.0)
        rows = result.run_log.rows
        assert all(row["L"] == 1.0 and row["U"] == 1.0 for row in rows)

    def test_every_k_inside_logged_interval(self):
        # replay the run's failure stream against its own interval log
        config = fast_config(mode="udr", total_env_steps=1024)
        result = train(config)
        from quadfault.failure import rng_stream, sample_failure
        rng = rng_stream(config.seed, "failure", 0)
        count = result.run_log.rows[-1]["episodes"] + 1  # incl. episode in flight
        for _ in range(count):
            spec = sample_failure(rng, 0.0, 1.5)
            assert 0.0 <= spec.k <= 1.5

    def test_lcdr_log_matches_pure_schedule(self):
        total = 4096
        config = fast_config(mode="lcdr_h2e", total_env_steps=total, lcdr_N=4)
        result = train(config)
        for row in result.run_log.rows:
            elapsed = min(row["env_steps"], total)
            expected = lcdr_interval(elapsed, total, 4, "lcdr_h2e")
            assert (row["L"], row["U"]) == expected


class TestWarmup:
    def test_warmup_sets_threshold(self):
        config = fast_config(mode="acdr_h2e", warmup_episodes=3)
        result = train(config)
        assert "warmup_g_threshold" in result.run_log.meta
        assert result.run_log.meta["warmup_env_steps"] > 0

    def test_explicit_threshold_skips_warmup(self):
        config = fast_config(mode="acdr_h2e", g_threshold=5.0)
        result = train(config)
        assert "warmup_g_threshold" not in result.run_log.meta

    def test_non_adaptive_modes_skip_warmup(self):
        result = train(fast_config(mode="udr"))
        assert "warmup_g_threshold" not in result.run_log.meta


class TestInterualClamp:
    def test_train_interval_clamp_applies(self):
        config = fast_config(mode="udr", train_interval_clamp=(0.5, 1.5))
        result = train(config)
        assert result.curriculum.current_interval() == (0.5, 1.5)
        rows = result.run_log.rows
        assert all(row["L"] == 0.5 and row["U"] == 1.5 for row in rows)


class TestCheckpointResume:
    def test_resume_equals_uninterrupted(self, tmp_path):
        # full run in one go
        full = train(fast_config(total_env_steps=2048,
                                 output_dir=str(tmp_path / "full"),
                                 checkpoint_every=10 ** 9))
        # same run stopped halfway, then resumed
        half_dir = tmp_path / "half"
        train(fast_config(total_env_steps=1024, output_dir=str(half_dir),
                          checkpoint_every=10 ** 9))
        # resume with the full budget from the half checkpoint
        resumed = train(fast_config(total_env_steps=2048,
                                    output_dir=str(tmp_path / "resumed"),
                                    checkpoint_every=10 ** 9),
                        resume_from=str(half_dir / "checkpoint_final.json"))
        assert resumed.run_log.rows == full.run_log.rows
        for a, b in zip(full.params.flat(), resumed.params.flat()):
            assert np.array_equal(a, b)

    def test_resume_rejects_different_config(self, tmp_path):
        out = tmp_path / "run"
        train(fast_config(total_env_steps=512, output_dir=str(out)))
        with pytest.raises(ValueError):
            train(fast_config(total_env_steps=2048, seed=1),
                  resume_from=str(out / "checkpoint_final.json"))

    def test_resume_budget_must_differ_only_in_total(self, tmp_path):
        # growing the budget on resume is the supported workflow
        out = tmp_path / "run"
        train(fast_config(total_env_steps=512, output_dir=str(out)))
        result = train(fast_config(total_env_steps=1024),
                       resume_from=str(out / "checkpoint_final.json"))
        assert result.run_log.rows[-1]["env_steps"] >= 1024

    def test_checkpoint_files_written(self, tmp_path):
        out = tmp_path / "run"
        train(fast_config(total_env_steps=1024, output_dir=str(out),
                          checkpoint_every=512))
        assert (out / "checkpoint.json").exists()
        assert (out / "checkpoint_final.json").exists()
        assert (out / "runlog.csv").exists()
        assert (out / "effective.cfg").exists()
        assert (out / "curriculum_trace.csv").exists()

    def test_streamed_csv_matches_memory(self, tmp_path):
        out = tmp_path / "run"
        result = train(fast_config(total_env_steps=1024, output_dir=str(out)))
        import csv as csvmod
        with open(out / "runlog.csv") as fh:
            rows = list(csvmod.DictReader(fh))
        assert len(rows) == len(result.run_log.rows)
        assert int(rows[-1]["env_steps"]) == result.run_log.rows[-1]["env_steps"]

    def test_save_load_save_byte_stable(self, tmp_path):
        from quadfault.checkpoint import load_checkpoint, save_checkpoint
        out = tmp_path / "run"
        train(fast_config(total_env_steps=512, output_dir=str(out)))
        first = out / "checkpoint_final.json"
        second = tmp_path / "resaved.json"
        save_checkpoint(second, load_checkpoint(first))
        assert first.read_bytes() == second.read_bytes()


class TestWorkers:
    def test_multi_worker_deterministic(self):
        a = train(fast_config(num_workers=2, total_env_steps=1024))
        b = train(fast_config(num_workers=2, total_env_steps=1024))
        assert a.run_log.rows == b.run_log.rows

    def test_worker_count_changes_trajectory(self):
        a = train(fast_config(num_workers=1, total_env_steps=1024))
        b = train(fast_config(num_workers=2, total_env_steps=1024))
        assert a.run_log.rows != b.run_log.rows


class TestConfigFile:
    def test_round_trip_from_file(self, tmp_path):
        from quadfault import configio
        config = fast_config(mode="acdr_e2h", train_interval_clamp=(0.5, 1.5))
        path = tmp_path / "train.cfg"
        configio.write_config(path, config.to_sections())
        loaded = TrainConfig.from_file(path)
        assert loaded.semantic_dict() == config.semantic_dict()

    def test_unknown_train_key_rejected(self, tmp_path):
        from quadfault import configio
        path = tmp_path / "bad.cfg"
        path.write_text("[train]\nbogus = 1\n")
        with pytest.raises(configio.ConfigError):
            TrainConfig.from_file(path)

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(total_env_steps=10)  # below one horizon
        with pytest.raises(ValueError):
            TrainConfig(num_workers=0)


def test_runlog_rejects_non_increasing():
    log = RunLog()
    log.append({"env_steps": 10})
    with pytest.raises(ValueError):
        log.append({"env_steps": 10})
