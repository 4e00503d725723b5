"""Simulator contracts: reward function, reset/step, determinism, energy."""

import csv
import math

import numpy as np
import pytest

from quadfault.failure import NOMINAL, FailureSpec
from quadfault.simulator import (CONTACT_COST_WEIGHT, OBS_DIM, TORQUE_COST_WEIGHT,
                                 EpisodeFinished, PlanarQuadruped, SimConfig, reward)

# noise can only show up in joint angles and in the contact flags derived
# from them; everything else at reset is pose- and velocity-deterministic
JOINT_SLOTS = list(range(8))
CONTACT_SLOTS = list(range(21, 25))


def rollout(env, seed, actions, failure=NOMINAL):
    env.reset(seed, failure)
    out = []
    for a in actions:
        out.append(env.step(a))
        if out[-1][2]:
            break
    return out


class TestReward:
    def test_unit_forward_velocity(self):
        assert reward(1.0, np.zeros(8), np.zeros(4), falling=False) == pytest.approx(2.0, abs=1e-12)

    def test_falling_zeroes_survival_term(self):
        assert reward(0.0, np.zeros(8), np.zeros(4), falling=True) == pytest.approx(0.0, abs=1e-12)

    def test_torque_cost_hand_computed(self):
        # ||u||^2 = 1e6 cancels the 1e-6 weight exactly
        u = np.full(8, math.sqrt(1e6 / 8))
        assert reward(0.5, u, np.zeros(4), falling=False) == pytest.approx(0.5, abs=1e-9)

    def test_contact_cost_weight(self):
        f = np.array([2.0, 0.0, 0.0, 0.0])
        expected = 1.0 - CONTACT_COST_WEIGHT * 4.0 + 1.0
        assert reward(1.0, np.zeros(8), f, falling=False) == pytest.approx(expected, abs=1e-12)

    def test_legacy_mode_differs_only_in_survival_term(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            v = float(rng.normal())
            u = rng.normal(size=8)
            f = rng.uniform(0, 2, size=4)
            for falling in (False, True):
                modern = reward(v, u, f, falling)
                legacy = reward(v, u, f, falling, legacy=True)
                s_modern = 0.0 if falling else 1.0
                assert legacy - modern == pytest.approx(1.0 - s_modern, abs=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            reward(float("nan"), np.zeros(8), np.zeros(4), False)
        with pytest.raises(ValueError):
            reward(0.0, np.array([np.inf] * 8), np.zeros(4), False)


class TestReset:
    def test_canonical_pose(self):
        env = PlanarQuadruped(SimConfig(reset_noise=0.0))
        obs = env.reset(seed=0, failure=FailureSpec(leg=0, k=1.0))
        assert obs.shape == (OBS_DIM,)
        assert obs[16] == env.config.standing_height      # torso z
        assert np.all(obs[8:16] == 0.0)                   # joint velocities
        assert np.all(obs[17:21] == 0.0)                  # pitch and velocities
        assert obs[25] == 0.0 and obs[26] == 0.0          # clock phase, padding

    def test_same_seed_same_observation(self):
        env = PlanarQuadruped()
        a = env.reset(seed=0, failure=FailureSpec(leg=1, k=0.3))
        b = env.reset(seed=0, failure=FailureSpec(leg=1, k=0.3))
        assert np.array_equal(a, b)

    def test_noise_only_in_joint_derived_components(self):
        env = PlanarQuadruped()
        a = env.reset(seed=1)
        b = env.reset(seed=2)
        changed = [i for i in range(OBS_DIM) if a[i] != b[i]]
        assert set(changed) <= set(JOINT_SLOTS) | set(CONTACT_SLOTS)
        assert set(changed) & set(JOINT_SLOTS)  # noise actually applied
        cfg = env.config
        assert np.all(np.abs(a[:8] - np.array(cfg.rest_pose())) <= cfg.reset_noise)

    def test_rejects_non_failure_spec(self):
        env = PlanarQuadruped()
        with pytest.raises(TypeError):
            env.reset(seed=0, failure=(0, 1.0))

    def test_non_finite_k_rejected_at_spec_construction(self):
        with pytest.raises(ValueError):
            FailureSpec(leg=0, k=float("nan"))


class TestStep:
    def test_zero_torque_reward_decomposition(self):
        env = PlanarQuadruped()
        env.reset(seed=0)
        _, r, _, info = env.step(np.zeros(8))
        assert info["torque_sq"] == 0.0
        s = 0.0 if info["falling"] else 1.0
        recomputed = (info["v_fwd"] - TORQUE_COST_WEIGHT * info["torque_sq"]
                      - CONTACT_COST_WEIGHT * info["contact_force_sq"] + s)
        assert r == pytest.approx(recomputed, abs=1e-12)

    def test_reward_decomposition_under_load(self):
        env = PlanarQuadruped()
        env.reset(seed=3, failure=FailureSpec(leg=1, k=0.7))
        rng = np.random.default_rng(0)
        for _ in range(100):
            _, r, done, info = env.step(rng.uniform(-1, 1, 8))
            s = 0.0 if info["falling"] else 1.0
            recomputed = (info["v_fwd"] - TORQUE_COST_WEIGHT * info["torque_sq"]
                          - CONTACT_COST_WEIGHT * info["contact_force_sq"] + s)
            assert r == pytest.approx(recomputed, abs=1e-12)
            if done:
                break

    def test_dead_leg_equals_zeroed_actions(self):
        # k=0 on leg 2 must reproduce the failure-free sim fed with zeroed
        # torques at slots {4, 5}: identical rewards and observations
        actions = np.random.default_rng(5).uniform(-1, 1, (120, 8))
        env_broken = PlanarQuadruped()
        broken = rollout(env_broken, 9, actions, failure=FailureSpec(leg=2, k=0.0))
        zeroed = actions.copy()
        zeroed[:, 4:6] = 0.0
        env_ref = PlanarQuadruped(failure_injection=False)
        ref = rollout(env_ref, 9, zeroed)
        assert len(broken) == len(ref)
        for (o1, r1, d1, i1), (o2, r2, d2, i2) in zip(broken, ref):
            assert np.array_equal(o1, o2)
            assert r1 == r2 and d1 == d2

    def test_identity_failure_matches_disabled_injection(self):
        actions = np.random.default_rng(6).uniform(-1, 1, (150, 8))
        env_a = PlanarQuadruped()
        env_b = PlanarQuadruped(failure_injection=False)
        a = rollout(env_a, 4, actions, failure=FailureSpec(leg=3, k=1.0))
        b = rollout(env_b, 4, actions, failure=FailureSpec(leg=3, k=1.0))
        assert len(a) == len(b)
        for (o1, r1, d1, _), (o2, r2, d2, _) in zip(a, b):
            assert np.array_equal(o1, o2) and r1 == r2 and d1 == d2

    def test_bit_identical_trajectories(self):
        actions = np.random.default_rng(7).uniform(-1, 1, (200, 8))
        spec = FailureSpec(leg=1, k=0.42)
        a = rollout(PlanarQuadruped(), 11, actions, spec)
        b = rollout(PlanarQuadruped(), 11, actions, spec)
        assert len(a) == len(b)
        for (o1, r1, d1, i1), (o2, r2, d2, i2) in zip(a, b):
            assert np.array_equal(o1, o2) and r1 == r2 and d1 == d2 and i1 == i2

    def test_step_after_done_raises(self):
        env = PlanarQuadruped(SimConfig(horizon=3))
        env.reset(seed=0)
        for _ in range(3):
            _, _, done, _ = env.step(np.zeros(8))
        assert done
        with pytest.raises(EpisodeFinished):
            env.step(np.zeros(8))

    def test_step_before_reset_raises(self):
        with pytest.raises(EpisodeFinished):
            PlanarQuadruped().step(np.zeros(8))

    def test_rejects_bad_actions(self):
        env = PlanarQuadruped()
        env.reset(seed=0)
        with pytest.raises(ValueError):
            env.step(np.zeros(7))
        with pytest.raises(ValueError):
            env.step(np.array([np.nan] * 8))

    def test_progress_accumulates_displacement(self):
        env = PlanarQuadruped()
        env.reset(seed=0)
        info = {}
        for _ in range(50):
            _, _, done, info = env.step(np.full(8, 0.2))
            if done:
                break
        assert info["progress"] == pytest.approx(env.pos[0] - 0.0, abs=1e-15)


class TestTermination:
    def test_horizon_termination_without_falling(self):
        env = PlanarQuadruped(SimConfig(horizon=5, healthy_z_range=(-10.0, 10.0)))
        env.reset(seed=0)
        steps = 0
        done = False
        while not done:
            _, _, done, info = env.step(np.zeros(8))
            steps += 1
        assert steps == 5 and not info["falling"]

    def test_falling_terminates_early(self):
        env = PlanarQuadruped()
        env.reset(seed=0)
        crouch_all = np.array([1, 0, 1, 0, 1, 0, 1, 0], dtype=float)  # swings it over
        done = False
        steps = 0
        while not done and steps < env.config.horizon:
            _, _, done, info = env.step(crouch_all)
            steps += 1
        assert done and info["falling"] and steps < env.config.horizon
        z = env.pos[1]
        lo, hi = env.config.healthy_z
        assert z < lo or z > hi

    def test_done_iff_falling_or_horizon(self):
        env = PlanarQuadruped(SimConfig(horizon=40))
        env.reset(seed=2, failure=FailureSpec(leg=0, k=0.5))
        rng = np.random.default_rng(1)
        steps = 0
        while True:
            _, _, done, info = env.step(rng.uniform(-0.5, 0.5, 8))
            steps += 1
            expected = info["falling"] or steps >= 40
            assert done == expected
            if done:
                break


class TestEnergy:
    def test_settle_energy_non_increasing(self):
        # integrator test: unactuated robot settling on the ground for 1000
        # steps must not create energy (<= 1% of the initial total)
        env = PlanarQuadruped(SimConfig(horizon=2000, healthy_z_range=(-10.0, 10.0)))
        env.reset(seed=0)
        e0 = env.mechanical_energy()
        prev = e0
        worst_increase = 0.0
        for _ in range(1000):
            env.step(np.zeros(8))
            e = env.mechanical_energy()
            worst_increase = max(worst_increase, e - prev)
            prev = e
        assert worst_increase <= 0.01 * abs(e0) / 1000 + 1e-9
        assert prev <= e0 + 0.01 * abs(e0)

    def test_drop_energy_non_increasing(self):
        env = PlanarQuadruped(SimConfig(horizon=2000, healthy_z_range=(-10.0, 10.0),
                                        reset_noise=0.0))
        env.reset(seed=0)
        env._z += 0.05  # small drop, feet land and bounce
        e0 = env.mechanical_energy()
        prev = e0
        for _ in range(1000):
            env.step(np.zeros(8))
            e = env.mechanical_energy()
            assert e <= prev + 0.01 * abs(e0) / 1000 + 1e-9
            prev = e


class TestStateAndTrace:
    def test_state_round_trip_resumes_exactly(self):
        actions = np.random.default_rng(8).uniform(-0.5, 0.5, (60, 8))
        env = PlanarQuadruped()
        env.reset(seed=5, failure=FailureSpec(leg=2, k=0.8))
        for a in actions[:30]:
            env.step(a)
        snapshot = env.get_state()
        tail_a = [env.step(a) for a in actions[30:]]
        env2 = PlanarQuadruped()
        env2.set_state(snapshot)
        tail_b = [env2.step(a) for a in actions[30:]]
        for (o1, r1, d1, i1), (o2, r2, d2, i2) in zip(tail_a, tail_b):
            assert np.array_equal(o1, o2) and r1 == r2 and d1 == d2 and i1 == i2

    def test_trace_csv(self, tmp_path):
        env = PlanarQuadruped(record_trace=True)
        env.reset(seed=0)
        for _ in range(10):
            _, _, done, _ = env.step(np.zeros(8))
            if done:
                break
        path = tmp_path / "traj.csv"
        env.write_trace_csv(path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "torso_x", "torso_z", "pitch", "reward", "done"]
        assert len(rows) == 11
        assert float(rows[1][0]) == pytest.approx(env.config.dt)

    def test_clock_phase_wraps(self):
        env = PlanarQuadruped(SimConfig(clock_period=4, horizon=20,
                                        healthy_z_range=(-10, 10)))
        env.reset(seed=0)
        phases = []
        for _ in range(8):
            obs, _, _, _ = env.step(np.zeros(8))
            phases.append(obs[25])
        assert phases == [0.25, 0.5, 0.75, 0.0, 0.25, 0.5, 0.75, 0.0]


class TestSimConfig:
    def test_healthy_z_defaults_to_standing_fraction(self):
        cfg = SimConfig()
        lo, hi = cfg.healthy_z
        assert lo == pytest.approx(0.3 * cfg.standing_height)
        assert hi == pytest.approx(1.5 * cfg.standing_height)

    def test_validation(self):
        with pytest.raises(ValueError):
            SimConfig(dt=0.0)
        with pytest.raises(ValueError):
            SimConfig(substeps=0)
        with pytest.raises(ValueError):
            SimConfig(horizon=0)
        with pytest.raises(ValueError):
            SimConfig(healthy_z_range=(1.0, 0.5))

    def test_config_file_round_trip(self, tmp_path):
        from quadfault import configio
        cfg = SimConfig(dt=0.005, substeps=8, max_torque=6.5,
                        healthy_z_range=(0.1, 0.9), horizon=777)
        path = tmp_path / "sim.cfg"
        configio.write_config(path, {"sim": cfg.to_dict()})
        loaded = SimConfig.from_file(path)
        assert loaded == cfg

    def test_unknown_keys_rejected(self):
        from quadfault.configio import ConfigError
        with pytest.raises(ConfigError):
            SimConfig.from_dict({"dt": "0.01", "bogus": "1"})
