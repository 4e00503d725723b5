"""Evaluation protocols: conditions, aggregation, comparison, reports."""

import csv
import json
import math

import numpy as np
import pytest

from quadfault.agent import init_policy
from quadfault.evaluation import (ComparisonTable, EvalCondition, EvalReport,
                                  broken_condition, ci_preset, compare, evaluate,
                                  k_sweep_condition, plain_condition,
                                  write_summary_csv)
from quadfault.failure import rng_stream
from quadfault.simulator import SimConfig


@pytest.fixture(scope="module")
def params():
    return init_policy(rng_stream(7, "init"))


@pytest.fixture(scope="module")
def small_sim():
    return SimConfig(horizon=60)


class TestConditions:
    def test_plain_pins_k(self, params, small_sim):
        report = evaluate(params, plain_condition(trials=4, seeds=(0, 1)),
                          sim_config=small_sim)
        assert all(row["k"] == 1.0 for row in report.rows)
        assert len(report.rows) == 8

    def test_broken_range(self, params, small_sim):
        report = evaluate(params, broken_condition(trials=25, seeds=(0,)),
                          sim_config=small_sim)
        ks = [row["k"] for row in report.rows]
        assert all(0.0 <= k <= 0.5 for k in ks)
        assert len(set(ks)) > 1  # actually random
        legs = {row["leg"] for row in report.rows}
        assert legs <= {0, 1, 2, 3} and len(legs) > 1  # leg redrawn per trial

    def test_k_sweep_point_count(self, params, small_sim):
        grid = [round(0.1 * i, 1) for i in range(11)]
        report = evaluate(params, k_sweep_condition(grid, trials=2, seeds=(0, 1)),
                          sim_config=small_sim)
        curve = report.per_k_curve()
        assert len(curve) == 11
        assert [c["k"] for c in curve] == sorted(grid)
        assert len(report.rows) == 11 * 2 * 2

    def test_grid_values_validated(self):
        with pytest.raises(ValueError):
            k_sweep_condition([0.0, 2.0])
        with pytest.raises(ValueError):
            EvalCondition(name="x", kind="grid", k_grid=())
        with pytest.raises(ValueError):
            EvalCondition(name="x", kind="fixed", trials=0)

    def test_ci_preset(self):
        cond = ci_preset(broken_condition)
        assert cond.trials == 10 and cond.seeds == (0, 1)


class TestDeterminismAndPurity:
    def test_bit_identical_reports(self, params, small_sim):
        cond = broken_condition(trials=5, seeds=(0, 1))
        a = evaluate(params, cond, sim_config=small_sim)
        b = evaluate(params, cond, sim_config=small_sim)
        assert a.rows == b.rows

    def test_never_mutates_params_or_normalizer(self, params, small_sim):
        from quadfault.agent import RunningNorm
        norm = RunningNorm(dim=27)
        norm.update(np.random.default_rng(0).standard_normal((50, 27)))
        before_params = params.copy()
        before_norm = norm.state_dict()
        evaluate(params, plain_condition(trials=3, seeds=(0,)),
                 obs_norm=norm, sim_config=small_sim)
        after_norm = norm.state_dict()
        for a, b in zip(params.flat(), before_params.flat()):
            assert np.array_equal(a, b)
        assert np.array_equal(before_norm["mean"], after_norm["mean"])
        assert before_norm["count"] == after_norm["count"]

    def test_distance_matches_info_progress(self, params, small_sim):
        # walking distance must equal the simulator's own progress accumulator
        from quadfault.evaluation import run_episode
        from quadfault.failure import FailureSpec
        from quadfault.simulator import PlanarQuadruped
        env = PlanarQuadruped(small_sim)
        total, distance, fell = run_episode(env, params, None, 3,
                                            FailureSpec(leg=1, k=0.5))
        assert distance == pytest.approx(env.pos[0] - 0.0, abs=1e-12)


class TestAggregation:
    def synthetic_report(self, name, seed_rewards):
        cond = plain_condition(trials=2, seeds=tuple(range(len(seed_rewards))))
        rows = []
        for seed, rewards in enumerate(seed_rewards):
            for trial, r in enumerate(rewards):
                rows.append({"seed": seed, "trial": trial, "k": 1.0, "leg": 0,
                             "reward": r, "distance": r / 10.0, "fell": False})
        return EvalReport(policy=name, condition=cond, rows=rows)

    def test_standard_error_hand_computed(self):
        # seed means 2, 4, 6 -> mean 4, sd 2, se 2/sqrt(3)
        report = self.synthetic_report("p", [(1, 3), (3, 5), (5, 7)])
        s = report.summary()
        assert s["mean_reward"] == pytest.approx(4.0)
        assert s["se_reward"] == pytest.approx(2.0 / math.sqrt(3))
        assert s["mean_distance"] == pytest.approx(0.4)

    def test_se_across_seeds_not_pooled(self):
        # trials vary wildly inside a seed but seed means are equal -> se 0
        report = self.synthetic_report("p", [(0, 10), (5, 5), (2, 8)])
        assert report.summary()["se_reward"] == pytest.approx(0.0)

    def test_compare_identical_reports_tie(self):
        a = self.synthetic_report("a", [(1, 3), (3, 5)])
        b = self.synthetic_report("b", [(1, 3), (3, 5)])
        table = compare([a, b])
        assert [e["rank_reward"] for e in table.entries] == [1, 1]

    def test_compare_dominance(self):
        strong = self.synthetic_report("strong", [(10, 12), (11, 13)])
        weak = self.synthetic_report("weak", [(1, 2), (1, 3)])
        table = compare([weak, strong])
        by_name = {e["policy"]: e for e in table.entries}
        assert by_name["strong"]["rank_reward"] == 1
        assert by_name["weak"]["rank_reward"] == 2
        assert table.entries[0]["policy"] == "strong"  # sorted by rank

    def test_compare_rejects_mismatched_conditions(self):
        a = self.synthetic_report("a", [(1, 2)])
        b = self.synthetic_report("b", [(1, 2)])
        b.condition = broken_condition(trials=2, seeds=(0,))
        with pytest.raises(ValueError):
            compare([a, b])

    def test_compare_needs_two(self):
        with pytest.raises(ValueError):
            compare([self.synthetic_report("a", [(1, 2)])])


class TestReportIO:
    def test_payload_round_trip(self, params, small_sim):
        report = evaluate(params, broken_condition(trials=3, seeds=(0, 1)),
                          sim_config=small_sim, policy_name="rt")
        clone = EvalReport.from_payload(json.loads(json.dumps(report.to_payload())))
        assert clone.policy == report.policy
        assert clone.condition == report.condition
        assert clone.rows == report.rows

    def test_trials_csv_schema(self, params, small_sim, tmp_path):
        report = evaluate(params, plain_condition(trials=2, seeds=(0,)),
                          sim_config=small_sim, policy_name="csv")
        path = tmp_path / "trials.csv"
        report.write_trials_csv(path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["policy", "condition", "seed", "trial", "k", "leg",
                           "reward", "distance"]
        assert len(rows) == 3

    def test_summary_csv_schema(self, params, small_sim, tmp_path):
        report = evaluate(params, plain_condition(trials=2, seeds=(0, 1)),
                          sim_config=small_sim, policy_name="sum")
        path = tmp_path / "summary.csv"
        write_summary_csv(path, [report])
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["policy", "condition", "mean_reward", "se_reward",
                           "mean_distance", "se_distance"]
        assert rows[1][0] == "sum"

    def test_plots_render(self, params, small_sim, tmp_path):
        from quadfault.evaluation import plot_comparison, plot_k_curves
        r1 = evaluate(params, plain_condition(trials=2, seeds=(0,)),
                      sim_config=small_sim, policy_name="a")
        r2 = evaluate(params, plain_condition(trials=2, seeds=(0,)),
                      sim_config=small_sim, policy_name="b")
        plot_comparison(tmp_path / "bars.png", [r1, r2])
        assert (tmp_path / "bars.png").stat().st_size > 0
        sweep = evaluate(params, k_sweep_condition([0.0, 0.5, 1.0], trials=1,
                                                   seeds=(0,)),
                         sim_config=small_sim, policy_name="c")
        plot_k_curves(tmp_path / "curves.png", [sweep])
        assert (tmp_path / "curves.png").stat().st_size > 0
