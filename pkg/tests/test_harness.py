import logging

import numpy as np
import pytest

from uavsem import harness
from uavsem.config import ScenarioConfig
from uavsem.harness import (ExperimentSpec, aggregate, config_hash, read_table,
                            run_eval, run_heatmap, run_snr_sweep, run_tau_sweep,
                            sweep_scenario, write_table)
from uavsem.policy import ActorPolicy, HoverCentroidPolicy
from uavsem.env import UavRelayEnv
from uavsem.nn import DenseNet


def tiny_spec(tmp_path, **overrides):
    base = dict(cfg=sweep_scenario(mission_duration=50.0), out_dir=tmp_path,
                seeds=(0, 1), render_figures=False)
    base.update(overrides)
    return ExperimentSpec(**base)


class TestExperimentSpec:
    def test_duplicate_seeds_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="distinct"):
            tiny_spec(tmp_path, seeds=(1, 1))

    def test_empty_grid_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="tau_grid"):
            tiny_spec(tmp_path, tau_grid=())

    def test_empty_seeds_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="seed"):
            tiny_spec(tmp_path, seeds=())


class TestConfigHash:
    def test_stable_and_sensitive(self):
        a = config_hash(ScenarioConfig())
        assert a == config_hash(ScenarioConfig())
        assert a != config_hash(ScenarioConfig(num_gus=21))


class TestTables:
    def test_write_read_round_trip(self, tmp_path):
        path = tmp_path / "t.csv"
        rows = [[1, 2.5, "x"], [2, 3.5, "y"]]
        write_table(path, ["a", "b", "c"], rows, {"config_hash": "deadbeef"})
        header, got = read_table(path)
        assert header == ["a", "b", "c"]
        assert got == [["1", "2.5", "x"], ["2", "3.5", "y"]]
        assert path.read_text().startswith("# config_hash=deadbeef\n")

    def test_rerun_byte_identical(self, tmp_path):
        spec_a = tiny_spec(tmp_path / "a", snr_offsets_db=(0.0, 10.0))
        spec_b = tiny_spec(tmp_path / "b", snr_offsets_db=(0.0, 10.0))
        run_snr_sweep(spec_a)
        run_snr_sweep(spec_b)
        assert (tmp_path / "a" / "snr_sweep.csv").read_bytes() == \
            (tmp_path / "b" / "snr_sweep.csv").read_bytes()

    def test_aggregate_means(self):
        rows = [[1, 0, 2.0], [1, 1, 4.0], [2, 0, 10.0]]
        means = aggregate(rows, key_cols=(0,), value_cols=(2,))
        assert means[(1,)] == [pytest.approx(3.0)]
        assert means[(2,)] == [pytest.approx(10.0)]


class TestEval:
    def test_eval_writes_metrics_and_traces(self, tmp_path):
        spec = tiny_spec(tmp_path)
        rows = run_eval(spec)
        assert len(rows) == 2
        header, table = read_table(tmp_path / "eval_metrics.csv")
        assert header[0] == "seed"
        assert len(table) == 2
        gu_header, gu_rows = read_table(tmp_path / "trace_gu_seed0.csv")
        assert gu_header == harness.GU_TRACE_HEADER
        cfg = spec.cfg
        assert len(gu_rows) == cfg.num_slots * cfg.num_gus
        uav_header, uav_rows = read_table(tmp_path / "trace_uav_seed0.csv")
        assert uav_header == harness.UAV_TRACE_HEADER
        assert len(uav_rows) == cfg.num_slots * cfg.num_uavs


class TestSweeps:
    def test_tau_sweep_row_count(self, tmp_path):
        spec = tiny_spec(tmp_path, tau_grid=(2.0, 5.0, 10.0, 15.0))
        rows = run_tau_sweep(spec)
        assert len(rows) == 4 * len(spec.seeds)

    def test_infeasible_tau_skipped_with_notice(self, tmp_path, caplog):
        cfg = sweep_scenario(mission_duration=50.0,
                             arrival_rate_range=(0.05, 0.2))   # 1/lambda_max = 5
        spec = tiny_spec(tmp_path, cfg=cfg, tau_grid=(2.0, 5.0, 10.0, 15.0))
        with caplog.at_level(logging.WARNING):
            rows = run_tau_sweep(spec)
        assert len(rows) == 2 * len(spec.seeds)
        assert sum("infeasible tau" in rec.message for rec in caplog.records) == 2

    def test_snr_sweep_row_count(self, tmp_path):
        spec = tiny_spec(tmp_path, snr_offsets_db=(0.0, 5.0, 10.0, 15.0, 20.0))
        rows = run_snr_sweep(spec)
        assert len(rows) == 5 * len(spec.seeds)

    def test_heatmap_row_count(self, tmp_path):
        spec = tiny_spec(tmp_path, feature_len_grid=(4096, 16384),
                         mod_order_grid=(4, 64))
        rows = run_heatmap(spec)
        assert len(rows) == 4 * len(spec.seeds)

    def test_figures_rendered_when_enabled(self, tmp_path):
        spec = tiny_spec(tmp_path, snr_offsets_db=(0.0, 10.0), render_figures=True)
        run_snr_sweep(spec)
        assert (tmp_path / "snr_sweep.png").stat().st_size > 0


class TestPolicySelection:
    def test_heuristic_default(self, tmp_path):
        spec = tiny_spec(tmp_path)
        policy = harness.make_policy(spec, spec.cfg)
        assert isinstance(policy, HoverCentroidPolicy)

    def test_checkpoint_policy_loads(self, tmp_path):
        cfg = sweep_scenario(mission_duration=50.0)
        env = UavRelayEnv(cfg)
        env.reset(seed=0)
        rng = np.random.default_rng(0)
        net = DenseNet([env.observation_dim, 16, 2 * env.action_dim],
                       ["relu", "linear"], rng)
        ckpt = tmp_path / "actor.npz"
        net.save(ckpt)
        spec = tiny_spec(tmp_path, policy=str(ckpt))
        policy = harness.make_policy(spec, cfg)
        assert isinstance(policy, ActorPolicy)
        action = policy.act(env.reset(seed=0))
        assert action.shape == (env.action_dim,)
        assert np.all(action >= env.action_low - 1e-9)
        assert np.all(action <= env.action_high + 1e-9)

    def test_fixed_d_policy_emits_constant_compression(self, tmp_path):
        cfg = sweep_scenario(mission_duration=50.0)
        env = UavRelayEnv(cfg)
        obs = env.reset(seed=0)
        policy = HoverCentroidPolicy(cfg, d_mode="fixed", fixed_d=3)
        done = False
        while not done:
            obs, _, done, out = env.step(policy.act(obs))
            assert out.gu_results[0].compression == 3
