"""Experiment orchestration: training runs, checkpoints, determinism,
aggregation, CSV round-trips, reporting, CLI."""

import os

import numpy as np
import pytest

from dilute_rl import harness, nets
from dilute_rl.cli import main as cli_main
from dilute_rl.config import ExperimentConfig
from dilute_rl.env import DOMAIN_PRESETS, DialogueEnv
from dilute_rl.replay import (SOURCE_EXPERT_DEMO, SOURCE_EXPERT_FEEDBACK,
                              SOURCE_SELF_PLAY)
from dilute_rl.report import render_report, summarize


def tiny_config(**kw):
    base = dict(algorithm="stoc-dqn", domain="CR", ser=0.0, seeds=(0,),
                train_dialogues=30, eval_dialogues=10, checkpoint_every=10)
    base.update(kw)
    return ExperimentConfig(**base)


# -- episode collection -----------------------------------------------------------

def test_collect_episode_reward_identity_and_sources():
    cfg = tiny_config(guidance_mode="bc")
    rng = np.random.default_rng(0)
    env = DialogueEnv(DOMAIN_PRESETS["CR"], 0.0, rng)
    learner = harness.make_learner(cfg, rng)
    seen_sources = set()
    for i in range(40):
        transitions, total, success = collected = harness.collect_episode(
            env, learner, cfg, i, rng)
        assert total == pytest.approx(sum(t.reward for t in transitions))
        assert total == pytest.approx(20.0 * success - len(transitions))
        assert transitions[-1].done and not any(t.done for t in transitions[:-1])
        seen_sources |= {t.source for t in transitions}
    # beta = 0.5 over 40 dialogues: both controllers virtually certain
    assert SOURCE_EXPERT_DEMO in seen_sources
    assert SOURCE_SELF_PLAY in seen_sources


def test_demo_transitions_store_onehot_behavior_probs():
    cfg = tiny_config(guidance_mode="bc", guidance_beta=0.0)  # always expert
    rng = np.random.default_rng(1)
    env = DialogueEnv(DOMAIN_PRESETS["CR"], 0.0, rng)
    learner = harness.make_learner(cfg, rng)
    transitions, _, _ = harness.collect_episode(env, learner, cfg, 0, rng)
    for t in transitions:
        assert t.source == SOURCE_EXPERT_DEMO
        mu = np.asarray(t.behavior_probs)
        assert mu[t.action] == 1.0 and mu.sum() == 1.0


def test_feedback_transitions_store_the_expert_mixture():
    cfg = tiny_config(guidance_mode="fb", guidance_beta=0.5)
    rng = np.random.default_rng(2)
    env = DialogueEnv(DOMAIN_PRESETS["CR"], 0.0, rng)
    learner = harness.make_learner(cfg, rng)
    sources = set()
    for i in range(10):
        transitions, _, _ = harness.collect_episode(env, learner, cfg, i, rng)
        for t in transitions:
            sources.add(t.source)
            mu = np.asarray(t.behavior_probs)
            # one action carries the extra (1 - beta) expert mass
            assert mu.max() >= 0.5
            assert mu.sum() == pytest.approx(1.0)
    assert SOURCE_EXPERT_FEEDBACK in sources and SOURCE_SELF_PLAY in sources


# -- training runs ------------------------------------------------------------------

def test_run_training_writes_checkpoints_and_metrics(tmp_path):
    cfg = tiny_config()
    rows = harness.run_training(cfg, tmp_path, seed=0)
    assert [r["checkpoint"] for r in rows] == [10, 20, 30]
    for idx in (10, 20, 30):
        assert (tmp_path / f"ckpt_{idx:06d}.ckpt").exists()
    assert (tmp_path / "metrics.csv").exists()
    got = harness.read_results(tmp_path / "metrics.csv")
    assert got == rows


def test_same_config_and_seed_give_bit_identical_metrics(tmp_path):
    cfg = tiny_config(ser=0.15, guidance_mode="bc")
    a = tmp_path / "a"
    b = tmp_path / "b"
    a.mkdir(), b.mkdir()
    harness.run_training(cfg, a, seed=3)
    harness.run_training(cfg, b, seed=3)
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    ck_a = (a / "ckpt_000030.ckpt").read_bytes()
    ck_b = (b / "ckpt_000030.ckpt").read_bytes()
    assert ck_a == ck_b


def test_different_seeds_differ(tmp_path):
    cfg = tiny_config(ser=0.15)
    a = tmp_path / "a"
    b = tmp_path / "b"
    a.mkdir(), b.mkdir()
    ra = harness.run_training(cfg, a, seed=0)
    rb = harness.run_training(cfg, b, seed=1)
    assert ra != rb


def test_run_experiment_echoes_config_and_covers_seeds(tmp_path):
    cfg = tiny_config(seeds=(0, 1))
    rows = harness.run_experiment(cfg, tmp_path)
    assert (tmp_path / "config.echo").exists()
    assert "explore.tau = 100.0" in (tmp_path / "config.echo").read_text()
    assert sorted({r["seed"] for r in rows}) == [0, 1]
    assert (tmp_path / "seed_0" / "metrics.csv").exists()
    assert (tmp_path / "seed_1" / "metrics.csv").exists()


def test_trace_jsonl_written_when_enabled(tmp_path):
    cfg = tiny_config(trace=True)
    harness.run_training(cfg, tmp_path, seed=0)
    trace = tmp_path / "trace.jsonl"
    assert trace.exists()
    import json
    first = json.loads(trace.read_text().splitlines()[0])
    assert {"turn", "machine_act", "reward", "done"} <= set(first)


# -- evaluation ----------------------------------------------------------------------

def test_evaluate_policy_round_trip(tmp_path):
    cfg = tiny_config()
    harness.run_training(cfg, tmp_path, seed=0)
    m = harness.evaluate_policy(tmp_path / "ckpt_000030.ckpt", cfg)
    assert m.dialogue_index == 30
    assert 0.0 <= m.success_rate <= 1.0


def test_evaluate_policy_rejects_mismatched_domain(tmp_path):
    cfg = tiny_config()
    harness.run_training(cfg, tmp_path, seed=0)
    other = tiny_config(domain="SFR")
    with pytest.raises(ValueError):
        harness.evaluate_policy(tmp_path / "ckpt_000030.ckpt", other)


def test_hdc_evaluation_needs_no_checkpoint():
    cfg = tiny_config(algorithm="hdc", eval_dialogues=50)
    pf = harness._eval_policy_fn(cfg)
    success, reward = harness.run_evaluation(cfg, pf, np.random.default_rng(0))
    assert success == 1.0  # noise-free rule-based policy always succeeds


# -- aggregation -----------------------------------------------------------------------

def agg_rows(successes, seed=0, start=6000):
    return [{"algorithm": "stoc-dqn", "guidance": "bc", "domain": "LAP",
             "ser": 0.3, "seed": seed, "checkpoint": start + 1000 * i,
             "success_rate": s, "avg_reward": 0.0}
            for i, s in enumerate(successes)]


def test_aggregation_pinned_mean():
    rows = agg_rows([0.8, 0.85, 0.9, 0.95, 1.0])
    out = harness.aggregate_checkpoints(rows)
    assert out.success_rate == pytest.approx(0.9)
    assert out.per_seed[0][0] == pytest.approx(0.9)


def test_aggregation_uses_exactly_the_requested_window():
    rows = agg_rows([0.0], start=1000) + agg_rows([0.8, 0.85, 0.9, 0.95, 1.0])
    out = harness.aggregate_checkpoints(rows)
    assert out.success_rate == pytest.approx(0.9)  # the 1000 row is ignored


def test_aggregation_raises_listing_missing_checkpoints():
    rows = agg_rows([0.8, 0.85, 0.9])  # 9000 and 10000 missing
    with pytest.raises(ValueError, match="9000, 10000"):
        harness.aggregate_checkpoints(rows)


# -- CSV round trip ----------------------------------------------------------------------

def test_results_csv_round_trips_floats_exactly(tmp_path):
    rows = [{"algorithm": "stoc-acer", "guidance": "fb", "domain": "CR",
             "ser": 0.3, "seed": 4, "checkpoint": 1000,
             "success_rate": 1 / 3, "avg_reward": -7.123456789012345}]
    path = tmp_path / "m.csv"
    harness.write_results(rows, path)
    assert harness.read_results(path) == rows


# -- reporting ----------------------------------------------------------------------------

def grid_rows():
    rows = []
    for domain in ("CR", "SFR", "LAP"):
        for ser in (0.0, 0.15, 0.3):
            for seed in (0, 1):
                rows += [{"algorithm": "stoc-dqn", "guidance": "bc",
                          "domain": domain, "ser": ser, "seed": seed,
                          "checkpoint": ck, "success_rate": 0.5 + ck / 4000,
                          "avg_reward": 1.0} for ck in (500, 1000)]
    return rows


def test_summary_covers_the_full_grid():
    summary = summarize(grid_rows())
    assert len(summary) == 9  # 3 domains x 3 error rates, one method
    # only the final checkpoint of each run contributes
    assert summary[("CR", 0.0, "stoc-dqn-bc")][0] == pytest.approx(0.75)


def test_render_report_writes_csvs_and_figures(tmp_path):
    run_dir = tmp_path / "runs" / "exp1"
    run_dir.mkdir(parents=True)
    harness.write_results(grid_rows(), run_dir / "metrics.csv")
    out_csv = tmp_path / "report.csv"
    rows = render_report(tmp_path / "runs", out_csv)
    assert len(rows) == len(grid_rows())
    assert out_csv.exists()
    assert (tmp_path / "report_summary.csv").exists()
    assert (tmp_path / "report_curves.png").exists()
    assert (tmp_path / "report_summary.png").exists()
    summary_text = (tmp_path / "report_summary.csv").read_text()
    assert summary_text.splitlines()[0] == \
        "domain,ser,stoc-dqn-bc_success,stoc-dqn-bc_reward"
    assert len(summary_text.strip().splitlines()) == 10  # header + 9 cells


# -- CLI -------------------------------------------------------------------------------------

def test_cli_train_eval_report(tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("algorithm = stoc-dqn\ndomain = CR\nseeds = 0\n"
                    "train_dialogues = 20\neval_dialogues = 10\n"
                    "checkpoint_every = 10\n")
    out = tmp_path / "out"
    assert cli_main(["train", "--config", str(conf), "--out", str(out)]) == 0
    assert (out / "metrics.csv").exists()
    captured = capsys.readouterr().out
    assert "checkpoint=20" in captured

    ckpt = out / "seed_0" / "ckpt_000020.ckpt"
    assert cli_main(["eval", "--checkpoint", str(ckpt),
                     "--config", str(conf)]) == 0
    assert "success=" in capsys.readouterr().out

    report = tmp_path / "report.csv"
    assert cli_main(["report", "--in", str(out), "--out", str(report)]) == 0
    assert report.exists()


def test_cli_set_overrides_and_config_error(tmp_path, capsys):
    out = tmp_path / "out"
    rc = cli_main(["train", "--set", "algorithm=banana", "--out", str(out)])
    assert rc == 2
    assert "config error" in capsys.readouterr().err

    rc = cli_main(["train", "--set", "seeds=0",
                   "--set", "train_dialogues=10",
                   "--set", "eval_dialogues=5",
                   "--set", "checkpoint_every=10",
                   "--out", str(out)])
    assert rc == 0
    assert (out / "seed_0" / "ckpt_000010.ckpt").exists()
