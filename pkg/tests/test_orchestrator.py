import numpy as np
import pytest

from nafrl.config import run_config
from nafrl.errors import ConfigError
from nafrl.orchestrator import (
    METRICS_HEADER,
    select_behavior_policy,
    train,
)


def quick_settings(**over):
    base = {
        "train.mode": "naf",
        "train.episodes": "12",
        "train.seed": "3",
        "naf.hidden": "12,12",
        "train.eval_interval": "4",
        "train.eval_episodes": "3",
    }
    base.update({k: str(v) for k, v in over.items()})
    return run_config(None, base)


class TestTrainLoop:
    def test_metrics_cadence_and_monotone_steps(self):
        settings, _ = quick_settings()
        res = train(settings)
        assert [r.episode for r in res.metrics] == [4, 8, 12]
        steps = [r.env_steps for r in res.metrics]
        assert steps == sorted(steps) and len(set(steps)) == len(steps)
        assert res.env_steps == 12 * 20

    def test_update_cadence_after_warmup(self):
        settings, _ = quick_settings()
        res = train(settings)
        # batch 64 fills mid-episode 4; from episode 5 every step does I updates
        assert res.update_counts[0] == 0
        assert all(c == 5 * 20 for c in res.update_counts[4:])

    def test_plain_mode_never_uses_optimizer(self):
        settings, _ = quick_settings()
        res = train(settings)
        assert set(res.behavior_tags) == {"learned"}

    def test_run_is_bitwise_reproducible(self):
        settings_a, _ = quick_settings()
        res_a = train(settings_a)
        settings_b, _ = quick_settings()
        res_b = train(settings_b)
        rows_a = [r.to_csv() for r in res_a.metrics]
        rows_b = [r.to_csv() for r in res_b.metrics]
        assert rows_a == rows_b

    def test_seed_changes_results(self):
        res_a = train(quick_settings(**{"train.seed": 1})[0])
        res_b = train(quick_settings(**{"train.seed": 2})[0])
        assert [r.to_csv() for r in res_a.metrics] != [r.to_csv() for r in res_b.metrics]

    def test_artifacts_written(self, tmp_path):
        settings, echo = quick_settings()
        out = tmp_path / "run"
        res = train(settings, out_dir=str(out), config_echo=echo)
        assert (out / "metrics.csv").exists()
        assert (out / "checkpoint.txt").exists()
        assert (out / "config.txt").exists()
        assert (out / "summary.json").exists()
        text = (out / "metrics.csv").read_text().splitlines()
        assert text[0] == METRICS_HEADER
        assert len(text) == 1 + len(res.metrics)

    def test_early_stop_on_return_threshold(self):
        # a huge negative threshold is met at the very first evaluation
        settings, _ = quick_settings(**{"train.stop_return": "-1e9"})
        res = train(settings)
        assert res.stopped_early
        assert res.episodes_run == 4


class TestImaginationCadence:
    def test_update_counts_multiply_with_rollouts(self):
        settings, _ = quick_settings(
            **{
                "train.mode": "naf-imr",
                "train.episodes": "16",
                "train.refit_n": "3",
                "train.rollout_length": "4",
                "train.rollout_seeds": "16",
            }
        )
        res = train(settings)
        # imagination engages once a model exists and R_f holds a minibatch;
        # steady state is I*(1+l) updates per step
        assert res.update_counts[-1] == 20 * 5 * (1 + 4)

    def test_switch_off_reverts_update_count(self):
        settings, _ = quick_settings(
            **{
                "train.mode": "naf-imr",
                "train.episodes": "14",
                "train.refit_n": "3",
                "train.rollout_length": "4",
                "train.rollout_seeds": "16",
                "train.switch_off_episode": "10",
            }
        )
        res = train(settings)
        assert res.update_counts[9] == 20 * 5 * (1 + 4)  # episode 10: still on
        assert all(c == 20 * 5 for c in res.update_counts[10:])  # 11+: plain

    def test_switch_off_zero_matches_plain_mode_exactly(self):
        plain, _ = quick_settings(**{"train.episodes": "10"})
        res_plain = train(plain)
        imr, _ = quick_settings(
            **{
                "train.mode": "naf-imr",
                "train.episodes": "10",
                "train.switch_off_episode": "0",
            }
        )
        res_imr = train(imr)
        assert [r.to_csv() for r in res_plain.metrics] == [r.to_csv() for r in res_imr.metrics]

    def test_fictional_buffer_fills(self):
        settings, _ = quick_settings(
            **{
                "train.mode": "naf-imr",
                "train.episodes": "8",
                "train.refit_n": "3",
                "train.rollout_length": "4",
            }
        )
        res = train(settings)  # no crash and rollouts happened
        post_model_counts = res.update_counts[6:]
        assert max(post_model_counts) > 20 * 5


class TestIlqgMode:
    def test_mix_uses_both_policies(self):
        settings, _ = quick_settings(
            **{
                "train.mode": "naf-ilqg",
                "train.episodes": "40",
                "train.refit_n": "3",
                "train.mix_p": "0.5",
                "train.seed": "0",
            }
        )
        res = train(settings)
        tags = set(res.behavior_tags)
        assert tags == {"learned", "ilqg"}
        # before the first refit the optimizer cannot be selected
        assert set(res.behavior_tags[:3]) == {"learned"}

    def test_full_mode_runs(self):
        settings, _ = quick_settings(
            **{
                "train.mode": "naf-ilqg-imr",
                "train.episodes": "10",
                "train.refit_n": "3",
                "train.rollout_length": "2",
                "train.mix_p": "0.5",
            }
        )
        res = train(settings)
        assert res.episodes_run == 10


class TestBehaviorSelection:
    def test_probabilities_match_binomial(self):
        rng = np.random.default_rng(0)
        n = 10_000
        picks = sum(select_behavior_policy(0.7, rng) == "learned" for _ in range(n))
        sigma = np.sqrt(n * 0.7 * 0.3)
        assert abs(picks - n * 0.7) <= 3.0 * sigma

    def test_extremes(self):
        rng = np.random.default_rng(1)
        assert all(select_behavior_policy(1.0, rng) == "learned" for _ in range(100))
        assert all(select_behavior_policy(0.0, rng) == "ilqg" for _ in range(100))


class TestValidationAtEntry:
    def test_bad_mode_rejected_by_config(self):
        with pytest.raises(ConfigError):
            run_config(None, {"train.mode": "dqn"})

    def test_ilqg_mode_needs_mix_below_one(self):
        with pytest.raises(ConfigError):
            run_config(None, {"train.mode": "naf-ilqg", "train.mix_p": "1.0"})

    def test_imagination_needs_positive_rollout(self):
        with pytest.raises(ConfigError):
            run_config(None, {"train.mode": "naf-imr", "train.rollout_length": "0"})
