"""Whole-toolkit acceptance checks, one per numbered property.

Each test exercises one end-to-end guarantee at its stated tolerance and
prints a single [PASS]/[FAIL] line (run with ``pytest -s`` to see the lines
for passing tests too). The slow learning checks share one batch of
baseline runs through a module-scoped fixture; everything is seeded, so
the whole module is deterministic.
"""

import time

import numpy as np
import pytest
from scipy.signal import lfilter

from nafrl import approximator as ap
from nafrl.config import run_config
from nafrl.dynamics import fit_local_linear
from nafrl.envs import pointmass
from nafrl.exploration import OUProcess
from nafrl.ilqg import backward_pass
from nafrl.lqr import LqrProblem, optimal_return
from nafrl.naf import NafNetwork, assemble_q, bellman_loss_and_grads, build_lower
from nafrl.orchestrator import BEHAVIOR_LEARNED, train
from nafrl.replay import ReplayBuffer, Transition
from nafrl.selftest import (
    GOLDEN_GAIN,
    _exact_model,
    _quadratic_expansions,
    riccati_gap,
)


def report(label: str, ok: bool, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    print(line)
    assert ok, line


def run_training(**overrides):
    settings, _ = run_config(None, {k: str(v) for k, v in overrides.items()})
    return train(settings)


def first_steps_reaching(result, threshold: float):
    """Real env steps consumed when evaluation first reaches threshold."""
    for row in result.metrics:
        if row.eval_return >= threshold:
            return row.env_steps
    return None


@pytest.fixture(scope="module")
def lqr_target():
    """Analytic optimal undiscounted return on the 20-step point-mass task."""
    return optimal_return(pointmass())


@pytest.fixture(scope="module")
def naf_baseline(lqr_target):
    """Five seeded runs of the plain learner, stopping inside the 10% band."""
    band = 1.1 * lqr_target
    t0 = time.perf_counter()
    runs = []
    for seed in range(5):
        runs.append(run_training(**{
            "train.mode": "naf", "train.episodes": 400, "train.seed": seed,
            "train.eval_interval": 2, "naf.hidden": "64,64",
            "train.stop_return": repr(band),
        }))
    return runs, time.perf_counter() - t0


class TestAcceptance:
    def test_01_backward_pass_matches_riccati_oracle(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(17)
        worst = 0.0
        for _ in range(10):
            n = int(rng.integers(1, 5))
            a = int(rng.integers(1, 3))
            while True:
                a_mat = rng.standard_normal((n, n))
                radius = max(abs(np.linalg.eigvals(a_mat)))
                a_mat *= (0.9 + 0.2 * rng.random()) / max(radius, 1e-9)
                b_mat = rng.standard_normal((n, a))
                ctrb = np.hstack(
                    [np.linalg.matrix_power(a_mat, k) @ b_mat for k in range(n)]
                )
                if np.linalg.matrix_rank(ctrb) == n:
                    break
            g = rng.standard_normal((n + a, n + a))
            m = g @ g.T + 0.1 * np.eye(n + a)
            prob = LqrProblem(
                a=a_mat, b=b_mat,
                r_xx=-m[:n, :n], r_uu=-m[n:, n:], r_xu=-m[:n, n:],
                r_x=0.3 * rng.standard_normal(n),
                r_u=0.3 * rng.standard_normal(a),
                r_0=float(rng.standard_normal()),
                horizon=50,
            )
            worst = max(worst, riccati_gap(prob))

        # 1D x' = x + u with r = -x^2 - u^2: the stationary feedback gain is
        # -(golden ratio - 1), the root of p^2 + p - 1 = 0 mapped to the gain
        scalar = LqrProblem(
            a=np.array([[1.0]]), b=np.array([[1.0]]),
            r_xx=np.array([[-1.0]]), r_uu=np.array([[-1.0]]),
            r_xu=np.zeros((1, 1)), r_x=np.zeros(1), r_u=np.zeros(1),
            r_0=0.0, horizon=60,
        )
        _, gain, _ = backward_pass(_exact_model(scalar.a, scalar.b, 60),
                                   _quadratic_expansions(scalar))
        golden_err = abs(float(gain[0, 0, 0]) - GOLDEN_GAIN)
        elapsed = time.perf_counter() - t0
        report(
            "01 trajectory-optimizer oracle equivalence",
            worst < 1e-8 and golden_err < 1e-5 and elapsed < 5.0,
            f"max gain gap {worst:.2e} over 10 random controllable systems "
            f"(limit 1e-8), golden-gain error {golden_err:.2e} (limit 1e-5), "
            f"{elapsed:.1f}s",
        )

    def test_02_bellman_gradients_match_finite_differences(self):
        t0 = time.perf_counter()
        h = 1e-5
        worst = 0.0
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            obs_dim = int(rng.integers(2, 5))
            act_dim = int(rng.integers(1, 3))
            hidden = (8,) if seed % 2 else (8, 8)
            net = NafNetwork.create(obs_dim, act_dim, hidden, rng)
            obs = rng.standard_normal((8, obs_dim))
            actions = rng.standard_normal((8, act_dim))
            targets = rng.standard_normal(8)
            _, grads = bellman_loss_and_grads(net, obs, actions, targets)
            flat_g = ap.flatten_params(grads)
            base = ap.flatten_params(net.params)

            def loss_at(vec):
                probe = NafNetwork(
                    arch=net.arch,
                    params=ap.unflatten_params(net.arch, vec, net.params),
                )
                return bellman_loss_and_grads(probe, obs, actions, targets)[0]

            num = np.empty_like(base)
            for i in range(base.size):
                bump = np.zeros_like(base)
                bump[i] = h
                num[i] = (loss_at(base + bump) - loss_at(base - bump)) / (2 * h)
            mask = np.abs(flat_g) > 1e-8
            rel = np.abs(num[mask] - flat_g[mask]) / np.abs(flat_g[mask])
            worst = max(worst, float(rel.max()))
        elapsed = time.perf_counter() - t0
        report(
            "02 gradient check",
            worst < 1e-4 and elapsed < 10.0,
            f"max relative error {worst:.2e} over 20 networks "
            f"(limit 1e-4, h={h:g}), {elapsed:.1f}s",
        )

    def test_03_precision_positive_definite_and_argmax(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(23)
        act_dim = 3
        n_nets, obs_per_net, u_per_draw = 1000, 100, 1000
        chol_failures = 0
        argmax_violations = 0
        for _ in range(n_nets):
            net = NafNetwork.create(4, act_dim, (16,), rng)
            obs = rng.standard_normal((obs_per_net, 4))
            _, mu, l_raw, _ = ap.forward(net.arch, net.params, obs)
            lower, _ = build_lower(l_raw, act_dim)
            prec = lower @ np.swapaxes(lower, 1, 2)
            try:
                np.linalg.cholesky(prec)
            except np.linalg.LinAlgError:
                chol_failures += 1
                continue
            u = rng.standard_normal((obs_per_net, u_per_draw, act_dim))
            u[:, u_per_draw // 2:, :] *= 3.0  # probe far from the mode too
            delta = u - mu[:, None, :]
            w = np.einsum("bji,bkj->bki", lower, delta)
            adv = -0.5 * np.einsum("bki,bki->bk", w, w)
            argmax_violations += int(np.count_nonzero(adv > 0.0))
        # spot-check the packed-entry path on a few draws: Q(x, mu) == V exactly
        for _ in range(100):
            net = NafNetwork.create(4, act_dim, (16,), rng)
            heads = net.heads(rng.standard_normal(4))
            q = assemble_q(heads, heads.mu)
            assert q.advantage == 0.0 and q.q == heads.v
        elapsed = time.perf_counter() - t0
        total = n_nets * obs_per_net
        report(
            "03 quadratic-advantage structure",
            chol_failures == 0 and argmax_violations == 0 and elapsed < 60.0,
            f"{chol_failures} Cholesky failures, {argmax_violations} argmax "
            f"violations over {total} (params, x) draws x {u_per_draw} actions, "
            f"{elapsed:.1f}s",
        )

    def test_04_model_fit_recovers_linear_gaussian_system(self):
        t0 = time.perf_counter()
        a_mat = np.array([[1.0, 0.1], [-0.05, 0.95]])
        b_mat = np.array([[0.0], [0.1]])
        noise_chol = np.diag([0.03, 0.01])
        n_true = noise_chol @ noise_chol.T
        horizon = 20
        rng = np.random.default_rng(1)

        def collect(n_episodes):
            episodes = []
            for _ in range(n_episodes):
                x = rng.normal(0.0, 0.5, size=2)
                xs, us, xns = [], [], []
                for _t in range(horizon):
                    u = rng.normal(0.0, 0.5, size=1)
                    x_next = a_mat @ x + b_mat @ u + noise_chol @ rng.standard_normal(2)
                    xs.append(x)
                    us.append(u)
                    xns.append(x_next)
                    x = x_next
                episodes.append((np.stack(xs), np.stack(us), np.stack(xns)))
            return episodes

        ab = np.hstack([a_mat, b_mat])
        model20 = fit_local_linear(collect(20))
        f_err = max(np.linalg.norm(model20.f_mat[t] - ab) for t in range(horizon))
        model100 = fit_local_linear(collect(100))
        n_rel = float(np.mean([
            np.linalg.norm(model100.noise[t] - n_true) / np.linalg.norm(n_true)
            for t in range(horizon)
        ]))
        elapsed = time.perf_counter() - t0
        report(
            "04 dynamics-fit recovery",
            f_err <= 0.1 and n_rel <= 0.2 and elapsed < 10.0,
            f"max Frobenius error of [A B] {f_err:.3f} at 20 episodes "
            f"(limit 0.1), noise covariance mean relative error {n_rel:.3f} "
            f"at 100 episodes (limit 0.2), {elapsed:.1f}s",
        )

    def test_05_learner_reaches_near_optimal_return(self, lqr_target, naf_baseline):
        runs, elapsed = naf_baseline
        band = 1.1 * lqr_target
        reached = sum(
            1 for res in runs
            if any(r.eval_return >= band and r.episode <= 2000 for r in res.metrics)
        )
        best = max(max(r.eval_return for r in res.metrics) for res in runs)
        report(
            "05 near-optimal control",
            reached >= 3 and elapsed < 600.0,
            f"{reached}/5 seeds within 10% of the analytic optimum "
            f"{lqr_target:.4f} (threshold {band:.4f}, best eval {best:.4f}), "
            f"{elapsed:.0f}s",
        )

    def test_06_imagination_rollouts_cut_real_steps(self, lqr_target, naf_baseline):
        naf_runs, naf_elapsed = naf_baseline
        threshold = lqr_target / 0.9
        t0 = time.perf_counter()
        imagined = []
        for seed in range(5):
            imagined.append(run_training(**{
                "train.mode": "naf-imr", "train.episodes": 300,
                "train.seed": seed, "train.eval_interval": 2,
                "naf.hidden": "64,64", "train.refit_n": 10,
                "train.rollout_length": 5, "train.clear_rf_on_refit": "true",
                "train.stop_return": repr(threshold),
            }))
        elapsed = time.perf_counter() - t0
        naf_steps = [first_steps_reaching(r, threshold) or 10 ** 9 for r in naf_runs]
        imr_steps = [first_steps_reaching(r, threshold) or 10 ** 9 for r in imagined]
        med_naf = float(np.median(naf_steps))
        med_imr = float(np.median(imr_steps))
        report(
            "06 imagination data efficiency",
            med_imr <= med_naf / 1.5 and elapsed + naf_elapsed < 1200.0,
            f"median real steps to 90% threshold {threshold:.4f}: "
            f"plain {med_naf:.0f} vs imagination {med_imr:.0f} "
            f"(speedup {med_naf / med_imr:.2f}x, required >= 1.5x), "
            f"{elapsed + naf_elapsed:.0f}s",
        )

    def test_07_switch_off_reverts_update_rate(self):
        off = 40
        res = run_training(**{
            "train.mode": "naf-imr", "train.episodes": 60, "train.seed": 0,
            "train.eval_interval": 2, "train.refit_n": 10,
            "train.rollout_length": 5, "train.switch_off_episode": off,
            "naf.hidden": "64,64",
        })
        # steady rate per episode: 20 steps x 5 updates x (1 real + 5 fictional
        # blocks) before the switch, 20 x 5 after
        pre = res.update_counts[12:off]
        post = res.update_counts[off:]
        pre_ok = all(c == 600 for c in pre)
        post_ok = all(c == 100 for c in post)
        pre_eval = [r.eval_return for r in res.metrics if r.episode <= off][-1]
        recovered = any(
            r.eval_return >= pre_eval - 0.2 * abs(pre_eval)
            for r in res.metrics
            if off < r.episode <= off + 20
        )
        report(
            "07 imagination switch-off",
            pre_ok and post_ok and recovered,
            f"per-episode updates {pre[-1] if pre else '?'} -> "
            f"{post[0] if post else '?'} at episode {off + 1} "
            f"(expected 600 -> 100), eval before switch {pre_eval:.2f}, "
            f"recovered within 20 episodes: {recovered}",
        )

    def test_08_guided_exploration_does_not_degrade(self):
        finals = {}
        for mode in ("naf", "naf-ilqg"):
            finals[mode] = []
            for seed in range(3):
                res = run_training(**{
                    "train.mode": mode, "train.episodes": 150,
                    "train.seed": seed, "train.eval_interval": 10,
                    "train.refit_n": 10, "train.mix_p": 0.5,
                    "naf.hidden": "64,64",
                })
                finals[mode].append(res.final_eval_return)
        med_naf = float(np.median(finals["naf"]))
        med_mix = float(np.median(finals["naf-ilqg"]))
        ok = med_mix >= med_naf - 0.1 * abs(med_naf)
        report(
            "08 guided-exploration non-degradation",
            ok,
            f"median final return {med_mix:.3f} with mixing vs {med_naf:.3f} "
            f"plain (allowed down to {med_naf - 0.1 * abs(med_naf):.3f})",
        )

    def test_09_statistical_invariants(self):
        # replay sampling uniformity: chi-square over 10 bins, 3 sigma
        rng = np.random.default_rng(31)
        buf = ReplayBuffer(1000, 1, 1)
        for i in range(1000):
            buf.push(Transition(np.array([0.0]), np.array([0.0]), float(i),
                                np.array([0.0]), 1))
        counts = np.zeros(10)
        for _ in range(500):
            batch = buf.sample(100, rng)
            idx = batch.r.astype(int) // 100
            counts += np.bincount(idx, minlength=10)
        expected = 50_000 / 10
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        chi2_ok = abs(chi2 - 9.0) <= 3.0 * np.sqrt(18.0)

        # behavior-policy mixing frequency: iid coin flips once the fitted
        # controller exists (the first refit lands after episode 10)
        res = run_training(**{
            "train.mode": "naf-ilqg", "train.episodes": 300, "train.seed": 5,
            "train.eval_interval": 300, "train.refit_n": 10,
            "train.mix_p": 0.5, "naf.hidden": "8,8",
        })
        tags = res.behavior_tags[10:]
        learned = sum(1 for t in tags if t == BEHAVIOR_LEARNED)
        n = len(tags)
        mix_dev = abs(learned - 0.5 * n) / np.sqrt(n * 0.25)
        mix_ok = mix_dev <= 3.0

        # mean-reverting noise: empirical stationary variance vs scale^2/(2 theta)
        theta, dt, scale = 0.1, 0.1, 0.3
        rng_ou = np.random.default_rng(41)
        innovations = rng_ou.standard_normal(2_000_000)
        path = lfilter([scale * np.sqrt(dt)], [1.0, -(1.0 - theta * dt)],
                       innovations)
        ou = OUProcess(dim=1, theta=theta, dt=dt)
        for k in range(1000):  # the closed form must match the live process
            step = ou.step(np.array([innovations[k]]), scale)
            assert abs(step[0] - path[k]) < 1e-12
        var = float(np.var(path[10_000:]))
        target = scale ** 2 / (2 * theta)
        ou_ok = abs(var - target) / target < 0.05
        report(
            "09 statistical invariants",
            chi2_ok and mix_ok and ou_ok,
            f"replay chi-square {chi2:.1f} (9 dof, 3 sigma window), mixing "
            f"deviation {mix_dev:.2f} sigma over {n} episodes (limit 3), "
            f"noise variance {var:.4f} vs {target:.4f} "
            f"({abs(var - target) / target:.1%}, limit 5%)",
        )

    def test_10_identical_seeds_reproduce_metrics_bitwise(self, tmp_path):
        mismatched = []
        for mode in ("naf", "naf-ilqg", "naf-imr", "naf-ilqg-imr"):
            blobs = []
            for attempt in ("a", "b"):
                out = tmp_path / f"{mode}-{attempt}"
                settings, echo = run_config(None, {
                    "train.mode": mode, "train.episodes": "12",
                    "train.seed": "7", "train.eval_interval": "4",
                    "train.refit_n": "5", "train.rollout_length": "3",
                    "train.mix_p": "0.5", "naf.hidden": "8,8",
                })
                train(settings, out_dir=str(out), config_echo=echo)
                blobs.append((out / "metrics.csv").read_bytes())
            if blobs[0] != blobs[1]:
                mismatched.append(mode)
        report(
            "10 bitwise determinism",
            not mismatched,
            "identical metrics.csv for repeated seeded runs of all four modes"
            if not mismatched else f"mismatch in modes {mismatched}",
        )
