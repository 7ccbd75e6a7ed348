"""Training orchestration: the per-step learning loop, model refits, optional
trajectory-optimized exploration, imagination rollouts, evaluation, and the
deterministic metrics/artifact outputs."""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import approximator as ap
from .dynamics import fit_local_linear, one_step_error, save_model, simulate
from .envs import Env, make_env
from .errors import IllConditioned, NonFiniteState, ToolkitError, TrainingError
from .exploration import NoiseConfig, NoiseSource, behavior_action
from .ilqg import ILQGController, ilqg_one_step, save_controller
from .naf import HyperParams, NafNetwork, greedy_action, learn_step
from .numerics import make_streams
from .replay import ReplayBuffer, Transition, episodes_view, swap_batch, write_csv

MODES = ("naf", "naf-ilqg", "naf-imr", "naf-ilqg-imr")
BEHAVIOR_LEARNED = "learned"
BEHAVIOR_ILQG = "ilqg"


@dataclass
class TrainSettings:
    """Fully resolved knobs for one training run."""

    env_name: str = "pointmass"
    env_dt: float = 0.0
    env_horizon: int = 0
    env_init_std: float = -1.0
    env_noise_std: float = 0.0
    mode: str = "naf"
    episodes: int = 200
    seed: int = 0
    hidden: tuple = (200, 200)
    hp: HyperParams = field(default_factory=HyperParams)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    trigger_period: int = 0  # 0 = once per episode (at the horizon boundary)
    rollout_seeds: int = 8
    replay_capacity: int = 1_000_000
    rf_capacity: int = 100_000
    clear_rf_on_refit: bool = False
    eval_interval: int = 5
    eval_episodes: int = 10
    stop_return: float = float("nan")
    dump_transitions: bool = False
    dump_model: bool = False

    @property
    def uses_ilqg(self) -> bool:
        return "ilqg" in self.mode

    @property
    def uses_imagination(self) -> bool:
        return self.mode.endswith("imr")


@dataclass
class MetricsRow:
    """One evaluation-cadence record; every field is run-deterministic."""

    episode: int
    env_steps: int
    eval_return: float
    bellman_loss: float
    model_error: float
    behavior_policy: str

    def to_csv(self) -> str:
        return ",".join(
            [
                str(self.episode),
                str(self.env_steps),
                repr(float(self.eval_return)),
                repr(float(self.bellman_loss)),
                repr(float(self.model_error)),
                self.behavior_policy,
            ]
        )


METRICS_HEADER = "episode,env_steps,eval_return,bellman_loss,model_error,behavior_policy"


@dataclass
class TrainResult:
    episodes_run: int
    env_steps: int
    final_eval_return: float
    metrics: list
    update_counts: list
    behavior_tags: list
    stopped_early: bool
    wall_time_s: float
    paths: dict


def imagination_active(settings: TrainSettings, episode: int) -> bool:
    """Whether fictional rollouts and updates run during this 1-based episode.

    A nonnegative switch-off episode disables imagination permanently after
    that episode; negative means never switch off.
    """
    if not settings.uses_imagination:
        return False
    off = settings.hp.switch_off_episode
    return off < 0 or episode <= off


def select_behavior_policy(p: float, rng: np.random.Generator) -> str:
    """Draw the episode's behavior policy: learned with probability p."""
    return BEHAVIOR_LEARNED if rng.random() < p else BEHAVIOR_ILQG


def evaluate(env: Env, net: NafNetwork, rng: np.random.Generator,
             n_episodes: int) -> tuple[float, float]:
    """Mean and std of undiscounted returns under the greedy policy."""
    returns = np.empty(n_episodes)
    for i in range(n_episodes):
        x = env.reset(rng)
        total = 0.0
        for _ in range(env.spec.horizon):
            heads = net.heads(env.observe(x))
            u = env.clip_action(greedy_action(heads))
            x, r = env.step(x, u)
            total += r
        returns[i] = total
    return float(returns.mean()), float(returns.std())


def _imagination_rollouts(settings, env, model, b_old, net, rf, rng):
    """Seed short synthetic rollouts from stale real states into the fictional buffer.

    Rollouts that leave the model's trust region (non-finite or exploding
    states) are cut short rather than poisoning the buffer.
    """
    horizon = env.spec.horizon
    seeds = b_old.sample(settings.rollout_seeds, rng)
    sigma = settings.hp.sigma
    for i in range(len(seeds)):
        x = seeds.x[i]
        t = int(seeds.t[i])
        for _ in range(settings.hp.rollout_length):
            heads = net.heads(env.observe(x))
            u = env.clip_action(
                greedy_action(heads) + sigma * rng.standard_normal(env.spec.action_dim)
            )
            x_next = simulate(model, x, u, t, rng)
            if not np.all(np.isfinite(x_next)) or np.max(np.abs(x_next)) > 1e6:
                break
            r = env.reward(x, u)
            rf.push(Transition(x=x, u=u, r=r, x_next=x_next, t=t))
            x = x_next
            t = min(t + 1, horizon)


def train(settings: TrainSettings, out_dir=None, config_echo: str | None = None) -> TrainResult:
    """Run one training job; returns metrics and (optionally) writes artifacts.

    All randomness flows from settings.seed through named substreams, so two
    runs with identical settings produce byte-identical metrics files.
    """
    if settings.mode not in MODES:
        raise ValueError(f"unknown mode '{settings.mode}', expected one of {MODES}")
    t_start = time.monotonic()
    streams = make_streams(settings.seed)
    env = make_env(
        settings.env_name,
        dt=settings.env_dt,
        horizon=settings.env_horizon,
        init_std=settings.env_init_std,
        noise_std=settings.env_noise_std,
    )
    spec = env.spec
    horizon = spec.horizon
    hp = settings.hp
    hp.horizon = horizon
    hp.episodes = settings.episodes

    net = NafNetwork.create(spec.obs_dim, spec.action_dim, settings.hidden, streams["params"])
    target = net.clone()
    adam = ap.AdamState(lr=hp.lr)
    noise_src = NoiseSource(spec.action_dim, settings.noise)

    replay = ReplayBuffer(settings.replay_capacity, spec.state_dim, spec.action_dim)
    rf = ReplayBuffer(settings.rf_capacity, spec.state_dim, spec.action_dim)
    fit_buf = ReplayBuffer(hp.refit_interval * horizon, spec.state_dim, spec.action_dim)
    stale_buf = ReplayBuffer(hp.refit_interval * horizon, spec.state_dim, spec.action_dim)

    model = None
    controller: ILQGController | None = None
    trigger = settings.trigger_period if settings.trigger_period > 0 else horizon
    observe = env.observe
    env_rng = streams["env"] if settings.env_noise_std > 0 else None

    metrics: list[MetricsRow] = []
    update_counts: list[int] = []
    behavior_tags: list[str] = []
    global_step = 0
    loss_sum = 0.0
    loss_n = 0
    model_err = float("nan")
    last_eval = float("nan")
    stopped = False

    for ep in range(1, settings.episodes + 1):
        if settings.uses_ilqg:
            tag = select_behavior_policy(hp.mix_p, streams["mix"])
            if controller is None:
                tag = BEHAVIOR_LEARNED
        else:
            tag = BEHAVIOR_LEARNED
        behavior_tags.append(tag)
        imagine = imagination_active(settings, ep)
        x = env.reset(streams["env"])
        noise_src.reset()
        ep_updates = 0
        for t in range(1, horizon + 1):
            try:
                heads = net.heads(observe(x))
                if tag == BEHAVIOR_ILQG:
                    base = controller.act(x, t, streams["explore"])
                else:
                    base = greedy_action(heads)
                noise_vec = noise_src.sample(streams["explore"], heads, global_step)
                u = behavior_action(base, noise_vec, spec.action_low, spec.action_high)
                x_next, r = env.step(x, u, env_rng)
                tr = Transition(x=x, u=u, r=r, x_next=x_next, t=t)
                replay.push(tr)
                fit_buf.push(tr)
                x = x_next
                global_step += 1

                if imagine and model is not None and len(stale_buf) > 0 \
                        and global_step % trigger == 0:
                    _imagination_rollouts(settings, env, model, stale_buf, net, rf,
                                          streams["model"])

                if len(replay) >= hp.batch_size:
                    if imagine and len(rf) >= hp.batch_size:
                        n_fict = hp.updates_per_step * hp.rollout_length
                        loss_sum += learn_step(rf, net, target, adam, hp,
                                               streams["sample"], observe,
                                               n_updates=n_fict) * n_fict
                        loss_n += n_fict
                        ep_updates += n_fict
                    loss_sum += learn_step(replay, net, target, adam, hp,
                                           streams["sample"], observe) * hp.updates_per_step
                    loss_n += hp.updates_per_step
                    ep_updates += hp.updates_per_step
            except ToolkitError as err:
                raise TrainingError(f"episode {ep} step {t}: {err}") from err
        update_counts.append(ep_updates)

        # Refit cadence: the fitting buffer holds exactly refit_interval episodes.
        # Skip refits that can no longer influence anything (imagination off for
        # good and no trajectory optimizer in the mode).
        if fit_buf.full:
            model_matters = settings.uses_ilqg or imagination_active(settings, ep + 1)
            if model_matters:
                try:
                    eps = episodes_view(fit_buf, horizon)
                    model = fit_local_linear(eps)
                    model_err = one_step_error(model, eps)
                    if settings.uses_ilqg:
                        try:
                            controller = ilqg_one_step(
                                eps, model, env.reward_expansion, hp.temperature
                            )
                        except (IllConditioned, NonFiniteState):
                            pass  # keep the previous controller
                    swap_batch(fit_buf, stale_buf)
                    if settings.clear_rf_on_refit:
                        rf.clear()
                except ToolkitError as err:
                    raise TrainingError(f"episode {ep} refit: {err}") from err
            else:
                fit_buf.clear()

        if ep % settings.eval_interval == 0 or ep == settings.episodes:
            last_eval, _ = evaluate(env, net, streams["eval"], settings.eval_episodes)
            mean_loss = loss_sum / loss_n if loss_n else float("nan")
            metrics.append(
                MetricsRow(
                    episode=ep,
                    env_steps=global_step,
                    eval_return=last_eval,
                    bellman_loss=mean_loss,
                    model_error=model_err,
                    behavior_policy=tag,
                )
            )
            loss_sum, loss_n = 0.0, 0
            if np.isfinite(settings.stop_return) and last_eval >= settings.stop_return:
                stopped = True
                break

    wall = time.monotonic() - t_start
    paths = {}
    if out_dir is not None:
        import os

        os.makedirs(out_dir, exist_ok=True)
        paths["metrics"] = os.path.join(out_dir, "metrics.csv")
        write_metrics(paths["metrics"], metrics)
        paths["checkpoint"] = os.path.join(out_dir, "checkpoint.txt")
        ap.save_checkpoint(paths["checkpoint"], net.arch, net.params, settings.env_name)
        if config_echo is not None:
            paths["config"] = os.path.join(out_dir, "config.txt")
            with open(paths["config"], "w") as fh:
                fh.write(config_echo)
        if settings.dump_transitions:
            paths["transitions"] = os.path.join(out_dir, "transitions.csv")
            write_csv(replay, paths["transitions"])
        if settings.dump_model and model is not None:
            paths["model"] = os.path.join(out_dir, "model.txt")
            save_model(paths["model"], model)
            if controller is not None:
                paths["controller"] = os.path.join(out_dir, "controller.txt")
                save_controller(os.path.join(out_dir, "controller.txt"), controller)
        paths["summary"] = os.path.join(out_dir, "summary.json")
        with open(paths["summary"], "w") as fh:
            json.dump(
                {
                    "episodes_run": len(update_counts),
                    "env_steps": global_step,
                    "final_eval_return": last_eval,
                    "stopped_early": stopped,
                    "wall_time_s": wall,
                },
                fh,
                indent=2,
            )
            fh.write("\n")

    return TrainResult(
        episodes_run=len(update_counts),
        env_steps=global_step,
        final_eval_return=last_eval,
        metrics=metrics,
        update_counts=update_counts,
        behavior_tags=behavior_tags,
        stopped_early=stopped,
        wall_time_s=wall,
        paths=paths,
    )


def write_metrics(path, rows: list[MetricsRow]) -> None:
    with open(path, "w") as fh:
        fh.write(METRICS_HEADER + "\n")
        for row in rows:
            fh.write(row.to_csv() + "\n")


def evaluate_checkpoint(path, n_episodes: int, seed: int) -> tuple[float, float]:
    """Load a checkpoint and run greedy evaluation episodes on its env."""
    arch, params, env_name = ap.load_checkpoint(path)
    env = make_env(env_name)
    net = NafNetwork(arch=arch, params=params)
    rng = make_streams(seed)["eval"]
    return evaluate(env, net, rng, n_episodes)
