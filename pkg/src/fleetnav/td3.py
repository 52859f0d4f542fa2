"""Twin-critic actor training with delayed policy updates and soft targets.

The actor maps the 34-value observation to two raw actions in [-1, 1];
commands are scaled as v = v_max * (a1 + 1) / 2 and omega = omega_max * a2.
Critics run state and action through separate pathways, concatenate, and
regress a scalar Q. Targets blend by tau after every second critic update.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .battery import BatteryParams, BatteryState
from .nets import (
    AdamState,
    DenseNetSpec,
    LayerSpec,
    NumericError,
    ParamSet,
    adam_step,
    backward,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .replay import CategorizedBuffer, Experience
from .sim import DEFAULT_SIM, Action, NavEnv, Observation, SimParams, Terminal, make_episode
from .world import DEFAULT_CURRICULUM, CurriculumLevelSpec

OBS_DIM = 34
ACT_DIM = 2


@dataclass(frozen=True)
class Td3Config:
    gamma: float = 0.99
    tau: float = 0.005
    explore_sigma: float = 0.1      # on the raw [-1, 1] action scale
    smooth_sigma: float = 0.2
    smooth_clip: float = 0.5
    policy_delay: int = 2
    batch_size: int = 64
    learning_rate: float = 1e-3
    warmup_steps: int = 1000        # uniform random actions before the policy acts
    hidden: tuple[int, int] = (256, 128)
    dropout: float = 0.2


def make_actor_spec(
    obs_dim: int = OBS_DIM,
    act_dim: int = ACT_DIM,
    hidden: tuple[int, int] = (256, 128),
    dropout: float = 0.2,
) -> DenseNetSpec:
    layers = []
    prev = obs_dim
    for width in hidden:
        layers.append(LayerSpec(prev, width, True, "relu", dropout))
        prev = width
    layers.append(LayerSpec(prev, act_dim, False, "tanh", 0.0))
    return DenseNetSpec(tuple(layers))


@dataclass(frozen=True)
class CriticSpec:
    state_net: DenseNetSpec
    action_net: DenseNetSpec
    head: DenseNetSpec

    @property
    def param_count(self) -> int:
        return self.state_net.param_count + self.action_net.param_count + self.head.param_count


def make_critic_spec(
    obs_dim: int = OBS_DIM,
    act_dim: int = ACT_DIM,
    hidden: tuple[int, int] = (256, 128),
    action_width: int | None = None,
    dropout: float = 0.2,
) -> CriticSpec:
    if action_width is None:
        action_width = hidden[0]
    state_layers = []
    prev = obs_dim
    for width in hidden:
        state_layers.append(LayerSpec(prev, width, True, "relu", dropout))
        prev = width
    action_net = DenseNetSpec((LayerSpec(act_dim, action_width, True, "relu", dropout),))
    head = DenseNetSpec((LayerSpec(prev + action_width, 1),))
    return CriticSpec(DenseNetSpec(tuple(state_layers)), action_net, head)


def _prefixed(params: ParamSet, prefix: str) -> ParamSet:
    """Sub-dict view sharing the underlying arrays."""
    cut = len(prefix)
    return {k[cut:]: v for k, v in params.items() if k.startswith(prefix)}


def critic_init(spec: CriticSpec, rng) -> ParamSet:
    rng = np.random.default_rng(rng)
    params: ParamSet = {}
    for name, sub in (("state", spec.state_net), ("action", spec.action_net), ("head", spec.head)):
        for k, v in init_params(sub, rng).items():
            params[f"{name}.{k}"] = v
    return params


def critic_forward(spec: CriticSpec, params: ParamSet, s, a, *, training=False, dropout_rng=None):
    hs, cs = forward(spec.state_net, _prefixed(params, "state."), s,
                     training=training, dropout_rng=dropout_rng)
    ha, ca = forward(spec.action_net, _prefixed(params, "action."), a,
                     training=training, dropout_rng=dropout_rng)
    q, ch = forward(spec.head, _prefixed(params, "head."),
                    np.concatenate([hs, ha], axis=-1),
                    training=training, dropout_rng=dropout_rng)
    cache = {"s": cs, "a": ca, "h": ch, "split": hs.shape[-1]}
    return q[..., 0], cache


def critic_backward(spec: CriticSpec, params: ParamSet, cache, dq):
    dq = np.asarray(dq, dtype=float)[..., None]
    dcat, gh = backward(spec.head, _prefixed(params, "head."), cache["h"], dq)
    split = cache["split"]
    ds, gs = backward(spec.state_net, _prefixed(params, "state."), cache["s"], dcat[..., :split])
    da, ga = backward(spec.action_net, _prefixed(params, "action."), cache["a"], dcat[..., split:])
    grads: ParamSet = {}
    for name, sub in (("state", gs), ("action", ga), ("head", gh)):
        for k, v in sub.items():
            grads[f"{name}.{k}"] = v
    return ds, da, grads


def td_target(r, d, gamma, q1_next, q2_next):
    """Bootstrapped target: r + gamma * (1 - d) * min(Q1', Q2').

    Terminal rows (d == 1) reduce exactly to r.
    """
    return np.asarray(r, dtype=float) + gamma * (1.0 - np.asarray(d, dtype=float)) * np.minimum(
        q1_next, q2_next
    )


def raw_to_action(raw, sim: SimParams = DEFAULT_SIM) -> Action:
    """Map raw policy output in [-1, 1]^2 to executable commands."""
    raw = np.clip(np.asarray(raw, dtype=float), -1.0, 1.0)
    return Action(sim.v_max * (raw[0] + 1.0) / 2.0, sim.omega_max * raw[1])


def encode_observation(obs: Observation, sim: SimParams, diagonal: float) -> np.ndarray:
    """Normalize the 34 observation scalars into network-friendly ranges."""
    return np.concatenate([
        obs.lidar30 / sim.max_range,
        [
            obs.d_goal / diagonal,
            obs.theta_goal / math.pi,
            obs.v / sim.v_max,
            obs.omega / sim.omega_max,
        ],
    ])


class Td3Agent:
    """Actor, twin critics, their targets, and the update rules."""

    def __init__(self, cfg: Td3Config = Td3Config(), seed: int = 0,
                 obs_dim: int = OBS_DIM, act_dim: int = ACT_DIM):
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.rng = np.random.default_rng(seed)
        self.actor_spec = make_actor_spec(obs_dim, act_dim, cfg.hidden, cfg.dropout)
        self.critic_spec = make_critic_spec(obs_dim, act_dim, cfg.hidden, dropout=cfg.dropout)
        self.actor = init_params(self.actor_spec, self.rng)
        self.critic1 = critic_init(self.critic_spec, self.rng)
        self.critic2 = critic_init(self.critic_spec, self.rng)
        self.target_actor = {k: v.copy() for k, v in self.actor.items()}
        self.target_critic1 = {k: v.copy() for k, v in self.critic1.items()}
        self.target_critic2 = {k: v.copy() for k, v in self.critic2.items()}
        self.adam_actor = AdamState.for_params(self.actor)
        self.adam_critic1 = AdamState.for_params(self.critic1)
        self.adam_critic2 = AdamState.for_params(self.critic2)
        self.iteration = 0  # critic updates so far

    # --- acting ---

    def policy_raw(self, obs_vec) -> np.ndarray:
        out, _ = forward(self.actor_spec, self.actor, obs_vec)
        return out

    def select_action(self, obs_vec, explore: bool) -> np.ndarray:
        raw = self.policy_raw(obs_vec)
        if explore:
            raw = raw + self.rng.normal(0.0, self.cfg.explore_sigma, size=raw.shape)
        return np.clip(raw, -1.0, 1.0)

    # --- updates ---

    def compute_target(self, batch: dict) -> np.ndarray:
        a_next, _ = forward(self.actor_spec, self.target_actor, batch["s2"])
        noise = np.clip(
            self.rng.normal(0.0, self.cfg.smooth_sigma, size=a_next.shape),
            -self.cfg.smooth_clip,
            self.cfg.smooth_clip,
        )
        a_next = np.clip(a_next + noise, -1.0, 1.0)
        q1, _ = critic_forward(self.critic_spec, self.target_critic1, batch["s2"], a_next)
        q2, _ = critic_forward(self.critic_spec, self.target_critic2, batch["s2"], a_next)
        return td_target(batch["r"], batch["d"], self.cfg.gamma, q1, q2)

    def update_critics(self, batch: dict) -> tuple[float, float]:
        y = self.compute_target(batch)
        losses = []
        for params, adam in ((self.critic1, self.adam_critic1), (self.critic2, self.adam_critic2)):
            q, cache = critic_forward(
                self.critic_spec, params, batch["s"], batch["a"],
                training=True, dropout_rng=self.rng,
            )
            err = q - y
            losses.append(float(np.mean(err ** 2)))
            dq = 2.0 * err / err.size
            _, _, grads = critic_backward(self.critic_spec, params, cache, dq)
            adam_step(params, grads, adam, self.cfg.learning_rate)
        self.iteration += 1
        return losses[0], losses[1]

    def update_actor_and_targets(self, batch: dict) -> float | None:
        """Every ``policy_delay``-th iteration: ascend Q1 and blend targets.

        Returns the actor loss, or None when the update is skipped.
        """
        if self.iteration % self.cfg.policy_delay != 0:
            return None
        a_pi, cache_a = forward(
            self.actor_spec, self.actor, batch["s"], training=True, dropout_rng=self.rng
        )
        q1, cache_q = critic_forward(
            self.critic_spec, self.critic1, batch["s"], a_pi,
            training=True, dropout_rng=self.rng,
        )
        loss = -float(np.mean(q1))
        dq = np.full(q1.shape, -1.0 / q1.size)
        _, da, _ = critic_backward(self.critic_spec, self.critic1, cache_q, dq)
        _, grads = backward(self.actor_spec, self.actor, cache_a, da)
        adam_step(self.actor, grads, self.adam_actor, self.cfg.learning_rate)
        self.soft_update_targets()
        return loss

    def soft_update_targets(self, tau: float | None = None) -> None:
        if tau is None:
            tau = self.cfg.tau
        for live, target in (
            (self.actor, self.target_actor),
            (self.critic1, self.target_critic1),
            (self.critic2, self.target_critic2),
        ):
            for k in live:
                target[k] *= 1.0 - tau
                target[k] += tau * live[k]

    # --- persistence ---

    _NETS = ("actor", "critic1", "critic2", "target_actor", "target_critic1", "target_critic2")

    def save(self, path, extra_manifest: dict | None = None) -> None:
        arrays: ParamSet = {}
        for net in self._NETS:
            for k, v in getattr(self, net).items():
                arrays[f"{net}.{k}"] = v
        for net, adam in (("actor", self.adam_actor), ("critic1", self.adam_critic1),
                          ("critic2", self.adam_critic2)):
            for k, v in adam.m.items():
                arrays[f"adam_m.{net}.{k}"] = v
            for k, v in adam.v.items():
                arrays[f"adam_v.{net}.{k}"] = v
        manifest = {
            "kind": "td3",
            "cfg": asdict(self.cfg),
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "iteration": self.iteration,
            "adam_t": {
                "actor": self.adam_actor.t,
                "critic1": self.adam_critic1.t,
                "critic2": self.adam_critic2.t,
            },
        }
        if extra_manifest:
            manifest.update(extra_manifest)
        save_checkpoint(path, manifest, arrays)

    @classmethod
    def load(cls, path) -> "Td3Agent":
        manifest, arrays = load_checkpoint(path)
        if manifest.get("kind") != "td3":
            raise ValueError(f"not a policy checkpoint: {path}")
        raw_cfg = dict(manifest["cfg"])
        raw_cfg["hidden"] = tuple(raw_cfg["hidden"])
        agent = cls(Td3Config(**raw_cfg), seed=0,
                    obs_dim=manifest["obs_dim"], act_dim=manifest["act_dim"])
        for net in cls._NETS:
            target = getattr(agent, net)
            for k in target:
                target[k][...] = arrays[f"{net}.{k}"]
        for net, adam in (("actor", agent.adam_actor), ("critic1", agent.adam_critic1),
                          ("critic2", agent.adam_critic2)):
            for k in adam.m:
                adam.m[k][...] = arrays[f"adam_m.{net}.{k}"]
                adam.v[k][...] = arrays[f"adam_v.{net}.{k}"]
            adam.t = manifest["adam_t"][net]
        agent.iteration = manifest["iteration"]
        return agent


@dataclass(frozen=True)
class ParamCountReport:
    refined_actor: int
    baseline_actor: int
    refined_critic: int
    baseline_critic: int

    @property
    def actor_ratio(self) -> float:
        return self.refined_actor / self.baseline_actor

    @property
    def total_ratio(self) -> float:
        refined = self.refined_actor + 2 * self.refined_critic
        baseline = self.baseline_actor + 2 * self.baseline_critic
        return refined / baseline


def count_parameters(
    hidden: tuple[int, int] = (256, 128),
    baseline_hidden: tuple[int, int] = (800, 600),
    obs_dim: int = OBS_DIM,
    act_dim: int = ACT_DIM,
) -> ParamCountReport:
    """Exact parameter totals for the compact and wide network shapes."""
    return ParamCountReport(
        refined_actor=make_actor_spec(obs_dim, act_dim, hidden).param_count,
        baseline_actor=make_actor_spec(obs_dim, act_dim, baseline_hidden).param_count,
        refined_critic=make_critic_spec(obs_dim, act_dim, hidden).param_count,
        baseline_critic=make_critic_spec(obs_dim, act_dim, baseline_hidden).param_count,
    )


# --- training loop ---


@dataclass
class EpisodeRecord:
    episode: int
    level: int
    steps: int
    ret: float
    outcome: str
    size_pos: int
    size_neu: int
    size_neg: int
    critic1_loss: float
    critic2_loss: float
    actor_loss: float
    battery_drained: float
    success_rate_100: float


METRICS_COLUMNS = (
    "episode", "level", "steps", "return", "outcome",
    "size_pos", "size_neu", "size_neg",
    "critic1_loss", "critic2_loss", "actor_loss",
    "battery_drained", "success_rate_100",
)


def write_metrics_csv(path, records: list[EpisodeRecord]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for r in records:
            writer.writerow([
                r.episode, r.level, r.steps, repr(r.ret), r.outcome,
                r.size_pos, r.size_neu, r.size_neg,
                repr(r.critic1_loss), repr(r.critic2_loss), repr(r.actor_loss),
                repr(r.battery_drained), repr(r.success_rate_100),
            ])


@dataclass
class TrainRtd3Result:
    agent: Td3Agent
    metrics: list[EpisodeRecord]
    checkpoint_path: Path | None
    elapsed_s: float

    def trailing_success(self, window: int = 100) -> float:
        tail = self.metrics[-window:]
        if not tail:
            return 0.0
        return sum(1 for r in tail if r.outcome == Terminal.GOAL_REACHED.value) / len(tail)


def episode_seed(master_seed: int, episode: int) -> int:
    return (master_seed * 1_000_003 + episode) % (2 ** 63)


def train_rtd3(
    *,
    episodes: int,
    seed: int,
    levels: tuple[CurriculumLevelSpec, ...] = DEFAULT_CURRICULUM,
    td3_cfg: Td3Config = Td3Config(),
    sim: SimParams = DEFAULT_SIM,
    battery_params: BatteryParams = BatteryParams(),
    rcrb_capacity: int = 100_000,
    rcrb_positive_min: float = 100.0,
    rcrb_negative_max: float = -50.0,
    out_dir=None,
    checkpoint_interval: int = 100,
    progress=None,
) -> TrainRtd3Result:
    """Episode loop: roll out, store categorized transitions, update per step.

    Deterministic given (seed, config): two runs produce identical metrics.
    The curriculum advances when the trailing-100 success rate at the
    current level reaches its threshold and a harder level exists.
    """
    start = time.perf_counter()
    agent = Td3Agent(td3_cfg, seed=seed)
    buffer = CategorizedBuffer(rcrb_capacity, rcrb_positive_min, rcrb_negative_max)
    out_dir = Path(out_dir) if out_dir is not None else None
    checkpoint_path = out_dir / "checkpoint.npz" if out_dir else None
    if checkpoint_path:
        agent.save(checkpoint_path, {"episodes_done": 0, "seed": seed})

    records: list[EpisodeRecord] = []
    level_idx = 0
    window: list[bool] = []
    global_step = 0

    def flush(episodes_done: int) -> None:
        if checkpoint_path:
            agent.save(checkpoint_path, {"episodes_done": episodes_done, "seed": seed})
        if out_dir:
            write_metrics_csv(out_dir / "metrics.csv", records)

    for episode in range(episodes):
        level = levels[level_idx]
        env = make_episode(level, episode_seed(seed, episode), sim)
        diag = env.world.diagonal
        obs = env.observe()
        s_vec = encode_observation(obs, sim, diag)
        battery = BatteryState(battery_params)
        ret = 0.0
        losses1: list[float] = []
        losses2: list[float] = []
        losses_a: list[float] = []
        outcome = Terminal.CONTINUE

        while not env.done:
            if global_step < td3_cfg.warmup_steps:
                raw = agent.rng.uniform(-1.0, 1.0, size=ACT_DIM)
            else:
                raw = agent.select_action(s_vec, explore=True)
            action = raw_to_action(raw, sim)
            obs2, step_out = env.step(action)
            s2_vec = encode_observation(obs2, sim, diag)
            done_flag = step_out.terminal is not Terminal.CONTINUE
            buffer.push(Experience(s_vec, np.asarray(raw, dtype=float),
                                   step_out.reward, s2_vec, done_flag))
            battery = battery.consume(action.v_cmd, action.omega_cmd, sim.dt)
            ret += step_out.reward
            global_step += 1
            outcome = step_out.terminal

            if len(buffer) >= td3_cfg.batch_size:
                try:
                    batch = batch_from_experiences(
                        buffer.sample(td3_cfg.batch_size, agent.rng))
                    l1, l2 = agent.update_critics(batch)
                    la = agent.update_actor_and_targets(batch)
                except NumericError:
                    flush(episode)
                    raise
                losses1.append(l1)
                losses2.append(l2)
                if la is not None:
                    losses_a.append(la)
            s_vec = s2_vec

        success = outcome is Terminal.GOAL_REACHED
        window.append(success)
        if len(window) > 100:
            window.pop(0)
        rate = sum(window) / len(window)
        records.append(EpisodeRecord(
            episode=episode,
            level=level.level,
            steps=env.steps,
            ret=ret,
            outcome=outcome.value,
            size_pos=buffer.sizes()[0],
            size_neu=buffer.sizes()[1],
            size_neg=buffer.sizes()[2],
            critic1_loss=float(np.mean(losses1)) if losses1 else float("nan"),
            critic2_loss=float(np.mean(losses2)) if losses2 else float("nan"),
            actor_loss=float(np.mean(losses_a)) if losses_a else float("nan"),
            battery_drained=battery.drained_units,
            success_rate_100=rate,
        ))
        if progress:
            progress(records[-1])

        if (
            len(window) >= 100
            and rate >= level.advance_threshold
            and level_idx + 1 < len(levels)
        ):
            level_idx += 1
            window.clear()

        if checkpoint_path and (episode + 1) % checkpoint_interval == 0:
            flush(episode + 1)

    flush(episodes)
    return TrainRtd3Result(agent, records, checkpoint_path, time.perf_counter() - start)


def batch_from_experiences(experiences: list[Experience]) -> dict:
    return {
        "s": np.stack([e.s for e in experiences]),
        "a": np.stack([e.a for e in experiences]),
        "r": np.array([e.r for e in experiences], dtype=float),
        "s2": np.stack([e.s_next for e in experiences]),
        "d": np.array([float(e.done) for e in experiences]),
    }
