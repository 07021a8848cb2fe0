"""Risk-return actor-critic training loop.

One update cycle: sample a batch of stored transitions, regress the
critic's quantiles onto distributional Bellman targets built from the
target networks, then push the actor up the gradient of the risk-return
utility evaluated through the frozen online critic (the weight
transform sits inside the differentiated path). Target networks blend
toward the online ones every `t_target` updates; the acting copy of the
actor refreshes every `t_actor` updates. Exploration adds clipped
Gaussian noise to the raw actor scores with an exponentially decaying
scale.

Transitions come from an inline acting loop here (one environment step
per update) or from concurrent actor workers (see runtime).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backtest
from .actions import action_to_weights
from .autodiff import backward, no_grad, softmax as softmax_op
from .config import RunConfig
from .data import (
    MarketData,
    N_FEATURES,
    State,
    state_to_actor_input,
    state_to_critic_input,
)
from .distribution import RiskConfig, bellman_target, quantile_huber_loss, utility
from .nn import ActorNetwork, Adam, CriticNetwork, save_checkpoint, soft_update
from .portfolio import PortfolioEnv, Transition

LOG_HEADER = ("update", "criticLoss", "meanUtility", "evalTR", "evalVaR", "sigma")


@dataclass(frozen=True)
class ExplorationSchedule:
    sigma0: float = 0.2
    decay: float = 0.9999
    clip: float = 0.5

    def __post_init__(self):
        if self.sigma0 < 0.0 or not 0.0 < self.decay <= 1.0 or self.clip <= 0.0:
            raise ValueError("invalid exploration schedule")

    def sigma(self, t: int) -> float:
        return self.sigma0 * self.decay ** t


class ReplayBuffer:
    """Fixed-capacity ring of transitions; oldest entries evict first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0
        self.total_pushed = 0

    def push(self, tr: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(tr)
        else:
            self._items[self._next] = tr
        self._next = (self._next + 1) % self.capacity
        self.total_pushed += 1

    def __len__(self) -> int:
        return len(self._items)

    def sample(self, rng: np.random.Generator, m: int) -> list[Transition]:
        if m > len(self._items):
            raise ValueError(f"cannot sample {m} from {len(self._items)} transitions")
        idx = rng.choice(len(self._items), size=m, replace=False)
        return [self._items[i] for i in idx]

    def snapshot(self) -> list[Transition]:
        return list(self._items)


def select_action(
    actor: ActorNetwork,
    state: State,
    schedule: ExplorationSchedule | None,
    t: int,
    rng: np.random.Generator | None,
) -> np.ndarray:
    """Raw actor scores, plus clipped Gaussian exploration noise if scheduled."""
    with no_grad():
        raw = actor.forward(state_to_actor_input(state)[None]).data[0].copy()
    if schedule is None or rng is None:
        return raw
    sigma = schedule.sigma(t)
    if sigma <= 0.0:
        return raw
    eps = np.clip(rng.normal(0.0, sigma, raw.shape), -schedule.clip, schedule.clip)
    return raw + eps


@dataclass
class LearnerState:
    actor: ActorNetwork
    critic: CriticNetwork
    target_actor: ActorNetwork
    target_critic: CriticNetwork
    adam_actor: Adam
    adam_critic: Adam
    updates: int = 0


def create_learner(cfg: RunConfig, n_assets: int, rng: np.random.Generator) -> LearnerState:
    actor_in = n_assets * N_FEATURES
    critic_in = actor_in + n_assets + 1
    actor = ActorNetwork.create(rng, actor_in, cfg.hidden_size, cfg.gru_layers, n_assets)
    critic = CriticNetwork.create(rng, critic_in, cfg.hidden_size, cfg.gru_layers,
                                  n_assets, cfg.n_quantiles)
    return LearnerState(
        actor=actor,
        critic=critic,
        target_actor=actor.clone(requires_grad=False),
        target_critic=critic.clone(requires_grad=False),
        adam_actor=Adam(actor.param_tensors(), cfg.learning_rate),
        adam_critic=Adam(critic.param_tensors(), cfg.learning_rate),
    )


def _actor_input(state: State) -> np.ndarray:
    # Replay resamples each transition many times; cache the pure encoding
    # on the (immutable) state object.
    cached = state.__dict__.get("_actor_enc")
    if cached is None:
        cached = state_to_actor_input(state)
        object.__setattr__(state, "_actor_enc", cached)
    return cached


def _critic_input(state: State, horizon: int) -> np.ndarray:
    cached = state.__dict__.get("_critic_enc")
    if cached is None or cached[0] != horizon:
        cached = (horizon, state_to_critic_input(state, horizon))
        object.__setattr__(state, "_critic_enc", cached)
    return cached[1]


def _batch_arrays(batch: list[Transition], horizon: int):
    actor_in = np.stack([_actor_input(tr.state) for tr in batch])
    critic_in = np.stack([_critic_input(tr.state, horizon) for tr in batch])
    next_actor_in = np.stack([_actor_input(tr.next_state) for tr in batch])
    next_critic_in = np.stack([_critic_input(tr.next_state, horizon) for tr in batch])
    actions = np.stack([tr.action for tr in batch])
    rewards = np.array([tr.reward for tr in batch])[:, None]
    alive = np.array([0.0 if tr.terminal else 1.0 for tr in batch])[:, None]
    return actor_in, critic_in, next_actor_in, next_critic_in, actions, rewards, alive


def critic_update(ls: LearnerState, batch: list[Transition], cfg: RiskConfig,
                  delta: float, horizon: int) -> float:
    """One ADAM step on the critic against Bellman quantile targets."""
    (_, critic_in, next_actor_in, next_critic_in,
     actions, rewards, alive) = _batch_arrays(batch, horizon)
    with no_grad():
        next_raw = ls.target_actor.forward(next_actor_in).data
        next_actions = action_to_weights(next_raw, delta)
        theta_next = ls.target_critic.forward(next_critic_in, next_actions).data
    targets = bellman_target(rewards, cfg.gamma, alive * theta_next)

    ls.critic.zero_grad()
    theta = ls.critic.forward(critic_in, actions)
    loss = quantile_huber_loss(theta, targets, cfg.kappa)
    backward(loss)
    ls.adam_critic.step()
    return loss.item()


def actor_update(ls: LearnerState, batch: list[Transition], cfg: RiskConfig,
                 delta: float, horizon: int) -> float:
    """One ADAM ascent step on the actor's risk-return utility."""
    actor_in, critic_in, *_ = _batch_arrays(batch, horizon)
    n = ls.actor.n_assets
    ls.actor.zero_grad()
    ls.critic.set_requires_grad(False)
    try:
        raw = ls.actor.forward(actor_in)
        weights = softmax_op(raw) * delta + (-(delta - 1.0) / n)
        theta = ls.critic.forward(critic_in, weights)
        value = utility(theta, cfg)
        backward(-value)
        ls.adam_actor.step()
    finally:
        ls.critic.set_requires_grad(True)
    return value.item()


def sync_targets(ls: LearnerState, tau: float) -> None:
    soft_update(ls.target_actor, ls.actor, tau)
    soft_update(ls.target_critic, ls.critic, tau)


@dataclass
class TrainResult:
    learner: LearnerState
    log_rows: list[tuple]
    transitions_seen: int
    checkpoints: list[str] = field(default_factory=list)


class InlineActor:
    """Single-process acting loop feeding the replay buffer."""

    def __init__(self, env: PortfolioEnv, actor: ActorNetwork,
                 schedule: ExplorationSchedule, delta: float,
                 episode_rng: np.random.Generator, noise_rng: np.random.Generator):
        self.env = env
        self.actor = actor
        self.schedule = schedule
        self.delta = delta
        self.episode_rng = episode_rng
        self.noise_rng = noise_rng
        self.state: State | None = None

    def _new_episode(self) -> None:
        start = int(self.episode_rng.integers(self.env.min_start(), self.env.max_start() + 1))
        self.state = self.env.reset(start)

    def step(self, update_count: int) -> Transition:
        if self.state is None:
            self._new_episode()
        raw = select_action(self.actor, self.state, self.schedule, update_count, self.noise_rng)
        weights = action_to_weights(raw, self.delta)
        transition, done, _ = self.env.step(weights)
        self.state = None if done else transition.next_state
        return transition


def risk_config(cfg: RunConfig) -> RiskConfig:
    return RiskConfig(alpha=cfg.alpha, zeta=cfg.zeta, kappa=cfg.kappa, gamma=cfg.gamma)


def train(
    cfg: RunConfig,
    train_market: MarketData,
    eval_market: MarketData | None = None,
    out_dir=None,
) -> TrainResult:
    """Run the full single-process training loop.

    Per update: one inline environment step, one critic update, one
    actor update, periodic target sync / actor replication / evaluation
    episode. Identical seeds produce identical logs and checkpoints.
    """
    ss = np.random.SeedSequence(cfg.seed)
    init_rng, episode_rng, noise_rng, replay_rng = (
        np.random.default_rng(s) for s in ss.spawn(4))

    ls = create_learner(cfg, train_market.n_assets, init_rng)
    rcfg = risk_config(cfg)
    schedule = ExplorationSchedule(cfg.sigma0, cfg.noise_decay, cfg.noise_clip)
    replay = ReplayBuffer(cfg.replay_capacity)
    env = PortfolioEnv(train_market, cfg.window, cfg.episode_horizon,
                       cfg.sell_cost, cfg.buy_cost, cfg.initial_money)
    acting_actor = ls.actor.clone(requires_grad=False)
    inline = InlineActor(env, acting_actor, schedule, cfg.delta, episode_rng, noise_rng)

    result = TrainResult(ls, [], 0)
    if cfg.updates == 0:
        _finalize(cfg, ls, result, out_dir)
        return result

    warmup = max(cfg.batch_size, min(cfg.replay_warmup, cfg.replay_capacity))
    while len(replay) < warmup:
        replay.push(inline.step(0))
        result.transitions_seen += 1

    for t in range(1, cfg.updates + 1):
        replay.push(inline.step(t))
        result.transitions_seen += 1
        batch = replay.sample(replay_rng, cfg.batch_size)
        closs = critic_update(ls, batch, rcfg, cfg.delta, cfg.episode_horizon)
        util = actor_update(ls, batch, rcfg, cfg.delta, cfg.episode_horizon)
        ls.updates = t
        if t % cfg.t_target == 0:
            sync_targets(ls, cfg.tau)
        if t % cfg.t_actor == 0:
            acting_actor.load_arrays(ls.actor.export_arrays())

        eval_tr = eval_var = ""
        if eval_market is not None and cfg.eval_interval > 0 and t % cfg.eval_interval == 0:
            eval_tr, eval_var = evaluate_policy(ls.actor, eval_market, cfg)
        result.log_rows.append((t, closs, util, eval_tr, eval_var, schedule.sigma(t)))

        if out_dir is not None and cfg.checkpoint_interval > 0 and t % cfg.checkpoint_interval == 0:
            result.checkpoints.append(_write_checkpoint(out_dir, ls, t))

    _finalize(cfg, ls, result, out_dir)
    return result


def evaluate_policy(actor: ActorNetwork, market: MarketData, cfg: RunConfig) -> tuple[float, float]:
    """Deterministic evaluation episode; returns (total return, VaR)."""
    strategy = backtest.policy_strategy(actor, cfg.delta)
    curve = backtest.run_strategy(strategy, market, cfg)
    report = backtest.metrics(curve, cfg.risk_free_rate, cfg.alpha)
    return report.total_return, report.value_at_risk


def network_arrays(ls: LearnerState) -> dict[str, np.ndarray]:
    arrays = dict(ls.actor.export_arrays())
    arrays.update(ls.critic.export_arrays())
    return arrays


def _write_checkpoint(out_dir, ls: LearnerState, t) -> str:
    path = f"{out_dir}/checkpoint_{t}"
    save_checkpoint(path, network_arrays(ls))
    return path


def _finalize(cfg: RunConfig, ls: LearnerState, result: TrainResult, out_dir) -> None:
    if out_dir is None:
        return
    result.checkpoints.append(_write_checkpoint(out_dir, ls, "final"))
    write_training_log(f"{out_dir}/training_log.csv", result.log_rows)


def write_training_log(path, rows: list[tuple]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(LOG_HEADER) + "\n")
        for row in rows:
            fh.write(",".join("" if v == "" else repr(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")
