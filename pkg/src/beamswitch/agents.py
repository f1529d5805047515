"""Decision policies and the online training loops.

Four policies drive the environment: the full-CSI Greedy oracle, per-user
UCB1 bandits, and two Dueling Double DQN agents with prioritized replay
that share every hyperparameter and differ only in the reward written to
their transitions (stability-aware vs plain SNR utility).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .bandit import UcbState, bandit_reward
from .env import Environment, f_snr
from .metrics import MetricAccumulator, RunSummary, summarize
from .neural import Adam, DuelingQNetwork, copy_parameters
from .replay import PriorityBuffer, Transition

TRAIN_LOG_COLUMNS = ("step", "epsilon", "loss", "mean_reward", "buffer_size", "n_switches")


@dataclass(frozen=True)
class DqnAgentConfig:
    gamma: float = 0.99
    batch_size: int = 512
    target_sync_period: int = 100
    epsilon_start: float = 0.7
    epsilon_floor: float = 0.05
    epsilon_decay: float = 0.9997
    reward_variant: str = "stability-aware"
    learning_rate: float = 3e-4
    buffer_capacity: int = 100_000
    per_alpha: float = 0.6
    per_beta_start: float = 0.4
    per_beta_end: float = 1.0
    epsilon_priority: float = 0.01
    hidden: tuple[int, ...] = (512, 512, 256)
    dropout_rate: float = 0.15

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.epsilon_floor <= self.epsilon_start <= 1.0:
            raise ValueError("need 0 <= epsilon_floor <= epsilon_start <= 1")
        if self.reward_variant not in ("stability-aware", "vanilla"):
            raise ValueError(f"unknown reward variant {self.reward_variant!r}")


def greedy_actions(snr_table: np.ndarray) -> np.ndarray:
    """Row-wise argmax of the full-CSI SNR table; ties to the lowest index."""
    return np.argmax(snr_table, axis=1)


def dqn_select_actions(
    net: DuelingQNetwork,
    observations: np.ndarray,
    epsilon: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Epsilon-greedy over eval-mode Q values, independently per user."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    q = net.forward(observations, mode="eval")
    greedy = np.argmax(q, axis=1)
    k = observations.shape[0]
    explore = rng.random(k) < epsilon
    random_actions = rng.integers(0, net.n_actions, size=k)
    return np.where(explore, random_actions, greedy)


def double_dqn_targets(
    online: DuelingQNetwork,
    target: DuelingQNetwork,
    batch_rewards: np.ndarray,
    batch_next_states: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """y = r + gamma * Q_target(s', argmax_a Q_online(s', a))."""
    if online.architecture != target.architecture:
        raise ValueError("online/target architecture mismatch")
    a_star = np.argmax(online.forward(batch_next_states, mode="eval"), axis=1)
    q_next = target.forward(batch_next_states, mode="eval")
    return np.asarray(batch_rewards, dtype=np.float64) + gamma * q_next[np.arange(len(a_star)), a_star]


class DqnAgent:
    """Dueling Double DQN with PER; one shared network applied per user."""

    def __init__(
        self,
        n_actions: int,
        config: DqnAgentConfig,
        init_rng: np.random.Generator,
        train_rng: np.random.Generator,
        explore_rng: np.random.Generator,
    ):
        self.config = config
        self.online = DuelingQNetwork(
            n_inputs=8, hidden=config.hidden, n_actions=n_actions,
            dropout_rate=config.dropout_rate, rng=init_rng,
        )
        self.target = self.online.clone()
        self.buffer = PriorityBuffer(
            capacity=config.buffer_capacity, alpha=config.per_alpha,
            beta=config.per_beta_start, epsilon_priority=config.epsilon_priority,
        )
        self.adam = Adam(lr=config.learning_rate)
        self.epsilon = config.epsilon_start
        self.train_steps = 0
        self._train_rng = train_rng
        self._explore_rng = explore_rng

    def select_actions(self, observations: np.ndarray) -> np.ndarray:
        return dqn_select_actions(self.online, observations, self.epsilon, self._explore_rng)

    def transition_rewards(self, step_result, env: Environment) -> np.ndarray:
        """Reward fed to the replay buffer; the vanilla variant drops the penalties."""
        if self.config.reward_variant == "vanilla":
            return np.array(
                [f_snr(s, env.config.reward) for s in step_result.per_user_snr_db]
            )
        return step_result.per_user_reward

    def store(self, obs, actions, rewards, next_obs):
        for k in range(obs.shape[0]):
            self.buffer.push(
                Transition(obs[k], int(actions[k]), float(rewards[k]), next_obs[k], k)
            )

    def learn(self, beta: float) -> float | None:
        """One gradient step if the buffer can fill a batch; returns the loss."""
        cfg = self.config
        if len(self.buffer) < cfg.batch_size:
            return None
        transitions, indices, weights = self.buffer.sample(cfg.batch_size, self._train_rng, beta=beta)
        states = np.stack([t.state for t in transitions])
        actions = np.array([t.action for t in transitions], dtype=np.int64)
        rewards = np.array([t.reward for t in transitions])
        next_states = np.stack([t.next_state for t in transitions])
        targets = double_dqn_targets(self.online, self.target, rewards, next_states, cfg.gamma)
        self.online.forward(states, mode="train", rng=self._train_rng)
        grads, td = self.online.backward(actions, targets, weights)
        loss = float(np.mean(weights * td**2))
        if not np.isfinite(loss):
            raise RuntimeError(f"non-finite loss after {self.train_steps} training steps")
        self.adam.step(self.online.parameters(), grads)
        self.buffer.update_priorities(indices, td)
        self.train_steps += 1
        if self.train_steps % cfg.target_sync_period == 0:
            copy_parameters(self.online, self.target)
        return loss

    def decay_epsilon(self):
        self.epsilon = max(self.config.epsilon_floor, self.epsilon * self.config.epsilon_decay)


def train_loop(
    env: Environment,
    agent_config: DqnAgentConfig,
    t_train: int,
    seed: int,
    agent_name: str = "proposed-dqn",
    log_path=None,
    rng_factory=None,
):
    """Run the online DQN training loop; returns (agent, log rows).

    One environment step per iteration: epsilon-greedy actions for all K
    users, K transitions pushed, then (once the buffer holds a batch) one
    prioritized gradient step with Double-DQN targets. The PER beta
    exponent anneals linearly to 1 over the run.
    """
    if rng_factory is None:
        from .config import derive_rng

        rng_factory = derive_rng
    agent = DqnAgent(
        n_actions=env.config.n_beams,
        config=agent_config,
        init_rng=rng_factory(seed, agent_name, "net-init"),
        train_rng=rng_factory(seed, agent_name, "agent"),
        explore_rng=rng_factory(seed, agent_name, "explore"),
    )
    log_rows = []
    obs = env.observations()
    for t in range(1, t_train + 1):
        eps_used = agent.epsilon
        actions = agent.select_actions(obs)
        result = env.step(actions)
        next_obs = env.observations()
        rewards = agent.transition_rewards(result, env)
        agent.store(obs, actions, rewards, next_obs)
        beta = agent_config.per_beta_start + (
            agent_config.per_beta_end - agent_config.per_beta_start
        ) * min(1.0, t / t_train)
        loss = agent.learn(beta)
        agent.decay_epsilon()
        log_rows.append(
            {
                "step": t,
                "epsilon": eps_used,
                "loss": "" if loss is None else loss,
                "mean_reward": float(np.mean(rewards)),
                "buffer_size": len(agent.buffer),
                "n_switches": result.n_switches,
            }
        )
        obs = next_obs
    if log_path is not None:
        write_training_log(log_rows, log_path)
    return agent, log_rows


def write_training_log(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRAIN_LOG_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def train_ucb(env: Environment, state: UcbState, t_train: int):
    """Reactive UCB1 loop: select per user, step, update with the bandit reward."""
    for _ in range(t_train):
        actions = state.select_all()
        result = env.step(actions)
        for u in range(state.n_users):
            state.update(u, int(actions[u]), bandit_reward(result.per_user_snr_db[u]))
    return state


# -- evaluation policies ------------------------------------------------------


class GreedyPolicy:
    """Full-CSI oracle: row argmax of the current SNR table."""

    name = "greedy"

    def select_actions(self, env: Environment) -> np.ndarray:
        return greedy_actions(env.oracle_snr_table())


class UcbPolicy:
    """Frozen UCB1 statistics; selection only, no updates."""

    name = "mab"

    def __init__(self, state: UcbState):
        self.state = state

    def select_actions(self, env: Environment) -> np.ndarray:
        return self.state.select_all()


class DqnPolicy:
    """Greedy (epsilon = 0) policy of a trained network."""

    def __init__(self, net: DuelingQNetwork, name: str = "proposed-dqn"):
        self.net = net
        self.name = name

    def select_actions(self, env: Environment) -> np.ndarray:
        q = self.net.forward(env.observations(), mode="eval")
        return np.argmax(q, axis=1)


def evaluate(
    env: Environment,
    policy,
    t_eval: int,
    seed: int = 0,
    agent_name: str | None = None,
    config_hash: str = "",
    accumulator: MetricAccumulator | None = None,
) -> RunSummary:
    """Run t_eval greedy-policy steps and summarize; no learning updates."""
    acc = accumulator if accumulator is not None else MetricAccumulator(env.config.n_users)
    for _ in range(t_eval):
        actions = policy.select_actions(env)
        result = env.step(actions)
        acc.record_step(result)
    name = agent_name if agent_name is not None else getattr(policy, "name", "policy")
    return summarize(acc, seed=seed, agent_name=name, config_hash=config_hash)
