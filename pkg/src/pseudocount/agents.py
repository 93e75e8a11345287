"""Q-learning agents with exploration bonus, mixed Monte-Carlo and Retrace updates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from pseudocount.bonus import BonusConfig, combined_reward, exploration_bonus
from pseudocount.density import DensityModel, QuantizedFrame
from pseudocount.errors import DomainError


@dataclass
class Transition:
    """One step of experience.

    ``reward`` is the combined, clipped reward the agent learns from;
    ``r_ext`` and ``bonus`` are its ingredients. ``mc_return`` stays 0 and
    ``mc_valid`` false until the episode is finalized. ``behaviour_prob`` is
    the probability the acting policy gave to ``action``; ``index`` is the
    step's position within its episode, assigned by the replay buffer.
    """

    state: Any
    action: int
    reward: float
    next_state: Any
    terminal: bool
    episode_id: int
    mc_return: float = 0.0
    mc_valid: bool = False
    behaviour_prob: float = 1.0
    r_ext: float = 0.0
    bonus: float = 0.0
    index: int = 0


class TabularQ:
    def __init__(self, n_states: int, n_actions: int, gamma: float = 0.99, alpha: float = 0.1,
                 initial_value: float = 0.0):
        self.table = np.full((n_states, n_actions), float(initial_value))
        self.n_actions = n_actions
        self.gamma = gamma
        self.alpha = alpha

    def values(self, state) -> np.ndarray:
        return self.table[state]

    def value(self, state, action) -> float:
        return float(self.table[state, action])

    def update(self, state, action, error) -> None:
        self.table[state, action] += self.alpha * error


class LinearQ:
    """``Q(x, a) = w_a . phi(x)`` with ``phi`` the scaled flattened frame plus a bias."""

    def __init__(self, n_features: int, n_actions: int, gamma: float = 0.99, alpha: float = 0.01):
        self.weights = np.zeros((n_actions, n_features + 1))
        self.n_actions = n_actions
        self.gamma = gamma
        self.alpha = alpha

    @staticmethod
    def features(frame: QuantizedFrame) -> np.ndarray:
        return np.append(frame.pixels.reshape(-1) / (frame.bins - 1), 1.0)

    def values(self, state) -> np.ndarray:
        return self.weights @ self.features(state)

    def value(self, state, action) -> float:
        return float(self.weights[action] @ self.features(state))

    def update(self, state, action, error) -> None:
        self.weights[action] += self.alpha * error * self.features(state)


@dataclass(frozen=True)
class MmcConfig:
    beta: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise DomainError(f"beta must lie in [0, 1], got {self.beta}", field="beta")


@dataclass(frozen=True)
class RetraceConfig:
    """Trace parameter and policies for Retrace.

    ``target(state)`` returns the evaluated policy's action probabilities;
    ``None`` means greedy with respect to the Q-function being corrected.
    ``behaviour(state)`` does the same for the acting policy; ``None`` uses
    each transition's recorded ``behaviour_prob``.
    """

    lam: float = 0.9
    target: Optional[Callable[[Any], np.ndarray]] = None
    behaviour: Optional[Callable[[Any], np.ndarray]] = None

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise DomainError(f"lambda must lie in [0, 1], got {self.lam}", field="lam")


def greedy_probs(values: np.ndarray) -> np.ndarray:
    """Uniform over the maximizing actions."""
    best = values == values.max()
    return best / best.sum()


def td_error(q, t: Transition) -> float:
    bootstrap = 0.0 if t.terminal else float(np.max(q.values(t.next_state)))
    return t.reward + q.gamma * bootstrap - q.value(t.state, t.action)


def mc_error(q, t: Transition) -> float:
    # Unfinished episodes contribute a return of 0.
    ret = t.mc_return if t.mc_valid else 0.0
    return ret - q.value(t.state, t.action)


def mmc_error(q, t: Transition, cfg: MmcConfig) -> float:
    return (1.0 - cfg.beta) * td_error(q, t) + cfg.beta * mc_error(q, t)


def expected_td_error(q, t: Transition, target_probs: np.ndarray) -> float:
    bootstrap = 0.0 if t.terminal else float(target_probs @ q.values(t.next_state))
    return t.reward + q.gamma * bootstrap - q.value(t.state, t.action)


def retrace_error(q, trajectory: Sequence[Transition], cfg: RetraceConfig) -> float:
    """Off-policy correction ``sum_t gamma^t (prod_{s<=t} c_s) delta_pi(x_t, a_t)``.

    ``c_s = lam * min(1, pi(a_s|x_s) / mu(a_s|x_s))``; the product is empty at
    ``t = 0``. The sum stops early once the trace product reaches zero.
    """
    if not trajectory:
        raise DomainError("retrace needs a nonempty trajectory", field="trajectory")
    target = cfg.target or (lambda s: greedy_probs(q.values(s)))
    total, trace, discount = 0.0, 1.0, 1.0
    for t, tr in enumerate(trajectory):
        if t > 0:
            mu = cfg.behaviour(tr.state)[tr.action] if cfg.behaviour else tr.behaviour_prob
            if mu <= 0.0:
                raise DomainError(f"behaviour probability of taken action is {mu}", field="behaviour")
            pi = target(tr.state)[tr.action]
            trace *= cfg.lam * min(1.0, pi / mu)
            discount *= q.gamma
            if trace == 0.0:
                break
        total += discount * trace * expected_td_error(q, tr, target(tr.next_state))
        if tr.terminal:
            break
    return total


def retrace_operator(q_table: np.ndarray, P: np.ndarray, R: np.ndarray, target: np.ndarray,
                     behaviour: np.ndarray, lam: float, gamma: float) -> np.ndarray:
    """One exact application of the expected Retrace operator on a finite MDP.

    ``target`` and ``behaviour`` are ``(S, A)`` policy tables. The expected
    correction ``D`` satisfies ``D = delta_pi + gamma * P M_c D`` where
    ``M_c`` weights next state-action pairs by ``mu * c``; it is obtained
    by a direct linear solve.
    """
    n_s, n_a = q_table.shape
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(behaviour > 0, target / behaviour, 0.0)
    c = lam * np.minimum(1.0, ratio)
    v_pi = (target * q_table).sum(axis=1)
    delta = R + gamma * P @ v_pi - q_table
    kernel = P.reshape(n_s * n_a, n_s)[:, :, None] * (behaviour * c)[None]
    system = np.eye(n_s * n_a) - gamma * kernel.reshape(n_s * n_a, n_s * n_a)
    correction = np.linalg.solve(system, delta.reshape(-1))
    return q_table + correction.reshape(n_s, n_a)


class ReplayBuffer:
    """Fixed-capacity ring of transitions with per-episode bookkeeping.

    Index 0 is the oldest stored transition. Once full, each new transition
    evicts the oldest one.
    """

    def __init__(self, capacity: int = 100_000):
        if capacity < 1:
            raise DomainError("replay capacity must be positive", field="capacity")
        self.capacity = capacity
        self._items: List[Transition] = []
        self._head = 0
        self._episodes: Dict[int, List[Transition]] = {}
        self._evicted: Dict[int, int] = {}

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i) -> Transition:
        if not -len(self._items) <= i < len(self._items):
            raise IndexError(i)
        return self._items[(self._head + i) % len(self._items)]

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def add(self, t: Transition) -> None:
        ep = self._episodes.setdefault(t.episode_id, [])
        self._evicted.setdefault(t.episode_id, 0)
        t.index = self._evicted[t.episode_id] + len(ep)
        ep.append(t)
        if len(self._items) < self.capacity:
            self._items.append(t)
            return
        old = self._items[self._head]
        self._items[self._head] = t
        self._head = (self._head + 1) % self.capacity
        old_ep = self._episodes[old.episode_id]
        old_ep.pop(0)
        self._evicted[old.episode_id] += 1
        if not old_ep:
            del self._episodes[old.episode_id]
            del self._evicted[old.episode_id]

    def episode(self, episode_id: int) -> List[Transition]:
        if episode_id not in self._episodes:
            raise KeyError(f"unknown episode id {episode_id}")
        return self._episodes[episode_id]

    def continuation(self, t: Transition, length: int) -> List[Transition]:
        """``t`` followed by up to ``length - 1`` later transitions of its episode."""
        i = t.index - self._evicted[t.episode_id]
        return self._episodes[t.episode_id][i:i + length]


def finalize_episode(replay: ReplayBuffer, episode_id: int, gamma: float) -> ReplayBuffer:
    """Fill in discounted returns for a finished episode, last step first."""
    ret = 0.0
    for t in reversed(replay.episode(episode_id)):
        ret = t.reward + gamma * ret
        t.mc_return = ret
        t.mc_valid = True
    return replay


@dataclass
class AgentConfig:
    """Learning rule and hyper-parameters.

    ``update`` is ``"q"`` (one-step Q-learning), ``"mmc"`` (mixed
    Monte-Carlo with weight ``beta``) or ``"retrace"`` (Retrace with trace
    parameter ``lam`` over replayed sequences of ``retrace_length`` steps).
    """

    update: str = "q"
    beta: float = 0.1
    lam: float = 0.9
    alpha: float = 0.1
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.01
    epsilon_steps: int = 10_000
    batch_size: int = 4
    replay_capacity: int = 100_000
    retrace_length: int = 8
    intrinsic_only: bool = False

    def __post_init__(self):
        if self.update not in ("q", "mmc", "retrace"):
            raise DomainError(f"unknown update rule {self.update!r}", field="update")
        MmcConfig(self.beta)
        RetraceConfig(self.lam)


class Agent:
    """Epsilon-greedy agent learning from replayed transitions.

    Three independent random streams are derived from ``seed``: action
    selection, replay sampling and bonus subsampling. Enabling or disabling
    the bonus therefore never perturbs the other two.
    """

    def __init__(self, q, config: AgentConfig, seed: int = 0):
        self.q = q
        self.config = config
        policy_ss, replay_ss, bonus_ss = np.random.SeedSequence(seed).spawn(3)
        self.policy_rng = np.random.default_rng(policy_ss)
        self.replay_rng = np.random.default_rng(replay_ss)
        self.bonus_rng = np.random.default_rng(bonus_ss)
        self.replay = ReplayBuffer(config.replay_capacity)
        self.steps = 0
        self.episode_id = 0
        self.episode_return = 0.0
        self.state = None
        self._mmc = MmcConfig(config.beta)
        self._retrace = RetraceConfig(config.lam)

    def epsilon(self) -> float:
        c = self.config
        frac = min(1.0, self.steps / max(1, c.epsilon_steps))
        return c.epsilon_start + frac * (c.epsilon_end - c.epsilon_start)

    def act(self, state):
        """Return ``(action, behaviour probability of that action)``."""
        eps = self.epsilon()
        probs = eps / self.q.n_actions + (1.0 - eps) * greedy_probs(self.q.values(state))
        if self.policy_rng.random() < eps:
            action = int(self.policy_rng.integers(self.q.n_actions))
        else:
            best = np.flatnonzero(self.q.values(state) == np.max(self.q.values(state)))
            action = int(best[self.policy_rng.integers(best.size)])
        return action, float(probs[action])

    def error(self, t: Transition) -> float:
        rule = self.config.update
        if rule == "q":
            return td_error(self.q, t)
        if rule == "mmc":
            return mmc_error(self.q, t, self._mmc)
        seq = self.replay.continuation(t, self.config.retrace_length)
        return retrace_error(self.q, seq, self._retrace)

    def learn(self) -> None:
        n = len(self.replay)
        for _ in range(self.config.batch_size):
            t = self.replay[int(self.replay_rng.integers(n))]
            self.q.update(t.state, t.action, self.error(t))

    def step(self, env, model: Optional[DensityModel], bonus_cfg: BonusConfig, observe=None):
        """Act once, compute the bonus, store the transition and learn.

        ``observe(env)`` maps the environment to the agent's state
        representation (default: ``env.state()``). Returns the transition and
        a diagnostics dict.
        """
        observe = observe or (lambda e: e.state())
        if self.state is None or env.episode_over:
            env.reset()
            self.state = observe(env)
            self.episode_return = 0.0
        eps = self.epsilon()
        action, mu = self.act(self.state)
        _, r_ext, terminal = env.step(action)
        next_state = observe(env)

        pg = loss = math.nan
        bonus = 0.0
        computed = False
        if model is not None and self.bonus_rng.random() < bonus_cfg.subsample_fraction:
            outcome = model.pg_update(env.render())
            pg, computed = outcome.pg, True
            loss = -outcome.log_rho if outcome.log_rho is not None else math.nan
            bonus = exploration_bonus(outcome.pg, outcome.step_index, bonus_cfg)
        r_learn = 0.0 if self.config.intrinsic_only else r_ext
        reward = combined_reward(r_learn, bonus, bonus_cfg)

        t = Transition(self.state, action, reward, next_state, terminal, self.episode_id,
                       behaviour_prob=mu, r_ext=r_ext, bonus=bonus)
        self.replay.add(t)
        self.steps += 1
        self.episode_return += r_ext
        self.learn()

        diag = {
            "step": self.steps, "episode": self.episode_id, "action": action,
            "r_ext": r_ext, "bonus": bonus, "reward": reward, "pg": pg, "loss": loss,
            "bonus_computed": computed, "epsilon": eps, "episode_end": False,
            "episode_return": math.nan,
        }
        if env.episode_over:
            finalize_episode(self.replay, self.episode_id, self.q.gamma)
            diag["episode_end"] = True
            diag["episode_return"] = self.episode_return
            self.episode_id += 1
            self.state = None
        else:
            self.state = next_state
        return t, diag


def agent_step(agent: Agent, env, model: Optional[DensityModel], cfg: BonusConfig, observe=None):
    return agent.step(env, model, cfg, observe)
