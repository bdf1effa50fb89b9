"""Free-energy Q-learning on top of the CSQBM sampler.

The Bellman residual is delta = F(s,a) + r - gamma * F_target(s', a*),
i.e. the distance of F(s,a) from its target -r + gamma * min_a' F(s',a'),
and weights move down that residual: w <- w - alpha * mean(delta * dF/dw).
The inner minimization is approximated by best-of-K posterior sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import time

import numpy as np

from . import model as csqbm_model
from .model import (
    CsqbmModel,
    free_energy_value,
    gibbs_sample_action,
    grad_free_energy,
    q_value,
)


class TrainingDivergenceError(RuntimeError):
    """The TD residual stayed above the configured ceiling for too long."""


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool

    def __post_init__(self):
        object.__setattr__(self, "s", np.atleast_1d(np.asarray(self.s, dtype=float)))
        object.__setattr__(self, "a", np.atleast_1d(np.asarray(self.a, dtype=float)))
        object.__setattr__(self, "s_next", np.atleast_1d(np.asarray(self.s_next, dtype=float)))
        if not np.isfinite(self.r):
            raise ValueError("reward must be finite")


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._storage: list[Transition] = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._storage)

    def push(self, transition: Transition) -> None:
        if len(self._storage) < self.capacity:
            self._storage.append(transition)
        else:
            self._storage[self._cursor] = transition
        self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if not self._storage:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, len(self._storage), size=batch_size)
        return [self._storage[i] for i in idx]


@dataclass(frozen=True)
class AgentConfig:
    alpha: float = 0.05
    gamma: float = 0.99
    explore_beta: float | None = None  # inverse temperature for gibbs exploration; None -> model beta
    sweeps: int = 10
    action_candidates: int = 8
    explore_mode: str = "gibbs"  # or "epsilon_greedy"
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_episodes: int = 500
    batch_size: int = 16
    target_sync: int = 200
    warmup_steps: int = 50
    buffer_capacity: int = 10_000
    divergence_ceiling: float = 1e3
    divergence_patience: int = 100

    def __post_init__(self):
        # alpha = 0 (frozen weights) and gamma = 0 (no lookahead) are valid
        # degenerate settings used by the identity tests
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if self.explore_beta is not None and self.explore_beta <= 0:
            raise ValueError("explore_beta must be positive")
        if self.action_candidates < 1:
            raise ValueError("action_candidates must be at least 1")
        if self.explore_mode not in ("gibbs", "epsilon_greedy"):
            raise ValueError(f"unknown explore_mode {self.explore_mode!r}")
        if self.sweeps < 1 or self.batch_size < 1 or self.target_sync < 1:
            raise ValueError("sweeps, batch_size and target_sync must be positive")

    def epsilon_at(self, episode: int) -> float:
        frac = min(episode / max(self.epsilon_decay_episodes, 1), 1.0)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


def _state_clamp(s: np.ndarray) -> dict[int, float]:
    return {i: float(x) for i, x in enumerate(np.atleast_1d(s))}


def select_action(model: CsqbmModel, s, config: AgentConfig,
                  rng: np.random.Generator) -> np.ndarray:
    """Best-of-K posterior sampling: draw K actions from p(a|s), keep max Q."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    clamp = _state_clamp(s)
    best_a, best_q = None, -np.inf
    for _ in range(config.action_candidates):
        a = gibbs_sample_action(model, clamp, config.sweeps, rng)
        q = q_value(model, s, a)
        if q >= best_q:
            best_a, best_q = a, q
    return best_a


def explore_action(model: CsqbmModel, s, config: AgentConfig,
                   rng: np.random.Generator, epsilon: float | None = None) -> np.ndarray:
    """Exploration draw: a posterior sample, or epsilon-greedy around select_action."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if config.explore_mode == "gibbs":
        sampler = model
        if config.explore_beta is not None and config.explore_beta != model.beta:
            from dataclasses import replace
            sampler = replace(model, beta=config.explore_beta)
        return gibbs_sample_action(sampler, _state_clamp(s), config.sweeps, rng)
    epsilon = config.epsilon_start if epsilon is None else epsilon
    # epsilon == 0 consumes no randomness, so it matches select_action exactly.
    if epsilon > 0 and rng.random() < epsilon:
        prior_draw = model.prior.sample(rng)
        return prior_draw[len(s):]
    return select_action(model, s, config, rng)


def _project_integrable(model: CsqbmModel, headroom: float = 0.9) -> CsqbmModel:
    """Scale quadratic coupling rows back into the normalizable region.

    The tilted conditional p(v|h) is a proper density only while
    theta_quad + (W h)_quad stays negative for every hidden configuration h;
    the worst case over h is the l1 norm of the quadratic coupling row.
    Updates that cross the boundary are projected back with some headroom.
    """
    quad_theta = model.prior.theta[1::2]
    quad_rows = model.coupling[1::2]
    limit = headroom * (-quad_theta)
    norms = np.abs(quad_rows).sum(axis=1)
    scale = np.where(norms > limit, limit / np.maximum(norms, 1e-300), 1.0)
    if np.all(scale == 1.0):
        return model
    from dataclasses import replace
    coupling = model.coupling.copy()
    coupling[1::2] = quad_rows * scale[:, None]
    return replace(model, coupling=coupling)


def td_update(model: CsqbmModel, batch: list[Transition], target_model: CsqbmModel,
              config: AgentConfig, rng: np.random.Generator) -> tuple[CsqbmModel, dict]:
    """One gradient step on the batch-mean squared Bellman residual."""
    if not batch:
        raise ValueError("batch must be non-empty")
    if target_model.num_weights != model.num_weights:
        raise ValueError("target model shape does not match online model")
    direction = np.zeros(model.num_weights)
    abs_residuals = []
    for tr in batch:
        v = np.concatenate([tr.s, tr.a])
        f = free_energy_value(model, v)
        if tr.done or config.gamma == 0.0:
            bootstrap = 0.0
        else:
            a_star = select_action(target_model, tr.s_next, config, rng)
            bootstrap = config.gamma * free_energy_value(
                target_model, np.concatenate([tr.s_next, a_star]))
        delta = f + tr.r - bootstrap
        if not np.isfinite(delta):
            raise TrainingDivergenceError(f"non-finite TD residual {delta!r}")
        grad = grad_free_energy(model, v, wrt="weights").d_weights
        direction += delta * grad
        abs_residuals.append(abs(delta))
    direction /= len(batch)
    new_weights = csqbm_model.weights_vector(model) - config.alpha * direction
    diagnostics = {
        "mean_abs_td": float(np.mean(abs_residuals)),
        "grad_norm": float(np.linalg.norm(direction)),
    }
    return _project_integrable(csqbm_model.replace_weights(model, new_weights)), diagnostics


@dataclass
class EpisodeRecord:
    episode: int
    steps: int
    ret: float
    mean_abs_td: float
    grad_norm: float
    epsilon_or_beta: float
    wall_ms: float

    def as_dict(self) -> dict:
        return {"episode": self.episode, "steps": self.steps, "return": self.ret,
                "mean_abs_td": self.mean_abs_td, "grad_norm": self.grad_norm,
                "epsilon_or_beta": self.epsilon_or_beta, "wall_ms": self.wall_ms}


@dataclass
class TrainResult:
    model: CsqbmModel
    records: list[EpisodeRecord] = field(default_factory=list)


def train(model: CsqbmModel, env, config: AgentConfig, episodes: int, seed: int,
          on_episode=None) -> TrainResult:
    """Q-learning loop; deterministic given (model, env params, config, seed).

    Child generators are split from SeedSequence(seed): child 0 drives the
    environment, child 1 the agent (exploration, replay, bootstrap).
    """
    if episodes < 0:
        raise ValueError("episodes must be non-negative")
    env_ss, agent_ss = np.random.SeedSequence(seed).spawn(2)
    env_rng = np.random.default_rng(env_ss)
    agent_rng = np.random.default_rng(agent_ss)
    buffer = ReplayBuffer(config.buffer_capacity)
    target = model
    result = TrainResult(model=model)
    total_steps = 0
    over_ceiling = 0
    for episode in range(episodes):
        t0 = time.perf_counter()
        s = env.reset(env_rng)
        done = False
        ep_return = 0.0
        ep_steps = 0
        td_stats: list[dict] = []
        epsilon = config.epsilon_at(episode)
        while not done:
            a = explore_action(model, s, config, agent_rng, epsilon=epsilon)
            step = env.step(a)
            buffer.push(Transition(s, a, step.r, step.s_next, step.done))
            ep_return += step.r
            ep_steps += 1
            total_steps += 1
            if total_steps >= config.warmup_steps:
                batch = buffer.sample(config.batch_size, agent_rng)
                model, diag = td_update(model, batch, target, config, agent_rng)
                td_stats.append(diag)
                if diag["mean_abs_td"] > config.divergence_ceiling:
                    over_ceiling += 1
                    if over_ceiling >= config.divergence_patience:
                        raise TrainingDivergenceError(
                            f"mean |TD| above {config.divergence_ceiling} for "
                            f"{over_ceiling} consecutive steps")
                else:
                    over_ceiling = 0
            if total_steps % config.target_sync == 0:
                target = model
            s, done = step.s_next, step.done
        record = EpisodeRecord(
            episode=episode,
            steps=ep_steps,
            ret=ep_return,
            mean_abs_td=float(np.mean([d["mean_abs_td"] for d in td_stats])) if td_stats else 0.0,
            grad_norm=float(np.mean([d["grad_norm"] for d in td_stats])) if td_stats else 0.0,
            epsilon_or_beta=(epsilon if config.explore_mode == "epsilon_greedy"
                             else (config.explore_beta or model.beta)),
            wall_ms=(time.perf_counter() - t0) * 1e3,
        )
        result.records.append(record)
        if on_episode is not None:
            on_episode(record, model)
    result.model = model
    return result


def evaluate(model: CsqbmModel, env, episodes: int, rng: np.random.Generator,
             config: AgentConfig) -> dict:
    """Greedy rollouts with select_action; never mutates the model."""
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    returns = []
    traces = []
    for _ in range(episodes):
        s = env.reset(rng)
        done = False
        ep_return = 0.0
        trace = []
        while not done:
            a = select_action(model, s, config, rng)
            step = env.step(a)
            trace.append({"s": s.tolist(), "a": np.atleast_1d(a).tolist(), "r": step.r})
            ep_return += step.r
            s, done = step.s_next, step.done
        returns.append(ep_return)
        traces.append(trace)
    returns = np.asarray(returns)
    return {"episodes": episodes, "mean_return": float(returns.mean()),
            "std_return": float(returns.std()), "returns": returns.tolist(),
            "traces": traces}
