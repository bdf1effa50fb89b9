"""Tiny seedable continuous-state / continuous-action environments.

Each instance is single-owner: `reset(rng)` binds the generator used for
noise in the following episode. Out-of-bounds actions are clipped, not
rejected; the clip count is available in `diagnostics`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EpisodeDoneError(RuntimeError):
    """step() called on a finished episode without an intervening reset()."""


@dataclass(frozen=True)
class EnvSpec:
    state_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    horizon: int

    def __post_init__(self):
        low = np.asarray(self.action_low, dtype=float)
        high = np.asarray(self.action_high, dtype=float)
        if low.shape != (self.action_dim,) or high.shape != (self.action_dim,):
            raise ValueError("action bounds must match action_dim")
        if not (np.all(np.isfinite(low)) and np.all(np.isfinite(high)) and np.all(low < high)):
            raise ValueError("action bounds must be finite with low < high")
        object.__setattr__(self, "action_low", low)
        object.__setattr__(self, "action_high", high)


@dataclass
class StepResult:
    s_next: np.ndarray
    r: float
    done: bool


class _EnvBase:
    spec: EnvSpec

    def __init__(self):
        self._rng: np.random.Generator | None = None
        self._state: np.ndarray | None = None
        self._steps = 0
        self._done = True
        self.diagnostics = {"clipped_actions": 0}

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._rng = rng
        self._steps = 0
        self._done = False
        self._state = self._initial_state()
        return self._state.copy()

    def step(self, a) -> StepResult:
        if self._done:
            raise EpisodeDoneError("episode finished; call reset() first")
        a = np.atleast_1d(np.asarray(a, dtype=float))
        clipped = np.clip(a, self.spec.action_low, self.spec.action_high)
        if np.any(clipped != a):
            self.diagnostics["clipped_actions"] += 1
        self._steps += 1
        result = self._transition(clipped)
        if self._steps >= self.spec.horizon:
            result.done = True
        self._state = result.s_next
        self._done = result.done
        return result

    def _initial_state(self) -> np.ndarray:
        raise NotImplementedError

    def _transition(self, a: np.ndarray) -> StepResult:
        raise NotImplementedError


class ContinuousBandit(_EnvBase):
    """One-step bandit: s ~ U[-1, 1], r = -(a - slope * s)^2 + noise."""

    def __init__(self, target_slope: float = 0.5, noise_sigma: float = 0.0,
                 action_bound: float = 2.0):
        super().__init__()
        if noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        self.target_slope = float(target_slope)
        self.noise_sigma = float(noise_sigma)
        self.spec = EnvSpec(state_dim=1, action_dim=1,
                            action_low=np.array([-action_bound]),
                            action_high=np.array([action_bound]),
                            horizon=1)

    def optimal_action(self, s) -> np.ndarray:
        return self.target_slope * np.atleast_1d(np.asarray(s, dtype=float))

    def _initial_state(self):
        return self._rng.uniform(-1.0, 1.0, size=1)

    def _transition(self, a):
        err = a - self.optimal_action(self._state)
        r = -float(err @ err)
        if self.noise_sigma > 0:
            r += float(self._rng.normal(0.0, self.noise_sigma))
        return StepResult(s_next=self._state.copy(), r=r, done=True)


class SteerLine(_EnvBase):
    """Linear steering line: offsets respond to corrector kicks.

    s_next = s + G a + noise with G lower-triangular (kick at segment j
    moves every downstream monitor i >= j by `kick_gain`); r = -||s_next||^2;
    done once the trajectory is inside `done_threshold`.
    """

    def __init__(self, n_segments: int = 1, kick_gain: float = 1.0,
                 noise_sigma: float = 0.0, horizon: int = 10,
                 done_threshold: float = 0.05, action_bound: float = 2.0):
        super().__init__()
        if n_segments < 1:
            raise ValueError("n_segments must be at least 1")
        if noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        self.noise_sigma = float(noise_sigma)
        self.done_threshold = float(done_threshold)
        self.response = kick_gain * np.tril(np.ones((n_segments, n_segments)))
        self.spec = EnvSpec(state_dim=n_segments, action_dim=n_segments,
                            action_low=np.full(n_segments, -action_bound),
                            action_high=np.full(n_segments, action_bound),
                            horizon=horizon)

    def exact_correction(self, s) -> np.ndarray:
        """Noise-free optimal kicks: a = -G^{-1} s (the test oracle policy)."""
        return -np.linalg.solve(self.response, np.asarray(s, dtype=float))

    def _initial_state(self):
        return self._rng.uniform(-1.0, 1.0, size=self.spec.state_dim)

    def _transition(self, a):
        s_next = self._state + self.response @ a
        if self.noise_sigma > 0:
            s_next = s_next + self._rng.normal(0.0, self.noise_sigma, size=s_next.shape)
        r = -float(s_next @ s_next)
        done = bool(np.linalg.norm(s_next) < self.done_threshold)
        return StepResult(s_next=s_next, r=r, done=done)


def make_env(name: str, params: dict | None = None):
    params = dict(params or {})
    if name == "bandit":
        return ContinuousBandit(**params)
    if name == "steerline":
        return SteerLine(**params)
    raise ValueError(f"unknown environment {name!r}")
