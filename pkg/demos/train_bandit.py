"""
Q-learning on the continuous bandit
===================================

Trains the free-energy Q-learner on the one-step contextual bandit using
the committed default configuration and prints the learning curve in
200-episode windows, then compares the greedy policy with the known
optimum a* = 0.5 s.

Run with: python3 demos/train_bandit.py   (about 5 seconds)
"""

from pathlib import Path

import numpy as np
import yaml

from csqbm import evaluate, select_action, train
from csqbm.config import build_model, parse_config
from csqbm.envs import make_env

config_path = Path(__file__).parent.parent / "configs" / "bandit.yaml"
with open(config_path) as fh:
    config = parse_config(yaml.safe_load(fh))

seed = 0
rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
model = build_model(config.model, rng)
env = make_env(config.env.name, config.env.params)

result = train(model, env, config.agent, config.run.episodes, seed)

print("training return by 200-episode window")
returns = np.array([r.ret for r in result.records])
for start in range(0, len(returns), 200):
    window = returns[start:start + 200]
    print(f"  episodes {start:4d}-{start + len(window) - 1:4d}: "
          f"mean {window.mean():+.4f}")

# Greedy rollouts with the trained model; optimum return is 0.
summary = evaluate(result.model, env, 200, np.random.default_rng(1), config.agent)
print(f"\ngreedy evaluation over 200 episodes: "
      f"mean {summary['mean_return']:+.4f}, std {summary['std_return']:.4f}")

print("\ngreedy action vs optimal 0.5 s")
rng = np.random.default_rng(2)
for s in (-0.8, -0.3, 0.0, 0.4, 0.9):
    a = select_action(result.model, np.array([s]), config.agent, rng)
    print(f"  s={s:+.1f}: a={a[0]:+.3f}  (optimal {0.5 * s:+.3f})")
