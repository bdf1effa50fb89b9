"""Command-line harness: train / eval / sample / gradcheck / plot.

Exit codes: 0 success, 1 usage or config error, 2 I/O error,
3 numerical-tolerance failure, 4 divergence abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import agent as rl
from . import config as cfg_mod
from . import model as csqbm_model
from .agent import TrainingDivergenceError
from .config import ConfigError
from .envs import make_env

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_TOLERANCE = 3
EXIT_DIVERGENCE = 4

ARTIFACT_VERSION = "0.1.0"


class _CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _load_config(args) -> cfg_mod.ExperimentConfig:
    if not args.config:
        raise _CliError("a --config file is required", EXIT_USAGE)
    if not os.path.exists(args.config):
        raise _CliError(f"config file not found: {args.config}", EXIT_IO)
    try:
        config = cfg_mod.load_config(args.config)
    except ConfigError as exc:
        raise _CliError(f"invalid config {args.config}: {exc}", EXIT_USAGE)
    if args.seed is not None:
        run = cfg_mod.RunConfig(**{**vars_of(config.run), "seed": args.seed})
        config = cfg_mod.ExperimentConfig(config.version, config.model, config.agent,
                                          config.env, run)
    if args.out is not None:
        run = cfg_mod.RunConfig(**{**vars_of(config.run), "out_dir": args.out})
        config = cfg_mod.ExperimentConfig(config.version, config.model, config.agent,
                                          config.env, run)
    return config


def vars_of(dc) -> dict:
    from dataclasses import asdict
    return asdict(dc)


def _load_checkpoint(path) -> csqbm_model.CsqbmModel:
    if not path:
        raise _CliError("a checkpoint path is required", EXIT_USAGE)
    if not os.path.exists(path):
        raise _CliError(f"checkpoint file not found: {path}", EXIT_IO)
    try:
        return csqbm_model.load_checkpoint(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise _CliError(f"cannot load checkpoint {path}: {exc}", EXIT_IO)


def cmd_train(args) -> int:
    config = _load_config(args)
    run = config.run
    os.makedirs(run.out_dir, exist_ok=True)
    cfg_mod.dump_config(config, os.path.join(run.out_dir, "resolved_config.yaml"))
    with open(os.path.join(run.out_dir, "manifest.json"), "w") as fh:
        json.dump({"artifact_version": ARTIFACT_VERSION, "root_seed": run.seed}, fh)
        fh.write("\n")

    model_rng = np.random.default_rng(np.random.SeedSequence([run.seed, 0]))
    model = cfg_mod.build_model(config.model, model_rng)
    try:
        env = make_env(config.env.name, config.env.params)
    except (TypeError, ValueError) as exc:
        raise _CliError(f"invalid env section: {exc}", EXIT_USAGE)

    metrics_path = os.path.join(run.out_dir, "metrics.jsonl")
    header = {"record": "header", "fields": ["episode", "steps", "return", "mean_abs_td",
                                             "grad_norm", "epsilon_or_beta", "wall_ms"]}
    with open(metrics_path, "w") as metrics:
        metrics.write(json.dumps(header, sort_keys=True) + "\n")

        def on_episode(record, snapshot):
            metrics.write(json.dumps(record.as_dict(), sort_keys=True) + "\n")
            episode = record.episode + 1
            if run.checkpoint_interval and episode % run.checkpoint_interval == 0:
                csqbm_model.save_checkpoint(
                    snapshot, os.path.join(run.out_dir, f"checkpoint_ep{episode:06d}.json"),
                    rng_label=f"seed={run.seed}")

        try:
            result = rl.train(model, env, config.agent, run.episodes, run.seed,
                              on_episode=on_episode)
        except TrainingDivergenceError as exc:
            raise _CliError(f"training diverged: {exc}", EXIT_DIVERGENCE)

    csqbm_model.save_checkpoint(result.model,
                                os.path.join(run.out_dir, "checkpoint_final.json"),
                                rng_label=f"seed={run.seed}")
    if result.records:
        tail = result.records[-min(100, len(result.records)):]
        _say(args, f"trained {run.episodes} episodes; "
                   f"mean return (last {len(tail)}): {np.mean([r.ret for r in tail]):.4f}")
    else:
        _say(args, "trained 0 episodes")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _load_config(args)
    model = _load_checkpoint(args.checkpoint)
    env = make_env(config.env.name, config.env.params)
    episodes = args.episodes
    if episodes < 1:
        raise _CliError("--episodes must be at least 1", EXIT_USAGE)
    seed = args.seed if args.seed is not None else config.run.seed
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    summary = rl.evaluate(model, env, episodes, rng, config.agent)
    print(json.dumps({k: summary[k] for k in ("episodes", "mean_return", "std_return")},
                     sort_keys=True))
    return EXIT_OK


def cmd_sample(args) -> int:
    model = _load_checkpoint(args.checkpoint)
    state = [float(x) for x in args.state.split(",")] if args.state else []
    if len(state) >= model.n:
        raise _CliError(f"state has {len(state)} values but the checkpoint has "
                        f"{model.n} visible units (need at least one free)", EXIT_USAGE)
    if args.count < 0:
        raise _CliError("--count must be non-negative", EXIT_USAGE)
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    clamp = {i: x for i, x in enumerate(state)}
    lines = [json.dumps({"record": "header", "state": state, "count": args.count,
                         "sweeps": args.sweeps}, sort_keys=True)]
    actions = []
    for _ in range(args.count):
        a = csqbm_model.gibbs_sample_action(model, clamp, args.sweeps, rng)
        q = csqbm_model.q_value(model, np.array(state), a)
        actions.append(a)
        lines.append(json.dumps({"action": list(map(float, a)), "q": q}, sort_keys=True))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if actions and not args.quiet:
        arr = np.asarray(actions)
        print(f"# mean={arr.mean(axis=0)} var={arr.var(axis=0)}", file=sys.stderr)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    config = _load_config(args)
    if args.trials < 1:
        raise _CliError("--trials must be at least 1", EXIT_USAGE)
    seed = args.seed if args.seed is not None else config.run.seed
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    worst = {"coupling": 0.0, "hidden": 0.0, "theta": 0.0, "visible": 0.0}
    worst_param = None
    step = 1e-5
    for _ in range(args.trials):
        model = cfg_mod.build_model(config.model, rng)
        v = model.prior.sample(rng)
        report = csqbm_model.grad_free_energy(model, v, wrt="both")
        w0 = csqbm_model.weights_vector(model)
        d, m = model.coupling.shape
        n_terms = len(model.hidden_spec.terms)
        for k in range(model.num_weights):
            group = ("coupling" if k < d * m
                     else "hidden" if k < d * m + n_terms else "theta")
            e = np.zeros_like(w0)
            e[k] = step
            f_plus = csqbm_model.free_energy(csqbm_model.replace_weights(model, w0 + e), v).f
            f_minus = csqbm_model.free_energy(csqbm_model.replace_weights(model, w0 - e), v).f
            fd = (f_plus - f_minus) / (2 * step)
            err = _rel_err(report.d_weights[k], fd)
            if err > worst[group]:
                worst[group] = err
                if err > args.tolerance:
                    worst_param = f"{group}[{k}]"
        for k in range(model.n):
            e = np.zeros(model.n)
            e[k] = step
            fd = (csqbm_model.free_energy(model, v + e).f
                  - csqbm_model.free_energy(model, v - e).f) / (2 * step)
            err = _rel_err(report.d_visible[k], fd)
            if err > worst["visible"]:
                worst["visible"] = err
                if err > args.tolerance:
                    worst_param = f"visible[{k}]"
    for group, err in worst.items():
        _say(args, f"worst relative error, {group}: {err:.3e}")
    if any(err > args.tolerance for err in worst.values()):
        print(f"gradient check FAILED at tolerance {args.tolerance:g} "
              f"(first offender: {worst_param})", file=sys.stderr)
        return EXIT_TOLERANCE
    _say(args, f"gradient check passed at tolerance {args.tolerance:g}")
    return EXIT_OK


def _rel_err(a: float, b: float, floor: float = 1e-8) -> float:
    diff = abs(a - b)
    if diff <= floor:
        return 0.0
    return diff / max(abs(a), abs(b))


def cmd_plot(args) -> int:
    if not os.path.exists(args.metrics):
        raise _CliError(f"metrics file not found: {args.metrics}", EXIT_IO)
    episodes, returns, tds = [], [], []
    with open(args.metrics) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise _CliError(f"malformed metrics line {lineno}: {exc}", EXIT_USAGE)
            if record.get("record") == "header":
                continue
            try:
                episodes.append(record["episode"])
                returns.append(record["return"])
                tds.append(record["mean_abs_td"])
            except KeyError as exc:
                raise _CliError(f"malformed metrics line {lineno}: missing {exc}", EXIT_USAGE)
    if not episodes:
        raise _CliError("metrics file contains no episode records; nothing to plot",
                        EXIT_USAGE)
    out = args.out or os.path.splitext(args.metrics)[0] + ".svg"

    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "csqbm"
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.plot(episodes, returns, lw=0.8)
    ax1.set_ylabel("episode return")
    ax2.plot(episodes, tds, lw=0.8, color="tab:orange")
    ax2.set_ylabel("mean |TD residual|")
    ax2.set_xlabel("episode")
    fig.tight_layout()
    fig.savefig(out, metadata={"Date": None})
    plt.close(fig)
    _say(args, f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file (YAML)")
    common.add_argument("--seed", type=int, help="override the root seed")
    common.add_argument("--out", help="override the output path/directory")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    parser = argparse.ArgumentParser(prog="csqbm",
                                     description="Continuous semi-quantum Boltzmann machine harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="run the Q-learning loop")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="greedy evaluation of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=20)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", parents=[common], help="sample actions from p(a|s)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--state", default="", help="comma-separated clamped state values")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--sweeps", type=int, default=20)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("gradcheck", parents=[common],
                       help="compare analytic gradients against finite differences")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("plot", parents=[common], help="render learning curves as SVG")
    p.add_argument("--metrics", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:
    sys.exit(main())
