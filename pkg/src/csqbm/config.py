"""Experiment configuration: strict YAML schema with explicit versioning.

Unknown keys are errors, not warnings; the version field is mandatory.
Prior parameters are written as per-unit (mu, sigma) pairs and converted
to natural parameters when the model is built.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from .agent import AgentConfig
from .expfam import GaussianPrior
from .model import CsqbmModel
from .pauli import PauliHamiltonianSpec, PauliOp, PauliTerm

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """Configuration file is missing, malformed, or violates the schema."""


def _require_keys(section: dict, allowed: set[str], required: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")
    missing = required - set(section)
    if missing:
        raise ConfigError(f"missing required key(s) {sorted(missing)} in {where}")


@dataclass(frozen=True)
class ModelConfig:
    n: int
    m: int
    beta: float
    prior: tuple[tuple[float, float], ...]  # (mu, sigma) per visible unit
    coupling_basis: str = "Z"
    w_init_scale: float = 0.1
    hidden_terms: str | tuple = "biases"  # "biases", "biases+pairs", or explicit list
    hidden_init_scale: float = 0.1
    strict_sampler: bool = True
    theta_trainable: bool = False

    def __post_init__(self):
        if len(self.prior) != self.n:
            raise ConfigError(f"prior lists {len(self.prior)} units, model.n is {self.n}")
        if self.coupling_basis not in ("X", "Y", "Z"):
            raise ConfigError(f"coupling_basis must be X, Y or Z, got {self.coupling_basis!r}")
        if isinstance(self.hidden_terms, str) and self.hidden_terms not in ("biases", "biases+pairs"):
            raise ConfigError(f"hidden_terms must be 'biases', 'biases+pairs' or a term list")


@dataclass(frozen=True)
class EnvConfig:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    episodes: int
    seed: int
    out_dir: str = "runs/default"
    eval_interval: int = 0
    checkpoint_interval: int = 500


@dataclass(frozen=True)
class ExperimentConfig:
    version: int
    model: ModelConfig
    agent: AgentConfig
    env: EnvConfig
    run: RunConfig


def _dataclass_from_section(cls, section: dict, where: str):
    names = {f.name for f in fields(cls)}
    _require_keys(section, names, set(), where)
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where} section: {exc}") from exc


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    _require_keys(data, {"version", "model", "agent", "env", "run"},
                  {"version", "model", "env", "run"}, "config root")
    if data["version"] != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {data['version']!r}; expected {CONFIG_VERSION}")

    model_raw = dict(data["model"])
    prior_raw = model_raw.get("prior", [])
    units = []
    for i, entry in enumerate(prior_raw):
        _require_keys(entry, {"mu", "sigma"}, {"mu", "sigma"}, f"model.prior[{i}]")
        units.append((float(entry["mu"]), float(entry["sigma"])))
    model_raw["prior"] = tuple(units)
    if isinstance(model_raw.get("hidden_terms"), list):
        model_raw["hidden_terms"] = tuple(
            (float(t["coefficient"]), tuple((int(q), str(op)) for q, op in t["factors"]))
            for t in model_raw["hidden_terms"])
    model_cfg = _dataclass_from_section(ModelConfig, model_raw, "model")
    agent_cfg = _dataclass_from_section(AgentConfig, dict(data.get("agent", {})), "agent")
    env_cfg = _dataclass_from_section(EnvConfig, dict(data["env"]), "env")
    run_cfg = _dataclass_from_section(RunConfig, dict(data["run"]), "run")
    return ExperimentConfig(version=CONFIG_VERSION, model=model_cfg,
                            agent=agent_cfg, env=env_cfg, run=run_cfg)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parse_config(data)


def resolved_dict(config: ExperimentConfig) -> dict:
    """Plain-dict form with every default filled in; round-trips via parse_config."""
    data = asdict(config)
    data["model"]["prior"] = [{"mu": mu, "sigma": sigma} for mu, sigma in config.model.prior]
    if isinstance(config.model.hidden_terms, tuple):
        data["model"]["hidden_terms"] = [
            {"coefficient": c, "factors": [[q, op] for q, op in factors]}
            for c, factors in config.model.hidden_terms]
    return data


def dump_config(config: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(resolved_dict(config), fh, sort_keys=True)


def build_hidden_spec(cfg: ModelConfig, rng: np.random.Generator) -> PauliHamiltonianSpec:
    basis = PauliOp(cfg.coupling_basis)
    if isinstance(cfg.hidden_terms, tuple):
        terms = tuple(PauliTerm(c, tuple((q, PauliOp(op)) for q, op in factors))
                      for c, factors in cfg.hidden_terms)
        return PauliHamiltonianSpec(cfg.m, terms)
    terms = [PauliTerm(float(cfg.hidden_init_scale * rng.standard_normal()), ((j, basis),))
             for j in range(cfg.m)]
    if cfg.hidden_terms == "biases+pairs":
        for j in range(cfg.m):
            for k in range(j + 1, cfg.m):
                coeff = float(cfg.hidden_init_scale * rng.standard_normal())
                terms.append(PauliTerm(coeff, ((j, basis), (k, basis))))
    return PauliHamiltonianSpec(cfg.m, tuple(terms))


def build_model(cfg: ModelConfig, rng: np.random.Generator) -> CsqbmModel:
    """Instantiate a model from config; only linear statistic rows get random couplings."""
    mus = [mu for mu, _ in cfg.prior]
    sigmas = [sigma for _, sigma in cfg.prior]
    prior = GaussianPrior.from_moments(mus, sigmas)
    coupling = np.zeros((2 * cfg.n, cfg.m))
    coupling[0::2, :] = cfg.w_init_scale * rng.standard_normal((cfg.n, cfg.m))
    spec = build_hidden_spec(cfg, rng)
    return CsqbmModel(prior=prior, coupling=coupling, hidden_spec=spec,
                      coupling_basis=PauliOp(cfg.coupling_basis), beta=cfg.beta,
                      strict_sampler=cfg.strict_sampler,
                      theta_trainable=cfg.theta_trainable)
