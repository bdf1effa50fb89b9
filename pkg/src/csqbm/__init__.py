"""Continuous semi-quantum Boltzmann machines with sampling-based Q-learning."""

from .pauli import (
    GibbsState,
    PauliHamiltonianSpec,
    PauliOp,
    PauliTerm,
    assemble_hamiltonian,
    embed_operator,
    expectation,
    gibbs_state,
    measurement_distribution,
    pauli_matrix,
    sample_hidden,
)
from .expfam import GaussianPrior, IntegrabilityError, log_density, log_partition, tilt
from .model import (
    CsqbmModel,
    DiscreteSqbmModel,
    FreeEnergyReport,
    GradientReport,
    assemble_h_prime,
    conditional_hidden,
    conditional_visible_params,
    discrete_free_energy,
    discrete_grad_free_energy,
    free_energy,
    gibbs_sample_action,
    grad_free_energy,
    load_checkpoint,
    q_value,
    save_checkpoint,
)
from .agent import (
    AgentConfig,
    ReplayBuffer,
    TrainingDivergenceError,
    Transition,
    evaluate,
    explore_action,
    select_action,
    td_update,
    train,
)
from .envs import ContinuousBandit, EpisodeDoneError, SteerLine, make_env

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
