"""CSQBM model: Hamiltonian assembly, free energy, analytic gradients,
exponential-family conditionals, the alternating Gibbs sampler, and the
discrete spin-visible baseline.

Weight-vector layout (used by gradients, checkpoints and the agent):
coupling matrix row-major first, then hidden-term coefficients in spec
order, then theta if the prior is trainable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import json

import numpy as np

from . import expfam
from .expfam import GaussianPrior
from .pauli import (
    GibbsState,
    PauliHamiltonianSpec,
    PauliOp,
    PauliTerm,
    assemble_hamiltonian,
    embed_operator,
    embed_term,
    expectation,
    gibbs_state,
    sample_hidden,
)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class CsqbmModel:
    """Gaussian prior + visible-hidden couplings + hidden Pauli Hamiltonian.

    `coupling` has shape (2n, m): row 2i couples the linear statistic v_i,
    row 2i+1 the quadratic statistic v_i^2, to each hidden qubit through
    the single `coupling_basis` Pauli. With `strict_sampler` on, every
    hidden term must act in `coupling_basis` so the blocked Gibbs sampler
    is exact.
    """

    prior: GaussianPrior
    coupling: np.ndarray
    hidden_spec: PauliHamiltonianSpec
    coupling_basis: PauliOp
    beta: float
    strict_sampler: bool = True
    theta_trainable: bool = False

    def __post_init__(self):
        coupling = np.asarray(self.coupling, dtype=float)
        if coupling.shape != (self.prior.stat_dim, self.hidden_spec.num_qubits):
            raise ValueError(
                f"coupling shape {coupling.shape} does not match "
                f"({self.prior.stat_dim}, {self.hidden_spec.num_qubits})")
        if not np.all(np.isfinite(coupling)):
            raise ValueError("coupling must be finite")
        coupling = coupling.copy()
        coupling.setflags(write=False)
        object.__setattr__(self, "coupling", coupling)
        object.__setattr__(self, "coupling_basis", PauliOp(self.coupling_basis))
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.strict_sampler:
            for term in self.hidden_spec.terms:
                if any(op is not self.coupling_basis for _, op in term.factors):
                    raise ValueError(
                        "strict_sampler requires every hidden term to act in the "
                        f"coupling basis {self.coupling_basis.value}; got term {term}")

    @property
    def n(self) -> int:
        return self.prior.n

    @property
    def m(self) -> int:
        return self.hidden_spec.num_qubits

    @property
    def num_weights(self) -> int:
        base = self.coupling.size + len(self.hidden_spec.terms)
        return base + (len(self.prior.theta) if self.theta_trainable else 0)


@dataclass(frozen=True)
class FreeEnergyReport:
    """F(v) = -c(v) + F'(v) along with the hidden Gibbs state of H'(v)."""

    f: float
    f_prime: float
    c: float
    gibbs: GibbsState


@dataclass(frozen=True)
class GradientReport:
    """d_weights follows the model weight layout; d_visible is dF/dv."""

    d_weights: np.ndarray | None
    d_visible: np.ndarray | None


def assemble_h_prime(model: CsqbmModel, v) -> np.ndarray:
    """H'(v) = -sum_ij W_ij s_i(v) P_j + hidden Hamiltonian."""
    v = np.asarray(v, dtype=float)
    if v.shape != (model.n,):
        raise ValueError(f"expected {model.n} visible values, got shape {v.shape}")
    stats = expfam.sufficient_stats(v)
    h = assemble_hamiltonian(model.hidden_spec)
    fields = stats @ model.coupling  # length m
    for j in range(model.m):
        if fields[j] != 0.0:
            h = h - fields[j] * embed_operator(model.coupling_basis, j, model.m)
    return h


def free_energy(model: CsqbmModel, v) -> FreeEnergyReport:
    """Decomposed free energy F(v) = -c(v) + F'(v)."""
    v = np.asarray(v, dtype=float)
    c = model.prior.c_value(v)
    state = gibbs_state(assemble_h_prime(model, v), model.beta)
    f_prime = -state.log_partition / model.beta
    return FreeEnergyReport(f=-c + f_prime, f_prime=f_prime, c=c, gibbs=state)


def free_energy_value(model: CsqbmModel, v) -> float:
    """F(v) without the report; strict models skip the eigendecomposition."""
    v = np.asarray(v, dtype=float)
    if not model.strict_sampler:
        return free_energy(model, v).f
    c = model.prior.c_value(v)
    _, _, log_z = _strict_hidden_probs(model, expfam.sufficient_stats(v))
    return -c - log_z / model.beta


def grad_free_energy(model: CsqbmModel, v, wrt: str = "both") -> GradientReport:
    """Analytic gradient dF = -dc + tr[rho' dH'] for weights and/or v."""
    if wrt not in ("weights", "visible", "both"):
        raise ValueError(f"unknown gradient target {wrt!r}")
    v = np.asarray(v, dtype=float)
    stats = expfam.sufficient_stats(v)
    if model.strict_sampler:
        # diagonal case: all expectations are spin averages under probs
        probs, spins, _ = _strict_hidden_probs(model, stats)
        pz = probs @ spins
        d_hidden = probs @ _sign_tables(model.hidden_spec)[1]
    else:
        state = free_energy(model, v).gibbs
        # One Pauli expectation per hidden qubit covers every coupling entry.
        pz = np.array([expectation(state, embed_operator(model.coupling_basis, j, model.m))
                       for j in range(model.m)])
        d_hidden = np.array([expectation(state, embed_term(t, model.m))
                             for t in model.hidden_spec.terms])

    d_weights = None
    if wrt in ("weights", "both"):
        d_coupling = -np.outer(stats, pz)
        parts = [d_coupling.ravel(), d_hidden]
        if model.theta_trainable:
            parts.append(-stats)
        d_weights = np.concatenate(parts) if parts else np.empty(0)

    d_visible = None
    if wrt in ("visible", "both"):
        jac = expfam.stats_jacobian(v)  # (2n, n)
        d_visible = -model.prior.grad_c_v(v) - (jac.T @ model.coupling) @ pz

    return GradientReport(d_weights=d_weights, d_visible=d_visible)


def weights_vector(model: CsqbmModel) -> np.ndarray:
    """Flatten trainable weights in the documented layout."""
    parts = [model.coupling.ravel(), model.hidden_spec.coefficients()]
    if model.theta_trainable:
        parts.append(np.asarray(model.prior.theta))
    return np.concatenate(parts)


def replace_weights(model: CsqbmModel, weights) -> CsqbmModel:
    """New model snapshot with the given flat weight vector."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (model.num_weights,):
        raise ValueError(f"expected {model.num_weights} weights, got shape {weights.shape}")
    d, m = model.coupling.shape
    coupling = weights[:d * m].reshape(d, m)
    n_terms = len(model.hidden_spec.terms)
    hidden = model.hidden_spec.with_coefficients(weights[d * m:d * m + n_terms])
    prior = model.prior
    if model.theta_trainable:
        prior = GaussianPrior(weights[d * m + n_terms:])
    return replace(model, prior=prior, coupling=coupling, hidden_spec=hidden)


def conditional_hidden(model: CsqbmModel, v, rng: np.random.Generator) -> np.ndarray:
    """One hidden spin configuration sampled from the Gibbs state of H'(v)."""
    state = gibbs_state(assemble_h_prime(model, v), model.beta)
    return sample_hidden(state, model.coupling_basis, rng)


def conditional_visible_params(model: CsqbmModel, h) -> np.ndarray:
    """Tilted natural parameters of p(v | h): theta' = beta (theta + W h)."""
    h = np.asarray(h, dtype=float)
    if h.shape != (model.m,) or not np.all(np.abs(h) == 1.0):
        raise ValueError(f"h must be a vector of {model.m} spins in {{-1,+1}}")
    return expfam.tilt(model.prior.theta, model.coupling, h, model.beta)


_SIGN_TABLE_CACHE: dict = {}


def _sign_tables(spec: PauliHamiltonianSpec) -> tuple[np.ndarray, np.ndarray]:
    """(outcome spins, per-term spin products) for a diagonal hidden spec.

    Row k of the first array holds the spins of outcome index k; entry
    (k, t) of the second is the product of those spins over term t's
    qubits. Both depend only on the term structure, so they are cached.
    """
    m = spec.num_qubits
    key = (m, tuple(tuple(q for q, _ in t.factors) for t in spec.terms))
    cached = _SIGN_TABLE_CACHE.get(key)
    if cached is None:
        idx = np.arange(2 ** m)
        bits = (idx[:, None] >> np.arange(m - 1, -1, -1)) & 1
        spins = (1 - 2 * bits).astype(float)
        term_signs = np.ones((2 ** m, len(spec.terms)))
        for t, qubits in enumerate(key[1]):
            for q in qubits:
                term_signs[:, t] *= spins[:, q]
        spins.setflags(write=False)
        term_signs.setflags(write=False)
        cached = _SIGN_TABLE_CACHE[key] = (spins, term_signs)
    return cached


def _strict_hidden_probs(model: CsqbmModel, stats: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """(outcome probabilities, outcome spins, log partition) for strict models.

    With every hidden term diagonal in the coupling basis, H'(v) is
    diagonal in the product eigenbasis, with energies
    E(h) = sum_t c_t prod(h on term t) - sum_j (W^T s(v))_j h_j.
    """
    spins, term_signs = _sign_tables(model.hidden_spec)
    energies = term_signs @ model.hidden_spec.coefficients() - spins @ (stats @ model.coupling)
    scaled = -model.beta * energies
    shift = scaled.max()
    weights = np.exp(scaled - shift)
    z = weights.sum()
    return weights / z, spins, float(np.log(z) + shift)


def gibbs_sample_action(model: CsqbmModel, clamp: dict[int, float] | None,
                        sweeps: int, rng: np.random.Generator) -> np.ndarray:
    """Blocked Gibbs sampling of the free visible coordinates.

    Clamped coordinates keep their values throughout; the free ones start
    from a prior draw and are resampled from the tilted conditional after
    each hidden sweep. Returns the free coordinates in index order.
    Strict models use a diagonal fast path that avoids eigendecompositions.
    """
    if sweeps < 1:
        raise ValueError("sweeps must be at least 1")
    clamp = dict(clamp or {})
    for idx in clamp:
        if not 0 <= idx < model.n:
            raise ValueError(f"clamp index {idx} out of range")
    free = np.array([i for i in range(model.n) if i not in clamp], dtype=int)
    v = np.empty(model.n)
    for idx, val in clamp.items():
        v[idx] = val
    v[free] = model.prior.sample(rng)[free]
    if not model.strict_sampler:
        for _ in range(sweeps):
            h = conditional_hidden(model, v, rng)
            tilted = conditional_visible_params(model, h)
            v[free] = expfam.sample(tilted, rng)[free]
        return v[free].copy()

    theta = np.asarray(model.prior.theta)
    free_stat_rows = np.concatenate([[2 * i, 2 * i + 1] for i in free]) if len(free) else np.empty(0, int)
    stats = expfam.sufficient_stats(v)
    for _ in range(sweeps):
        probs, spins, _ = _strict_hidden_probs(model, stats)
        k = int(np.searchsorted(np.cumsum(probs), rng.random()))
        h = spins[min(k, len(probs) - 1)]
        tilted = model.beta * (theta + model.coupling @ h)
        quad = tilted[1::2]
        if np.any(quad >= 0):
            bad = int(np.flatnonzero(quad >= 0)[0])
            raise expfam.IntegrabilityError(
                f"quadratic natural parameter of unit {bad} is {quad[bad]:.6g} >= 0; "
                "density is not normalizable")
        var = -0.5 / quad
        mu = tilted[0::2] * var
        v[free] = mu[free] + np.sqrt(var[free]) * rng.standard_normal(len(free))
        stats[free_stat_rows] = expfam.sufficient_stats(v)[free_stat_rows]
    return v[free].copy()


def q_value(model: CsqbmModel, s, a) -> float:
    """Q(s, a) = -F(v) with v = (s, a) concatenated."""
    v = np.concatenate([np.atleast_1d(np.asarray(s, dtype=float)),
                        np.atleast_1d(np.asarray(a, dtype=float))])
    return -free_energy_value(model, v)


# ---------------------------------------------------------------------------
# Discrete spin-visible baseline (all visible terms Pauli-Z, computed by
# clamping the visible spins into scalars).
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteSqbmModel:
    """Spin-visible model over n + m qubits; qubits 0..n-1 are visible.

    Every factor acting on a visible qubit must be Pauli-Z; that is what
    makes clamping equal to the projected-trace definition.
    """

    num_visible: int
    spec: PauliHamiltonianSpec
    beta: float

    def __post_init__(self):
        if not 0 < self.num_visible <= self.spec.num_qubits:
            raise ValueError("num_visible must be in 1..num_qubits")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        for term in self.spec.terms:
            for q, op in term.factors:
                if q < self.num_visible and op is not PauliOp.Z:
                    raise ValueError(
                        f"visible qubit {q} carries {op.value}; only Z is allowed")

    @property
    def num_hidden(self) -> int:
        return self.spec.num_qubits - self.num_visible


def _clamp_terms(model: DiscreteSqbmModel, v: np.ndarray):
    """Per-term (scalar visible factor, hidden factors) after substituting v."""
    n = model.num_visible
    out = []
    for term in model.spec.terms:
        scalar = 1.0
        hidden = []
        for q, op in term.factors:
            if q < n:
                scalar *= v[q]
            else:
                hidden.append((q - n, op))
        out.append((scalar, tuple(hidden)))
    return out


def _clamped_decomposition(model: DiscreteSqbmModel, v) -> tuple[float, np.ndarray]:
    """(constant energy, hidden-space matrix) of the clamped Hamiltonian."""
    v = np.asarray(v, dtype=float)
    if v.shape != (model.num_visible,) or not np.all(np.abs(v) == 1.0):
        raise ValueError(f"v must be {model.num_visible} spins in {{-1,+1}}")
    m = model.num_hidden
    const = 0.0
    h = np.zeros((2 ** m, 2 ** m), dtype=complex)
    for (scalar, hidden), term in zip(_clamp_terms(model, v), model.spec.terms):
        if hidden:
            h += term.coefficient * scalar * _embed_factors_cached(hidden, m)
        else:
            const += term.coefficient * scalar
    return const, h


def _embed_factors_cached(factors, m):
    from .pauli import _embedded_factors
    return _embedded_factors(tuple(factors), m)


def discrete_free_energy(model: DiscreteSqbmModel, v) -> float:
    """F(v) of the spin-visible model via clamping."""
    const, h = _clamped_decomposition(model, v)
    if h.shape == (1, 1):
        return const
    state = gibbs_state(h, model.beta)
    return const - state.log_partition / model.beta


def discrete_grad_free_energy(model: DiscreteSqbmModel, v) -> np.ndarray:
    """dF/d(coefficient) per spec term, as the clamped Gibbs expectation."""
    const, h = _clamped_decomposition(model, v)
    del const
    v = np.asarray(v, dtype=float)
    m = model.num_hidden
    state = gibbs_state(h, model.beta) if m > 0 else None
    grad = np.empty(len(model.spec.terms))
    for k, (scalar, hidden) in enumerate(_clamp_terms(model, v)):
        if hidden:
            grad[k] = scalar * expectation(state, _embed_factors_cached(hidden, m))
        else:
            grad[k] = scalar
    return grad


# ---------------------------------------------------------------------------
# Checkpoint format: versioned JSON, weights round-trip bit-exactly because
# Python's float repr is shortest-round-trip.
# ---------------------------------------------------------------------------

def checkpoint_dict(model: CsqbmModel, rng_label: str = "") -> dict:
    return {
        "format_version": CHECKPOINT_VERSION,
        "family": "gaussian",
        "n": model.n,
        "m": model.m,
        "coupling_basis": model.coupling_basis.value,
        "beta": model.beta,
        "theta": list(map(float, model.prior.theta)),
        "coupling": [list(map(float, row)) for row in model.coupling],
        "hidden_terms": [
            {"coefficient": t.coefficient,
             "factors": [[q, op.value] for q, op in t.factors]}
            for t in model.hidden_spec.terms
        ],
        "strict_sampler": model.strict_sampler,
        "theta_trainable": model.theta_trainable,
        "rng_label": rng_label,
    }


def model_from_dict(data: dict) -> CsqbmModel:
    if data.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('format_version')!r}")
    if data.get("family") != "gaussian":
        raise ValueError(f"unsupported family {data.get('family')!r}")
    terms = tuple(
        PauliTerm(t["coefficient"], tuple((q, PauliOp(op)) for q, op in t["factors"]))
        for t in data["hidden_terms"])
    spec = PauliHamiltonianSpec(data["m"], terms)
    return CsqbmModel(
        prior=GaussianPrior(np.array(data["theta"], dtype=float)),
        coupling=np.array(data["coupling"], dtype=float).reshape(2 * data["n"], data["m"]),
        hidden_spec=spec,
        coupling_basis=PauliOp(data["coupling_basis"]),
        beta=float(data["beta"]),
        strict_sampler=bool(data["strict_sampler"]),
        theta_trainable=bool(data["theta_trainable"]),
    )


def save_checkpoint(model: CsqbmModel, path, rng_label: str = "") -> None:
    with open(path, "w") as fh:
        json.dump(checkpoint_dict(model, rng_label), fh, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> CsqbmModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
