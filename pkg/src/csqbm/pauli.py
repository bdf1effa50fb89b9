"""Dense Pauli-operator algebra and Gibbs states for small qubit registers.

Conventions used throughout the package:

* qubit 0 is the leftmost Kronecker factor, i.e. the most significant bit
  of a computational-basis index;
* measurement outcome bit 0 corresponds to eigenvalue +1 and spin +1,
  bit 1 to eigenvalue -1 and spin -1.

Everything is dense; the intended regime is at most ~10 qubits.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
import math

import numpy as np

HERMITICITY_RTOL = 1e-12
TRACE_ATOL = 1e-10


class PauliOp(str, Enum):
    X = "X"
    Y = "Y"
    Z = "Z"


_PAULI_MATRICES = {
    PauliOp.X: np.array([[0, 1], [1, 0]], dtype=complex),
    PauliOp.Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
    PauliOp.Z: np.array([[1, 0], [0, -1]], dtype=complex),
}

# Columns are the +1 and -1 eigenvectors of each Pauli, in that order.
_EIGENBASIS = {
    PauliOp.X: np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2),
    PauliOp.Y: np.array([[1, 1], [1j, -1j]], dtype=complex) / math.sqrt(2),
    PauliOp.Z: np.eye(2, dtype=complex),
}


def pauli_matrix(op: PauliOp) -> np.ndarray:
    """Return a copy of the standard 2x2 matrix for `op`."""
    return _PAULI_MATRICES[PauliOp(op)].copy()


class NonHermitianError(ValueError):
    """Raised when an operator expected to be Hermitian is not."""


def check_hermitian(h: np.ndarray, rtol: float = HERMITICITY_RTOL) -> None:
    """Raise NonHermitianError unless h equals its conjugate transpose.

    The comparison is relative in Frobenius norm; the zero matrix passes.
    """
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise NonHermitianError(f"expected a square matrix, got shape {h.shape}")
    scale = np.linalg.norm(h)
    dev = np.linalg.norm(h - h.conj().T)
    if dev > rtol * max(scale, 1.0):
        raise NonHermitianError(f"matrix is not Hermitian (relative deviation {dev / max(scale, 1.0):.3e})")


@dataclass(frozen=True)
class PauliTerm:
    """A weighted product of one or two single-qubit Pauli factors."""

    coefficient: float
    factors: tuple[tuple[int, PauliOp], ...]

    def __post_init__(self):
        if not math.isfinite(self.coefficient):
            raise ValueError("term coefficient must be finite")
        factors = tuple((int(q), PauliOp(op)) for q, op in self.factors)
        object.__setattr__(self, "factors", factors)
        if not 1 <= len(factors) <= 2:
            raise ValueError("a term must have one or two factors")
        qubits = [q for q, _ in factors]
        if any(q < 0 for q in qubits):
            raise ValueError("qubit indices must be non-negative")
        if sorted(set(qubits)) != qubits:
            raise ValueError("qubit indices must be strictly increasing")


@dataclass(frozen=True)
class PauliHamiltonianSpec:
    """Sparse description of a Hermitian operator as a sum of Pauli terms."""

    num_qubits: int
    terms: tuple[PauliTerm, ...]

    def __post_init__(self):
        if self.num_qubits < 1:
            raise ValueError("num_qubits must be positive")
        object.__setattr__(self, "terms", tuple(self.terms))
        for term in self.terms:
            for q, _ in term.factors:
                if q >= self.num_qubits:
                    raise ValueError(f"qubit index {q} out of range for {self.num_qubits} qubits")

    @property
    def dim(self) -> int:
        return 2 ** self.num_qubits

    def coefficients(self) -> np.ndarray:
        return np.array([t.coefficient for t in self.terms], dtype=float)

    def with_coefficients(self, coeffs) -> "PauliHamiltonianSpec":
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (len(self.terms),):
            raise ValueError("coefficient vector length must match term count")
        terms = tuple(PauliTerm(float(c), t.factors) for c, t in zip(coeffs, self.terms))
        return PauliHamiltonianSpec(self.num_qubits, terms)


@lru_cache(maxsize=4096)
def _embedded_factors(factors: tuple[tuple[int, PauliOp], ...], m: int) -> np.ndarray:
    """Kronecker embedding of a Pauli product into the m-qubit space (cached)."""
    ops = dict(factors)
    out = np.array([[1.0 + 0j]])
    for q in range(m):
        out = np.kron(out, _PAULI_MATRICES[ops[q]] if q in ops else np.eye(2, dtype=complex))
    out.setflags(write=False)
    return out


def embed_operator(op: PauliOp, qubit: int, m: int) -> np.ndarray:
    """Apply `op` to `qubit` and identity elsewhere; qubit 0 is leftmost."""
    if not 0 <= qubit < m:
        raise IndexError(f"qubit {qubit} out of range for {m} qubits")
    return _embedded_factors(((qubit, PauliOp(op)),), m)


def embed_term(term: PauliTerm, m: int) -> np.ndarray:
    """Embedded operator of the term's Pauli product, without the coefficient."""
    return _embedded_factors(term.factors, m)


def assemble_hamiltonian(spec: PauliHamiltonianSpec) -> np.ndarray:
    """Sum of coefficient-weighted embedded Pauli products."""
    h = np.zeros((spec.dim, spec.dim), dtype=complex)
    for term in spec.terms:
        h += term.coefficient * embed_term(term, spec.num_qubits)
    return h


@dataclass(frozen=True)
class GibbsState:
    """Thermal state e^{-beta H} / Z with its cached eigendecomposition.

    `log_partition` is log tr[e^{-beta H}]; `eigvals`/`eigvecs` are the
    eigendecomposition of H itself (not of rho).
    """

    rho: np.ndarray
    beta: float
    log_partition: float
    eigvals: np.ndarray
    eigvecs: np.ndarray

    @property
    def num_qubits(self) -> int:
        return int(round(math.log2(self.rho.shape[0])))


def gibbs_state(h: np.ndarray, beta: float) -> GibbsState:
    """Eigendecompose h and build the normalized thermal state at `beta`.

    The spectrum is shifted by its minimum before exponentiation so the
    computation cannot overflow; the shift is restored in log_partition.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    h = np.asarray(h, dtype=complex)
    check_hermitian(h)
    eigvals, eigvecs = np.linalg.eigh(h)
    shifted = -beta * (eigvals - eigvals[0])  # eigvals sorted ascending
    weights = np.exp(shifted)
    z_shifted = weights.sum()
    log_partition = float(np.log(z_shifted) - beta * eigvals[0])
    probs = weights / z_shifted
    rho = (eigvecs * probs) @ eigvecs.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return GibbsState(rho=rho, beta=float(beta), log_partition=log_partition,
                      eigvals=eigvals, eigvecs=eigvecs)


def expectation(state: GibbsState, observable: np.ndarray) -> float:
    """tr[rho . observable]; the imaginary residue must be negligible."""
    observable = np.asarray(observable)
    if observable.shape != state.rho.shape:
        raise ValueError(f"dimension mismatch: {observable.shape} vs {state.rho.shape}")
    val = np.einsum("ij,ji->", state.rho, observable)
    if abs(val.imag) >= 1e-10:
        raise ValueError(f"expectation has non-negligible imaginary part {val.imag:.3e}")
    return float(val.real)


@lru_cache(maxsize=64)
def _basis_change(basis: PauliOp, m: int) -> np.ndarray:
    """m-qubit unitary whose columns are the product eigenbasis of `basis`."""
    u = np.array([[1.0 + 0j]])
    single = _EIGENBASIS[PauliOp(basis)]
    for _ in range(m):
        u = np.kron(u, single)
    u.setflags(write=False)
    return u


def measurement_distribution(state: GibbsState, basis: PauliOp) -> np.ndarray:
    """Outcome probabilities for measuring every qubit in the same Pauli basis.

    Outcome index bits are big-endian over qubits; bit 0 means eigenvalue +1.
    """
    basis = PauliOp(basis)
    if basis is PauliOp.Z:
        probs = np.real(np.diag(state.rho)).copy()
    else:
        u = _basis_change(basis, state.num_qubits)
        probs = np.real(np.einsum("ij,jk,ki->i", u.conj().T, state.rho, u)).copy()
    np.clip(probs, 0.0, None, out=probs)
    total = probs.sum()
    if abs(total - 1.0) > TRACE_ATOL:
        raise ValueError(f"measurement probabilities sum to {total}, expected 1")
    return probs / total


def spins_from_index(index: int, m: int) -> np.ndarray:
    """Map an outcome index to spins in {-1,+1}^m (bit 0 -> spin +1)."""
    bits = (index >> np.arange(m - 1, -1, -1)) & 1
    return 1 - 2 * bits


def index_from_spins(spins) -> int:
    """Inverse of spins_from_index."""
    bits = (1 - np.asarray(spins, dtype=int)) // 2
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def sample_hidden(state: GibbsState, basis: PauliOp, rng: np.random.Generator) -> np.ndarray:
    """Draw one measurement outcome and return it as a spin vector."""
    probs = measurement_distribution(state, basis)
    index = int(rng.choice(len(probs), p=probs))
    return spins_from_index(index, state.num_qubits)
