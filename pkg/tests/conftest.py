import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from csqbm import CsqbmModel, GaussianPrior, PauliHamiltonianSpec, PauliOp, PauliTerm

ALL_OPS = (PauliOp.X, PauliOp.Y, PauliOp.Z)


def pick(rng, options):
    """rng.choice mangles str-enums into numpy strings; index instead."""
    return options[int(rng.integers(len(options)))]


def random_spec(rng, m, max_terms=6, ops=ALL_OPS, scale=1.0) -> PauliHamiltonianSpec:
    terms = []
    for _ in range(rng.integers(1, max_terms + 1)):
        coeff = float(rng.uniform(-scale, scale))
        if m >= 2 and rng.random() < 0.5:
            q1, q2 = sorted(rng.choice(m, size=2, replace=False))
            factors = ((int(q1), pick(rng, ops)), (int(q2), pick(rng, ops)))
        else:
            factors = ((int(rng.integers(m)), pick(rng, ops)),)
        terms.append(PauliTerm(coeff, factors))
    return PauliHamiltonianSpec(m, tuple(terms))


def random_model(rng, n=None, m=None, diagonal=False, beta=None,
                 quadratic_coupling=False) -> CsqbmModel:
    """Random small model; weights ~ U[-1,1], beta in {0.5, 1, 2}."""
    n = int(n if n is not None else rng.integers(1, 3))
    m = int(m if m is not None else rng.integers(1, 5))
    basis = pick(rng, ALL_OPS)
    mus = rng.uniform(-1, 1, size=n)
    sigmas = rng.uniform(0.5, 2.0, size=n)
    prior = GaussianPrior.from_moments(mus, sigmas)
    coupling = np.zeros((2 * n, m))
    coupling[0::2, :] = rng.uniform(-1, 1, size=(n, m))
    if quadratic_coupling:
        # keep tilted quadratic components negative for every h
        coupling[1::2, :] = rng.uniform(-1, 1, size=(n, m)) * 0.1 / max(m, 1)
    ops = (basis,) if diagonal else ALL_OPS
    spec = random_spec(rng, m, ops=ops)
    beta = float(beta if beta is not None else rng.choice([0.5, 1.0, 2.0]))
    return CsqbmModel(prior=prior, coupling=coupling, hidden_spec=spec,
                      coupling_basis=basis, beta=beta, strict_sampler=diagonal)


@pytest.fixture
def rng():
    return np.random.default_rng(20260824)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
