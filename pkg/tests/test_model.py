from dataclasses import dataclass, replace

import numpy as np
import pytest

import csqbm.expfam as expfam
from csqbm import (
    CsqbmModel,
    DiscreteSqbmModel,
    GaussianPrior,
    PauliHamiltonianSpec,
    PauliOp,
    PauliTerm,
    assemble_h_prime,
    conditional_hidden,
    conditional_visible_params,
    discrete_free_energy,
    discrete_grad_free_energy,
    free_energy,
    grad_free_energy,
    load_checkpoint,
    q_value,
    save_checkpoint,
)
from csqbm.model import replace_weights, weights_vector
from conftest import pick, random_model, random_spec
from oracles import (
    central_diff,
    oracle_free_energy,
    oracle_h_prime,
    projected_free_energy,
    rel_err,
    scalar_kron_operator,
    spec_matrix,
    spin_projector,
)
import scipy.linalg as sla


def simple_model(beta=1.0, w=0.7, hidden_coeff=0.0, m=1, n=1, sigma=1.0, mu=0.0):
    prior = GaussianPrior.from_moments([mu] * n, [sigma] * n)
    coupling = np.zeros((2 * n, m))
    coupling[0, 0] = w
    terms = tuple(PauliTerm(hidden_coeff, ((j, PauliOp.Z),)) for j in range(m)
                  if hidden_coeff != 0.0)
    return CsqbmModel(prior=prior, coupling=coupling,
                      hidden_spec=PauliHamiltonianSpec(m, terms),
                      coupling_basis=PauliOp.Z, beta=beta)


class TestAssembleHPrime:
    def test_decoupled_is_hidden_part(self, rng):
        model = random_model(rng, n=1, m=2)
        model = replace(model, coupling=np.zeros_like(model.coupling))
        h0 = assemble_h_prime(model, np.array([0.3]))
        h1 = assemble_h_prime(model, np.array([-1.4]))
        np.testing.assert_allclose(h0, h1)
        np.testing.assert_allclose(h0, spec_matrix(model.hidden_spec), atol=1e-14)

    def test_zero_visible_vanishing_statistics(self, rng):
        model = random_model(rng, n=2, m=2)
        np.testing.assert_allclose(assemble_h_prime(model, np.zeros(2)),
                                   spec_matrix(model.hidden_spec), atol=1e-14)

    def test_single_term_hand_computation(self):
        model = simple_model(w=0.7)
        np.testing.assert_allclose(assemble_h_prime(model, np.array([2.0])),
                                   np.diag([-1.4, 1.4]), atol=1e-14)

    def test_matches_oracle_assembly(self, rng):
        for _ in range(20):
            model = random_model(rng)
            v = rng.normal(size=model.n)
            np.testing.assert_allclose(assemble_h_prime(model, v),
                                       oracle_h_prime(model, v), atol=1e-12)


class TestFreeEnergy:
    def test_decoupled_standard_normal(self):
        model = simple_model(w=0.0)
        report = free_energy(model, np.array([0.0]))
        assert report.f == pytest.approx(-np.log(2), abs=1e-12)
        report = free_energy(model, np.array([1.0]))
        assert report.f == pytest.approx(0.5 - np.log(2), abs=1e-12)

    def test_decomposition_is_exact_by_construction(self, rng):
        model = random_model(rng)
        report = free_energy(model, rng.normal(size=model.n))
        assert report.f == -report.c + report.f_prime

    def test_identity_against_dense_oracle(self, rng):
        # Decomposed F(v) = -c(v) + F'(v) vs the one-piece dense evaluation
        for _ in range(50):
            model = random_model(rng)
            v = rng.normal(size=model.n)
            assert abs(free_energy(model, v).f - oracle_free_energy(model, v)) <= 1e-10


class TestGradFreeEnergy:
    def test_decoupled_visible_gradient_is_prior_term(self, rng):
        model = random_model(rng, n=2, m=2)
        model = replace(model, coupling=np.zeros_like(model.coupling))
        v = rng.normal(size=2)
        report = grad_free_energy(model, v, wrt="visible")
        np.testing.assert_allclose(report.d_visible, -model.prior.grad_c_v(v), atol=1e-12)

    def test_zero_statistic_weight_gradient(self):
        model = simple_model(w=0.7)
        report = grad_free_energy(model, np.array([0.0]), wrt="weights")
        assert report.d_weights[0] == pytest.approx(0.0, abs=1e-12)

    def test_finite_difference_oracle(self, rng):
        step = 1e-5
        for _ in range(100):
            model = random_model(rng, quadratic_coupling=bool(rng.random() < 0.3))
            v = rng.normal(size=model.n)
            report = grad_free_energy(model, v, wrt="both")
            w0 = weights_vector(model)
            for k in range(model.num_weights):
                def f_of_wk(x, k=k):
                    w = w0.copy()
                    w[k] = x
                    return free_energy(replace_weights(model, w), v).f
                assert rel_err(report.d_weights[k], central_diff(f_of_wk, w0[k], step)) < 1e-6
            for k in range(model.n):
                def f_of_vk(x, k=k):
                    u = v.copy()
                    u[k] = x
                    return free_energy(model, u).f
                assert rel_err(report.d_visible[k], central_diff(f_of_vk, v[k], step)) < 1e-6

    def test_theta_gradient_when_trainable(self, rng):
        model = replace(random_model(rng, n=1, m=2), theta_trainable=True)
        v = rng.normal(size=1)
        report = grad_free_energy(model, v, wrt="weights")
        np.testing.assert_allclose(report.d_weights[-2:], -expfam.sufficient_stats(v))

    def test_unknown_target_rejected(self, rng):
        with pytest.raises(ValueError):
            grad_free_energy(random_model(rng), np.zeros(1), wrt="everything")


class TestConditionals:
    def test_hidden_uniform_when_decoupled(self):
        model = simple_model(w=0.0, m=2)
        rng = np.random.default_rng(3)
        counts = np.zeros(2)
        for _ in range(40_000):
            h = conditional_hidden(model, np.array([0.5]), rng)
            counts[0] += h[0] == 1
            counts[1] += h[1] == 1
        np.testing.assert_allclose(counts / 40_000, [0.5, 0.5], atol=0.02)

    def test_hidden_closed_form_bias(self):
        # H' = -Z at v=1, w=1: p(h=+1) = e^beta / (e^beta + e^-beta)
        model = simple_model(w=1.0, beta=1.0)
        rng = np.random.default_rng(4)
        hits = sum(conditional_hidden(model, np.array([1.0]), rng)[0] == 1
                   for _ in range(40_000))
        assert hits / 40_000 == pytest.approx(np.e / (np.e + 1 / np.e), abs=0.01)

    def test_hidden_seed_determinism(self, rng):
        model = random_model(rng, diagonal=True)
        v = rng.normal(size=model.n)
        a = [conditional_hidden(model, v, np.random.default_rng(9)).tolist() for _ in range(5)]
        b = [conditional_hidden(model, v, np.random.default_rng(9)).tolist() for _ in range(5)]
        assert a == b

    def test_visible_params_zero_coupling(self):
        model = simple_model(w=0.0, beta=2.0)
        tilted = conditional_visible_params(model, np.array([1]))
        np.testing.assert_allclose(tilted, 2.0 * np.asarray(model.prior.theta))

    def test_visible_params_delegate_to_tilt(self):
        model = simple_model(w=0.3, beta=1.0)
        tilted = conditional_visible_params(model, np.array([1]))
        np.testing.assert_allclose(tilted, [0.3, -0.5])

    def test_rejects_non_spin_h(self):
        model = simple_model()
        with pytest.raises(ValueError):
            conditional_visible_params(model, np.array([0.5]))

    @pytest.mark.parametrize("m,basis", [(1, PauliOp.Z), (2, PauliOp.Z), (3, PauliOp.Z),
                                         (2, PauliOp.X)])
    def test_tilted_conditional_grid_oracle(self, rng, m, basis):
        # closed-form tilted Gaussian vs brute-force <h| e^{-beta H(v)} |h> on a grid
        prior = GaussianPrior.from_moments([0.3], [0.8])
        coupling = np.zeros((2, m))
        coupling[0, :] = rng.uniform(-1, 1, size=m)
        spec = random_spec(rng, m, ops=(basis,), max_terms=3)
        model = CsqbmModel(prior=prior, coupling=coupling, hidden_spec=spec,
                           coupling_basis=basis, beta=1.5, strict_sampler=True)
        h_spins = np.array([pick(rng, [-1, 1]) for _ in range(m)])

        tilted = conditional_visible_params(model, h_spins)
        mu, sigma = expfam.moments_from_natural(tilted)
        grid = np.linspace(mu[0] - 8 * sigma[0], mu[0] + 8 * sigma[0], 4001)
        closed = np.exp([expfam.log_density(tilted, np.array([x])) for x in grid])

        eigvec = {PauliOp.Z: {1: [1, 0], -1: [0, 1]},
                  PauliOp.X: {1: [2**-0.5, 2**-0.5], -1: [2**-0.5, -(2**-0.5)]}}
        ket = np.array([1.0 + 0j])
        for s in h_spins:
            ket = np.kron(ket, np.array(eigvec[basis][int(s)], dtype=complex))
        raw = np.empty_like(grid)
        for i, x in enumerate(grid):
            v = np.array([x])
            h_full = -prior.c_value(v) * np.eye(2 ** m) + oracle_h_prime(model, v)
            raw[i] = (ket.conj() @ sla.expm(-model.beta * h_full) @ ket).real
        brute = raw / np.trapezoid(raw, grid)
        assert np.max(np.abs(closed - brute)) <= 1e-8


class TestShiftCovariance:
    def test_constant_shift_of_c(self, rng):
        @dataclass(frozen=True)
        class OffsetPrior(GaussianPrior):
            offset: float = 0.0

            def c_value(self, v):
                return super().c_value(v) + self.offset

        base = random_model(rng, n=1, m=2, diagonal=True)
        k = 1.75
        shifted = replace(base, prior=OffsetPrior(np.asarray(base.prior.theta), offset=k))
        v = rng.normal(size=1)
        f0, f1 = free_energy(base, v), free_energy(shifted, v)
        assert f1.f == pytest.approx(f0.f - k, abs=1e-12)
        g0 = grad_free_energy(base, v, wrt="both")
        g1 = grad_free_energy(shifted, v, wrt="both")
        np.testing.assert_allclose(g1.d_weights, g0.d_weights, atol=1e-12)
        np.testing.assert_allclose(g1.d_visible, g0.d_visible, atol=1e-12)
        np.testing.assert_array_equal(conditional_visible_params(shifted, np.array([1, -1])),
                                      conditional_visible_params(base, np.array([1, -1])))
        from csqbm import gibbs_sample_action
        a0 = gibbs_sample_action(base, {}, 5, np.random.default_rng(13))
        a1 = gibbs_sample_action(shifted, {}, 5, np.random.default_rng(13))
        np.testing.assert_array_equal(a0, a1)


class TestQValue:
    def test_negated_free_energy(self, rng):
        model = random_model(rng, n=2)
        s, a = np.array([0.2]), np.array([-0.4])
        assert q_value(model, s, a) == -free_energy(model, np.array([0.2, -0.4])).f

    def test_argmax_equals_argmin_f(self, rng):
        model = random_model(rng, n=2)
        s = np.array([0.1])
        grid = np.linspace(-2, 2, 101)
        qs = [q_value(model, s, np.array([a])) for a in grid]
        fs = [free_energy(model, np.array([0.1, a])).f for a in grid]
        assert int(np.argmax(qs)) == int(np.argmin(fs))

    def test_hidden_relabeling_invariance(self, rng):
        model = random_model(rng, n=1, m=3)
        perm = np.array([2, 0, 1])
        inv = np.argsort(perm)
        terms = tuple(
            PauliTerm(t.coefficient,
                      tuple(sorted(((int(inv[q]), op) for q, op in t.factors),
                                   key=lambda f: f[0])))
            for t in model.hidden_spec.terms)
        permuted = replace(model,
                           coupling=model.coupling[:, perm],
                           hidden_spec=PauliHamiltonianSpec(3, terms))
        for _ in range(5):
            s, a = rng.normal(size=0), rng.normal(size=1)
            assert q_value(permuted, s, a) == pytest.approx(q_value(model, s, a), abs=1e-10)


class TestDiscreteSqbm:
    def test_single_coupling_closed_form(self):
        spec = PauliHamiltonianSpec(2, (PauliTerm(1.0, ((0, PauliOp.Z), (1, PauliOp.Z))),))
        model = DiscreteSqbmModel(num_visible=1, spec=spec, beta=1.0)
        f = discrete_free_energy(model, np.array([1.0]))
        assert f == pytest.approx(-np.log(2 * np.cosh(1.0)), abs=1e-12)

    def test_no_hidden_scalar_energy(self):
        spec = PauliHamiltonianSpec(1, (PauliTerm(0.8, ((0, PauliOp.Z),)),))
        model = DiscreteSqbmModel(num_visible=1, spec=spec, beta=2.0)
        assert discrete_free_energy(model, np.array([-1.0])) == pytest.approx(-0.8)

    def test_rejects_non_z_visible(self):
        spec = PauliHamiltonianSpec(2, (PauliTerm(1.0, ((0, PauliOp.X),)),))
        with pytest.raises(ValueError):
            DiscreteSqbmModel(num_visible=1, spec=spec, beta=1.0)

    def _random_discrete(self, rng):
        total = int(rng.integers(2, 7))
        n = int(rng.integers(1, total))
        m = total - n
        terms = []
        for _ in range(rng.integers(1, 7)):
            coeff = float(rng.uniform(-1, 1))
            if rng.random() < 0.5 and total >= 2:
                q1, q2 = sorted(rng.choice(total, size=2, replace=False))
                factors = tuple((int(q), PauliOp.Z if q < n else pick(rng, list(PauliOp)))
                                for q in (q1, q2))
            else:
                q = int(rng.integers(total))
                factors = ((q, PauliOp.Z if q < n else pick(rng, list(PauliOp))),)
            terms.append(PauliTerm(coeff, factors))
        spec = PauliHamiltonianSpec(total, tuple(terms))
        beta = float(rng.choice([0.5, 1.0, 2.0]))
        return DiscreteSqbmModel(num_visible=n, spec=spec, beta=beta)

    def test_clamping_matches_projection_oracle(self, rng):
        for _ in range(50):
            model = self._random_discrete(rng)
            v = np.array([pick(rng, [-1.0, 1.0]) for _ in range(model.num_visible)])
            h_full = spec_matrix(model.spec)
            oracle = projected_free_energy(h_full, v, model.spec.num_qubits, model.beta)
            assert abs(discrete_free_energy(model, v) - oracle) <= 1e-10

    def test_gradient_matches_projection_oracle(self, rng):
        for _ in range(20):
            model = self._random_discrete(rng)
            total = model.spec.num_qubits
            v = np.array([pick(rng, [-1.0, 1.0]) for _ in range(model.num_visible)])
            grad = discrete_grad_free_energy(model, v)
            h_full = spec_matrix(model.spec)
            eh = sla.expm(-model.beta * h_full)
            proj = spin_projector(v, total)
            norm = np.trace(eh @ proj).real
            for k, term in enumerate(model.spec.terms):
                labels = ["I"] * total
                for q, op in term.factors:
                    labels[q] = op.value
                dh = scalar_kron_operator(labels)
                oracle = (np.trace(eh @ proj @ dh) / norm).real
                assert abs(grad[k] - oracle) <= 1e-10

    def test_gradient_matches_finite_differences(self, rng):
        model = self._random_discrete(rng)
        v = np.array([pick(rng, [-1.0, 1.0]) for _ in range(model.num_visible)])
        grad = discrete_grad_free_energy(model, v)
        coeffs = model.spec.coefficients()
        for k in range(len(coeffs)):
            def f_of_ck(x, k=k):
                c = coeffs.copy()
                c[k] = x
                return discrete_free_energy(
                    DiscreteSqbmModel(model.num_visible, model.spec.with_coefficients(c),
                                      model.beta), v)
            assert rel_err(grad[k], central_diff(f_of_ck, coeffs[k])) < 1e-6

    def test_zero_weight_bias_gradient(self):
        spec = PauliHamiltonianSpec(2, (PauliTerm(0.0, ((0, PauliOp.Z),)),
                                        PauliTerm(0.0, ((1, PauliOp.Z),))))
        model = DiscreteSqbmModel(num_visible=1, spec=spec, beta=1.0)
        grad = discrete_grad_free_energy(model, np.array([-1.0]))
        assert grad[0] == pytest.approx(-1.0)  # d/dw of the visible bias term is v
        assert grad[1] == pytest.approx(0.0, abs=1e-12)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, rng, tmp_path):
        model = random_model(rng, quadratic_coupling=True)
        path = tmp_path / "ckpt.json"
        save_checkpoint(model, path, rng_label="seed=7")
        loaded = load_checkpoint(path)
        np.testing.assert_array_equal(weights_vector(loaded), weights_vector(model))
        np.testing.assert_array_equal(np.asarray(loaded.prior.theta),
                                      np.asarray(model.prior.theta))
        assert loaded.coupling_basis == model.coupling_basis
        assert loaded.beta == model.beta
        assert loaded.hidden_spec == model.hidden_spec

    def test_rejects_unknown_version(self, tmp_path):
        import json
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"format_version": 99}))
        with pytest.raises(ValueError):
            load_checkpoint(path)


class TestModelValidation:
    def test_strict_sampler_rejects_off_basis_terms(self):
        prior = GaussianPrior.from_moments([0.0], [1.0])
        spec = PauliHamiltonianSpec(1, (PauliTerm(0.5, ((0, PauliOp.X),)),))
        with pytest.raises(ValueError, match="strict_sampler"):
            CsqbmModel(prior=prior, coupling=np.zeros((2, 1)), hidden_spec=spec,
                       coupling_basis=PauliOp.Z, beta=1.0, strict_sampler=True)
        # allowed once strictness is off
        CsqbmModel(prior=prior, coupling=np.zeros((2, 1)), hidden_spec=spec,
                   coupling_basis=PauliOp.Z, beta=1.0, strict_sampler=False)

    def test_shape_mismatch(self):
        prior = GaussianPrior.from_moments([0.0], [1.0])
        with pytest.raises(ValueError):
            CsqbmModel(prior=prior, coupling=np.zeros((2, 2)),
                       hidden_spec=PauliHamiltonianSpec(1, ()),
                       coupling_basis=PauliOp.Z, beta=1.0)
