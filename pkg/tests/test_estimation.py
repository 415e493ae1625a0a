import json

import numpy as np
import pytest

from phfrailty import (
    BaselineHazard,
    Dataset,
    FitOptions,
    FrailtyModel,
    PhaseType,
    StateStarvationError,
    UnsupportedDataError,
    erlang,
    fit,
    hyperexponential,
    make_structure,
)
from phfrailty.estimation import (
    WeightedSample,
    baseline_objective,
    estep_expectations,
    initial_model,
    maximize_baseline,
    mixture_nodes,
    weighted_loglik,
    weighted_ph_em_iteration,
)
from phfrailty.frailty import loglikelihood
from phfrailty.simulation import simulate_dataset, simulate_lognormal_two_group

from conftest import quad_frailty_moment, random_model

EXP1 = PhaseType([1.0], [[-1.0]])
CONST = BaselineHazard.constant(1.0)


def pareto(rate=1.0):
    return FrailtyModel(PhaseType([1.0], [[-rate]]), CONST)


class TestEstep:
    def test_examples(self):
        ez = estep_expectations(pareto(), Dataset([1.0, 1.0], [1, 0]))
        np.testing.assert_allclose(ez, [1.0, 0.5])

    def test_censored_at_origin(self):
        m = random_model(np.random.default_rng(3))
        ez = estep_expectations(m, Dataset([1e-12], [0]))
        assert ez[0] == pytest.approx(m.frailty.mean, rel=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_quadrature_oracle(self, seed):
        rng = np.random.default_rng(300 + seed)
        ph = make_structure("general", int(rng.integers(1, 4)), seed=rng)
        m = FrailtyModel(ph, BaselineHazard.gompertz(0.3, 0.4), [0.7])
        data = Dataset([0.4, 1.1, 2.5], [1, 0, 1], [[1.0], [0.0], [1.0]])
        ez = estep_expectations(m, data)
        for i in range(3):
            mt = float(np.exp(0.7 * data.x[i, 0]) * m.baseline.cumhaz(data.y[i]))
            k = int(data.delta[i])
            ref = quad_frailty_moment(ph, mt, k + 1) / quad_frailty_moment(ph, mt, k)
            assert ez[i] == pytest.approx(ref, abs=1e-6)


class TestMixture:
    @pytest.mark.parametrize("y", [0.3, 2.0])
    def test_exponential_conjugacy(self, y):
        lam = 1.5
        s = mixture_nodes(pareto(lam), Dataset([y], [0]))
        assert s.w.sum() == pytest.approx(1.0, abs=1e-12)
        assert s.mean() == pytest.approx(1 / (lam + y), abs=1e-6)

    def test_event_conjugacy(self):
        # posterior after an event is Gamma(2, lam + M)
        s = mixture_nodes(pareto(2.0), Dataset([1.0], [1]))
        assert s.mean() == pytest.approx(2 / 3.0, abs=1e-6)

    def test_refinement(self):
        m = random_model(np.random.default_rng(7), p=3)
        data = simulate_dataset(m, 50, rng=1)
        a = mixture_nodes(m, data, FitOptions(ph_dim=3, quad_nodes=200))
        b = mixture_nodes(m, data, FitOptions(ph_dim=3, quad_nodes=400))
        assert abs(a.mean() - b.mean()) < 1e-8

    def test_weighted_sample_normalizes(self):
        s = WeightedSample([1.0, 2.0], [3.0, 1.0])
        np.testing.assert_allclose(s.w, [0.75, 0.25])
        with pytest.raises(ValueError):
            WeightedSample([1.0], [-1.0])


class TestInnerEM:
    def test_exponential_closed_form(self):
        rng = np.random.default_rng(0)
        z, w = rng.gamma(2.0, 1.0, 50), rng.random(50)
        for start in (0.1, 1.0, 30.0):
            new = weighted_ph_em_iteration(PhaseType([1.0], [[-start]]), WeightedSample(z, w))
            assert -new.T[0, 0] == pytest.approx(w.sum() / (w @ z), rel=1e-12)

    def test_point_mass(self):
        new = weighted_ph_em_iteration(EXP1, WeightedSample([2.5], [1.0]))
        assert -new.T[0, 0] == pytest.approx(0.4)

    @pytest.mark.parametrize("kind", ["coxian", "erlang", "hyperexponential"])
    def test_mask_preserved(self, kind):
        ph = make_structure(kind, 3, seed=1)
        s = WeightedSample(*np.random.default_rng(1).gamma(2.0, 1.0, (2, 40)))
        for _ in range(5):
            ph = weighted_ph_em_iteration(ph, s)
        assert ph.structure == kind
        T = np.asarray(ph.T)
        assert np.all(T[~ph.mask & ~np.eye(3, dtype=bool)] == 0)

    @pytest.mark.parametrize("seed", range(4))
    def test_monotone(self, seed):
        rng = np.random.default_rng(seed)
        s = WeightedSample(rng.lognormal(0, 0.7, 100), rng.random(100))
        ph = make_structure("general", 3, seed=seed)
        prev = weighted_loglik(ph, s)
        for _ in range(30):
            ph, ll_in = weighted_ph_em_iteration(ph, s, return_loglik=True)
            assert ll_in == pytest.approx(prev, abs=1e-12)
            cur = weighted_loglik(ph, s)
            assert cur >= prev - 1e-12
            prev = cur

    def test_starvation(self):
        ph = hyperexponential([1.0, 2.0], [1.0, 0.0])
        with pytest.raises(StateStarvationError) as info:
            weighted_ph_em_iteration(ph, WeightedSample([1.0, 2.0], [1.0, 1.0]))
        assert info.value.state == 1

    def test_small_pi_truncated(self):
        ph = hyperexponential([1.0, 50.0], [1 - 1e-13, 1e-13])
        new = weighted_ph_em_iteration(ph, WeightedSample([5.0, 6.0], [1.0, 1.0]))
        assert new.pi[1] == 0.0 and new.pi[0] == 1.0


class TestBaselineStep:
    def test_constant_closed_form(self):
        bl, beta, stalled = maximize_baseline(Dataset([1.0], [1]), [1.0], BaselineHazard.constant(3.0), [])
        assert bl.params[0] == pytest.approx(1.0, rel=1e-6) and not stalled
        data = Dataset([0.5, 1.0, 2.0, 4.0], [1, 0, 1, 1])
        ez = np.array([0.5, 1.0, 1.5, 2.0])
        bl, _, _ = maximize_baseline(data, ez, BaselineHazard.constant(0.1), [])
        assert bl.params[0] == pytest.approx(3 / (ez @ data.y), rel=1e-6)

    @pytest.mark.parametrize("family", ["constant", "gompertz", "power"])
    def test_monotone(self, family):
        data = simulate_lognormal_two_group(seed=2, n_per_group=50)
        ez = np.random.default_rng(0).uniform(0.5, 2.0, len(data))
        b0 = {"constant": BaselineHazard.constant(0.2), "gompertz": BaselineHazard.gompertz(0.05, 0.5),
              "power": BaselineHazard.power(0.8)}[family]
        bl, beta, _ = maximize_baseline(data, ez, b0, [0.0])
        assert baseline_objective(bl, beta, data, ez) >= baseline_objective(b0, np.zeros(1), data, ez)

    def test_incumbent_kept(self):
        data = Dataset([1.0], [1])
        bl, _, _ = maximize_baseline(data, [1.0], BaselineHazard.constant(1.0), [])
        bl2, _, _ = maximize_baseline(data, [1.0], bl, [])
        assert baseline_objective(bl2, np.zeros(0), data, [1.0]) >= baseline_objective(bl, np.zeros(0), data, [1.0])

    def test_separation(self):
        data = Dataset([1.0, 2.0, 3.0, 4.0], [1, 1, 0, 0], [[0.0], [0.0], [1.0], [1.0]])
        with pytest.raises(UnsupportedDataError):
            maximize_baseline(data, np.ones(4), CONST, [0.0])


class TestFit:
    def test_zero_iterations(self):
        data = simulate_dataset(pareto(), 40, rng=0)
        opts = FitOptions(ph_dim=2, max_outer_iter=0, seed=4)
        res = fit(data, opts)
        init = initial_model(data, opts, 4)
        np.testing.assert_array_equal(res.model.frailty.T, init.frailty.T)
        assert res.loglik_trace == [pytest.approx(loglikelihood(init, data), rel=1e-12)]
        assert res.iterations == 0

    def test_all_censored(self):
        with pytest.raises(UnsupportedDataError):
            fit(Dataset([1.0, 2.0], [0, 0]))

    def test_seed_reproducible(self):
        data = simulate_dataset(pareto(), 60, rng=0)
        a = fit(data, FitOptions(ph_dim=2, max_outer_iter=5, seed=3))
        b = fit(data, FitOptions(ph_dim=2, max_outer_iter=5, seed=3))
        assert a.loglik_trace == b.loglik_trace

    def test_exponential_recovery(self):
        # lambda and the constant hazard a only enter through a / lambda
        truth = FrailtyModel(PhaseType([1.0], [[-2.0]]), CONST)
        data = simulate_dataset(truth, 500, rng=0)
        res = fit(data, FitOptions(ph_dim=1, max_outer_iter=200))
        ratio = res.model.baseline.params[0] / -res.model.frailty.T[0, 0]
        assert ratio == pytest.approx(0.5, rel=0.1)
        assert res.loglik >= loglikelihood(truth, data) - 2.0

    def test_trace_monotone(self):
        truth = FrailtyModel(erlang(2, 2.0), BaselineHazard.gompertz(0.2, 0.5))
        data = simulate_dataset(truth, 200, rng=5)
        res = fit(data, FitOptions(ph_dim=2, baseline="gompertz", max_outer_iter=40, rel_tol=1e-14))
        assert np.min(np.diff(res.loglik_trace)) >= -1e-7 * len(data)

    def test_coxian_survives(self):
        data = simulate_dataset(pareto(), 100, rng=2)
        res = fit(data, FitOptions(ph_dim=3, structure="coxian", max_outer_iter=10))
        ph = res.model.frailty
        assert ph.structure == "coxian"
        np.testing.assert_array_equal(ph.pi, [1, 0, 0])
        assert np.all(np.tril(ph.T, -1) == 0) and np.all(np.triu(ph.T, 2) == 0)

    def test_fixed_point_mass_frailty_gives_proportional_hazards(self):
        data = simulate_lognormal_two_group(seed=3, mu=0.0, sigma=1e-6)
        ph_bl, ph_beta, _ = maximize_baseline(
            data, np.ones(len(data)), BaselineHazard.gompertz(0.01, 1.0), [0.0], budget=3000
        )
        init = FrailtyModel(erlang(50, 50.0), BaselineHazard.gompertz(0.02, 0.8), [0.0])
        res = fit(data, FitOptions(ph_dim=50, structure="erlang", baseline="gompertz", init=init,
                                   update_frailty=False))
        assert res.model.beta[0] == pytest.approx(ph_beta[0], abs=0.05)
        np.testing.assert_array_equal(res.model.frailty.T, init.frailty.T)

    def test_result_json(self):
        data = simulate_dataset(pareto(), 30, rng=0)
        res = fit(data, FitOptions(ph_dim=1, max_outer_iter=3))
        d = json.loads(json.dumps(res.to_dict()))
        assert {"pi", "T", "structure", "baseline", "beta", "loglik", "trace", "iterations", "converged"} <= set(d)
        assert d["loglik"] == d["trace"][-1]

    def test_options_validation(self):
        with pytest.raises(ValueError):
            FitOptions(trunc_tail_mass=1e-3)
        with pytest.raises(ValueError):
            FitOptions(rel_tol=0)
        with pytest.raises(ValueError):
            FitOptions(structure="banded")
