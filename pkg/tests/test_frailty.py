import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phfrailty import (
    BaselineHazard,
    DataError,
    Dataset,
    DimensionError,
    DomainError,
    FrailtyModel,
    PhaseType,
    erlang,
    hyperexponential,
)
from phfrailty.frailty import (
    baseline_eval,
    cond_frailty_mean_event,
    cond_frailty_mean_surv,
    frailty_density,
    frailty_hazard,
    frailty_survival,
    laplace_tail,
    loglikelihood,
    residual_model,
    tail_index,
)

from conftest import mixing_density, quad0inf, quad_frailty_moment, random_baseline, random_model

EXP1 = PhaseType([1.0], [[-1.0]])
CONST = BaselineHazard.constant(1.0)
BASELINES = [BaselineHazard.constant(0.7), BaselineHazard.gompertz(0.05, 0.3), BaselineHazard.power(1.4)]


def pareto():
    return FrailtyModel(EXP1, CONST)


def gamma_model():
    return FrailtyModel(erlang(2, 2.0), CONST)


class TestBaseline:
    def test_examples(self):
        assert baseline_eval(CONST, 2.0) == (1.0, 2.0)
        h, m = baseline_eval(BaselineHazard.gompertz(0.01, 1.0), 1.0)
        assert h == pytest.approx(0.01 * math.e) and m == pytest.approx(0.01 * (math.e - 1))
        h, m = baseline_eval(BaselineHazard.power(1.3705), 2.0)
        assert h == pytest.approx(1.3705 * 2**0.3705) and m == pytest.approx(2**1.3705)
        assert h == pytest.approx(1.772, abs=1e-3) and m == pytest.approx(2.586, abs=1e-3)

    def test_gompertz_zero_c(self):
        g = BaselineHazard.gompertz(0.3, 0.0)
        assert g.cumhaz(2.0) == pytest.approx(0.6)
        assert g.inv_cumhaz(0.6) == pytest.approx(2.0)

    def test_power_hazard_at_zero(self):
        h, m = baseline_eval(BaselineHazard.power(0.5), 0.0)
        assert h == math.inf and m == 0.0

    def test_negative_time(self):
        with pytest.raises(DomainError):
            baseline_eval(CONST, -1.0)

    @pytest.mark.parametrize("args", [("constant", (0.0,)), ("gompertz", (-1.0, 1.0)), ("power", (-2.0,))])
    def test_invalid_params(self, args):
        with pytest.raises(DomainError):
            BaselineHazard(*args)

    def test_arity(self):
        with pytest.raises(DimensionError):
            BaselineHazard("gompertz", (1.0,))

    @settings(max_examples=50, deadline=None)
    @given(
        seed=st.integers(0, 10**6),
        y=st.floats(1e-3, 10),
    )
    def test_inverse(self, seed, y):
        b = random_baseline(np.random.default_rng(seed))
        assert b.inv_cumhaz(b.cumhaz(y)) == pytest.approx(y, rel=1e-10, abs=1e-10)

    def test_gompertz_negative_c_limit(self):
        g = BaselineHazard.gompertz(1.0, -0.5)
        assert g.inv_cumhaz(2.5) == math.inf
        assert np.isfinite(g.inv_cumhaz(1.9))

    def test_cumhaz_is_integral(self):
        from scipy import integrate

        for b in BASELINES:
            assert integrate.quad(b.hazard, 0, 3.0)[0] == pytest.approx(float(b.cumhaz(3.0)), rel=1e-10)

    def test_unconstrained_round_trip(self):
        for b in BASELINES:
            assert b.from_unconstrained(b.to_unconstrained()).params == pytest.approx(b.params)


class TestMarginal:
    def test_survival_examples(self):
        assert frailty_survival(pareto(), 1.0) == pytest.approx(0.5)
        assert frailty_survival(gamma_model(), 1.0) == pytest.approx(4 / 9)
        m = FrailtyModel(EXP1, CONST, [math.log(2)])
        assert frailty_survival(m, 1.0, [1.0]) == pytest.approx(1 / 3)
        assert frailty_survival(pareto(), 0.0) == 1.0

    def test_covariates_required(self):
        m = FrailtyModel(EXP1, CONST, [0.3])
        with pytest.raises(DimensionError):
            frailty_survival(m, 1.0)
        with pytest.raises(DimensionError):
            frailty_survival(m, 1.0, [1.0, 2.0])

    def test_density_examples(self):
        assert frailty_density(pareto(), 1.0) == pytest.approx(0.25)
        assert frailty_density(gamma_model(), 1.0) == pytest.approx(8 / 27)
        with pytest.raises(DomainError):
            frailty_density(pareto(), 0.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_density_finite_difference(self, seed):
        m = random_model(np.random.default_rng(seed))
        h = 1e-5
        fd = -(frailty_survival(m, 0.7 + h) - frailty_survival(m, 0.7 - h)) / (2 * h)
        assert fd == pytest.approx(frailty_density(m, 0.7), abs=1e-6)

    def test_hazard_examples(self):
        assert frailty_hazard(pareto(), 1.0) == pytest.approx(0.5)
        ph = erlang(2, 3.0)
        m = FrailtyModel(ph, BaselineHazard.gompertz(0.2, 1.0))
        assert frailty_hazard(m, 1e-10) == pytest.approx(0.2 * ph.mean, rel=1e-8)
        g = gamma_model()
        assert frailty_hazard(g, 2.0) == pytest.approx(frailty_density(g, 2.0) / frailty_survival(g, 2.0), rel=1e-12)

    @pytest.mark.parametrize("k", [1, 2, 3])
    @pytest.mark.parametrize("rate", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("baseline", BASELINES, ids=lambda b: b.family)
    def test_gamma_closed_form(self, k, rate, baseline):
        y = np.arange(0, 100.5, 0.5)
        m = FrailtyModel(erlang(k, rate), baseline)
        ref = (1 + baseline.cumhaz(y) / rate) ** (-k)
        np.testing.assert_allclose(frailty_survival(m, y), ref, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_survival_and_density_quadrature(self, seed):
        rng = np.random.default_rng(100 + seed)
        m = random_model(rng)
        for y in (0.3, 1.7):
            mt = float(m.baseline.cumhaz(y))
            s = quad0inf(lambda z: math.exp(-z * mt) * mixing_density(m.frailty, z))
            f = float(m.baseline.hazard(y)) * quad_frailty_moment(m.frailty, mt, 1)
            assert frailty_survival(m, y) == pytest.approx(s, abs=1e-8)
            assert frailty_density(m, y) == pytest.approx(f, abs=1e-6)

    @pytest.mark.parametrize("seed", range(6))
    def test_hazard_bound(self, seed):
        m = random_model(np.random.default_rng(seed))
        y = np.linspace(0.01, 20, 200)
        bound = m.baseline.hazard(y) * m.frailty.mean
        assert np.all(frailty_hazard(m, y) <= bound * (1 + 1e-12))
        assert np.all(frailty_hazard(m, y) > 0)


class TestConditional:
    def test_surv_examples(self):
        assert cond_frailty_mean_surv(pareto(), 0.0) == pytest.approx(1.0)
        assert cond_frailty_mean_surv(pareto(), 1.0) == pytest.approx(0.5)
        assert cond_frailty_mean_surv(gamma_model(), 0.0) == pytest.approx(1.0)

    def test_event_examples(self):
        assert cond_frailty_mean_event(pareto(), 1.0) == pytest.approx(1.0)
        assert cond_frailty_mean_event(pareto(), 1e-12) == pytest.approx(2.0)
        with pytest.raises(DomainError):
            cond_frailty_mean_event(pareto(), 0.0)

    @pytest.mark.parametrize("seed", range(6))
    def test_surv_monotone_and_mean(self, seed):
        m = random_model(np.random.default_rng(seed))
        v = cond_frailty_mean_surv(m, np.linspace(0, 30, 301))
        assert np.all(np.diff(v) <= 1e-14 * v[:-1])
        assert v[0] == pytest.approx(m.frailty.mean, rel=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_quadrature(self, seed):
        m = random_model(np.random.default_rng(200 + seed))
        y = 0.9
        mt = float(m.baseline.cumhaz(y))
        q = [quad_frailty_moment(m.frailty, mt, k) for k in range(3)]
        assert cond_frailty_mean_surv(m, y) == pytest.approx(q[1] / q[0], abs=1e-6)
        assert cond_frailty_mean_event(m, y) == pytest.approx(q[2] / q[1], abs=1e-6)


class TestResidual:
    def test_scalar(self):
        r = residual_model(pareto(), 1.0)
        np.testing.assert_allclose(r.frailty.pi, [1.0])
        np.testing.assert_allclose(r.frailty.T, [[-2.0]])
        assert frailty_survival(r, 1.0) == pytest.approx(2 / 3)

    def test_gamma(self):
        r = residual_model(gamma_model(), 1.0)
        assert frailty_survival(r, 1.0) == pytest.approx(0.5625)
        assert r.frailty.pi.sum() == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("t", [0.1, 1.0, 5.0])
    def test_identity(self, seed, t):
        m = random_model(np.random.default_rng(seed))
        r = residual_model(m, t)
        y = np.array([0.0, 0.4, 2.0, 7.5])
        np.testing.assert_allclose(
            frailty_survival(r, y) * frailty_survival(m, t), frailty_survival(m, y + t), rtol=0, atol=1e-10
        )
        assert frailty_survival(r, 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_covariates(self):
        m = FrailtyModel(erlang(2, 1.0), BaselineHazard.gompertz(0.1, 0.5), [0.4])
        r = residual_model(m, 2.0, [1.0])
        assert frailty_survival(r, 1.0, [1.0]) * frailty_survival(m, 2.0, [1.0]) == pytest.approx(
            frailty_survival(m, 3.0, [1.0]), abs=1e-12
        )

    def test_bad_time(self):
        with pytest.raises(DomainError):
            residual_model(pareto(), 0.0)


class TestTail:
    def test_erlang(self):
        m = FrailtyModel(erlang(3, 1.7), BaselineHazard.power(1.2))
        assert tail_index(m).value == pytest.approx(3.6)
        assert tail_index(m).power_law

    def test_hyperexponential(self):
        m = FrailtyModel(hyperexponential([1, 3], [0.5, 0.5]), BaselineHazard.power(2.0))
        assert float(tail_index(m)) == pytest.approx(2.0)

    def test_non_power(self):
        ti = tail_index(FrailtyModel(erlang(2, 1.0), CONST))
        assert ti.value == 2 and not ti.power_law

    def test_printed_coxian(self, loss_coxian_model):
        ti = tail_index(loss_coxian_model)
        assert ti.block_size == 2
        assert ti.value == pytest.approx(2.7410, abs=1e-6)

    def test_laplace_tail(self, loss_coxian_model):
        assert laplace_tail(erlang(3, 2.0)) == (3, pytest.approx(8.0))
        order, c = laplace_tail(loss_coxian_model.frailty)
        assert order == 1 and c == pytest.approx(19.6942 - 16.2647)

    def test_laplace_tail_matches_large_u(self):
        ph = erlang(2, 1.5)
        order, c = laplace_tail(ph)
        u = 1e6
        assert ph.laplace(u) * u**order == pytest.approx(c, rel=1e-5)


class TestLoglik:
    def test_examples(self):
        m = pareto()
        assert loglikelihood(m, Dataset([1.0], [0])) == pytest.approx(math.log(0.5))
        assert loglikelihood(m, Dataset([1.0], [1])) == pytest.approx(math.log(0.25))
        assert loglikelihood(m, Dataset([1.0, 1.0], [0, 1])) == pytest.approx(-2.0794, abs=1e-4)

    def test_matches_pointwise(self):
        m = FrailtyModel(erlang(2, 1.0), BaselineHazard.gompertz(0.1, 0.5), [0.4])
        data = Dataset([0.5, 1.0, 2.0], [1, 0, 1], [[0.0], [1.0], [1.0]])
        ref = (
            math.log(frailty_density(m, 0.5, [0.0]))
            + math.log(frailty_survival(m, 1.0, [1.0]))
            + math.log(frailty_density(m, 2.0, [1.0]))
        )
        assert loglikelihood(m, data) == pytest.approx(ref, rel=1e-13)

    def test_errors(self):
        with pytest.raises(DataError):
            Dataset([0.0], [1])


def test_model_json_layout():
    m = FrailtyModel(erlang(2, 1.0), BaselineHazard.gompertz(0.1, 0.5), [0.4])
    d = json.loads(json.dumps(m.to_dict()))
    assert d["baseline"] == {"family": "gompertz", "b": 0.1, "c": 0.5}
    assert d["beta"] == [0.4]
    back = FrailtyModel.from_dict(d)
    assert frailty_survival(back, 1.3, [1.0]) == frailty_survival(m, 1.3, [1.0])


def test_extreme_times_do_not_produce_nan():
    m = FrailtyModel(erlang(2, 1.0), BaselineHazard.gompertz(0.5, 1.0))
    y = np.array([50.0, 700.0, 800.0, 1e6])
    assert np.all(frailty_survival(m, y) >= 0)
    np.testing.assert_array_equal(frailty_density(m, y[1:]), 0.0)
    ez = cond_frailty_mean_surv(m, y)
    assert np.all(np.isfinite(ez)) and np.all(ez >= 0) and np.all(np.diff(ez) <= 0)
    # log-likelihood of a far censored point stays finite where the survival underflows
    assert np.isfinite(loglikelihood(m, Dataset([700.0], [0])))


def test_power_baseline_tail_follows_laplace_order(loss_coxian_model):
    # S_Y(y) = L_Z(y^theta) and L_Z(u) ~ C u^-n with n from laplace_tail
    n, _ = laplace_tail(loss_coxian_model.frailty)
    y1, y2 = 1e10, 1e12
    s1, s2 = frailty_survival(loss_coxian_model, [y1, y2])
    slope = -(math.log(s2) - math.log(s1)) / (math.log(y2) - math.log(y1))
    assert slope == pytest.approx(n * loss_coxian_model.baseline.params[0], rel=1e-6)
