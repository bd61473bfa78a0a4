import math

import numpy as np
import pytest

from gkpft.devices import LossConfig, QndConfig
from gkpft.gkp_core import SQRT_PI, GkpQubitState, HrmConfig, Quadrature, fresh_qubit
from gkpft.sqec import (
    SqecConfig,
    gauss_markov_posterior,
    me_sqec,
    me_sqec_until_accepted,
    sqec_p,
    sqec_q,
)

Q, P = Quadrature.Q, Quadrature.P


def test_sqec_p_noiseless_ancilla_cancels_deviation():
    rng = np.random.default_rng(0)
    res = sqec_p(GkpQubitState(0.0, 0.2, 0.04, 0.04), 0.0, rng=rng)
    assert res.data.true_dev_p == pytest.approx(0.0, abs=1e-15)
    assert not res.induced_logical_flip


def test_sqec_q_noiseless_ancilla_cancels_deviation():
    rng = np.random.default_rng(0)
    res = sqec_q(GkpQubitState(-0.3, 0.0, 0.04, 0.04), 0.0, rng=rng)
    assert res.data.true_dev_q == pytest.approx(0.0, abs=1e-15)
    assert not res.induced_logical_flip


def test_large_deviation_induces_flip():
    rng = np.random.default_rng(0)
    res = sqec_p(GkpQubitState(0.0, 0.9 * SQRT_PI, 0.04, 0.04), 0.0, rng=rng)
    assert res.induced_logical_flip
    res = sqec_q(GkpQubitState(0.9 * SQRT_PI, 0.0, 0.04, 0.04), 0.0, rng=rng)
    assert res.induced_logical_flip
    res = sqec_p(GkpQubitState(0.0, 0.4 * SQRT_PI, 0.04, 0.04), 0.0, rng=rng)
    assert not res.induced_logical_flip


@pytest.mark.parametrize("fn, fixed, grown", [(sqec_p, P, Q), (sqec_q, Q, P)])
def test_sqec_sampled_variances(fn, fixed, grown):
    rng = np.random.default_rng(1)
    s2 = 0.04
    n = 100_000
    fix = np.empty(n)
    grow = np.empty(n)
    for i in range(n):
        res = fn(fresh_qubit(s2, rng), s2, rng=rng)
        fix[i] = res.data.dev(fixed)
        grow[i] = res.data.dev(grown)
    assert res.data.var(fixed) == pytest.approx(s2)
    assert res.data.var(grown) == pytest.approx(2 * s2)
    for x, want in ((fix, s2), (grow, 2 * s2)):
        se = want * math.sqrt(2 / (n - 1))
        assert abs(x.var() - want) < 3 * se


def test_two_step_sqec_ledger():
    a = 0.03
    d = sqec_p(GkpQubitState(0, 0, 0.07, 0.09), a).data
    d = sqec_q(d, a).data
    assert (d.var_q, d.var_p) == pytest.approx((a, 2 * a))


def test_gauss_markov_examples():
    m, v = gauss_markov_posterior(0.08, 0.04, 0.3)
    assert v == pytest.approx(0.08 * 0.04 / 0.12)
    assert m == pytest.approx(0.2)
    m, v = gauss_markov_posterior(0.05, 0.05, 1.0)
    assert v == pytest.approx(0.025) and m == pytest.approx(0.5)
    m, v = gauss_markov_posterior(0.05, 0.0, 0.1)
    assert v == 0.0 and m == pytest.approx(0.1)
    with pytest.raises(ValueError):
        gauss_markov_posterior(0.0, 0.1, 0.0)


def test_gauss_markov_matches_grid_bayes():
    x = np.linspace(-3, 3, 200_001)
    for vd in (0.02, 0.08):
        for va in (0.01, 0.1):
            for y in (-0.4, 0.05, 0.3):
                post = np.exp(-x * x / (2 * vd) - (y - x) ** 2 / (2 * va))
                post /= np.trapezoid(post, x)
                mean = np.trapezoid(x * post, x)
                var = np.trapezoid((x - mean) ** 2 * post, x)
                m, v = gauss_markov_posterior(vd, va, y)
                assert abs(m - mean) < 1e-6 and abs(v - var) < 1e-6
                assert v < min(vd, va)


def test_me_sqec_ledger_equal_variances():
    s2 = 0.06
    res = me_sqec(fresh_qubit(s2), Q, s2)
    assert res.data.var_q == pytest.approx(s2 / 2)
    assert res.data.var_p == pytest.approx(2 * s2)
    plain = sqec_q(fresh_qubit(s2), s2)
    assert plain.data.var_q - res.data.var_q == pytest.approx(s2 / 2)


def test_me_sqec_perfect_ancilla_limit():
    rng = np.random.default_rng(2)
    res = me_sqec(GkpQubitState(0.25, 0.0, 0.08, 0.08), Q, 0.0, rng=rng)
    assert res.data.var_q == pytest.approx(0.0, abs=1e-15)
    assert res.data.true_dev_q == pytest.approx(0.0, abs=1e-12)


def test_me_sqec_weight_example():
    # data 0.08, ancilla 0.04: the correction is 2/3 of the measured deviation
    res = me_sqec(GkpQubitState(0.0, 0.3, 0.08, 0.08), P, 0.04)
    assert res.data.var_p == pytest.approx(0.026667, abs=1e-6)
    assert res.displacement_applied == pytest.approx(-(2 / 3) * 0.3)


def test_me_sqec_ledger_exact_with_noisy_gate_and_loss():
    rng = np.random.default_rng(3)
    # small variances keep outcome misidentification (a non-Gaussian tail) negligible
    cfg = SqecConfig(loss=LossConfig(0.02), qnd=QndConfig())
    s2 = 0.008
    n = 60_000
    x = np.empty(n)
    for i in range(n):
        x[i] = me_sqec(fresh_qubit(s2, rng), P, s2, cfg, rng).data.true_dev_p
    want = me_sqec(fresh_qubit(s2), P, s2, cfg).data.var_p
    # better than the uncorrected post-gate variance
    assert want < s2 + QndConfig().c_local ** 2 * QndConfig().sv_variance
    se = want * math.sqrt(2 / (n - 1))
    assert abs(x.var() - want) < 3 * se


def test_hrm_lowers_conditional_flip_rate():
    rng = np.random.default_rng(4)
    s2 = 0.1
    n = 20_000
    plain = gated = accepted = 0
    hcfg = SqecConfig(hrm=HrmConfig())
    for _ in range(n):
        d = fresh_qubit(s2, rng)
        plain += me_sqec(d, P, s2, rng=rng).induced_logical_flip
        r = me_sqec(d, P, s2, hcfg, rng)
        if r.accepted:
            accepted += 1
            gated += r.induced_logical_flip
    p0 = plain / n
    p1 = gated / accepted
    assert p0 - p1 > 3 * math.sqrt(p0 * (1 - p0) / n + p1 * (1 - p1) / accepted)


def test_hrm_rejection_leaves_state_unchanged():
    d = GkpQubitState(0.0, 0.7, 0.05, 0.05)
    res = me_sqec(d, P, 0.0, SqecConfig(hrm=HrmConfig()), rng=np.random.default_rng(5))
    assert not res.accepted
    assert res.data == d and res.displacement_applied == 0.0


def test_until_accepted_returns_accepted_result():
    rng = np.random.default_rng(6)
    cfg = SqecConfig(hrm=HrmConfig())
    res, tries = me_sqec_until_accepted(GkpQubitState(0.0, 0.7, 0.05, 0.05), P, 0.05, cfg, rng)
    assert res.accepted and tries >= 1


def test_iterated_me_sqec_fixed_points():
    s2 = 0.05
    d = fresh_qubit(s2)
    history = []
    for _ in range(10):
        d = me_sqec(d, Q, s2).data
        d = me_sqec(d, P, s2).data
        history.append((d.var_q, d.var_p))
    qs, ps = zip(*history)
    assert all(v < 2 * s2 for v in qs + ps)
    assert all(b >= a for a, b in zip(qs, qs[1:]))
    assert all(b <= a for a, b in zip(ps, ps[1:]))
    golden = (1 + math.sqrt(5)) / 2
    assert qs[-1] == pytest.approx(golden * s2, rel=1e-6)
    assert ps[-1] == pytest.approx(s2 / golden, rel=1e-6)
