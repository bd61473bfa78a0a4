import math

import numpy as np
import pytest
from scipy import integrate

from gkpft.gkp_core import (
    SQRT_PI,
    GkpQubitState,
    HrmConfig,
    Quadrature,
    decide_bit,
    error_prob,
    error_prob_binned,
    flip_probability,
    fold,
    hrm_conditional_error,
    hrm_decide,
    hrm_probabilities,
    nearest_peak,
    squeezing_to_variance,
    variance_to_squeezing,
)


def quad_mass(a, b, var):
    f = lambda x: math.exp(-x * x / (2 * var)) / math.sqrt(2 * math.pi * var)
    return integrate.quad(f, a, b, epsabs=0, epsrel=1e-12, limit=200)[0]


def test_squeezing_examples():
    assert math.sqrt(squeezing_to_variance(8.3)) == pytest.approx(0.2720, abs=1e-4)
    assert squeezing_to_variance(8.3) == pytest.approx(0.07399, abs=5e-5)
    assert squeezing_to_variance(0.0) == 0.5
    assert squeezing_to_variance(15.0) == pytest.approx(0.0158114, rel=1e-6)


def test_squeezing_round_trip():
    for s in np.linspace(0, 30, 301):
        back = variance_to_squeezing(squeezing_to_variance(s))
        assert abs(back - s) <= 1e-12 * max(abs(s), 1.0)


def test_variance_to_squeezing_rejects_nonpositive():
    with pytest.raises(ValueError):
        variance_to_squeezing(0.0)


def test_error_prob_examples():
    assert error_prob(1e-6) == 0.0
    assert error_prob(0.273 ** 2) == pytest.approx(1.15e-3, rel=0.02)
    assert error_prob(0.25) == pytest.approx(7.66e-2, rel=0.005)
    ref = 1 - quad_mass(-SQRT_PI / 2, SQRT_PI / 2, 0.273 ** 2)
    assert error_prob(0.273 ** 2) == pytest.approx(ref, rel=1e-8)


def test_error_prob_rejects_nonpositive():
    for fn in (error_prob, error_prob_binned):
        with pytest.raises(ValueError):
            fn(0.0)
        with pytest.raises(ValueError):
            fn(-0.1)


def test_error_prob_strictly_increasing():
    vals = [error_prob(v) for v in np.linspace(0.005, 0.5, 200)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_binned_below_unbinned():
    for v in (0.02, 0.1, 0.3):
        assert error_prob_binned(v) <= error_prob(v)
    assert error_prob_binned(0.3) < error_prob(0.3)


def test_decide_bit_examples():
    o = decide_bit(0.0)
    assert (o.bit, o.dev_m, o.accepted) == (0, 0.0, True)
    o = decide_bit(SQRT_PI)
    assert o.bit == 1 and abs(o.dev_m) < 1e-15
    o = decide_bit(0.9 * SQRT_PI / 2)
    assert o.bit == 0
    assert o.dev_m == pytest.approx(0.45 * SQRT_PI)


def test_decide_bit_residual_bound():
    rng = np.random.default_rng(0)
    for raw in rng.uniform(-20, 20, 2000):
        o = decide_bit(raw)
        assert abs(o.dev_m) <= SQRT_PI / 2 + 1e-12
        t = (raw - o.dev_m - o.bit * SQRT_PI) / (2 * SQRT_PI)
        assert abs(t - round(t)) < 1e-9


def test_ties_go_to_smaller_magnitude_peak():
    assert nearest_peak(SQRT_PI / 2) == 0
    assert nearest_peak(-SQRT_PI / 2) == 0
    assert nearest_peak(SQRT_PI / 2 + 1e-12) == 1
    assert nearest_peak(-SQRT_PI / 2 - 1e-12) == -1


def test_fold_matches_decide_bit():
    for raw in (-3.1, -0.2, 0.7, 2.0, 5.5):
        dev, bit = fold(raw)
        o = decide_bit(raw)
        assert (dev, bit) == (o.dev_m, o.bit)


def test_hrm_default_and_validation():
    assert HrmConfig().v_up == pytest.approx(2 * SQRT_PI / 5)
    with pytest.raises(ValueError):
        HrmConfig(0.0)
    with pytest.raises(ValueError):
        HrmConfig(SQRT_PI / 2)


def test_hrm_decide_examples():
    cfg = HrmConfig()
    o = hrm_decide(0.1, cfg)
    assert o.accepted and o.bit == 0
    o = hrm_decide(0.8, cfg)
    assert o.bit == 0 and not o.accepted
    o = hrm_decide(SQRT_PI + 0.05, cfg)
    assert o.accepted and o.bit == 1 and o.dev_m == pytest.approx(0.05)


def test_hrm_probabilities_match_quadrature():
    cfg = HrmConfig()
    w = cfg.window
    for var in (0.273 ** 2, 0.1):
        cor = sum((1 if k == 0 else 2) * quad_mass(k * SQRT_PI - w, k * SQRT_PI + w, var) for k in range(0, 24, 2))
        inc = sum(2 * quad_mass(k * SQRT_PI - w, k * SQRT_PI + w, var) for k in range(1, 24, 2))
        pc, pi = hrm_probabilities(var, cfg)
        assert pc == pytest.approx(cor, rel=1e-8)
        assert pi == pytest.approx(inc, rel=1e-8)
    assert hrm_conditional_error(0.273 ** 2, cfg) < 0.01 * error_prob(0.273 ** 2)


def test_hrm_probabilities_limits():
    for var in (0.05, 0.2):
        pc, pi = hrm_probabilities(var, HrmConfig(1e-9))
        assert pc + pi == pytest.approx(1.0, abs=1e-7)
        assert pi == pytest.approx(error_prob_binned(var), rel=1e-6)
    pc, pi = hrm_probabilities(1e-4, HrmConfig())
    assert pc == pytest.approx(1.0, abs=1e-12) and pi < 1e-100


def test_hrm_conditional_error_decreasing_in_window_cut():
    var = 0.08
    vals = [hrm_conditional_error(var, HrmConfig(v)) for v in np.linspace(0.05, 0.85, 30)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    for v in np.linspace(0.05, 0.85, 10):
        pc, pi = hrm_probabilities(var, HrmConfig(v))
        assert pc + pi <= 1.0


def test_hrm_probabilities_rejects_nonpositive():
    with pytest.raises(ValueError):
        hrm_probabilities(0.0, HrmConfig())


def test_sampling_matches_binned_error():
    rng = np.random.default_rng(42)
    var = 0.12
    x = rng.normal(0, math.sqrt(var), 1_000_000)
    bits = np.rint(x / SQRT_PI).astype(np.int64) & 1
    p = error_prob_binned(var)
    sd = math.sqrt(p * (1 - p) / x.size)
    assert abs(bits.mean() - p) < 3 * sd
    # spot-check the scalar path on a subset
    assert [decide_bit(v).bit for v in x[:500]] == list(bits[:500])


def test_state_total_round_trip():
    s = GkpQubitState(0.1, -0.2, 0.05, 0.06, 1, 0)
    assert s.total(Quadrature.Q) == pytest.approx(0.1 + SQRT_PI)
    t = s.with_total(Quadrature.P, 2 * SQRT_PI + 0.3)
    assert t.logical_bit_p == 0 and t.true_dev_p == pytest.approx(0.3)
    assert s.flipped(Quadrature.Q).logical_bit_q == 0
    assert Quadrature.Q.conjugate is Quadrature.P


def test_flip_probability_bounds():
    assert flip_probability(0.0, 0.1) < 1e-3
    assert flip_probability(SQRT_PI / 2, 0.1) == pytest.approx(0.5)
    assert flip_probability(0.2, 1e-5) >= 0.0
