import itertools
import math

import numpy as np
import pytest

from gkpft.det_fusion import (
    FusionPort,
    analog_repetition_decode,
    analog_repetition_failure,
    bell_log_likelihood,
    combine_flip_probabilities,
    decode_block,
    leading_order_fusion_error,
    majority_decode,
    ml_selection_error,
    repetition_failure_leading,
    run_deterministic_fusion,
    select_most_reliable,
)
from gkpft.devices import LossConfig
from gkpft.gkp_core import SQRT_PI, GkpQubitState, HrmConfig, decide_bit, error_prob, error_prob_binned, hrm_conditional_error


def two_hypothesis(bits, devs, var):
    ll = [0.0, 0.0]
    for v in (0, 1):
        for b, d in zip(bits, devs):
            a = abs(d)
            ll[v] += -a * a / (2 * var) if b == v else -(SQRT_PI - a) ** 2 / (2 * var)
    if ll[0] == ll[1]:
        return majority_decode(bits)
    return int(ll[1] > ll[0])


def zero_port(L, m, var=0.05):
    leaf = GkpQubitState(0.0, 0.0, var, var)
    return FusionPort([(leaf, [leaf] * m) for _ in range(L)])


def test_all_zero_fusion():
    out = run_deterministic_fusion(zero_port(4, 3), zero_port(4, 3), rng=np.random.default_rng(0))
    assert out.kept_index == 0
    assert out.node_bit_flips == (0, 0)
    assert len(out.records) == 4 and len(out.blocks) == 6


def test_selection_example():
    pairs = [(0.3, 0.3), (0.05, 0.02), (0.2, 0.4), (0.6, 0.1)]
    ll = [bell_log_likelihood(a, b, 0.1) for a, b in pairs]
    assert select_most_reliable(ll) == 1


def test_selection_tie_goes_to_lowest_index():
    assert select_most_reliable([-1.0, -0.5, -0.5]) == 1
    assert select_most_reliable([0.0, 0.0]) == 0


def test_argmax_invariant_under_common_rescaling():
    rng = np.random.default_rng(1)
    for _ in range(500):
        devs = rng.uniform(-0.8, 0.8, (5, 2))
        picks = {select_most_reliable([bell_log_likelihood(a, b, v) for a, b in devs])
                 for v in (0.01, 0.07, 0.3, 2.0)}
        assert len(picks) == 1
        ll = np.array([bell_log_likelihood(a, b, 0.1) for a, b in devs])
        assert select_most_reliable(ll + 7.3) == select_most_reliable(ll)


def test_majority_example():
    outs = [decide_bit(x) for x in (0.1, -0.2, SQRT_PI + 0.05)]
    assert majority_decode([o.bit for o in outs]) == 0
    assert decode_block(outs, 0.1, analog=False).decoded_bit == 0


def test_analog_decode_examples():
    assert analog_repetition_decode([0, 0, 1], 0.1, [0.1, 0.1, 0.1]) == 0
    assert analog_repetition_decode([0, 1, 1], 0.07, [0.02, 0.85, 0.85]) == 0
    assert majority_decode([0, 1, 1]) == 1
    assert analog_repetition_decode([1], 0.1, [0.88]) == 1
    assert analog_repetition_decode([0], 0.1, [0.0]) == 0
    with pytest.raises(ValueError):
        analog_repetition_decode([0, 1, 1], 0.0, [0.1, 0.1, 0.1])
    with pytest.raises(ValueError):
        analog_repetition_decode([0, 1], 0.1)


def test_analog_decode_equals_majority_for_equal_residuals():
    for bits in itertools.product((0, 1), repeat=5):
        assert analog_repetition_decode(list(bits), 0.08, [0.3] * 5) == majority_decode(bits)


def test_analog_decode_matches_two_hypothesis_evaluation():
    rng = np.random.default_rng(2)
    for _ in range(3000):
        m = int(rng.choice([1, 3, 5]))
        bits = list(rng.integers(0, 2, m))
        devs = list(rng.uniform(-SQRT_PI / 2, SQRT_PI / 2, m))
        var = float(rng.uniform(0.02, 0.3))
        want = bits[0] if m == 1 else two_hypothesis(bits, devs, var)
        assert analog_repetition_decode(bits, var, devs) == want


def test_analog_not_worse_than_majority():
    rng = np.random.default_rng(3)
    var, n = 0.1, 30_000
    x = rng.normal(0, math.sqrt(var), (n, 3))
    k = np.rint(x / SQRT_PI).astype(int)
    bits = k & 1
    devs = x - k * SQRT_PI
    a_err = sum(analog_repetition_decode(list(b), var, list(d)) for b, d in zip(bits, devs))
    m_err = sum(majority_decode(b) for b in bits)
    diff = (a_err - m_err) / n
    se = math.sqrt((a_err + m_err) / n) / math.sqrt(n)
    assert diff <= 3 * se
    assert a_err < m_err


def test_repetition_failure_leading():
    e = 0.01
    assert repetition_failure_leading(e, 3) == pytest.approx(3 * e ** 2)
    assert repetition_failure_leading(e, 3, printed_exponent=True) == pytest.approx(3 * e)
    assert repetition_failure_leading(e, 1, printed_exponent=True) == e
    assert repetition_failure_leading(e, 5) == pytest.approx(10 * e ** 3)
    with pytest.raises(ValueError):
        repetition_failure_leading(e, 4)


def test_leading_order_fusion_error():
    s2 = 0.235 ** 2 * 2 + 1 / 38
    fe = leading_order_fusion_error(4, 3, s2, 0.05)
    assert fe.E_anc_p == pytest.approx(3 * error_prob(s2) ** 2)
    assert fe.E_ML == pytest.approx(hrm_conditional_error(s2, HrmConfig()))
    assert fe.E_anc_q == pytest.approx(error_prob(0.05))
    assert fe.E_det_pro == pytest.approx(fe.E_ML + 3 * fe.E_anc_q + 3 * fe.E_anc_p)
    printed = leading_order_fusion_error(4, 3, s2, 0.05, printed_exponent=True)
    assert printed.E_anc_p == pytest.approx(3 * error_prob(s2))


def test_anc_p_increasing_in_variance():
    for m in (3, 5):
        vals = [leading_order_fusion_error(4, m, v, 0.05).E_anc_p for v in np.linspace(0.02, 0.4, 40)]
        assert all(b > a for a, b in zip(vals, vals[1:]))


def test_combine_flip_probabilities_brute_force():
    ps = [0.1, 0.03, 0.25]
    odd = 0.0
    for flips in itertools.product((0, 1), repeat=3):
        w = np.prod([p if f else 1 - p for p, f in zip(ps, flips)])
        odd += w * (sum(flips) % 2)
    assert combine_flip_probabilities(ps) == pytest.approx(odd)
    assert combine_flip_probabilities([]) == 0.0


def test_ml_selection_error_matches_sampling():
    rng = np.random.default_rng(4)
    var, L, n = 0.15, 4, 400_000
    x = rng.normal(0, math.sqrt(var), (n, L, 2))
    k = np.rint(x / SQRT_PI).astype(int)
    res = x - k * SQRT_PI
    pick = np.argmin((res ** 2).sum(axis=2), axis=1)
    err = (k[np.arange(n), pick, 0] & 1).mean()
    want = ml_selection_error(var, L)
    assert abs(err - want) < 3 * math.sqrt(want / n) + 1e-5
    # a single pair has no choice to make
    assert ml_selection_error(var, 1) == pytest.approx(error_prob_binned(var), rel=1e-4)


def test_selection_beats_single_pair():
    for var in (0.08, 0.15, 0.25):
        assert ml_selection_error(var, 4) < ml_selection_error(var, 1)


def test_analog_repetition_failure_matches_sampling():
    rng = np.random.default_rng(5)
    var, n = 0.15, 60_000
    x = rng.normal(0, math.sqrt(var), (n, 3))
    k = np.rint(x / SQRT_PI).astype(int)
    bits = k & 1
    devs = x - k * SQRT_PI
    errs = sum(analog_repetition_decode(list(b), var, list(d)) for b, d in zip(bits, devs)) / n
    want = analog_repetition_failure(var, 3)
    assert abs(errs - want) < 3 * math.sqrt(want / n)


def test_fusion_flips_follow_kept_bell_bits():
    # pair 2 is clean, the rest carry a large residual; the kept pair's first bit is flipped
    var = 0.05
    noisy = GkpQubitState(0.6, 0.6, var, var)
    clean = GkpQubitState(SQRT_PI, 0.0, var, var)
    anc = GkpQubitState(0.0, 0.0, var, var)
    a = FusionPort([(noisy, [anc] * 3), (noisy, [anc] * 3), (clean, [anc] * 3)])
    b = FusionPort([(noisy, [anc] * 3), (noisy, [anc] * 3), (GkpQubitState(0, 0, var, var), [anc] * 3)])
    out = run_deterministic_fusion(a, b, LossConfig(0.0), rng=None)
    assert out.kept_index == 2
    assert out.records[2].bits == (1, 0)
    assert out.node_bit_flips == (1, 0)


def test_loser_block_flip_lands_on_node():
    var = 0.05
    leaf = GkpQubitState(0.0, 0.0, var, var)
    flipped_anc = GkpQubitState(0.0, SQRT_PI, var, var)
    anc = GkpQubitState(0.0, 0.0, var, var)
    a = FusionPort([(leaf, [anc] * 3), (GkpQubitState(0.3, 0.3, var, var), [flipped_anc] * 3)])
    b = zero_port(2, 3, var)
    out = run_deterministic_fusion(a, b, rng=None)
    assert out.kept_index == 0
    assert out.node_bit_flips == (1, 0)


def test_fusion_always_returns():
    rng = np.random.default_rng(6)
    for _ in range(50):
        def port():
            return FusionPort([(GkpQubitState(*rng.normal(0, 0.4, 2), 0.16, 0.16),
                                [GkpQubitState(*rng.normal(0, 0.4, 2), 0.16, 0.16) for _ in range(3)])
                               for _ in range(4)])
        out = run_deterministic_fusion(port(), port(), LossConfig(0.1), rng)
        assert 0 <= out.kept_index < 4
        assert set(out.node_bit_flips) <= {0, 1}


def test_port_length_mismatch_rejected():
    with pytest.raises(ValueError):
        run_deterministic_fusion(zero_port(2, 3), zero_port(3, 3))
