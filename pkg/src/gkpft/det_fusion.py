"""Deterministic fusion of two encoded ports.

All L leaf pairs are Bell-measured, the pair with the largest Gaussian
likelihood is kept, the kept pair's ancillae are read in q and every other
pair is removed by reading its m ancillae in p and decoding them as a
repetition code.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .devices import LossConfig, lossy_homodyne
from .gkp_core import (
    SQRT_PI,
    GkpQubitState,
    HrmConfig,
    MeasurementOutcome,
    Quadrature,
    decide_bit,
    error_prob,
    flip_probability,
    hrm_conditional_error,
)

Q, P = Quadrature.Q, Quadrature.P


@dataclass(frozen=True)
class BellRecord:
    index: int
    dev_a: float
    dev_b: float
    bits: tuple[int, int]
    log_likelihood: float
    variance: float

    @property
    def likelihood(self) -> float:
        return math.exp(self.log_likelihood)


@dataclass(frozen=True)
class RepetitionBlock:
    outcomes: tuple[MeasurementOutcome, ...]
    decoded_bit: int
    soft_score: float

    @property
    def flip_likelihood(self) -> float:
        """Posterior probability that ``decoded_bit`` is wrong."""
        return _logistic(-abs(self.soft_score))


@dataclass
class FusionPort:
    """L encoded leaves of one node: (Bell leaf state, ancilla states) each."""

    leaves: list[tuple[GkpQubitState, list[GkpQubitState]]]

    @property
    def L(self) -> int:
        return len(self.leaves)


@dataclass
class FusionOutcome:
    kept_index: int
    node_bit_flips: tuple[int, int]
    records: list[BellRecord]
    blocks: list[RepetitionBlock] = field(default_factory=list)
    # (flip, posterior flip probability) per decision landing on each node
    components: tuple[list, list] = field(default_factory=lambda: ([], []))


def _logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _log_gauss(x: float, variance: float) -> float:
    return -x * x / (2.0 * variance) - 0.5 * math.log(2.0 * math.pi * variance)


def bell_log_likelihood(dev_a: float, dev_b: float, variance: float) -> float:
    """log f(dev_a) + log f(dev_b) with f the zero-mean Gaussian density."""
    if not variance > 0:
        raise ValueError("variance must be positive")
    return _log_gauss(dev_a, variance) + _log_gauss(dev_b, variance)


def select_most_reliable(log_likelihoods) -> int:
    """Index of the largest likelihood; ties go to the lowest index."""
    return int(np.argmax(np.asarray(log_likelihoods, dtype=float)))


def repetition_margin(bits, devs, variance: float) -> float:
    """Log-likelihood of decoding 1 minus that of decoding 0."""
    if not variance > 0:
        raise ValueError("variance must be positive")
    score = 0.0
    for b, d in zip(bits, devs):
        a = abs(d)
        # log f(a) - log f(sqrt(pi) - a), the evidence for the reported bit
        evidence = ((SQRT_PI - a) ** 2 - a * a) / (2.0 * variance)
        score += evidence if b else -evidence
    return score


def analog_repetition_decode(block_or_bits, variance: float, devs=None) -> int:
    """Maximum-likelihood repetition decoding that weights each outcome by its residual.

    Accepts a RepetitionBlock, a list of MeasurementOutcome, or a list of
    bits together with ``devs``. Ties (including m = 1 with a zero margin)
    follow the plain majority.
    """
    bits, devs = _bits_devs(block_or_bits, devs)
    if len(bits) % 2 == 0:
        raise ValueError("repetition length must be odd")
    if len(bits) == 1:
        if not variance > 0:
            raise ValueError("variance must be positive")
        return int(bits[0])
    margin = repetition_margin(bits, devs, variance)
    if margin == 0.0:
        return majority_decode(bits)
    return int(margin > 0)


def majority_decode(bits) -> int:
    bits = list(bits)
    if len(bits) % 2 == 0:
        raise ValueError("repetition length must be odd")
    return int(2 * sum(bits) > len(bits))


def _bits_devs(block_or_bits, devs):
    if isinstance(block_or_bits, RepetitionBlock):
        outs = block_or_bits.outcomes
        return [o.bit for o in outs], [o.dev_m for o in outs]
    items = list(block_or_bits)
    if items and isinstance(items[0], MeasurementOutcome):
        return [o.bit for o in items], [o.dev_m for o in items]
    if devs is None:
        devs = [0.0] * len(items)
    return [int(b) for b in items], list(devs)


def decode_block(outcomes, variance: float, analog: bool = True) -> RepetitionBlock:
    bits = [o.bit for o in outcomes]
    devs = [o.dev_m for o in outcomes]
    margin = repetition_margin(bits, devs, variance)
    if analog:
        decoded = analog_repetition_decode(bits, variance, devs)
    else:
        decoded = majority_decode(bits)
        # hard decisions: every outcome counts with the same a priori reliability
        e = min(error_prob(variance), 0.5 - 1e-12)
        margin = (2 * sum(bits) - len(bits)) * math.log((1 - e) / e)
    return RepetitionBlock(tuple(outcomes), decoded, margin)


def run_deterministic_fusion(port_a: FusionPort, port_b: FusionPort, loss: LossConfig | None = None, rng=None,
                             analog: bool = True) -> FusionOutcome:
    """Fuse two nodes through their L encoded leaves; never fails.

    The Bell outcome on pair i is (q of A's leaf + p of B's leaf,
    p of A's leaf + q of B's leaf). A wrong first bit lands on node A's
    frame, a wrong second bit on node B's.
    """
    if port_a.L != port_b.L or port_a.L < 1:
        raise ValueError("ports need the same positive number of encoded leaves")
    loss = loss or LossConfig()
    lv = loss.added_variance
    meas = loss
    records = []
    for i, ((la, _), (lb, _)) in enumerate(zip(port_a.leaves, port_b.leaves)):
        oa = lossy_homodyne(_sum(la, lb, Q, P), Q, meas, rng)
        ob = lossy_homodyne(_sum(la, lb, P, Q), Q, meas, rng)
        var = 0.5 * ((la.var_q + lb.var_p) + (la.var_p + lb.var_q)) + lv
        records.append(BellRecord(i, oa.dev_m, ob.dev_m, (oa.bit, ob.bit),
                                  bell_log_likelihood(oa.dev_m, ob.dev_m, var), var))
    k = select_most_reliable([r.log_likelihood for r in records])
    kept = records[k]
    comps: tuple[list, list] = ([], [])
    la, lb = port_a.leaves[k][0], port_b.leaves[k][0]
    comps[0].append((kept.bits[0], flip_probability(kept.dev_a, la.var_q + lb.var_p + lv)))
    comps[1].append((kept.bits[1], flip_probability(kept.dev_b, la.var_p + lb.var_q + lv)))
    blocks = []
    for side, port in enumerate((port_a, port_b)):
        for i, (_, ancs) in enumerate(port.leaves):
            if i == k:
                for anc in ancs:
                    out = lossy_homodyne(anc, Q, meas, rng)
                    comps[side].append((out.bit, flip_probability(out.dev_m, anc.var_q + lv)))
            elif ancs:
                outs = [lossy_homodyne(anc, P, meas, rng) for anc in ancs]
                var = sum(a.var_p for a in ancs) / len(ancs) + lv
                block = decode_block(outs, var, analog)
                blocks.append(block)
                comps[side].append((block.decoded_bit, block.flip_likelihood))
    flips = tuple(int(sum(b for b, _ in c) % 2) for c in comps)
    return FusionOutcome(k, flips, records, blocks, comps)


def _sum(x: GkpQubitState, y: GkpQubitState, qx: Quadrature, qy: Quadrature) -> GkpQubitState:
    total = x.total(qx) + y.total(qy)
    return GkpQubitState(0.0, 0.0, 0.0, 0.0).with_total(Q, total)


def combine_flip_probabilities(ps) -> float:
    """Probability that an odd number of independent flips occurred."""
    prod = 1.0
    for p in ps:
        prod *= 1.0 - 2.0 * p
    return 0.5 * (1.0 - prod)


def repetition_failure_leading(e: float, m: int, printed_exponent: bool = False) -> float:
    """Leading-order failure of an m-repetition code with per-outcome error e.

    Majority fails once (m+1)/2 outcomes are wrong, so the leading term is
    C(m, (m+1)/2) e^((m+1)/2). ``printed_exponent`` uses (m-1)/2 instead,
    with m = 1 falling back to e.
    """
    if m < 1 or m % 2 == 0:
        raise ValueError("m must be odd")
    if printed_exponent:
        if m == 1:
            return e
        k = (m - 1) // 2
        return comb(m, k) * e ** k
    k = (m + 1) // 2
    return comb(m, k) * e ** k


@dataclass(frozen=True)
class FusionErrorBudget:
    E_ML: float
    E_anc_q: float
    E_anc_p: float
    E_det_pro: float
    sigma2_pro: float


def leading_order_fusion_error(L: int, m: int, sigma2_pro: float, var_anc_q: float,
                               hrm: HrmConfig | None = None, printed_exponent: bool = False) -> FusionErrorBudget:
    """E_ML + m E_anc,q + (L-1) E_anc,p for one deterministic fusion.

    E_ML is approximated by the HRM misidentification rate at the Bell
    outcome variance ``sigma2_pro``; E_anc,p evaluates the repetition-code
    failure with the same per-outcome variance.
    """
    hrm = hrm or HrmConfig()
    e_ml = hrm_conditional_error(sigma2_pro, hrm)
    e_q = error_prob(var_anc_q)
    e_p = repetition_failure_leading(error_prob(sigma2_pro), m, printed_exponent)
    return FusionErrorBudget(e_ml, e_q, e_p, e_ml + m * e_q + (L - 1) * e_p, sigma2_pro)


def _folded_densities(variance: float, n: int = 1601):
    """Grid over the residual in [-sqrt(pi)/2, sqrt(pi)/2] with even- and odd-peak densities."""
    h = SQRT_PI / 2
    x = np.linspace(-h, h, n)
    even = np.zeros(n)
    odd = np.zeros(n)
    sd = math.sqrt(variance)
    kmax = int(8 * sd / SQRT_PI) + 2
    for k in range(-kmax, kmax + 1):
        dens = np.exp(-((x + k * SQRT_PI) ** 2) / (2 * variance)) / (sd * math.sqrt(2 * math.pi))
        if k % 2:
            odd += dens
        else:
            even += dens
    # trapezoid weights
    w = np.full(n, x[1] - x[0])
    w[0] = w[-1] = 0.5 * (x[1] - x[0])
    return x, even * w, odd * w


def ml_selection_error(variance: float, L: int, n: int = 1201) -> float:
    """Probability that the likelihood-selected pair's first Bell bit is wrong.

    Both outcomes of each of the L pairs have Gaussian deviations of
    ``variance``; the pair with the smallest a^2 + b^2 residual is kept.
    """
    if L < 1:
        raise ValueError("L must be at least 1")
    x, even, odd = _folded_densities(variance, n)
    tot = even + odd
    score = (x[:, None] ** 2 + x[None, :] ** 2).ravel()
    w_all = (tot[:, None] * tot[None, :]).ravel()
    w_err = (odd[:, None] * tot[None, :]).ravel()
    w_all = w_all / w_all.sum()
    w_err = w_err / (tot.sum() ** 2)
    # symmetric grid points share a score exactly; treat each score level as one atom
    levels, inv = np.unique(np.round(score, 12), return_inverse=True)
    mass = np.bincount(inv, weights=w_all, minlength=len(levels))
    below = np.cumsum(mass) - mass
    surv = (1.0 - below - 0.5 * mass)[inv]
    return float(L * np.sum(w_err * surv ** (L - 1)))


def analog_repetition_failure(variance: float, m: int, bins: int = 4001) -> float:
    """Block error rate of analog repetition decoding with per-outcome variance ``variance``.

    The evidence each outcome contributes is linear in its residual, so the
    block margin distribution follows from convolving m single-outcome
    distributions.
    """
    if m < 1 or m % 2 == 0:
        raise ValueError("m must be odd")
    x, even, odd = _folded_densities(variance)
    norm = (even + odd).sum()
    evid = (math.pi - 2 * SQRT_PI * np.abs(x)) / (2 * variance)
    emax = math.pi / (2 * variance)
    edges = np.linspace(-emax, emax, bins + 1)
    step = edges[1] - edges[0]
    # wrong-parity outcomes push toward the wrong decision
    single = np.histogram(np.concatenate([evid, -evid]), bins=edges,
                          weights=np.concatenate([odd, even]) / norm)[0]
    dist = single
    for _ in range(m - 1):
        dist = np.convolve(dist, single)
    centres = (np.arange(len(dist)) - (len(dist) - 1) / 2) * step
    return float(dist[centres > 0].sum() + 0.5 * dist[np.isclose(centres, 0.0)].sum())
