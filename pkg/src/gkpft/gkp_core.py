"""Deviation-picture algebra for GKP qubits.

A GKP qubit is tracked by its continuous displacement from the nearest
codeword peak in each quadrature plus a Pauli-frame bit per quadrature.
Peaks sit at integer multiples of sqrt(pi); odd multiples carry a logical
flip.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

from scipy import special

SQRT_PI = math.sqrt(math.pi)
HALF_SQRT_PI = SQRT_PI / 2

# Lattice sums stop once a term drops below this absolute size.
TAIL_TOL = 1e-30
MAX_TERMS = 20


class Quadrature(str, Enum):
    Q = "q"
    P = "p"

    @property
    def conjugate(self) -> "Quadrature":
        return Quadrature.P if self is Quadrature.Q else Quadrature.Q


@dataclass(frozen=True, slots=True)
class GkpQubitState:
    """True deviations, ledger variances and frame bits of one GKP mode."""

    true_dev_q: float = 0.0
    true_dev_p: float = 0.0
    var_q: float = 0.0
    var_p: float = 0.0
    logical_bit_q: int = 0
    logical_bit_p: int = 0

    def evolve(self, **changes) -> "GkpQubitState":
        """Copy with some fields changed; a fast stand-in for dataclasses.replace."""
        g = changes.get
        return GkpQubitState(
            g("true_dev_q", self.true_dev_q), g("true_dev_p", self.true_dev_p),
            g("var_q", self.var_q), g("var_p", self.var_p),
            g("logical_bit_q", self.logical_bit_q), g("logical_bit_p", self.logical_bit_p),
        )

    def dev(self, quad: Quadrature) -> float:
        return self.true_dev_q if quad is Quadrature.Q else self.true_dev_p

    def var(self, quad: Quadrature) -> float:
        return self.var_q if quad is Quadrature.Q else self.var_p

    def bit(self, quad: Quadrature) -> int:
        return self.logical_bit_q if quad is Quadrature.Q else self.logical_bit_p

    def total(self, quad: Quadrature) -> float:
        """Full displacement including the frame bit, in quadrature units."""
        return self.dev(quad) + self.bit(quad) * SQRT_PI

    def with_total(self, quad: Quadrature, total: float) -> "GkpQubitState":
        dev, bit = fold(total)
        if quad is Quadrature.Q:
            return self.evolve(true_dev_q=dev, logical_bit_q=bit)
        return self.evolve(true_dev_p=dev, logical_bit_p=bit)

    def with_var(self, quad: Quadrature, var: float) -> "GkpQubitState":
        if quad is Quadrature.Q:
            return self.evolve(var_q=var)
        return self.evolve(var_p=var)

    def flipped(self, quad: Quadrature) -> "GkpQubitState":
        if quad is Quadrature.Q:
            return self.evolve(logical_bit_q=self.logical_bit_q ^ 1)
        return self.evolve(logical_bit_p=self.logical_bit_p ^ 1)


def fresh_qubit(variance: float, rng=None) -> GkpQubitState:
    """A freshly prepared GKP qubit with Gaussian deviations of ``variance``.

    With ``rng=None`` the deviations are left at zero and only the ledger is
    populated, which is how analytic variance propagation is run.
    """
    if rng is None:
        return GkpQubitState(0.0, 0.0, variance, variance)
    sd = math.sqrt(variance)
    dq, dp = rng.normal(0.0, sd, size=2)
    return GkpQubitState(float(dq), float(dp), variance, variance)


@dataclass(frozen=True, slots=True)
class MeasurementOutcome:
    raw_value: float
    bit: int
    dev_m: float
    accepted: bool = True


@dataclass(frozen=True)
class HrmConfig:
    """Highly reliable measurement.

    The decision line sits ``v_up`` inside the bin edge, so an outcome is
    kept only when ``|dev_m| < sqrt(pi)/2 - v_up``.
    """

    v_up: float = 2 * SQRT_PI / 5

    def __post_init__(self):
        if not 0.0 < self.v_up < HALF_SQRT_PI:
            raise ValueError(f"v_up must lie in (0, sqrt(pi)/2), got {self.v_up}")

    @property
    def window(self) -> float:
        return HALF_SQRT_PI - self.v_up


def nearest_peak(x: float) -> int:
    """Index n of the nearest lattice point n*sqrt(pi); ties go to smaller |n|."""
    y = x / SQRT_PI
    lo = math.floor(y)
    frac = y - lo
    if frac > 0.5:
        return lo + 1
    if frac < 0.5:
        return lo
    return lo if abs(lo) < abs(lo + 1) else lo + 1


def fold(total: float) -> tuple[float, int]:
    n = nearest_peak(total)
    return total - n * SQRT_PI, n & 1


def squeezing_to_variance(s_db: float) -> float:
    return 10.0 ** (-s_db / 10.0) / 2.0


def variance_to_squeezing(variance: float) -> float:
    if variance <= 0:
        raise ValueError("variance must be positive")
    return -10.0 * math.log10(2.0 * variance)


def _check_var(variance: float) -> None:
    if not variance > 0:
        raise ValueError(f"variance must be positive, got {variance}")


def _mass(a: float, b: float, sd: float) -> float:
    """Probability that N(0, sd^2) lands in [a, b] with 0 <= a < b."""
    s = sd * math.sqrt(2.0)
    return 0.5 * (special.erfc(a / s) - special.erfc(b / s))


def error_prob(variance: float) -> float:
    """Probability that a Gaussian deviation leaves the central bin."""
    _check_var(variance)
    return float(special.erfc(HALF_SQRT_PI / math.sqrt(2.0 * variance)))


def error_prob_binned(variance: float) -> float:
    """Probability that the deviation lands in a wrong-parity (odd) bin."""
    _check_var(variance)
    sd = math.sqrt(variance)
    total = 0.0
    for t in range(MAX_TERMS + 1):
        c = (2 * t + 1) * SQRT_PI
        term = 2.0 * _mass(c - HALF_SQRT_PI, c + HALF_SQRT_PI, sd)
        total += term
        if term < TAIL_TOL:
            break
    return total


def decide_bit(raw_value: float) -> MeasurementOutcome:
    n = nearest_peak(raw_value)
    return MeasurementOutcome(raw_value, n & 1, raw_value - n * SQRT_PI, True)


def hrm_decide(raw_value: float, cfg: HrmConfig) -> MeasurementOutcome:
    out = decide_bit(raw_value)
    return replace(out, accepted=abs(out.dev_m) < cfg.window)


def hrm_probabilities(variance: float, cfg: HrmConfig) -> tuple[float, float]:
    """Return (p_cor, p_in): mass inside accepted windows of even and odd peaks.

    The conditional error of an accepted outcome is p_in / (p_cor + p_in)
    and the acceptance probability is p_cor + p_in.
    """
    _check_var(variance)
    sd = math.sqrt(variance)
    w = cfg.window
    p_cor = float(special.erf(w / (sd * math.sqrt(2.0))))
    p_in = 0.0
    for k in range(1, 2 * MAX_TERMS + 2):
        c = k * SQRT_PI
        term = 2.0 * _mass(c - w, c + w, sd)
        if k % 2:
            p_in += term
        else:
            p_cor += term
        if term < TAIL_TOL:
            break
    return p_cor, p_in


def hrm_conditional_error(variance: float, cfg: HrmConfig) -> float:
    p_cor, p_in = hrm_probabilities(variance, cfg)
    return p_in / (p_cor + p_in)


def gaussian_pdf(x: float, variance: float) -> float:
    return math.exp(-x * x / (2.0 * variance)) / math.sqrt(2.0 * math.pi * variance)


def flip_probability(dev_m: float, variance: float) -> float:
    """Posterior probability that a decided bit is wrong, from its residual.

    Compares the nearest-peak hypothesis with the adjacent wrong-parity peak,
    which is the likelihood-ratio rule used for analog decoding.
    """
    _check_var(variance)
    a = abs(dev_m)
    b = SQRT_PI - a
    # log-domain to survive tiny variances
    log_ratio = (b * b - a * a) / (2.0 * variance)
    if log_ratio > 700:
        return math.exp(-log_ratio)
    return 1.0 / (1.0 + math.exp(log_ratio))
