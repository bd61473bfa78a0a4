"""Noisy two-qubit gates and lossy homodyne detection in the deviation picture."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .gkp_core import (
    GkpQubitState,
    HrmConfig,
    MeasurementOutcome,
    Quadrature,
    decide_bit,
    hrm_decide,
    squeezing_to_variance,
)

GOLDEN_R = (3.0 - math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class QndConfig:
    """Beam-splitter QND gate driven by two squeezed vacua of variance ``sv_variance``."""

    reflectivity: float = GOLDEN_R
    sv_variance: float = squeezing_to_variance(15.0)

    def __post_init__(self):
        if not 0.0 < self.reflectivity < 1.0:
            raise ValueError("reflectivity must lie in (0, 1)")
        if self.sv_variance < 0:
            raise ValueError("sv_variance must be nonnegative")

    @property
    def coupling(self) -> float:
        """(1-R)/sqrt(R); equals 1 for the golden-ratio reflectivity."""
        r = self.reflectivity
        if r == GOLDEN_R:
            # 1 - R = (sqrt5 - 1)/2 = sqrt(R) exactly; floating point would give 1 + 2e-16
            return 1.0
        return (1.0 - r) / math.sqrt(r)

    @property
    def c_local(self) -> float:
        r = self.reflectivity
        return math.sqrt((1.0 - r) / (1.0 + r))

    @property
    def c_cross(self) -> float:
        r = self.reflectivity
        return math.sqrt(r * (1.0 - r) / (1.0 + r))


IDEAL_QND = QndConfig(sv_variance=0.0)


@dataclass(frozen=True)
class LossConfig:
    """Transmission loss ``loss`` in front of homodyne detectors.

    Loss always acts on the measurements made on the finished cluster
    (node readouts and deterministic-fusion readouts). ``in_construction``
    also puts it on the readouts used while building resource states
    (ME-SQEC ancillae and HRM fusions).
    """

    loss: float = 0.0
    in_construction: bool = False

    def __post_init__(self):
        if not 0.0 <= self.loss < 1.0:
            raise ValueError(f"loss must lie in [0, 1), got {self.loss}")

    @property
    def eta(self) -> float:
        return 1.0 - self.loss

    @property
    def added_variance(self) -> float:
        """Extra variance after rescaling the outcome by 1/sqrt(eta)."""
        return self.loss / (2.0 * self.eta)

    def construction(self) -> "LossConfig":
        """The loss seen by construction-stage readouts."""
        return self if self.in_construction else replace(self, loss=0.0)


NO_LOSS = LossConfig()


def qnd_variance_update(var_cq, var_cp, var_tq, var_tp, cfg: QndConfig):
    """Second-moment map of the QND gate (control C, target T).

    The cross terms use the partner's variance, as follows from the
    quadrature transforms themselves.
    """
    for v in (var_cq, var_cp, var_tq, var_tp):
        if not v > 0:
            raise ValueError("variances must be positive")
    g2 = cfg.coupling ** 2
    loc = cfg.c_local ** 2 * cfg.sv_variance
    cross = cfg.c_cross ** 2 * cfg.sv_variance
    return (
        var_cq + loc,
        var_cp + g2 * var_tp + cross,
        var_tq + g2 * var_cq + cross,
        var_tp + loc,
    )


def qnd_gate(control: GkpQubitState, target: GkpQubitState, cfg: QndConfig, rng=None):
    """CNOT-type QND gate; returns (control', target').

    ``rng=None`` propagates only the ledger (no noise sampled).
    """
    g = cfg.coupling
    if rng is None or cfg.sv_variance == 0:
        a_q = b_p = 0.0
    else:
        sd = math.sqrt(cfg.sv_variance)
        a_q, b_p = rng.normal(0.0, sd, size=2)
    Q, P = Quadrature.Q, Quadrature.P
    cq, cp = control.total(Q), control.total(P)
    tq, tp = target.total(Q), target.total(P)
    new_cq = cq - cfg.c_local * a_q
    new_cp = cp - g * tp + cfg.c_cross * b_p
    new_tq = g * cq + tq + cfg.c_cross * a_q
    new_tp = tp + cfg.c_local * b_p
    vcq, vcp, vtq, vtp = _ledger_update(control, target, cfg)
    c = control.with_total(Q, new_cq).with_total(P, new_cp)
    t = target.with_total(Q, new_tq).with_total(P, new_tp)
    c = c.evolve(var_q=vcq, var_p=vcp)
    t = t.evolve(var_q=vtq, var_p=vtp)
    return c, t


def _ledger_update(control, target, cfg):
    # zero ledgers are legal inside the builder (perfect ancilla limits)
    g2 = cfg.coupling ** 2
    loc = cfg.c_local ** 2 * cfg.sv_variance
    cross = cfg.c_cross ** 2 * cfg.sv_variance
    return (
        control.var_q + loc,
        control.var_p + g2 * target.var_p + cross,
        target.var_q + g2 * control.var_q + cross,
        target.var_p + loc,
    )


def fourier(state: GkpQubitState) -> GkpQubitState:
    """(q, p) -> (p, -q)."""
    Q, P = Quadrature.Q, Quadrature.P
    q, p = state.total(Q), state.total(P)
    out = state.with_total(Q, p).with_total(P, -q)
    return out.evolve(var_q=state.var_p, var_p=state.var_q)


def inverse_fourier(state: GkpQubitState) -> GkpQubitState:
    """(q, p) -> (-p, q)."""
    Q, P = Quadrature.Q, Quadrature.P
    q, p = state.total(Q), state.total(P)
    out = state.with_total(Q, -p).with_total(P, q)
    return out.evolve(var_q=state.var_p, var_p=state.var_q)


def qnd_cz(a: GkpQubitState, b: GkpQubitState, cfg: QndConfig, rng=None):
    """CZ built from the QND gate by conjugating the second qubit with Fourier transforms."""
    a2, b2 = qnd_gate(a, fourier(b), cfg, rng)
    return a2, inverse_fourier(b2)


def cnot_ideal(control: GkpQubitState, target: GkpQubitState):
    """p_control -= p_target, q_target += q_control."""
    Q, P = Quadrature.Q, Quadrature.P
    c = control.with_total(P, control.total(P) - target.total(P))
    t = target.with_total(Q, target.total(Q) + control.total(Q))
    c = c.evolve(var_p=control.var_p + target.var_p)
    t = t.evolve(var_q=target.var_q + control.var_q)
    return c, t


def cz_ideal(a: GkpQubitState, b: GkpQubitState):
    Q, P = Quadrature.Q, Quadrature.P
    a2 = a.with_total(P, a.total(P) + b.total(Q))
    b2 = b.with_total(P, b.total(P) + a.total(Q))
    a2 = a2.evolve(var_p=a.var_p + b.var_q)
    b2 = b2.evolve(var_p=b.var_p + a.var_q)
    return a2, b2


def lossy_homodyne(
    state: GkpQubitState,
    quad: Quadrature,
    cfg: LossConfig,
    rng=None,
    hrm: HrmConfig | None = None,
) -> MeasurementOutcome:
    """Homodyne readout after loss, rescaled by 1/sqrt(eta), then bit decision."""
    raw = state.total(quad)
    if rng is not None and cfg.loss > 0:
        raw += rng.normal(0.0, math.sqrt(cfg.added_variance))
    return hrm_decide(raw, hrm) if hrm is not None else decide_bit(raw)
