"""Single-qubit-level error correction (SQEC) and its maximum-likelihood variant."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .devices import IDEAL_QND, NO_LOSS, LossConfig, QndConfig, lossy_homodyne, qnd_gate
from .gkp_core import (
    GkpQubitState,
    HrmConfig,
    MeasurementOutcome,
    Quadrature,
    fresh_qubit,
)


@dataclass(frozen=True)
class SqecConfig:
    hrm: HrmConfig | None = None
    loss: LossConfig = field(default_factory=LossConfig)
    qnd: QndConfig = IDEAL_QND


@dataclass(frozen=True)
class SqecResult:
    data: GkpQubitState
    ancilla_outcome: MeasurementOutcome
    displacement_applied: float
    induced_logical_flip: bool
    accepted: bool = True


def gauss_markov_posterior(var_data: float, var_anc: float, measured: float):
    """Posterior (mean, variance) of a Gaussian deviation seen through additive noise.

    Prior N(0, var_data), observation measured = x + noise with noise
    N(0, var_anc).
    """
    if var_data <= 0 or var_anc < 0:
        raise ValueError("need var_data > 0 and var_anc >= 0")
    w = var_data / (var_data + var_anc)
    return w * measured, var_data * var_anc / (var_data + var_anc)


def _correct(data, quad, ancilla_var, cfg, rng, ml):
    qnd = cfg.qnd
    loss = cfg.loss
    anc = fresh_qubit(ancilla_var, rng)
    g, c1, c2, s = qnd.coupling, qnd.c_local, qnd.c_cross, qnd.sv_variance
    if quad is Quadrature.P:
        # ancilla |0> is the control, data the target; read the ancilla in p
        anc2, data2 = qnd_gate(anc, data, qnd, rng)
        sign = 1.0
    else:
        # ancilla |+> is the target, data the control; read the ancilla in q
        data2, anc2 = qnd_gate(data, anc, qnd, rng)
        sign = -1.0
    var_d = data.var(quad)
    var_x = data2.var(quad)
    var_y = ancilla_var + g * g * var_d + c2 * c2 * s + loss.added_variance
    kappa_opt = (g * var_d - c1 * c2 * s) / var_y
    out = lossy_homodyne(anc2, quad, loss, rng, cfg.hrm)
    if not out.accepted:
        return SqecResult(data, out, 0.0, False, accepted=False)
    kappa = kappa_opt if ml else 1.0
    shift = sign * kappa * out.dev_m
    before = data.bit(quad)
    corrected = data2.with_total(quad, data2.total(quad) + shift)
    new_var = var_x + kappa * kappa * var_y - 2.0 * kappa * kappa_opt * var_y
    corrected = corrected.with_var(quad, max(new_var, 0.0))
    flip = corrected.bit(quad) != before
    return SqecResult(corrected, out, shift, flip)


def sqec_p(data: GkpQubitState, ancilla_var: float, cfg: SqecConfig = SqecConfig(), rng=None) -> SqecResult:
    """Plain SQEC in p: the data p deviation is replaced by the ancilla's."""
    return _correct(data, Quadrature.P, ancilla_var, cfg, rng, ml=False)


def sqec_q(data: GkpQubitState, ancilla_var: float, cfg: SqecConfig = SqecConfig(), rng=None) -> SqecResult:
    return _correct(data, Quadrature.Q, ancilla_var, cfg, rng, ml=False)


def me_sqec(
    data: GkpQubitState,
    quad: Quadrature,
    ancilla_var: float,
    cfg: SqecConfig = SqecConfig(),
    rng=None,
) -> SqecResult:
    """SQEC that displaces by the posterior mean instead of the full residual.

    With ideal gates the weight is var_data / (var_data + var_obs) where
    var_obs is the ancilla variance plus measurement-loss noise. With the
    noisy QND gate the weight also accounts for squeezed-vacuum noise shared
    by data and ancilla, so the ledger stays exact.
    """
    return _correct(data, quad, ancilla_var, cfg, rng, ml=True)


def me_sqec_until_accepted(data, quad, ancilla_var, cfg, rng, max_tries: int = 10_000):
    """Repeat an ME-SQEC round with fresh ancillae until the HRM accepts.

    A rejected readout discards the data qubit together with the ancilla.
    Its replacement is modelled as a fresh draw of the full displacement in
    ``quad`` from N(0, ledger variance), folded onto the lattice, so it
    carries the natural misidentification rate of that variance. Retrying
    on the same deviation would only accept once ancilla noise happened to
    mask a large error, leaving it uncorrected. Keeping the old frame bit
    would lock in exactly the wrapped deviations the HRM is there to reject.

    Returns the result and the number of rejected attempts.
    """
    for tries in range(max_tries):
        res = me_sqec(data, quad, ancilla_var, cfg, rng)
        if res.accepted:
            return res, tries
        if rng is not None:
            var = data.var(quad)
            data = data.with_total(quad, rng.normal(0.0, math.sqrt(var)) if var > 0 else 0.0)
    raise RuntimeError("HRM never accepted; acceptance window too small for this variance")
