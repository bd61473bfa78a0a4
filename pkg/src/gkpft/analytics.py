"""Leading-order error budgets and squeezing thresholds for both fusion schemes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .cluster_builder import BuildConfig, pipeline_ledger
from .det_fusion import leading_order_fusion_error
from .devices import LossConfig, QndConfig
from .gkp_core import (
    HrmConfig,
    error_prob,
    hrm_conditional_error,
    squeezing_to_variance,
    variance_to_squeezing,
)

SIGMA2_LO = 1e-6
SIGMA2_HI = 1.0


class Unachievable(ValueError):
    """No positive GKP variance reaches the target error."""


@dataclass(frozen=True)
class ErrorBudget:
    E_node: float = 0.0
    E_HRM: float = 0.0
    E_det: float = 0.0
    E_det_pro: float = 0.0

    @property
    def E_tot(self) -> float:
        return self.E_node + self.E_HRM + 2.0 * self.E_det

    @property
    def E_tot_pro(self) -> float:
        return self.E_node + self.E_HRM + 2.0 * self.E_det_pro


@dataclass(frozen=True)
class ThresholdResult:
    sigma2: float
    residual: float

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def squeezing_db(self) -> float:
        return variance_to_squeezing(self.sigma2)


def sigma_prime_sq(sigma2: float, qnd: QndConfig = QndConfig(), loss: LossConfig = LossConfig(),
                   grouped: bool = True) -> float:
    """Bell-outcome variance of the previous (non-deterministic) fusion.

    Each of the three contributions that build one fused outcome carries
    the GKP variance, the QND squeezed-vacuum term and the loss term, so by
    default all three are multiplied by 3. ``grouped=False`` multiplies only
    the GKP variance.
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    extra = qnd.sv_variance * (1.0 - qnd.reflectivity) + loss.added_variance
    return 3.0 * (sigma2 + extra) if grouped else 3.0 * sigma2 + extra


def _bisect(f, target: float, lo: float = SIGMA2_LO, hi: float = SIGMA2_HI, rtol: float = 1e-13) -> float:
    """Largest sigma2 with f(sigma2) <= target for increasing f."""
    flo = f(lo)
    if flo > target:
        raise Unachievable(f"error {flo:.4g} at sigma2={lo:g} already exceeds target {target:g}")
    if f(hi) <= target:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) <= target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    return 0.5 * (lo + hi)


def _check_target(target: float) -> None:
    if not 0.0 < target < 1.0:
        raise ValueError("target must lie in (0, 1)")


def previous_error(sigma2: float, qnd: QndConfig, loss: LossConfig, grouped: bool = True) -> float:
    return 2.0 * error_prob(sigma_prime_sq(sigma2, qnd, loss, grouped))


def threshold_previous(loss: LossConfig = LossConfig(), qnd: QndConfig = QndConfig(), target: float = 0.03,
                       grouped: bool = True) -> ThresholdResult:
    """Squeezing at which 2 E(sigma'^2) equals ``target``.

    Raises Unachievable when the loss and gate noise alone exceed the target.
    """
    _check_target(target)
    if previous_error(0.0 + 1e-300, qnd, loss, grouped) > target:
        raise Unachievable("loss and gate noise alone exceed the target error")
    f = lambda s2: previous_error(s2, qnd, loss, grouped)
    s2 = _bisect(f, target)
    return ThresholdResult(s2, f(s2) / target - 1.0)


def loss_ceiling_previous(qnd: QndConfig = QndConfig(), target: float = 0.03, grouped: bool = True) -> float:
    """Largest loss rate for which the previous scheme can still reach ``target``."""
    lo, hi = 0.0, 0.999
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if previous_error(1e-300, qnd, LossConfig(mid), grouped) <= target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ProposedConfig:
    L: int = 4
    m: int = 3
    me_sqec_iters: int = 3
    hrm: HrmConfig = field(default_factory=HrmConfig)
    printed_exponent: bool = False
    full_budget: bool = True


def proposed_budget(sigma2: float, loss: LossConfig = LossConfig(), qnd: QndConfig = QndConfig(),
                    cfg: ProposedConfig = ProposedConfig()) -> ErrorBudget:
    """Error budget of one node from the analytic construction ledger.

    The Bell-outcome variance is the leaf ledger q plus p plus the loss of
    the readout. With ``cfg.full_budget`` the node readout, the HRM
    exposures and the kept-ancilla readouts are included; otherwise only
    the two dominant terms (2 E_ML + 2 (L-1) E_anc,p) are kept.
    """
    bcfg = BuildConfig(sigma2=sigma2, me_sqec_iters=cfg.me_sqec_iters, L=cfg.L, m=cfg.m,
                       hrm=cfg.hrm, qnd=qnd, loss=loss)
    led = pipeline_ledger(bcfg)
    lv = loss.added_variance
    fe = leading_order_fusion_error(cfg.L, cfg.m, led.pro + lv, led.anc_q + lv, cfg.hrm, cfg.printed_exponent)
    if not cfg.full_budget:
        return ErrorBudget(E_det_pro=fe.E_ML + (cfg.L - 1) * fe.E_anc_p)
    e_hrm = sum(
        hrm_conditional_error(v, cfg.hrm) if kind == "hrm" else error_prob(v)
        for kind, v in led.node_exposures
    )
    return ErrorBudget(E_node=error_prob(led.node_p + lv), E_HRM=e_hrm, E_det_pro=fe.E_det_pro)


def threshold_proposed(loss: LossConfig = LossConfig(), qnd: QndConfig = QndConfig(),
                       cfg: ProposedConfig = ProposedConfig(), target: float = 0.03) -> ThresholdResult:
    _check_target(target)
    f = lambda s2: proposed_budget(s2, loss, qnd, cfg).E_tot_pro
    # the ledger needs a strictly positive variance; 1e-4 is far beyond any squeezing of interest
    s2 = _bisect(f, target, lo=1e-4, hi=0.5)
    return ThresholdResult(s2, f(s2) / target - 1.0)


def threshold_db(result: ThresholdResult) -> float:
    return result.squeezing_db


__all__ = [
    "ErrorBudget",
    "ProposedConfig",
    "ThresholdResult",
    "Unachievable",
    "loss_ceiling_previous",
    "previous_error",
    "proposed_budget",
    "sigma_prime_sq",
    "squeezing_to_variance",
    "threshold_previous",
    "threshold_proposed",
]
