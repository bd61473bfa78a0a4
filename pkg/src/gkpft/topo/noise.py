"""Per-node p-quadrature noise for the topological simulation.

Each lattice qubit is one node of the 3D cluster. Its record combines every
decision that can flip the node's p frame: the node's own homodyne readout,
the two deterministic fusions it takes part in, and the unheralded errors
left over from construction. ``true_flip`` is the parity of the wrong
decisions and ``flip_prob`` is the posterior probability of that parity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.special import expit

from ..analytics import sigma_prime_sq
from ..cluster_builder import BuildConfig, Builder, pipeline_ledger
from ..det_fusion import (
    FusionPort,
    analog_repetition_failure,
    combine_flip_probabilities,
    ml_selection_error,
    run_deterministic_fusion,
)
from ..devices import LossConfig, QndConfig, lossy_homodyne
from ..gkp_core import (
    SQRT_PI,
    HrmConfig,
    Quadrature,
    error_prob,
    error_prob_binned,
    flip_probability,
    hrm_conditional_error,
)


class Mode(str, Enum):
    LEDGER = "ledger"
    FAITHFUL = "faithful"


class Method(str, Enum):
    PROPOSED = "proposed"
    PREVIOUS = "previous"


@dataclass(frozen=True)
class NoiseConfig:
    """Noise model of one simulated node.

    ``loser_variance`` picks the readout variance of the ancillae that
    remove a losing leaf: "bell" uses the Bell-outcome variance (leaf q
    plus leaf p plus loss), "ancilla" the ancillae's own p ledger.
    ``fusion_soft`` passes each fusion decision's own posterior to the
    decoder instead of its average error rate.
    """

    sigma: float
    loss: float = 0.0
    L: int = 4
    m: int = 3
    me_sqec_iters: int = 3
    hrm: HrmConfig = field(default_factory=HrmConfig)
    qnd: QndConfig = field(default_factory=QndConfig)
    mode: Mode = Mode.LEDGER
    method: Method = Method.PROPOSED
    loss_in_construction: bool = False
    loser_variance: str = "bell"
    fusion_soft: bool = False

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.loser_variance not in ("bell", "ancilla"):
            raise ValueError("loser_variance must be 'bell' or 'ancilla'")
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "method", Method(self.method))

    @property
    def sigma2(self) -> float:
        return self.sigma ** 2

    @property
    def loss_cfg(self) -> LossConfig:
        return LossConfig(self.loss, self.loss_in_construction)

    def build_config(self) -> BuildConfig:
        return BuildConfig(sigma2=self.sigma2, me_sqec_iters=self.me_sqec_iters, L=self.L, m=self.m,
                           hrm=self.hrm, qnd=self.qnd, loss=self.loss_cfg)


@dataclass
class NoiseRecords:
    """Per-qubit arrays; ``dev_m`` is the node's own p residual."""

    true_flip: np.ndarray
    flip_prob: np.ndarray
    dev_m: np.ndarray

    def __len__(self):
        return len(self.true_flip)


def fold_array(x: np.ndarray):
    """Vectorised nearest-peak fold: (residual, parity)."""
    n = np.rint(x / SQRT_PI)
    return x - n * SQRT_PI, (n.astype(np.int64) & 1)


def flip_prob_array(dev: np.ndarray, variance) -> np.ndarray:
    a = np.abs(dev)
    ratio = ((SQRT_PI - a) ** 2 - a * a) / (2.0 * np.asarray(variance))
    return expit(-ratio)


def _readout(rng, var, shape):
    dev, bit = fold_array(rng.normal(0.0, math.sqrt(var), size=shape))
    return dev, bit, flip_prob_array(dev, var)


def _xor_combine(bits_list, probs_list):
    flip = np.zeros_like(bits_list[0])
    prod = np.ones(np.shape(bits_list[0]), dtype=float)
    for b, p in zip(bits_list, probs_list):
        flip = flip ^ b
        prod = prod * (1.0 - 2.0 * np.asarray(p))
    return flip, 0.5 * (1.0 - prod)


@dataclass(frozen=True)
class LedgerVariances:
    """Readout variances (loss included) and per-decision error rates of one node."""

    node_p: float
    bell: float
    anc_q: float
    loser: float
    prior: float
    e_ml: float
    e_anc_q: float
    e_rep: float

    def component_rates(self, L: int, m: int) -> list[tuple[float, int]]:
        """(rate, multiplicity) of every independent flip source on one node."""
        return [
            (error_prob_binned(self.node_p), 1),
            (self.e_ml, 2),
            (self.e_anc_q, 2 * m),
            (self.e_rep, 2 * (L - 1)),
            (self.prior, 1),
        ]

    def total_rate(self, L: int, m: int) -> float:
        prod = 1.0
        for rate, k in self.component_rates(L, m):
            prod *= (1.0 - 2.0 * rate) ** k
        return 0.5 * (1.0 - prod)


@lru_cache(maxsize=512)
def ledger_variances(cfg: NoiseConfig) -> LedgerVariances:
    led = pipeline_ledger(cfg.build_config())
    lv = cfg.loss_cfg.added_variance
    prior = combine_flip_probabilities(
        hrm_conditional_error(v, cfg.hrm) if kind == "hrm" else error_prob(v)
        for kind, v in led.node_exposures
    )
    bell = led.pro + lv
    loser = bell if cfg.loser_variance == "bell" else led.anc_p + lv
    return LedgerVariances(
        node_p=led.node_p + lv,
        bell=bell,
        anc_q=led.anc_q + lv,
        loser=loser,
        prior=prior,
        e_ml=ml_selection_error(bell, cfg.L),
        e_anc_q=error_prob_binned(led.anc_q + lv),
        e_rep=analog_repetition_failure(loser, cfg.m),
    )


def sample_ledger_proposed(cfg: NoiseConfig, n: int, rng) -> NoiseRecords:
    """Sample every decision that can flip a node, from the analytic ledger.

    The node's own readout always carries its analog flip posterior. The
    fusion decisions (kept Bell bit, kept-ancilla q readouts, loser
    repetition blocks) enter with their average error rates unless
    ``cfg.fusion_soft`` is set.
    """
    v = ledger_variances(cfg)
    L, m = cfg.L, cfg.m
    soft = cfg.fusion_soft
    bits, probs = [], []
    node_dev, b, p = _readout(rng, v.node_p, n)
    bits.append(b)
    probs.append(p)
    # two deterministic fusions per node; this node owns the first Bell outcome
    dev_a, bit_a = fold_array(rng.normal(0.0, math.sqrt(v.bell), size=(n, 2, L)))
    dev_b, _ = fold_array(rng.normal(0.0, math.sqrt(v.bell), size=(n, 2, L)))
    k = np.argmax(-(dev_a ** 2 + dev_b ** 2), axis=2)[..., None]
    kd = np.take_along_axis(dev_a, k, axis=2)[..., 0]
    kb = np.take_along_axis(bit_a, k, axis=2)[..., 0]
    kp = flip_prob_array(kd, v.bell) if soft else np.full(kd.shape, v.e_ml)
    _, qb, qp = _readout(rng, v.anc_q, (n, 2 * m))
    if not soft:
        qp = np.full(qb.shape, v.e_anc_q)
    cols = [(kb[:, j], kp[:, j]) for j in range(2)] + [(qb[:, j], qp[:, j]) for j in range(2 * m)]
    if L > 1:
        dev, bit = fold_array(rng.normal(0.0, math.sqrt(v.loser), size=(n, 2 * (L - 1), m)))
        a = np.abs(dev)
        evidence = ((SQRT_PI - a) ** 2 - a * a) / (2.0 * v.loser)
        margin = np.where(bit == 1, evidence, -evidence).sum(axis=2)
        dec = bit[..., 0] if m == 1 else (margin > 0).astype(np.int64)
        bp = expit(-np.abs(margin)) if soft else np.full(dec.shape, v.e_rep)
        cols += [(dec[:, j], bp[:, j]) for j in range(2 * (L - 1))]
    for bb, pp in cols:
        bits.append(bb)
        probs.append(pp)
    if v.prior > 0:
        bits.append((rng.random(n) < v.prior).astype(np.int64))
        probs.append(np.full(n, v.prior))
    flip, prob = _xor_combine(bits, probs)
    return NoiseRecords(flip.astype(np.uint8), prob, node_dev)


def sample_ledger_previous(cfg: NoiseConfig, n: int, rng) -> NoiseRecords:
    """Two probabilistic HRM-free fusions per node with the grouped outcome variance."""
    var = sigma_prime_sq(cfg.sigma2, cfg.qnd, cfg.loss_cfg)
    dev, bit, p = _readout(rng, var, (n, 2))
    flip, prob = _xor_combine([bit[:, 0], bit[:, 1]], [p[:, 0], p[:, 1]])
    return NoiseRecords(flip.astype(np.uint8), prob, dev[:, 0])


def _hex_nodes(builder: Builder, count: int):
    nodes = []
    while len(nodes) < count:
        hexc = builder.build_hexagonal()
        for c in hexc.centers:
            groups = hexc.groups(c)
            leaves = [(hexc.qubits[lf].state, [hexc.qubits[a].state for a in ancs])
                      for lf, ancs in groups.values()]
            node = hexc.qubits[c]
            nodes.append((node.state, leaves, list(node.exposures)))
    return nodes[:count]


def sample_faithful(cfg: NoiseConfig, n: int, rng) -> NoiseRecords:
    """Full construction per node, chained deterministic fusions between neighbours.

    Node i's second port is fused with node i+1's first port (cyclically),
    so every node takes part in exactly two fusions. Rejected construction
    fusions reuse their partner with redrawn deviations; rebuilding it from
    scratch costs a geometric number of builds per nesting level.
    """
    bcfg = replace(cfg.build_config(), retry="redraw")
    builder = Builder(bcfg, rng)
    nodes = _hex_nodes(builder, n)
    lossc = cfg.loss_cfg
    L = cfg.L
    comps = [[] for _ in range(n)]
    devs = np.zeros(n)
    for i, (state, _, exposures) in enumerate(nodes):
        out = lossy_homodyne(state, Quadrature.P, lossc, rng)
        devs[i] = out.dev_m
        comps[i].append((out.bit, flip_probability(out.dev_m, state.var_p + lossc.added_variance)))
        prior = combine_flip_probabilities(
            hrm_conditional_error(v, cfg.hrm) if kind == "hrm" else error_prob(v) for kind, v in exposures
        )
        # construction errors already sit in the frame bit read out above
        comps[i].append((0, prior))
    for i in range(n):
        j = (i + 1) % n
        port_a = FusionPort(nodes[i][1][L:2 * L])
        port_b = FusionPort(nodes[j][1][:L])
        res = run_deterministic_fusion(port_a, port_b, cfg.loss_cfg, rng)
        comps[i].extend(res.components[0])
        comps[j].extend(res.components[1])
    flip = np.array([sum(b for b, _ in c) % 2 for c in comps], dtype=np.uint8)
    prob = np.array([combine_flip_probabilities(p for _, p in c) for c in comps])
    return NoiseRecords(flip, prob, devs)


def sample_qubit_noise(cfg: NoiseConfig, n: int, rng) -> NoiseRecords:
    if cfg.method is Method.PREVIOUS:
        return sample_ledger_previous(cfg, n, rng)
    if cfg.mode is Mode.FAITHFUL:
        return sample_faithful(cfg, n, rng)
    return sample_ledger_proposed(cfg, n, rng)
