"""Fast built-in oracle checks run by ``gkpft selftest``.

Each check compares a library routine with an independent computation
(numerical quadrature, dense-grid Bayes, exhaustive search) and returns
(name, ok, detail).
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate

from .analytics import threshold_previous, threshold_proposed
from .det_fusion import analog_repetition_decode
from .devices import GOLDEN_R, LossConfig, QndConfig
from .gkp_core import SQRT_PI, HrmConfig, error_prob_binned, hrm_probabilities
from .sqec import gauss_markov_posterior
from .topo.decoder import brute_force_pairs, matching_graph, min_weight_pairs, pairing_weight, qubit_weights
from .topo.lattice import RhgLattice


def _quad_mass(a, b, sd):
    f = lambda x: math.exp(-x * x / (2 * sd * sd)) / (sd * math.sqrt(2 * math.pi))
    return integrate.quad(f, a, b, epsabs=0, epsrel=1e-12, limit=200)[0]


def check_error_prob():
    worst = 0.0
    for var in (0.01, 0.09, 0.25):
        sd = math.sqrt(var)
        ref = sum(2 * _quad_mass((2 * t + 1) * SQRT_PI - SQRT_PI / 2, (2 * t + 1) * SQRT_PI + SQRT_PI / 2, sd)
                  for t in range(12))
        worst = max(worst, abs(error_prob_binned(var) - ref) / ref)
    return worst < 1e-8, f"max relative error {worst:.2e}"


def check_hrm():
    worst = 0.0
    cfg = HrmConfig()
    w = cfg.window
    for var in (0.04, 0.16):
        sd = math.sqrt(var)
        cor = sum((1 if k == 0 else 2) * _quad_mass(k * SQRT_PI - w, k * SQRT_PI + w, sd) for k in range(0, 24, 2))
        inc = sum(2 * _quad_mass(k * SQRT_PI - w, k * SQRT_PI + w, sd) for k in range(1, 24, 2))
        pc, pi = hrm_probabilities(var, cfg)
        worst = max(worst, abs(pc - cor) / cor, abs(pi - inc) / inc)
    return worst < 1e-8, f"max relative error {worst:.2e}"


def check_gauss_markov():
    x = np.linspace(-3, 3, 200001)
    worst = 0.0
    for vd, va, y in ((0.05, 0.02, 0.1), (0.1, 0.1, -0.3)):
        post = np.exp(-x * x / (2 * vd) - (y - x) ** 2 / (2 * va))
        post /= np.trapezoid(post, x)
        mean = np.trapezoid(x * post, x)
        var = np.trapezoid((x - mean) ** 2 * post, x)
        m, v = gauss_markov_posterior(vd, va, y)
        worst = max(worst, abs(m - mean), abs(v - var))
    return worst < 1e-6, f"max absolute error {worst:.2e}"


def check_qnd_identity():
    c = QndConfig(GOLDEN_R).coupling
    return abs(c - 1.0) < 1e-15, f"(1-R)/sqrt(R) - 1 = {c - 1.0:.1e}"


def check_decoder(instances: int = 20):
    rng = np.random.default_rng(2024)
    lat = RhgLattice(3)
    bad = 0
    for _ in range(instances):
        syn = np.zeros(lat.n_checks, dtype=np.uint8)
        k = 2 * int(rng.integers(1, 5))
        syn[rng.choice(lat.n_checks, k, replace=False)] = 1
        w = qubit_weights(rng.uniform(0.01, 0.4, lat.n_qubits))
        mg = matching_graph(lat, syn, w)
        best, _ = brute_force_pairs(mg.pair_weights)
        got = pairing_weight(mg.pair_weights, min_weight_pairs(mg.pair_weights))
        bad += not math.isclose(got, best, rel_tol=1e-12, abs_tol=1e-12)
    return bad == 0, f"{instances - bad}/{instances} instances match brute force"


def check_repetition(blocks: int = 500):
    rng = np.random.default_rng(7)
    var = 0.1
    bad = 0
    for _ in range(blocks):
        devs = rng.uniform(-SQRT_PI / 2, SQRT_PI / 2, 3)
        bits = rng.integers(0, 2, 3)
        # log-likelihood of each logical value over the nearest and adjacent peaks
        ll = []
        for v in (0, 1):
            s = 0.0
            for b, dv in zip(bits, devs):
                a = abs(dv)
                near, far = -a * a / (2 * var), -(SQRT_PI - a) ** 2 / (2 * var)
                s += near if b == v else far
            ll.append(s)
        want = int(ll[1] > ll[0]) if ll[0] != ll[1] else int(sum(bits) > 1)
        bad += analog_repetition_decode(list(bits), var, list(devs)) != want
    return bad == 0, f"{blocks - bad}/{blocks} blocks match the two-hypothesis evaluation"


def check_leading_order():
    prev = threshold_previous(LossConfig(0.0)).squeezing_db
    pro = threshold_proposed(LossConfig(0.0)).squeezing_db
    ok = abs(prev - 11.6) <= 1.0 and abs(pro - 8.9) <= 1.0
    return ok, f"previous {prev:.2f} dB, proposed {pro:.2f} dB at l = 0"


CHECKS = {
    "error_prob_binned vs quadrature": check_error_prob,
    "hrm_probabilities vs quadrature": check_hrm,
    "Gauss-Markov posterior vs grid": check_gauss_markov,
    "golden-ratio QND coupling": check_qnd_identity,
    "MWPM vs brute force": check_decoder,
    "analog repetition vs two hypotheses": check_repetition,
    "leading-order thresholds": check_leading_order,
}


def run_all():
    report = []
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        report.append((name, bool(ok), detail))
    return report


__all__ = ["CHECKS", "run_all"]
