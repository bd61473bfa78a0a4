"""Monte Carlo trials, failure statistics and threshold estimation."""
from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace
from multiprocessing import get_context

import numpy as np
from scipy import optimize

from ..gkp_core import variance_to_squeezing
from .decoder import Decoder
from .lattice import RhgLattice
from .noise import NoiseConfig, sample_qubit_noise

CSV_COLUMNS = ("l", "sigma", "squeezing_db", "d", "n_trials", "failures", "failure_rate",
               "ci_low", "ci_high", "mode", "analog")


class InvariantViolation(RuntimeError):
    pass


class NoCrossing(ValueError):
    pass


@dataclass(frozen=True)
class TrialConfig:
    d: int
    noise: NoiseConfig
    analog: bool = True
    backend: str = "pymatching"


@dataclass(frozen=True)
class TrialOutcome:
    seed: int
    index: int
    syndrome_size: int
    n_errors: int
    logical_failure: bool
    runtime_ms: float


def trial_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def run_one(cfg: TrialConfig, seed: int, index: int, lattice=None, decoder=None) -> TrialOutcome:
    t0 = time.perf_counter()
    lattice = lattice or RhgLattice(cfg.d)
    decoder = decoder or Decoder(lattice, cfg.backend)
    rng = trial_rng(seed, index)
    rec = sample_qubit_noise(cfg.noise, lattice.n_qubits, rng)
    syn = lattice.syndrome(rec.true_flip)
    probs = rec.flip_prob if cfg.analog else np.full(lattice.n_qubits, 0.1)
    corr = decoder.decode(syn, probs)
    residual = rec.true_flip ^ corr
    if lattice.syndrome(residual).any():
        raise InvariantViolation(f"correction leaves a nonzero syndrome (seed={seed}, trial={index})")
    fail = lattice.logical_parity(residual)
    return TrialOutcome(seed, index, int(syn.sum()), int(rec.true_flip.sum()), bool(fail),
                        1e3 * (time.perf_counter() - t0))


def _run_chunk(args):
    cfg, seed, indices = args
    lattice = RhgLattice(cfg.d)
    decoder = Decoder(lattice, cfg.backend)
    return [run_one(cfg, seed, i, lattice, decoder) for i in indices]


def default_workers() -> int:
    return int(os.environ.get("GKPFT_WORKERS", "1"))


def run_outcomes(cfg: TrialConfig, n_trials: int, seed: int = 0, workers: int | None = None) -> list[TrialOutcome]:
    """Per-trial outcomes in trial order; identical for any worker count."""
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    workers = default_workers() if workers is None else workers
    if workers <= 1:
        return _run_chunk((cfg, seed, range(n_trials)))
    chunks = [(cfg, seed, range(s, min(s + 64, n_trials))) for s in range(0, n_trials, 64)]
    with get_context("spawn").Pool(workers) as pool:
        parts = pool.map(_run_chunk, chunks)
    return [o for part in parts for o in part]


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class TrialsResult:
    d: int
    sigma: float
    loss: float
    n_trials: int
    failures: int
    mode: str
    analog: bool

    @property
    def failure_rate(self) -> float:
        return self.failures / self.n_trials

    @property
    def ci(self) -> tuple[float, float]:
        return wilson_interval(self.failures, self.n_trials)

    @property
    def squeezing_db(self) -> float:
        return variance_to_squeezing(self.sigma ** 2)

    def row(self) -> dict:
        lo, hi = self.ci
        return {
            "l": self.loss, "sigma": self.sigma, "squeezing_db": self.squeezing_db, "d": self.d,
            "n_trials": self.n_trials, "failures": self.failures, "failure_rate": self.failure_rate,
            "ci_low": lo, "ci_high": hi, "mode": self.mode, "analog": self.analog,
        }


def run_trials(cfg: TrialConfig, n_trials: int, seed: int = 0, workers: int | None = None) -> TrialsResult:
    outs = run_outcomes(cfg, n_trials, seed, workers)
    fails = sum(o.logical_failure for o in outs)
    return TrialsResult(cfg.d, cfg.noise.sigma, cfg.noise.loss, n_trials, fails,
                        f"{cfg.noise.method.value}-{cfg.noise.mode.value}", cfg.analog)


def write_csv(path, results) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in results:
            row = r.row()
            w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _glm_nll(X, k, n, iters: int = 50) -> float:
    """Binomial logistic regression by Newton steps; returns the minimum negative log-likelihood."""
    beta = np.zeros(X.shape[1])
    nll = np.inf
    for _ in range(iters):
        z = X @ beta
        mu = 1.0 / (1.0 + np.exp(-z))
        grad = X.T @ (n * mu - k)
        H = (X * (n * mu * (1 - mu) + 1e-9)[:, None]).T @ X
        step = np.linalg.solve(H + 1e-9 * np.eye(len(beta)), grad)
        t = 1.0
        while t > 1e-6:
            cand = beta - t * step
            zc = X @ cand
            val = float(np.sum(n * np.logaddexp(0.0, zc) - k * zc))
            if val <= nll or not np.isfinite(nll):
                break
            t *= 0.5
        beta = cand
        if abs(nll - val) < 1e-10:
            return val
        nll = val
    return nll


def _profile_nll(sc, mu, sig, ds, k, n, scale):
    x = (sig - sc) * (ds / ds.min()) ** mu / scale
    return _glm_nll(np.column_stack([np.ones_like(x), x, x * x]), k, n)


def scaling_fit(sigmas, distances, fails, n_trials, grid: int = 41):
    """Joint finite-size-scaling fit over every distance.

    logit(failure) = a + b x + c x^2 with x = (sigma - sigma_c) d^(1/nu).
    For fixed (sigma_c, 1/nu) the binomial likelihood is a convex logistic
    regression in (a, b, c); the outer two parameters are found on a grid
    and then refined. Returns (sigma_c, 1/nu).
    """
    sig = np.asarray(sigmas, float)
    ds = np.asarray(distances, float)
    k = np.asarray(fails, float)
    n = np.asarray(n_trials, float)
    lo, hi = sig.min(), sig.max()
    scale = hi - lo
    mus = np.linspace(0.2, 3.0, 15)
    scs = np.linspace(lo, hi, grid)
    table = np.array([[_profile_nll(sc, mu, sig, ds, k, n, scale) for mu in mus] for sc in scs])
    i, j = np.unravel_index(np.argmin(table), table.shape)
    res = optimize.minimize(lambda t: _profile_nll(t[0], t[1], sig, ds, k, n, scale), [scs[i], mus[j]],
                            method="Nelder-Mead", options={"xatol": 1e-7, "fatol": 1e-9})
    sc, mu = res.x
    if res.fun > table[i, j] or not (lo <= sc <= hi and 0.2 <= mu <= 3.0):
        sc, mu = scs[i], mus[j]
    return float(sc), float(mu)


def crossing(sigmas, fails_small, fails_large, n_small, n_large, d_small=5, d_large=7, lo=None, hi=None) -> float:
    """Sigma where the failure curves of two distances cross (finite-size-scaling fit).

    The fitted crossing is confined to the swept range; a fit that pins it
    to either end means the sweep does not bracket the crossing.
    """
    sigmas = list(sigmas)
    m = len(sigmas)
    x, _ = scaling_fit(sigmas * 2, [d_small] * m + [d_large] * m, list(fails_small) + list(fails_large),
                       list(n_small) + list(n_large))
    k1 = np.asarray(fails_small, float) / np.asarray(n_small, float)
    k2 = np.asarray(fails_large, float) / np.asarray(n_large, float)
    if np.all(k2 <= k1):
        raise NoCrossing("the larger distance never fails more often than the smaller one in this sweep")
    span = max(sigmas) - min(sigmas)
    lo = min(sigmas) + 1e-3 * span if lo is None else lo
    hi = max(sigmas) - 1e-3 * span if hi is None else hi
    if not lo <= x <= hi:
        raise NoCrossing(f"curves cross at sigma={x:.4f}, outside the sweep [{lo:.4f}, {hi:.4f}]")
    return float(x)


def pilot_window(noise: NoiseConfig, lo: float, hi: float, d: int = 5, n_pilot: int = 300, n_grid: int = 11,
                 p_lo: float = 0.01, p_hi: float = 0.35, seed: int = 0, workers: int | None = None,
                 backend: str = "pymatching") -> tuple[float, float]:
    """Sigma range where the distance-d failure rate rises from ``p_lo`` to ``p_hi``.

    A cheap coarse sweep locates the transition so the expensive sweep
    spends its points where the curves actually cross.
    """
    grid = np.linspace(lo, hi, n_grid)
    rates = np.array([run_trials(TrialConfig(d, replace(noise, sigma=float(s)), True, backend),
                                 n_pilot, seed + 7919, workers).failure_rate for s in grid])
    rates = np.maximum.accumulate(rates)
    if rates[-1] < p_lo or rates[0] > p_hi:
        raise NoCrossing(f"failure rate never crosses [{p_lo}, {p_hi}] on [{lo}, {hi}]")
    a = float(np.interp(p_lo, rates + 1e-12 * np.arange(n_grid), grid))
    b = float(np.interp(p_hi, rates + 1e-12 * np.arange(n_grid), grid))
    return a, max(b, a + (hi - lo) / (n_grid - 1))


@dataclass
class ThresholdEstimate:
    sigma: float
    ci: tuple[float, float]
    results: list = field(default_factory=list)

    @property
    def squeezing_db(self) -> float:
        return variance_to_squeezing(self.sigma ** 2)

    @property
    def squeezing_ci(self) -> tuple[float, float]:
        return variance_to_squeezing(self.ci[1] ** 2), variance_to_squeezing(self.ci[0] ** 2)


def estimate_threshold(noise: NoiseConfig, sigmas, distances=(5, 7), n_trials: int = 2000, seed: int = 0,
                       workers: int | None = None, analog: bool = True, n_boot: int = 200,
                       backend: str = "pymatching") -> ThresholdEstimate:
    """Crossing of the two smallest-distance failure curves, with a parametric bootstrap CI."""
    sigmas = sorted(float(s) for s in sigmas)
    if len(sigmas) < 4:
        raise ValueError("need at least four sigma points")
    d1, d2 = sorted(distances)[:2]
    results = []
    for d in sorted(distances):
        for s in sigmas:
            cfg = TrialConfig(d, replace(noise, sigma=s), analog, backend)
            results.append(run_trials(cfg, n_trials, seed, workers))
    by_d = {d: [r for r in results if r.d == d] for d in distances}
    f1 = [r.failures for r in by_d[d1]]
    f2 = [r.failures for r in by_d[d2]]
    n = [n_trials] * len(sigmas)
    x = crossing(sigmas, f1, f2, n, n, d1, d2)
    brng = np.random.default_rng(np.random.SeedSequence([seed, 0xB007]))
    boots = []
    for _ in range(n_boot):
        b1 = brng.binomial(n_trials, np.asarray(f1) / n_trials)
        b2 = brng.binomial(n_trials, np.asarray(f2) / n_trials)
        try:
            boots.append(crossing(sigmas, b1, b2, n, n, d1, d2, lo=-np.inf, hi=np.inf))
        except NoCrossing:
            pass
    ci = tuple(np.percentile(boots, [2.5, 97.5])) if boots else (x, x)
    return ThresholdEstimate(x, (float(ci[0]), float(ci[1])), results)


def paired_difference(outs_a, outs_b) -> tuple[float, float]:
    """Mean and standard error of per-trial failure differences (a - b)."""
    diff = np.array([int(a.logical_failure) - int(b.logical_failure) for a, b in zip(outs_a, outs_b)], float)
    return float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(len(diff))) if len(diff) > 1 else 0.0


__all__ = [
    "CSV_COLUMNS", "InvariantViolation", "NoCrossing", "ThresholdEstimate", "TrialConfig",
    "TrialOutcome", "TrialsResult", "crossing", "estimate_threshold", "paired_difference",
    "pilot_window", "read_csv", "run_outcomes", "run_trials", "scaling_fit", "wilson_interval", "write_csv",
]
