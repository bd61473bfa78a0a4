"""Command-line entry point: configuration, seeded runs, CSV/JSON/SVG output.

Configuration files use INI-style sections read with configparser::

    [physics]
    loss = 0.05
    [sim]
    d = 5,7
    trials = 2000
    [out]
    csv = results/l05.csv
    json = results/l05.json

Command-line flags override values from the file. See ``configs/example.ini``
for every key with its default.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import ProposedConfig, Unachievable, threshold_previous, threshold_proposed
from .devices import GOLDEN_R, LossConfig, QndConfig
from .gkp_core import HrmConfig, SQRT_PI, squeezing_to_variance, variance_to_squeezing
from .topo.noise import NoiseConfig
from .topo.trials import (
    NoCrossing,
    TrialConfig,
    default_workers,
    estimate_threshold,
    pilot_window,
    run_trials,
    write_csv,
)

log = logging.getLogger("gkpft")

COMMANDS = ("leading-order", "simulate", "threshold", "sweep", "selftest")


class ConfigError(ValueError):
    pass


@dataclass
class Physics:
    sigma: float | None = None
    squeezing_db: float | None = None
    loss: float = 0.0
    sv_squeezing_db: float = 15.0
    reflectivity: float = GOLDEN_R
    v_up: float = 2 * SQRT_PI / 5
    L: int = 4
    m: int = 3
    me_sqec_iters: int = 3
    method: str = "proposed"


@dataclass
class Sim:
    d: tuple = (5, 7)
    trials: int = 2000
    mode: str = "ledger"
    analog: bool = True
    seed: int = 0
    workers: int = 1
    backend: str = "pymatching"
    sigma_lo: float | None = None
    sigma_hi: float | None = None
    points: int = 6
    sigmas: tuple | None = None


@dataclass
class Out:
    csv: str | None = None
    json: str | None = None
    svg: str | None = None


@dataclass
class RunConfig:
    command: str
    physics: Physics = field(default_factory=Physics)
    sim: Sim = field(default_factory=Sim)
    out: Out = field(default_factory=Out)
    verbose: bool = False

    @property
    def sigma(self) -> float | None:
        if self.physics.sigma is not None:
            return self.physics.sigma
        if self.physics.squeezing_db is not None:
            return math.sqrt(squeezing_to_variance(self.physics.squeezing_db))
        return None

    def qnd(self) -> QndConfig:
        return QndConfig(self.physics.reflectivity, squeezing_to_variance(self.physics.sv_squeezing_db))

    def noise(self, sigma: float) -> NoiseConfig:
        p = self.physics
        return NoiseConfig(sigma=sigma, loss=p.loss, L=p.L, m=p.m, me_sqec_iters=p.me_sqec_iters,
                           hrm=HrmConfig(p.v_up), qnd=self.qnd(), mode=self.sim.mode, method=p.method)

    def to_dict(self) -> dict:
        return asdict(self)


SECTIONS = {"physics": Physics, "sim": Sim, "out": Out}


def _int_list(text: str) -> tuple:
    return tuple(int(x) for x in str(text).replace(" ", "").split(",") if x)


def _float_list(text: str) -> tuple:
    return tuple(float(x) for x in str(text).replace(" ", "").split(",") if x)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


CONVERTERS = {
    "d": _int_list,
    "sigmas": _float_list,
    "analog": _bool,
    "L": int, "m": int, "me_sqec_iters": int, "trials": int, "seed": int, "workers": int, "points": int,
    "method": str, "mode": str, "backend": str, "csv": str, "json": str, "svg": str,
}


def _convert(section: str, key: str, value):
    conv = CONVERTERS.get(key, float)
    try:
        return conv(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {value!r} ({exc})") from None


def read_config_file(path) -> dict:
    """{section: {key: value}} with every key checked against the schema."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    if not cp.read(path):
        raise ConfigError(f"cannot read config file {path}")
    out: dict = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        names = {f.name for f in fields(SECTIONS[section])}
        for key, value in cp.items(section):
            if key not in names:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            out.setdefault(section, {})[key] = _convert(section, key, value)
    return out


def validate(cfg: RunConfig) -> RunConfig:
    p, s, o = cfg.physics, cfg.sim, cfg.out
    if cfg.command not in COMMANDS:
        raise ConfigError(f"unknown command {cfg.command!r}")
    if p.sigma is not None and p.squeezing_db is not None:
        raise ConfigError("give only one of physics.sigma and physics.squeezing_db")
    if p.sigma is not None and not p.sigma > 0:
        raise ConfigError("physics.sigma must be positive")
    if not 0.0 <= p.loss < 1.0:
        raise ConfigError("physics.loss must lie in [0, 1)")
    if not 0.0 < p.reflectivity < 1.0:
        raise ConfigError("physics.reflectivity must lie in (0, 1)")
    if not 0.0 < p.v_up < SQRT_PI / 2:
        raise ConfigError("physics.v_up must lie in (0, sqrt(pi)/2)")
    if p.m < 1 or p.m % 2 == 0:
        raise ConfigError("physics.m: m must be odd")
    if p.L < 1:
        raise ConfigError("physics.L must be at least 1")
    if p.me_sqec_iters < 0:
        raise ConfigError("physics.me_sqec_iters must be nonnegative")
    if p.method not in ("proposed", "previous"):
        raise ConfigError("physics.method must be 'proposed' or 'previous'")
    if s.mode not in ("ledger", "faithful"):
        raise ConfigError("sim.mode must be 'ledger' or 'faithful'")
    if s.backend not in ("pymatching", "exact"):
        raise ConfigError("sim.backend must be 'pymatching' or 'exact'")
    if not s.d or any(d < 3 or d % 2 == 0 for d in s.d):
        raise ConfigError("sim.d: distances must be odd and at least 3")
    if s.trials < 1:
        raise ConfigError("sim.trials must be at least 1")
    if s.workers < 1:
        raise ConfigError("sim.workers must be at least 1")
    if s.points < 2:
        raise ConfigError("sim.points must be at least 2")
    if cfg.command == "simulate" and cfg.sigma is None:
        raise ConfigError("simulate needs physics.sigma or physics.squeezing_db")
    if cfg.command == "threshold" and len(s.d) < 2:
        raise ConfigError("sim.d: threshold needs two distances")
    if cfg.command in ("simulate", "threshold", "sweep"):
        for key in ("csv", "json"):
            if getattr(o, key) is None:
                raise ConfigError(f"out.{key}: an output path is required for {cfg.command}")
        if o.svg is None and cfg.command != "simulate":
            cfg.out = replace(o, svg=str(Path(o.csv).with_suffix(".svg")))
    return cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gkpft", description="GKP cluster-state fault-tolerance simulations")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="INI-style config file; flags override it")
    ap.add_argument("-v", "--verbose", action="store_true")
    g = ap.add_argument_group("physics")
    g.add_argument("--sigma", type=float)
    g.add_argument("--squeezing-db", dest="squeezing_db", type=float)
    g.add_argument("--loss", type=float)
    g.add_argument("--sv-squeezing-db", dest="sv_squeezing_db", type=float)
    g.add_argument("--reflectivity", type=float)
    g.add_argument("--v-up", dest="v_up", type=float)
    g.add_argument("--L", dest="L", type=int)
    g.add_argument("--m", dest="m", type=int)
    g.add_argument("--iters", dest="me_sqec_iters", type=int)
    g.add_argument("--method", choices=("proposed", "previous"))
    g = ap.add_argument_group("simulation")
    g.add_argument("--d", type=_int_list, help="comma-separated distances, e.g. 5,7")
    g.add_argument("--trials", type=int)
    g.add_argument("--mode", choices=("ledger", "faithful"))
    g.add_argument("--analog", type=_bool)
    g.add_argument("--seed", type=int)
    g.add_argument("--workers", type=int)
    g.add_argument("--backend", choices=("pymatching", "exact"))
    g.add_argument("--sigma-lo", dest="sigma_lo", type=float)
    g.add_argument("--sigma-hi", dest="sigma_hi", type=float)
    g.add_argument("--points", type=int)
    g.add_argument("--sigmas", type=_float_list, help="explicit comma-separated sigma grid")
    g = ap.add_argument_group("output")
    g.add_argument("--csv")
    g.add_argument("--json")
    g.add_argument("--svg")
    return ap


def parse_config(argv=None) -> RunConfig:
    """Resolve defaults, then the config file, then command-line flags."""
    ns = build_parser().parse_args(argv)
    values = read_config_file(ns.config) if ns.config else {}
    flags = vars(ns)
    for section, cls in SECTIONS.items():
        for f in fields(cls):
            if flags.get(f.name) is not None:
                values.setdefault(section, {})[f.name] = flags[f.name]
    cfg = RunConfig(ns.command, verbose=ns.verbose)
    if "workers" not in values.get("sim", {}):
        values.setdefault("sim", {})["workers"] = default_workers()
    for section, cls in SECTIONS.items():
        setattr(cfg, section, cls(**{**asdict(cls()), **values.get(section, {})}))
    if "sigma" in values.get("physics", {}) and "squeezing_db" in values.get("physics", {}):
        raise ConfigError("give only one of physics.sigma and physics.squeezing_db")
    return validate(cfg)


# -- outputs ---------------------------------------------------------------

def _check_writable(*paths) -> None:
    for p in paths:
        if p is None:
            continue
        parent = Path(p).resolve().parent
        if not parent.is_dir() or not os.access(parent, os.W_OK):
            raise OSError(f"cannot write {p}: directory {parent} is missing or read-only")


def provenance(cfg: RunConfig) -> dict:
    return {"version": __version__, "seed": cfg.sim.seed, "config": cfg.to_dict()}


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not JSON serialisable: {type(x)}")


def plot_failure_curves(results, path, title: str = "", threshold: float | None = None) -> None:
    """Failure rate against sigma for each distance, with a squeezing axis on top."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "gkpft"
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    for d in sorted({r.d for r in results}):
        rows = sorted((r for r in results if r.d == d), key=lambda r: r.sigma)
        x = [r.sigma for r in rows]
        y = [r.failure_rate for r in rows]
        lo = [r.failure_rate - r.ci[0] for r in rows]
        hi = [r.ci[1] - r.failure_rate for r in rows]
        ax.errorbar(x, y, yerr=[lo, hi], marker="o", ms=3, capsize=2, label=f"d = {d}")
    if threshold is not None:
        ax.axvline(threshold, color="0.4", ls="--", lw=1, label=f"crossing {threshold:.4f}")
    ax.set_xlabel("sigma")
    ax.set_ylabel("logical failure rate")
    sec = ax.secondary_xaxis("top", functions=(_sigma_to_db, _db_to_sigma))
    sec.set_xlabel("squeezing (dB)")
    if title:
        ax.set_title(title, fontsize=9)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _sigma_to_db(s):
    s = np.clip(np.asarray(s, float), 1e-6, None)
    return -10.0 * np.log10(2.0 * s * s)


def _db_to_sigma(db):
    return np.sqrt(10.0 ** (-np.asarray(db, float) / 10.0) / 2.0)


# -- commands --------------------------------------------------------------

def cmd_leading_order(cfg: RunConfig) -> dict:
    p = cfg.physics
    loss = LossConfig(p.loss)
    try:
        if p.method == "previous":
            res = threshold_previous(loss, cfg.qnd())
        else:
            res = threshold_proposed(loss, cfg.qnd(), ProposedConfig(p.L, p.m, p.me_sqec_iters, HrmConfig(p.v_up)))
    except Unachievable as exc:
        print(f"{p.method} l={p.loss:g}: unachievable ({exc})")
        return {"method": p.method, "loss": p.loss, "unachievable": True}
    print(f"{p.method} l={p.loss:g}: sigma={res.sigma:.6f} squeezing_db={res.squeezing_db:.3f}")
    return {"method": p.method, "loss": p.loss, "sigma_threshold": res.sigma, "squeezing_db": res.squeezing_db,
            "unachievable": False}


def cmd_simulate(cfg: RunConfig) -> dict:
    s = cfg.sim
    results = []
    for d in s.d:
        r = run_trials(TrialConfig(d, cfg.noise(cfg.sigma), s.analog, s.backend), s.trials, s.seed, s.workers)
        log.info("d=%d sigma=%.5f failures=%d/%d", d, r.sigma, r.failures, r.n_trials)
        print(f"d={d} sigma={r.sigma:.5f} failure_rate={r.failure_rate:.5f} ci=({r.ci[0]:.5f}, {r.ci[1]:.5f})")
        results.append(r)
    write_csv(cfg.out.csv, results)
    if cfg.out.svg:
        plot_failure_curves(results, cfg.out.svg)
    return {"results": [r.row() for r in results]}


def _sigma_grid(cfg: RunConfig) -> list[float]:
    s = cfg.sim
    if s.sigmas:
        return sorted(s.sigmas)
    lo = s.sigma_lo if s.sigma_lo is not None else 0.05
    hi = s.sigma_hi if s.sigma_hi is not None else 0.40
    if cfg.command == "threshold":
        lo, hi = pilot_window(cfg.noise(lo), lo, hi, d=min(s.d), seed=s.seed, workers=s.workers,
                              backend=s.backend)
        log.info("pilot window [%.5f, %.5f]", lo, hi)
    return [float(x) for x in np.linspace(lo, hi, s.points)]


def cmd_sweep(cfg: RunConfig) -> dict:
    s = cfg.sim
    results = []
    for d in s.d:
        for sigma in _sigma_grid(cfg):
            r = run_trials(TrialConfig(d, cfg.noise(sigma), s.analog, s.backend), s.trials, s.seed, s.workers)
            print(f"d={d} sigma={sigma:.5f} failure_rate={r.failure_rate:.5f}")
            results.append(r)
    write_csv(cfg.out.csv, results)
    plot_failure_curves(results, cfg.out.svg, f"{cfg.physics.method}, l = {cfg.physics.loss:g}")
    return {"results": [r.row() for r in results]}


def cmd_threshold(cfg: RunConfig) -> dict:
    s = cfg.sim
    sigmas = _sigma_grid(cfg)
    est = estimate_threshold(cfg.noise(sigmas[0]), sigmas, s.d, s.trials, s.seed, s.workers, s.analog,
                             backend=s.backend)
    write_csv(cfg.out.csv, est.results)
    plot_failure_curves(est.results, cfg.out.svg, f"{cfg.physics.method}, l = {cfg.physics.loss:g}", est.sigma)
    lo_db, hi_db = est.squeezing_ci
    print(f"threshold sigma={est.sigma:.5f} ({est.ci[0]:.5f}, {est.ci[1]:.5f}) "
          f"squeezing_db={est.squeezing_db:.3f} ({lo_db:.3f}, {hi_db:.3f})")
    return {"sigma_threshold": est.sigma, "squeezing_db": est.squeezing_db, "ci": list(est.ci),
            "squeezing_db_ci": [lo_db, hi_db], "sigmas": sigmas}


def cmd_selftest(cfg: RunConfig) -> dict:
    from .selftest import run_all

    report = run_all()
    for name, ok, detail in report:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    passed = sum(ok for _, ok, _ in report)
    print(f"{passed} passed, {len(report) - passed} failed")
    return {"passed": passed, "failed": len(report) - passed,
            "checks": [{"name": n, "ok": ok, "detail": d} for n, ok, d in report]}


HANDLERS = {
    "leading-order": cmd_leading_order,
    "simulate": cmd_simulate,
    "threshold": cmd_threshold,
    "sweep": cmd_sweep,
    "selftest": cmd_selftest,
}


def run(cfg: RunConfig) -> int:
    _check_writable(cfg.out.csv, cfg.out.json, cfg.out.svg)
    payload = HANDLERS[cfg.command](cfg)
    if cfg.out.json:
        write_json(cfg.out.json, {**provenance(cfg), "result": payload})
    if cfg.command == "selftest" and payload["failed"]:
        return 1
    return 0


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if cfg.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return run(cfg)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NoCrossing as exc:
        print(f"error: no crossing in range: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
