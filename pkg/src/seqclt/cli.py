"""Command line driver: ``seqclt <command> --config run.cfg``.

The run configuration is a sectioned ``key = value`` file::

    [run]
    seed = 1
    grid = 256

    [cone]
    a = 10
    nu = 0.55

    [map.0]
    degree = 2
    terms = 1:0.05:0.0          # harmonic:amplitude:phase, comma separated

    [obs.0]
    terms = 1:1:0               # harmonic:cos coeff:sin coeff

    [sequence]
    maps = periodic 0           # periodic i,j,... | explicit i,j,... | iid SEED
    obs = periodic 0

    [charfn]
    n = 256
    lambdas = linspace -2 2 81

Exit codes: 0 PASS/COMPLETED, 1 malformed configuration, 2 FAILED,
3 INCONCLUSIVE/CONFLICT.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import math
import platform
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy

from . import __version__
from .clt import (DegenerateVarianceError, berry_esseen, center_sequence, char_fn,
                  condition_diagnostics, default_T, monte_carlo, theorem_bound_terms,
                  variance)
from .cones import ConeContext, contraction_report
from .growth import fit_growth_constant, growth_criterion, random_dichotomy
from .io import write_csv, write_json
from .maps import (CircleMap, IndexSequence, Observable, SequenceSpec, explicit,
                   expansion_constants, distortion_constant, iid, periodic)
from .spectral import OperatorChainSpec

EXIT_OK, EXIT_CONFIG, EXIT_FAILED, EXIT_INCONCLUSIVE = 0, 1, 2, 3
COMMANDS = ("variance", "charfn", "berry-esseen", "montecarlo", "cone-check",
            "conditions", "growth", "random")
_STATUS_CODE = {"PASS": EXIT_OK, "COMPLETED": EXIT_OK, "FAILED": EXIT_FAILED,
                "INCONCLUSIVE": EXIT_INCONCLUSIVE, "CONFLICT": EXIT_INCONCLUSIVE}


class ConfigError(ValueError):
    """Malformed run configuration."""


# configuration --------------------------------------------------------------------

@dataclass
class RunConfig:
    path: Path
    text: str
    parser: configparser.ConfigParser
    lines: dict                      # (section, key) -> line number
    seed: int
    n_grid: int
    workers: int
    out: Optional[Path]
    maps: list
    observables: list
    sequence: Optional[SequenceSpec]
    cone: Optional[dict]
    extra: dict = field(default_factory=dict)

    def where(self, section: str, key: Optional[str] = None) -> str:
        line = self.lines.get((section, key.lower() if key else None)) or self.lines.get((section, None))
        loc = f"[{section}]" + (f" {key}" if key else "")
        return f"{self.path}:{line}: {loc}" if line else f"{self.path}: {loc}"

    def section(self, name: str):
        if not self.parser.has_section(name):
            raise ConfigError(f"{self.path}: experiment block [{name}] not found")
        return self.parser[name]

    def get(self, section: str, key: str, conv: Callable = str, default=None,
            check: Optional[Callable] = None, what: str = ""):
        sec = self.parser[section] if self.parser.has_section(section) else {}
        if key not in sec:
            if default is None:
                raise ConfigError(f"{self.where(section)}: missing field '{key}'")
            return default
        raw = sec[key]
        try:
            val = conv(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{self.where(section, key)}: cannot parse {raw!r} ({exc})") from None
        if check is not None and not check(val):
            raise ConfigError(f"{self.where(section, key)} = {raw!r}: {what}")
        return val


def _line_index(text: str) -> dict:
    out, sec = {}, None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            sec = m.group(1).strip()
            out[(sec, None)] = i
        elif sec and "=" in s and not s.startswith(("#", ";")):
            out[(sec, s.split("=", 1)[0].strip().lower())] = i
    return out


def _floats(raw: str) -> list:
    raw = raw.strip()
    if raw.startswith("linspace"):
        parts = raw.split()
        if len(parts) != 4:
            raise ValueError("expected 'linspace START STOP COUNT'")
        return np.linspace(float(parts[1]), float(parts[2]), int(parts[3])).tolist()
    return [float(v) for v in raw.replace(",", " ").split()]


def _ints(raw: str) -> list:
    return [int(v) for v in raw.replace(",", " ").split()]


def _bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _terms(raw: str, width: int) -> tuple:
    out = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != width:
            raise ValueError(f"term {item!r} needs {width} ':'-separated fields")
        out.append((int(parts[0]),) + tuple(float(p) for p in parts[1:]))
    return tuple(out)


def _index_sequence(raw: str, n_choices: int) -> IndexSequence:
    parts = raw.split(None, 1)
    if len(parts) != 2:
        raise ValueError("expected 'periodic LIST', 'explicit LIST' or 'iid SEED'")
    kind, rest = parts[0].lower(), parts[1]
    if kind == "periodic":
        return periodic(_ints(rest))
    if kind == "explicit":
        return explicit(_ints(rest))
    if kind == "iid":
        return iid(n_choices, int(rest))
    raise ValueError(f"unknown sequence kind {kind!r}")


def _numbered(parser, prefix: str) -> list:
    names = [s for s in parser.sections() if s.startswith(prefix + ".")]
    idx = []
    for s in names:
        try:
            idx.append((int(s.split(".", 1)[1]), s))
        except ValueError:
            raise ConfigError(f"section [{s}] must be numbered like [{prefix}.0]") from None
    idx.sort()
    if [i for i, _ in idx] != list(range(len(idx))):
        raise ConfigError(f"[{prefix}.*] sections must be numbered 0..{len(idx) - 1} without gaps")
    return [s for _, s in idx]


def load_config(path, seed: Optional[int] = None, n_grid: Optional[int] = None,
                workers: Optional[int] = None, out: Optional[str] = None) -> RunConfig:
    """Parse and validate a run configuration; raises ``ConfigError``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = RunConfig(path, text, parser, _line_index(text), 0, 256, 1, None, [], [], None, None)

    cfg.seed = seed if seed is not None else cfg.get("run", "seed", int, 0,
                                                      lambda v: v >= 0, "seed must be >= 0")
    cfg.n_grid = n_grid if n_grid is not None else cfg.get("run", "grid", int, 256)
    if cfg.n_grid < 4 or cfg.n_grid & (cfg.n_grid - 1):
        raise ConfigError(f"{cfg.where('run', 'grid')}: grid N = {cfg.n_grid} must be a power of two >= 4")
    cfg.workers = workers if workers is not None else cfg.get("run", "workers", int, 1)
    if cfg.workers < 1:
        raise ConfigError(f"{cfg.where('run', 'workers')}: workers must be >= 1")
    out_raw = out if out is not None else (parser["run"].get("out") if parser.has_section("run") else None)
    cfg.out = Path(out_raw) if out_raw else None

    for s in _numbered(parser, "map"):
        deg = cfg.get(s, "degree", int, None, lambda v: v >= 2, "degree must be >= 2")
        terms = cfg.get(s, "terms", lambda r: _terms(r, 3), ())
        try:
            cfg.maps.append(CircleMap(deg, terms))
        except ValueError as exc:
            raise ConfigError(f"{cfg.where(s, 'terms')}: {exc}") from None
    for s in _numbered(parser, "obs"):
        terms = cfg.get(s, "terms", lambda r: _terms(r, 3), None)
        cfg.observables.append(Observable(terms))

    rho = Observable.constant(1.0)
    if parser.has_section("density"):
        rho = Observable(cfg.get("density", "terms", lambda r: _terms(r, 3), None))

    if cfg.maps and cfg.observables:
        om_f = cfg.get("sequence", "maps", lambda r: _index_sequence(r, len(cfg.maps)),
                       periodic([0]))
        om_g = cfg.get("sequence", "obs", lambda r: _index_sequence(r, len(cfg.observables)),
                       periodic([0]))
        try:
            cfg.sequence = SequenceSpec(cfg.maps, cfg.observables, om_f, om_g, rho)
        except (ValueError, IndexError) as exc:
            sec = "density" if "density" in str(exc) else "sequence"
            raise ConfigError(f"{cfg.where(sec)}: {exc}") from None

    if parser.has_section("cone"):
        if not cfg.maps:
            raise ConfigError(f"{cfg.where('cone')}: cone parameters need at least one [map.i]")
        theta, _ = expansion_constants(cfg.maps)
        nu = cfg.get("cone", "nu", float, None)
        if not 1.0 / theta < nu < 1:
            raise ConfigError(f"{cfg.where('cone', 'nu')}: nu = {nu} violates ν ∈ (ϑ⁻¹, 1) "
                              f"= ({1.0 / theta:.6g}, 1) for this map family")
        a_raw = parser["cone"].get("a", "auto")
        if a_raw.strip() == "auto":
            if not nu > 0.5:
                raise ConfigError(f"{cfg.where('cone', 'a')}: a = auto needs nu > 1/2")
            a = 10.0 * max(1.0, distortion_constant(cfg.maps) / (nu - 0.5))
        else:
            a = cfg.get("cone", "a", float)
        tau = cfg.get("cone", "tau", float, -1.0)
        try:
            ConeContext(a, nu, cfg.n_grid, None if tau < 0 else tau, theta)
        except ValueError as exc:
            key = "nu" if "nu" in str(exc) else ("tau" if "tau" in str(exc) else "a")
            raise ConfigError(f"{cfg.where('cone', key)}: {exc}") from None
        cfg.cone = {"a": a, "nu": nu, "tau": None if tau < 0 else tau, "theta": theta}
    return cfg


def _need_sequence(cfg: RunConfig) -> SequenceSpec:
    if cfg.sequence is None:
        raise ConfigError(f"{cfg.path}: need at least one [map.i] and one [obs.i] section")
    return cfg.sequence


def _need_cone(cfg: RunConfig, n_grid: int) -> ConeContext:
    if cfg.cone is None:
        raise ConfigError(f"{cfg.path}: this experiment needs a [cone] section")
    c = cfg.cone
    return ConeContext(c["a"], c["nu"], n_grid, c["tau"], c["theta"])


# experiments ----------------------------------------------------------------------

@dataclass
class Outcome:
    status: str
    summary: dict
    fitted: dict = field(default_factory=dict)


def _positive(v):
    return v > 0


def run_variance(cfg: RunConfig, out: Path) -> Outcome:
    seq = _need_sequence(cfg)
    ns = cfg.get("variance", "n", _ints, None, lambda v: v and min(v) >= 1, "n must be >= 1")
    mode = cfg.get("variance", "mode", str, "full", lambda v: v in ("full", "banded"),
                   "mode must be 'full' or 'banded'")
    C_L = cfg.get("variance", "C_L", float, 4.0, _positive, "C_L must be positive")
    cs = center_sequence(seq, max(ns), cfg.n_grid)
    rows, status = [], "COMPLETED"
    for n in ns:
        try:
            r = variance(cs, n, mode=mode, C_L=C_L)
            rows.append((n, r.sigma2, mode, "" if r.window is None else r.window))
        except DegenerateVarianceError as exc:
            rows.append((n, math.nan, mode, str(exc)))
            status = "FAILED"
    write_csv(out / "variance.csv", ["n", "sigma2", "mode", "window"], rows)
    B = fit_growth_constant([r[0] for r in rows if math.isfinite(r[1])],
                            [r[1] for r in rows if math.isfinite(r[1])]) if rows else math.nan
    summary = {"mode": mode, "rows": [{"n": r[0], "sigma2": r[1]} for r in rows],
               "centering_residual": float(np.max(np.abs(cs.centering_residual())))}
    write_json(out / "variance.json", summary)
    return Outcome(status, summary, {"B_fit": B})


def run_charfn(cfg: RunConfig, out: Path) -> Outcome:
    seq = _need_sequence(cfg)
    n = cfg.get("charfn", "n", int, None, lambda v: v >= 1, "n must be >= 1")
    lam = cfg.get("charfn", "lambdas", _floats, np.linspace(-2, 2, 81).tolist())
    cap_raw = cfg.parser["charfn"].get("cap", "0.5").strip().lower()
    cap = None if cap_raw == "none" else cfg.get("charfn", "cap", float, 0.5, _positive,
                                                   "cap must be positive or 'none'")
    cs = center_sequence(seq, n, cfg.n_grid)
    tab = char_fn(cs, lam, n, cap=cap)
    rows = [(l, v.real, v.imag, e, bool(f)) for (l, _, _, e), v, f
            in zip(tab.rows(), tab.values, tab.flagged)]
    write_csv(out / "upsilon.csv", ["lambda", "re", "im", "abs_err_gauss", "flagged"], rows)
    terms = theorem_bound_terms(tab)
    err = tab.abs_err[np.isfinite(tab.abs_err)]
    summary = {"n": n, "sigma_n": tab.sigma, "cap": cap,
               "max_abs_err_gauss": float(np.max(err)) if err.size else None,
               "flagged": int(np.count_nonzero(tab.flagged)),
               "C_fit": terms["C_fit"], "varpi": terms["varpi"]}
    write_json(out / "charfn.json", summary)
    return Outcome("COMPLETED", summary, {"C_fit": terms["C_fit"]})


def run_berry_esseen(cfg: RunConfig, out: Path) -> Outcome:
    seq = _need_sequence(cfg)
    sec = "berry-esseen"
    n = cfg.get(sec, "n", int, None, lambda v: v >= 2, "n must be >= 2")
    cs = center_sequence(seq, n, cfg.n_grid)
    sig = math.sqrt(variance(cs, n).sigma2)
    T_raw = cfg.parser[sec].get("T", "auto").strip().lower()
    T = default_T(sig, n) if T_raw == "auto" else cfg.get(sec, "T", float, None, _positive,
                                                         "T must be positive or 'auto'")
    fb = berry_esseen(cs, T, n)
    summary = {"n": n, "sigma_n": sig, "T": fb.T, "integral": fb.integral, "tail": fb.tail,
               "bound": fb.bound, "truncated": fb.truncated, "quad_error": fb.quad_error}
    write_json(out / "berry_esseen.json", summary)
    return Outcome("COMPLETED", summary)


def run_montecarlo(cfg: RunConfig, out: Path) -> Outcome:
    seq = _need_sequence(cfg)
    n = cfg.get("montecarlo", "n", int, None, lambda v: v >= 1, "n must be >= 1")
    M = cfg.get("montecarlo", "M", int, 100000, lambda v: v >= 1000, "M must be >= 1000")
    ks_tol = cfg.get("montecarlo", "ks_tol", float, -1.0)
    cs = center_sequence(seq, n, cfg.n_grid)
    mc = monte_carlo(cs, M, cfg.seed, n, workers=cfg.workers)
    write_csv(out / "mc_cdf.csv", ["x", "empirical", "normal", "diff"], mc.cdf_rows())
    summary = {"n": n, "M": M, "seed": cfg.seed, "sigma_n": mc.sigma, "ks": mc.ks,
               "dkw99": mc.dkw, "quantiles": mc.quantiles}
    status = "COMPLETED"
    if ks_tol > 0:
        summary["ks_tol"] = ks_tol
        status = "PASS" if mc.ks <= ks_tol else "FAILED"
    write_json(out / "montecarlo.json", summary)
    return Outcome(status, summary)


def run_cone_check(cfg: RunConfig, out: Path) -> Outcome:
    seq = _need_sequence(cfg)
    sec = "cone-check"
    cfg.section(sec)
    ctx = _need_cone(cfg, cfg.n_grid)
    trials = cfg.get(sec, "trials", int, 20, lambda v: v >= 2, "trials must be >= 2")
    start = cfg.get(sec, "start", int, 0, lambda v: v >= 0, "start must be >= 0")
    end = cfg.get(sec, "end", int, start, lambda v: v >= start, "end must be >= start")
    ts = cfg.get(sec, "t", _floats, [])
    horizon = cfg.get(sec, "n", int, max(end + 1, 64))
    centered = center_sequence(seq, max(horizon, end + 1), cfg.n_grid) if ts else None
    spec = OperatorChainSpec(seq, start, end)
    rep = contraction_report(spec, ctx, trials=trials, seed=cfg.seed, t_values=ts,
                             centered=centered)
    write_csv(out / "cone_ratios.csv", ["trial", "ratio"], list(enumerate(rep.ratios)))
    if ts:
        write_csv(out / "eps_table.csv", ["t", "eps_t", "eps_over_t"],
                  [(t, e, e / t) for t, e in sorted(rep.eps_table.items())])
    summary = rep.to_dict()
    checks = {"contraction": rep.contraction_ok,
              "cone_mapping": rep.min_margin_nu >= -1e-10,
              "diameter": rep.dh_to_one_max <= rep.dh_bound + 1e-6,
              "compare": rep.compare_violations == 0,
              "mass_lower": rep.mass_lower_ok}
    if ts:
        r = [e / t for t, e in rep.eps_table.items() if t > 0]
        checks["eps_linear"] = bool(r) and max(r) / min(r) - 1 <= 0.1
        small = [e for t, e in rep.eps_table.items() if 0 < t <= 1e-3]
        checks["eps_certificate"] = bool(small) and max(small) < rep.eps_threshold
        if r:
            summary["t_star"] = rep.eps_threshold / (sum(r) / len(r))
    summary["checks"] = checks
    write_json(out / "cone_check.json", summary)
    status = "PASS" if all(checks.values()) else "FAILED"
    return Outcome(status, summary, {"delta_real": rep.delta_real,
                                     "delta_complex": rep.delta_complex})


def run_conditions(cfg: RunConfig, out: Path) -> Outcome:
    seq = _need_sequence(cfg)
    sec = "conditions"
    cfg.section(sec)
    n = cfg.get(sec, "n", int, 256, lambda v: v >= 2, "n must be >= 2")
    lam = cfg.get(sec, "lambdas", _floats, [0.0, 0.5, 1.0])
    ctx = _need_cone(cfg, cfg.n_grid)
    cs = center_sequence(seq, n, cfg.n_grid)
    d = condition_diagnostics(cs, ctx, lam, n=n, seed=cfg.seed)
    rows = [(l, i + 1, r) for l, rs in d.residuals.items() for i, r in enumerate(rs)]
    write_csv(out / "rank_one.csv", ["lambda", "length", "residual"], rows)
    summary = d.to_dict()
    ell_floor = cfg.get(sec, "ell_min", float, 0.1)
    summary["ell_ok"] = d.ell_min >= ell_floor
    write_json(out / "conditions.json", summary)
    status = "PASS" if d.passed and summary["ell_ok"] else "FAILED"
    fitted = {"C_star": d.C_star, "K": d.K, "K_twist": d.K_twist,
              "theta_fit": {repr(k): v for k, v in d.theta_fit.items()}}
    return Outcome(status, summary, fitted)


def run_growth(cfg: RunConfig, out: Path) -> Outcome:
    if not (cfg.maps and cfg.observables):
        _need_sequence(cfg)
    sec = "growth"
    cfg.section(sec)
    mode = cfg.get(sec, "mode", str, "prop_variance",
                   lambda v: v in ("prop_variance", "cor_verify"),
                   "mode must be prop_variance or cor_verify")
    L = cfg.get(sec, "L", int, None, lambda v: v >= 1, "L must be >= 1")
    kw = dict(mode=mode,
              a=cfg.get(sec, "a", float, 0.5),
              kappa=cfg.get(sec, "kappa", float, 1.0, _positive, "kappa must be positive"),
              b=cfg.get(sec, "b", float, 2.0, _positive, "b must be positive"),
              grid_size=cfg.get(sec, "grid_size", int, 4096, lambda v: v >= 16, "grid_size must be >= 16"),
              n_grid=cfg.n_grid,
              exhaustive=cfg.get(sec, "exhaustive", _bool, True),
              samples=cfg.get(sec, "samples", int, 1000, _positive, "samples must be positive"),
              seed=cfg.seed)
    if "eps" in cfg.parser[sec]:
        kw["eps"] = cfg.get(sec, "eps", float, None, lambda v: 0 < v, "eps must be positive")
    try:
        rep = growth_criterion(cfg.maps, cfg.observables, L, **kw)
    except ValueError as exc:
        raise ConfigError(f"{cfg.where(sec)}: {exc}") from None
    write_csv(out / "growth_sequences.csv",
              ["sequence", "best_sum", "dp_value", "x0", "x1", "meets_threshold"], rep.rows)
    summary = rep.to_dict()
    write_json(out / "growth.json", summary)
    return Outcome("PASS" if rep.verdict == "PASS" else "INCONCLUSIVE", summary,
                   {"kappa": kw["kappa"] if mode == "cor_verify" else None,
                    "b": kw["b"] if mode == "cor_verify" else None})


def run_random(cfg: RunConfig, out: Path) -> Outcome:
    if not (cfg.maps and cfg.observables):
        _need_sequence(cfg)
    sec = "random"
    cfg.section(sec)
    trials = cfg.get(sec, "trials", int, 12, lambda v: v >= 2, "trials must be >= 2")
    n = cfg.get(sec, "n", int, 256, lambda v: v >= 8, "n must be >= 8")
    obs_raw = cfg.parser[sec].get("observables", "per_map").strip()
    if obs_raw == "per_map":
        if len(cfg.observables) != len(cfg.maps):
            raise ConfigError(f"{cfg.where(sec, 'observables')}: per_map needs one [obs.i] per [map.i]")
        obs = cfg.observables
    else:
        i = cfg.get(sec, "observables", lambda r: int(r.split()[-1]), None,
                    lambda v: 0 <= v < len(cfg.observables), "observable index out of range")
        obs = cfg.observables[i]
    rep = random_dichotomy(cfg.maps, obs, trials=trials, n=n, seed=cfg.seed,
                           n_grid=cfg.n_grid, workers=cfg.workers)
    write_csv(out / "random_trials.csv", ["trial", "sigma2_over_n", "sigma2_half", "growth_rate", "beta"],
              [(i, a, b, c, d) for i, (a, b, c, d) in enumerate(
                  zip(rep.sigma2_over_n, rep.sigma2_half, rep.growth_rate, rep.beta_series))])
    summary = rep.to_dict()
    write_json(out / "random.json", summary)
    status = "COMPLETED" if rep.classification in ("LINEAR", "BOUNDED") else rep.classification
    return Outcome(status, summary, {"beta_hat": rep.beta_hat})


RUNNERS = {"variance": run_variance, "charfn": run_charfn, "berry-esseen": run_berry_esseen,
           "montecarlo": run_montecarlo, "cone-check": run_cone_check,
           "conditions": run_conditions, "growth": run_growth, "random": run_random}


# orchestration --------------------------------------------------------------------

def _manifest(cfg: RunConfig, command: str, outcomes: dict) -> dict:
    return {
        "command": command,
        "config": str(cfg.path.name),
        "config_sha256": hashlib.sha256(cfg.text.encode()).hexdigest(),
        "seed": cfg.seed,
        "grid": cfg.n_grid,
        "seqclt_version": __version__,
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "python_version": platform.python_version(),
        "experiments": {k: {"status": o.status, "fitted_constants": o.fitted}
                        for k, o in outcomes.items()},
    }


def _exit_code(statuses) -> int:
    codes = [_STATUS_CODE[s] for s in statuses]
    if EXIT_FAILED in codes:
        return EXIT_FAILED
    if EXIT_INCONCLUSIVE in codes:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def run(command: str, config_path, out: Optional[str] = None, seed: Optional[int] = None,
        n_grid: Optional[int] = None, workers: Optional[int] = None,
        stream=sys.stdout) -> int:
    """Run one experiment block (or all of them) and write artifacts.

    Returns the process exit code.
    """
    try:
        cfg = load_config(config_path, seed, n_grid, workers, out)
        if command == "all":
            todo = [c for c in COMMANDS if cfg.parser.has_section(c)]
            if not todo:
                raise ConfigError(f"{cfg.path}: no experiment blocks found")
        else:
            cfg.section(command)
            todo = [command]
        outdir = cfg.out or Path("results")
        outdir.mkdir(parents=True, exist_ok=True)
        outcomes = {}
        for c in todo:
            o = RUNNERS[c](cfg, outdir)
            outcomes[c] = o
            print(f"{c}: {o.status}", file=stream)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_json(outdir / "manifest.json", _manifest(cfg, command, outcomes))
    return _exit_code(o.status for o in outcomes.values())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seqclt", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"seqclt {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for c in COMMANDS + ("all",):
        s = sub.add_parser(c, help=f"run the [{c}] block" if c != "all" else "run every block")
        s.add_argument("--config", required=True, help="run configuration file")
        s.add_argument("--out", help="output directory (default: [run] out or ./results)")
        s.add_argument("--seed", type=int, help="global seed (overrides [run] seed)")
        s.add_argument("--grid", type=int, help="grid size N (overrides [run] grid)")
        s.add_argument("--workers", type=int, help="worker threads; affects speed only")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.out, args.seed, args.grid, args.workers)


if __name__ == "__main__":
    sys.exit(main())
