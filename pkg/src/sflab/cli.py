"""Command-line runner: ``sflab simulate|sweep-eps|verify``.

Config files are INI-style (``key = value`` under ``[section]`` headers).
A ``run.json`` written by a previous run is accepted in place of a config.
Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 failed invariants.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy

from . import __version__
from . import analysis as an
from . import flow
from . import scenarios
from . import spectral as sp
from . import verify as vf
from .geometry import GeometryError, Sphere, get_manifold
from .operators import OperatorContext

log = logging.getLogger("sflab")

EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 1, 2, 3


class ConfigError(ValueError):
    pass


# key -> (parser, default); a default of None means "required when relevant"
SCHEMA = {
    "run": {"scenario": (str, "helical"), "target": (str, "s2"), "seed": (int, 0),
            "dealias": (lambda s: _bool(s), True)},
    "grid": {"n": (int, 1), "M": (int, 256), "L": (float, 2 * np.pi)},
    "flow": {"eps": (float, 1e-3), "beta": (float, 0.0), "dt": (str, "1e-3"),
             "t_end": (float, 1.0), "picard_tol": (float, 1e-10), "picard_max": (int, 50),
             "record_every": (int, 10), "snapshot_every": (int, 0),
             "project": (lambda s: _bool(s), False), "dt_cap": (float, 1e-2)},
    "initial": {"theta": (float, np.pi / 3), "k": (int, 2), "amplitude": (float, 1.0),
                "width": (float, 4.0), "path": (str, None), "perturb": (float, 0.0)},
    "diagnostics": {"sobolev": (lambda s: _floats(s), (1.0, 6.0))},
    "sweep": {"eps_list": (lambda s: _floats(s), (1e-1, 1e-2, 1e-3, 1e-4)),
              "s_prime": (float, None), "baseline": (lambda s: _bool(s), True)},
}

SCENARIO_KEYS = {"helical": ("theta", "k"), "bump": ("amplitude", "width"),
                 "constant": (), "file": ("path",)}


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    if isinstance(s, (list, tuple)):
        return tuple(float(x) for x in s)
    return tuple(float(x) for x in str(s).replace(",", " ").split())


@dataclass
class RunConfig:
    raw: dict
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def grid(self):
        g = self.values["grid"]
        return sp.GridSpec(g["n"], g["M"], g["L"])

    @property
    def manifold(self):
        return get_manifold(self.values["run"]["target"])

    def flow_params(self, dt=None, eps=None):
        f = self.values["flow"]
        auto = f["dt"] == "auto"
        return flow.FlowParams(
            eps=f["eps"] if eps is None else eps, beta=f["beta"],
            dt=(dt if dt is not None else (f["dt_cap"] if auto else float(f["dt"]))),
            t_end=f["t_end"], picard_tol=f["picard_tol"], picard_max=f["picard_max"],
            record_every=f["record_every"], snapshot_every=f["snapshot_every"],
            project=f["project"], auto_dt=auto and dt is None, dt_cap=f["dt_cap"],
            sobolev_s=self.values["diagnostics"]["sobolev"])


def parse_config(path):
    """Read and fully validate a config; raises ConfigError on any problem."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file {path!r} not found")
    if path.endswith(".json"):
        try:
            with open(path) as fh:
                raw = json.load(fh)["config"]
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{path}: not a run.json with a 'config' entry") from exc
    else:
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
        cp.optionxform = str
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        raw = {s: dict(cp[s]) for s in cp.sections()}
    return validate_config(raw)


def validate_config(raw):
    values = {}
    for section in raw:
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in raw[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
    for section, keys in SCHEMA.items():
        given = raw.get(section, {})
        values[section] = {}
        for key, (conv, default) in keys.items():
            if key in given:
                try:
                    values[section][key] = conv(given[key])
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}") from exc
            else:
                values[section][key] = default
    run, fl = values["run"], values["flow"]
    if run["scenario"] not in SCENARIO_KEYS:
        raise ConfigError(f"unknown scenario {run['scenario']!r}")
    if run["target"] not in ("s2", "torus"):
        raise ConfigError("target must be s2 or torus")
    if run["scenario"] == "file" and not values["initial"]["path"]:
        raise ConfigError("scenario 'file' needs [initial] path")
    extra = set(raw.get("initial", {})) - set(SCENARIO_KEYS[run["scenario"]]) - {"perturb"}
    if extra:
        raise ConfigError(f"keys {sorted(extra)} do not apply to scenario {run['scenario']!r}")
    if fl["dt"] != "auto":
        try:
            if not float(fl["dt"]) > 0:
                raise ValueError
        except ValueError:
            raise ConfigError("[flow] dt must be a positive number or 'auto'") from None
    try:
        sp.GridSpec(values["grid"]["n"], values["grid"]["M"], values["grid"]["L"])
        flow.FlowParams(eps=fl["eps"], beta=fl["beta"], t_end=fl["t_end"],
                        picard_max=fl["picard_max"], record_every=fl["record_every"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    eps_list = values["sweep"]["eps_list"]
    if any(e <= 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("[sweep] eps_list must be positive and strictly decreasing")
    return RunConfig(raw={s: dict(v) for s, v in raw.items()}, values=values)


def initial_data(cfg):
    run, ini = cfg["run"], cfg["initial"]
    m, g = cfg.manifold, cfg.grid
    kw = {k: ini[k] for k in SCENARIO_KEYS[run["scenario"]]}
    try:
        v = scenarios.build(run["scenario"], m, g, **kw)
        if ini["perturb"]:
            v = scenarios.tangent_perturbation(m, g, v, ini["perturb"], seed=run["seed"])
        m.check_tube(v)
    except (OSError, ValueError, TypeError) as exc:
        raise ConfigError(f"initial data: {exc}") from exc
    if sp.lp_norm(g, m.rho(v), np.inf) > 1e-8:
        raise ConfigError("initial data are not on the target")
    return v


# --- outputs --------------------------------------------------------------------------------

def _versions():
    return {"sflab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _write_run_json(out, cfg, extra):
    with open(os.path.join(out, "run.json"), "w") as fh:
        json.dump({"config": cfg.raw, "resolved": _jsonify(cfg.values),
                   "versions": _versions(), **extra}, fh, indent=1)


def _jsonify(x):
    if isinstance(x, dict):
        return {k: _jsonify(v) for k, v in x.items()}
    if isinstance(x, tuple):
        return list(x)
    return x


class DiagnosticsWriter:
    """Streams records to diagnostics.csv (deterministic) and timings.csv (wall clock)."""

    def __init__(self, out, s_list, prefix=""):
        self.s_list = s_list
        cols = flow.diagnostics_columns(s_list)[:-1]
        self.fh = open(os.path.join(out, f"{prefix}diagnostics.csv"), "w", newline="")
        self.fh.write("# columns: " + ",".join(cols) + " | E,G energies; grad_Hs = ‖∂v‖_{H^s}; "
                      "sup_rho, rho_L2 distance to target; energy_residual relative\n")
        self.w = csv.writer(self.fh)
        self.w.writerow(cols)
        self.th = open(os.path.join(out, f"{prefix}timings.csv"), "w", newline="")
        self.th.write("# columns: t,wall_ns\n")
        self.tw = csv.writer(self.th)
        self.tw.writerow(["t", "wall_ns"])

    def __call__(self, rec):
        self.w.writerow([repr(float(x)) if not isinstance(x, int) else x
                         for x in rec.row(self.s_list)[:-1]])
        self.tw.writerow([repr(rec.t), rec.wall_ns])
        self.fh.flush()
        self.th.flush()

    def close(self):
        self.fh.close()
        self.th.close()


# --- commands ---------------------------------------------------------------------------------

def cmd_simulate(cfg, out):
    m, g = cfg.manifold, cfg.grid
    v0 = initial_data(cfg)
    ctx = OperatorContext(m, g, dealias=cfg["run"]["dealias"])
    p = cfg.flow_params()
    os.makedirs(out, exist_ok=True)
    writer = DiagnosticsWriter(out, p.sobolev_s)
    t0 = time.perf_counter()
    status, error = "ok", None
    try:
        if p.eps == 0:
            traj = flow.baseline_ll_midpoint(ctx, v0, p)
            for r in traj.records:
                writer(r)
        else:
            traj = flow.integrate(ctx, v0, p, checkpoint_dir=os.path.join(out, "checkpoints"),
                                  seed=cfg["run"]["seed"], on_record=writer)
            log.info("final t=%.4g, %d records", traj.times[-1], len(traj.records))
    except (flow.FlowError, GeometryError, FloatingPointError) as exc:
        status, error = "failed", f"{type(exc).__name__}: {exc}"
        log.error("numerical failure: %s", error)
    finally:
        writer.close()
    _write_run_json(out, cfg, {"command": "simulate", "status": status, "error": error,
                               "wall_seconds": time.perf_counter() - t0})
    return 0 if status == "ok" else EXIT_NUMERIC


def cmd_sweep_eps(cfg, out):
    m, g = cfg.manifold, cfg.grid
    v0 = initial_data(cfg)
    ctx = OperatorContext(m, g, dealias=cfg["run"]["dealias"])
    eps_list = cfg["sweep"]["eps_list"]
    base_dt = float(cfg["flow"]["dt"]) if cfg["flow"]["dt"] != "auto" else cfg["flow"]["dt_cap"]
    s_prime = cfg["sweep"]["s_prime"]
    s_top = max(cfg["diagnostics"]["sobolev"])
    s_prime = s_top - 1 if s_prime is None else s_prime
    os.makedirs(out, exist_ok=True)
    workers = max(1, int(os.environ.get("SFLAB_THREADS", "1")))
    t0 = time.perf_counter()

    def run_one(e):
        # dt ≤ ε keeps the Picard map contracting on the undamped middle band
        return flow.integrate(ctx, v0, cfg.flow_params(dt=min(base_dt, e), eps=e),
                              seed=cfg["run"]["seed"])

    try:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajs = list(pool.map(run_one, eps_list))
        base = None
        if cfg["sweep"]["baseline"] and isinstance(m, Sphere):
            base = flow.baseline_ll_midpoint(ctx, v0, cfg.flow_params(dt=base_dt, eps=0.0)).final
    except (flow.FlowError, GeometryError) as exc:
        _write_run_json(out, cfg, {"command": "sweep-eps", "status": "failed",
                                   "error": f"{type(exc).__name__}: {exc}"})
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    for e, tr in zip(eps_list, trajs):
        with open(os.path.join(out, f"diagnostics_eps{e:g}.csv"), "w", newline="") as fh:
            cols = flow.diagnostics_columns(tr.records[0].sobolev.keys())[:-1]
            fh.write("# columns: " + ",".join(cols) + f" | eps={e!r}\n")
            w = csv.writer(fh)
            w.writerow(cols)
            for r in tr.records:
                w.writerow([repr(float(x)) for x in r.row(list(r.sobolev))[:-1]])
    cols = ["eps", "L2_to_next", f"gradH{s_prime:g}_to_next", "L2_to_baseline",
            f"gradH{s_prime:g}_to_baseline"]
    rows = []
    for i, (e, tr) in enumerate(zip(eps_list, trajs)):
        nxt = trajs[i + 1].final if i + 1 < len(trajs) else None
        d_next = tr.final - nxt if nxt is not None else None
        d_base = tr.final - base if base is not None else None
        rows.append([e,
                     sp.lp_norm(g, d_next, 2) if d_next is not None else float("nan"),
                     sp.grad_sobolev_norm(g, d_next, s_prime) if d_next is not None else float("nan"),
                     sp.lp_norm(g, d_base, 2) if d_base is not None else float("nan"),
                     sp.grad_sobolev_norm(g, d_base, s_prime) if d_base is not None else float("nan")])
    an.write_curve_csv(os.path.join(out, "sweep.csv"), cols, rows,
                       comment=f"distances at t={cfg['flow']['t_end']!r}; *_to_next compares eps_i "
                               f"with eps_(i+1); baseline is the eps=0 midpoint run")
    _write_run_json(out, cfg, {"command": "sweep-eps", "status": "ok",
                               "wall_seconds": time.perf_counter() - t0})
    for r in rows:
        log.info("eps=%-8g L2->next=%.3e L2->baseline=%.3e", r[0], r[1], r[3])
    return 0


def cmd_verify(suite, out, seed, target="s2"):
    if suite not in vf.SUITES + ("all",):
        raise ConfigError(f"unknown suite {suite!r}")
    results = vf.run_suite(suite, manifold=get_manifold(target), seed=seed, log=lambda r: log.info(
        "%-4s %-10s %-36s %.3e (tol %.1e)", "PASS" if r.passed else "FAIL",
        r.suite, r.name, r.measured, r.tolerance))
    os.makedirs(out, exist_ok=True)
    n_fail = sum(not r.passed for r in results)
    with open(os.path.join(out, "report.json"), "w") as fh:
        json.dump({"suite": suite, "target": target, "seed": seed, "versions": _versions(),
                   "n_checks": len(results), "n_failed": n_fail,
                   "checks": [r.to_dict() for r in results]}, fh, indent=1)
    log.info("%d checks, %d failed", len(results), n_fail)
    return EXIT_VERIFY if n_fail else 0


def build_parser():
    ap = argparse.ArgumentParser(prog="sflab", description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=None, help="output directory (default: ./sflab_out)")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--quiet", action="store_true", help="only report errors")
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", help="integrate one configuration")
    s.add_argument("config")
    s = sub.add_parser("sweep-eps", help="epsilon continuation study")
    s.add_argument("config")
    s = sub.add_parser("verify", help="run invariant suites")
    s.add_argument("suite", choices=vf.SUITES + ("all",))
    s.add_argument("--target", choices=("s2", "torus"), default="s2")
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    out = args.out or os.path.join(os.getcwd(), "sflab_out")
    np.seterr(over="ignore", under="ignore")
    try:
        if args.command == "verify":
            return cmd_verify(args.suite, out, 0 if args.seed is None else args.seed,
                              args.target)
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg.values["run"]["seed"] = args.seed
            cfg.raw.setdefault("run", {})["seed"] = str(args.seed)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        return cmd_sweep_eps(cfg, out)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (GeometryError, ValueError, TypeError) as exc:
        # bad initial data (off-target file, wrong grid) is a configuration problem
        log.error("config error: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
