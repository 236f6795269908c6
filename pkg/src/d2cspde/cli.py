"""Command-line entry point: ``d2cspde <experiment> [--config PATH] [key=value ...]``.

Configuration files are flat ``key = value`` text (``#`` starts a comment,
lists are comma-separated). Precedence, lowest first: schema defaults,
config file, ``key=value`` arguments, explicit flags.

Exit status: 0 all checks passed, 1 a check failed, 2 invalid
configuration, 3 input/output failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import harness
from .geometry import build_grid, build_quadrature
from .lifting import lift, lq_norm, project, transport_pair
from .operators import continuum_operator_torus, semigroup_apply
from .spde import (
    SpdeProblem,
    allen_cahn_drift,
    generate_noise,
    polynomial_drift,
    project_noise,
    simulate_semilinear,
)

EXIT_OK, EXIT_FAIL, EXIT_SCHEMA, EXIT_IO = 0, 1, 2, 3
REQUIRED = object()


class ConfigError(ValueError):
    pass


# -- value parsers ----------------------------------------------------------------


def _int(v: str) -> int:
    return int(v)


def _float(v: str) -> float:
    return float(v)


def _int_list(v: str) -> list:
    return [int(x) for x in v.split(",") if x.strip()]


def _float_list(v: str) -> list:
    return [float(x) for x in v.split(",") if x.strip()]


def _opt_int(v: str) -> Optional[int]:
    return None if v.strip().lower() in ("", "auto", "none") else int(v)


def _choice(*options: str) -> Callable[[str], str]:
    def parse(v: str) -> str:
        v = v.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v

    return parse


COMMON = {
    "experiment": (str, None),
    "m": (_int, 1),
    "seed": (_int, 0),
    "out": (str, "out"),
    "threads": (_int, 0),
}

SCHEMAS = {
    "spectra": {"k_list": (_int_list, "16,32,64,128"), "j_max": (_int, 8), "q_factor": (_int, 16)},
    "resolvent": {"k_list": (_int_list, "16,32,64"), "s": (_float, 1.0), "beta": (_float, 0.5),
                  "J": (_opt_int, "auto"), "tail_tol": (_float, 1e-6), "q_factor": (_int, 16)},
    "ultra": {"k_list": (_int_list, "16,32,64,128"), "s": (_float, 1.0), "q": (_float, 2.0), "beta": (_float, 0.3),
              "t_min": (_float, 1e-3), "t_max": (_float, 1.0), "n_times": (_int, 31), "max_ratio": (_float, 3.0)},
    "semigroup": {"k_list": (_int_list, "16,32,64,128"), "s": (_float, 1.0), "t_max": (_float, 1.0),
                  "n_times": (_int, 101), "mode": (_int, 2), "q": (_float, 2.0), "max_ratio": (_float, 0.6)},
    "ou": {"k_list": (_int_list, "16,32,64,128"), "s": (_float, 1.0), "T": (_float, 0.5), "K": (_int, 512),
           "J": (_opt_int, "auto"), "paths": (_int, 200), "noise_scale": (_float, 1.0), "tail_beta": (_float, 0.375)},
    "allen-cahn": {"k_list": (_int_list, "16,32,64,128"), "s": (_float, 1.0), "T": (_float, 0.5), "K": (_int, 512),
                   "J": (_opt_int, "auto"), "paths": (_int, 100), "p": (_float, 1.0),
                   "drift": (_choice("allen-cahn", "polynomial", "none"), "allen-cahn"),
                   "drift_coeffs": (_float_list, ""), "xi": (_choice("sin", "const", "zero"), "sin"),
                   "xi_amp": (_float, 0.1), "xi_freq": (_int, 1), "r_max": (_float, 1e6),
                   "noise_scale": (_float, 1.0), "tail_beta": (_float, 0.375)},
    "simulate": {"k": (_int, 64), "s": (_float, REQUIRED), "T": (_float, 0.5), "K": (_int, 512),
                 "J": (_opt_int, "auto"), "noise": (_choice("independent", "coupled"), "coupled"),
                 "scheme": (_choice("A", "B"), "A"), "drift": (_choice("allen-cahn", "polynomial", "none"), "allen-cahn"),
                 "drift_coeffs": (_float_list, ""), "xi": (_choice("sin", "const", "zero"), "sin"),
                 "xi_amp": (_float, 0.1), "xi_freq": (_int, 1), "r_max": (_float, 1e6),
                 "store": (_choice("nodal", "coefficient"), "nodal"), "path": (_int, 0)},
    "check": {},
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def resolve_config(experiment: str, raw: dict) -> dict:
    """Validate raw string values against the experiment schema."""
    schema = {**COMMON, **SCHEMAS[experiment]}
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) for {experiment}: {', '.join(unknown)}")
    if raw.get("experiment") not in (None, experiment):
        raise ConfigError(f"config is for experiment {raw['experiment']!r}, not {experiment!r}")
    cfg = {}
    for key, (parse, default) in schema.items():
        if key == "experiment":
            continue
        if key in raw:
            value = raw[key]
        elif default is REQUIRED:
            raise ConfigError(f"missing required key '{key}' for {experiment}")
        else:
            value = default
        if value is None or not isinstance(value, str):
            cfg[key] = value
            continue
        try:
            cfg[key] = parse(value)
        except ValueError as exc:
            raise ConfigError(f"invalid value for '{key}': {value!r} ({exc})") from None
    if cfg["m"] != 1:
        raise ConfigError("only m = 1 is supported by the experiments")
    if cfg["threads"] < 0:
        raise ConfigError("threads must be nonnegative")
    if "drift" in cfg and cfg["drift"] == "polynomial" and not cfg["drift_coeffs"]:
        raise ConfigError("drift = polynomial needs 'drift_coeffs'")
    return cfg


# -- experiment runners -------------------------------------------------------------


def _threads(cfg: dict) -> int:
    return cfg["threads"] or (os.cpu_count() or 1)


def _drift(cfg: dict):
    if cfg["drift"] == "none":
        return "none"
    if cfg["drift"] == "polynomial":
        return polynomial_drift(cfg["drift_coeffs"])
    return allen_cahn_drift()


def _xi(cfg: dict) -> Callable:
    amp, freq = cfg["xi_amp"], cfg["xi_freq"]
    if cfg["xi"] == "zero":
        return lambda x: np.zeros_like(x)
    if cfg["xi"] == "const":
        return lambda x: np.full_like(x, amp)
    return lambda x: amp * np.sin(2.0 * np.pi * freq * x)


def run_spectra(cfg):
    return harness.spectral_convergence_experiment(cfg["k_list"], cfg["j_max"], q_factor=cfg["q_factor"])


def run_resolvent(cfg):
    return harness.resolvent_convergence_experiment(cfg["k_list"], cfg["s"], cfg["beta"], J=cfg["J"],
                                                    tail_tol=cfg["tail_tol"], q_factor=cfg["q_factor"])


def run_ultra(cfg):
    t_grid = np.logspace(math.log10(cfg["t_min"]), math.log10(cfg["t_max"]), cfg["n_times"])
    return harness.ultracontractivity_experiment(cfg["k_list"], cfg["s"], cfg["q"], cfg["beta"], t_grid,
                                                 max_ratio=cfg["max_ratio"])


def run_semigroup(cfg):
    return harness.semigroup_experiment(cfg["k_list"], cfg["s"], cfg["t_max"], cfg["n_times"], cfg["mode"],
                                        cfg["q"], cfg["max_ratio"])


def run_ou(cfg):
    return harness.ou_convergence_experiment(cfg["k_list"], cfg["s"], cfg["T"], cfg["K"], cfg["J"], cfg["paths"],
                                             cfg["seed"], threads=_threads(cfg), noise_scale=cfg["noise_scale"],
                                             tail_beta=cfg["tail_beta"])


def run_allen_cahn(cfg):
    return harness.allen_cahn_convergence_experiment(
        cfg["k_list"], cfg["s"], cfg["T"], cfg["K"], cfg["J"], cfg["paths"], cfg["seed"], cfg["p"],
        threads=_threads(cfg), xi=_xi(cfg), drift=_drift(cfg), noise_scale=cfg["noise_scale"],
        r_max=cfg["r_max"], tail_beta=cfg["tail_beta"])


def run_simulate(cfg):
    """Single path on a k-point grid; returns a table of nodal or coefficient values."""
    k = cfg["k"]
    grid = build_grid(1, k)
    op = harness.fd_spectral_operator(k, cfg["s"])
    quad = build_quadrature(1, 16 * k)
    pair = transport_pair(grid, quad)
    xi = project(_xi(cfg)(quad.nodes[:, 0]), pair)
    drift = _drift(cfg)
    drift = None if drift == "none" else drift
    if cfg["noise"] == "independent":
        J = k if cfg["J"] is None else cfg["J"]
        if J != k:
            raise ConfigError("independent noise drives every discrete mode: J must equal k")
        noise = generate_noise(J, cfg["T"], cfg["K"], cfg["seed"], "discrete", paths=1, first_path=cfg["path"])
        dW = noise.increments
    else:
        if cfg["scheme"] == "B":
            raise ConfigError("scheme B needs independent noise")
        J = k if cfg["J"] is None else cfg["J"]
        noise = generate_noise(J, cfg["T"], cfg["K"], cfg["seed"], "continuum", paths=1, first_path=cfg["path"])
        dW = project_noise(noise, pair, op, continuum_operator_torus(1, J, quad))
    prob = SpdeProblem(operator=op, xi=xi, T=cfg["T"], K=cfg["K"], drift=drift, noise_mode=cfg["noise"],
                       scheme=cfg["scheme"], r_max=cfg["r_max"])
    sol = simulate_semilinear(prob, dW, store=cfg["store"])
    label = "node" if cfg["store"] == "nodal" else "coef"
    width = sol.values.shape[-1]
    table = harness.RateTable(name="simulate", columns=["t"] + [f"{label}_{i + 1}" for i in range(width)],
                              meta={"noise_hash": noise.fingerprint(), "operator": op.fingerprint(),
                                    "dt": prob.dt, "blown_up": bool(sol.blown_up[0]),
                                    "blowup_step": int(sol.blowup_step[0]), "sup_norm": float(sol.path_sup[0])})
    for t, row in zip(sol.times, sol.values[0]):
        table.rows.append([float(t)] + [float(v) for v in row])
    table.check("no blow-up", not sol.blown_up[0], f"first exceedance at step {int(sol.blowup_step[0])}")
    return table


def run_check(cfg):
    """Fast invariant suite on small problems."""
    table = harness.RateTable(name="check", columns=["check", "passed", "value"])
    rng = np.random.Generator(np.random.Philox(cfg["seed"]))

    def record(name, passed, value):
        table.rows.append([name, bool(passed), float(value)])
        table.check(name, passed, f"value {value:.6g}")

    spec = harness.spectral_convergence_experiment((16, 32, 64), 4)
    record("eigenpair bounds", spec.ok, len(spec.failures()))
    grid = build_grid(1, 16)
    pair = transport_pair(grid)
    u = rng.standard_normal((20, 16))
    dev = float(np.max(np.abs(project(lift(u, pair), pair) - u)))
    record("projection after lifting", dev == 0.0, dev)
    iso = max(abs(float(lq_norm(lift(u, pair), q)[0]) - float(lq_norm(u, q)[0])) for q in (2.0, 4.0, math.inf))
    record("lifting isometry", iso <= 1e-10, iso)
    op = harness.fd_spectral_operator(16)
    v = rng.standard_normal(16)
    law = float(np.max(np.abs(semigroup_apply(op, 0.01, semigroup_apply(op, 0.02, v)) - semigroup_apply(op, 0.03, v))))
    record("semigroup law", law <= 1e-10, law)
    ultra = harness.ultracontractivity_experiment((16, 32), q=math.inf)
    record("sup-norm contraction", ultra.ok, float(ultra.column("inf_inf_norm").max()))
    res = harness.resolvent_convergence_experiment((8, 16, 32), beta=50.0)
    record("resolvent zero-mode dominance", float(res.column("two_inf_norm").max()) < 1e-8,
           float(res.column("two_inf_norm").max()))
    return table


RUNNERS = {
    "spectra": run_spectra,
    "resolvent": run_resolvent,
    "ultra": run_ultra,
    "semigroup": run_semigroup,
    "ou": run_ou,
    "allen-cahn": run_allen_cahn,
    "simulate": run_simulate,
    "check": run_check,
}


# -- driver ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="d2cspde", description="Discrete-to-continuum SPDE experiments on the flat torus.")
    parser.add_argument("experiment", choices=sorted(RUNNERS), help="experiment or action to run")
    parser.add_argument("overrides", nargs="*", metavar="key=value", help="configuration overrides")
    parser.add_argument("--config", type=Path, help="flat key = value configuration file")
    parser.add_argument("--seed", type=int, help="master seed (beats the config file)")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--threads", type=int, help="worker threads for Monte Carlo blocks (0 = all cores)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    name = args.experiment
    try:
        raw = {}
        if args.config is not None:
            try:
                text = args.config.read_text(encoding="utf-8")
            except OSError as exc:
                print(f"error: cannot read config: {exc}", file=sys.stderr)
                return EXIT_IO
            raw.update(parse_config_text(text, str(args.config)))
        for item in args.overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            key, value = (p.strip() for p in item.split("=", 1))
            raw[key] = value
        for flag in ("seed", "out", "threads"):
            value = getattr(args, flag)
            if value is not None:
                raw[flag] = str(value)
        cfg = resolve_config(name, raw)
        table = RUNNERS[name](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except ValueError as exc:
        # parameter combinations rejected by the library are configuration errors too
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA

    try:
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{name}.csv"
        table.to_csv(csv_path)
        resolved = {"experiment": name, **cfg}
        extra = {f"meta.{k}": v for k, v in table.meta.items()}
        extra["slope"] = table.slope
        extra["status"] = "pass" if table.ok else "fail"
        harness.write_manifest(out / f"{name}.manifest", resolved, [csv_path], extra)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO

    if name != "simulate":
        for line in table.summary_lines():
            print(f"{name}: {line}")
    else:
        print(f"simulate: {len(table.rows)} time points written to {csv_path}")
    for c in table.failures():
        print(f"FAIL {c.name}: {c.detail}")
    print(f"{name}: {'PASS' if table.ok else 'FAIL'} ({len(table.checks)} checks)")
    return EXIT_OK if table.ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
