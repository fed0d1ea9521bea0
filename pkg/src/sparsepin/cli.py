"""Command-line front end: env | walk | pinning | verify | scan.

Configuration is a flat key=value text file (or the JSON emitted by a
previous run, whose embedded "config" block is reused) plus flag overrides;
flags win.  Every output embeds its fully resolved config and master seed,
and contains no timestamps, so re-running a saved config reproduces each
file byte for byte.  Output location comes from --outdir or SPARSEPIN_OUTDIR
(default: current directory); worker count never changes results.

Exit codes: 0 pass, 1 fail (including a failed critical-point bracket),
2 inconclusive, 64 bad configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from ._rng import derive_seed
from .environment import (DisorderSpec, make_kernel, sample_environment)
from .experiments import (KeyRelationConfig, ScanConfig, annealed_transience_check,
                          regime_scan, tau_mean_lower_bound, verify_key_relation)
from .pinning import (BracketError, annealed_critical_point, free_energy_estimate,
                      free_partition, grand_canonical, homogeneous_free_energy,
                      pinned_recursion, quenched_critical_point_estimate)
from .walk import (StepBudgetError, WalkParams, build_potential,
                   expected_visits_exact, mc_speed, mc_visits, scale_values,
                   sparse_increment_stream, step_prob)

SCHEMA_VERSION = 1

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INCONCLUSIVE = 2
EXIT_CONFIG = 64


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped onto the config exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"config error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


# key -> (type, default); grids are comma-separated strings so that config
# files and embedded configs stay flat
_COMMON = {
    "seed": (int, 1),
    "kernel": (str, "power_law"),
    "alpha": (float, 1.0),
    "q": (float, 0.5),
    "n_max": (int, 8),
    "step": (int, 1),
    "disorder": (str, "gaussian"),
    "sigma": (float, 1.0),
    "half_width": (float, 1.0),
    "beta": (float, 0.0),
    "h": (float, 0.0),
    "f": (float, 0.0),
}

_SCHEMAS = {
    "env": {**_COMMON, "horizon": (int, 50)},
    "walk": {**_COMMON, "horizon": (int, 50), "r": (int, 0),
             "replicas": (int, 10000), "step_budget": (int, 10 ** 8),
             "speed": (bool, False), "speed_steps": (int, 1000),
             "speed_replicas": (int, 400)},
    "pinning": {**_COMMON, "n": (int, 2000), "gc_f": (float, None),
                "critical": (bool, False), "crit_tol": (float, 0.02),
                "crit_replicas": (int, 3), "crit_n": (int, 0)},
    "verify": {**_COMMON, "beta": (float, 1.0), "h": (float, -1.0),
               "f": (float, 0.3), "n_tau": (int, 200),
               "walk_replicas": (int, 500), "n_series": (int, 0),
               "max_rounds": (int, 3)},
    "scan": {**_COMMON, "alpha": (float, 0.6), "n_max": (int, 40),
             "beta_grid": (str, "0,1,2"),
             "h_grid": (str, "-2.2,-1.4,-1.2,-0.35,-0.05"),
             "n_fe": (int, 8000), "n_gc": (int, 3000),
             "crit_tol": (float, 0.04), "crit_replicas": (int, 3),
             "eps_small": (float, 0.05), "h_hi": (float, 0.25),
             "transience": (bool, False), "trans_envs": (int, 50),
             "trans_walks": (int, 200), "trans_r": (int, 150)},
}


def _parse_value(kind, raw: str):
    if kind is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError as err:
        raise ConfigError(str(err)) from None


def load_config_file(path: str) -> dict:
    """key=value lines, or JSON (a prior report's embedded config is reused)."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        data = json.loads(text)
        return data.get("config", data)
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, raw = line.partition("=")
        out[key.strip()] = raw.strip()
    return out


def resolve_config(command: str, file_values: dict, flag_values: dict) -> dict:
    """defaults < config file < flags; unknown keys are rejected."""
    schema = _SCHEMAS[command]
    config = {k: default for k, (_, default) in schema.items()}
    for key, raw in file_values.items():
        if key not in schema:
            raise ConfigError(f"unknown config key {key!r} for {command}")
        kind, _ = schema[key]
        config[key] = _parse_value(kind, str(raw)) if isinstance(raw, str) else raw
    for key, val in flag_values.items():
        if val is not None and key in schema:
            config[key] = val
    return config


def build_kernel(config: dict):
    kind = config["kernel"]
    try:
        if kind == "power_law":
            return make_kernel("power_law", alpha=config["alpha"], n_max=config["n_max"])
        if kind == "geometric":
            return make_kernel("geometric", q=config["q"], n_max=config["n_max"])
        if kind == "dirac":
            return make_kernel("dirac", step=config["step"])
    except ValueError as err:
        raise ConfigError(str(err)) from None
    raise ConfigError(f"unknown kernel {kind!r}")


def build_disorder(config: dict) -> DisorderSpec:
    try:
        return DisorderSpec(family=config["disorder"], sigma=config["sigma"],
                            half_width=config["half_width"])
    except ValueError as err:
        raise ConfigError(str(err)) from None


def _grid(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"bad grid {text!r}") from None


def write_json(path: Path, command: str, config: dict, payload: dict) -> None:
    doc = {"schema_version": SCHEMA_VERSION, "command": command,
           "seed": config["seed"], "config": config, **payload}
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(x) if isinstance(x, float) else str(x) for x in row))
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# subcommands

def cmd_env(config: dict, outdir: Path, workers: int) -> int:
    kernel = build_kernel(config)
    disorder = build_disorder(config)
    env = sample_environment(kernel, disorder, config["horizon"],
                             derive_seed(config["seed"], "env"))
    write_json(outdir / "environment.json", "env", config,
               {"environment": env.to_dict(),
                "kernel_mean": kernel.mean})
    write_csv(outdir / "kernel.csv", ["n", "weight", "tail"],
              [(n + 1, float(kernel.weights[n]), float(kernel.tail[n + 1]))
               for n in range(kernel.n_max)])
    return EXIT_PASS


def cmd_walk(config: dict, outdir: Path, workers: int) -> int:
    kernel = build_kernel(config)
    disorder = build_disorder(config)
    params = WalkParams(beta=config["beta"], h=config["h"], f=config["f"])
    env = sample_environment(kernel, disorder, config["horizon"],
                             derive_seed(config["seed"], "env"))
    pot = build_potential(env, params)
    r = config["r"] or pot.horizon
    if not 1 <= r <= pot.horizon + 1:
        raise ConfigError(f"r must lie in 1..{pot.horizon + 1}")
    dv = pot.increments()
    write_csv(outdir / "potential.csv", ["i", "V", "step_prob_up"],
              [(i, float(pot.values[i]),
                1.0 if i == 0 else float(step_prob(float(dv[i - 1]))))
               for i in range(pot.horizon + 1)])
    mean, stderr = mc_visits(pot, r, config["replicas"],
                             derive_seed(config["seed"], "mc"),
                             step_budget=config["step_budget"], workers=workers)
    payload = {"visits": {"r": r, "exact": expected_visits_exact(pot, r),
                          "mean": mean, "stderr": stderr,
                          "replicas": config["replicas"],
                          "seed": config["seed"],
                          "scale_W_r": scale_values(pot, r)}}
    if config["speed"]:
        stream = sparse_increment_stream(kernel, disorder, params)
        smean, sse = mc_speed(stream, config["speed_steps"], config["speed_replicas"],
                              derive_seed(config["seed"], "speed"))
        payload["speed"] = {"mean": smean, "stderr": sse,
                            "n_steps": config["speed_steps"],
                            "replicas": config["speed_replicas"]}
    write_json(outdir / "visits.json", "walk", config, payload)
    return EXIT_PASS


def cmd_pinning(config: dict, outdir: Path, workers: int) -> int:
    kernel = build_kernel(config)
    disorder = build_disorder(config)
    n = config["n"]
    omega = np.asarray(
        sample_environment(kernel, disorder, n, derive_seed(config["seed"], "omega")).omega)
    table = free_partition(pinned_recursion(omega, kernel, config["beta"],
                                            config["h"], n))
    write_csv(outdir / "partition.csv", ["n", "log_zc", "log_z"],
              [(m, float(table.log_zc[m]), float(table.log_z[m]))
               for m in range(n + 1)])
    fe = free_energy_estimate(omega, kernel, config["beta"], config["h"], n)
    payload = {
        "free_energy": fe.to_dict(),
        "homogeneous": homogeneous_free_energy(kernel, config["h"]).to_dict(),
        "critical_points": {
            "annealed": annealed_critical_point(disorder, config["beta"]),
        },
    }
    if config["gc_f"] is not None:
        payload["grand_canonical"] = grand_canonical(table, config["gc_f"]).to_dict()
    if config["critical"]:
        est = quenched_critical_point_estimate(
            disorder, kernel, config["beta"], config["crit_n"] or n,
            config["crit_replicas"], config["crit_tol"],
            seed=derive_seed(config["seed"], "critical"))
        payload["critical_points"]["quenched"] = est.to_dict()
    write_json(outdir / "pinning.json", "pinning", config, payload)
    return EXIT_PASS


def cmd_verify(config: dict, outdir: Path, workers: int) -> int:
    kernel = build_kernel(config)
    disorder = build_disorder(config)
    relation = verify_key_relation(KeyRelationConfig(
        kernel=kernel, disorder=disorder, beta=config["beta"], h=config["h"],
        f=config["f"], n_tau=config["n_tau"], walk_replicas=config["walk_replicas"],
        seed=config["seed"], n_series=config["n_series"] or None,
        max_rounds=config["max_rounds"], workers=workers))
    bound = tau_mean_lower_bound(kernel, disorder, config["beta"], config["h"],
                                 seed=config["seed"])
    write_json(outdir / "verify.json", "verify", config,
               {"key_relation": relation.to_dict(),
                "tau_mean_bound": bound.to_dict()})
    if relation.verdict == "inconclusive":
        return EXIT_INCONCLUSIVE
    if relation.verdict == "pass" and bound.passed:
        return EXIT_PASS
    return EXIT_FAIL


def cmd_scan(config: dict, outdir: Path, workers: int) -> int:
    kernel = build_kernel(config)
    disorder = build_disorder(config)
    scan_cfg = ScanConfig(kernel=kernel, disorder=disorder, n_fe=config["n_fe"],
                          crit_replicas=config["crit_replicas"],
                          crit_tol=config["crit_tol"], n_gc=config["n_gc"],
                          eps_small=config["eps_small"], seed=config["seed"],
                          h_hi=config["h_hi"])
    report = regime_scan(_grid(config["beta_grid"]), _grid(config["h_grid"]), scan_cfg)
    write_csv(outdir / "scan.csv",
              ["beta", "h", "h_c_annealed", "hc_lo", "hc_hi", "case", "consistent"],
              [(p.beta, p.h, p.h_c_annealed,
                p.bracket[0] if p.bracket else "", p.bracket[1] if p.bracket else "",
                p.case, p.consistent) for p in report.points])
    payload = {"scan": report.to_dict()}
    if config["transience"]:
        if config["h"] >= 0:
            raise ConfigError("transience check needs h < 0")
        trans = annealed_transience_check(
            kernel, disorder, config["beta"], config["h"],
            n_envs=config["trans_envs"], walks_per_env=config["trans_walks"],
            r=config["trans_r"], seed=derive_seed(config["seed"], "transience"))
        payload["transience"] = trans.to_dict()
    write_json(outdir / "scan.json", "scan", config, payload)
    return EXIT_PASS


_COMMANDS = {"env": cmd_env, "walk": cmd_walk, "pinning": cmd_pinning,
             "verify": cmd_verify, "scan": cmd_scan}


def _add_flags(parser: argparse.ArgumentParser, command: str) -> None:
    for key, (kind, _) in _SCHEMAS[command].items():
        flag = "--" + key.replace("_", "-")
        if kind is bool:
            parser.add_argument(flag, dest=key, action="store_const", const=True,
                                default=None)
        else:
            parser.add_argument(flag, dest=key, type=kind, default=None)


def main(argv=None) -> int:
    parser = _Parser(
        prog="sparsepin",
        description="Sparse-environment random walks, the pinning model, and "
                    "the identity between renewal-averaged return counts and "
                    "grand-canonical partition sums.  Grid-valued flags need "
                    "the --flag=value form when the first entry is negative.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value file or JSON from a prior run")
        p.add_argument("--outdir", help="output directory (default $SPARSEPIN_OUTDIR or .)")
        p.add_argument("--workers", type=int, default=1,
                       help="worker threads; results do not depend on this")
        _add_flags(p, name)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        file_values = load_config_file(args.config) if args.config else {}
        flag_values = {k: getattr(args, k) for k in _SCHEMAS[args.command]}
        config = resolve_config(args.command, file_values, flag_values)
        outdir = Path(args.outdir or os.environ.get("SPARSEPIN_OUTDIR", "."))
        outdir.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](config, outdir, max(1, args.workers))
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except BracketError as err:
        print(f"bracket failure: {err}", file=sys.stderr)
        return EXIT_FAIL
    except StepBudgetError as err:
        print(f"step budget exhausted: {err}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
