"""Command line interface: configured runs with reproducible file outputs.

Subcommands
-----------
simulate      annealed speed estimate for one (environment, walk) pair
sweep         bias-grid speed table with analytic classifications
conductance   truncated effective conductances across jump ranges
regen         regenerative cycle decomposition with the speed identity
subballistic  multi-horizon decay study under the operational zero-speed rule
evm           occupation-density diagnostics of the walk-centred environment
verify        numerical verification suite (fast or full sizes)

Each run writes OUT.jsonl (one JSON record per line), OUT.csv (summary table,
floats at 17 significant digits), and OUT.manifest.json carrying the resolved
config, its SHA-256, the seed, and package versions.  Outputs are byte
identical for identical (config, seed): nothing time- or host-dependent is
embedded, and results do not depend on the thread count (MOTTRW_THREADS or
--threads).  A manifest is itself a valid --config: rerunning from it
reproduces every numeric field.

Configs are JSON objects validated against a closed schema before any
computation; unknown fields are rejected.  Command-line flags override config
fields.  Exit codes: 0 success, 1 malformed config or arguments, 2
verification-suite failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import platform
import sys
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from ._rng import mix64
from .criteria import operational_subballistic, phase_sweep
from .environments import FAMILIES, EnvironmentSpec, build_environment, fresh_seed
from .evm import density_ratio_profile
from .kernel import WalkConfig
from .network import effective_conductance
from .regen import regeneration_speed, simulate_regenerative
from .walk import velocity_estimate

__all__ = ["main", "run"]


class ConfigError(Exception):
    """Invalid configuration; carries one message per problem."""

    def __init__(self, messages):
        super().__init__("; ".join(messages))
        self.messages = list(messages)


# ---------------------------------------------------------------------------
# config schema and resolution
# ---------------------------------------------------------------------------

_RHO_SCHEMA = {"oneOf": [{"type": "integer", "minimum": 1}, {"const": "inf"}]}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "environment": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": sorted(FAMILIES)},
                "params": {"type": "object", "additionalProperties": {"type": "number"}},
                "marks": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["zero", "uniform"]},
                        "amplitude": {"type": "number"},
                    },
                },
            },
        },
        "walk": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "bias": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "rho": _RHO_SCHEMA,
                "lazy": {"type": "boolean"},
                "tail_tol": {"type": "number", "exclusiveMinimum": 0},
                "potential": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["zero", "mott", "table"]},
                        "beta": {"type": "number", "minimum": 0},
                        "edges": {"type": "array", "items": {"type": "number"}},
                        "values": {
                            "type": "array",
                            "items": {"type": "array", "items": {"type": "number"}},
                        },
                    },
                },
            },
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "steps": {"type": "integer", "minimum": 2},
        "replicas": {"type": "integer", "minimum": 2},
        "burn_in": {"type": "integer", "minimum": 0},
        "horizons": {
            "type": "array",
            "items": {"type": "integer", "minimum": 2},
            "minItems": 1,
        },
        "lambdas": {
            "type": "array",
            "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "minItems": 1,
        },
        "lambda_grid": {"type": "string"},
        "rhos": {"type": "array", "items": _RHO_SCHEMA, "minItems": 1},
        "levels": {"type": "integer", "minimum": 2},
        "environments": {"type": "integer", "minimum": 1},
        "cycles": {"type": "integer", "minimum": 2},
        "units": {"enum": ["index", "position"]},
        "continuous": {"type": "boolean"},
        "threads": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
        "suite": {"enum": ["fast", "full"]},
    },
}

_FAMILY_ALIASES = {
    "lattice": "constant_lattice",
    "renewal": "renewal_iid",
    "heavy_tail": "heavy_tail_sorpresa",
    "markov": "markov_velocino",
}

# (flag name, gap-law parameter)
_PARAM_FLAGS = (
    ("d", "d"),
    ("rate", "rate"),
    ("gamma", "gamma_tail"),
    ("p", "p"),
    ("gamma_mc", "gamma_mc"),
)

_DEFAULTS = {
    "simulate": {"steps": 100_000, "replicas": 8, "units": "index"},
    "sweep": {"replicas": 8, "units": "index"},
    "conductance": {"environments": 50, "levels": 12, "rhos": [1, 2, 4, 8]},
    "regen": {"cycles": 1_000},
    "subballistic": {"horizons": [10_000, 100_000], "replicas": 8, "units": "index"},
    "evm": {"steps": 20_000, "replicas": 32},
    "verify": {"suite": "fast"},
}


def _load_config_file(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror or exc}"])
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"])
    if isinstance(obj, dict) and "config" in obj and "command" in obj:
        obj = obj["config"]  # manifest from a previous run
    if not isinstance(obj, dict):
        raise ConfigError([f"{path}: top level must be a JSON object"])
    return obj


def _parse_rho_token(text: str):
    token = str(text).strip().lower()
    if token == "inf":
        return "inf"
    try:
        return int(token)
    except ValueError:
        raise ConfigError([f"rho {text!r}: expected a positive integer or 'inf'"])


def parse_lambda_grid(text: str) -> list[float]:
    """Parse "A:B:STEP" (inclusive endpoints) or a comma-separated list."""
    if ":" in text:
        parts = text.split(":")
        try:
            a, b, step = (float(x) for x in parts)
        except ValueError:
            raise ConfigError([f"lambda grid {text!r}: expected A:B:STEP"])
        if step <= 0 or b < a:
            raise ConfigError([f"lambda grid {text!r}: needs B >= A and STEP > 0"])
        count = int(math.floor((b - a) / step + 1e-9)) + 1
        return [round(a + i * step, 12) for i in range(count)]
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError([f"lambda grid {text!r}: expected numbers"])
    if not values:
        raise ConfigError([f"lambda grid {text!r}: empty"])
    return values


def _resolve_config(ns: argparse.Namespace) -> dict:
    cfg = _load_config_file(ns.config) if getattr(ns, "config", None) else {}

    env_obj = dict(cfg.get("environment", {}))
    family = getattr(ns, "family", None)
    if family is not None:
        env_obj["family"] = _FAMILY_ALIASES.get(family, family)
    flagged = {
        param: getattr(ns, flag)
        for flag, param in _PARAM_FLAGS
        if getattr(ns, flag, None) is not None
    }
    if flagged:
        env_obj["params"] = {**env_obj.get("params", {}), **flagged}
    if "family" in env_obj and env_obj["family"] in ("constant_lattice", "renewal_iid"):
        env_obj.setdefault("params", {}).setdefault("d", 1.0)
    if env_obj:
        cfg["environment"] = env_obj

    walk = dict(cfg.get("walk", {}))
    if getattr(ns, "bias", None) is not None:
        walk["bias"] = ns.bias
    if getattr(ns, "rho", None) is not None:
        walk["rho"] = _parse_rho_token(ns.rho)
    if getattr(ns, "lazy", None) is not None:
        walk["lazy"] = ns.lazy
    if walk:
        cfg["walk"] = walk

    for key in ("seed", "steps", "replicas", "threads", "units", "out", "suite",
                "cycles", "levels", "environments", "burn_in"):
        value = getattr(ns, key, None)
        if value is not None:
            cfg[key] = value
    if getattr(ns, "continuous", None) is not None:
        cfg["continuous"] = ns.continuous
    if getattr(ns, "horizons", None) is not None:
        try:
            cfg["horizons"] = [int(float(x)) for x in ns.horizons.split(",") if x.strip()]
        except ValueError:
            raise ConfigError([f"horizons {ns.horizons!r}: expected comma-separated integers"])
    if getattr(ns, "lambda_grid", None) is not None:
        cfg["lambda_grid"] = ns.lambda_grid
    if getattr(ns, "rhos", None) is not None:
        cfg["rhos"] = [_parse_rho_token(x) for x in ns.rhos.split(",") if x.strip()]

    for key, value in _DEFAULTS.get(ns.command, {}).items():
        cfg.setdefault(key, value)
    cfg.setdefault("seed", 0)
    cfg.setdefault("out", f"mottrw_{ns.command}")

    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    problems = [
        f"config: {'.'.join(str(p) for p in err.absolute_path) or '<top level>'}: {err.message}"
        for err in sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    ]
    if problems:
        raise ConfigError(problems)
    _check_required(ns.command, cfg)
    return cfg


def _check_required(command: str, cfg: dict) -> None:
    problems = []
    needs_env = command in ("simulate", "sweep", "conductance", "regen", "subballistic", "evm")
    if needs_env and "environment" not in cfg:
        problems.append("config: environment: required (give --family or a config file)")
    if command in ("simulate", "conductance", "regen", "subballistic", "evm"):
        if "bias" not in cfg.get("walk", {}):
            problems.append("config: walk.bias: required for this subcommand")
    if command == "sweep" and not (cfg.get("lambdas") or cfg.get("lambda_grid")):
        problems.append("config: lambda_grid: required (e.g. --lambda-grid 0.1:0.9:0.1)")
    if command in ("regen", "evm") and cfg.get("walk", {}).get("rho", "inf") == "inf":
        problems.append(f"config: walk.rho: {command} needs a finite range (e.g. --rho 3)")
    if command == "subballistic" and len(cfg.get("horizons", [])) < 2:
        problems.append("config: horizons: the decay rule needs at least two horizons")
    if problems:
        raise ConfigError(problems)


def _environment_spec(cfg: dict) -> EnvironmentSpec:
    try:
        return EnvironmentSpec.from_json(cfg["environment"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError([f"config: environment: {exc}"])


def _walk_config(cfg: dict) -> WalkConfig:
    try:
        return WalkConfig.from_json(cfg.get("walk", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError([f"config: walk: {exc}"])


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------


def _jsonable(value):
    """JSON-safe copy: numpy scalars/arrays unwrapped, non-finite floats as strings."""
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        f = float(value)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return value


def _csv_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _versions() -> dict:
    out = {"mottrw": __version__, "python": platform.python_version()}
    for dist in ("numpy", "scipy", "numba", "jsonschema"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = "unknown"
    return out


def _write_outputs(command, cfg, records, columns, rows, summary) -> None:
    out = Path(cfg["out"])
    if out.parent != Path("."):
        out.parent.mkdir(parents=True, exist_ok=True)
    with open(f"{out}.jsonl", "w") as fh:
        for record in records:
            fh.write(json.dumps(_jsonable(record), sort_keys=True) + "\n")
    with open(f"{out}.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_csv_cell(v) for v in row])
    config = _jsonable(cfg)
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    manifest = {
        "command": command,
        "config": config,
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "seed": cfg["seed"],
        "versions": _versions(),
        "outputs": {"jsonl": f"{out.name}.jsonl", "csv": f"{out.name}.csv"},
        "summary": _jsonable(summary),
    }
    with open(f"{out}.manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommand drivers: each returns (records, columns, rows, summary, exit code)
# ---------------------------------------------------------------------------


def _cmd_simulate(cfg):
    spec = _environment_spec(cfg)
    wcfg = _walk_config(cfg)
    est = velocity_estimate(
        spec,
        wcfg,
        cfg["steps"],
        cfg["seed"],
        replicas=cfg["replicas"],
        burn_in=cfg.get("burn_in"),
        continuous=cfg.get("continuous", False),
        units=cfg["units"],
        threads=cfg.get("threads"),
    )
    records = [
        {"record": "replica", "replica": r, "speed": v}
        for r, v in enumerate(est.per_replica)
    ]
    columns = ("steps", "burn_in", "replicas", "units", "v_hat", "stderr")
    rows = [(est.steps, est.burn_in, est.replicas, est.units, est.value, est.stderr)]
    summary = {"v_hat": est.value, "stderr": est.stderr}
    print(
        f"v_hat = {est.value:.6g} +/- {est.stderr:.2g} "
        f"({est.units} units, {est.replicas} replicas x {est.steps} steps)"
    )
    return records, columns, rows, summary, 0


def _cmd_sweep(cfg):
    spec = _environment_spec(cfg)
    lams = cfg.get("lambdas") or parse_lambda_grid(cfg["lambda_grid"])
    horizons = cfg.get("horizons") or [cfg.get("steps", 100_000)]
    walk = dict(cfg.get("walk", {}))
    walk.setdefault("bias", lams[0])  # placeholder: the sweep sets the bias per point
    base = WalkConfig.from_json(walk)
    result = phase_sweep(
        spec,
        lams,
        horizons=horizons,
        replicas=cfg["replicas"],
        seed=cfg["seed"],
        rho=base.rho,
        lazy=base.lazy,
        potential=base.potential,
        tail_tol=base.tail_tol,
        units=cfg["units"],
        continuous=cfg.get("continuous", False),
        threads=cfg.get("threads"),
    )
    records = [
        {
            "record": "phase_point",
            "lambda": pt.lam,
            "rho": pt.rho,
            "horizons": list(pt.horizons),
            "v_hat": pt.v_hat,
            "stderr": pt.stderr,
            "analytic_class": pt.analytic.verdict,
            "rationale": pt.analytic.rationale,
            "operational_zero": pt.operational_zero,
        }
        for pt in result.points
    ]
    columns = ("family", "params", "lambda", "rho", "horizon", "v_hat", "stderr", "analytic_class")
    rows = [tuple(row[c] for c in columns) for row in result.iter_rows()]
    summary = {"boundary": result.boundary, "discontinuity": result.discontinuity}
    flag = "set" if result.discontinuity else "clear"
    print(
        f"{len(rows)} rows over {len(lams)} biases; critical bias "
        f"{result.boundary if result.boundary is not None else 'none'}; discontinuity flag {flag}"
    )
    return records, columns, rows, summary, 0


def _cmd_conductance(cfg):
    spec = _environment_spec(cfg)
    wcfg = _walk_config(cfg)
    level = cfg["levels"]
    count = cfg["environments"]
    rhos = [math.inf if r == "inf" else int(r) for r in cfg["rhos"]]
    target = [("le", -level), ("ge", level)]
    window = (-(level - 1), level - 1)
    records = []
    values = np.empty((count, len(rhos)))
    for i in range(count):
        env = build_environment(spec, fresh_seed(cfg["seed"], i), (-level - 1, level + 2))
        for j, rho in enumerate(rhos):
            c = effective_conductance(env, wcfg, [0], target, rho=rho, window=window)
            values[i, j] = c
            records.append(
                {"record": "conductance", "environment": i, "rho": rho, "c_eff": c}
            )
    columns = ("rho", "mean_c", "min_c", "max_c")
    rows = [
        (rho, values[:, j].mean(), values[:, j].min(), values[:, j].max())
        for j, rho in enumerate(rhos)
    ]
    monotone = bool(np.all(np.diff(values, axis=1) >= -1e-12 * values[:, :-1]))
    summary = {"environments": count, "level": level, "monotone_in_rho": monotone}
    print(
        f"{count} environments, conductance to +/-{level}; "
        f"monotone in rho: {'yes' if monotone else 'NO'}"
    )
    return records, columns, rows, summary, 0


def _cmd_regen(cfg):
    spec = _environment_spec(cfg)
    wcfg = _walk_config(cfg)
    env = build_environment(spec, fresh_seed(cfg["seed"], 0), (-8, 8))
    run_ = simulate_regenerative(env, wcfg, cfg["seed"], cfg["cycles"])
    speed = regeneration_speed(run_)
    records = [
        {"record": "cycle", "cycle": i, "steps": int(s), "span_sites": int(w)}
        for i, (s, w) in enumerate(zip(run_.cycle_steps, run_.cycle_spans))
    ]
    columns = ("rho", "epsilon", "cycles", "mean_cycle_steps", "v_regen", "stderr")
    rows = [
        (run_.rho, run_.epsilon, speed.n_cycles, speed.mean_cycle_steps, speed.value, speed.stderr)
    ]
    summary = {
        "epsilon": run_.epsilon,
        "cycles": speed.n_cycles,
        "v_regen": speed.value,
        "stderr": speed.stderr,
    }
    print(
        f"{speed.n_cycles} cycles at rho={run_.rho}: v_regen = {speed.value:.6g} "
        f"+/- {speed.stderr:.2g} (epsilon = {run_.epsilon:.6g})"
    )
    return records, columns, rows, summary, 0


def _cmd_subballistic(cfg):
    spec = _environment_spec(cfg)
    wcfg = _walk_config(cfg)
    horizons = sorted(cfg["horizons"])
    records, v_hats, stderrs = [], [], []
    for j, horizon in enumerate(horizons):
        est = velocity_estimate(
            spec,
            wcfg,
            horizon,
            mix64(cfg["seed"], j),
            replicas=cfg["replicas"],
            continuous=cfg.get("continuous", False),
            units=cfg["units"],
            threads=cfg.get("threads"),
        )
        v_hats.append(est.value)
        stderrs.append(est.stderr)
        records.append(
            {
                "record": "horizon",
                "horizon": horizon,
                "v_hat": est.value,
                "stderr": est.stderr,
                "per_replica": est.per_replica,
            }
        )
    verdict = operational_subballistic(horizons, v_hats)
    columns = ("horizon", "v_hat", "stderr")
    rows = list(zip(horizons, v_hats, stderrs))
    summary = {
        "operational_zero": verdict,
        "rule": "v_hat halves (at least) per decade of horizon and ends below 0.02",
    }
    print(
        f"v_hat over horizons {horizons}: "
        + ", ".join(f"{v:.4g}" for v in v_hats)
        + f" -> operational zero-speed: {'yes' if verdict else 'no'}"
    )
    return records, columns, rows, summary, 0


def _cmd_evm(cfg):
    spec = _environment_spec(cfg)
    wcfg = _walk_config(cfg)
    env = build_environment(spec, fresh_seed(cfg["seed"], 0), (-8, 8))
    diag = density_ratio_profile(env, wcfg, cfg["steps"], cfg["seed"], replicas=cfg["replicas"])
    records = [
        {"record": "shift", "k": int(k), "ratio": float(r), "structural_F": float(f)}
        for k, r, f in zip(diag.shifts, diag.ratios, diag.envelope)
    ]
    columns = ("k", "ratio", "structural_F", "gamma_hat")
    rows = [
        (int(k), float(r), float(f), diag.gamma_hat)
        for k, r, f in zip(diag.shifts, diag.ratios, diag.envelope)
    ]
    summary = {
        "v_hat": diag.v_hat,
        "m": diag.m,
        "gamma_hat": diag.gamma_hat,
        "epsilon": diag.epsilon,
        "below_m_fraction": diag.below_m_fraction,
        "violations": diag.violations,
    }
    print(
        f"{diag.m} shifts over {diag.replicas} replicas x {diag.n} steps: "
        f"min ratio {diag.ratios.min():.4g} vs gamma_hat {diag.gamma_hat:.4g} "
        f"({diag.violations} violations)"
    )
    return records, columns, rows, summary, 0


def _cmd_verify(cfg):
    from .acceptance import run_suite

    results = run_suite(cfg["suite"], threads=cfg.get("threads"))
    width = max(len(r.title) for r in results)
    print(f"verification suite ({cfg['suite']} sizes)")
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"  [{status}] {r.number:>2}. {r.title:<{width}}  {r.seconds:7.1f}s  {r.detail}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    for r in failed:
        print(f"FAILED criterion {r.number}: {r.title}: {r.detail}", file=sys.stderr)
    records = [
        {
            "record": "criterion",
            "criterion": r.number,
            "title": r.title,
            "passed": r.passed,
            "seconds": r.seconds,
            "detail": r.detail,
        }
        for r in results
    ]
    columns = ("criterion", "title", "passed", "seconds", "detail")
    rows = [(r.number, r.title, r.passed, r.seconds, r.detail) for r in results]
    summary = {
        "suite": cfg["suite"],
        "passed": len(results) - len(failed),
        "failed": [r.number for r in failed],
    }
    return records, columns, rows, summary, 2 if failed else 0


_DRIVERS = {
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "conductance": _cmd_conductance,
    "regen": _cmd_regen,
    "subballistic": _cmd_subballistic,
    "evm": _cmd_evm,
    "verify": _cmd_verify,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mottrw",
        description="Biased Mott variable-range hopping: simulation and verification runs.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (or a manifest from a previous run)")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", help="output path prefix (writes PREFIX.{jsonl,csv,manifest.json})")
    common.add_argument("--threads", type=int, help="worker threads (results are independent of it)")

    environment = argparse.ArgumentParser(add_help=False)
    environment.add_argument(
        "--family",
        help="gap family: lattice | renewal | heavy_tail | markov (or full names)",
    )
    environment.add_argument("--d", type=float, help="gap floor for lattice/renewal families")
    environment.add_argument("--rate", type=float, help="renewal exponential rate")
    environment.add_argument("--gamma", type=float, help="heavy-tail exponent gamma_tail")
    environment.add_argument("--p", type=float, help="gap-chain up probability")
    environment.add_argument("--gamma-mc", dest="gamma_mc", type=float, help="gap-chain step size")

    walk = argparse.ArgumentParser(add_help=False)
    walk.add_argument("--bias", type=float, help="drift strength in [0, 1)")
    walk.add_argument("--rho", help="jump range: positive integer or 'inf'")
    walk.add_argument(
        "--lazy",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="keep the truncated tail as laziness (default: lazy)",
    )

    sampling = argparse.ArgumentParser(add_help=False)
    sampling.add_argument("--steps", type=int, help="walk steps per replica")
    sampling.add_argument("--replicas", type=int, help="independent replicas")
    sampling.add_argument("--units", choices=["index", "position"], help="speed units")
    sampling.add_argument(
        "--continuous",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="measure against the exponential-clock time",
    )

    p = sub.add_parser(
        "simulate",
        parents=[common, environment, walk, sampling],
        help="annealed speed estimate for one (environment, walk) pair",
    )
    p.add_argument("--burn-in", dest="burn_in", type=int, help="steps discarded before measuring")

    p = sub.add_parser(
        "sweep",
        parents=[common, environment, walk, sampling],
        help="bias-grid speed table with analytic classifications",
    )
    p.add_argument(
        "--lambda-grid",
        "--lambda",
        dest="lambda_grid",
        help="bias grid A:B:STEP (inclusive) or comma-separated values",
    )
    p.add_argument("--horizons", help="comma-separated step horizons (default: one, from --steps)")

    p = sub.add_parser(
        "conductance",
        parents=[common, environment, walk],
        help="truncated effective conductances across jump ranges",
    )
    p.add_argument("--rhos", help="comma-separated jump ranges, e.g. 1,2,4,8")
    p.add_argument("--levels", type=int, help="conductance measured from 0 to +/-LEVELS")
    p.add_argument("--environments", type=int, help="sampled environments")

    sub.add_parser(
        "regen",
        parents=[common, environment, walk],
        help="regenerative cycle decomposition with the speed identity",
    ).add_argument("--cycles", type=int, help="regeneration cycles to accumulate")

    p = sub.add_parser(
        "subballistic",
        parents=[common, environment, walk, sampling],
        help="multi-horizon decay study under the operational zero-speed rule",
    )
    p.add_argument("--horizons", help="comma-separated step horizons (at least two)")

    p = sub.add_parser(
        "evm",
        parents=[common, environment, walk],
        help="occupation-density diagnostics of the walk-centred environment",
    )
    p.add_argument("--steps", type=int, help="walk steps per replica")
    p.add_argument("--replicas", type=int, help="independent replicas")

    sub.add_parser(
        "verify",
        parents=[common],
        help="run the numerical verification suite",
    ).add_argument("--suite", choices=["fast", "full"], help="check sizes (default fast)")

    return parser


def run(argv=None) -> int:
    """Entry point; returns the process exit code."""
    parser = _build_parser()
    ns = parser.parse_args(argv)
    if ns.command is None:
        parser.print_help()
        return 1
    try:
        cfg = _resolve_config(ns)
        records, columns, rows, summary, code = _DRIVERS[ns.command](cfg)
    except ConfigError as exc:
        for message in exc.messages:
            print(f"mottrw: {message}", file=sys.stderr)
        return 1
    except (RuntimeError, ValueError) as exc:
        # a run whose sizes cannot certify anything is an argument problem
        print(f"mottrw: {ns.command}: {exc}", file=sys.stderr)
        return 1
    _write_outputs(ns.command, cfg, records, columns, rows, summary)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
