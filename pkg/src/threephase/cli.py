"""Command-line front end.

Usage::

    threephase <command> --config <path> [--out <path>]

Commands: ``estimate``, ``check``, ``simulate`` and ``jas-alus``.  The config
is a YAML or JSON mapping; relative paths inside it are resolved against the
config file's directory.  Reports are JSON with every float written to 17
significant digits.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 a ``check``
identity outside tolerance.  Errors are reported as JSON on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from collections.abc import Mapping
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .designs import SRSWOR, Bernoulli, Census, PhaseDesign, Population, StratifiedSRSWOR, Table
from .errors import ThreePhaseError
from .estimator import NestedSample, estimate
from .jas_alus import jas_alus_report
from .loaders import load_jas_alus, load_population
from .oracle import (
    IDENTITY_TOL,
    LINEAR_TOL,
    QUADRATIC_TOL,
    Check,
    arbitrary_constant_identity,
    enumerate_three_phase,
    expectation_check,
    monte_carlo,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TOLERANCE = 0, 1, 2, 3
COMMANDS = ("estimate", "check", "simulate", "jas-alus")


class ConfigError(Exception):
    """The config file is missing, unparsable or lacks a required setting."""


class UsageError(Exception):
    pass


def format_json(obj, indent: int = 2) -> str:
    """Serialize ``obj`` as JSON, writing floats with 17 significant digits.

    Non-finite floats become ``null``.
    """

    def enc(o, level: int) -> str:
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, (bool, np.bool_)):
            return "true" if o else "false"
        if o is None:
            return "null"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            o = float(o)
            return format(o, ".17g") if math.isfinite(o) else "null"
        if isinstance(o, str):
            return json.dumps(o, ensure_ascii=False)
        if isinstance(o, Mapping):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {enc(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            if len(o) == 0:
                return "[]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in o) + "\n" + end + "]"
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return enc(obj, 0) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class RunConfig:
    """Parsed config plus the provenance of every file it read."""

    def __init__(self, path):
        self.path = Path(path)
        try:
            raw = self.path.read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            data = yaml.safe_load(raw.decode("utf-8"))
        except (yaml.YAMLError, UnicodeDecodeError) as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        if not isinstance(data, Mapping):
            raise ConfigError("config must be a mapping")
        self.data = data
        self.digest = hashlib.sha256(raw).hexdigest()
        self.inputs: dict[str, str] = {}

    def get(self, key, default=None):
        return self.data.get(key, default)

    def require(self, key):
        if key not in self.data:
            raise ConfigError(f"config is missing {key!r}")
        return self.data[key]

    def input_path(self, name: str) -> Path:
        path = self.path.parent / name
        if not path.is_file():
            raise ConfigError(f"input file not found: {name}")
        self.inputs[str(name)] = _sha256(path)
        return path

    def provenance(self, command: str) -> dict:
        return {
            "command": command,
            "version": __version__,
            "config_sha256": self.digest,
            "inputs": [{"path": p, "sha256": h} for p, h in sorted(self.inputs.items())],
        }


def _lookup(population: Population, key):
    ids = {str(k): k for k in population.ids}
    if str(key) not in ids:
        raise ConfigError(f"unknown unit id {key!r}")
    return ids[str(key)]


def build_design(spec, population: Population) -> PhaseDesign:
    """Turn a ``{kind: ..., ...}`` mapping into a design object."""
    if not isinstance(spec, Mapping) or "kind" not in spec:
        raise ConfigError(f"design must be a mapping with a 'kind': {spec!r}")
    kind = str(spec["kind"]).lower().replace("-", "_")
    try:
        if kind == "srswor":
            return SRSWOR(int(spec["n"]))
        if kind == "stratified_srswor":
            sizes = {str(k): int(v) for k, v in spec["sizes"].items()}
            if not population.strata:
                raise ConfigError("stratified_srswor needs a stratum column in the population")
            return StratifiedSRSWOR(sizes, {k: str(s) for k, s in population.strata.items()})
        if kind == "bernoulli":
            p = spec["p"]
            if isinstance(p, Mapping):
                p = {_lookup(population, k): float(v) for k, v in p.items()}
            else:
                p = float(p)
            return Bernoulli(p)
        if kind == "census":
            return Census()
        if kind == "table":
            units = [_lookup(population, k) for k in spec["units"]]
            return Table(tuple(units), np.asarray(spec["pi"], float), np.asarray(spec["joint"], float))
    except KeyError as exc:
        raise ConfigError(f"design {kind!r} is missing {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"design {kind!r}: {exc}") from None
    raise ConfigError(f"unknown design kind {spec['kind']!r}")


def _designs(config: RunConfig, population: Population) -> list[PhaseDesign]:
    specs = config.require("designs")
    if isinstance(specs, Mapping):
        specs = [specs.get(f"phase{i}") for i in (1, 2, 3)]
    if not isinstance(specs, list) or len(specs) != 3:
        raise ConfigError("designs must list exactly three phases")
    return [build_design(s, population) for s in specs]


def _population(config: RunConfig) -> Population:
    return load_population(config.input_path(config.require("population")))


def _tolerances(config: RunConfig) -> dict:
    tol = {"linear": LINEAR_TOL, "quadratic": QUADRATIC_TOL, "identity": IDENTITY_TOL}
    tol.update({k: float(v) for k, v in (config.get("tolerances") or {}).items()})
    return tol


def cmd_estimate(config: RunConfig) -> tuple[dict, int]:
    population = _population(config)
    designs = _designs(config, population)
    spec = config.require("sample")
    try:
        sample = NestedSample(*(tuple(_lookup(population, k) for k in spec[s]) for s in ("S", "R", "F")))
    except (KeyError, TypeError):
        raise ConfigError("sample must map S, R and F to lists of unit ids") from None
    return estimate(population, designs, sample).as_dict(), EXIT_OK


def cmd_check(config: RunConfig) -> tuple[dict, int]:
    population = _population(config)
    designs = _designs(config, population)
    tol = _tolerances(config)
    enum = config.get("enumeration") or {}
    kwargs = {k: int(enum[k]) for k in ("cap", "max_outcomes") if k in enum}
    dist = enumerate_three_phase(population, designs, **kwargs)
    report = expectation_check(dist, tol["linear"], tol["quadratic"], tol["identity"])

    constants = [("arbitrary_constant_ones", np.ones((population.N, population.N)))]
    identity = config.get("identity") or {}
    if identity.get("draws"):
        if "seed" not in identity:
            raise ConfigError("identity.draws needs identity.seed")
        rng = np.random.default_rng(int(identity["seed"]))
        for d in range(int(identity["draws"])):
            constants.append((f"arbitrary_constant_random_{d}", rng.uniform(-1, 1, (population.N, population.N))))
    checks = list(report.checks)
    for name, c in constants:
        idr = arbitrary_constant_identity(population, designs, c, **({"cap": kwargs["cap"]} if "cap" in kwargs else {}))
        checks.append(Check(name, idr.lhs, idr.rhs, idr.rel_gap, tol["linear"]))

    out = report.as_dict()
    out["outcomes"] = len(dist)
    out["checks"] = [c.as_dict() for c in checks]
    out["pass"] = all(c.passed for c in checks)
    return out, EXIT_OK if out["pass"] else EXIT_TOLERANCE


def cmd_simulate(config: RunConfig) -> tuple[dict, int]:
    population = _population(config)
    designs = _designs(config, population)
    mc = config.require("monte_carlo")
    if "seed" not in mc or "reps" not in mc:
        raise ConfigError("monte_carlo needs both 'reps' and 'seed'")
    report = monte_carlo(population, designs, int(mc["reps"]), int(mc["seed"]), int(mc.get("workers", 1)))
    return report.as_dict(), EXIT_OK


def cmd_jas_alus(config: RunConfig) -> tuple[dict, int]:
    spec = config.require("jas_alus")
    try:
        paths = [config.input_path(spec[k]) for k in ("substrata", "segments", "tracts")]
    except KeyError as exc:
        raise ConfigError(f"jas_alus is missing {exc.args[0]!r}") from None
    pairs = spec.get("pairs", "ordered")
    if pairs not in ("ordered", "printed"):
        raise ConfigError(f"jas_alus.pairs must be 'ordered' or 'printed', got {pairs!r}")
    frame = load_jas_alus(*paths)
    return jas_alus_report(frame, pairs).as_dict(), EXIT_OK


HANDLERS = {
    "estimate": cmd_estimate,
    "check": cmd_check,
    "simulate": cmd_simulate,
    "jas-alus": cmd_jas_alus,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="threephase", description="Three-phase design-based estimation.")
    parser.add_argument("command", help=f"one of {', '.join(COMMANDS)}")
    parser.add_argument("--config", required=True, help="YAML or JSON config file")
    parser.add_argument("--out", help="write the report here instead of stdout")
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(format_json({"error": {"type": kind, "message": message, "exit_code": code}}))
    return code


def run(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        if args.command not in HANDLERS:
            raise UsageError(f"unknown command {args.command!r}; expected one of {', '.join(COMMANDS)}")
        config = RunConfig(args.config)
        body, code = HANDLERS[args.command](config)
    except (UsageError, ConfigError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_USAGE)
    except ThreePhaseError as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_DATA)

    report = {**body, "provenance": config.provenance(args.command)}
    text = format_json(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return code


def main() -> None:
    sys.exit(run())
