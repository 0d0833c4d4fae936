"""
Command-line entry point of the lab.

  python cli.py run --scenario smooth
  python cli.py minimize1d --scenario flat --set weighted1d.rho=200
  python cli.py predict --scenario rect-crossover --input candidates.json
  python cli.py plots --out runs/smooth

Scenarios live in config.yaml; `defaults` are merged under every scenario.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import yaml

from orchestrator import STAGES, StageError, run_scenario
from plots import emit_plots
from potential import POTENTIAL_BUILDERS
from results import ResultStore, config_hash

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = Path(__file__).with_name("config.yaml")

# keys a scenario must carry for each stage it lists
STAGE_KEYS = {
    "iso": ("domain",),
    "weight": ("weight", "geometry"),
    "minimize1d": ("ladder",),
    "predict": ("geometry",),
    "dynamics": ("dynamics",),
}


class ConfigError(ValueError):
    """Raised for a missing or malformed config entry; the message names the dotted key."""


# ============ CONFIG ============

def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def apply_override(config: Dict[str, Any], assignment: str) -> Dict[str, Any]:
    """Set section.key=value in place; the value is parsed as YAML."""
    if "=" not in assignment:
        raise ConfigError(f"override '{assignment}': expected section.key=value")
    dotted, raw = assignment.split("=", 1)
    keys = dotted.strip().split(".")
    node = config
    for key in keys[:-1]:
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise ConfigError(f"{dotted}: '{key}' is not a section")
        node = child
    node[keys[-1]] = yaml.safe_load(raw)
    return config


def validate_scenario(name: str, cfg: Dict[str, Any]) -> None:
    where = f"scenarios.{name}"
    pot = cfg.get("potential")
    if not isinstance(pot, dict):
        raise ConfigError(f"{where}.potential: missing or not a mapping")
    if pot.get("kind", "quartic") not in POTENTIAL_BUILDERS:
        raise ConfigError(f"{where}.potential.kind: unknown '{pot.get('kind')}' "
                          f"(choose from {sorted(POTENTIAL_BUILDERS)})")

    stages = cfg.get("stages")
    if not isinstance(stages, list) or not stages:
        raise ConfigError(f"{where}.stages: expected a non-empty list")
    for i, stage in enumerate(stages):
        if stage not in STAGES:
            raise ConfigError(f"{where}.stages[{i}]: unknown stage '{stage}' (choose from {sorted(STAGES)})")
        for key in STAGE_KEYS.get(stage, ()):
            if key not in cfg:
                raise ConfigError(f"{where}.{key}: required by stage '{stage}'")

    if "ladder" in cfg:
        ladder = cfg["ladder"]
        if not isinstance(ladder, list) or not all(isinstance(e, (int, float)) and e > 0 for e in ladder):
            raise ConfigError(f"{where}.ladder: expected a list of positive numbers")
    vm = cfg.get("geometry", {}).get("vm")
    if vm is not None and not 0.0 < float(vm) < 1.0:
        raise ConfigError(f"{where}.geometry.vm: must lie in (0, 1), got {vm}")
    if not isinstance(cfg.get("seed", 0), int):
        raise ConfigError(f"{where}.seed: expected an integer")


def load_config(path: Path = DEFAULT_CONFIG, overrides: Sequence[str] = ()) -> Dict[str, Any]:
    """
    Read config.yaml, merge `defaults` under each scenario, apply overrides and
    validate. Returns {"defaults": ..., "scenarios": {name: merged block}}.
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc

    if not isinstance(raw, dict) or not isinstance(raw.get("scenarios"), dict):
        raise ConfigError("scenarios: missing or not a mapping")
    defaults = raw.get("defaults") or {}
    if not isinstance(defaults, dict):
        raise ConfigError("defaults: expected a mapping")

    scenarios = {}
    for name, block in raw["scenarios"].items():
        if not isinstance(block, dict):
            raise ConfigError(f"scenarios.{name}: expected a mapping")
        merged = deep_merge(defaults, block)
        merged["name"] = name
        for assignment in overrides:
            apply_override(merged, assignment)
        validate_scenario(name, merged)
        scenarios[name] = merged
    logger.debug(f"[Config] {path}: {len(scenarios)} scenarios")
    return {"defaults": defaults, "scenarios": scenarios}


def scenario_config(config: Dict[str, Any], name: str) -> Dict[str, Any]:
    if name not in config["scenarios"]:
        raise ConfigError(f"scenarios.{name}: no such scenario (have {sorted(config['scenarios'])})")
    return copy.deepcopy(config["scenarios"][name])


# ============ SUBCOMMANDS ============

def stage_chain(command: str, scenario: Dict[str, Any]) -> List[str]:
    """Stages a single subcommand needs, prerequisites first."""
    weight = ["weight"]
    if scenario.get("weight", {}).get("source") == "touching":
        weight = ["iso", "weight"]
    chains = {
        "constants": ["constants"],
        "profile": ["constants", "plots"],
        "iso": ["iso", "plots"],
        "weight": weight + ["plots"],
        "minimize1d": ["constants"] + weight + ["minimize1d", "plots"],
        "predict": ["predict"],
        "dynamics": ["dynamics", "plots"],
    }
    return scenario["stages"] if command == "run" else chains[command]


def _predict_input(path: str) -> List[Dict[str, Any]]:
    try:
        specs = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"--input {path}: {exc}") from exc
    if not isinstance(specs, list) or not all(isinstance(s, dict) for s in specs):
        raise ConfigError(f"--input {path}: expected a JSON list of geometries")
    for i, spec in enumerate(specs):
        for key in ("kappa", "perimeter"):
            if key not in spec:
                raise ConfigError(f"--input {path}: [{i}].{key} missing")
    return [dict(spec, kind=spec.get("kind", "custom")) for spec in specs]


def run_command(args: argparse.Namespace) -> int:
    if args.command == "plots":
        store = ResultStore(args.out)
        written = emit_plots(store)
        print(f"Wrote {len(written)} plots to {store.plots_dir}")
        return 0

    config = load_config(args.config, args.set)
    scenario = scenario_config(config, args.scenario)
    if args.seed is not None:
        scenario["seed"] = args.seed
    if args.command == "predict" and args.input:
        scenario.setdefault("geometry", {})["candidates"] = _predict_input(args.input)
    scenario["stages"] = stage_chain(args.command, scenario)
    validate_scenario(args.scenario, scenario)

    out = Path(args.out) if args.out else Path(scenario.get("out", "runs")) / args.scenario
    logger.info(f"[Run] {args.command} {args.scenario} -> {out} (config {config_hash(scenario)[:12]})")
    store = run_scenario(scenario, out, threads=args.threads)

    if args.command == "predict":
        print(json.dumps(store.require("predict"), indent=2, sort_keys=True))
    else:
        print(f"Results written to '{store.root}'.")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=str(DEFAULT_CONFIG), help="Scenario YAML file")
    common.add_argument("--out", default=None, help="Output directory (default: <out>/<scenario>)")
    common.add_argument("--seed", type=int, default=None, help="Override the scenario seed")
    common.add_argument("--threads", type=int, default=1, help="Worker threads for enumeration and ladders")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="Override one config entry (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(description="Second-order phase-field laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "constants": "Profile constants and potential checks",
        "profile": "Transition profile table and plot",
        "iso": "Isoperimetric profile and one-sided derivatives",
        "weight": "Touching function and weight eta",
        "minimize1d": "Weighted 1D minimizers along the eps-ladder",
        "predict": "Rank first-order minimizers by the second-order term",
        "dynamics": "Slow-motion runs of the conserved flows",
        "run": "Every stage a scenario declares",
    }
    for name, text in helps.items():
        cmd = sub.add_parser(name, parents=[common], help=text)
        cmd.add_argument("--scenario", default="smooth", help="Scenario name in the config")
        if name == "predict":
            cmd.add_argument("--input", default=None,
                             help="JSON list of {kappa, perimeter[, n, vm, label]} candidates")
    sub.add_parser("plots", parents=[common], help="Render SVG plots from an existing store")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "plots" and not args.out:
        logger.error("[Config] plots needs --out pointing at a run directory")
        return 2
    try:
        return run_command(args)
    except ConfigError as exc:
        logger.error(f"[Config] {exc}")
        return 2
    except StageError as exc:
        logger.error(f"[Failed] {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
