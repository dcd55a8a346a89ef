"""Run configuration: JSON loading, validation, overrides and CSV emission.

A run is described by a single JSON file; every parameter has an explicit
default and the effective (post-default) configuration is echoed into each
output file's provenance header, so no run depends on silent defaults.
CSV output is RFC-4180-style with a '.' decimal separator and 17 significant
digits, and is byte-identical for identical (config, seed).
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .clock import OUConfig
from .duality import (
    EndowmentDensity,
    ScenarioTree,
    binomial_tree,
    make_clock,
    trinomial_tree,
)
from .errors import DomainError
from .strategy import ConsumptionLaw, MarketParams
from .utility import UtilityField

__all__ = [
    "DEFAULT_CONFIG",
    "load_config",
    "apply_overrides",
    "config_digest",
    "emit_csv",
    "market_params",
    "ou_config",
    "utility_field",
    "consumption_law",
    "tree_objects",
    "output_prefix",
]

OUTDIR_ENV = "CLOCKOPT_OUTDIR"

DEFAULT_CONFIG: dict = {
    "market": {"mu": 0.2, "sigma": 1.0, "rho": 0.5, "alpha": 1.0, "beta": 0.5},
    "utility": {"kind": "log", "beta": 0.5, "gamma": None},
    "sim": {
        "dt": 1e-3,
        "t_max": 40.0,
        "n_paths": 10000,
        "seed": 20051501,
        "epsilon": None,
        "workers": 1,
    },
    "clock": {
        "lambda_star": 1.0,
        "normalization": None,
        "bracket": [0.125, 1.0],
        "n_levels": 257,
        "validation_lambdas": [0.5, 2.0],
        "validation_s": [0.25, 0.5, 1.0],
    },
    "hitting": {"lambdas": [1.0, 2.0], "r0s": [0.5, 1.0]},
    "strategy": {"x0": 1.0, "law": "derived_psi_numerator"},
    "tree": {
        "kind": "binomial",
        "depth": 1,
        "u": 2.0,
        "d": 0.5,
        "p_up": 0.5,
        "factors": [2.0, 1.0, 0.5],
        "probs": [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        "s0": 1.0,
        "nodes": None,
        "clock": "terminal",
        "stopping_times": None,
        "endowment": {},
        "x": 1.0,
        "y": 1.0,
        "x_grid": [0.5, 0.75, 1.0, 1.5, 2.0],
        "y_grid": [0.25, 0.5, 1.0, 2.0, 4.0],
        "oracle_grid_points": 13,
        "oracle_refinements": 3,
    },
    "output": "out/clockopt",
}

_REQUIRED_NUMBERS = {
    ("market", "mu"),
    ("market", "sigma"),
    ("market", "rho"),
    ("market", "alpha"),
    ("market", "beta"),
    ("utility", "beta"),
    ("sim", "dt"),
    ("sim", "t_max"),
    ("sim", "n_paths"),
    ("sim", "seed"),
    ("strategy", "x0"),
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> dict:
    """Load, merge with defaults, apply dotted overrides and validate."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        text = Path(path).read_text()
        try:
            user = json.loads(text)
        except json.JSONDecodeError as err:
            raise DomainError(
                f"malformed JSON in {path}: line {err.lineno}, column {err.colno}: "
                f"{err.msg}"
            ) from err
        if not isinstance(user, dict):
            raise DomainError(f"config root must be a JSON object, got {type(user)}")
        cfg = _merge(cfg, user)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    _validate(cfg)
    return cfg


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    """Apply key=value pairs with dotted paths; values parsed as JSON."""
    cfg = copy.deepcopy(cfg)
    for item in overrides:
        if "=" not in item:
            raise DomainError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in target or not isinstance(target[part], dict):
                raise DomainError(f"override path {key!r} does not exist")
            target = target[part]
        target[parts[-1]] = value
    return cfg


def _validate(cfg: dict) -> None:
    for section, name in sorted(_REQUIRED_NUMBERS):
        if section not in cfg or not isinstance(cfg[section], dict):
            raise DomainError(f"missing config section {section!r}")
        value = cfg[section].get(name)
        if value is None or isinstance(value, bool) or not isinstance(value, (int, float)):
            raise DomainError(f"missing or non-numeric config field {section}.{name}")
    kind = cfg["utility"].get("kind")
    if kind not in ("log", "power"):
        raise DomainError(f"utility.kind must be 'log' or 'power', got {kind!r}")
    if kind == "power" and not isinstance(cfg["utility"].get("gamma"), (int, float)):
        raise DomainError("power utility requires a numeric utility.gamma")
    law = cfg["strategy"].get("law")
    if law not in (x.value for x in ConsumptionLaw):
        raise DomainError(f"unknown strategy.law {law!r}")
    workers = cfg["sim"].get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise DomainError(f"sim.workers must be a positive integer, got {workers}")


def config_digest(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def market_params(cfg: dict) -> MarketParams:
    m = cfg["market"]
    return MarketParams(
        mu=float(m["mu"]),
        sigma=float(m["sigma"]),
        rho=float(m["rho"]),
        alpha=float(m["alpha"]),
        beta=float(m["beta"]),
    )


def ou_config(cfg: dict, **replacements) -> OUConfig:
    s = cfg["sim"]
    kwargs = {
        "alpha": float(cfg["market"]["alpha"]),
        "r0": 0.0,
        "dt": float(s["dt"]),
        "t_max": float(s["t_max"]),
        "seed": int(s["seed"]),
    }
    kwargs.update(replacements)
    return OUConfig(**kwargs)


def utility_field(cfg: dict) -> UtilityField:
    u = cfg["utility"]
    gamma = u.get("gamma")
    return UtilityField(
        kind=u["kind"],
        beta=float(u["beta"]),
        gamma=None if gamma is None else float(gamma),
    )


def consumption_law(cfg: dict) -> ConsumptionLaw:
    return ConsumptionLaw(cfg["strategy"]["law"])


def tree_objects(cfg: dict):
    """Build (tree, clock, endowment) from the tree section."""
    t = cfg["tree"]
    kind = t.get("kind", "binomial")
    if t.get("nodes"):
        tree = ScenarioTree.from_nodes(t["nodes"])
    elif kind == "binomial":
        tree = binomial_tree(
            depth=int(t["depth"]), u=float(t["u"]), d=float(t["d"]),
            p_up=float(t["p_up"]), s0=float(t["s0"]),
        )
    elif kind == "trinomial":
        tree = trinomial_tree(
            depth=int(t["depth"]), factors=tuple(t["factors"]),
            probs=tuple(t["probs"]), s0=float(t["s0"]),
        )
    else:
        raise DomainError(f"unknown tree.kind {kind!r}")
    clock = make_clock(tree, t.get("clock", "terminal"), t.get("stopping_times"))
    e_values = np.zeros(tree.n_nodes)
    for key, value in (t.get("endowment") or {}).items():
        node = int(key)
        if not (0 <= node < tree.n_nodes):
            raise DomainError(f"endowment node {node} outside the tree")
        e_values[node] = float(value)
    return tree, clock, EndowmentDensity(values=e_values)


def output_prefix(cfg: dict) -> Path:
    prefix = Path(cfg.get("output", "out/clockopt"))
    outdir = os.environ.get(OUTDIR_ENV)
    if outdir and not prefix.is_absolute():
        prefix = Path(outdir) / prefix
    prefix.parent.mkdir(parents=True, exist_ok=True)
    return prefix


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    text = str(value)
    if any(ch in text for ch in (",", '"', "\n")):
        text = '"' + text.replace('"', '""') + '"'
    return text


def emit_csv(path: str | Path, rows: list[dict], schema: list[str], cfg: dict) -> Path:
    """Write rows under a '#' provenance header; byte-deterministic."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"# sha256={config_digest(cfg)} seed={cfg['sim']['seed']}",
        "# config=" + json.dumps(cfg, sort_keys=True, separators=(",", ":")),
        ",".join(schema),
    ]
    for row in rows:
        missing = [k for k in schema if k not in row]
        if missing:
            raise DomainError(f"row is missing schema fields {missing}")
        lines.append(",".join(_format_value(row[k]) for k in schema))
    path.write_text("\r\n".join(lines) + "\r\n")
    return path
