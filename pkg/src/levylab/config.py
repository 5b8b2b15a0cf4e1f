"""Scenario configuration: a YAML key-value tree with includes and strict
unknown-key rejection (silent typos corrupt experiments)."""

from __future__ import annotations

from pathlib import Path

import yaml


class ConfigError(ValueError):
    pass


_GRID = {"n": int, "points_per_dim": int, "side_length": float}
_KERNEL = {
    "profile": str, "alpha": float, "delta": float,
    "cbar1": float, "cbar2": float, "amplitude": float,
}
_MORREY = {"q": float, "a": float, "local": bool}
_DRIFT = {
    "kind": str, "corr_scale": float, "amplitude": float, "time_nodes": int,
    "horizon": float, "envelope": str, "target_norm": float,
    "mollify_epsilon": float, "morrey": _MORREY,
}
_THETA0 = {
    "kind": str, "amplitude": float, "offset": float, "corr_scale": float,
    "exponent": float, "octaves": int, "mode": list, "value": float,
    "width": float,
}
_SOLVER = {
    "scheme": str, "epsilon_visc": float, "dt": float, "horizon": float,
    "picard_tol": float, "max_iters": int, "store_every": int,
}
_MOLX = {
    "enabled": bool, "gamma": float, "omega": float, "q": float, "mu": float,
    "r_list": list, "T0": float, "eps_step": float, "dt": float,
    "grid_side_length": float,
}
_PROBE = {
    "enabled": bool, "gamma": float, "omega": float, "zeta": float,
    "t_probe": float, "center_stride": int,
}
SCHEMA = {
    "include": list,
    "seed": int,
    "output_dir": str,
    "grid": _GRID,
    "kernel": _KERNEL,
    "drift": _DRIFT,
    "theta0": _THETA0,
    "solver": _SOLVER,
    "verifiers": list,
    "positivity_level": float,
    "molecule_lab": _MOLX,
    "holder_probe": _PROBE,
}

KNOWN_VERIFIERS = (
    "symbol-bounds",
    "max-principle",
    "positivity",
    "stroock-varopoulos",
    "besov-chain",
    "transfer",
)

DEFAULTS = {
    "seed": 0,
    "output_dir": "levylab-out",
    "grid": {"n": 2, "points_per_dim": 64, "side_length": 6.283185307179586},
    "kernel": {"profile": "two-exponent", "alpha": 0.8, "delta": 0.6,
               "cbar1": 1.0, "cbar2": 1.0, "amplitude": 1.0},
    "drift": {"kind": "none"},
    "theta0": {"kind": "positive-smooth", "offset": 0.5, "amplitude": 0.4,
               "corr_scale": 0.5},
    "solver": {"scheme": "imex-spectral", "epsilon_visc": 1e-2, "dt": 1e-3,
               "horizon": 0.1, "picard_tol": 1e-10, "max_iters": 60,
               "store_every": 1},
    "verifiers": ["symbol-bounds", "max-principle"],
    "positivity_level": 1.0,
    "molecule_lab": {"enabled": False},
    "holder_probe": {"enabled": False},
}


def _check_keys(tree, schema, path=""):
    if not isinstance(tree, dict):
        raise ConfigError(f"expected a mapping at {path or '<root>'}")
    for key, val in tree.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown configuration key: {where}")
        sub = schema[key]
        if isinstance(sub, dict):
            _check_keys(val, sub, where)


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def _load_tree(path: Path, seen) -> dict:
    path = path.resolve()
    if path in seen:
        raise ConfigError(f"circular include: {path}")
    seen = seen | {path}
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    merged: dict = {}
    for inc in raw.pop("include", []) or []:
        inc_path = (path.parent / inc) if not Path(inc).is_absolute() else Path(inc)
        merged = _deep_merge(merged, _load_tree(inc_path, seen))
    return _deep_merge(merged, raw)


def load_config(source) -> dict:
    """Load, merge includes, validate keys and apply defaults."""
    if isinstance(source, (str, Path)):
        tree = _load_tree(Path(source), frozenset())
    else:
        tree = dict(source)
        tree.pop("include", None)
    _check_keys(tree, SCHEMA)
    cfg = _deep_merge(DEFAULTS, tree)
    for name in cfg.get("verifiers", []):
        if name not in KNOWN_VERIFIERS:
            raise ConfigError(
                f"verifiers: unknown verifier {name!r} (known: {', '.join(KNOWN_VERIFIERS)})"
            )
    _validate_values(cfg)
    return cfg


def _validate_values(cfg: dict):
    g = cfg["grid"]
    if g["points_per_dim"] < 8:
        raise ConfigError("grid.points_per_dim: must be >= 8")
    s = cfg["solver"]
    if s["dt"] <= 0:
        raise ConfigError("solver.dt: must be positive")
    if s["horizon"] <= 0:
        raise ConfigError("solver.horizon: must be positive")
    if s["scheme"] not in ("imex-spectral", "picard-duhamel"):
        raise ConfigError(f"solver.scheme: unknown scheme {s['scheme']!r}")
    d = cfg["drift"]
    if d.get("kind", "none") not in ("none", "stream-function", "spectral-projection", "shear"):
        raise ConfigError(f"drift.kind: unknown generator {d.get('kind')!r}")


def set_by_path(cfg: dict, dotted: str, value) -> dict:
    """Return a copy of cfg with the dotted scalar path replaced."""
    keys = dotted.split(".")
    out = dict(cfg)
    node = out
    for k in keys[:-1]:
        if k not in node or not isinstance(node[k], dict):
            raise ConfigError(f"sweep axis {dotted!r}: missing section {k!r}")
        node[k] = dict(node[k])
        node = node[k]
    leaf = keys[-1]
    if leaf not in node:
        raise ConfigError(f"sweep axis {dotted!r}: unknown field {leaf!r}")
    if isinstance(node[leaf], (dict, list)):
        raise ConfigError(f"sweep axis {dotted!r}: not a scalar field")
    node[leaf] = value
    return out
