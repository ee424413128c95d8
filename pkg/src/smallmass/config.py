"""Experiment configuration: JSON schema, validation, defaults, hashing.

Configs are plain JSON.  Validation is strict: unknown keys are rejected by
name, types are checked, and the validated config is echoed (with its hash)
into every output artifact for provenance.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

import numpy as np

from .basis import DomainSpec, SpectralBasis, build_basis
from .models import (
    ModelSet,
    build_diffusion,
    build_model_set,
    friction_preset,
    load_friction_csv,
    reaction_preset,
)


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


_SCHEMA: dict[str, dict[str, type | tuple]] = {
    "domain": {"length": float, "n_modes": int, "n_nodes": int},
    "model": {
        "friction": str,
        "friction_csv": str,
        "friction_value": float,
        "gamma0": float,
        "gamma1": float,
        "reaction": str,
        "clip_radius": float,
        "diffusion": str,
        "q_exponent": float,
        "tol_inv": float,
    },
    "initial": {"kind": str, "amplitude": float, "coeffs": list, "velocity_coeffs": list},
    "time": {"t_final": float, "dt": float, "dt_limit": float, "c_stab": float, "n_output": int},
    "wave": {"scheme": str, "newton_iters": int},
    "limit": {"form": str, "with_drift": bool},
    "fd": {
        "friction": str,
        "sigma": float,
        "mu": float,
        "dt": float,
        "t_final": float,
        "paths": int,
        "x0": float,
        "v0": float,
        "eta_transform": bool,
    },
    "resolvent": {"n_pairs": int, "lam": float, "lam_ladder": list, "n_smooth": int},
    "ablation": {"mu": float, "ratio_min": float},
    "converge": {"ratio_max": float, "allowed_inversions": int},
}

_TOP_SCALARS: dict[str, type] = {
    "mu_ladder": list,
    "paths": int,
    "seed": int,
    "jobs": int,
}

DEFAULTS: dict[str, Any] = {
    "domain": {"length": 1.0, "n_modes": 32, "n_nodes": 64},
    "model": {
        "friction": "two_plus_sin",
        "reaction": "linear_decay",
        "diffusion": "cosine",
        "q_exponent": 1.0,
        "tol_inv": 1e-12,
    },
    "initial": {"kind": "bump", "amplitude": 1.0},
    "time": {"t_final": 0.5, "dt": 1e-4, "dt_limit": 1e-4, "c_stab": 0.5, "n_output": 200},
    "wave": {"scheme": "eta_form", "newton_iters": 1},
    "limit": {"form": "u", "with_drift": True},
    "fd": {
        "friction": "two_plus_sin",
        "sigma": 1.0,
        "mu": 1e-3,
        "dt": 1e-4,
        "t_final": 1.0,
        "paths": 10000,
        "x0": 0.0,
        "v0": 0.0,
        "eta_transform": False,
    },
    "resolvent": {"n_pairs": 1000, "lam": 0.05, "lam_ladder": [0.1, 0.05, 0.02, 0.01], "n_smooth": 20},
    "ablation": {"mu": 0.01, "ratio_min": 2.0},
    "converge": {"ratio_max": 0.4, "allowed_inversions": 1},
    "mu_ladder": [0.2, 0.1, 0.05, 0.02, 0.01],
    "paths": 64,
    "seed": 12345,
    "jobs": 1,
}


def _check_type(path: str, value, expected) -> Any:
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key '{path}' must be a number, got {value!r}")
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key '{path}' must be an integer, got {value!r}")
        return value
    if expected is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"config key '{path}' must be a boolean, got {value!r}")
        return value
    if expected is str:
        if not isinstance(value, str):
            raise ConfigError(f"config key '{path}' must be a string, got {value!r}")
        return value
    if expected is list:
        if not isinstance(value, list):
            raise ConfigError(f"config key '{path}' must be a list, got {value!r}")
        return value
    raise ConfigError(f"config key '{path}' has unsupported schema type")


def validate_config(raw: dict) -> dict:
    """Strict-merge a raw dict over the defaults; unknown keys are errors."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    cfg = json.loads(json.dumps(DEFAULTS))  # deep copy
    for key, value in raw.items():
        if key in _SCHEMA:
            if not isinstance(value, dict):
                raise ConfigError(f"config key '{key}' must be an object")
            for sub, sval in value.items():
                if sub not in _SCHEMA[key]:
                    raise ConfigError(f"unknown config key '{key}.{sub}'")
                cfg.setdefault(key, {})[sub] = _check_type(f"{key}.{sub}", sval, _SCHEMA[key][sub])
        elif key in _TOP_SCALARS:
            cfg[key] = _check_type(key, value, _TOP_SCALARS[key])
        else:
            raise ConfigError(f"unknown config key '{key}'")
    ladder = cfg["mu_ladder"]
    if not ladder or any(
        isinstance(m, bool) or not isinstance(m, (int, float)) or m <= 0 for m in ladder
    ):
        raise ConfigError("config key 'mu_ladder' must be a list of positive numbers")
    cfg["mu_ladder"] = sorted((float(m) for m in ladder), reverse=True)
    return cfg


def load_config(path) -> dict:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return validate_config(raw)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:16]


# -- assembly -----------------------------------------------------------------


def make_basis(cfg: dict) -> SpectralBasis:
    d = cfg["domain"]
    return build_basis(DomainSpec(length=d["length"], n_modes=d["n_modes"], n_nodes=d["n_nodes"]))


def make_models(cfg: dict, basis: SpectralBasis) -> ModelSet:
    m = cfg["model"]
    if "friction_csv" in m:
        friction = load_friction_csv(m["friction_csv"])
    else:
        kw = {}
        if m["friction"] == "constant" and "friction_value" in m:
            kw["value"] = m["friction_value"]
        if m["friction"] == "bell":
            if "gamma0" in m:
                kw["gamma0"] = m["gamma0"]
            if "gamma1" in m:
                kw["gamma1"] = m["gamma1"]
        friction = friction_preset(m["friction"], **kw)
    rkw = {"clip_radius": m["clip_radius"]} if m["reaction"] == "cubic_clipped" and "clip_radius" in m else {}
    reaction = reaction_preset(m["reaction"], **rkw)
    diffusion = build_diffusion(basis, factor=m["diffusion"], q=m["q_exponent"])
    return build_model_set(basis, friction, reaction, diffusion, tol_inv=m["tol_inv"])


def make_initial(cfg: dict, basis: SpectralBasis) -> tuple[np.ndarray, np.ndarray]:
    """Initial (u0, v0) coefficient vectors from the preset or explicit lists."""
    ic = cfg["initial"]
    kind = ic["kind"]
    amp = float(ic.get("amplitude", 1.0))
    if kind == "coeffs":
        coeffs = np.asarray(ic.get("coeffs", []), dtype=float)
        if coeffs.shape != (basis.n_modes,):
            raise ConfigError(
                f"initial.coeffs must have length n_modes = {basis.n_modes}"
            )
        u0 = amp * coeffs
    elif kind == "zero":
        u0 = np.zeros(basis.n_modes)
    elif kind == "mode1":
        u0 = np.zeros(basis.n_modes)
        u0[0] = amp
    elif kind == "bump":
        x, L = basis.x, basis.length
        profile = 4.0 * x * (L - x) / L**2  # parabolic bump, peak 1 at midpoint
        u0 = amp * basis.analyze(profile)
    else:
        raise ConfigError(f"unknown initial.kind '{kind}'")
    if "velocity_coeffs" in ic:
        v0 = np.asarray(ic["velocity_coeffs"], dtype=float)
        if v0.shape != (basis.n_modes,):
            raise ConfigError(
                f"initial.velocity_coeffs must have length n_modes = {basis.n_modes}"
            )
    else:
        v0 = np.zeros(basis.n_modes)
    return u0, v0
