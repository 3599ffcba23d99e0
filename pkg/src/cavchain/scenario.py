"""Scenario files: the on-disk description of a runnable case study.

A scenario is strict JSON (unknown keys are rejected with their path) whose
defaults all equal the bundled parameter set. The chain may be given as an
explicit vehicle list or through a preset generator; parsing always yields
the same in-memory objects, and ``canonical_dict`` re-emits the fully
explicit form, so parse(emit(parse(f))) == parse(f).

Top-level schema (all sections optional except chain):

    {
      "schema": "cavchain-scenario-v1",
      "name": "fig1a",
      "chain": {
        "topology": "straight" | "ring",
        "v_star": 20.0,
        "vehicles": [ {"index": 1, "kind": "lead"},
                      {"index": 0, "kind": "atc", "alpha": 0.4, "beta": 0.5,
                       "beta_b": 0.2, "delay": 0.6, "backward_links": [-10],
                       "connected": true},
                      {"index": -1, "kind": "hdm"}, ... ]
        # or: "preset": {"name": "atc_chain", "n_followers": 10, ...}
      },
      "lead_profile": [[0.0, 10.0, -1.0], [10.0, 30.0, 0.5]],
      "sim":      {"dt": 0.01, "t_start": 0.0, "t_end": 60.0, "integrator": "euler"},
      "energy":   {"a_r": 0.0981, "c_r": 0.0003},
      "analysis": {"kappa": 0.6, "kappa_h": 0.7, "omega_max": 6.283185307179586,
                   "plant_region": [-3.0, 1.0, 0.0, 6.283185307179586]}
    }

Vehicle keys: index, kind (lead|hdm|cc|acc|ccc|tc|atc|ctc), alpha, beta,
beta_b, delay, v_ref, length, a_min, a_max, connected, forward_links,
backward_links, policy {kind, h_st, h_go, v_max}. For "hdm", alpha/beta/
delay are the human gains and reaction time. Per-kind defaults are the
bundled human and AV parameter sets.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from . import model
from .energy import EnergyParams
from .model import (AccelLimits, ChainConfig, ConfigError, ControllerSpec,
                    HumanGains, RangePolicy, VehicleSpec)
from .simulate import LeadProfile, SimSettings

SCHEMA = "cavchain-scenario-v1"


class ScenarioError(ConfigError):
    """Parse/validation failure; the message carries the offending path."""


@dataclass(frozen=True)
class AnalysisSettings:
    kappa: Optional[float] = model.KAPPA_AV
    kappa_h: Optional[float] = model.KAPPA_HUMAN
    omega_max: float = 2.0 * math.pi
    plant_region: tuple = (-3.0, 1.0, 0.0, 2.0 * math.pi)


@dataclass(frozen=True)
class Scenario:
    name: str
    chain: ChainConfig
    lead: LeadProfile
    settings: SimSettings
    energy: EnergyParams
    analysis: AnalysisSettings


def _reject_unknown(d: dict, allowed, path: str):
    for key in d:
        if key not in allowed:
            raise ScenarioError(f"{path}: unknown key {key!r} "
                                f"(allowed: {sorted(allowed)})")


def _get(d: dict, key: str, default, path: str, types):
    val = d.get(key, default)
    if val is not None and not isinstance(val, types):
        raise ScenarioError(f"{path}.{key}: expected {types}, got {type(val).__name__}")
    return val


_VEHICLE_KEYS = {"index", "kind", "alpha", "beta", "beta_b", "delay", "v_ref",
                 "length", "a_min", "a_max", "connected", "forward_links",
                 "backward_links", "policy"}
_POLICY_KEYS = {"kind", "h_st", "h_go", "v_max"}
_NUM = (int, float)


def _parse_policy(d: Optional[dict], default: RangePolicy, path: str) -> RangePolicy:
    if d is None:
        return default
    _reject_unknown(d, _POLICY_KEYS, path)
    try:
        return RangePolicy(kind=_get(d, "kind", default.kind, path, str),
                           h_st=_get(d, "h_st", default.h_st, path, _NUM),
                           h_go=_get(d, "h_go", default.h_go, path, _NUM),
                           v_max=_get(d, "v_max", default.v_max, path, _NUM))
    except ConfigError as exc:
        raise ScenarioError(f"{path}: {exc}")


def _parse_vehicle(d: dict, path: str) -> VehicleSpec:
    try:
        return _parse_vehicle_inner(d, path)
    except ScenarioError:
        raise
    except ConfigError as exc:
        raise ScenarioError(f"{path}: {exc}")


def _parse_vehicle_inner(d: dict, path: str) -> VehicleSpec:
    _reject_unknown(d, _VEHICLE_KEYS, path)
    if "index" not in d or "kind" not in d:
        raise ScenarioError(f"{path}: vehicle needs 'index' and 'kind'")
    index = _get(d, "index", None, path, int)
    kind = _get(d, "kind", None, path, str).lower()
    length = _get(d, "length", model.VEHICLE_LENGTH, path, _NUM)
    limits = AccelLimits(a_min=_get(d, "a_min", model.A_MIN, path, _NUM),
                         a_max=_get(d, "a_max", model.A_MAX, path, _NUM))
    connected = _get(d, "connected", False, path, bool)

    if kind == "lead":
        return VehicleSpec(index=index, controller=None, length=length,
                           limits=limits, policy=model.AV_POLICY)
    if kind == "hdm":
        gains = HumanGains(alpha_h=_get(d, "alpha", model.ALPHA_HUMAN, path, _NUM),
                           beta_h=_get(d, "beta", model.BETA_HUMAN, path, _NUM),
                           tau=_get(d, "delay", model.TAU_HUMAN, path, _NUM))
        policy = _parse_policy(d.get("policy"), model.HV_POLICY, path + ".policy")
        return VehicleSpec(index=index, controller=gains, length=length,
                           limits=limits, policy=policy, connected=connected)

    kind_up = kind.upper()
    if kind_up not in model.CONTROLLER_KINDS:
        raise ScenarioError(f"{path}.kind: unknown vehicle kind {kind!r}")
    policy = _parse_policy(d.get("policy"), model.AV_POLICY, path + ".policy")
    has_fwd = kind_up in ("ACC", "CCC", "ATC", "CTC")
    fwd_default = [index + 1] if has_fwd else []
    spec = ControllerSpec(
        kind=kind_up,
        alpha=_get(d, "alpha", model.ALPHA_AV if has_fwd else 0.0, path, _NUM),
        beta=d.get("beta", model.BETA_AV),
        beta_b=d.get("beta_b", model.BETA_BACKWARD
                     if kind_up in ("TC", "ATC", "CTC") else 0.0),
        sigma=_get(d, "delay", model.SIGMA_AV, path, _NUM),
        v_ref=_get(d, "v_ref", None, path, _NUM),
        forward_links=d.get("forward_links", fwd_default),
        backward_links=d.get("backward_links", []))
    return VehicleSpec(index=index, controller=spec, length=length,
                       limits=limits, policy=policy, connected=connected)


_PRESET_KEYS = {"name", "n_followers", "alpha", "beta", "beta_b", "v_ref"}


def _expand_preset(d: dict, v_star: float, path: str) -> tuple:
    _reject_unknown(d, _PRESET_KEYS, path)
    name = _get(d, "name", None, path, str)
    n = _get(d, "n_followers", 10, path, int)
    if name == "hv_chain":
        return model.hv_chain(n, v_star=v_star).vehicles
    if name == "acc_chain":
        return model.acc_chain(n, v_star=v_star,
                               alpha=d.get("alpha", model.ALPHA_AV),
                               beta=d.get("beta", model.BETA_AV)).vehicles
    if name == "atc_chain":
        return model.atc_chain(n, v_star=v_star,
                               alpha=d.get("alpha", model.ALPHA_AV),
                               beta=d.get("beta", model.BETA_AV),
                               beta_b=d.get("beta_b", model.BETA_BACKWARD)).vehicles
    if name == "tc_chain":
        return model.tc_chain(n, v_star=v_star,
                              beta=d.get("beta", model.BETA_AV),
                              beta_b=d.get("beta_b", model.BETA_BACKWARD),
                              v_ref=d.get("v_ref")).vehicles
    if name == "ring_hv":
        return model.ring_hv_chain(n, v_star=v_star).vehicles
    raise ScenarioError(f"{path}.name: unknown preset {name!r}")


def parse_scenario(source: Union[str, Path, dict], name: str = "") -> Scenario:
    """Parse a scenario from a path, JSON text, or an already-loaded dict."""
    if isinstance(source, dict):
        data = source
    else:
        p = Path(source)
        try:
            text = p.read_text() if p.exists() else str(source)
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario file {source}: {exc}")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ScenarioError("scenario root must be a JSON object")
    _reject_unknown(data, {"schema", "name", "chain", "lead_profile", "sim",
                           "energy", "analysis"}, "$")
    schema = _get(data, "schema", SCHEMA, "$", str)
    if schema != SCHEMA:
        raise ScenarioError(f"$.schema: expected {SCHEMA!r}, got {schema!r}")

    chain_d = _get(data, "chain", None, "$", dict)
    if chain_d is None:
        raise ScenarioError("$.chain: required section missing")
    _reject_unknown(chain_d, {"topology", "v_star", "vehicles", "preset"}, "$.chain")
    v_star = float(_get(chain_d, "v_star", 20.0, "$.chain", _NUM))
    topology = _get(chain_d, "topology", "straight", "$.chain", str)
    if "vehicles" in chain_d and "preset" in chain_d:
        raise ScenarioError("$.chain: give either 'vehicles' or 'preset', not both")
    if "preset" in chain_d:
        vehicles = _expand_preset(chain_d["preset"], v_star, "$.chain.preset")
    elif "vehicles" in chain_d:
        lst = chain_d["vehicles"]
        if not isinstance(lst, list):
            raise ScenarioError("$.chain.vehicles: expected a list")
        vehicles = sorted((_parse_vehicle(v, f"$.chain.vehicles[{i}]")
                           for i, v in enumerate(lst)), key=lambda v: v.index)
    else:
        raise ScenarioError("$.chain: needs 'vehicles' or 'preset'")
    try:
        chain = ChainConfig(vehicles=vehicles, topology=topology, v_star=v_star)
    except ConfigError as exc:
        raise ScenarioError(f"$.chain: {exc}")

    prof = data.get("lead_profile", [[0.0, 10.0, -1.0], [10.0, 30.0, 0.5]])
    if not isinstance(prof, list) or not all(
            isinstance(seg, list) and len(seg) == 3 for seg in prof):
        raise ScenarioError("$.lead_profile: expected a list of [t0, t1, accel]")
    try:
        lead = LeadProfile(segments=tuple(tuple(seg) for seg in prof))
    except ConfigError as exc:
        raise ScenarioError(f"$.lead_profile: {exc}")

    sim_d = _get(data, "sim", {}, "$", dict) or {}
    _reject_unknown(sim_d, {"dt", "t_start", "t_end", "integrator"}, "$.sim")
    try:
        settings = SimSettings(dt=_get(sim_d, "dt", 0.01, "$.sim", _NUM),
                               t_start=_get(sim_d, "t_start", 0.0, "$.sim", _NUM),
                               t_end=_get(sim_d, "t_end", 60.0, "$.sim", _NUM),
                               integrator=_get(sim_d, "integrator", "euler", "$.sim", str))
    except ConfigError as exc:
        raise ScenarioError(f"$.sim: {exc}")

    en_d = _get(data, "energy", {}, "$", dict) or {}
    _reject_unknown(en_d, {"a_r", "c_r"}, "$.energy")
    energy = EnergyParams(a_r=_get(en_d, "a_r", 0.0981, "$.energy", _NUM),
                          c_r=_get(en_d, "c_r", 0.0003, "$.energy", _NUM))

    an_d = _get(data, "analysis", {}, "$", dict) or {}
    _reject_unknown(an_d, {"kappa", "kappa_h", "omega_max", "plant_region"},
                    "$.analysis")
    region = an_d.get("plant_region", [-3.0, 1.0, 0.0, 2.0 * math.pi])
    if not (isinstance(region, list) and len(region) == 4):
        raise ScenarioError("$.analysis.plant_region: expected [re0, re1, im0, im1]")
    analysis = AnalysisSettings(
        kappa=_get(an_d, "kappa", model.KAPPA_AV, "$.analysis", _NUM),
        kappa_h=_get(an_d, "kappa_h", model.KAPPA_HUMAN, "$.analysis", _NUM),
        omega_max=_get(an_d, "omega_max", 2.0 * math.pi, "$.analysis", _NUM),
        plant_region=tuple(float(x) for x in region))

    return Scenario(name=_get(data, "name", name, "$", str), chain=chain,
                    lead=lead, settings=settings, energy=energy,
                    analysis=analysis)


def _vehicle_dict(v: VehicleSpec) -> dict:
    d = {"index": v.index, "length": v.length, "a_min": v.limits.a_min,
         "a_max": v.limits.a_max}
    if v.controller is None:
        d["kind"] = "lead"
        return d
    d["connected"] = v.connected
    d["policy"] = {"kind": v.policy.kind, "h_st": v.policy.h_st,
                   "h_go": v.policy.h_go, "v_max": v.policy.v_max}
    if isinstance(v.controller, HumanGains):
        d.update(kind="hdm", alpha=v.controller.alpha_h,
                 beta=v.controller.beta_h, delay=v.controller.tau)
        return d
    c = v.controller
    d.update(kind=c.kind.lower(), alpha=c.alpha, delay=c.sigma,
             forward_links=list(c.forward_links),
             backward_links=list(c.backward_links))
    d["beta"] = list(c.beta) if isinstance(c.beta, (list, tuple)) else c.beta
    d["beta_b"] = list(c.beta_b) if isinstance(c.beta_b, (list, tuple)) else c.beta_b
    if c.v_ref is not None:
        d["v_ref"] = c.v_ref
    return d


def canonical_dict(sc: Scenario) -> dict:
    return {
        "schema": SCHEMA,
        "name": sc.name,
        "chain": {
            "topology": sc.chain.topology,
            "v_star": sc.chain.v_star,
            "vehicles": [_vehicle_dict(v) for v in sc.chain.vehicles],
        },
        "lead_profile": [list(seg) for seg in sc.lead.segments],
        "sim": {"dt": sc.settings.dt, "t_start": sc.settings.t_start,
                "t_end": sc.settings.t_end, "integrator": sc.settings.integrator},
        "energy": {"a_r": sc.energy.a_r, "c_r": sc.energy.c_r},
        "analysis": {"kappa": sc.analysis.kappa, "kappa_h": sc.analysis.kappa_h,
                     "omega_max": sc.analysis.omega_max,
                     "plant_region": list(sc.analysis.plant_region)},
    }


def emit_scenario(sc: Scenario) -> str:
    return json.dumps(canonical_dict(sc), indent=2, sort_keys=True) + "\n"


def scenario_hash(sc: Scenario) -> str:
    blob = json.dumps(canonical_dict(sc), sort_keys=True,
                      separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def bundled_names() -> list:
    return sorted(p.name[:-5] for p in resources.files("cavchain.scenarios").iterdir()
                  if p.name.endswith(".json"))


def load_scenario(name_or_path: Union[str, Path]) -> Scenario:
    """Load a scenario from a file path or a bundled scenario name."""
    p = Path(name_or_path)
    if p.exists():
        return parse_scenario(p, name=p.stem)
    ref = resources.files("cavchain.scenarios") / f"{name_or_path}.json"
    if ref.is_file():
        return parse_scenario(json.loads(ref.read_text()), name=str(name_or_path))
    raise ScenarioError(f"no such scenario file or bundled name: {name_or_path} "
                        f"(bundled: {', '.join(bundled_names())})")


__all__ = ["SCHEMA", "Scenario", "ScenarioError", "AnalysisSettings",
           "parse_scenario", "canonical_dict", "emit_scenario",
           "scenario_hash", "load_scenario", "bundled_names"]
