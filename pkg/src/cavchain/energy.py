"""Energy-per-unit-mass evaluation and gain-grid energy sweeps.

The measure is the time integral of v * g(vdot + p(v)) with g(x) = max(0, x)
and resistance p(v) = a_r + c_r*v^2: traction work only, no consumption or
regeneration while braking. ``vdot`` is the realized (post-saturation)
acceleration recorded in the trajectory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace as dc_replace
from multiprocessing import get_context
from typing import Optional, Sequence

import numpy as np

from .model import ChainConfig, ConfigError, ControllerSpec
from .simulate import (CollisionError, LeadProfile, SimSettings, Trajectory,
                       build_equilibrium, simulate)


@dataclass(frozen=True)
class EnergyParams:
    a_r: float = 0.0981     # rolling resistance, m/s^2
    c_r: float = 0.0003     # air drag coefficient, 1/m

    def __post_init__(self):
        if self.a_r < 0.0 or self.c_r < 0.0:
            raise ConfigError("resistance coefficients must be >= 0")


def resistance(v, params: EnergyParams):
    """p(v) = a_r + c_r * v^2, the specific resistance acceleration."""
    return params.a_r + params.c_r * np.square(v)


def cumulative_energy(traj: Trajectory, index: int, params: EnergyParams) -> np.ndarray:
    """Energy per unit mass consumed by one vehicle up to each grid time,
    by trapezoidal integration (J/kg; starts at 0)."""
    i = traj.col(index)
    v = traj.v[:, i]
    integrand = v * np.maximum(0.0, traj.a[:, i] + resistance(v, params))
    dt = np.diff(traj.t)
    w = np.zeros_like(v)
    np.cumsum(0.5 * dt * (integrand[1:] + integrand[:-1]), out=w[1:])
    return w


def total_energy(traj: Trajectory, index: int, params: EnergyParams) -> float:
    return float(cumulative_energy(traj, index, params)[-1])


@dataclass
class EnergyGrid:
    """Energy landscape over ego control gains: final ego and tail energies
    per (beta, beta_b) cell; cells whose simulation collided carry nan and
    are flagged invalid."""

    beta_values: np.ndarray
    beta_b_values: np.ndarray
    w_ego: np.ndarray          # shape (len(beta_b_values), len(beta_values))
    w_tail: np.ndarray
    invalid: np.ndarray
    tail_index: int
    meta: dict


def _with_ego_gains(chain: ChainConfig, beta: float, beta_b: float) -> ChainConfig:
    ego = chain.ego
    spec = ego.controller
    if not isinstance(spec, ControllerSpec):
        raise ConfigError("energy sweep needs a controlled ego vehicle")
    if spec.kind == "ACC" and beta_b > 0.0:
        n = chain.n_behind
        spec = ControllerSpec(kind="ATC", alpha=spec.alpha, beta=beta,
                              beta_b=beta_b, sigma=spec.sigma,
                              backward_links=(-n,))
    elif spec.kind == "ATC" and beta_b == 0.0:
        spec = ControllerSpec(kind="ACC", alpha=spec.alpha, beta=beta,
                              sigma=spec.sigma)
    elif spec.kind in ("ATC", "TC", "CTC"):
        spec = dc_replace(spec, beta=beta, beta_b=beta_b)
    else:
        spec = dc_replace(spec, beta=beta)
    vehicles = list(chain.vehicles)
    vehicles[chain.indices.index(0)] = dc_replace(ego, controller=spec)
    return ChainConfig(vehicles=vehicles, topology=chain.topology,
                       v_star=chain.v_star)


def _sweep_cell(args):
    chain, lead, settings, params, beta, beta_b, backend = args
    varied = _with_ego_gains(chain, beta, beta_b)
    eq = build_equilibrium(varied)
    try:
        traj = simulate(varied, eq, lead, settings, backend=backend)
    except CollisionError:
        return (np.nan, np.nan, True)
    tail = varied.indices[0]
    return (total_energy(traj, 0, params), total_energy(traj, tail, params), False)


def energy_sweep(chain: ChainConfig, lead: LeadProfile, settings: SimSettings,
                 params: EnergyParams, beta_values: Sequence[float],
                 beta_b_values: Sequence[float], workers: int = 1,
                 backend: str = "auto") -> EnergyGrid:
    """One simulation per (beta, beta_b) grid point with the ego gains
    substituted; records the final ego and tail (farthest-behind) energies.
    Cells whose run aborts on a collision are marked invalid, never
    interpolated."""
    betas = np.asarray(list(beta_values), dtype=float)
    beta_bs = np.asarray(list(beta_b_values), dtype=float)
    if betas.size == 0 or beta_bs.size == 0:
        raise ConfigError("energy sweep needs non-empty gain ranges")
    jobs = [(chain, lead, settings, params, float(b), float(bb), backend)
            for bb in beta_bs for b in betas]
    if workers > 1:
        with get_context("fork").Pool(workers) as pool:
            results = pool.map(_sweep_cell, jobs, chunksize=max(1, len(jobs) // (4 * workers)))
    else:
        results = [_sweep_cell(j) for j in jobs]
    w_ego = np.array([r[0] for r in results]).reshape(len(beta_bs), len(betas))
    w_tail = np.array([r[1] for r in results]).reshape(len(beta_bs), len(betas))
    invalid = np.array([r[2] for r in results]).reshape(len(beta_bs), len(betas))
    return EnergyGrid(beta_values=betas, beta_b_values=beta_bs, w_ego=w_ego,
                      w_tail=w_tail, invalid=invalid, tail_index=chain.indices[0],
                      meta={"n_behind": chain.n_behind, "v_star": chain.v_star,
                            "resolution": [len(betas), len(beta_bs)]})


def write_energy_grid_csv(grid: EnergyGrid, path, which: str = "ego",
                          scenario_hash: str = "") -> None:
    """Matrix layout: first column beta_b, remaining columns one per beta."""
    w = grid.w_ego if which == "ego" else grid.w_tail
    with open(path, "w", newline="\n") as f:
        f.write(f"# schema=cavchain-energy-v1 which={which} scenario={scenario_hash}\n")
        f.write("beta_b\\beta," + ",".join(repr(float(b)) for b in grid.beta_values) + "\n")
        for i, bb in enumerate(grid.beta_b_values):
            row = [repr(float(bb))] + [repr(float(x)) for x in w[i]]
            f.write(",".join(row) + "\n")


def write_energy_grid_json(grid: EnergyGrid, path, scenario_hash: str = "") -> None:
    payload = {
        "schema": "cavchain-energy-v1",
        "scenario": scenario_hash,
        "meta": grid.meta,
        "beta": [float(b) for b in grid.beta_values],
        "beta_b": [float(b) for b in grid.beta_b_values],
        "w_ego": [[None if np.isnan(x) else float(x) for x in row] for row in grid.w_ego],
        "w_tail": [[None if np.isnan(x) else float(x) for x in row] for row in grid.w_tail],
        "invalid_cells": int(grid.invalid.sum()),
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def relative_savings(grid: EnergyGrid) -> Optional[dict]:
    """Savings of every beta_b column relative to the beta_b=0 column
    (present only when the sweep includes beta_b=0)."""
    zero = np.where(grid.beta_b_values == 0.0)[0]
    if zero.size == 0:
        return None
    z = zero[0]
    out = {"beta": [float(b) for b in grid.beta_values], "rows": []}
    for i, bb in enumerate(grid.beta_b_values):
        with np.errstate(invalid="ignore", divide="ignore"):
            ego = (grid.w_ego[z] - grid.w_ego[i]) / grid.w_ego[z]
            tail = (grid.w_tail[z] - grid.w_tail[i]) / grid.w_tail[z]
        out["rows"].append({
            "beta_b": float(bb),
            "ego_saving": [None if np.isnan(x) else float(x) for x in ego],
            "tail_saving": [None if np.isnan(x) else float(x) for x in tail],
        })
    return out


__all__ = [
    "EnergyParams", "EnergyGrid", "resistance", "cumulative_energy",
    "total_energy", "energy_sweep", "relative_savings",
    "write_energy_grid_csv", "write_energy_grid_json",
]
