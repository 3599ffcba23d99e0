"""Command-line front end.

Subcommands: simulate, energy, chart, roots, freqresp. Every command reads
one scenario (a file path or a bundled name), writes deterministic CSV/JSON
(and optionally SVG) outputs under --out, and honors the exit-code contract:

    0  success
    1  input error (parse/validation)
    2  physical abort (collision)
    3  numerical non-convergence

Ranges on the command line are "lo:hi" or "lo:hi:step".
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace as dc_replace
from pathlib import Path

import numpy as np

from . import model
from .energy import (energy_sweep, relative_savings, total_energy,
                     write_energy_grid_csv, write_energy_grid_json)
from .freqdomain import HeadToTailConfig, config_from_chain, head_to_tail
from .model import ConfigError
from .scenario import Scenario, ScenarioError, load_scenario, scenario_hash
from .simulate import (CollisionError, build_equilibrium, simulate,
                       write_trajectory_csv)
from .stability import Rect, build_chart, find_roots, _plant_char_fns
from .svg import chart_svg

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_COLLISION = 2
EXIT_NONCONVERGED = 3


def _parse_range(text: str, name: str):
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise ScenarioError(f"--{name}: expected lo:hi or lo:hi:step, got {text!r}")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ScenarioError(f"--{name}: non-numeric bound in {text!r}")
    lo, hi = vals[0], vals[1]
    step = vals[2] if len(vals) == 3 else None
    if hi < lo:
        raise ScenarioError(f"--{name}: hi < lo in {text!r}")
    return lo, hi, step


def _range_values(text: str, name: str, default_step: float) -> np.ndarray:
    lo, hi, step = _parse_range(text, name)
    step = step or default_step
    n = int(round((hi - lo) / step)) if hi > lo else 0
    return lo + np.arange(n + 1) * step


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _analysis_config(sc: Scenario, n_followers=None) -> HeadToTailConfig:
    cfg = config_from_chain(sc.chain, kappa=sc.analysis.kappa,
                            kappa_h=sc.analysis.kappa_h)
    if n_followers is not None and n_followers != cfg.n_followers:
        link = cfg.humans[0] if cfg.humans else None
        if link is None:
            raise ConfigError("--n-followers needs a chain with human followers")
        cfg = dc_replace(cfg, humans=(link,) * n_followers)
    return cfg


def _summary(traj, sc: Scenario) -> dict:
    per_vehicle = []
    for i, (idx, kind) in enumerate(zip(traj.indices, traj.kinds)):
        entry = {"index": idx, "kind": kind,
                 "v_min": float(traj.v[:, i].min()),
                 "v_max": float(traj.v[:, i].max()),
                 "speed_floored": bool(traj.floored[i])}
        if i + 1 < len(traj.indices) or sc.chain.topology == "ring":
            try:
                entry["h_min"] = float(traj.headway(idx).min())
            except ConfigError:
                pass
        per_vehicle.append(entry)
    return {
        "schema": "cavchain-summary-v1",
        "scenario": scenario_hash(sc),
        "name": sc.name,
        "v_star": sc.chain.v_star,
        "t_end_reached": float(traj.t[-1]),
        "collision": None if traj.collision is None else {
            "time": traj.collision.time,
            "rear_index": traj.collision.rear_index,
            "front_index": traj.collision.front_index},
        "vehicles": per_vehicle,
    }


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario)
    out = _out_dir(args)
    eq = build_equilibrium(sc.chain)
    code = EXIT_OK
    try:
        traj = simulate(sc.chain, eq, sc.lead, sc.settings)
    except CollisionError as exc:
        traj = exc.trajectory
        code = EXIT_COLLISION
    write_trajectory_csv(traj, out / "trajectory.csv", scenario_hash(sc))
    summary = _summary(traj, sc)
    summary["energy"] = {str(idx): total_energy(traj, idx, sc.energy)
                         for idx in traj.indices}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out / 'trajectory.csv'} and summary.json "
          f"({'collision' if code else 'ok'})")
    return code


def cmd_energy(args) -> int:
    sc = load_scenario(args.scenario)
    out = _out_dir(args)
    chain = sc.chain
    if args.n_followers is not None:
        ego = chain.ego.controller
        if not hasattr(ego, "kind") or ego.kind not in ("ACC", "ATC"):
            raise ConfigError("--n-followers rebuild needs an ACC/ATC ego")
        beta_b = ego.backward_gains[0] if ego.kind == "ATC" else 0.0
        builder = model.atc_chain if ego.kind == "ATC" else model.acc_chain
        kw = dict(alpha=ego.alpha, beta=ego.forward_gains[0], sigma=ego.sigma)
        if ego.kind == "ATC":
            kw["beta_b"] = beta_b
        chain = builder(args.n_followers, v_star=chain.v_star, **kw)
    betas = _range_values(args.beta_range, "beta-range", 0.05)
    beta_bs = _range_values(args.betab_range, "betab-range", 0.01)
    grid = energy_sweep(chain, sc.lead, sc.settings, sc.energy,
                        betas, beta_bs, workers=args.workers)
    h = scenario_hash(sc)
    write_energy_grid_csv(grid, out / "energy_ego.csv", "ego", h)
    write_energy_grid_csv(grid, out / "energy_tail.csv", "tail", h)
    write_energy_grid_json(grid, out / "energy.json", h)
    savings = relative_savings(grid)
    if savings is not None:
        (out / "savings.json").write_text(
            json.dumps(savings, indent=2, sort_keys=True) + "\n")
    n_bad = int(grid.invalid.sum())
    print(f"energy grid {len(betas)}x{len(beta_bs)} written to {out} "
          f"({n_bad} invalid cells)")
    return EXIT_OK


_PLANES = {"beta-alpha": ("beta", "alpha"), "beta-betab": ("beta", "beta_b")}


def cmd_chart(args) -> int:
    sc = load_scenario(args.scenario)
    out = _out_dir(args)
    plane = _PLANES[args.plane]
    base = _analysis_config(sc, args.n_followers)
    if plane == ("beta", "beta_b") and base.kind != "ATC":
        base = dc_replace(base, kind="ATC")   # the plane sweeps beta_b
    if args.alpha is not None:
        if plane != ("beta", "beta_b"):
            raise ConfigError("--alpha fixes the headway gain of the "
                              "(beta, beta_b) plane only")
        base = dc_replace(base, alpha=args.alpha)
    lo, hi, _ = _parse_range(args.beta_range, "beta-range")
    x_range = (lo, hi)
    ytext = args.alpha_range if plane == ("beta", "alpha") else args.betab_range
    lo, hi, _ = _parse_range(ytext, "alpha-range/betab-range")
    y_range = (lo, hi)
    chart = build_chart(base, plane, x_range, y_range, args.resolution,
                        omega_max=args.omega_max, workers=args.workers)

    h = scenario_hash(sc)
    with open(out / "chart_cells.csv", "w", newline="\n") as f:
        f.write(f"# schema=cavchain-chart-v1 scenario={h} kind={base.kind} "
                f"n={base.n_followers}\n")
        f.write(f"{plane[0]},{plane[1]},class\n")
        for j, y in enumerate(chart.y_centers):
            for i, x in enumerate(chart.x_centers):
                f.write(f"{float(x)!r},{float(y)!r},{int(chart.classes[j, i])}\n")
    for i, curve in enumerate(chart.curves):
        path = out / f"boundary_{i:02d}_{curve.kind}.csv"
        with open(path, "w", newline="\n") as f:
            f.write(f"# schema=cavchain-boundary-v1 scenario={h} kind={curve.kind} "
                    f"K={curve.wavenumber} k={curve.k_index} skipped={curve.skipped}\n")
            f.write(f"param,{plane[0]},{plane[1]}\n")
            for p, (x, y) in zip(curve.samples, curve.points):
                f.write(f"{float(p)!r},{float(x)!r},{float(y)!r}\n")
    if args.svg:
        (out / "chart.svg").write_text(chart_svg(chart))
    indet = int((chart.classes == -1).sum())
    print(f"chart {args.resolution}x{args.resolution} ({base.kind}, N={base.n_followers}) "
          f"written to {out}; {chart.stable_cell_count()} string-stable cells"
          + (f", {indet} indeterminate" if indet else ""))
    return EXIT_NONCONVERGED if indet else EXIT_OK


def cmd_roots(args) -> int:
    sc = load_scenario(args.scenario)
    out = _out_dir(args)
    cfg = _analysis_config(sc, args.n_followers)
    if args.rectangle:
        parts = [float(x) for x in args.rectangle.split(":")]
        if len(parts) != 4:
            raise ScenarioError("--rectangle: expected re0:re1:im0:im1")
        region = Rect(*parts)
    else:
        region = Rect(*sc.analysis.plant_region)
    search = Rect(region.re0, region.re1, -region.im1, region.im1)
    roots, unconverged = [], 0
    for fn in _plant_char_fns(cfg):
        res = find_roots(fn, search)
        unconverged += 0 if res.converged else 1
        roots.extend(r for r in res.roots if r.imag >= -1e-12)
    roots.sort(key=lambda r: -r.real)
    rightmost = roots[0] if roots else None
    stable = unconverged == 0 and all(r.real < 0.0 for r in roots)
    payload = {
        "schema": "cavchain-roots-v1",
        "scenario": scenario_hash(sc),
        "region": [region.re0, region.re1, region.im0, region.im1],
        "plant_stable": stable,
        "rightmost": None if rightmost is None else
            {"re": rightmost.real, "im": rightmost.imag},
        "roots": [{"re": r.real, "im": r.imag} for r in roots],
    }
    (out / "roots.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"{len(roots)} roots written to {out / 'roots.json'} "
          f"(plant {'stable' if stable else 'unstable'})")
    return EXIT_NONCONVERGED if unconverged else EXIT_OK


def cmd_freqresp(args) -> int:
    sc = load_scenario(args.scenario)
    out = _out_dir(args)
    cfg = _analysis_config(sc, args.n_followers)
    omegas = np.linspace(0.0, args.omega_max, args.resolution + 1)
    g = np.asarray(head_to_tail(cfg, 1j * omegas))
    with open(out / "freqresp.csv", "w", newline="\n") as f:
        f.write(f"# schema=cavchain-freqresp-v1 scenario={scenario_hash(sc)} "
                f"kind={cfg.kind} n={cfg.n_followers}\n")
        f.write("omega,re_g,im_g,abs_g\n")
        for om, gv in zip(omegas, g):
            f.write(f"{float(om)!r},{float(gv.real)!r},{float(gv.imag)!r},"
                    f"{float(abs(gv))!r}\n")
    print(f"frequency response ({len(omegas)} points) written to "
          f"{out / 'freqresp.csv'}; max |G| = {np.abs(g).max():.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cavchain",
        description="Simulation, energy and stability analysis of mixed "
                    "human/automated/connected vehicle chains.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", required=True,
                        help="scenario file path or bundled name")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        sp.add_argument("--n-followers", type=int, default=None,
                        help="override the number of vehicles behind the ego")

    sp = sub.add_parser("simulate", help="integrate the chain, write "
                                         "trajectory CSV + summary JSON")
    common(sp)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("energy", help="gain-grid energy sweep")
    common(sp)
    sp.add_argument("--beta-range", default="0.5:0.5")
    sp.add_argument("--betab-range", default="0:0.4")
    sp.set_defaults(fn=cmd_energy)

    sp = sub.add_parser("chart", help="stability chart over a gain plane")
    common(sp)
    sp.add_argument("--plane", choices=sorted(_PLANES), default="beta-alpha")
    sp.add_argument("--beta-range", default="0:1")
    sp.add_argument("--alpha-range", default="0:1")
    sp.add_argument("--betab-range", default="0:1")
    sp.add_argument("--alpha", type=float, default=None,
                    help="fixed headway gain for the (beta, beta_b) plane")
    sp.add_argument("--resolution", type=int, default=40)
    sp.add_argument("--omega-max", type=float, default=2.0 * math.pi)
    sp.add_argument("--svg", action="store_true", help="also render chart.svg")
    sp.set_defaults(fn=cmd_chart)

    sp = sub.add_parser("roots", help="characteristic roots in a rectangle")
    common(sp)
    sp.add_argument("--rectangle", default=None, help="re0:re1:im0:im1")
    sp.set_defaults(fn=cmd_roots)

    sp = sub.add_parser("freqresp", help="head-to-tail |G(i omega)| table")
    common(sp)
    sp.add_argument("--omega-max", type=float, default=2.0 * math.pi)
    sp.add_argument("--resolution", type=int, default=1000)
    sp.set_defaults(fn=cmd_freqresp)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ScenarioError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CollisionError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_COLLISION


if __name__ == "__main__":
    sys.exit(main())
