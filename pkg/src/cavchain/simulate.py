"""Fixed-step simulation of delayed vehicle chains.

The model is a delayed double integrator per vehicle: position integrates
speed, speed integrates the saturated command issued one actuation delay
earlier. Commands come from the control laws in ``controllers`` evaluated on
current observations; the delay is applied here, uniformly, by buffering
commands on the step grid. Histories before t0 are constant equilibrium
states, whose commands are exactly zero.

The default integrator is explicit Euler on a grid that the vehicle delays
must hit exactly (the bundled delays 0.8 s and 0.6 s are exact multiples of
the 0.01 s step). ``rk4-lag`` is the higher-order option: classical RK4 with
cubic interpolation of the command buffer at stage times, for delays that
are at least one step long.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernel
from .model import (ChainConfig, ConfigError, ControllerSpec, EquilibriumState,
                    HumanGains, VehicleSpec, range_policy_invert)


class ValidationError(ConfigError):
    """Scenario/settings combination that cannot be simulated as requested."""


class CollisionError(RuntimeError):
    """A headway closed to zero; carries the report and the partial run."""

    def __init__(self, report: "CollisionReport", trajectory: "Trajectory"):
        super().__init__(f"collision at t={report.time:.3f} s between vehicles "
                         f"{report.rear_index} and {report.front_index}")
        self.report = report
        self.trajectory = trajectory


@dataclass(frozen=True)
class CollisionReport:
    time: float
    rear_index: int
    front_index: int


@dataclass(frozen=True)
class LeadProfile:
    """Piecewise-constant acceleration of the open-loop lead vehicle.

    Segments are (t_start, t_end, accel) with accel held on [t_start, t_end);
    outside all segments the lead cruises (zero acceleration).
    """

    segments: Sequence[tuple] = ((0.0, 10.0, -1.0), (10.0, 30.0, 0.5))

    def __post_init__(self):
        segs = tuple((float(a), float(b), float(c)) for a, b, c in self.segments)
        object.__setattr__(self, "segments", segs)
        for (a, b, _) in segs:
            if not b > a:
                raise ConfigError(f"segment [{a}, {b}) is empty")
        for (_, b1, _), (a2, _, _) in zip(segs, segs[1:]):
            if a2 < b1:
                raise ConfigError("lead profile segments must be ordered and disjoint")

    def accel_at(self, t: float) -> float:
        for (a, b, acc) in self.segments:
            if a <= t < b:
                return acc
        return 0.0

    def sample(self, t: np.ndarray) -> np.ndarray:
        out = np.zeros_like(t)
        for (a, b, acc) in self.segments:
            out[(t >= a) & (t < b)] = acc
        return out


ZERO_PROFILE = LeadProfile(segments=())


@dataclass(frozen=True)
class SimSettings:
    dt: float = 0.01
    t_start: float = 0.0
    t_end: float = 60.0
    integrator: str = "euler"

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ConfigError("dt must be positive")
        if not self.t_end > self.t_start:
            raise ConfigError("empty time horizon")
        if self.integrator not in ("euler", "rk4-lag"):
            raise ConfigError(f"unknown integrator {self.integrator!r}")

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t_start) / self.dt))


@dataclass
class Trajectory:
    """Time grid plus per-vehicle positions, speeds, commanded and realized
    accelerations (columns ordered by ascending vehicle index)."""

    t: np.ndarray
    s: np.ndarray
    v: np.ndarray
    u: np.ndarray
    a: np.ndarray
    indices: tuple
    kinds: tuple
    chain: ChainConfig
    settings: SimSettings
    floored: np.ndarray
    collision: Optional[CollisionReport] = None

    def col(self, index: int) -> int:
        return self.indices.index(index)

    def speed(self, index: int) -> np.ndarray:
        return self.v[:, self.col(index)]

    def position(self, index: int) -> np.ndarray:
        return self.s[:, self.col(index)]

    def realized_accel(self, index: int) -> np.ndarray:
        return self.a[:, self.col(index)]

    def headway(self, index: int) -> np.ndarray:
        """Bumper-to-bumper gap ahead of a vehicle; on a ring the top
        vehicle's gap wraps to the tail one circumference ahead."""
        i = self.col(index)
        veh = self.chain.vehicles[i]
        if i + 1 < self.s.shape[1]:
            return self.s[:, i + 1] - self.s[:, i] - veh.length
        if self.chain.topology != "ring":
            raise ConfigError(f"vehicle {index} has no vehicle ahead")
        eq = build_equilibrium(self.chain)
        return self.s[:, 0] + eq.ring_length - self.s[:, i] - veh.length

    def saturation_mask(self) -> np.ndarray:
        """True where a controlled vehicle's realized acceleration was
        clipped (its delayed command fell outside the limits)."""
        K1, V = self.u.shape
        mask = np.zeros((K1, V), dtype=bool)
        for i, veh in enumerate(self.chain.vehicles):
            if veh.is_lead:
                continue
            m = int(round(veh.delay / self.settings.dt))
            rows = np.arange(m, K1)
            mask[rows, i] = self.u[rows - m, i] != self.a[rows, i]
        return mask


def _delay_steps(veh: VehicleSpec, dt: float, integrator: str) -> int:
    d = veh.delay
    steps = d / dt
    if integrator == "euler":
        if abs(steps - round(steps)) > 1e-9:
            raise ValidationError(
                f"vehicle {veh.index}: delay {d} not a multiple of dt={dt} "
                f"(required by the euler integrator)")
        return int(round(steps))
    if 0.0 < d < dt:
        raise ValidationError(
            f"vehicle {veh.index}: rk4-lag needs delay 0 or >= dt, got {d}")
    return int(round(steps))


def build_equilibrium(chain: ChainConfig) -> EquilibriumState:
    """Uniform flow at chain.v_star: per-vehicle headways from inverting each
    vehicle's own range policy, positions stacked rear to front."""
    headways = []
    for pos, veh in enumerate(chain.vehicles):
        has_front = chain.topology == "ring" or pos < len(chain.vehicles) - 1
        if not has_front:
            headways.append(math.nan)
            continue
        if chain.v_star > veh.policy.v_max:
            raise ConfigError(
                f"v_star={chain.v_star} exceeds the speed limit "
                f"{veh.policy.v_max} of vehicle {veh.index}")
        headways.append(range_policy_invert(veh.policy, chain.v_star))
    positions = [0.0]
    for veh, h in zip(chain.vehicles[:-1], headways[:-1]):
        positions.append(positions[-1] + h + veh.length)
    ring_length = None
    if chain.topology == "ring":
        last = chain.vehicles[-1]
        ring_length = positions[-1] + headways[-1] + last.length
    return EquilibriumState(v_star=chain.v_star, headways=tuple(headways),
                            positions=tuple(positions), ring_length=ring_length)


def pack_chain(chain: ChainConfig, equilibrium: EquilibriumState,
               settings: SimSettings) -> kernel.ChainArrays:
    V = len(chain.vehicles)
    alpha = np.zeros(V)
    beta_ref = np.zeros(V)
    v_ref = np.zeros(V)
    pol_kind = np.zeros(V, dtype=np.int8)
    h_st = np.zeros(V)
    h_go = np.zeros(V)
    v_max = np.zeros(V)
    a_min = np.zeros(V)
    a_max = np.zeros(V)
    length = np.zeros(V)
    delay_steps = np.zeros(V, dtype=np.int64)
    front = np.full(V, -1, dtype=np.int32)
    front_offset = np.zeros(V)
    is_lead = np.zeros(V, dtype=np.uint8)
    lead_pos = -1

    ptr = [0]
    idx, gain, clamp, cvmax = [], [], [], []

    def add_link(target_pos: int, g: float, clamped: bool, vm: float):
        idx.append(target_pos)
        gain.append(g)
        clamp.append(1 if clamped else 0)
        cvmax.append(vm)

    base = chain.vehicles[0].index
    for i, veh in enumerate(chain.vehicles):
        pol = veh.policy
        pol_kind[i] = (kernel.POLICY_QUADRATIC if pol.kind == "quadratic"
                       else kernel.POLICY_LINEAR)
        h_st[i], h_go[i], v_max[i] = pol.h_st, pol.h_go, pol.v_max
        a_min[i], a_max[i] = veh.limits.a_min, veh.limits.a_max
        length[i] = veh.length
        delay_steps[i] = _delay_steps(veh, settings.dt, settings.integrator)
        if i < V - 1:
            front[i] = i + 1
        elif chain.topology == "ring":
            front[i] = 0
            front_offset[i] = equilibrium.ring_length

        ctl = veh.controller
        if ctl is None:
            is_lead[i] = 1
            lead_pos = i
        elif isinstance(ctl, HumanGains):
            alpha[i] = ctl.alpha_h
            add_link(front[i], ctl.beta_h, False, pol.v_max)
        else:
            alpha[i] = ctl.alpha
            if ctl.kind in ("CC", "TC"):
                alpha[i] = 0.0
                beta_ref[i] = ctl.v_ref_gain
                v_ref[i] = ctl.v_ref if ctl.v_ref is not None else chain.v_star
            for link, g in zip(ctl.forward_links, ctl.forward_gains):
                add_link(link - base, g, True, pol.v_max)
            for link, g in zip(ctl.backward_links, ctl.backward_gains):
                add_link(link - base, g, True, pol.v_max)
        ptr.append(len(idx))

    for i, veh in enumerate(chain.vehicles):
        ctl = veh.controller
        if isinstance(ctl, ControllerSpec):
            for link in tuple(ctl.forward_links) + tuple(ctl.backward_links):
                if not (base <= link <= chain.vehicles[-1].index):
                    raise ConfigError(f"vehicle {veh.index} links to {link}, "
                                      f"which is not in the chain")

    return kernel.ChainArrays(
        alpha=alpha, beta_ref=beta_ref, v_ref=v_ref, pol_kind=pol_kind,
        h_st=h_st, h_go=h_go, v_max=v_max, a_min=a_min, a_max=a_max,
        length=length, delay_steps=delay_steps, front=front,
        front_offset=front_offset,
        link_ptr=np.asarray(ptr, dtype=np.int32),
        link_idx=np.asarray(idx, dtype=np.int32),
        link_gain=np.asarray(gain, dtype=np.float64),
        link_clamp=np.asarray(clamp, dtype=np.uint8),
        link_vmax=np.asarray(cvmax, dtype=np.float64),
        is_lead=is_lead, lead_pos=lead_pos)


def _init_state(chain: ChainConfig, equilibrium: EquilibriumState,
                n_steps: int, speed_offsets: Optional[dict]):
    V = len(chain.vehicles)
    s = np.zeros((n_steps + 1, V))
    v = np.zeros((n_steps + 1, V))
    u = np.zeros((n_steps + 1, V))
    a = np.zeros((n_steps + 1, V))
    s[0] = equilibrium.positions
    v[0] = equilibrium.v_star
    if speed_offsets:
        for index, dv in speed_offsets.items():
            v[0, chain.indices.index(index)] += dv
    return s, v, u, a


def _finish(chain, settings, t, s, v, u, a, result) -> Trajectory:
    kinds = tuple(veh.kind_name for veh in chain.vehicles)
    report = None
    if result.collided:
        n = result.step + 1
        t, s, v, u, a = t[:n], s[:n], v[:n], u[:n], a[:n]
        rear = chain.vehicles[result.rear]
        front_pos = result.rear + 1 if result.rear + 1 < len(chain.vehicles) else 0
        report = CollisionReport(time=float(t[-1]), rear_index=rear.index,
                                 front_index=chain.vehicles[front_pos].index)
    traj = Trajectory(t=t, s=s, v=v, u=u, a=a, indices=chain.indices,
                      kinds=kinds, chain=chain, settings=settings,
                      floored=result.floored.astype(bool), collision=report)
    if report is not None:
        raise CollisionError(report, traj)
    return traj


def simulate(chain: ChainConfig, equilibrium: EquilibriumState,
             lead: LeadProfile, settings: SimSettings,
             backend: str = "auto",
             initial_speed_offsets: Optional[dict] = None) -> Trajectory:
    """Drive the whole chain over the settings horizon.

    On a straight chain the highest-index vehicle is open loop and follows
    the lead profile exactly; on a ring every vehicle runs its control law
    and the profile must be empty (perturb via ``initial_speed_offsets``).

    Raises CollisionError as soon as any headway reaches zero.
    """
    if chain.topology == "ring" and lead.segments:
        raise ValidationError("ring chains have no open-loop lead to profile")
    has_lead = any(v.is_lead for v in chain.vehicles)
    if not has_lead and lead.segments:
        raise ValidationError("lead profile given but the chain has no "
                              "open-loop lead vehicle")
    K = settings.n_steps
    t = settings.t_start + np.arange(K + 1) * settings.dt
    arrays = pack_chain(chain, equilibrium, settings)
    s, v, u, a = _init_state(chain, equilibrium, K, initial_speed_offsets)

    if has_lead:
        lead_mode, a_lead, v_lead = kernel.LEAD_ACCEL, lead.sample(t), np.zeros(K + 1)
    else:
        lead_mode, a_lead, v_lead = kernel.LEAD_NONE, np.zeros(K + 1), np.zeros(K + 1)

    if settings.integrator == "euler":
        result = kernel.run_euler(arrays, K, settings.dt, s, v, u, a,
                                  lead_mode, a_lead, v_lead, backend=backend)
    else:
        accel_fn = lead.accel_at if lead_mode == kernel.LEAD_ACCEL else None
        result = _run_rk4(arrays, K, settings.dt, settings.t_start,
                          s, v, u, a, accel_fn)
    return _finish(chain, settings, t, s, v, u, a, result)


def _lagrange_interp(ugrid: np.ndarray, i: int, td_steps: float, kmax: int) -> float:
    """Cubic Lagrange interpolation of one vehicle's command history at a
    fractional step position; constrained to nodes <= kmax."""
    if td_steps <= 0.0:
        return 0.0
    j0 = int(math.floor(td_steps)) - 1
    j0 = max(0, min(j0, kmax - 3))
    if kmax < 3:
        j0, npts = 0, kmax + 1
    else:
        npts = 4
    val = 0.0
    for m in range(npts):
        jm = j0 + m
        w = 1.0
        for q in range(npts):
            if q == m:
                continue
            w *= (td_steps - (j0 + q)) / (jm - (j0 + q))
        val += w * ugrid[jm, i]
    return val


def _run_rk4(arrays: kernel.ChainArrays, n_steps: int, dt: float, t0: float,
             s, v, u, a, lead_accel_fn: Optional[Callable]) -> kernel.StepResult:
    """Classical RK4 with interpolated command lag (pure Python path).

    The realized acceleration of a delayed vehicle over one step depends
    only on past commands, which live on the grid; stage values come from
    cubic interpolation of that buffer. Zero-delay vehicles get their
    command recomputed from the stage state itself.
    """
    V = arrays.n_vehicles
    floored = np.zeros(V, dtype=np.uint8)
    lim_lo, lim_hi = -arrays.a_min, arrays.a_max

    def commands(sk: np.ndarray, vk: np.ndarray) -> np.ndarray:
        out = np.zeros(V)
        for i in range(V):
            if arrays.is_lead[i]:
                continue
            cmd = arrays.beta_ref[i] * (arrays.v_ref[i] - vk[i])
            fi = arrays.front[i]
            if fi >= 0:
                h = sk[fi] + arrays.front_offset[i] - sk[i] - arrays.length[i]
                span = arrays.h_go[i] - arrays.h_st[i]
                if arrays.pol_kind[i] == kernel.POLICY_QUADRATIC:
                    hc = min(h, arrays.h_go[i])
                    f = arrays.v_max[i] * (1.0 - ((arrays.h_go[i] - hc) / span) ** 2)
                else:
                    f = arrays.v_max[i] * (h - arrays.h_st[i]) / span
                f = min(max(0.0, f), arrays.v_max[i])
                cmd += arrays.alpha[i] * (f - vk[i])
            for p in range(arrays.link_ptr[i], arrays.link_ptr[i + 1]):
                tv = vk[arrays.link_idx[p]]
                if arrays.link_clamp[p]:
                    tv = min(tv, arrays.link_vmax[p])
                cmd += arrays.link_gain[p] * (tv - vk[i])
            out[i] = cmd
        return out

    def stage_accel(k: int, c: float, sk: np.ndarray, vk: np.ndarray) -> np.ndarray:
        """Realized accelerations at stage time t_k + c*dt."""
        out = np.zeros(V)
        live = None
        tq = t0 + (k + c) * dt
        for i in range(V):
            if arrays.is_lead[i]:
                out[i] = lead_accel_fn(tq) if lead_accel_fn else 0.0
                continue
            m = arrays.delay_steps[i]
            if m == 0:
                if live is None:
                    live = commands(sk, vk)
                cmd = live[i]
            else:
                cmd = _lagrange_interp(u, i, k + c - m, k)
            out[i] = min(max(lim_lo[i], cmd), lim_hi[i])
        return out

    u[0] = commands(s[0], v[0])
    for k in range(n_steps):
        s0, v0 = s[k], v[k]
        a1 = stage_accel(k, 0.0, s0, v0)
        a[k] = a1
        a2 = stage_accel(k, 0.5, s0 + 0.5 * dt * v0, v0 + 0.5 * dt * a1)
        a3 = stage_accel(k, 0.5, s0 + 0.5 * dt * (v0 + 0.5 * dt * a1), v0 + 0.5 * dt * a2)
        a4 = stage_accel(k, 1.0, s0 + dt * (v0 + 0.5 * dt * a2), v0 + dt * a3)
        s[k + 1] = s0 + dt / 6.0 * ((v0) + 2 * (v0 + 0.5 * dt * a1)
                                    + 2 * (v0 + 0.5 * dt * a2) + (v0 + dt * a3))
        vnext = v0 + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        hit = vnext < 0.0
        if hit.any():
            floored |= hit.astype(np.uint8)
            vnext = np.maximum(vnext, 0.0)
        v[k + 1] = vnext
        u[k + 1] = commands(s[k + 1], v[k + 1])
        for i in range(V):
            fi = arrays.front[i]
            if fi >= 0:
                h = s[k + 1, fi] + arrays.front_offset[i] - s[k + 1, i] - arrays.length[i]
                if h <= 0.0:
                    a[k + 1] = stage_accel(k + 1, 0.0, s[k + 1], v[k + 1])
                    return kernel.StepResult(True, k + 1, i, floored)
    a[n_steps] = stage_accel(n_steps, 0.0, s[n_steps], v[n_steps])
    return kernel.StepResult(False, n_steps, -1, floored)


def simulate_speed_lead(chain: ChainConfig, equilibrium: EquilibriumState,
                        speed_fn: Callable, accel_fn: Callable,
                        settings: SimSettings, backend: str = "auto") -> Trajectory:
    """Drive a straight chain whose lead speed is prescribed directly by
    ``speed_fn(t)`` (with ``accel_fn(t)`` its derivative, recorded as the
    lead's realized acceleration and used by the rk4 stages)."""
    if chain.topology != "straight" or not any(v.is_lead for v in chain.vehicles):
        raise ValidationError("prescribed lead speed needs a straight chain "
                              "with an open-loop lead")
    K = settings.n_steps
    t = settings.t_start + np.arange(K + 1) * settings.dt
    arrays = pack_chain(chain, equilibrium, settings)
    s, v, u, a = _init_state(chain, equilibrium, K, None)
    if settings.integrator == "euler":
        v_lead = np.array([speed_fn(tk) for tk in t])
        a_lead = np.array([accel_fn(tk) for tk in t])
        result = kernel.run_euler(arrays, K, settings.dt, s, v, u, a,
                                  kernel.LEAD_SPEED, a_lead, v_lead, backend=backend)
    else:
        result = _run_rk4(arrays, K, settings.dt, settings.t_start, s, v, u, a,
                          accel_fn)
    return _finish(chain, settings, t, s, v, u, a, result)


@dataclass(frozen=True)
class PerturbationResult:
    ratio: float
    omega: float
    amplitude: float
    tail_amplitude: float
    saturated: bool


def perturbation_response(chain: ChainConfig, amplitude: float, omega: float,
                          settings: SimSettings = None,
                          backend: str = "auto") -> PerturbationResult:
    """Steady-state tail/lead speed-oscillation amplitude ratio under a
    sinusoidal lead speed v* + A*sin(omega*t).

    The tail amplitude is a single-frequency Fourier projection over an
    integer number of periods inside the last quarter of the horizon, so
    the horizon must hold at least one full period there. A run in which
    saturation or the speed floor engaged is flagged: its ratio is not
    comparable to linear theory.
    """
    if amplitude <= 0.0:
        raise ConfigError("perturbation amplitude must be positive")
    if omega <= 0.0:
        raise ConfigError("perturbation frequency must be positive")
    if chain.topology != "straight":
        raise ConfigError("perturbation response is defined for straight chains")
    settings = settings or SimSettings(t_end=240.0)
    period = 2.0 * math.pi / omega
    span = settings.t_end - settings.t_start
    n_periods = int(math.floor(0.25 * span / period))
    if n_periods < 1:
        raise ConfigError(
            f"horizon too short: last quarter of {span} s holds no full "
            f"period ({period:.1f} s) of omega={omega}")

    equilibrium = build_equilibrium(chain)
    t0 = settings.t_start
    traj = simulate_speed_lead(
        chain, equilibrium,
        lambda tq: chain.v_star + amplitude * math.sin(omega * (tq - t0)),
        lambda tq: amplitude * omega * math.cos(omega * (tq - t0)),
        settings, backend=backend)
    t = traj.t

    t_win = n_periods * period
    i0 = np.searchsorted(t, settings.t_end - t_win)
    seg_t = t[i0:]
    seg = traj.v[i0:, 0] - np.trapezoid(traj.v[i0:, 0], seg_t) / (seg_t[-1] - seg_t[0])
    proj = np.trapezoid(seg * np.exp(-1j * omega * (seg_t - settings.t_start)), seg_t)
    tail_amp = 2.0 * abs(proj) / (seg_t[-1] - seg_t[0])
    saturated = bool(traj.saturation_mask().any() or traj.floored.any())
    return PerturbationResult(ratio=tail_amp / amplitude, omega=omega,
                              amplitude=amplitude, tail_amplitude=tail_amp,
                              saturated=saturated)


def write_trajectory_csv(traj: Trajectory, path, scenario_hash: str = "") -> None:
    """Columns: t, then s/v/u/a per vehicle; column names carry the vehicle
    index and kind so the file is self-describing."""
    cols = ["t"]
    for idx, kind in zip(traj.indices, traj.kinds):
        for q in ("s", "v", "u", "a"):
            cols.append(f"{q}_{idx}:{kind}")
    data = [traj.t]
    for i in range(len(traj.indices)):
        data += [traj.s[:, i], traj.v[:, i], traj.u[:, i], traj.a[:, i]]
    mat = np.column_stack(data)
    with open(path, "w", newline="\n") as f:
        f.write(f"# schema=cavchain-trajectory-v1 scenario={scenario_hash}\n")
        f.write(",".join(cols) + "\n")
        for row in mat:
            f.write(",".join(repr(float(x)) for x in row) + "\n")


__all__ = [
    "LeadProfile", "ZERO_PROFILE", "SimSettings", "Trajectory",
    "CollisionError", "CollisionReport", "ValidationError",
    "build_equilibrium", "pack_chain", "simulate", "simulate_speed_lead",
    "perturbation_response", "PerturbationResult", "write_trajectory_csv",
]
