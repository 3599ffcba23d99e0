"""Acceleration-command laws.

Every function here is a pure map from observed signals to a commanded
acceleration; actuation delay and saturation live in the simulator, which
applies ``saturate`` to the command issued one delay earlier. Observed
speeds of other vehicles pass through the speed policy W (clamp at the
speed limit), while the human driver's speed-difference term uses the raw
relative speed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .model import (AccelLimits, ConfigError, ControllerSpec, HumanGains,
                    RangePolicy, range_policy_eval, speed_policy)


@dataclass(frozen=True)
class NeighborObservation:
    """What the ego knows about one other vehicle: its speed, and the
    bumper-to-bumper headway when the link carries position information
    (only the immediate-front link does)."""

    index: int
    speed: float
    headway: Optional[float] = None


def saturate(u: float, limits: AccelLimits) -> float:
    """Clamp a commanded acceleration to [-a_min, a_max]."""
    return min(max(-limits.a_min, u), limits.a_max)


def hdm_accel(gains: HumanGains, policy: RangePolicy, h: float, h_dot: float,
              v: float) -> float:
    """Optimal-velocity human driver: alpha_h*(V(h) - v) + beta_h*h_dot.

    ``h_dot`` is the exact speed difference v_front - v_self supplied by the
    caller, never a numerical derivative.
    """
    return gains.alpha_h * (range_policy_eval(policy, h) - v) + gains.beta_h * h_dot


def cc_accel(spec: ControllerSpec, v0: float) -> float:
    """Cruise control: proportional tracking of the reference speed."""
    if spec.v_ref is None:
        raise ConfigError("CC needs a reference speed")
    return spec.v_ref_gain * (spec.v_ref - v0)


def acc_accel(spec: ControllerSpec, policy: RangePolicy, h: float, v1: float,
              v0: float) -> float:
    """Adaptive cruise control: alpha*(V(h) - v0) + beta*(W(v1) - v0)."""
    beta = spec.forward_gains[0]
    return (spec.alpha * (range_policy_eval(policy, h) - v0)
            + beta * (speed_policy(v1, policy.v_max) - v0))


def ccc_accel(spec: ControllerSpec, policy: RangePolicy, h1: float, v0: float,
              speeds_ahead: Sequence[float]) -> float:
    """Connected cruise control: position feedback on the vehicle directly
    ahead plus speed feedback on up to M vehicles ahead. Vehicles without a
    link simply do not appear (their gain is zero)."""
    if len(speeds_ahead) != len(spec.forward_gains):
        raise ConfigError("one observed speed per forward link expected")
    u = spec.alpha * (range_policy_eval(policy, h1) - v0)
    for g, vm in zip(spec.forward_gains, speeds_ahead):
        u += g * (speed_policy(vm, policy.v_max) - v0)
    return u


def tc_accel(spec: ControllerSpec, v0: float, speeds_behind: Sequence[float],
             v_max: float = None) -> float:
    """Traffic control: reference tracking plus speed feedback from
    connected vehicles behind."""
    if spec.v_ref is None:
        raise ConfigError("TC needs a reference speed")
    if len(speeds_behind) != len(spec.backward_gains):
        raise ConfigError("one observed speed per backward link expected")
    vm = v_max if v_max is not None else spec.v_ref
    u = spec.v_ref_gain * (spec.v_ref - v0)
    for g, vn in zip(spec.backward_gains, speeds_behind):
        u += g * (speed_policy(vn, vm) - v0)
    return u


def atc_accel(spec: ControllerSpec, policy: RangePolicy, h1: float, v1: float,
              v0: float, v_back: Optional[float]) -> float:
    """Adaptive traffic control: ACC plus speed feedback from a single
    connected vehicle behind."""
    if v_back is None:
        raise ConfigError("ATC needs the observed speed of the vehicle behind")
    beta_b = spec.backward_gains[0]
    return (acc_accel(spec, policy, h1, v1, v0)
            + beta_b * (speed_policy(v_back, policy.v_max) - v0))


def ctc_accel(spec: ControllerSpec, policy: RangePolicy, h1: float, v0: float,
              speeds_ahead: Sequence[float], speeds_behind: Sequence[float]) -> float:
    """Connected traffic control: CCC plus speed feedback from connected
    vehicles behind."""
    if len(speeds_behind) != len(spec.backward_gains):
        raise ConfigError("one observed speed per backward link expected")
    u = ccc_accel(spec, policy, h1, v0, speeds_ahead)
    for g, vn in zip(spec.backward_gains, speeds_behind):
        u += g * (speed_policy(vn, policy.v_max) - v0)
    return u


def command_accel(controller, policy: RangePolicy,
                  observations: Sequence[NeighborObservation], v_self: float) -> float:
    """Dispatch to the vehicle's control law from a set of neighbor
    observations (sorted handling is the caller's job: forward links first,
    in link order, then backward links in link order)."""
    if isinstance(controller, HumanGains):
        front = observations[0]
        return hdm_accel(controller, policy, front.headway, front.speed - v_self, v_self)
    spec = controller
    if spec.kind == "CC":
        return cc_accel(spec, v_self)
    if spec.kind == "TC":
        return tc_accel(spec, v_self, [o.speed for o in observations], v_max=policy.v_max)
    n_fwd = len(spec.forward_links)
    fwd, back = observations[:n_fwd], observations[n_fwd:]
    if spec.kind == "ACC":
        return acc_accel(spec, policy, fwd[0].headway, fwd[0].speed, v_self)
    if spec.kind == "CCC":
        return ccc_accel(spec, policy, fwd[0].headway, v_self, [o.speed for o in fwd])
    if spec.kind == "ATC":
        return atc_accel(spec, policy, fwd[0].headway, fwd[0].speed, v_self,
                         back[0].speed if back else None)
    if spec.kind == "CTC":
        return ctc_accel(spec, policy, fwd[0].headway, v_self,
                         [o.speed for o in fwd], [o.speed for o in back])
    raise ConfigError(f"unknown controller kind {spec.kind!r}")


__all__ = [
    "NeighborObservation", "saturate", "hdm_accel", "cc_accel", "acc_accel",
    "ccc_accel", "tc_accel", "atc_accel", "ctc_accel", "command_accel",
]
