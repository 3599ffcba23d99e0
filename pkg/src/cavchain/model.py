"""Domain types and range/speed policies for mixed vehicle chains.

Everything downstream (controllers, simulator, frequency-domain analysis)
works in terms of the types defined here. All values are SI: positions and
headways in m, speeds in m/s, accelerations in m/s^2, gains in 1/s.

Vehicles are indexed the way the chain drives: indices increase in the
direction of motion, the ego vehicle is index 0, vehicles behind it are
negative. The headway of vehicle n is the bumper-to-bumper gap to vehicle
n+1, i.e. ``s_{n+1} - s_n - l_n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence, Union


class ConfigError(ValueError):
    """Raised when a domain object is constructed with inconsistent fields."""


# ---------------------------------------------------------------------------
# default parameter set used by all bundled scenarios
# (braking/acceleration limits, human gains, AV gains, range policies,
# simulation grid). Individual objects can override any of these.

VEHICLE_LENGTH = 5.0        # m
A_MIN = 7.0                 # braking limit magnitude, m/s^2
A_MAX = 3.0                 # acceleration limit, m/s^2

TAU_HUMAN = 0.8             # human driver + vehicle delay, s
ALPHA_HUMAN = 0.1           # human headway gain, 1/s
BETA_HUMAN = 0.6            # human speed gain, 1/s

SIGMA_AV = 0.6              # AV/CAV feedback delay, s
ALPHA_AV = 0.4              # AV headway gain, 1/s
BETA_AV = 0.5               # AV speed gain, 1/s
BETA_BACKWARD = 0.2         # CAV gain on the connected vehicle behind, 1/s

H_STANDSTILL = 5.0          # m
H_FREE_FLOW = 55.0          # m
V_MAX = 30.0                # speed limit, m/s

KAPPA_AV = 0.6              # linear range-policy gradient, 1/s
KAPPA_HUMAN = 0.7           # chart value of the human range-policy gradient, 1/s


@dataclass(frozen=True)
class AccelLimits:
    """Symmetric-form saturation bounds: realized acceleration lies in
    ``[-a_min, a_max]``. ``a_min`` is the braking limit as a positive
    magnitude."""

    a_min: float = A_MIN
    a_max: float = A_MAX

    def __post_init__(self):
        if not (self.a_min > 0.0 and self.a_max > 0.0):
            raise ConfigError(f"acceleration limits must be positive, got {self}")


@dataclass(frozen=True)
class RangePolicy:
    """Desired-speed-versus-headway map, clamped to ``[0, v_max]``.

    kind 'linear':    F(h) = v_max * (h - h_st) / (h_go - h_st)
    kind 'quadratic': F(h) = v_max * (1 - ((h_go - h) / (h_go - h_st))**2)

    The quadratic form is concave and is the bundled human-driver policy;
    the linear form is the bundled AV policy. Both are strictly increasing
    on (h_st, h_go) and saturate at the speed limit above h_go.
    """

    kind: str = "linear"
    h_st: float = H_STANDSTILL
    h_go: float = H_FREE_FLOW
    v_max: float = V_MAX

    def __post_init__(self):
        if self.kind not in ("linear", "quadratic"):
            raise ConfigError(f"unknown range policy kind {self.kind!r}")
        if not (0.0 < self.h_st < self.h_go):
            raise ConfigError(f"need 0 < h_st < h_go, got {self}")
        if not self.v_max > 0.0:
            raise ConfigError(f"v_max must be positive, got {self}")


AV_POLICY = RangePolicy(kind="linear")
HV_POLICY = RangePolicy(kind="quadratic")


def range_policy_eval(policy: RangePolicy, h: float) -> float:
    """Desired speed at headway ``h``: min(max(0, F(h)), v_max).

    The quadratic F is the concave rising branch of a parabola with its
    vertex at h_go; past the vertex the desired speed stays at the limit,
    so h is clamped to h_go before evaluating.
    """
    span = policy.h_go - policy.h_st
    if policy.kind == "linear":
        f = policy.v_max * (h - policy.h_st) / span
    else:
        hc = min(h, policy.h_go)
        f = policy.v_max * (1.0 - ((policy.h_go - hc) / span) ** 2)
    return min(max(0.0, f), policy.v_max)


def range_policy_invert(policy: RangePolicy, v: float) -> float:
    """Minimal headway whose desired speed is ``v``.

    v=0 maps to the standstill headway, v=v_max to the free-flow headway
    (the minimal headway of the saturated branch).
    """
    if not (0.0 <= v <= policy.v_max):
        raise ConfigError(f"speed {v} outside [0, {policy.v_max}]")
    span = policy.h_go - policy.h_st
    if v == 0.0:
        return policy.h_st
    if v == policy.v_max:
        return policy.h_go
    if policy.kind == "linear":
        return policy.h_st + v * span / policy.v_max
    return policy.h_go - span * math.sqrt(1.0 - v / policy.v_max)


def speed_policy(v: float, v_max: float) -> float:
    """W(v): follow the observed speed or the speed limit, whichever is smaller."""
    return min(v, v_max)


class KappaAt(NamedTuple):
    kappa: float
    saturated: bool


def kappa_at(policy: RangePolicy, h_star: float) -> KappaAt:
    """Range-policy gradient dF/dh at an equilibrium headway.

    At or beyond saturation (h <= h_st or h >= h_go) the linearization is
    degenerate; the gradient is reported as 0 with ``saturated=True``.
    """
    if not (policy.h_st < h_star < policy.h_go):
        return KappaAt(0.0, True)
    span = policy.h_go - policy.h_st
    if policy.kind == "linear":
        return KappaAt(policy.v_max / span, False)
    return KappaAt(2.0 * policy.v_max * (policy.h_go - h_star) / span**2, False)


@dataclass(frozen=True)
class HumanGains:
    """Optimal-velocity-model human driver: headway gain, speed-difference
    gain and reaction delay."""

    alpha_h: float = ALPHA_HUMAN
    beta_h: float = BETA_HUMAN
    tau: float = TAU_HUMAN

    def __post_init__(self):
        if self.alpha_h < 0.0 or self.beta_h < 0.0 or self.tau < 0.0:
            raise ConfigError(f"human gains and delay must be >= 0, got {self}")


CONTROLLER_KINDS = ("HDM", "CC", "ACC", "CCC", "TC", "ATC", "CTC")

# Which kinds carry a forward position link (the alpha term), which may hold
# forward speed links to vehicles, and which may respond to vehicles behind.
_HAS_ALPHA = {"ACC", "CCC", "ATC", "CTC"}
_HAS_FORWARD = {"ACC", "CCC", "ATC", "CTC"}
_HAS_BACKWARD = {"TC", "ATC", "CTC"}
_HAS_VREF = {"CC", "TC"}


def _as_tuple(x) -> tuple:
    if x is None:
        return ()
    if isinstance(x, (int, float)):
        return (float(x),)
    return tuple(float(g) for g in x)


@dataclass(frozen=True)
class ControllerSpec:
    """Gain set and signal topology of one longitudinal control law.

    ``beta`` is the forward speed gain; for CCC/CTC it is a gain vector
    aligned with ``forward_links``. ``beta_b`` is the backward gain (ATC) or
    gain vector aligned with ``backward_links`` (TC/CTC). ``forward_links``
    and ``backward_links`` hold the vehicle indices the ego responds to,
    relative to the chain numbering (so for an ego at index 0 the vehicle
    ahead is 1 and the connected vehicle behind is -N).
    """

    kind: str = "ACC"
    alpha: float = ALPHA_AV
    beta: Union[float, Sequence[float]] = BETA_AV
    beta_b: Union[float, Sequence[float]] = 0.0
    sigma: float = SIGMA_AV
    v_ref: Optional[float] = None
    forward_links: Sequence[int] = (1,)
    backward_links: Sequence[int] = ()

    def __post_init__(self):
        if self.kind not in CONTROLLER_KINDS:
            raise ConfigError(f"unknown controller kind {self.kind!r}")
        object.__setattr__(self, "forward_links", tuple(int(i) for i in self.forward_links))
        object.__setattr__(self, "backward_links", tuple(int(i) for i in self.backward_links))
        fwd = _as_tuple(self.beta)
        back = _as_tuple(self.beta_b)
        if self.alpha < 0.0 or any(g < 0.0 for g in fwd) or any(g < 0.0 for g in back):
            raise ConfigError("controller gains must be >= 0")
        if self.sigma < 0.0:
            raise ConfigError("controller delay must be >= 0")
        if self.kind in _HAS_VREF:
            if self.forward_links:
                raise ConfigError(f"{self.kind} has no forward vehicle link")
            if self.alpha != 0.0:
                raise ConfigError(f"{self.kind} has no forward position link, alpha must be 0")
        if self.kind in ("ACC", "ATC") and len(self.forward_links) != 1:
            raise ConfigError(f"{self.kind} needs exactly one forward link")
        if self.kind not in _HAS_BACKWARD and self.backward_links:
            raise ConfigError(f"{self.kind} cannot hold backward links")
        if self.kind in _HAS_BACKWARD and not self.backward_links:
            raise ConfigError(f"{self.kind} needs at least one backward link")
        if self.kind == "ATC" and len(self.backward_links) != 1:
            raise ConfigError("ATC responds to a single connected vehicle behind")
        if self.kind in ("CCC", "CTC") and len(fwd) != len(self.forward_links):
            raise ConfigError("forward gain vector and forward_links length mismatch")
        if self.kind in ("TC", "CTC") and len(back) != len(self.backward_links):
            raise ConfigError("backward gain vector and backward_links length mismatch")

    @property
    def forward_gains(self) -> tuple:
        g = _as_tuple(self.beta)
        if self.kind in ("ACC", "ATC"):
            return (g[0],)
        if self.kind in _HAS_VREF:
            return ()
        return g

    @property
    def backward_gains(self) -> tuple:
        g = _as_tuple(self.beta_b)
        if self.kind in ("ATC",):
            return (g[0],)
        if self.kind in ("TC", "CTC"):
            return g
        return ()

    @property
    def v_ref_gain(self) -> float:
        """Gain applied to the reference-speed term (CC/TC only)."""
        return _as_tuple(self.beta)[0] if self.kind in _HAS_VREF else 0.0


@dataclass(frozen=True)
class VehicleSpec:
    """One vehicle of the chain: physical limits, control law (or human
    driver), range policy, and connectivity flag."""

    index: int
    controller: Union[ControllerSpec, HumanGains, None]
    length: float = VEHICLE_LENGTH
    limits: AccelLimits = field(default_factory=AccelLimits)
    policy: RangePolicy = AV_POLICY
    connected: bool = False

    def __post_init__(self):
        if not self.length > 0.0:
            raise ConfigError(f"vehicle length must be positive, got {self.length}")

    @property
    def is_lead(self) -> bool:
        return self.controller is None

    @property
    def is_human(self) -> bool:
        return isinstance(self.controller, HumanGains)

    @property
    def delay(self) -> float:
        if self.controller is None:
            return 0.0
        if isinstance(self.controller, HumanGains):
            return self.controller.tau
        return self.controller.sigma

    @property
    def kind_name(self) -> str:
        if self.controller is None:
            return "LEAD"
        if isinstance(self.controller, HumanGains):
            return "CHV" if self.connected else "HDM"
        return self.controller.kind


@dataclass(frozen=True)
class ChainConfig:
    """Ordered vehicle chain plus topology and equilibrium speed.

    Vehicles must carry contiguous, strictly increasing indices with exactly
    one ego (index 0). On a ring the top index must be 0 and the vehicle
    ahead of the ego is identified with the lowest-index vehicle (periodic
    closure of the chain).
    """

    vehicles: Sequence[VehicleSpec]
    topology: str = "straight"
    v_star: float = 20.0

    def __post_init__(self):
        object.__setattr__(self, "vehicles", tuple(self.vehicles))
        if self.topology not in ("straight", "ring"):
            raise ConfigError(f"unknown topology {self.topology!r}")
        idx = [v.index for v in self.vehicles]
        if not idx:
            raise ConfigError("chain needs at least one vehicle")
        if idx != list(range(idx[0], idx[0] + len(idx))):
            raise ConfigError(f"vehicle indices must be contiguous and increasing, got {idx}")
        if idx.count(0) != 1:
            raise ConfigError("chain needs exactly one ego (index 0)")
        if self.topology == "ring":
            if idx[-1] != 0:
                raise ConfigError("ring chains are indexed -N..0")
            if any(v.is_lead for v in self.vehicles):
                raise ConfigError("ring chains have no open-loop lead vehicle")
        if self.v_star < 0.0:
            raise ConfigError("equilibrium speed must be >= 0")

    @property
    def indices(self) -> tuple:
        return tuple(v.index for v in self.vehicles)

    def vehicle(self, index: int) -> VehicleSpec:
        return self.vehicles[index - self.vehicles[0].index]

    @property
    def ego(self) -> VehicleSpec:
        return self.vehicle(0)

    @property
    def n_behind(self) -> int:
        """Number of vehicles behind the ego."""
        return -self.vehicles[0].index


@dataclass(frozen=True)
class EquilibriumState:
    """Uniform flow at speed v_star: per-vehicle headways and initial
    positions (rear bumper). The head of a straight chain has no headway
    of its own and carries ``nan`` there."""

    v_star: float
    headways: tuple
    positions: tuple
    ring_length: Optional[float] = None


def human_vehicle(index: int, connected: bool = False, gains: HumanGains = None,
                  policy: RangePolicy = HV_POLICY) -> VehicleSpec:
    return VehicleSpec(index=index, controller=gains or HumanGains(),
                       policy=policy, connected=connected)


def lead_vehicle(index: int) -> VehicleSpec:
    return VehicleSpec(index=index, controller=None)


def hv_chain(n_followers: int = 11, v_star: float = 20.0) -> ChainConfig:
    """A profile-driven lead followed by identical human drivers
    (the baseline string-instability scenario)."""
    if n_followers < 1:
        raise ConfigError("need at least one follower")
    vehicles = [human_vehicle(i) for i in range(1 - n_followers, 1)]
    vehicles.append(lead_vehicle(1))
    return ChainConfig(vehicles=vehicles, v_star=v_star)


def acc_chain(n_behind: int = 10, v_star: float = 25.0, alpha: float = ALPHA_AV,
              beta: float = BETA_AV, sigma: float = SIGMA_AV) -> ChainConfig:
    """Lead, one ACC ego, and n_behind human drivers."""
    ego = VehicleSpec(index=0, controller=ControllerSpec(
        kind="ACC", alpha=alpha, beta=beta, sigma=sigma))
    vehicles = [human_vehicle(i) for i in range(-n_behind, 0)]
    vehicles += [ego, lead_vehicle(1)]
    return ChainConfig(vehicles=vehicles, v_star=v_star)


def atc_chain(n_behind: int = 10, v_star: float = 25.0, alpha: float = ALPHA_AV,
              beta: float = BETA_AV, beta_b: float = BETA_BACKWARD,
              sigma: float = SIGMA_AV) -> ChainConfig:
    """Lead, one ATC ego connected to the farthest vehicle behind, and
    n_behind human drivers (the tail one connected)."""
    if n_behind < 1:
        raise ConfigError("ATC needs at least one vehicle behind")
    ego = VehicleSpec(index=0, controller=ControllerSpec(
        kind="ATC", alpha=alpha, beta=beta, beta_b=beta_b, sigma=sigma,
        backward_links=(-n_behind,)), connected=True)
    vehicles = [human_vehicle(i, connected=(i == -n_behind)) for i in range(-n_behind, 0)]
    vehicles += [ego, lead_vehicle(1)]
    return ChainConfig(vehicles=vehicles, v_star=v_star)


def tc_chain(n_behind: int = 10, v_star: float = 25.0, beta: float = BETA_AV,
             beta_b: float = BETA_BACKWARD, sigma: float = SIGMA_AV,
             v_ref: float = None) -> ChainConfig:
    """A TC ego at the head of the chain (no vehicle ahead), tracking a
    reference speed and listening to the farthest vehicle behind."""
    if n_behind < 1:
        raise ConfigError("TC needs at least one vehicle behind")
    ego = VehicleSpec(index=0, controller=ControllerSpec(
        kind="TC", alpha=0.0, beta=beta, beta_b=beta_b, sigma=sigma,
        v_ref=v_star if v_ref is None else v_ref,
        forward_links=(), backward_links=(-n_behind,)), connected=True)
    vehicles = [human_vehicle(i, connected=(i == -n_behind)) for i in range(-n_behind, 0)]
    vehicles.append(ego)
    return ChainConfig(vehicles=vehicles, v_star=v_star)


def ring_hv_chain(n_vehicles: int, v_star: float = 20.0) -> ChainConfig:
    """n_vehicles identical human drivers on a ring (indices -N..0)."""
    if n_vehicles < 2:
        raise ConfigError("a ring needs at least two vehicles")
    vehicles = [human_vehicle(i) for i in range(1 - n_vehicles, 1)]
    return ChainConfig(vehicles=vehicles, topology="ring", v_star=v_star)


__all__ = [
    "ConfigError", "AccelLimits", "RangePolicy", "HumanGains", "ControllerSpec",
    "VehicleSpec", "ChainConfig", "EquilibriumState", "KappaAt",
    "range_policy_eval", "range_policy_invert", "speed_policy", "kappa_at",
    "human_vehicle", "lead_vehicle", "hv_chain", "acc_chain", "atc_chain",
    "tc_chain", "ring_hv_chain", "replace",
    "AV_POLICY", "HV_POLICY", "VEHICLE_LENGTH", "A_MIN", "A_MAX",
    "TAU_HUMAN", "ALPHA_HUMAN", "BETA_HUMAN", "SIGMA_AV", "ALPHA_AV", "BETA_AV",
    "BETA_BACKWARD", "H_STANDSTILL", "H_FREE_FLOW", "V_MAX", "KAPPA_AV", "KAPPA_HUMAN",
]
