"""Linearized dynamics and transfer functions of vehicle chains.

Around uniform flow each vehicle's perturbation state is x = (position,
speed) with output c = [0 1]. A car-following link maps the front vehicle's
speed perturbation to the follower's through a link transfer function; the
whole chain composes links into a head-to-tail transfer function G(s). The
ego vehicle responding to a vehicle behind it closes a feedback loop, so its
G(s) carries the virtual-ring denominator 1 - T_B(s)*Gamma(s).

Two independent evaluation routes exist on purpose: the generic matrix
resolvent route (``link_tf_generic``) and the closed-form rational route
(``closed_form_tf``); the tests hold them against each other.

TC and CC enter as the alpha = 0 special cases of ATC and ACC, the
reference speed playing the role of the forward input channel.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .model import (ChainConfig, ConfigError, ControllerSpec, HumanGains,
                    VehicleSpec, kappa_at, range_policy_invert)


class PoleError(ArithmeticError):
    """Transfer-function evaluation requested at (or too near) a pole."""

    def __init__(self, s, what="transfer function"):
        super().__init__(f"{what} has a pole at s={s}")
        self.s = s


@dataclass(frozen=True)
class LinearModel:
    """Coefficient matrices of one linearized vehicle: delay-free drift a,
    delayed self-coupling, and delayed couplings to the vehicle ahead and
    (ATC only) the connected vehicle behind."""

    kind: str
    a: np.ndarray
    a_self_delayed: np.ndarray
    b_forward: np.ndarray
    b_backward: np.ndarray
    delay: float


_DRIFT = np.array([[0.0, 1.0], [0.0, 0.0]])
OUTPUT_ROW = np.array([0.0, 1.0])


def _second_row(pos: float, vel: float) -> np.ndarray:
    return np.array([[0.0, 0.0], [pos, vel]])


def linearize(spec: Union[HumanGains, ControllerSpec], kappa: float) -> LinearModel:
    """Coefficient matrices for an HV, ACC or ATC vehicle linearized at an
    equilibrium whose range-policy gradient is ``kappa``."""
    if isinstance(spec, HumanGains):
        ak = spec.alpha_h * kappa
        return LinearModel(
            kind="HV", a=_DRIFT,
            a_self_delayed=_second_row(-ak, -(spec.alpha_h + spec.beta_h)),
            b_forward=_second_row(ak, spec.beta_h),
            b_backward=_second_row(0.0, 0.0), delay=spec.tau)
    if spec.kind in ("ACC", "CC"):
        alpha = spec.alpha
        beta = spec.forward_gains[0] if spec.kind == "ACC" else spec.v_ref_gain
        ak = alpha * kappa
        return LinearModel(
            kind="ACC", a=_DRIFT,
            a_self_delayed=_second_row(-ak, -(alpha + beta)),
            b_forward=_second_row(ak, beta),
            b_backward=_second_row(0.0, 0.0), delay=spec.sigma)
    if spec.kind in ("ATC", "TC"):
        alpha = spec.alpha
        beta = spec.forward_gains[0] if spec.kind == "ATC" else spec.v_ref_gain
        beta_b = spec.backward_gains[0]
        ak = alpha * kappa
        return LinearModel(
            kind="ATC", a=_DRIFT,
            a_self_delayed=_second_row(-ak, -(alpha + beta + beta_b)),
            b_forward=_second_row(ak, beta),
            b_backward=_second_row(0.0, beta_b), delay=spec.sigma)
    raise ConfigError(f"no linearization for controller kind {spec.kind!r} "
                      f"(multi-link laws are simulation-only)")


def _model_gains(model: LinearModel):
    ak = -model.a_self_delayed[1, 0]
    total = -model.a_self_delayed[1, 1]
    beta = model.b_forward[1, 1]
    beta_b = model.b_backward[1, 1]
    return ak, total, beta, beta_b


def link_tf_generic(model: LinearModel, s: complex, which: str = "forward") -> complex:
    """Matrix-resolvent evaluation of a link transfer function:
    c (sI - a - a_d e^{-s d})^{-1} b_which e^{-s d} [1/s, 1]^T.

    The s = 0 value is the analytic limit, not a numerical 0/0.
    """
    b = model.b_forward if which == "forward" else model.b_backward
    ak, total, beta, beta_b = _model_gains(model)
    if s == 0:
        return _dc_limit(ak, total, beta, beta_b, which)
    e = cmath.exp(-s * model.delay)
    m = s * np.eye(2) - model.a - model.a_self_delayed * e
    if abs(np.linalg.det(m)) < 1e-300:
        raise PoleError(s, "link transfer function")
    vec = np.array([1.0 / s, 1.0], dtype=complex)
    x = np.linalg.solve(m.astype(complex), (b * e) @ vec)
    return complex(OUTPUT_ROW @ x)


def _dc_limit(ak: float, total: float, beta: float, beta_b: float,
              which: str) -> complex:
    if ak > 0.0:
        return 1.0 + 0.0j if which == "forward" else 0.0j
    if total == 0.0:
        return 0.0j
    return complex(beta / total) if which == "forward" else complex(beta_b / total)


def closed_form_tf(kind: str, alpha: float, beta: float, kappa: float,
                   delay: float, s, beta_b: float = 0.0):
    """Rational-exponential link transfer functions.

    kind 'HV' or 'ACC':  (beta*s + alpha*kappa) / (s^2 e^{s d} + (alpha+beta)*s + alpha*kappa)
    kind 'ATC-F':        same numerator over the ATC denominator
                         s^2 e^{s d} + (alpha+beta+beta_b)*s + alpha*kappa
    kind 'ATC-B':        beta_b*s over the ATC denominator

    Accepts complex scalars or arrays; s = 0 entries take analytic limits.
    """
    if kind in ("HV", "ACC"):
        total = alpha + beta
        bb = 0.0
    elif kind in ("ATC-F", "ATC-B"):
        total = alpha + beta + beta_b
        bb = beta_b
    else:
        raise ConfigError(f"unknown link kind {kind!r}")
    which = "backward" if kind == "ATC-B" else "forward"
    ak = alpha * kappa

    scalar = np.isscalar(s) or np.ndim(s) == 0
    sa = np.asarray(s, dtype=complex)
    num = (bb * sa) if which == "backward" else (beta * sa + ak)
    den = sa * sa * np.exp(sa * delay) + total * sa + ak
    zero = sa == 0
    if scalar:
        if zero:
            return _dc_limit(ak, total, beta, bb, which)
        if abs(den) < 1e-300:
            raise PoleError(complex(sa), "link transfer function")
        if abs(den) < 1e-10 * abs(num):
            import logging
            logging.getLogger(__name__).warning(
                "evaluating near a pole: s=%s |den|=%.3e", complex(sa), abs(den))
        return complex(num / den)
    out = np.empty_like(sa)
    np.divide(num, den, out=out, where=~zero)
    if zero.any():
        out[zero] = _dc_limit(ak, total, beta, bb, which)
    return out


def gamma(t_h: Callable, n: int, s):
    """Head-to-tail response of n identical human-driven links: T_H(s)^n."""
    if n < 0:
        raise ConfigError("link count must be >= 0")
    if n == 0:
        return np.ones_like(np.asarray(s, dtype=complex)) if np.ndim(s) else 1.0 + 0j
    return t_h(s) ** n


def gamma_heterogeneous(links: Sequence[Callable], s):
    """Product of per-vehicle link transfer functions (heterogeneous HV
    chains; evaluation only, boundary formulas assume homogeneity)."""
    out = np.ones_like(np.asarray(s, dtype=complex)) if np.ndim(s) else 1.0 + 0j
    for t in links:
        out = out * t(s)
    return out


@dataclass(frozen=True)
class HumanLink:
    alpha_h: float = 0.1
    beta_h: float = 0.6
    kappa_h: float = 0.7
    tau: float = 0.8

    def tf(self, s):
        return closed_form_tf("HV", self.alpha_h, self.beta_h, self.kappa_h,
                              self.tau, s)

    def denominator(self, s):
        sa = np.asarray(s, dtype=complex) if np.ndim(s) else s
        return (sa * sa * np.exp(sa * self.tau)
                + (self.alpha_h + self.beta_h) * sa + self.alpha_h * self.kappa_h)

    def numerator(self, s):
        return self.beta_h * s + self.alpha_h * self.kappa_h


@dataclass(frozen=True)
class HeadToTailConfig:
    """Everything the frequency-domain side needs about one scenario: the
    ego link parameters, its kind, and the chain of human links behind it.

    kind 'HV' means the "ego" is itself a human driver (pure human chain of
    n_followers+1 links). TC enters as kind 'ATC' with alpha = 0, CC as
    kind 'ACC' with alpha = 0.
    """

    kind: str
    alpha: float
    beta: float
    kappa: float
    delay: float
    beta_b: float = 0.0
    humans: Sequence[HumanLink] = ()

    def __post_init__(self):
        if self.kind not in ("HV", "ACC", "ATC"):
            raise ConfigError(f"unknown head-to-tail kind {self.kind!r}")
        if self.kind != "ATC" and self.beta_b != 0.0:
            raise ConfigError("backward gain needs kind ATC")
        object.__setattr__(self, "humans", tuple(self.humans))

    @property
    def n_followers(self) -> int:
        return len(self.humans)

    @property
    def homogeneous(self) -> bool:
        return len(set(self.humans)) <= 1

    @property
    def human(self) -> HumanLink:
        if not self.humans:
            raise ConfigError("config has no human links")
        if not self.homogeneous:
            raise ConfigError("heterogeneous human chain where a homogeneous "
                              "one is required")
        return self.humans[0]

    def gamma(self, s):
        if not self.humans:
            return np.ones_like(np.asarray(s, dtype=complex)) if np.ndim(s) else 1.0 + 0j
        if self.homogeneous:
            return gamma(self.humans[0].tf, self.n_followers, s)
        return gamma_heterogeneous([h.tf for h in self.humans], s)

    def ego_tf(self, s, which: str = "forward"):
        if self.kind == "HV":
            return closed_form_tf("HV", self.alpha, self.beta, self.kappa,
                                  self.delay, s)
        if self.kind == "ACC":
            if which == "backward":
                return np.zeros_like(np.asarray(s, dtype=complex)) if np.ndim(s) else 0.0j
            return closed_form_tf("ACC", self.alpha, self.beta, self.kappa,
                                  self.delay, s)
        kind = "ATC-B" if which == "backward" else "ATC-F"
        return closed_form_tf(kind, self.alpha, self.beta, self.kappa,
                              self.delay, s, beta_b=self.beta_b)

    def ego_denominator(self, s):
        sa = np.asarray(s, dtype=complex) if np.ndim(s) else s
        total = self.alpha + self.beta + (self.beta_b if self.kind == "ATC" else 0.0)
        return (sa * sa * np.exp(sa * self.delay) + total * sa
                + self.alpha * self.kappa)

    def ego_numerator(self, s):
        return self.beta * s + self.alpha * self.kappa


def head_to_tail(config: HeadToTailConfig, s):
    """G(s): tail speed perturbation over head speed perturbation.

    ACC/HV: G = T * Gamma.  ATC: G = T_F * Gamma / (1 - T_B * Gamma).
    The s = 0 value is the analytic limit 1 (any ego with positive gains).
    """
    scalar = np.isscalar(s) or np.ndim(s) == 0
    if scalar and s == 0:
        return 1.0 + 0.0j
    g = config.gamma(s)
    if config.kind in ("HV", "ACC"):
        out = config.ego_tf(s) * g
    else:
        den = 1.0 - config.ego_tf(s, which="backward") * g
        if scalar and abs(den) < 1e-300:
            raise PoleError(s, "head-to-tail transfer function (virtual ring)")
        out = config.ego_tf(s, which="forward") * g / den
    if not scalar:
        sa = np.asarray(s, dtype=complex)
        out = np.asarray(out)
        out[sa == 0] = 1.0
    return out


def ring_char(config: HeadToTailConfig, s):
    """G(s) - 1, the characteristic function of the configuration driven on
    a ring (equivalently 1 - T*Gamma = 0 for an ACC/HV chain). s = 0 is
    always a root and is excluded from stability verdicts by convention."""
    if config.kind == "ATC":
        raise ConfigError("ring characteristic applies to open-chain "
                          "(HV/ACC) configurations")
    return head_to_tail(config, s) - 1.0


def config_from_chain(chain: ChainConfig, kappa: Optional[float] = None,
                      kappa_h: Optional[float] = None) -> HeadToTailConfig:
    """Derive the analysis configuration from a simulation chain.

    Range-policy gradients default to the values at the chain's equilibrium
    headways; pass ``kappa``/``kappa_h`` to pin them instead (the stability
    charts fix kappa = 0.6, kappa_h = 0.7 regardless of v_star).
    """
    behind = [v for v in chain.vehicles if v.index < 0]
    if not all(v.is_human for v in behind):
        raise ConfigError("frequency-domain analysis expects only human "
                          "drivers behind the ego")
    ahead = [v for v in chain.vehicles if v.index > 0]
    if len(ahead) > 1:
        raise ConfigError("frequency-domain analysis expects a single lead "
                          "vehicle ahead of the ego")

    def gradient(veh: VehicleSpec, override):
        if override is not None:
            return override
        h_star = range_policy_invert(veh.policy, chain.v_star)
        return kappa_at(veh.policy, h_star).kappa

    humans = tuple(
        HumanLink(alpha_h=v.controller.alpha_h, beta_h=v.controller.beta_h,
                  kappa_h=gradient(v, kappa_h), tau=v.controller.tau)
        for v in behind)

    ego = chain.ego
    ctl = ego.controller
    if isinstance(ctl, HumanGains):
        return HeadToTailConfig(kind="HV", alpha=ctl.alpha_h, beta=ctl.beta_h,
                                kappa=gradient(ego, kappa_h), delay=ctl.tau,
                                humans=humans)
    if ctl is None:
        raise ConfigError("the ego vehicle must be controlled or human")
    k = gradient(ego, kappa)
    if ctl.kind in ("ACC", "CC"):
        beta = ctl.forward_gains[0] if ctl.kind == "ACC" else ctl.v_ref_gain
        return HeadToTailConfig(kind="ACC", alpha=ctl.alpha, beta=beta,
                                kappa=k, delay=ctl.sigma, humans=humans)
    if ctl.kind in ("ATC", "TC"):
        beta = ctl.forward_gains[0] if ctl.kind == "ATC" else ctl.v_ref_gain
        if ctl.backward_links != (chain.indices[0],):
            raise ConfigError("analysis expects the backward link to reach "
                              "the farthest vehicle behind")
        return HeadToTailConfig(kind="ATC", alpha=ctl.alpha, beta=beta,
                                beta_b=ctl.backward_gains[0], kappa=k,
                                delay=ctl.sigma, humans=humans)
    raise ConfigError(f"no head-to-tail analysis for controller {ctl.kind!r}")


def config_hv_chain(n_followers: int, kappa_h: float = 0.7) -> HeadToTailConfig:
    """A pure human chain: lead + (n_followers) HVs, so G = T_H^n."""
    if n_followers < 1:
        raise ConfigError("a human chain needs at least one follower")
    link = HumanLink(kappa_h=kappa_h)
    return HeadToTailConfig(kind="HV", alpha=link.alpha_h, beta=link.beta_h,
                            kappa=kappa_h, delay=link.tau,
                            humans=(link,) * (n_followers - 1))


def config_acc(n: int, alpha: float = 0.4, beta: float = 0.5,
               kappa: float = 0.6, sigma: float = 0.6,
               human: HumanLink = HumanLink()) -> HeadToTailConfig:
    return HeadToTailConfig(kind="ACC", alpha=alpha, beta=beta, kappa=kappa,
                            delay=sigma, humans=(human,) * n)


def config_atc(n: int, alpha: float = 0.4, beta: float = 0.5,
               beta_b: float = 0.2, kappa: float = 0.6, sigma: float = 0.6,
               human: HumanLink = HumanLink()) -> HeadToTailConfig:
    if n < 1:
        raise ConfigError("ATC analysis needs at least one vehicle behind")
    return HeadToTailConfig(kind="ATC", alpha=alpha, beta=beta, beta_b=beta_b,
                            kappa=kappa, delay=sigma, humans=(human,) * n)


__all__ = [
    "PoleError", "LinearModel", "OUTPUT_ROW", "linearize", "link_tf_generic",
    "closed_form_tf", "gamma", "gamma_heterogeneous", "HumanLink",
    "HeadToTailConfig", "head_to_tail", "ring_char", "config_from_chain",
    "config_hv_chain", "config_acc", "config_atc",
]
