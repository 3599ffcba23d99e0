"""Fixed-step integration core.

The chain stepper is the hot loop of every gain sweep (one 6000-step delayed
integration per grid cell), so it exists twice with identical semantics:

* ``_chainstep`` is the compiled extension (Cython), picked by default when
  the build produced it;
* ``step_euler_python`` below is the pure-numpy fallback, picked when the
  extension is missing or when ``CAVCHAIN_PURE`` is set in the environment.

``benchmarks/bench_kernel.py`` times one against the other, and the test
suite asserts that they produce the same trajectories.

Semantics of one Euler step k -> k+1 (both backends):

1. command u[k, i] for every controlled vehicle from the state at step k:
   ``alpha_i*(F_i(h_i) - v_i) + beta_ref_i*(v_ref_i - v_i)
   + sum_links gain*(clamp(v_target) - v_i)``
2. realized a[k, i] = sat(u[k - d_i, i]) with constant (equilibrium, zero)
   command history before t0; the open-loop lead takes its profile value
3. v[k+1] = max(0, v[k] + dt*a[k]);  s[k+1] = s[k] + dt*v[k]
   (a prescribed-speed lead then overwrites its own speed sample)
4. abort with a collision report when any bumper-to-bumper headway <= 0

The speed floor at 0 is logged per vehicle, never fatal.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
import numpy as np

try:
    from . import _chainstep
except ImportError:  # extension not built; numpy fallback takes over
    _chainstep = None

HAVE_COMPILED = _chainstep is not None

LEAD_NONE = 0        # ring: every vehicle is closed-loop
LEAD_ACCEL = 1       # open-loop lead follows an acceleration sample array
LEAD_SPEED = 2       # open-loop lead speed is prescribed directly

POLICY_LINEAR = 0
POLICY_QUADRATIC = 1


@dataclass
class ChainArrays:
    """Flat, order-aligned encoding of a chain (ascending vehicle index).

    The unified command law covers every control kind: the alpha term needs
    a front link, reference tracking uses (beta_ref, v_ref), and all speed
    feedback (forward, backward, human h_dot term) lives in one CSR list of
    (target, gain, clamp) links. Human h_dot links are unclamped; controller
    links clamp the observed speed at the ego policy's speed limit.
    """

    alpha: np.ndarray
    beta_ref: np.ndarray
    v_ref: np.ndarray
    pol_kind: np.ndarray
    h_st: np.ndarray
    h_go: np.ndarray
    v_max: np.ndarray
    a_min: np.ndarray
    a_max: np.ndarray
    length: np.ndarray
    delay_steps: np.ndarray
    front: np.ndarray          # array position of the front vehicle, -1 none
    front_offset: np.ndarray   # added to the front position (ring closure)
    link_ptr: np.ndarray
    link_idx: np.ndarray
    link_gain: np.ndarray
    link_clamp: np.ndarray
    link_vmax: np.ndarray
    is_lead: np.ndarray
    lead_pos: int              # array position of the open-loop lead, -1 none

    @property
    def n_vehicles(self) -> int:
        return self.alpha.shape[0]


@dataclass
class StepResult:
    collided: bool
    step: int                  # step index of the offending state
    rear: int                  # array position of the rear vehicle
    floored: np.ndarray        # per-vehicle flag: speed floor engaged


def _eval_policy(arrays: ChainArrays, h: np.ndarray) -> np.ndarray:
    span = arrays.h_go - arrays.h_st
    lin = arrays.v_max * (h - arrays.h_st) / span
    hc = np.minimum(h, arrays.h_go)   # quadratic saturates past its vertex
    quad = arrays.v_max * (1.0 - ((arrays.h_go - hc) / span) ** 2)
    f = np.where(arrays.pol_kind == POLICY_QUADRATIC, quad, lin)
    return np.clip(f, 0.0, arrays.v_max)


def step_euler_python(arrays: ChainArrays, n_steps: int, dt: float,
                      s: np.ndarray, v: np.ndarray, u: np.ndarray, a: np.ndarray,
                      lead_mode: int, a_lead: np.ndarray, v_lead: np.ndarray) -> StepResult:
    """Numpy fallback stepper. Arrays s, v, u, a are (n_steps+1, V) with
    row 0 prefilled; remaining rows are written in place."""
    V = arrays.n_vehicles
    ids = np.arange(V)
    has_front = arrays.front >= 0
    ctrl = ~arrays.is_lead.astype(bool)
    owner = np.repeat(ids, np.diff(arrays.link_ptr))
    floored = np.zeros(V, dtype=np.uint8)
    front = np.where(has_front, arrays.front, 0)

    for k in range(n_steps + 1):
        sk, vk = s[k], v[k]
        h = sk[front] + arrays.front_offset - sk - arrays.length
        fdes = _eval_policy(arrays, h)
        cmd = np.where(has_front, arrays.alpha * (fdes - vk), 0.0) \
            + arrays.beta_ref * (arrays.v_ref - vk)
        if len(owner):
            tv = vk[arrays.link_idx]
            tv = np.where(arrays.link_clamp == 1, np.minimum(tv, arrays.link_vmax), tv)
            cmd += np.bincount(owner, weights=arrays.link_gain * (tv - vk[owner]),
                               minlength=V)
        u[k] = np.where(ctrl, cmd, 0.0)

        j = k - arrays.delay_steps
        udel = np.where(j >= 0, u[np.maximum(j, 0), ids], 0.0)
        a[k] = np.clip(udel, -arrays.a_min, arrays.a_max)
        if lead_mode != LEAD_NONE:
            a[k, arrays.lead_pos] = a_lead[k]
            u[k, arrays.lead_pos] = a_lead[k]
        if k == n_steps:
            break

        vnext = vk + dt * a[k]
        hit = vnext < 0.0
        if hit.any():
            floored |= hit.astype(np.uint8)
            vnext = np.maximum(vnext, 0.0)
        v[k + 1] = vnext
        s[k + 1] = sk + dt * vk
        if lead_mode == LEAD_SPEED:
            v[k + 1, arrays.lead_pos] = v_lead[k + 1]

        hnew = s[k + 1][front] + arrays.front_offset - s[k + 1] - arrays.length
        bad = has_front & (hnew <= 0.0)
        if bad.any():
            return StepResult(True, k + 1, int(np.argmax(bad)), floored)

    return StepResult(False, n_steps, -1, floored)


def step_euler_compiled(arrays: ChainArrays, n_steps: int, dt: float,
                        s, v, u, a, lead_mode, a_lead, v_lead) -> StepResult:
    floored = np.zeros(arrays.n_vehicles, dtype=np.uint8)
    status, step, rear = _chainstep.euler_drive(
        s, v, u, a, n_steps, dt,
        arrays.alpha, arrays.beta_ref, arrays.v_ref,
        arrays.pol_kind, arrays.h_st, arrays.h_go, arrays.v_max,
        arrays.a_min, arrays.a_max, arrays.length,
        arrays.delay_steps, arrays.front, arrays.front_offset,
        arrays.link_ptr, arrays.link_idx, arrays.link_gain,
        arrays.link_clamp, arrays.link_vmax,
        int(lead_mode), arrays.lead_pos, a_lead, v_lead, floored)
    return StepResult(bool(status), int(step), int(rear), floored)


def default_backend() -> str:
    if os.environ.get("CAVCHAIN_PURE"):
        return "python"
    return "compiled" if HAVE_COMPILED else "python"


def run_euler(arrays: ChainArrays, n_steps: int, dt: float,
              s, v, u, a, lead_mode, a_lead, v_lead,
              backend: str = "auto") -> StepResult:
    if backend == "auto":
        backend = default_backend()
    if backend == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled kernel requested but the extension is not built")
        return step_euler_compiled(arrays, n_steps, dt, s, v, u, a,
                                   lead_mode, a_lead, v_lead)
    if backend == "python":
        return step_euler_python(arrays, n_steps, dt, s, v, u, a,
                                 lead_mode, a_lead, v_lead)
    raise ValueError(f"unknown backend {backend!r}")


__all__ = [
    "ChainArrays", "StepResult", "run_euler", "step_euler_python",
    "step_euler_compiled", "default_backend", "HAVE_COMPILED",
    "LEAD_NONE", "LEAD_ACCEL", "LEAD_SPEED", "POLICY_LINEAR", "POLICY_QUADRATIC",
]
