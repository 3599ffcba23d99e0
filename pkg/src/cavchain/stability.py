"""Plant/string stability verdicts, characteristic roots, and boundary curves.

Plant stability asks that every root of the chain's characteristic
functions lie in the open left half-plane; roots are counted by the argument
principle on rectangle contours and refined by damped Newton. String
stability asks that the head-to-tail magnitude stay below one for every
positive frequency, tested through the sign of

    P(omega) = (|D(G(i*omega))|^2 - |N(G(i*omega))|^2) / omega^2

with the human-chain response Gamma folded into numerator and denominator as
an evaluated complex factor. P > 0 exactly where |G| < 1, and P extends
continuously to omega = 0 where its closed form separates the omega = 0
stability boundary.

Boundary curves come from the parametric plant formulas and, for the
omega > 0 string family, from solving the 2x2 real linear system that
G(i*omega) = e^{-iK} imposes on the two free gains. Emitted points therefore
satisfy their defining residuals by construction; the tests re-check them
against independently transcribed closed forms.

Verdicts use strict inequalities: a configuration exactly on a boundary
counts as unstable.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace as dc_replace
from multiprocessing import get_context
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .freqdomain import HeadToTailConfig, HumanLink, head_to_tail
from .model import ConfigError

TWO_PI = 2.0 * math.pi

PLANT_UNSTABLE = 0
STRING_UNSTABLE = 1
STRING_STABLE = 2
INDETERMINATE = -1


# ---------------------------------------------------------------------------
# P(omega) and its omega -> 0 closed form

def p_omega(config: HeadToTailConfig, omega):
    """Scaled denominator-minus-numerator of |G(i*omega)|^2; positive iff
    |G(i*omega)| < 1. Accepts a positive scalar or array of frequencies."""
    om = np.asarray(omega, dtype=float)
    if np.any(om <= 0.0):
        raise ConfigError("p_omega is defined for omega > 0")
    s = 1j * om
    g = config.gamma(s)
    beta_b = config.beta_b if config.kind == "ATC" else 0.0
    ak = config.alpha * config.kappa
    total = config.alpha + config.beta + beta_b
    num = (config.beta * s + ak) * g
    den = -om * om * np.exp(s * config.delay) + total * s + ak - beta_b * s * g
    out = (np.abs(den) ** 2 - np.abs(num) ** 2) / (om * om)
    return float(out) if np.isscalar(omega) else out


def p_zero(config: HeadToTailConfig) -> float:
    """Closed-form limit of P as omega -> 0 (homogeneous human chain):

    alpha * ( alpha + 2*beta - 2*kappa
              + N * alpha*kappa^2/(alpha_h*kappa_h^2) * (alpha_h + 2*beta_h - 2*kappa_h)
              - 2*N*(kappa/kappa_h)*beta_b )
    """
    n = config.n_followers
    a, b, k = config.alpha, config.beta, config.kappa
    bb = config.beta_b if config.kind == "ATC" else 0.0
    inner = a + 2.0 * b - 2.0 * k
    if n > 0:
        h = config.human
        inner += n * a * k * k / (h.alpha_h * h.kappa_h ** 2) \
            * (h.alpha_h + 2.0 * h.beta_h - 2.0 * h.kappa_h)
        inner -= 2.0 * n * (k / h.kappa_h) * bb
    return a * inner


def _scan_grid(omega_max: float, n: int) -> np.ndarray:
    n_log = n // 2
    log_part = np.geomspace(omega_max * 1e-3, omega_max, n_log)
    lin_part = np.linspace(omega_max / (n - n_log), omega_max, n - n_log)
    return np.unique(np.concatenate([log_part, lin_part]))


def string_margin(config: HeadToTailConfig, omega_max: float = TWO_PI,
                  n_grid: int = 2000, refine: int = 10) -> Tuple[float, float]:
    """(worst_omega, min P) over a log+linear grid on (0, omega_max],
    locally refined around sign changes and interior minima of P."""
    om = _scan_grid(omega_max, n_grid)
    p = p_omega(config, om)
    extra = []
    signchg = np.nonzero(np.signbit(p[1:]) != np.signbit(p[:-1]))[0]
    for i in signchg:
        extra.append(np.linspace(om[i], om[i + 1], refine + 2)[1:-1])
    interior = np.nonzero((p[1:-1] <= p[:-2]) & (p[1:-1] <= p[2:]))[0] + 1
    if interior.size:
        worst = interior[np.argsort(p[interior])[:8]]
        for i in worst:
            extra.append(np.linspace(om[i - 1], om[i + 1], 2 * refine + 2)[1:-1])
    if extra:
        om2 = np.concatenate(extra)
        p2 = p_omega(config, om2)
        om = np.concatenate([om, om2])
        p = np.concatenate([p, p2])
    i = int(np.argmin(p))
    return float(om[i]), float(p[i])


# ---------------------------------------------------------------------------
# characteristic functions (entire, pole-free callables)

def ego_char_fn(config: HeadToTailConfig) -> Callable:
    """Characteristic function of the ego subsystem. When alpha = 0 the
    structural root at s = 0 (free position integrator) is deflated."""
    beta_b = config.beta_b if config.kind == "ATC" else 0.0
    total = config.alpha + config.beta + beta_b
    ak = config.alpha * config.kappa
    d = config.delay
    if config.alpha == 0.0:
        return lambda s: s * np.exp(np.asarray(s, dtype=complex) * d) + total
    return lambda s: (np.asarray(s, dtype=complex) ** 2 * np.exp(np.asarray(s, dtype=complex) * d)
                      + total * np.asarray(s, dtype=complex) + ak)


def human_char_fn(link: HumanLink) -> Callable:
    return link.denominator


def virtual_ring_char_fn(config: HeadToTailConfig) -> Callable:
    """Entire characteristic of 1 - T_B*Gamma = 0:
    D_ego(s) * prod D_H(s) - beta_b * s * prod N_H(s), with the alpha = 0
    case deflated by its structural s = 0 root."""
    if config.kind != "ATC":
        raise ConfigError("the virtual ring exists for ATC configurations")
    humans = config.humans
    ego = ego_char_fn(config)
    bb = config.beta_b
    deflated = config.alpha == 0.0

    def char(s):
        sa = np.asarray(s, dtype=complex)
        dh = np.ones_like(sa)
        nh = np.ones_like(sa)
        for h in humans:
            dh = dh * h.denominator(sa)
            nh = nh * h.numerator(sa)
        back = bb * nh if deflated else bb * sa * nh
        out = ego(sa) * dh - back
        return out if np.ndim(s) else complex(out)

    return char


def open_ring_char_fn(config: HeadToTailConfig) -> Callable:
    """Entire form of the ring characteristic for an HV/ACC chain driven on
    a ring: N_ego * prod N_H - D_ego * prod D_H (zero exactly where
    T*Gamma = 1). s = 0 is always a root."""
    if config.kind == "ATC":
        raise ConfigError("open-chain ring characteristic needs kind HV/ACC")

    def char(s):
        sa = np.asarray(s, dtype=complex)
        dh = np.ones_like(sa)
        nh = np.ones_like(sa)
        for h in config.humans:
            dh = dh * h.denominator(sa)
            nh = nh * h.numerator(sa)
        out = config.ego_numerator(sa) * nh - config.ego_denominator(sa) * dh
        return out if np.ndim(s) else complex(out)

    return char


# ---------------------------------------------------------------------------
# argument-principle root search

@dataclass(frozen=True)
class Rect:
    re0: float
    re1: float
    im0: float
    im1: float

    @property
    def width(self) -> float:
        return self.re1 - self.re0

    @property
    def height(self) -> float:
        return self.im1 - self.im0

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re0 + self.re1), 0.5 * (self.im0 + self.im1))

    def contains(self, s: complex, slack: float = 0.0) -> bool:
        return (self.re0 - slack <= s.real <= self.re1 + slack
                and self.im0 - slack <= s.imag <= self.im1 + slack)


DEFAULT_REGION = Rect(-3.0, 1.0, 0.0, TWO_PI)


def _contour(rect: Rect, n_side: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n_side, endpoint=False)
    bottom = rect.re0 + t * rect.width + 1j * rect.im0
    right = rect.re1 + 1j * (rect.im0 + t * rect.height)
    top = rect.re1 - t * rect.width + 1j * rect.im1
    left = rect.re0 + 1j * (rect.im1 - t * rect.height)
    pts = np.concatenate([bottom, right, top, left])
    return np.append(pts, pts[0])


def winding_number(fn: Callable, rect: Rect, n_side: int = 128,
                   max_doublings: int = 8) -> Optional[int]:
    """Number of zeros inside the rectangle, or None when the contour cannot
    be resolved (a zero essentially on the contour).

    The phase dynamic range of chained characteristics is huge (human-chain
    factors enter as 10th powers), so only exact zeros and non-finite values
    disqualify a sample; phase aliasing near an off-contour zero is caught
    by the step-size test and cured by refinement.
    """
    for _ in range(max_doublings + 1):
        z = fn(_contour(rect, n_side))
        mag = np.abs(z)
        if not np.all(np.isfinite(mag)) or mag.min() < 1e-300:
            return None
        dphi = np.angle(z[1:] / z[:-1])
        if np.abs(dphi).max() < 0.5 * math.pi:
            total = dphi.sum() / TWO_PI
            w = int(round(total))
            if abs(total - w) > 0.25:
                return None
            return w
        n_side *= 2
    return None


def _newton(fn: Callable, s0: complex, tol: float, max_iter: int = 60) -> Optional[complex]:
    s = complex(s0)
    f = complex(fn(s))
    for _ in range(max_iter):
        h = 1e-7 * max(1.0, abs(s))
        df = (complex(fn(s + h)) - complex(fn(s - h))) / (2.0 * h)
        if df == 0:
            return None
        step = f / df
        for _ in range(40):
            s_new = s - step
            f_new = complex(fn(s_new))
            if abs(f_new) <= abs(f) or abs(step) < 1e-16 * max(1.0, abs(s)):
                break
            step *= 0.5
        converged = abs(s_new - s) < tol * max(1.0, abs(s_new))
        s, f = s_new, f_new
        if converged:
            return s
    return None


@dataclass
class RootSearchResult:
    roots: List[complex] = field(default_factory=list)
    uncovered: List[Rect] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return not self.uncovered


def find_roots(char_fn: Callable, region: Rect = DEFAULT_REGION,
               tol: float = 1e-12, max_depth: int = 40) -> RootSearchResult:
    """All zeros of an analytic function inside a rectangle, located by
    recursive argument-principle bisection and polished by damped Newton.

    ``char_fn`` must accept complex numpy arrays. Zeros very close to the
    contour make the winding integral ill-conditioned; the region is then
    perturbed slightly, and sub-rectangles that still cannot be resolved are
    reported in ``uncovered`` rather than silently dropped.
    """
    result = RootSearchResult()

    def winding_robust(rect: Rect) -> Optional[int]:
        w = winding_number(char_fn, rect)
        if w is not None:
            return w
        for bump in (1e-6, 3e-6, 1e-5):
            grown = Rect(rect.re0 - bump * max(1.0, rect.width),
                         rect.re1 + bump * max(1.0, rect.width),
                         rect.im0 - bump * max(1.0, rect.height),
                         rect.im1 + bump * max(1.0, rect.height))
            w = winding_number(char_fn, grown)
            if w is not None:
                return w
        return None

    def split(rect: Rect, frac: float):
        if rect.width >= rect.height:
            mid = rect.re0 + frac * rect.width
            return (Rect(rect.re0, mid, rect.im0, rect.im1),
                    Rect(mid, rect.re1, rect.im0, rect.im1))
        mid = rect.im0 + frac * rect.height
        return (Rect(rect.re0, rect.re1, rect.im0, mid),
                Rect(rect.re0, rect.re1, mid, rect.im1))

    def visit(rect: Rect, depth: int, w: Optional[int] = None):
        if w is None:
            w = winding_robust(rect)
        if w is None:
            result.uncovered.append(rect)
            return
        if w == 0:
            return
        small = max(rect.width, rect.height) < 1e-6
        if w == 1 or small:
            root = _newton(char_fn, rect.center, tol)
            if root is not None and rect.contains(root, slack=1e-6):
                if all(abs(root - r) > 1e-8 for r in result.roots):
                    result.roots.extend([root] * (w if small else 1))
                return
            if small:
                result.uncovered.append(rect)
                return
        if depth >= max_depth:
            result.uncovered.append(rect)
            return
        # a root sitting on the split line ruins both children's windings;
        # move the line until the child counts resolve and add up
        for frac in (0.5, 0.45, 0.57, 0.41, 0.62, 0.37):
            kids = split(rect, frac)
            w0 = winding_robust(kids[0])
            if w0 is None:
                continue
            w1 = winding_robust(kids[1])
            if w1 is None or w0 + w1 != w:
                continue
            visit(kids[0], depth + 1, w0)
            visit(kids[1], depth + 1, w1)
            return
        result.uncovered.append(rect)

    visit(region, 0)
    result.roots.sort(key=lambda r: (-r.real, abs(r.imag)))
    return result


# ---------------------------------------------------------------------------
# verdicts

@dataclass(frozen=True)
class StabilityVerdict:
    plant_stable: bool
    string_stable: bool
    rightmost_root: Optional[complex]
    worst_omega: float
    worst_margin: float
    p_zero: float
    indeterminate: bool = False


def _plant_char_fns(config: HeadToTailConfig) -> List[Callable]:
    fns = [ego_char_fn(config)]
    for link in sorted(set(config.humans), key=lambda h: (h.alpha_h, h.beta_h, h.kappa_h, h.tau)):
        fns.append(human_char_fn(link))
    if config.kind == "ATC" and config.beta_b > 0.0 and config.n_followers > 0:
        fns.append(virtual_ring_char_fn(config))
    return fns


def plant_verdict(config: HeadToTailConfig, region: Rect = DEFAULT_REGION,
                  tol: float = 1e-12):
    """Root-search plant stability: the ego characteristic, every distinct
    human link, and (ATC) the virtual-ring characteristic must all keep
    their roots in the open left half-plane.

    The public region convention is Im in [0, im_max] with conjugate pairs
    implied; the search mirrors it across the real axis internally.
    Returns (stable, rightmost_root, all_roots); roots are reported with
    nonnegative imaginary part.
    """
    search = Rect(region.re0, region.re1, -region.im1, region.im1)
    roots: List[complex] = []
    indet = False
    for fn in _plant_char_fns(config):
        res = find_roots(fn, search, tol=tol)
        if not res.converged:
            indet = True
        roots.extend(r for r in res.roots if r.imag >= -1e-12)
    roots.sort(key=lambda r: -r.real)
    rightmost = roots[0] if roots else None
    stable = (not indet) and all(r.real < 0.0 for r in roots)
    return stable, rightmost, roots


def _plant_winding_count(config: HeadToTailConfig, re_max: float = 3.0,
                         im_max: float = TWO_PI) -> Optional[int]:
    """Number of right-half-plane roots across all plant characteristics.
    A root grazing the imaginary-axis edge is absorbed by nudging the edge
    slightly left (conservative: near-boundary roots count as unstable)."""
    total = 0
    n_side = 192 * (2 + config.n_followers)
    for fn in _plant_char_fns(config):
        w = None
        for re0 in (0.0, -1e-7, -1e-5):
            w = winding_number(fn, Rect(re0, re_max, -im_max, im_max),
                               n_side=n_side)
            if w is not None:
                break
        if w is None:
            return None
        total += w
    return total


def string_verdict(config: HeadToTailConfig, omega_max: float = TWO_PI,
                   n_grid: int = 2000, compute_rightmost: bool = False,
                   region: Rect = DEFAULT_REGION) -> StabilityVerdict:
    """String stability in the L2 sense: plant stability, a positive
    omega -> 0 limit of P, and P(omega) > 0 on the refined scan grid.

    The p_zero > 0 requirement is skipped when alpha = 0 exactly: P(0) is
    then structurally zero (TC sits on the alpha = 0 boundary line) and the
    small-omega grid samples carry the limit's sign instead.
    """
    rightmost = None
    if compute_rightmost:
        plant_ok, rightmost, _ = plant_verdict(config, region=region)
        indet = False
    else:
        count = _plant_winding_count(config, re_max=max(3.0, region.re1),
                                     im_max=region.im1)
        indet = count is None
        plant_ok = (count == 0)
    p0 = p_zero(config)
    worst_omega, worst_margin = string_margin(config, omega_max, n_grid)
    zero_ok = (p0 > 0.0) or (config.alpha == 0.0)
    string_ok = bool(plant_ok and zero_ok and worst_margin > 0.0 and not indet)
    return StabilityVerdict(plant_stable=bool(plant_ok and not indet),
                            string_stable=string_ok,
                            rightmost_root=rightmost,
                            worst_omega=worst_omega, worst_margin=worst_margin,
                            p_zero=p0, indeterminate=indet)


def brute_force_string_stable(config: HeadToTailConfig,
                              omega_step: float = 1e-3,
                              omega_max: float = TWO_PI) -> bool:
    """Oracle-style string verdict: plant winding count plus a dense
    |G(i*omega)| < 1 scan with no P(omega) machinery involved."""
    count = _plant_winding_count(config)
    if count is None or count > 0:
        return False
    om = np.arange(omega_step, omega_max + 0.5 * omega_step, omega_step)
    g = head_to_tail(config, 1j * om)
    return bool(np.all(np.isfinite(g)) and np.max(np.abs(g)) < 1.0)


# ---------------------------------------------------------------------------
# boundary curves

@dataclass
class BoundaryCurve:
    kind: str                  # plant-s0 | plant-iomega | plant-ring |
                               # string-omega0 | string-K | string-envelope | ring-k
    plane: Tuple[str, str]
    points: np.ndarray         # (n, 2): columns follow `plane`
    samples: np.ndarray        # parameter value per point (Omega or omega)
    wavenumber: Optional[float] = None   # K for string-K curves
    k_index: Optional[int] = None        # k for ring curves
    skipped: int = 0                     # singular samples dropped


def _finite_filter(x: np.ndarray, y: np.ndarray, param: np.ndarray,
                   keep: np.ndarray = None):
    ok = np.isfinite(x) & np.isfinite(y)
    if keep is not None:
        ok &= keep
    return x[ok], y[ok], param[ok], int((~ok).sum())


def _gamma_on(config: HeadToTailConfig, omega: np.ndarray) -> np.ndarray:
    return np.asarray(config.gamma(1j * omega), dtype=complex)


def atc_plant_boundaries(config: HeadToTailConfig,
                         plane: Tuple[str, str] = ("beta", "alpha"),
                         omega_grid: np.ndarray = None,
                         beta_range: Tuple[float, float] = (0.0, 1.0)) -> List[BoundaryCurve]:
    """Plant stability boundary families of ATC (ACC when beta_b = 0).

    (beta, alpha) plane: the alpha = 0 line, the s = +/- i*Omega boundary of
    the ego subsystem ``alpha = Omega^2 cos(Omega*sigma)/kappa,
    beta = Omega sin(Omega*sigma) - alpha - beta_b``, and for a closed
    virtual ring the branch with Gamma(i*Omega) folded in.

    (beta, beta_b) plane at fixed alpha: the ego branch becomes the straight
    line beta_b = Omega*(alpha) sin(Omega*(alpha)*sigma) - alpha - beta
    with Omega*(alpha) from bisection, plus the parametric ring branch.
    """
    sigma, kappa = config.delay, config.kappa
    beta_b = config.beta_b if config.kind == "ATC" else 0.0
    if omega_grid is None:
        omega_grid = np.linspace(1e-4, TWO_PI, 1440)
    curves: List[BoundaryCurve] = []

    if plane == ("beta", "alpha"):
        bspan = np.asarray(beta_range, dtype=float)
        curves.append(BoundaryCurve(
            kind="plant-s0", plane=plane,
            points=np.column_stack([bspan, np.zeros(2)]),
            samples=np.zeros(2)))
        om = omega_grid
        alpha = om * om * np.cos(om * sigma) / kappa
        beta = om * np.sin(om * sigma) - alpha - beta_b
        b, a, p, sk = _finite_filter(beta, alpha, om)
        curves.append(BoundaryCurve(kind="plant-iomega", plane=plane,
                                    points=np.column_stack([b, a]),
                                    samples=p, skipped=sk))
        if config.kind == "ATC" and beta_b > 0.0 and config.n_followers > 0:
            g = _gamma_on(config, om)
            alpha = (om * om * np.cos(om * sigma) - om * g.imag * beta_b) / kappa
            beta = om * np.sin(om * sigma) - alpha - (1.0 - g.real) * beta_b
            b, a, p, sk = _finite_filter(beta, alpha, om)
            curves.append(BoundaryCurve(kind="plant-ring", plane=plane,
                                        points=np.column_stack([b, a]),
                                        samples=p, skipped=sk))
        return curves

    if plane != ("beta", "beta_b"):
        raise ConfigError(f"unknown gain plane {plane!r}")
    alpha = config.alpha
    # ego branch: find every Omega* with Omega^2 cos(Omega*sigma) = alpha*kappa
    # on (0, pi/(2 sigma)), then each gives a line beta_b = C - beta.
    hi = 0.5 * math.pi / sigma
    grid = np.linspace(1e-9, hi - 1e-9, 2048)
    fvals = grid * grid * np.cos(grid * sigma) - alpha * kappa
    for i in np.nonzero(np.signbit(fvals[1:]) != np.signbit(fvals[:-1]))[0]:
        lo_, hi_ = grid[i], grid[i + 1]
        for _ in range(80):
            mid = 0.5 * (lo_ + hi_)
            if (mid * mid * math.cos(mid * sigma) - alpha * kappa) * \
               (lo_ * lo_ * math.cos(lo_ * sigma) - alpha * kappa) <= 0.0:
                hi_ = mid
            else:
                lo_ = mid
        om_star = 0.5 * (lo_ + hi_)
        c = om_star * math.sin(om_star * sigma) - alpha
        bspan = np.asarray(beta_range, dtype=float)
        curves.append(BoundaryCurve(
            kind="plant-iomega", plane=plane,
            points=np.column_stack([bspan, c - bspan]),
            samples=np.full(2, om_star)))
    if config.kind == "ATC" and config.n_followers > 0:
        om = omega_grid
        g = _gamma_on(config, om)
        den = om * g.imag
        keep = np.abs(den) > 1e-9 * np.maximum(
            np.abs(om * om * np.cos(om * sigma) - alpha * kappa), 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            bb = (om * om * np.cos(om * sigma) - alpha * kappa) / den
            beta = om * np.sin(om * sigma) - alpha - (1.0 - g.real) * bb
        b, y, p, sk = _finite_filter(beta, bb, om, keep)
        curves.append(BoundaryCurve(kind="plant-ring", plane=plane,
                                    points=np.column_stack([b, y]),
                                    samples=p, skipped=sk))
    return curves


def _string_linear_solve(omega: np.ndarray, gam: np.ndarray, K: float,
                         kappa: float, sigma: float, plane: Tuple[str, str],
                         fixed: float):
    """Solve G(i*omega) = e^{-iK} for the two free gains at each omega.

    The defining equation, cleared of denominators,
        omega^2 e^{i omega sigma}
        + alpha*(e^{iK} kappa Gamma - i omega - kappa)
        + beta * i omega (e^{iK} Gamma - 1)
        + beta_b * i omega (Gamma - 1) = 0
    is linear in (alpha, beta, beta_b); two of them are unknown.
    Returns (x, y, keep): the plane's coordinates and a validity mask.
    """
    eik = cmath.exp(1j * K)
    c_alpha = eik * kappa * gam - 1j * omega - kappa
    c_beta = 1j * omega * (eik * gam - 1.0)
    c_bb = 1j * omega * (gam - 1.0)
    const = omega * omega * np.exp(1j * omega * sigma)
    if plane == ("beta", "alpha"):
        cu, cv = c_alpha, c_beta          # unknowns (alpha, beta)
        rhs = -(const + fixed * c_bb)
    elif plane == ("beta", "beta_b"):
        cu, cv = c_bb, c_beta             # unknowns (beta_b, beta)
        rhs = -(const + fixed * c_alpha)
    else:
        raise ConfigError(f"unknown gain plane {plane!r}")
    det = cu.real * cv.imag - cu.imag * cv.real
    scale = np.maximum(np.abs(cu), np.abs(cv)) ** 2
    keep = np.abs(det) > 1e-9 * np.maximum(scale, 1e-30)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (rhs.real * cv.imag - rhs.imag * cv.real) / det
        v = (cu.real * rhs.imag - cu.imag * rhs.real) / det
    if plane == ("beta", "alpha"):
        return v, u, keep                 # x=beta, y=alpha
    return v, u, keep                     # x=beta, y=beta_b


def atc_string_boundaries(config: HeadToTailConfig,
                          plane: Tuple[str, str] = ("beta", "alpha"),
                          omega_grid: np.ndarray = None,
                          k_grid: np.ndarray = None,
                          beta_range: Tuple[float, float] = (0.0, 1.0)) -> List[BoundaryCurve]:
    """String stability boundaries: the omega = 0 lines and the omega > 0
    wavenumber family for K on [0, 2*pi)."""
    if omega_grid is None:
        omega_grid = np.linspace(1e-4, TWO_PI, 1440)
    if k_grid is None:
        k_grid = np.arange(1, 720) * TWO_PI / 720.0
    kappa, sigma = config.kappa, config.delay
    n = config.n_followers
    curves: List[BoundaryCurve] = []
    bspan = np.linspace(beta_range[0], beta_range[1], 64)

    if plane == ("beta", "alpha"):
        curves.append(BoundaryCurve(
            kind="string-omega0", plane=plane,
            points=np.column_stack([np.asarray(beta_range, float), np.zeros(2)]),
            samples=np.zeros(2)))
        denom0 = 1.0
        bb = config.beta_b if config.kind == "ATC" else 0.0
        shift = 0.0
        if n > 0:
            h = config.human
            denom0 = 1.0 + n * kappa * kappa / (h.alpha_h * h.kappa_h ** 2) \
                * (h.alpha_h + 2.0 * h.beta_h - 2.0 * h.kappa_h)
            shift = n * (kappa / h.kappa_h) * bb
        if abs(denom0) > 1e-12:
            alpha_line = 2.0 * (kappa - bspan + shift) / denom0
            curves.append(BoundaryCurve(kind="string-omega0", plane=plane,
                                        points=np.column_stack([bspan, alpha_line]),
                                        samples=np.zeros_like(bspan)))
        fixed = bb
    else:
        if n == 0:
            raise ConfigError("the (beta, beta_b) plane needs followers")
        h = config.human
        a = config.alpha
        if a != 0.0:
            # for alpha = 0 the omega -> 0 factor vanishes identically and
            # this line degenerates (the reference-tracking special case)
            bb_line = h.kappa_h / (2.0 * n * kappa) * (
                a + 2.0 * bspan - 2.0 * kappa
                + n * a * kappa * kappa / (h.alpha_h * h.kappa_h ** 2)
                * (h.alpha_h + 2.0 * h.beta_h - 2.0 * h.kappa_h))
            curves.append(BoundaryCurve(kind="string-omega0", plane=plane,
                                        points=np.column_stack([bspan, bb_line]),
                                        samples=np.zeros_like(bspan)))
        fixed = a

    gam = _gamma_on(config, omega_grid)
    for K in np.atleast_1d(k_grid):
        x, y, keep = _string_linear_solve(omega_grid, gam, float(K), kappa,
                                          sigma, plane, fixed)
        xs, ys, ps, sk = _finite_filter(x, y, omega_grid, keep)
        curves.append(BoundaryCurve(kind="string-K", plane=plane,
                                    points=np.column_stack([xs, ys]),
                                    samples=ps, wavenumber=float(K), skipped=sk))
    return curves


def envelope_curve(curves: Sequence[BoundaryCurve], x_range: Tuple[float, float],
                   n_bins: int = 200, y_min: float = 0.0) -> Optional[BoundaryCurve]:
    """Graphical envelope of the K-family: per-x minimum over all curve
    samples with y above ``y_min`` (the construction used for the solid
    string boundary in the charts)."""
    family = [c for c in curves if c.kind == "string-K"]
    if not family:
        return None
    edges = np.linspace(x_range[0], x_range[1], n_bins + 1)
    best = np.full(n_bins, np.inf)
    for c in family:
        x, y = c.points[:, 0], c.points[:, 1]
        ok = (x >= x_range[0]) & (x <= x_range[1]) & (y > y_min) & np.isfinite(y)
        if not ok.any():
            continue
        bins = np.clip(np.searchsorted(edges, x[ok], side="right") - 1, 0, n_bins - 1)
        np.minimum.at(best, bins, y[ok])
    centers = 0.5 * (edges[:-1] + edges[1:])
    good = np.isfinite(best)
    if not good.any():
        return None
    return BoundaryCurve(kind="string-envelope", plane=family[0].plane,
                         points=np.column_stack([centers[good], best[good]]),
                         samples=centers[good])


def ring_boundaries(config: HeadToTailConfig, k_values: Sequence[int] = None,
                    omega_grid: np.ndarray = None) -> List[BoundaryCurve]:
    """Stability boundary curves of the configuration driven on a ring.

    Homogeneous human ring (kind HV, N followers, N+1 vehicles): one curve
    per k in 1..N via the substitution Gamma = e^{i 2k pi/(N+1)}, K = 0 in
    the string-boundary linear system (the k = 0 branch is the s = 0
    double-root case and is excluded). Mixed ring (kind ACC over N HVs):
    the K = 0 curve with Gamma(i*omega) evaluated along the human chain.
    """
    if omega_grid is None:
        omega_grid = np.linspace(1e-4, TWO_PI, 1440)
    kappa, sigma = config.kappa, config.delay
    curves: List[BoundaryCurve] = []
    if config.kind == "HV":
        n_veh = config.n_followers + 1
        if k_values is None:
            k_values = range(1, n_veh)
        for k in k_values:
            if k % n_veh == 0:
                continue   # s = 0 double root branch
            theta = TWO_PI * k / n_veh
            gam = np.full_like(omega_grid, cmath.exp(1j * theta), dtype=complex)
            x, y, keep = _string_linear_solve(omega_grid, gam, 0.0, kappa,
                                              sigma, ("beta", "alpha"), 0.0)
            xs, ys, ps, sk = _finite_filter(x, y, omega_grid, keep)
            curves.append(BoundaryCurve(kind="ring-k", plane=("beta", "alpha"),
                                        points=np.column_stack([xs, ys]),
                                        samples=ps, k_index=int(k), skipped=sk))
        return curves
    if config.kind == "ACC":
        gam = _gamma_on(config, omega_grid)
        x, y, keep = _string_linear_solve(omega_grid, gam, 0.0, kappa, sigma,
                                          ("beta", "alpha"), 0.0)
        xs, ys, ps, sk = _finite_filter(x, y, omega_grid, keep)
        curves.append(BoundaryCurve(kind="ring-k", plane=("beta", "alpha"),
                                    points=np.column_stack([xs, ys]),
                                    samples=ps, k_index=None, skipped=sk))
        return curves
    raise ConfigError("ring boundaries are defined for HV and ACC chains")


# ---------------------------------------------------------------------------
# stability charts

@dataclass
class StabilityChart:
    plane: Tuple[str, str]
    x_edges: np.ndarray
    y_edges: np.ndarray
    classes: np.ndarray            # (ny, nx) int8, codes above
    curves: List[BoundaryCurve]
    config: HeadToTailConfig
    meta: dict

    @property
    def x_centers(self) -> np.ndarray:
        return 0.5 * (self.x_edges[:-1] + self.x_edges[1:])

    @property
    def y_centers(self) -> np.ndarray:
        return 0.5 * (self.y_edges[:-1] + self.y_edges[1:])

    def stable_cell_count(self) -> int:
        return int((self.classes == STRING_STABLE).sum())


def config_at(base: HeadToTailConfig, plane: Tuple[str, str], x: float,
              y: float) -> HeadToTailConfig:
    """Substitute one grid point's gains into the base configuration."""
    if plane == ("beta", "alpha"):
        return dc_replace(base, beta=float(x), alpha=float(y))
    if plane == ("beta", "beta_b"):
        return dc_replace(base, beta=float(x), beta_b=float(y))
    raise ConfigError(f"unknown gain plane {plane!r}")


class _ChartEngine:
    """Vectorized per-cell classification with chart-level precomputation:
    the plant-count contour samples, the human-chain factors along them, the
    human links' own root count, and Gamma on the P scan grid."""

    def __init__(self, base: HeadToTailConfig, plane: Tuple[str, str],
                 omega_max: float, n_scan: int = 2000,
                 re_max: float = 3.0, im_max: float = TWO_PI):
        self.base = base
        self.plane = plane
        n_side = 192 * (2 + base.n_followers)
        self.contour = _contour(Rect(0.0, re_max, -im_max, im_max), n_side)
        s = self.contour
        self.s = s
        self.s2e = s * s * np.exp(s * base.delay)
        self.se = s * np.exp(s * base.delay)
        dh = np.ones_like(s)
        nh = np.ones_like(s)
        for h in base.humans:
            dh = dh * h.denominator(s)
            nh = nh * h.numerator(s)
        self.dh, self.nh = dh, nh
        self.human_rhp = 0
        for link in set(base.humans):
            w = winding_number(link.denominator,
                               Rect(0.0, re_max, -im_max, im_max), n_side=512)
            self.human_rhp += 0 if w is None else w
        self.scan = _scan_grid(omega_max, n_scan)
        self.gam_scan = np.asarray(base.gamma(1j * self.scan), dtype=complex)
        self.is_atc = base.kind == "ATC"

    def _winding(self, values: np.ndarray) -> Optional[int]:
        mag = np.abs(values)
        if not np.all(np.isfinite(mag)) or mag.min() < 1e-300:
            return None
        dphi = np.angle(values[1:] / values[:-1])
        if np.abs(dphi).max() >= 0.5 * math.pi:
            return None
        total = dphi.sum() / TWO_PI
        w = int(round(total))
        return w if abs(total - w) <= 0.25 else None

    def _p_values(self, alpha: float, beta: float, beta_b: float) -> np.ndarray:
        om = self.scan
        g = self.gam_scan
        ak = alpha * self.base.kappa
        total = alpha + beta + beta_b
        s = 1j * om
        num = (beta * s + ak) * g
        den = -om * om * np.exp(s * self.base.delay) + total * s + ak - beta_b * s * g
        return (np.abs(den) ** 2 - np.abs(num) ** 2) / (om * om)

    def classify(self, x: float, y: float) -> int:
        if self.plane == ("beta", "alpha"):
            alpha, beta = float(y), float(x)
            beta_b = self.base.beta_b if self.is_atc else 0.0
        else:
            alpha, beta = self.base.alpha, float(x)
            beta_b = float(y)
        ak = alpha * self.base.kappa
        total = alpha + beta + beta_b
        if alpha == 0.0:
            ego = self.se + total
        else:
            ego = self.s2e + total * self.s + ak
        unstable: Optional[int] = self._winding(ego)
        if unstable is not None:
            unstable += self.human_rhp
            if self.is_atc and beta_b > 0.0 and self.base.n_followers > 0:
                back = beta_b * self.nh if alpha == 0.0 else beta_b * self.s * self.nh
                wr = self._winding(ego * self.dh - back)
                unstable = None if wr is None else unstable + wr
        if unstable is None:
            # a root grazes the fixed contour; retry with the adaptive,
            # perturbation-tolerant counter before giving up on the cell
            unstable = _plant_winding_count(config_at(self.base, self.plane, x, y))
            if unstable is None:
                return INDETERMINATE
        if unstable > 0:
            return PLANT_UNSTABLE
        p0 = p_zero(config_at(self.base, self.plane, x, y))
        if alpha != 0.0 and p0 <= 0.0:
            return STRING_UNSTABLE
        p = self._p_values(alpha, beta, beta_b)
        if np.min(p) <= 0.0:
            return STRING_UNSTABLE
        # refine around the smallest interior minima before declaring stable
        order = np.argsort(p)[:6]
        cfg = config_at(self.base, self.plane, x, y)
        for i in order:
            lo = self.scan[max(i - 1, 0)]
            hi = self.scan[min(i + 1, len(self.scan) - 1)]
            fine = np.linspace(lo, hi, 22)[1:-1]
            if np.min(p_omega(cfg, fine)) <= 0.0:
                return STRING_UNSTABLE
        return STRING_STABLE


_ENGINE: Optional[_ChartEngine] = None
_GRID = None


def _engine_init(base, plane, omega_max, x_centers, y_centers):
    global _ENGINE, _GRID
    _ENGINE = _ChartEngine(base, plane, omega_max)
    _GRID = (x_centers, y_centers)


def _classify_row(j: int) -> list:
    x_centers, y_centers = _GRID
    return [_ENGINE.classify(float(x), float(y_centers[j])) for x in x_centers]


def build_chart(base: HeadToTailConfig, plane: Tuple[str, str],
                x_range: Tuple[float, float], y_range: Tuple[float, float],
                resolution, omega_max: float = TWO_PI, workers: int = 1,
                with_curves: bool = True) -> StabilityChart:
    """Classify a gain-plane grid at cell centers and attach the boundary
    curve families. Cells are worked in parallel when workers > 1, with
    deterministic row ordering either way."""
    nx, ny = (resolution, resolution) if np.isscalar(resolution) else resolution
    x_edges = np.linspace(x_range[0], x_range[1], nx + 1)
    y_edges = np.linspace(y_range[0], y_range[1], ny + 1)
    x_centers = 0.5 * (x_edges[:-1] + x_edges[1:])
    y_centers = 0.5 * (y_edges[:-1] + y_edges[1:])

    if workers > 1:
        with get_context("fork").Pool(
                workers, initializer=_engine_init,
                initargs=(base, plane, omega_max, x_centers, y_centers)) as pool:
            rows = pool.map(_classify_row, range(ny))
    else:
        _engine_init(base, plane, omega_max, x_centers, y_centers)
        rows = [_classify_row(j) for j in range(ny)]
    classes = np.asarray(rows, dtype=np.int8)

    curves: List[BoundaryCurve] = []
    if with_curves:
        curves = atc_plant_boundaries(base, plane, beta_range=x_range)
        string = atc_string_boundaries(base, plane, beta_range=x_range)
        env = envelope_curve(string, x_range)
        curves += string
        if env is not None:
            curves.append(env)
    return StabilityChart(plane=plane, x_edges=x_edges, y_edges=y_edges,
                          classes=classes, curves=curves, config=base,
                          meta={"x_range": list(x_range), "y_range": list(y_range),
                                "n": base.n_followers, "kind": base.kind,
                                "omega_max": omega_max})


__all__ = [
    "PLANT_UNSTABLE", "STRING_UNSTABLE", "STRING_STABLE", "INDETERMINATE",
    "p_omega", "p_zero", "string_margin", "Rect", "DEFAULT_REGION",
    "winding_number", "find_roots", "RootSearchResult",
    "ego_char_fn", "human_char_fn", "virtual_ring_char_fn", "open_ring_char_fn",
    "StabilityVerdict", "plant_verdict", "string_verdict",
    "brute_force_string_stable", "BoundaryCurve", "atc_plant_boundaries",
    "atc_string_boundaries", "envelope_curve", "ring_boundaries",
    "StabilityChart", "build_chart", "config_at",
]
