"""Decentralized frequency-stability certification.

Mechanizes the three stability conditions on the normalized loop
mu(s)/s * L' against diagonal bus dynamics G'(s) = diag(gamma_n g_n(s)):

1. stable synchronous & coherent dynamics: the harmonic-mean aggregate
   gbar(s) is stable with bounded gain (M1), the normalized bus inverses
   are bounded on the low-frequency region S_delta (M2), and
   |s/mu(s)| < lambda2 / (M2 + M1 M2^2) holds on S_delta;
2. stable synchronizing dynamics: no bus poles in the closed right
   half-plane outside S_delta, and at every boundary sample a common
   rotated half-plane contains all points 1 + (mu(s)/s) g_n'(s)
   (separating-hyperplane feasibility);
3. the interpretable region decomposition: positive real part at low
   frequency (Region 1), a per-frequency phase/gain tradeoff with a
   common angle alpha (Region 2), and small gain at high frequency
   (Region 3).

Suprema over continua are evaluated on a log-spaced grid plus local
refinement around near-violations; the result is a numerical
certificate, not a symbolic proof.  Strict inequalities carry a relative
guard band: boundary equality counts as failure.

Frequencies are rad/s throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .devices import (
    ConverterParams,
    LineDynamicsParams,
    MachineParams,
    bus_transfer,
    mu,
    natural_frequency,
    resonant_frequency,
)
from .network import ReducedNetwork
from .tfcore import (
    NoConverge,
    Polynomial,
    RationalTF,
    combine,
    evaluate,
    near_cancellations,
)


class CertifyError(Exception):
    """Base class for certification errors."""


class UnstableSynchronousDynamics(CertifyError):
    """The aggregate synchronous dynamics have a pole in the closed RHP."""


class NoFeasibleDelta(CertifyError):
    """Coherence region could not be shrunk into feasibility."""


class ZeroPoint(CertifyError):
    """A half-plane test point is numerically zero: infeasible by definition."""


class DegenerateXi(CertifyError):
    """Damper-based margin estimate requested with xi_sm = 0."""


REL_GUARD = 1e-6       # strict-inequality guard band (relative)
STAB_TOL = 1e-9        # pole real-part tolerance (relative to |pole|)
NEAR_VIOLATION = 0.05  # refine grid where slack is within 5% of threshold


@dataclass(frozen=True)
class CertificationConfig:
    """Sweep geometry and tolerances for one certification run."""

    delta: float = 1e-2
    omega_lo: float = 1e-3
    omega_hi: float = 1e5
    omega_n: int = 4000
    arc_samples: int = 90
    omega1: float | None = None  # region boundary overrides (auto from crossovers)
    omega2: float | None = None
    max_delta_halvings: int = 20
    refine_points: int = 16

    def __post_init__(self):
        if not 0 < self.delta:
            raise ValueError("delta must be positive")
        if not 0 < self.omega_lo < self.omega_hi:
            raise ValueError("need 0 < omega_lo < omega_hi")
        if self.omega_n < 16:
            raise ValueError("omega_n too small for a meaningful sweep")
        if self.omega1 is not None and self.omega2 is not None:
            if not self.delta <= self.omega1 <= self.omega2:
                raise ValueError("need delta <= omega1 <= omega2")

    def grid(self) -> np.ndarray:
        return np.geomspace(self.omega_lo, self.omega_hi, self.omega_n)

    def check_covers(self, omega0: float, rho: float):
        top = 10.0 * natural_frequency(rho, omega0)
        if self.omega_lo > self.delta or self.omega_hi < top:
            raise CertifyError(
                f"frequency grid [{self.omega_lo}, {self.omega_hi}] must cover "
                f"[{self.delta}, {top:.4g}]"
            )


def _strictly_positive(x, scale) -> bool:
    return x > REL_GUARD * abs(scale)


def _strictly_less(a: float, b: float) -> bool:
    if math.isinf(b):
        return not math.isinf(a) or a < 0
    if math.isinf(a):
        return False
    return a < b - REL_GUARD * max(abs(a), abs(b))


def _pole_in_closed_rhp(r: complex) -> bool:
    return r.real >= -STAB_TOL * max(1.0, abs(r))


# ---------------------------------------------------------------------------
# synchronous dynamics and Condition 1


def synchronous_dynamics(g_norms: list[RationalTF]) -> RationalTF:
    """Harmonic mean of the normalized bus dynamics, as one rational
    function (common-denominator combination, no cancellation)."""
    if not g_norms:
        raise ValueError("need at least one bus")
    acc = None
    for g in g_norms:
        inv = combine(g, kind="invert")
        acc = inv if acc is None else combine(acc, inv, "add")
    acc = combine(acc, kind="scale", c=1.0 / len(g_norms))
    return combine(acc, kind="invert")


def _s_over_mu(mu_tf: RationalTF) -> RationalTF:
    return RationalTF(mu_tf.den.mul(Polynomial([0.0, 1.0])), mu_tf.num)


def _sdelta_boundary(delta: float, arc_samples: int) -> np.ndarray:
    theta = np.linspace(0.0, np.pi / 2, arc_samples)
    arc = delta * np.exp(1j * theta)
    seg = 1j * np.linspace(0.0, delta, arc_samples)
    return np.concatenate([seg, arc])


def _infinity_gain(tf: RationalTF) -> float:
    if tf.num.is_zero or tf.num.degree < tf.den.degree:
        return 0.0
    if tf.num.degree == tf.den.degree:
        return abs(tf.num.coeffs[-1] / tf.den.coeffs[-1])
    return math.inf


@dataclass
class Condition1Result:
    ok: bool
    M1: float
    M2: float
    delta: float
    lhs_max: float
    bound: float
    halvings: int
    notes: list[str] = field(default_factory=list)


def check_condition1(gbar: RationalTF, g_norms: list[RationalTF],
                     mu_tf: RationalTF, lambda2: float,
                     cfg: CertificationConfig) -> Condition1Result:
    """Stable synchronous & coherent dynamics.

    Verifies (a) gbar has no closed-RHP poles and records its peak gain
    M1, (b) the bus inverses are bounded on S_delta (M2 via boundary
    sampling and the maximum-modulus principle), and (c) the coherence
    inequality on S_delta.  If (c) fails, delta is halved up to the
    configured limit (a small enough delta always exists when (a) and
    (b) hold).
    """
    notes = []
    bad = [p for p in gbar.poles() if _pole_in_closed_rhp(p)]
    if bad:
        pairs = near_cancellations(gbar)
        hint = (
            f"; {len(pairs)} near-cancelled pole/zero pair(s) present -- a "
            "hidden marginal mode is refused conservatively" if pairs else ""
        )
        raise UnstableSynchronousDynamics(
            f"synchronous dynamics have pole(s) {bad} in the closed RHP{hint}"
        )

    w = cfg.grid()
    vals = np.abs(evaluate(gbar, 1j * np.concatenate([[0.0], w])))
    M1 = float(max(vals.max(), _infinity_gain(gbar)))

    s_over_mu = _s_over_mu(mu_tf)
    inv_norms = [combine(g, kind="invert") for g in g_norms]
    zero_sets = [g.zeros() for g in g_norms]

    delta = cfg.delta
    for halvings in range(cfg.max_delta_halvings + 1):
        boundary = _sdelta_boundary(delta, cfg.arc_samples)
        M2 = 0.0
        for g, zs in zip(g_norms, zero_sets):
            # a zero of g' inside S_delta makes the inverse unbounded there
            inside = [z for z in zs
                      if z.real >= -STAB_TOL * max(1.0, abs(z))
                      and abs(z) <= delta * (1 + 1e-9)]
            if inside:
                M2 = math.inf
                break
        if math.isfinite(M2):
            for inv in inv_norms:
                M2 = max(M2, float(np.abs(evaluate(inv, boundary)).max()))
            bound = lambda2 / (M2 + M1 * M2**2) if math.isfinite(lambda2) else math.inf
            lhs = float(np.abs(evaluate(s_over_mu, boundary)).max())
            if _strictly_less(lhs, bound):
                if halvings:
                    notes.append(f"delta auto-shrunk {halvings}x to {delta:.3g}")
                return Condition1Result(True, M1, M2, delta, lhs, bound,
                                        halvings, notes)
        delta *= 0.5
    raise NoFeasibleDelta(
        f"coherence inequality infeasible down to delta = {delta:.3g} "
        f"after {cfg.max_delta_halvings} halvings (M1 = {M1:.4g})"
    )


# ---------------------------------------------------------------------------
# Condition 2


@dataclass
class PoleCheck:
    bus: str
    ok: bool
    witnesses: list[complex] = field(default_factory=list)


def check_condition2_poles(g_norms: dict[str, RationalTF], delta: float) -> list[PoleCheck]:
    """No bus poles in the closed RHP outside S_delta.

    A pole whose real part is within tolerance of the imaginary axis
    counts as closed-RHP; only |pole| < delta (the coherence carve-out,
    which admits the condenser's integrator) rescues it.
    """
    out = []
    for bus, g in g_norms.items():
        bad = [
            r for r in g.poles()
            if _pole_in_closed_rhp(r) and abs(r) >= delta * (1 - 1e-12)
        ]
        out.append(PoleCheck(bus, not bad, bad))
    return out


def halfplane_feasible(points) -> tuple[float, float] | None:
    """Feasible rotation angles phi in [0, pi/2) with Re(e^{j phi} z) > 0
    for every point z, or None.

    Each point allows the open interval (-pi/2 - arg z, pi/2 - arg z);
    the feasible set is the intersection clipped to [0, pi/2).  The
    returned pair is (lo, hi); a midpoint witness is (lo + hi) / 2.
    """
    lo, hi = 0.0, math.pi / 2
    for z in points:
        if abs(z) < 1e-12:
            raise ZeroPoint(f"test point {z} is numerically zero")
        a = math.atan2(z.imag, z.real)
        lo = max(lo, -math.pi / 2 - a)
        hi = min(hi, math.pi / 2 - a)
    if hi - lo > 1e-12:
        return lo, hi
    return None


@dataclass
class InteropResult:
    ok: bool
    n_samples: int
    min_width: float
    tightest_s: complex
    witness_phi: float | None
    first_fail_s: complex | None = None
    notes: list[str] = field(default_factory=list)


def check_condition2_interop(g_norms: dict[str, RationalTF], mu_tf: RationalTF,
                             delta: float, cfg: CertificationConfig) -> InteropResult:
    """Separating-hyperplane feasibility on the boundary of C+ \\ S_delta.

    Boundary = quarter-arc of S_delta plus the imaginary axis above
    delta (conjugate symmetry covers the lower half); the omega -> inf
    limit sends every point to 1 and is feasible with phi = 0, which is
    recorded analytically rather than sampled.
    """
    w = cfg.grid()
    theta = np.linspace(0.0, np.pi / 2, cfg.arc_samples)
    samples = np.concatenate([delta * np.exp(1j * theta), 1j * w[w >= delta]])

    pts = np.ones((len(g_norms), samples.size), dtype=complex)
    mu_over_s = evaluate(mu_tf, samples) / samples
    for i, g in enumerate(g_norms.values()):
        pts[i] += mu_over_s * evaluate(g, samples)

    if np.any(np.abs(pts) < 1e-12):
        k = int(np.argwhere(np.abs(pts) < 1e-12)[0][1])
        return InteropResult(False, samples.size, 0.0, complex(samples[k]), None,
                             complex(samples[k]), ["zero test point"])

    args = np.angle(pts)
    lo = np.maximum(0.0, (-np.pi / 2 - args).max(axis=0))
    hi = np.minimum(np.pi / 2, (np.pi / 2 - args).min(axis=0))
    width = hi - lo
    feasible = width > 1e-12

    # refine around samples whose feasible window is nearly closed
    near = feasible & (width < NEAR_VIOLATION * (np.pi / 2))
    extra = _refine_samples(samples, near, cfg.refine_points)
    if extra.size:
        pts_x = np.ones((len(g_norms), extra.size), dtype=complex)
        mos = evaluate(mu_tf, extra) / extra
        for i, g in enumerate(g_norms.values()):
            pts_x[i] += mos * evaluate(g, extra)
        args_x = np.angle(pts_x)
        lo_x = np.maximum(0.0, (-np.pi / 2 - args_x).max(axis=0))
        hi_x = np.minimum(np.pi / 2, (np.pi / 2 - args_x).min(axis=0))
        bad = (hi_x - lo_x <= 1e-12) | (np.abs(pts_x) < 1e-12).any(axis=0)
        if bad.any():
            s = complex(extra[int(np.argmax(bad))])
            return InteropResult(False, samples.size + extra.size, 0.0, s, None, s)

    k_min = int(np.argmin(np.where(feasible, width, np.inf)))
    if feasible.all():
        return InteropResult(True, samples.size + extra.size, float(width[k_min]),
                             complex(samples[k_min]),
                             float((lo[k_min] + hi[k_min]) / 2),
                             notes=["omega->inf limit: points -> 1, phi = 0 feasible"])
    k = int(np.argmin(feasible))  # first infeasible sample
    return InteropResult(False, samples.size, float(max(width[k], 0.0)),
                         complex(samples[k]), None, complex(samples[k]))


def _refine_samples(samples: np.ndarray, mask: np.ndarray, n: int) -> np.ndarray:
    if not mask.any():
        return np.empty(0, dtype=samples.dtype)
    out = []
    idx = np.nonzero(mask)[0]
    for i in idx:
        a = samples[max(i - 1, 0)]
        b = samples[min(i + 1, samples.size - 1)]
        t = np.linspace(0.0, 1.0, n + 2)[1:-1]
        out.append(a + (b - a) * t)
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# Condition 3


@dataclass
class RegionReport:
    ok: bool
    first_fail_omega: float | None = None
    first_fail_bus: str | None = None
    notes: list[str] = field(default_factory=list)


@dataclass
class Condition3Result:
    ok: bool
    omega1: float
    omega2: float
    region1: RegionReport
    region2: RegionReport
    region3: RegionReport


def check_condition3(g_norms: dict[str, RationalTF], mu_tf: RationalTF,
                     delta: float, omega1: float, omega2: float,
                     cfg: CertificationConfig) -> Condition3Result:
    """Interpretable interoperability condition over three frequency regions.

    Region 2 scans the tradeoff angle alpha over a 1-degree grid; the
    angle must be common to every bus at each frequency.  Phases are
    unwrapped continuously along the grid.
    """
    buses = list(g_norms)
    w = cfg.grid()

    def z_at(s):
        return {b: evaluate(mu_tf, s) * evaluate(g_norms[b], s) for b in buses}

    # Region 1: quarter-arc plus [delta, omega1) on the axis
    theta = np.linspace(0.0, np.pi / 2, cfg.arc_samples, endpoint=False)
    r1_samples = np.concatenate([delta * np.exp(1j * theta),
                                 1j * w[(w >= delta) & (w < omega1)]])
    region1 = RegionReport(True)
    for b in buses:
        zv = evaluate(mu_tf, r1_samples) * evaluate(g_norms[b], r1_samples)
        slack = zv.real - REL_GUARD * np.abs(zv)
        if np.any(slack <= 0):
            k = int(np.argmax(slack <= 0))
            region1 = RegionReport(False, float(abs(r1_samples[k])), b)
            break
        near = np.abs(slack) < NEAR_VIOLATION * np.maximum(np.abs(zv), 1e-300)
        for s in _refine_samples(r1_samples, near, cfg.refine_points):
            zr = evaluate(mu_tf, s) * evaluate(g_norms[b], s)
            if not _strictly_positive(zr.real, abs(zr)):
                region1 = RegionReport(False, float(abs(s)), b)
                break
        if not region1.ok:
            break

    # per-bus unwrapped phase and normalized gain over the whole grid
    zg = np.empty((len(buses), w.size), dtype=complex)
    for i, b in enumerate(buses):
        zg[i] = evaluate(mu_tf, 1j * w) * evaluate(g_norms[b], 1j * w)
    phase = np.unwrap(np.angle(zg), axis=1)
    gain = np.abs(zg) / w[None, :]

    # Region 2: common alpha per frequency, 1-degree scan of (0, 90]
    alphas = np.deg2rad(np.arange(1, 91, dtype=float))

    def region2_slack(ph, gn):
        # normalized slack per (bus, omega, alpha); positive means that
        # branch (phase window or gain bound) passes with room
        al = alphas[None, None, :]
        ph = ph[:, :, None]
        gn = gn[:, :, None]
        ps = ((np.pi / 2 - al) * (1 - REL_GUARD) - np.abs(ph)) / (np.pi / 2)
        denom = np.abs(np.cos(ph - al))
        with np.errstate(divide="ignore"):
            bound = np.where(denom > 1e-12,
                             np.sin(al) / np.maximum(denom, 1e-300), np.inf)
        gs = (bound * (1 - REL_GUARD) - gn) / np.maximum(1.0, np.minimum(bound, 1e6))
        branch = np.maximum(ps, gs)          # (bus, omega, alpha)
        return branch.min(axis=0).max(axis=1), branch  # best common slack per omega

    m2 = (w >= omega1) & (w < omega2)
    region2 = RegionReport(True)
    if m2.any():
        w2v = w[m2]
        best, branch = region2_slack(phase[:, m2], gain[:, m2])
        if np.any(best <= 0):
            k = int(np.argmax(best <= 0))
            per_bus = branch[:, k, :].max(axis=1)
            bus = buses[int(np.argmin(per_bus))]
            region2 = RegionReport(False, float(w2v[k]), bus,
                                   ["no common alpha in the 1-degree scan"])
        else:
            # refine where the best common slack is nearly exhausted: the
            # violating band around a bus crossover can be narrower than
            # the grid pitch
            near = best < NEAR_VIOLATION
            idx_band = np.nonzero(m2)[0]
            for k in np.nonzero(near)[0]:
                i = idx_band[k]
                a = w[max(i - 1, 0)]
                b = w[min(i + 1, w.size - 1)]
                extra = np.geomspace(a, b, cfg.refine_points + 2)[1:-1]
                zr = np.empty((len(buses), extra.size), dtype=complex)
                for n, bn in enumerate(buses):
                    zr[n] = evaluate(mu_tf, 1j * extra) * evaluate(g_norms[bn], 1j * extra)
                # unwrap the refined phases continuously from the anchor point
                phr = phase[:, i][:, None] + np.angle(zr / zg[:, i][:, None])
                gnr = np.abs(zr) / extra[None, :]
                best_r, branch_r = region2_slack(phr, gnr)
                if np.any(best_r <= 0):
                    kk = int(np.argmax(best_r <= 0))
                    per_bus = branch_r[:, kk, :].max(axis=1)
                    region2 = RegionReport(False, float(extra[kk]),
                                           buses[int(np.argmin(per_bus))],
                                           ["violation found on refined grid"])
                    break

    # Region 3: small normalized gain from omega2 up, plus the analytic limit
    m3 = w >= omega2
    region3 = RegionReport(True, notes=["omega->inf limit: |mu g'/omega| -> 0"])
    if m3.any():
        slack = 1.0 - gain[:, m3] - REL_GUARD
        if np.any(slack <= 0):
            i, k = np.unravel_index(int(np.argmax(slack <= 0)), slack.shape)
            region3 = RegionReport(False, float(w[m3][k]), buses[i])
        else:
            w3 = w[m3]
            for i, b in enumerate(buses):
                near = np.abs(slack[i]) < NEAR_VIOLATION
                for s in _refine_samples(1j * w3, near, cfg.refine_points):
                    zr = evaluate(mu_tf, s) * evaluate(g_norms[b], s)
                    if not _strictly_less(abs(zr) / abs(s), 1.0):
                        region3 = RegionReport(False, float(abs(s)), b)
                        break
                if not region3.ok:
                    break

    ok = region1.ok and region2.ok and region3.ok
    return Condition3Result(ok, omega1, omega2, region1, region2, region3)


# ---------------------------------------------------------------------------
# crossover frequency and relative stability margin


def _unwrapped_phase(g: RationalTF, mu_tf: RationalTF, w: np.ndarray) -> np.ndarray:
    z = evaluate(mu_tf, 1j * w) * evaluate(g, 1j * w)
    return np.unwrap(np.angle(z))


def crossover_frequency(g: RationalTF, mu_tf: RationalTF,
                        cfg: CertificationConfig | None = None) -> float:
    """Smallest omega >= 0 where the unwrapped phase of mu(jw) g(jw)
    reaches -90 degrees.

    Located by sign change on the log grid, then bisection to relative
    1e-9.  Returns math.inf when no crossing exists below the grid top,
    and 0.0 when the phase already sits at/below -90 degrees at the
    bottom of the grid (an unresolvable DC-side crossing).
    """
    cfg = cfg or CertificationConfig()
    w = cfg.grid()
    phi = _unwrapped_phase(g, mu_tf, w)
    target = -np.pi / 2
    if phi[0] <= target:
        return 0.0
    below = np.nonzero(phi <= target)[0]
    if below.size == 0:
        return math.inf
    k = int(below[0])
    a, b = w[k - 1], w[k]
    za = evaluate(mu_tf, 1j * a) * evaluate(g, 1j * a)
    phi_a = phi[k - 1]

    def rel_phase(x):
        zx = evaluate(mu_tf, 1j * x) * evaluate(g, 1j * x)
        return phi_a + np.angle(zx / za)

    for _ in range(200):
        if b - a <= 1e-9 * b:
            break
        mid = 0.5 * (a + b)
        if rel_phase(mid) > target:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def stability_margin(g: RationalTF, mu_tf: RationalTF,
                     cfg: CertificationConfig | None = None) -> tuple[float, float]:
    """(omega_c, M) with M = omega_c / |mu(j omega_c) g(j omega_c)|.

    No crossing maps to (inf, inf): the bus never reaches the critical
    phase, so the margin test passes for any connectivity gamma.  A
    crossing pinned at DC maps to (0, 0).
    """
    wc = crossover_frequency(g, mu_tf, cfg)
    if math.isinf(wc):
        return wc, math.inf
    if wc == 0.0:
        return wc, 0.0
    z = evaluate(mu_tf, 1j * wc) * evaluate(g, 1j * wc)
    return float(wc), float(wc / abs(z))


@dataclass
class ResonanceCheck:
    ok: bool
    applicable: bool
    omega_r: float | None = None
    value: float | None = None
    limit: float | None = None
    notes: list[str] = field(default_factory=list)


def resonance_check(g: RationalTF, mu_tf: RationalTF, gamma_n: float,
                    omega_c: float, rho: float, omega0: float) -> ResonanceCheck:
    """Gain check at the line resonant frequency w_r = w0 sqrt(1 - rho^2).

    Only binding when the crossover sits below w_r; then
    |mu(j w_r) g(j w_r)| / w_r must stay below 1/gamma_n.  For rho >= 1
    there is no real resonance and the check is recorded as skipped.
    """
    if rho >= 1:
        return ResonanceCheck(True, False, notes=["rho >= 1: no real resonance"])
    wr = resonant_frequency(rho, omega0)
    if omega_c >= wr:
        return ResonanceCheck(True, False, wr,
                              notes=["crossover above resonance: vacuous"])
    val = float(abs(evaluate(mu_tf, 1j * wr) * evaluate(g, 1j * wr)) / wr)
    limit = math.inf if gamma_n == 0 else 1.0 / gamma_n
    return ResonanceCheck(_strictly_less(val, limit), True, wr, val, limit)


# ---------------------------------------------------------------------------
# closed-form design formulas


@dataclass
class DroopDesign:
    omega_c_closed: float
    tp_min: float
    tp_bound_applies: bool
    xi_indicator: float


def droop_design(params: ConverterParams, rho: float, gamma_n: float) -> DroopDesign:
    """Closed-form droop quantities: the crossover frequency, the filter
    lower bound protecting the resonant peak, and the damper-emulation
    benefit indicator (positive means a derivative term can raise the
    margin)."""
    w0, tp, m_p = params.omega0, params.T_p, params.m_p
    wc = w0 * math.sqrt((1 + rho**2) / (1 + 2 * rho * w0 * tp))
    radicand = gamma_n**2 * m_p**2 - 4 * rho**2 * (1 - rho**2)
    tp_min = (math.sqrt(radicand) / (2 * rho * (1 - rho**2) * w0)
              if radicand > 0 and rho < 1 else 0.0)
    applies = rho < 1 and tp > rho / (w0 * (1 - rho**2))
    wn = natural_frequency(rho, w0)
    wr = resonant_frequency(rho, w0) if rho < 1 else float("nan")
    xi_ind = float("nan")
    if rho < 1:
        nume = 2 * wn**2 * (tp**2 * wn**2 + 2 * rho * w0 * tp + 1) ** 2
        deno = wr**2 * (tp**2 * wr**2 + 1)
        xi_ind = (1 + 2 * rho * w0 * tp) ** 2 - math.sqrt(nume / deno)
    return DroopDesign(wc, tp_min, applies, xi_ind)


@dataclass
class SgMarginEstimates:
    m_no_dw: float
    m_dw: float
    xi_low: float
    xi_high: float
    timescale_low_ratio: float | None
    timescale_high_ratio: float


def sg_margin_estimates(mach: MachineParams, rho: float,
                        omega_c_numeric: float) -> SgMarginEstimates:
    """Timescale-separation margin estimates for a synchronous generator.

    omega_c_numeric is the numerically computed crossover of the machine
    with xi_sm = 0.  Returns the no-damper margin estimate, the
    damper-winding estimate, and the xi interval over which the damper
    model improves the margin.  The two ratio diagnostics report how well
    the separation assumptions hold (crossover far above the governor
    frequency, far below the line natural frequency).
    """
    if not 0 < rho < 1:
        raise ValueError("estimates need 0 < rho < 1")
    w0, H = mach.omega0, mach.H
    wc = omega_c_numeric
    m_no = 2 * H * (1 + rho**2) * wc**2 / w0
    if mach.xi_sm <= 0:
        raise DegenerateXi("machine has xi_sm = 0: damper estimate undefined")
    m_dw = 4 * H * rho * math.sqrt(1 - rho**2) / mach.xi_sm
    xi_low = 1.0 / natural_frequency(rho, w0)
    xi_high = 2 * rho * w0 * math.sqrt(1 - rho**2) / (wc**2 * (1 + rho**2))
    low_ratio = None
    if not mach.is_condenser and mach.T_G > 0 and mach.k_g > 0:
        low_ratio = wc / math.sqrt(mach.k_g / (2 * H * mach.T_G))
    high_ratio = wc / natural_frequency(rho, w0)
    return SgMarginEstimates(m_no, m_dw, xi_low, xi_high, low_ratio, high_ratio)


# ---------------------------------------------------------------------------
# full certification


@dataclass
class MarginReport:
    bus: str
    omega_c: float
    margin: float
    gamma_n: float
    ok: bool
    resonance: ResonanceCheck | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def resonance_ok(self) -> bool:
        return self.resonance.ok if self.resonance else True


@dataclass
class RhoRun:
    rho: float
    delta: float
    cond1: Condition1Result | None
    cond2_poles: list[PoleCheck]
    cond2_interop: InteropResult | None
    cond3: Condition3Result | None
    margins: list[MarginReport]
    ok: bool
    errors: list[str] = field(default_factory=list)


@dataclass
class CertificationReport:
    runs: list[RhoRun]
    certified: bool
    notes: list[str] = field(default_factory=list)


def _margins_for(reduced: ReducedNetwork, mu_tf: RationalTF, rho: float,
                 cfg: CertificationConfig) -> list[MarginReport]:
    out = []
    for bus in reduced.nodes:
        g = bus_transfer(reduced.device(bus))
        gamma_n = reduced.gamma_of(bus)
        wc, margin = stability_margin(g, mu_tf, cfg)
        res = resonance_check(g, mu_tf, gamma_n, wc, rho, reduced.omega0)
        notes = []
        if gamma_n == 0.0:
            ok = True  # no coupling: the margin test is vacuous
            notes.append("gamma = 0: no network coupling, margin test vacuous")
        else:
            ok = bool(_strictly_less(gamma_n, margin))
        if math.isinf(margin):
            notes.append("no crossover below grid top: infinite margin")
        if wc == 0.0:
            notes.append("phase at/below -90 deg from DC: zero margin")
        out.append(MarginReport(bus, wc, margin, gamma_n, ok, res, notes))
    return out


def certify(reduced: ReducedNetwork, cfg: CertificationConfig | None = None) -> CertificationReport:
    """Run the full certification at both R/X extremes of the network.

    The verdict is CERTIFIED only when Condition 1, both halves of
    Condition 2, Condition 3, the per-bus margin tests and the resonance
    checks all pass at rho_min and at rho_max.  Module errors are
    aggregated into the per-run diagnostics instead of propagating.
    """
    cfg = cfg or CertificationConfig()
    notes = []
    for bus in reduced.nodes:
        if not bus_transfer(reduced.device(bus)).proper:
            raise CertifyError(
                f"bus {bus!r}: improper transfer function violates the "
                "rational-proper bus assumption (T_p = 0 PD droop can only "
                "be simulated, not certified)"
            )

    rhos = [reduced.rho_min]
    if reduced.rho_max > reduced.rho_min:
        rhos.append(reduced.rho_max)
    else:
        notes.append("uniform R/X ratio: single certification run")

    runs = [_run_at_rho(reduced, rho, cfg) for rho in rhos]
    certified = all(r.ok for r in runs)
    if len(reduced.nodes) == 1:
        notes.append("single-bus network: no coupling, margin tests vacuous")
    return CertificationReport(runs, certified, notes)


def _run_at_rho(reduced: ReducedNetwork, rho: float,
                cfg: CertificationConfig) -> RhoRun:
    cfg.check_covers(reduced.omega0, rho)
    mu_tf = mu(LineDynamicsParams(rho=rho, omega0=reduced.omega0))
    margins = _margins_for(reduced, mu_tf, rho, cfg)

    if len(reduced.nodes) == 1:
        # no network coupling: stability is the bus's own pole condition
        bus = reduced.nodes[0]
        g = bus_transfer(reduced.device(bus))
        poles = check_condition2_poles({bus: g}, cfg.delta)
        ok = all(p.ok for p in poles)
        return RhoRun(rho, cfg.delta, None, poles, None, None, margins, ok)

    g_norms = {
        bus: combine(bus_transfer(reduced.device(bus)), kind="scale",
                     c=reduced.gamma_of(bus))
        for bus in reduced.nodes
    }
    errors: list[str] = []
    cond1 = None
    delta_used = cfg.delta
    try:
        gbar = synchronous_dynamics(list(g_norms.values()))
        cond1 = check_condition1(gbar, list(g_norms.values()), mu_tf,
                                 reduced.lambda2, cfg)
        delta_used = cond1.delta
    except (CertifyError, NoConverge) as exc:
        errors.append(f"condition 1: {exc}")

    poles = check_condition2_poles(g_norms, delta_used)

    interop = None
    cond3 = None
    try:
        interop = check_condition2_interop(g_norms, mu_tf, delta_used, cfg)
        omega1, omega2 = cfg.omega1, cfg.omega2
        if omega1 is None or omega2 is None:
            finite = [m.omega_c for m in margins if math.isfinite(m.omega_c)]
            lo = min(finite) if finite else cfg.omega_hi
            hi = max(finite) if finite else cfg.omega_hi
            omega1 = omega1 if omega1 is not None else max(lo, delta_used)
            omega2 = omega2 if omega2 is not None else max(hi, omega1)
        omega1 = max(omega1, delta_used)
        omega2 = max(omega2, omega1)
        cond3 = check_condition3(g_norms, mu_tf, delta_used, omega1, omega2, cfg)
    except (CertifyError, NoConverge) as exc:
        errors.append(f"condition 2.2/3 sweep: {exc}")

    ok = (
        cond1 is not None and cond1.ok
        and all(p.ok for p in poles)
        and interop is not None and interop.ok
        and cond3 is not None and cond3.ok
        and all(m.ok and m.resonance_ok for m in margins)
        and not errors
    )
    return RhoRun(rho, delta_used, cond1, poles, interop, cond3, margins, ok, errors)
