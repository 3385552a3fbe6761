"""Real-coefficient polynomial and rational transfer-function algebra.

Polynomials are dense ascending-degree coefficient lists (degrees in this
domain stay small, <= 4 per block), rational functions are numerator /
denominator pairs, and realizations are controllable-canonical SISO
state-space models.  All values are immutable after construction and all
operations are pure functions, so they can be shared freely between
workers.

Pole-zero cancellation is never performed on tolerance: a cancellation can
hide an unstable mode, and the certification logic must detect such pairs,
not erase them.  ``near_cancellations`` reports suspicious pairs instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npp


class TFError(Exception):
    """Base class for transfer-function algebra errors."""


class PoleHit(TFError):
    """Evaluation requested at (or numerically on top of) a pole."""


class ZeroInverse(TFError):
    """Inversion of the zero function requested."""


class NoConverge(TFError):
    """Root finding failed to reach the residual tolerance."""


class Improper(TFError):
    """State-space realization requested for an improper function."""


# Residual tolerance for root finding (relative, after max-coefficient scaling).
ROOT_RESIDUAL_RTOL = 1e-8
# |den(s)| below this times the local polynomial scale counts as a pole hit.
POLE_HIT_RTOL = 1e-14
# Root pairs closer than this (relative) are flagged as near-cancellations.
NEAR_CANCEL_RTOL = 1e-6


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial, coefficients ascending: coeffs[k] multiplies s**k.

    Trailing coefficients that are exactly zero are trimmed on
    construction; tolerance-based trimming is opt-in via :meth:`trimmed`.
    """

    coeffs: tuple[float, ...]

    def __init__(self, coeffs):
        c = [float(x) for x in coeffs]
        if not all(np.isfinite(c)):
            raise ValueError(f"non-finite polynomial coefficients: {c}")
        while len(c) > 1 and c[-1] == 0.0:
            c.pop()
        if not c:
            c = [0.0]
        object.__setattr__(self, "coeffs", tuple(c))
        object.__setattr__(self, "_arr", np.asarray(c))
        object.__setattr__(self, "_max_abs", float(np.max(np.abs(self._arr))))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return len(self.coeffs) == 1 and self.coeffs[0] == 0.0

    def __call__(self, s):
        """Horner evaluation at a complex scalar or ndarray."""
        return npp.polyval(s, self._arr)

    @property
    def max_abs_coeff(self) -> float:
        return self._max_abs

    def scale_at(self, s) -> float:
        """Magnitude scale max|c| * max(1, |s|)**deg used by tolerances."""
        return self._max_abs * max(1.0, abs(s)) ** self.degree

    def add(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(npp.polyadd(self.coeffs, other.coeffs))

    def mul(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(npp.polymul(self.coeffs, other.coeffs))

    def scaled(self, c: float) -> "Polynomial":
        return Polynomial([c * x for x in self.coeffs])

    def trimmed(self, rtol: float = 1e-12) -> "Polynomial":
        """Drop trailing coefficients smaller than rtol * max|coeff|."""
        tol = rtol * max(abs(c) for c in self.coeffs)
        c = list(self.coeffs)
        while len(c) > 1 and abs(c[-1]) <= tol:
            c.pop()
        return Polynomial(c)

    @staticmethod
    def from_roots(rts, leading: float = 1.0) -> "Polynomial":
        """Monic product of (s - r) over rts, rescaled by ``leading``."""
        c = npp.polyfromroots(rts)
        if np.max(np.abs(c.imag)) > 1e-9 * np.max(np.abs(c)):
            raise ValueError("roots do not form a real-coefficient polynomial")
        return Polynomial((leading * c.real).tolist())


def roots(p: Polynomial) -> list[complex]:
    """All deg(p) roots with multiplicity, via companion-matrix eigenvalues.

    The polynomial is pre-scaled so max|coeff| = 1.  Every root must satisfy
    |p(root)| <= 1e-8 * max|coeff| * max(1,|root|)**deg, otherwise
    :class:`NoConverge` is raised; the caller must report that, not pass.
    """
    if p.degree < 1:
        raise ValueError("roots() needs degree >= 1")
    scaled = np.asarray(p.coeffs) / p.max_abs_coeff
    try:
        # np.roots wants descending coefficients.
        rts = np.roots(scaled[::-1])
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise NoConverge(f"companion eigenvalue iteration failed: {exc}") from exc
    for r in rts:
        if abs(npp.polyval(r, scaled)) > ROOT_RESIDUAL_RTOL * max(1.0, abs(r)) ** p.degree:
            raise NoConverge(
                f"root residual above tolerance at {r} for coeffs {p.coeffs}"
            )
    return sorted((complex(r) for r in rts), key=lambda z: (z.real, z.imag))


def _strip_common_origin_zeros(num: Polynomial, den: Polynomial):
    # Polynomial products routinely introduce an exactly-zero constant term
    # in both num and den (a structural s/s factor); strip only those.
    # Anything that is not an exact 0.0 is left alone.
    def count(p):
        k = 0
        while k < len(p.coeffs) - 1 and p.coeffs[k] == 0.0:
            k += 1
        return k

    k = min(count(num), count(den))
    if k == 0:
        return num, den
    return Polynomial(num.coeffs[k:]), Polynomial(den.coeffs[k:])


@dataclass(frozen=True)
class RationalTF:
    """Rational function num/den of the Laplace variable, real coefficients.

    Construction strips structural common powers of s (exact-zero constant
    terms in both polynomials) and rescales num and den by a common scalar
    so the denominator's largest coefficient has magnitude 1.  Improper
    functions are representable; :func:`realize` rejects them.
    """

    num: Polynomial
    den: Polynomial

    def __init__(self, num, den):
        num = num if isinstance(num, Polynomial) else Polynomial(num)
        den = den if isinstance(den, Polynomial) else Polynomial(den)
        if den.is_zero:
            raise ValueError("zero denominator")
        num, den = _strip_common_origin_zeros(num, den)
        s = den.max_abs_coeff
        num, den = num.scaled(1.0 / s), den.scaled(1.0 / s)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @property
    def proper(self) -> bool:
        return self.num.degree <= self.den.degree or self.num.is_zero

    def __call__(self, s):
        return evaluate(self, s)

    def poles(self) -> list[complex]:
        return roots(self.den) if self.den.degree >= 1 else []

    def zeros(self) -> list[complex]:
        if self.num.is_zero or self.num.degree < 1:
            return []
        return roots(self.num)


def evaluate(tf: RationalTF, s):
    """num(s)/den(s) at a complex scalar or ndarray of frequencies.

    Raises :class:`PoleHit` when |den(s)| falls below 1e-14 times the local
    polynomial scale, signalling evaluation at or numerically near a pole.
    """
    sv = np.asarray(s)
    dval = tf.den(sv)
    limit = (POLE_HIT_RTOL * tf.den.max_abs_coeff
             * np.maximum(1.0, np.abs(sv)) ** tf.den.degree)
    if np.any(np.abs(dval) < limit):
        bad = sv if sv.ndim == 0 else sv[np.abs(dval) < limit][0]
        raise PoleHit(f"denominator vanishes at s = {bad}")
    return tf.num(sv) / dval


def combine(a: RationalTF, b: RationalTF | None = None, kind: str = "add",
            c: float | None = None) -> RationalTF:
    """Exact polynomial arithmetic on rational functions.

    kind is one of ``add``, ``mul``, ``invert``, ``scale`` (``scale`` uses
    the scalar ``c`` and ignores ``b``).  No pole-zero cancellation beyond
    the constructor's structural s/s stripping.
    """
    if kind == "add":
        num = a.num.mul(b.den).add(b.num.mul(a.den))
        return RationalTF(num, a.den.mul(b.den))
    if kind == "mul":
        return RationalTF(a.num.mul(b.num), a.den.mul(b.den))
    if kind == "invert":
        if a.num.is_zero:
            raise ZeroInverse("cannot invert the zero function")
        return RationalTF(a.den, a.num)
    if kind == "scale":
        if c is None:
            raise ValueError("scale needs the scalar c")
        return RationalTF(a.num.scaled(c), a.den)
    raise ValueError(f"unknown combine kind {kind!r}")


def near_cancellations(tf: RationalTF, rtol: float = NEAR_CANCEL_RTOL):
    """Diagnostic: (pole, zero) pairs closer than rtol relative.

    Such pairs mean the uncancelled representation carries a (near) hidden
    mode; callers should surface them next to any pole-based verdict.
    """
    pairs = []
    zs = tf.zeros()
    for p in tf.poles():
        for z in zs:
            if abs(p - z) <= rtol * max(1.0, abs(p), abs(z)):
                pairs.append((p, z))
    return pairs


@dataclass
class StateSpace:
    """Dense (A, B, C, D) realization; treated as read-only once built."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    order: int = field(init=False)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.asarray(self.B, dtype=float).reshape(self.A.shape[0], -1)
        self.C = np.asarray(self.C, dtype=float).reshape(-1, self.A.shape[0])
        self.D = np.atleast_2d(np.asarray(self.D, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("A must be square")
        if self.D.shape != (self.C.shape[0], self.B.shape[1]):
            raise ValueError("inconsistent dimensions")
        self.order = n

    def transfer_at(self, s: complex) -> complex:
        """C (sI - A)^-1 B + D at one complex frequency (SISO scalar)."""
        n = self.order
        if n == 0:
            return complex(self.D[0, 0])
        M = s * np.eye(n) - self.A
        x = np.linalg.solve(M, self.B)
        return complex((self.C @ x + self.D)[0, 0])


def realize(tf: RationalTF) -> StateSpace:
    """Controllable-canonical SISO realization of a proper rational function.

    D is the leading-coefficient ratio when numerator and denominator
    degrees are equal, otherwise 0.  Raises :class:`Improper` for
    deg(num) > deg(den); callers needing an angle-form model should
    realize g(s)/s instead.
    """
    if not tf.proper:
        raise Improper(
            f"deg num {tf.num.degree} > deg den {tf.den.degree}; "
            "realize the angle form g(s)/s instead"
        )
    den = np.asarray(tf.den.coeffs)
    num = np.zeros(len(den))
    num[: len(tf.num.coeffs)] = tf.num.coeffs
    # monic denominator
    num = num / den[-1]
    den = den / den[-1]
    n = len(den) - 1
    d = num[-1]
    res = num - d * den  # strictly-proper remainder, degree <= n-1
    if n == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)),
                          [[d]])
    A = np.zeros((n, n))
    A[: n - 1, 1:] = np.eye(n - 1)
    A[n - 1, :] = -den[:n]
    B = np.zeros((n, 1))
    B[n - 1, 0] = 1.0
    C = res[:n].reshape(1, n)
    return StateSpace(A, B, C, [[d]])
