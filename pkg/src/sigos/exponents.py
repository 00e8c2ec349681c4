"""Exact-rational exponent calculator.

Every function here works in :class:`fractions.Fraction`; the only non-rational
value is :data:`INF`, a sentinel ordered above every rational.  Piecewise
functions return an :class:`ExponentReport` recording which piece applied and
whether the argument sits on a breakpoint where two pieces agree.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

from .errors import AcceptanceFailure, InfeasibleError, ParameterError

F = Fraction


@functools.total_ordering
class _Infinity:
    """Positive infinity, comparable with ints and Fractions."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __eq__(self, other):
        return other is self

    def __lt__(self, other):
        return False

    def __gt__(self, other):
        return other is not self

    def __hash__(self):
        return hash("sigos.inf")

    def __repr__(self):
        return "INF"

    def __str__(self):
        return "inf"

    def __float__(self):
        return float("inf")


INF = _Infinity()

Value = Union[Fraction, _Infinity]


@dataclass(frozen=True)
class ExponentReport:
    value: Value
    regime: str
    boundary: bool = False
    extended: bool = False

    def __float__(self):
        return float(self.value)


def check_pair(n: int, sigma: int) -> None:
    """Validate an admissible (dimension, signature) pair."""
    if not isinstance(n, int) or not isinstance(sigma, int):
        raise ParameterError(f"n and sigma must be integers, got {n!r}, {sigma!r}")
    if n < 2:
        raise ParameterError(f"n must be at least 2, got {n}")
    if not 0 <= sigma <= n - 1:
        raise ParameterError(f"sigma must lie in [0, {n - 1}], got {sigma}")
    if (n - 1 - sigma) % 2:
        raise ParameterError(f"n - 1 - sigma must be even, got n={n}, sigma={sigma}")


def admissible_sigmas(n: int) -> list[int]:
    return list(range((n - 1) % 2, n, 2))


def admissible_pairs(max_n: int, min_n: int = 2):
    for n in range(min_n, max_n + 1):
        for sigma in admissible_sigmas(n):
            yield n, sigma


def _check_range(name: str, value: int, lo: int, hi: int) -> None:
    if not isinstance(value, int) or not lo <= value <= hi:
        raise ParameterError(f"{name} must be an integer in [{lo}, {hi}], got {value!r}")


def _ratio(num, den) -> Value:
    num, den = F(num), F(den)
    if den == 0:
        if num <= 0:
            raise ArithmeticError("indeterminate exponent ratio")
        return INF
    return num / den


def main_threshold(n: int, sigma: int) -> Fraction:
    """Critical Lebesgue exponent for oscillatory operators of signature sigma."""
    check_pair(n, sigma)
    if n % 2:
        return F(2 * (sigma + 2 * (n + 1)), sigma + 2 * (n - 1))
    return F(2 * (sigma + 2 * n + 3), sigma + 2 * n - 1)


def _kbroad_pieces(n, sigma, k):
    return {
        "first": F(2 * (n + 1), n - 1),
        "middle": F(2 * (n + 2 * k + 1 + sigma), n + 2 * k - 3 + sigma),
        "third": _ratio(2 * k, k - 1) if k > 1 else INF,
    }


def kbroad_threshold(n: int, sigma: int, k: int) -> ExponentReport:
    """Threshold for the k-broad estimate."""
    check_pair(n, sigma)
    _check_range("k", k, 1, n)
    lo, hi = F(n + 1 - sigma, 2), F(n + 1 + sigma, 2)
    pieces = _kbroad_pieces(n, sigma, k)
    if k < lo:
        regime = "first"
    elif k < hi:
        regime = "middle"
    else:
        regime = "third"
    return ExponentReport(pieces[regime], regime, boundary=k in (lo, hi))


def mu(n: int, sigma: int, m: int) -> ExponentReport:
    """Guaranteed dimension of the auxiliary subspace for an m-dimensional V."""
    check_pair(n, sigma)
    _check_range("m", m, 1, n)
    terms = {
        "generic": F(n - 2 * m + 1),
        "signature": F(n + 1 + sigma, 2) - m,
        "zero": F(0),
    }
    best = max(terms.values())
    winners = [name for name, v in terms.items() if v == best]
    return ExponentReport(best, winners[0], boundary=len(winners) > 1)


def nu(n: int, sigma: int, d: int) -> Fraction:
    """Bound on the number of small eigenvalues of a form restricted to a (d-1)-plane."""
    check_pair(n, sigma)
    _check_range("d", d, 1, n)
    return min(F(d - 1), F(n - sigma - 1, 2), F(n - d))


def _dec_regime(n, sigma, d):
    check_pair(n, sigma)
    _check_range("d", d, 1, n)
    lo, hi = F(n - sigma + 1, 2), F(n + sigma + 1, 2)
    # On a breakpoint the later piece is reported; both agree there.
    if d == 1 or d < lo:
        regime = "first"
    elif d < hi:
        regime = "middle"
    else:
        regime = "third"
    return regime, d in (lo, hi), d == 1


def _dec_exponent_pieces(n, sigma, d):
    return {
        "first": F(d - 1),
        "middle": F(d - 1, 2) + F(n - 1 - sigma, 4),
        "third": F(n - 1, 2),
    }


def _dec_range_pieces(n, sigma, d):
    mid_den = 2 * d - n + sigma - 1
    third_den = 2 * d - n - 1
    return {
        "first": INF,
        "middle": _ratio(2 * (2 * d - n + sigma + 3), mid_den) if mid_den >= 0 else None,
        "third": _ratio(2 * (2 * d - n + 1), third_den) if third_den >= 0 else None,
    }


def dec_exponent(n: int, sigma: int, d: int) -> ExponentReport:
    """Decoupling loss exponent e(n, sigma, d); d = 1 is an extended regime."""
    regime, boundary, extended = _dec_regime(n, sigma, d)
    value = _dec_exponent_pieces(n, sigma, d)[regime]
    return ExponentReport(value, regime, boundary, extended)


def dec_range_report(n: int, sigma: int, d: int) -> ExponentReport:
    regime, boundary, extended = _dec_regime(n, sigma, d)
    value = _dec_range_pieces(n, sigma, d)[regime]
    return ExponentReport(value, regime, boundary, extended)


def dec_range(n: int, sigma: int, d: int) -> Value:
    """Largest Lebesgue exponent p_dec(n, sigma, d) for the decoupling inequality."""
    return dec_range_report(n, sigma, d).value


def m_dim(d: int) -> int:
    """Dimension floor((d+2)/2) of the model variety Z_d."""
    return (d + 2) // 2


def multilinear_q(n: int, k: int, ell: int) -> Fraction:
    if not isinstance(n, int) or n < 2:
        raise ParameterError(f"n must be an integer >= 2, got {n!r}")
    _check_range("k", k, 1, n)
    _check_range("ell", ell, 1, k)
    return F(2 * (n + k - ell + 1), n + k - ell - 1)


@dataclass(frozen=True)
class LDChoice:
    ell: int
    d: int
    q: Fraction
    row: str


def ld_feasible(n: int, sigma: int, k: int, ell: int, d: int) -> bool:
    """Constraints on (ell, d) for the tensored multilinear example."""
    return (
        d % 2 == 1
        and 1 <= d <= n - sigma
        and 1 <= ell <= k
        and 2 * ell <= d + 1
        and k - ell + 1 <= n - d + 1
    )


def optimal_ld(n: int, sigma: int, k: int) -> LDChoice:
    """Pick (ell, d) whose example is sharp for the k-broad threshold."""
    check_pair(n, sigma)
    _check_range("k", k, 1, n)
    if 2 * k <= n - sigma + 1:
        ell, d, row = k, n - sigma, "first"
    elif 2 * k <= n + sigma + 1:
        ell, d, row = (n - sigma + 1) // 2, n - sigma, "middle"
    else:
        ell, d, row = n - k + 1, 2 * n - 2 * k + 1, "third"
    if not ld_feasible(n, sigma, k, ell, d):
        raise InfeasibleError(f"no feasible (ell, d) for n={n}, sigma={sigma}, k={k}")
    return LDChoice(ell, d, multilinear_q(n, k, ell), row)


def k_star(n: int) -> int:
    if not isinstance(n, int) or n < 2:
        raise ParameterError(f"n must be an integer >= 2, got {n!r}")
    return (n + 2) // 2 if n % 2 == 0 else (n + 1) // 2


def bg_interval(n: int, sigma: int, k: int) -> tuple[Fraction, Value]:
    """Exponent interval on which the broad-narrow argument closes at level k."""
    check_pair(n, sigma)
    _check_range("k", k, 2, n)
    e = dec_exponent(n, sigma, k - 1).value
    lower = F(2 * (n - e)) / (n - 1 - e)
    return lower, dec_range(n, sigma, k - 1)


@dataclass(frozen=True)
class ClosureReport:
    n: int
    sigma: int
    k_star: int
    kbroad: Fraction
    dec_exponent: Fraction
    dec_range: Value
    lower: Fraction
    upper: Value
    achieved: Fraction
    threshold: Fraction
    extended: bool
    failures: tuple = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.failures


def verify_closure(n: int, sigma: int, strict: bool = False) -> ClosureReport:
    """Check that the broad and narrow ranges combine to the main threshold."""
    check_pair(n, sigma)
    ks = k_star(n)
    pbar = kbroad_threshold(n, sigma, ks).value
    dec = dec_exponent(n, sigma, ks - 1)
    upper = dec_range(n, sigma, ks - 1)
    lower, _ = bg_interval(n, sigma, ks)
    achieved = max(lower, pbar)
    threshold = main_threshold(n, sigma)
    failures = []
    if not pbar <= upper:
        failures.append(f"k-broad threshold {pbar} exceeds decoupling range {upper}")
    if achieved != threshold:
        failures.append(f"combined range starts at {achieved}, expected {threshold}")
    if not achieved <= upper:
        failures.append(f"combined range {achieved} lies above decoupling range {upper}")
    report = ClosureReport(
        n, sigma, ks, pbar, dec.value, upper, lower, upper, achieved, threshold,
        dec.extended, tuple(failures),
    )
    if strict and failures:
        raise AcceptanceFailure("; ".join(failures))
    return report


# Necessity bookkeeping for the tensored linear example and the multilinear tuples.
# Exponents are affine in 1/p: value(p) = const + slope / p.

@dataclass(frozen=True)
class AffineInvP:
    const: Fraction
    slope: Fraction

    def __call__(self, p) -> Fraction:
        return self.const + self.slope / F(p)

    def __sub__(self, other: "AffineInvP") -> "AffineInvP":
        return AffineInvP(self.const - other.const, self.slope - other.slope)

    def nonpositive_from(self) -> Value:
        """Smallest p >= 1 with value(p) <= 0 (requires const < 0 < slope)."""
        if self.const >= 0 or self.slope <= 0:
            raise ArithmeticError("exponent is not eventually negative with a finite threshold")
        return self.slope / -self.const


def tensor_linear_exponent(n: int, sigma: int) -> AffineInvP:
    """lambda-exponent of the lower bound for ||T f||_p with ||f||_2 normalised to 1."""
    check_pair(n, sigma)
    m_h, m_e = m_dim(n - sigma), m_dim(sigma + 1)
    const = -F(n - 1 - sigma, 4) - F(sigma + m_e - 1, 4)
    slope = F(m_h - 1) + F(sigma + m_e + 1, 2)
    return AffineInvP(const, slope)


def multilinear_sides(n: int, k: int, ell: int, d: int) -> tuple[AffineInvP, AffineInvP]:
    """lambda-exponents (left, right) for the tensored multilinear comparison.

    The left side is the lower bound for the k-linear L^p norm, the right side
    the product of input L^2 norms; the estimate fails once left exceeds right.
    """
    left = AffineInvP(-F(n - 1, 2), F(d - 1, 2) + F(n + k - d - ell + 2, 2))
    right = AffineInvP(-F(d - 1, 4) - F(n - k - d + ell, 4), F(0))
    return left, right
