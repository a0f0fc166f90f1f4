"""Polynomial representation, calculus, fitting, and the monotone barrier-derivative construction.

Everything downstream (gradients, feasibility checks, circuits) consumes plain
monomial coefficient vectors, because that is what an add/multiply-only
evaluator can run. Fitting routines work internally in a Chebyshev basis on the
scaled interval for conditioning and convert back to monomials at the end.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import chebyshev as _cheb
from numpy.polynomial import polynomial as _npoly

__all__ = [
    "Polynomial",
    "ApproxSpec",
    "FitError",
    "RemezNonConvergence",
    "ConstructionError",
    "TARGETS",
    "target_function",
    "eval_poly",
    "differentiate",
    "antidifferentiate",
    "sup_error",
    "fit_minimax",
    "fit_least_squares",
    "extrema_on_interval",
    "is_monotone_decreasing",
    "construct_P_kappa",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class FitError(RuntimeError):
    """A fitting routine could not produce a valid result."""


class RemezNonConvergence(FitError):
    """The exchange loop did not reach an equioscillating reference."""


class ConstructionError(FitError):
    """construct_P_kappa exceeded a cap; the message names the violated bound."""


def _sigmoid(z):
    z = np.clip(z, -500.0, 500.0)
    return 1.0 / (1.0 + np.exp(-z))


TARGETS: dict[str, Callable] = {
    "sigmoid": _sigmoid,
    "reciprocal": lambda x: 1.0 / np.asarray(x, dtype=float),
    "sqrt": np.sqrt,
    "invsqrt": lambda x: 1.0 / np.sqrt(x),
}


def target_function(target: str) -> Callable:
    try:
        return TARGETS[target]
    except KeyError:
        raise ValueError(f"unknown target function id: {target!r}") from None


@dataclass(frozen=True)
class Polynomial:
    """Dense monomial-basis polynomial c0 + c1*x + ... + cd*x^d."""

    coeffs: tuple[float, ...]

    def __init__(self, coeffs: Sequence[float]):
        cs = tuple(float(c) for c in coeffs)
        if not cs:
            cs = (0.0,)
        object.__setattr__(self, "coeffs", cs)

    def degree(self) -> int:
        """Largest index with nonzero coefficient (0 for the zero polynomial)."""
        for i in range(len(self.coeffs) - 1, -1, -1):
            if self.coeffs[i] != 0.0:
                return i
        return 0

    def __call__(self, x):
        return eval_poly(self, x)

    def derivative(self) -> "Polynomial":
        return differentiate(self)

    def antiderivative(self, c0: float = 0.0) -> "Polynomial":
        return antidifferentiate(self, c0)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        n = max(len(self.coeffs), len(other.coeffs))
        a = np.zeros(n)
        a[: len(self.coeffs)] += self.coeffs
        a[: len(other.coeffs)] += other.coeffs
        return Polynomial(a)

    def scale(self, s: float) -> "Polynomial":
        return Polynomial([s * c for c in self.coeffs])

    def to_dict(self) -> dict:
        return {"coeffs": list(self.coeffs)}


def eval_poly(p: Polynomial, x):
    """Horner evaluation; exact recurrence over the stored coefficients."""
    x = np.asarray(x, dtype=float)
    acc = np.full_like(x, p.coeffs[-1], dtype=float)
    for c in p.coeffs[-2::-1]:
        acc = acc * x + c
    if acc.ndim == 0:
        return float(acc)
    return acc


def differentiate(p: Polynomial) -> Polynomial:
    if len(p.coeffs) == 1:
        return Polynomial([0.0])
    return Polynomial([i * c for i, c in enumerate(p.coeffs) if i > 0])


def antidifferentiate(p: Polynomial, c0: float = 0.0) -> Polynomial:
    if p.degree() == 0 and p.coeffs[0] == 0.0:
        return Polynomial([c0])
    return Polynomial([c0] + [c / (i + 1) for i, c in enumerate(p.coeffs)])


def _golden_max(fn, lo: float, hi: float, iters: int = 80) -> float:
    """Golden-section maximisation of fn on [lo, hi]; returns the max value found."""
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = fn(x1), fn(x2)
    for _ in range(iters):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = fn(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = fn(x1)
        if b - a < 1e-14 * max(1.0, abs(a) + abs(b)):
            break
    return max(f1, f2, fn(0.5 * (a + b)))


def sup_error(p: Polynomial, target: str, interval: tuple[float, float], grid: int = 8192) -> float:
    """Max |p(x) - target(x)| over a dense grid, polished by golden section.

    The grid maximum is refined on the bracketing cell pair, so the reported
    value is a lower bound on the true sup error that is tight to ~1e-12 for
    the smooth targets used here.
    """
    if grid < 1001:
        raise ValueError("sup_error grid must be >= 1001")
    a, b = float(interval[0]), float(interval[1])
    f = target_function(target)
    xs = np.linspace(a, b, grid)
    err = np.abs(eval_poly(p, xs) - f(xs))
    i = int(np.argmax(err))
    lo = xs[max(i - 1, 0)]
    hi = xs[min(i + 1, grid - 1)]
    polished = _golden_max(lambda x: abs(eval_poly(p, x) - float(f(x))), lo, hi)
    return float(max(err[i], polished))


def _signed_error_extrema(err: np.ndarray, xs: np.ndarray):
    """Indices of local extrema of a signed error curve, endpoints included."""
    d = np.diff(err)
    sign = np.sign(d)
    # carry the last nonzero slope sign through flat stretches
    for i in range(1, len(sign)):
        if sign[i] == 0:
            sign[i] = sign[i - 1]
    turns = np.where(sign[1:] != sign[:-1])[0] + 1
    idx = np.unique(np.concatenate([[0], turns, [len(err) - 1]]))
    return idx


def _alternating_chain(idx: np.ndarray, err: np.ndarray) -> list[int]:
    """Reduce extrema indices to a sign-alternating chain, keeping the largest
    magnitude within each run of equal-signed extrema."""
    chain: list[int] = []
    for i in idx:
        s = math.copysign(1.0, err[i]) if err[i] != 0.0 else 0.0
        if chain and (math.copysign(1.0, err[chain[-1]]) == s or s == 0.0):
            if abs(err[i]) > abs(err[chain[-1]]):
                chain[-1] = int(i)
        else:
            if s == 0.0:
                continue
            chain.append(int(i))
    return chain


def _cheb_to_monomial(cheb_coeffs: np.ndarray, a: float, b: float) -> Polynomial:
    """Chebyshev coefficients on [a, b] -> monomial coefficients in x."""
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    # p(t) in monomials of t, then Horner-substitute t = (x - mid)/half
    pt = _cheb.cheb2poly(cheb_coeffs)
    sub = np.array([-mid / half, 1.0 / half])
    out = np.array([0.0])
    for c in pt[::-1]:
        out = _npoly.polyadd(_npoly.polymul(out, sub), [c])
    return Polynomial(out)


@dataclass
class ApproxSpec:
    """A fitted approximation plus the metadata needed to certify it."""

    target: str
    interval: tuple[float, float]
    degree: int
    method: str  # "minimax" | "least_squares" | "taylor"
    sup_error: float
    poly: Polynomial
    alternations: int = field(default=0)

    def validate(self, grid: int = 8192) -> None:
        a, b = self.interval
        if not (math.isfinite(a) and math.isfinite(b) and a < b):
            raise ValueError("interval endpoints must be finite with a < b")
        measured = sup_error(self.poly, self.target, self.interval, grid)
        if abs(measured - self.sup_error) > 1e-9 * max(abs(measured), 1e-300):
            raise ValueError(
                f"stored sup_error {self.sup_error} disagrees with remeasured {measured}"
            )

    def to_dict(self) -> dict:
        return {
            "coeffs": list(self.poly.coeffs),
            "interval": [self.interval[0], self.interval[1]],
            "target": self.target,
            "degree": self.degree,
            "method": self.method,
            "sup_error": self.sup_error,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ApproxSpec":
        return cls(
            target=d["target"],
            interval=(float(d["interval"][0]), float(d["interval"][1])),
            degree=int(d["degree"]),
            method=d["method"],
            sup_error=float(d["sup_error"]),
            poly=Polynomial(d["coeffs"]),
        )


def fit_minimax(
    target: str,
    interval: tuple[float, float],
    degree: int,
    max_rounds: int = 100,
    grid: int = 16385,
) -> ApproxSpec:
    """Remez exchange for the best sup-norm polynomial of the given degree.

    Runs multi-point exchange from a Chebyshev-extrema reference until the
    levelled error |E| agrees with the grid sup error, then verifies the
    equioscillation certificate: >= degree+2 alternating extrema of equal
    magnitude within 1e-6 relative.

    Raises RemezNonConvergence after max_rounds (default 100) rather than
    returning a partial fit.
    """
    if degree < 1:
        raise ValueError("minimax degree must be >= 1")
    a, b = float(interval[0]), float(interval[1])
    f = target_function(target)
    n = degree + 2
    mid, half = 0.5 * (a + b), 0.5 * (b - a)

    def g(t):
        return f(mid + half * np.asarray(t, dtype=float))

    ts = np.linspace(-1.0, 1.0, grid)
    gts = g(ts)
    ref = -np.cos(np.pi * np.arange(n) / (n - 1))
    cheb_c = None
    level = 0.0
    converged = False
    for _ in range(max_rounds):
        V = _cheb.chebvander(ref, degree)
        A = np.hstack([V, ((-1.0) ** np.arange(n))[:, None]])
        try:
            sol = np.linalg.solve(A, g(ref))
        except np.linalg.LinAlgError:
            raise RemezNonConvergence(
                f"singular alternation system for {target} deg {degree} on [{a}, {b}]"
            )
        cheb_c, level = sol[:-1], abs(sol[-1])
        err = _cheb.chebval(ts, cheb_c) - gts
        idx = _signed_error_extrema(err, ts)
        chain = _alternating_chain(idx, err)
        if len(chain) < n:
            # Degenerate round (common on the first pass for odd-symmetric
            # targets, where the symmetric reference forces E = 0). Seed the
            # next reference from the largest available extrema plus fill-ins.
            fill = list(np.linspace(0, grid - 1, n).astype(int))
            chain = sorted(set(chain + fill))[:n]
            ref = ts[np.array(chain)]
            continue
        while len(chain) > n:
            if abs(err[chain[0]]) <= abs(err[chain[-1]]):
                chain.pop(0)
            else:
                chain.pop()
        new_ref = ts[np.array(chain)]
        emax = float(np.max(np.abs(err)))
        if emax > 0 and (emax - level) <= 1e-9 * emax:
            converged = True
            break
        if np.allclose(new_ref, ref, rtol=0, atol=1e-15):
            converged = (emax - level) <= 1e-6 * emax
            break
        ref = new_ref
    if not converged or cheb_c is None:
        raise RemezNonConvergence(
            f"Remez exchange did not converge in {max_rounds} rounds "
            f"for {target} deg {degree} on [{a}, {b}]"
        )

    p = _cheb_to_monomial(cheb_c, a, b)
    e = sup_error(p, target, (a, b))
    alts = count_equioscillations(p, target, (a, b), e)
    if alts < n:
        raise RemezNonConvergence(
            f"equioscillation certificate failed: {alts} < {n} alternations "
            f"for {target} deg {degree} on [{a}, {b}]"
        )
    return ApproxSpec(target, (a, b), degree, "minimax", e, p, alternations=alts)


def count_equioscillations(
    p: Polynomial,
    target: str,
    interval: tuple[float, float],
    e: float,
    rel_tol: float = 1e-6,
    grid: int = 32769,
) -> int:
    """Longest alternating run of error extrema with magnitude within rel_tol of e."""
    a, b = interval
    f = target_function(target)
    xs = np.linspace(a, b, grid)
    err = eval_poly(p, xs) - f(xs)
    idx = _signed_error_extrema(err, xs)
    chain = _alternating_chain(idx, err)
    run = best = 0
    for i in chain:
        if abs(abs(err[i]) - e) <= rel_tol * e:
            run += 1
            best = max(best, run)
        else:
            run = 0
    return best


def fit_least_squares(
    target: str,
    interval: tuple[float, float],
    degree: int,
    grid: int = 8192,
) -> ApproxSpec:
    """Discretized-L2 fit on a uniform grid (normal equations in a Chebyshev basis)."""
    if grid < 10 * degree:
        raise ValueError("least-squares grid must be >= 10 * degree")
    a, b = float(interval[0]), float(interval[1])
    f = target_function(target)
    xs = np.linspace(a, b, grid)
    ts = (xs - 0.5 * (a + b)) / (0.5 * (b - a))
    V = _cheb.chebvander(ts, degree)
    sol, _, rank, _ = np.linalg.lstsq(V, f(xs), rcond=None)
    if rank < degree + 1:
        raise FitError(
            f"singular normal system for {target} deg {degree} on [{a}, {b}]"
        )
    p = _cheb_to_monomial(sol, a, b)
    e = sup_error(p, target, (a, b))
    return ApproxSpec(target, (a, b), degree, "least_squares", e, p)


def _bisect_root(p: Polynomial, lo: float, hi: float) -> float:
    flo = eval_poly(p, lo)
    for _ in range(200):
        m = 0.5 * (lo + hi)
        fm = eval_poly(p, m)
        if fm == 0.0 or (hi - lo) < 1e-12:
            return m
        if (flo < 0) == (fm < 0):
            lo, flo = m, fm
        else:
            hi = m
    return 0.5 * (lo + hi)


def extrema_on_interval(p: Polynomial, interval: tuple[float, float]) -> tuple[float, float]:
    """(min, max) of p on [a, b] via sign-change bisection on p' plus endpoints."""
    a, b = float(interval[0]), float(interval[1])
    if a > b:
        raise ValueError("interval must satisfy a <= b")
    if a == b:
        v = eval_poly(p, a)
        return (v, v)
    dp = differentiate(p)
    xs = np.linspace(a, b, 4097)
    dv = eval_poly(dp, xs)
    candidates = [a, b]
    sign = np.sign(dv)
    flips = np.where((sign[:-1] != 0) & (sign[1:] != 0) & (sign[:-1] != sign[1:]))[0]
    for i in flips:
        candidates.append(_bisect_root(dp, xs[i], xs[i + 1]))
    candidates.extend(xs[np.where(dv == 0.0)[0]].tolist())
    # guard against roots skipped by the scan: polish the sampled value extrema too
    vals = eval_poly(p, xs)
    for j in (int(np.argmin(vals)), int(np.argmax(vals))):
        lo, hi = xs[max(j - 1, 0)], xs[min(j + 1, len(xs) - 1)]
        candidates.append(
            _golden_argopt(p, lo, hi, maximize=(j == int(np.argmax(vals))))
        )
    cvals = [eval_poly(p, c) for c in candidates]
    return (float(min(cvals)), float(max(cvals)))


def _golden_argopt(p: Polynomial, lo: float, hi: float, maximize: bool) -> float:
    sgn = 1.0 if maximize else -1.0
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1 = sgn * eval_poly(p, x1)
    f2 = sgn * eval_poly(p, x2)
    for _ in range(80):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = sgn * eval_poly(p, x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = sgn * eval_poly(p, x1)
    return 0.5 * (a + b)


def is_monotone_decreasing(p: Polynomial, interval: tuple[float, float]) -> bool:
    """True iff max of p' on the interval is <= 0."""
    _, dmax = extrema_on_interval(differentiate(p), interval)
    return dmax <= 0.0


def construct_P_kappa(
    kappa: float,
    Theta: float,
    R_tilde: float,
    e_B_target: float,
    base_degree: int,
    degree_cap: int = 30,
    q_cap: int = 64,
) -> tuple[Polynomial, float, int]:
    """Monotone polynomial approximation of 1/x certified on [kappa*Theta, Theta].

    Three steps: (1) a least-squares base fit of 1/x on [kappa*Theta/2, Theta],
    raising the degree from base_degree until it is monotone decreasing there
    with sup error <= e_B_target/2; (2) the smallest exponent q >= 0 making the
    additive slope correction push the derivative below -1 on the extension
    region [Theta - R~^2, kappa*Theta/2]; (3) the antiderivative bump
    h~(x) = (e_B/2) * (1 - (x - kappa*Theta)/M)^(q+1) added to the base fit.

    Returns (P, measured error on [kappa*Theta, Theta], q). Raises
    ConstructionError naming the violated bound if a cap is exceeded.
    """
    if not (0.0 < kappa < 1.0):
        raise ValueError("kappa must lie in (0, 1)")
    if Theta <= 0.0:
        raise ValueError("Theta must be positive")
    kt = kappa * Theta
    lo_ext = Theta - R_tilde * R_tilde
    fit_iv = (kt / 2.0, Theta)

    base = None
    for deg in range(base_degree, degree_cap + 1):
        cand = fit_least_squares("reciprocal", fit_iv, deg)
        if cand.sup_error <= e_B_target / 2.0 and is_monotone_decreasing(cand.poly, fit_iv):
            base = cand
            break
    if base is None:
        raise ConstructionError(
            f"degree cap ({degree_cap}) exceeded: no monotone base fit of 1/x on "
            f"[{fit_iv[0]:.6g}, {fit_iv[1]:.6g}] reaches sup error {e_B_target / 2.0:.6g}"
        )

    M = max(abs(lo_ext), (1.0 - kappa) * Theta)
    dbase = differentiate(base.poly)
    q = 0
    if lo_ext < kt / 2.0:
        xs = np.linspace(lo_ext, kt / 2.0, 4097)
        dvals = eval_poly(dbase, xs)
        found = False
        for q in range(q_cap + 1):
            bump = (e_B_target * (q + 1) / (2.0 * M)) * (1.0 - (xs - kt) / M) ** q
            if np.max(dvals - bump) <= -1.0:
                found = True
                break
        if not found:
            raise ConstructionError(
                f"q cap ({q_cap}) exceeded: slope correction cannot reach -1 on "
                f"[{lo_ext:.6g}, {kt / 2.0:.6g}]"
            )

    # h~(x) = (e_B/2) * ((1 + kt/M) - x/M)^(q+1), expanded to monomials
    bump_coeffs = _npoly.polypow(np.array([1.0 + kt / M, -1.0 / M]), q + 1)
    h_tilde = Polynomial((e_B_target / 2.0) * bump_coeffs)
    P = base.poly + h_tilde

    mono_iv = (min(lo_ext, kt / 2.0), kt)
    if not is_monotone_decreasing(P, mono_iv):
        raise ConstructionError(
            f"constructed P_kappa is not monotone decreasing on "
            f"[{mono_iv[0]:.6g}, {mono_iv[1]:.6g}]"
        )
    e_B_actual = sup_error(P, "reciprocal", (kt, Theta))
    if e_B_actual > e_B_target:
        raise ConstructionError(
            f"constructed P_kappa error {e_B_actual:.6g} exceeds target {e_B_target:.6g} "
            f"on [{kt:.6g}, {Theta:.6g}]"
        )
    return P, float(e_B_actual), q
