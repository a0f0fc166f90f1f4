"""Logistic-regression objective, barrier-augmented objective, and their exact
and polynomial-approximate gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .poly import Polynomial, antidifferentiate, differentiate, eval_poly, extrema_on_interval

__all__ = [
    "Dataset",
    "BarrierParams",
    "ConvergenceParams",
    "sigmoid",
    "phi_prime_max",
    "loss_f",
    "grad_f",
    "grad_g",
    "F_kappa_extended",
    "barrier_value",
    "loss_f_barrier",
    "grad_f_barrier",
    "grad_g_barrier",
    "curvature_report",
    "empirical_nu",
]


@dataclass
class Dataset:
    """Feature matrix with rows in [-1, 1]^m and binary labels.

    The [-1, 1] domain is load-bearing: every sensitivity bound downstream
    relies on ||x|| <= sqrt(m).
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2 or self.X.shape[0] < 1:
            raise ValueError("X must be a nonempty N x m matrix")
        if self.y.shape != (self.X.shape[0],):
            raise ValueError("y must have one label per row of X")
        if not np.all(np.isin(self.y, (0.0, 1.0))):
            raise ValueError("labels must be in {0, 1}")
        if np.max(np.abs(self.X)) > 1.0 + 1e-9:
            raise ValueError("features must lie in [-1, 1] after preprocessing")

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]


@dataclass
class BarrierParams:
    """Barrier configuration: threshold Theta, strength lam, cut point kappa,
    the polynomial approximating 1/x, and its certified extrema."""

    Theta: float
    lam: float
    kappa: float
    P_kappa: Polynomial
    e_B: float
    m_P: float = 0.0
    M_P: float = 0.0

    def refresh_extrema(self, R: float) -> None:
        """Recompute m_P/M_P on [Theta - R^2, kappa*Theta]."""
        lo = self.Theta - R * R
        hi = self.kappa * self.Theta
        if lo >= hi:
            v = eval_poly(self.P_kappa, hi)
            self.m_P, self.M_P = v, v
        else:
            self.m_P, self.M_P = extrema_on_interval(self.P_kappa, (lo, hi))

    def validate(self, R: float) -> None:
        if not (self.Theta > 0 and self.lam > 0 and 0 < self.kappa < 1):
            raise ValueError("require Theta > 0, lam > 0, kappa in (0, 1)")
        if self.m_P > self.M_P:
            raise ValueError("m_P must not exceed M_P")
        if self.m_P < 0:
            raise ValueError("m_P must be nonnegative")
        lo, hi = self.Theta - R * R, self.kappa * self.Theta
        if lo < hi:
            mn, mx = extrema_on_interval(self.P_kappa, (lo, hi))
            if abs(mn - self.m_P) > 1e-6 * max(1.0, abs(mn)) or abs(mx - self.M_P) > 1e-6 * max(1.0, abs(mx)):
                raise ValueError("stored m_P/M_P disagree with recomputed extrema")

    def to_dict(self) -> dict:
        return {
            "Theta": self.Theta,
            "lambda": self.lam,
            "kappa": self.kappa,
            "P_kappa": list(self.P_kappa.coeffs),
            "e_B": self.e_B,
            "m_P": self.m_P,
            "M_P": self.M_P,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BarrierParams":
        return cls(
            Theta=float(d["Theta"]),
            lam=float(d["lambda"]),
            kappa=float(d["kappa"]),
            P_kappa=Polynomial(d["P_kappa"]),
            e_B=float(d["e_B"]),
            m_P=float(d.get("m_P", 0.0)),
            M_P=float(d.get("M_P", 0.0)),
        )


@dataclass
class ConvergenceParams:
    """Convergence-analysis quantities; nu and alpha_obj are optional diagnostics."""

    beta_g: float
    mu: float
    zeta: float
    zeta_f: float
    R: float
    L: float = 0.0
    nu: Optional[float] = None
    alpha_obj: Optional[float] = None

    def __post_init__(self):
        for name in ("beta_g", "mu", "zeta", "zeta_f", "R"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.zeta < self.zeta_f:
            raise ValueError("zeta must dominate its data term zeta_f")


def sigmoid(z):
    """1/(1 + e^-z) with the exponent clamped to avoid overflow."""
    z = np.clip(z, -500.0, 500.0)
    return 1.0 / (1.0 + np.exp(-z))


def phi_prime_max() -> float:
    # |sigma(z) - y| <= 1 for logistic loss; other losses would override this
    return 1.0


def _check_dims(w: np.ndarray, D: Dataset) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (D.m,):
        raise ValueError(f"weight dimension {w.shape} does not match m={D.m}")
    return w


def loss_f(w: np.ndarray, D: Dataset) -> float:
    """Mean cross-entropy -(1/N) sum [y ln s(z) + (1-y) ln(1-s(z))]."""
    w = _check_dims(w, D)
    z = D.X @ w
    # softplus(z) - y z is the per-sample cross entropy, stable for large |z|
    return float(np.mean(np.logaddexp(0.0, z) - D.y * z))


def grad_f(w: np.ndarray, D: Dataset) -> np.ndarray:
    w = _check_dims(w, D)
    z = D.X @ w
    return D.X.T @ (sigmoid(z) - D.y) / D.N


def grad_g(w: np.ndarray, D: Dataset, p0: Polynomial, p1: Polynomial) -> np.ndarray:
    """(1/N) sum [y p1(z) + (1-y) p0(z)] x, the exact gradient of the
    antiderivative objective g."""
    w = _check_dims(w, D)
    z = D.X @ w
    s = D.y * eval_poly(p1, z) + (1.0 - D.y) * eval_poly(p0, z)
    return D.X.T @ s / D.N


def loss_g(w: np.ndarray, D: Dataset, p0: Polynomial, p1: Polynomial) -> float:
    """The scalar objective whose exact gradient grad_g is: built from the
    antiderivatives of p0/p1 anchored to match cross-entropy at z=0."""
    w = _check_dims(w, D)
    z = D.X @ w
    ln2 = math.log(2.0)
    P0 = antidifferentiate(p0, ln2)
    P1 = antidifferentiate(p1, ln2)
    vals = D.y * eval_poly(P1, z) + (1.0 - D.y) * eval_poly(P0, z)
    return float(np.mean(vals))


def F_kappa_extended(x: float, bp: BarrierParams, R: float) -> float:
    """Barrier derivative 1/x on [kappa*Theta, Theta], continued below kappa*Theta
    by the shifted polynomial so the extension is continuous at the cut."""
    kt = bp.kappa * bp.Theta
    lo = bp.Theta - R * R
    if x > bp.Theta + 1e-12 or x < lo - 1e-12:
        raise ValueError(f"x={x} outside barrier domain [{lo}, {bp.Theta}]")
    if x >= kt:
        return 1.0 / x
    shift = 1.0 / kt - eval_poly(bp.P_kappa, kt)
    return shift + eval_poly(bp.P_kappa, x)


def barrier_value(x: float, bp: BarrierParams, R: float) -> float:
    """Antiderivative B of the extended barrier derivative, with B = ln on
    [kappa*Theta, Theta]; continuous at the cut."""
    kt = bp.kappa * bp.Theta
    lo = bp.Theta - R * R
    if x > bp.Theta + 1e-12 or x < lo - 1e-12:
        raise ValueError(f"x={x} outside barrier domain [{lo}, {bp.Theta}]")
    if x >= kt:
        return math.log(x)
    shift = 1.0 / kt - eval_poly(bp.P_kappa, kt)
    anti = antidifferentiate(bp.P_kappa)
    # B(x) = ln(kt) - integral_x^kt (shift + P(t)) dt
    integral = shift * (kt - x) + (eval_poly(anti, kt) - eval_poly(anti, x))
    return math.log(kt) - integral


def loss_f_barrier(w: np.ndarray, D: Dataset, bp: BarrierParams, R: float) -> float:
    """f(w) - lam * B(Theta - ||w||^2), using the extended antiderivative
    outside the log's certified region."""
    w = _check_dims(w, D)
    return loss_f(w, D) - bp.lam * barrier_value(bp.Theta - float(w @ w), bp, R)


def grad_f_barrier(w: np.ndarray, D: Dataset, bp: BarrierParams, R: float) -> np.ndarray:
    w = _check_dims(w, D)
    nw = float(np.linalg.norm(w))
    if nw > R + 1e-12:
        raise ValueError(f"||w||={nw} exceeds the certified radius R={R}")
    f_term = 2.0 * bp.lam * F_kappa_extended(bp.Theta - float(w @ w), bp, R)
    return grad_f(w, D) + f_term * w


def grad_g_barrier(
    w: np.ndarray, D: Dataset, bp: BarrierParams, p0: Polynomial, p1: Polynomial
) -> np.ndarray:
    """Exactly the bracketed update direction of the no-clip training loop
    (no noise, no learning rate)."""
    w = _check_dims(w, D)
    barrier_term = 2.0 * bp.lam * eval_poly(bp.P_kappa, bp.Theta - float(w @ w))
    return barrier_term * w + grad_g(w, D, p0, p1)


def curvature_report(
    bp: BarrierParams, R: float, mu_f: float, beta_f: float
) -> ConvergenceParams:
    """Strong convexity / smoothness / gradient-distance parameters of the
    barrier-augmented objective, in the printed closed forms."""
    kt = bp.kappa * bp.Theta
    lo = bp.Theta - R * R
    dP = differentiate(bp.P_kappa)
    if lo < kt:
        m_Fprime, _ = extrema_on_interval(dP, (lo, kt))
    else:
        m_Fprime = float(eval_poly(dP, kt))
    shift = 1.0 / kt - eval_poly(bp.P_kappa, kt)
    branch_left = -4.0 * bp.lam * m_Fprime + shift + eval_poly(bp.P_kappa, lo)
    branch_right = 4.0 * bp.lam * (1.0 - bp.kappa) * bp.Theta / (kt * kt) + 1.0 / kt
    beta = beta_f + max(branch_left, branch_right)
    mu = mu_f + 2.0 * bp.lam / bp.Theta
    zeta_f = 0.0  # caller folds in e_f * sqrt(m); this report covers the barrier side
    zeta = 2.0 * bp.lam * bp.e_B * R
    return ConvergenceParams(beta_g=beta, mu=mu, zeta=zeta, zeta_f=zeta_f, R=R)


def convergence_params(
    bp: BarrierParams, R: float, e_f: float, m: int, mu_f: float = 0.0, beta_f: float = 0.0
) -> ConvergenceParams:
    """curvature_report with the data-side gradient distance folded in."""
    rep = curvature_report(bp, R, mu_f, beta_f)
    zf = e_f * math.sqrt(m)
    rep.zeta_f = zf
    rep.zeta = zf + 2.0 * bp.lam * bp.e_B * R
    return rep


def empirical_nu(
    D: Dataset,
    w_star: np.ndarray,
    sigma: float,
    n_points: int = 32,
    n_noise: int = 256,
    radius: float = 2.0,
    seed: int = 0,
) -> float:
    """Monte-Carlo estimate of the expected-curvature parameter: the smallest
    sampled ratio E<grad f(w+chi), w+chi-w*> / E||w+chi-w*||^2.

    Diagnostic only; the definition gives no constructive estimator.
    """
    rng = np.random.default_rng(seed)
    m = D.m
    worst = math.inf
    for _ in range(n_points):
        w = w_star + rng.uniform(-radius, radius, size=m)
        chis = rng.normal(0.0, sigma, size=(n_noise, m)) if sigma > 0 else np.zeros((n_noise, m))
        num = 0.0
        den = 0.0
        for chi in chis:
            wc = w + chi
            diff = wc - w_star
            num += float(grad_f(wc, D) @ diff)
            den += float(diff @ diff)
        if den > 0:
            worst = min(worst, num / den)
    return worst if math.isfinite(worst) else 0.0
