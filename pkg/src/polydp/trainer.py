"""Training loops: approximate GD, its DP variant, the no-clipping barrier
DP-GD, the clipped DP-(S)GD baseline, the output-perturbation baseline, the
exact-GD oracle, and the data-independent eta/T estimator.

Every loop is deterministic given (config, seed, dataset). Batch indices and
noise draws come from independent child streams of the run seed, so switching
noise off (sigma = 0) or the barrier off (lam = 0) leaves the remaining
arithmetic bit-identical.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dp import DPParams, gaussian_vector
from .objective import (
    BarrierParams,
    Dataset,
    grad_f,
    grad_g,
    grad_g_barrier,
    loss_f,
    sigmoid,
)
from .poly import Polynomial, eval_poly, extrema_on_interval

__all__ = [
    "TrainConfig",
    "RunTrace",
    "DivergenceError",
    "approx_gd",
    "dp_approx_gd",
    "noclip_dp_gd",
    "clipped_dp_gd",
    "output_perturbation_gd",
    "exact_gd_oracle",
    "estimate_eta_T",
]

# any non-finite iterate, or a norm beyond this, flags the run as diverged
DIVERGENCE_NORM = 1e6


class DivergenceError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    eta: float
    T: int
    rho: Optional[float] = None
    batch_n: Optional[int] = None
    seed: int = 0
    d: Optional[float] = None  # released gradient scale ||grad f(0)|| / sqrt(m)

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.T < 0:
            raise ValueError("T must be >= 0")
        if self.batch_n is not None and self.batch_n < 1:
            raise ValueError("batch_n must be >= 1 when set")


@dataclass
class RunTrace:
    """Per-iteration bookkeeping: row i describes iterate w_i (i = 0..T), with
    the gradient norm and batch z-range of the step taken from w_i; the final
    row re-evaluates them on the full dataset. Truncated when a run diverges."""

    w_norm: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    z_min: list = field(default_factory=list)
    z_max: list = field(default_factory=list)
    diverged: bool = False
    final_w: Optional[np.ndarray] = None

    def record(self, w, loss_val, grad, z):
        self.w_norm.append(float(np.linalg.norm(w)))
        self.loss.append(float(loss_val))
        self.grad_norm.append(float(np.linalg.norm(grad)))
        self.z_min.append(float(np.min(z)))
        self.z_max.append(float(np.max(z)))

    def __len__(self):
        return len(self.w_norm)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf)
        wr.writerow(["iter", "loss", "grad_norm", "w_norm", "z_min", "z_max"])
        for i in range(len(self.w_norm)):
            wr.writerow([i, self.loss[i], self.grad_norm[i], self.w_norm[i], self.z_min[i], self.z_max[i]])
        return buf.getvalue()


def _rng_streams(seed: int):
    """(batch_rng, noise_rng): independent child streams of one run seed."""
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(2)
    return np.random.default_rng(children[0]), np.random.default_rng(children[1])


def _bad(w: np.ndarray) -> bool:
    return (not np.all(np.isfinite(w))) or float(np.linalg.norm(w)) > DIVERGENCE_NORM


def _batch_indices(rng, N: int, batch_n: Optional[int]):
    if batch_n is None or batch_n >= N:
        return None
    return rng.choice(N, size=batch_n, replace=False)


def approx_gd(
    D: Dataset, p0: Polynomial, p1: Polynomial, cfg: TrainConfig
) -> tuple[np.ndarray, RunTrace]:
    """Gradient descent on the polynomial objective: w <- w - eta * grad_g(w)."""
    batch_rng, _ = _rng_streams(cfg.seed)
    w = np.zeros(D.m)
    tr = RunTrace()
    for _ in range(cfg.T):
        idx = _batch_indices(batch_rng, D.N, cfg.batch_n)
        Xb = D.X if idx is None else D.X[idx]
        yb = D.y if idx is None else D.y[idx]
        z = Xb @ w
        s = yb * eval_poly(p1, z) + (1.0 - yb) * eval_poly(p0, z)
        g = Xb.T @ s / len(yb)
        tr.record(w, loss_f(w, D), g, z)
        w = w - cfg.eta * g
        if _bad(w):
            tr.diverged = True
            break
    if not tr.diverged:
        z = D.X @ w
        g = grad_g(w, D, p0, p1)
        tr.record(w, loss_f(w, D), g, z)
    tr.final_w = w
    return w, tr


def dp_approx_gd(
    D: Dataset, p0: Polynomial, p1: Polynomial, cfg: TrainConfig, dp: DPParams
) -> tuple[np.ndarray, RunTrace]:
    """approx_gd with a fresh Gaussian vector added to each gradient."""
    batch_rng, noise_rng = _rng_streams(cfg.seed)
    w = np.zeros(D.m)
    tr = RunTrace()
    for _ in range(cfg.T):
        idx = _batch_indices(batch_rng, D.N, cfg.batch_n)
        Xb = D.X if idx is None else D.X[idx]
        yb = D.y if idx is None else D.y[idx]
        z = Xb @ w
        s = yb * eval_poly(p1, z) + (1.0 - yb) * eval_poly(p0, z)
        g = Xb.T @ s / len(yb)
        chi = gaussian_vector(D.m, dp.sigma, noise_rng)
        step = g + chi
        tr.record(w, loss_f(w, D), step, z)
        w = w - cfg.eta * step
        if _bad(w):
            tr.diverged = True
            break
    if not tr.diverged:
        z = D.X @ w
        tr.record(w, loss_f(w, D), grad_g(w, D, p0, p1), z)
    tr.final_w = w
    return w, tr


def noclip_step(
    w: np.ndarray,
    Xb: np.ndarray,
    yb: np.ndarray,
    p0: Polynomial,
    p1: Polynomial,
    bp: BarrierParams,
    eta: float,
    chi: np.ndarray,
):
    """One barrier update. The expression order here is normative: the circuit
    executor replays exactly these operations, and shadow exactness is checked
    bit-for-bit against this function."""
    z = Xb @ w
    s = yb * eval_poly(p1, z) + (1.0 - yb) * eval_poly(p0, z)
    data_grad = Xb.T @ s / len(yb)
    barrier_coeff = 2.0 * bp.lam * eval_poly(bp.P_kappa, bp.Theta - float(w @ w))
    direction = barrier_coeff * w + data_grad + chi
    return w - eta * direction, direction, z


def noclip_dp_gd(
    D: Dataset,
    bp: BarrierParams,
    p0: Polynomial,
    p1: Polynomial,
    cfg: TrainConfig,
    dp: DPParams,
    feasibility=None,
) -> tuple[np.ndarray, RunTrace]:
    """No-clipping barrier DP-GD: w <- w - eta (2 lam P(Theta-||w||^2) w +
    batch-mean p~'(z, y) x + chi).

    A private run (sigma > 0) refuses to start without a feasibility report
    whose checks all passed; the DP guarantee is conditional on them.
    """
    if dp.sigma > 0:
        if feasibility is None or not getattr(feasibility, "feasible", False):
            raise ValueError(
                "noclip_dp_gd with sigma > 0 requires a passing feasibility report"
            )
    batch_rng, noise_rng = _rng_streams(cfg.seed)
    w = np.zeros(D.m)
    tr = RunTrace()
    for _ in range(cfg.T):
        idx = _batch_indices(batch_rng, D.N, cfg.batch_n)
        Xb = D.X if idx is None else D.X[idx]
        yb = D.y if idx is None else D.y[idx]
        chi = gaussian_vector(D.m, dp.sigma, noise_rng)
        w_next, direction, z = noclip_step(w, Xb, yb, p0, p1, bp, cfg.eta, chi)
        tr.record(w, loss_f(w, D), direction, z)
        w = w_next
        if _bad(w):
            tr.diverged = True
            break
    if not tr.diverged:
        z = D.X @ w
        tr.record(w, loss_f(w, D), grad_g_barrier(w, D, bp, p0, p1), z)
    tr.final_w = w
    return w, tr


def clipped_dp_gd(
    D: Dataset,
    cfg: TrainConfig,
    dp: DPParams,
    p_sigmoid: Optional[Polynomial] = None,
) -> tuple[np.ndarray, RunTrace]:
    """Per-sample clipping baseline: clip each sample gradient to dp.clip_C,
    average, add noise, step."""
    if dp.clip_C is None:
        raise ValueError("clipped_dp_gd requires dp.clip_C")
    C = dp.clip_C
    batch_rng, noise_rng = _rng_streams(cfg.seed)
    w = np.zeros(D.m)
    tr = RunTrace()
    for _ in range(cfg.T):
        idx = _batch_indices(batch_rng, D.N, cfg.batch_n)
        Xb = D.X if idx is None else D.X[idx]
        yb = D.y if idx is None else D.y[idx]
        z = Xb @ w
        pred = sigmoid(z) if p_sigmoid is None else eval_poly(p_sigmoid, z)
        err = pred - yb
        # per-sample gradient is err_i * x_i, so its norm is |err_i| ||x_i||
        norms = np.abs(err) * np.linalg.norm(Xb, axis=1)
        scale = np.minimum(1.0, C / np.maximum(norms, 1e-300))
        g = Xb.T @ (err * scale) / len(yb)
        chi = gaussian_vector(D.m, dp.sigma, noise_rng)
        step = g + chi
        tr.record(w, loss_f(w, D), step, z)
        w = w - cfg.eta * step
        if _bad(w):
            tr.diverged = True
            break
    if not tr.diverged:
        z = D.X @ w
        tr.record(w, loss_f(w, D), grad_f(w, D), z)
    tr.final_w = w
    return w, tr


def output_perturbation_gd(
    D: Dataset,
    cfg: TrainConfig,
    dp: DPParams,
    ridge: float = 1e-3,
    tol: float = 1e-8,
    max_iter: int = 100000,
) -> tuple[np.ndarray, RunTrace]:
    """Ridge-regularized exact GD run to convergence, then one Gaussian vector
    added to the final weights.

    Noise scale follows the strongly-convex ERM recipe: sensitivity
    2/(N*ridge) for a 1-Lipschitz loss, Gaussian mechanism at (eps, delta).
    Baseline only; not covered by the barrier analysis.
    """
    _, noise_rng = _rng_streams(cfg.seed)
    w = np.zeros(D.m)
    tr = RunTrace()
    eta = 1.0 / (D.m / 4.0 + ridge + 1.0)
    for it in range(max_iter):
        g = grad_f(w, D) + ridge * w
        if it < cfg.T:
            z = D.X @ w
            tr.record(w, loss_f(w, D), g, z)
        if float(np.linalg.norm(g)) <= tol:
            break
        w = w - eta * g
    if dp.sigma > 0:
        sigma_out = (2.0 / (D.N * ridge)) * math.sqrt(2.0 * math.log(1.25 / dp.delta)) / dp.epsilon
    else:
        sigma_out = 0.0
    w = w + gaussian_vector(D.m, sigma_out, noise_rng)
    z = D.X @ w
    tr.record(w, loss_f(w, D), grad_f(w, D), z)
    tr.final_w = w
    return w, tr


def exact_gd_oracle(
    D: Dataset, tol: float = 1e-8, max_iter: int = 200000, eta: Optional[float] = None
) -> tuple[np.ndarray, bool]:
    """Plain logistic GD to ||grad f|| <= tol; returns (w, converged). On
    separable data there is no minimizer and the cap is reached; the best
    iterate comes back flagged."""
    w = np.zeros(D.m)
    if eta is None:
        eta = 4.0 / D.m  # 1/beta_f with beta_f <= m/4
    best_w, best_n = w, math.inf
    for _ in range(max_iter):
        g = grad_f(w, D)
        n = float(np.linalg.norm(g))
        if n < best_n:
            best_w, best_n = w, n
        if n <= tol:
            return w, True
        w = w - eta * g
    return best_w, False


def estimate_eta_T(
    p0: Polynomial,
    p1: Polynomial,
    interval: tuple[float, float],
    m: int,
    rho: float,
) -> tuple[float, int]:
    """Data-independent learning rate and step count: beta_approx is the
    maximum of the derivative-level polynomials over the certified interval
    times m; eta = 1/beta_approx; T = ceil(2 beta_approx ln2 / rho^2), taking
    g(0) = ln 2 and L = 0."""
    _, max0 = extrema_on_interval(p0, interval)
    _, max1 = extrema_on_interval(p1, interval)
    beta_approx = max(max0, max1) * m
    if beta_approx <= 0:
        raise ValueError(f"nonpositive smoothness estimate {beta_approx}")
    eta = 1.0 / beta_approx
    T = int(math.ceil(2.0 * beta_approx * math.log(2.0) / (rho * rho)))
    return eta, T
