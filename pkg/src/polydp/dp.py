"""Sensitivity bounds, Gaussian noise calibration, clipping, and the tail constant."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "DPParams",
    "sensitivity_delta2",
    "calibrate_sigma",
    "c_delta",
    "clip",
    "gaussian_vector",
    "privacy_budget_with_release",
]


def sensitivity_delta2(e_f: float, m: int, phi_max: float = 1.0) -> float:
    """l2 sensitivity bound Delta_2 = 2 (phi'_max + e_f) sqrt(m) of the summed
    approximate gradient under one-record replacement (the averaged gradient
    then moves by at most Delta_2 / N)."""
    if e_f < 0 or phi_max < 0:
        raise ValueError("e_f and phi_max must be nonnegative")
    return 2.0 * (phi_max + e_f) * math.sqrt(m)


def calibrate_sigma(Delta2: float, T: int, eps: float, delta: float, N: int) -> float:
    """Noise scale sigma = 2 Delta_2 sqrt(T ln(3/delta)) / (eps N)."""
    if min(Delta2, T, eps, delta, N) <= 0:
        raise ValueError("all calibration inputs must be positive")
    return 2.0 * Delta2 * math.sqrt(T * math.log(3.0 / delta)) / (eps * N)


def c_delta(T: int, delta: float) -> float:
    """Tail constant c_delta = sqrt(2 ln(3T/delta))."""
    if T <= 0 or delta <= 0:
        raise ValueError("T and delta must be positive")
    return math.sqrt(2.0 * math.log(3.0 * T / delta))


def clip(g: np.ndarray, C: float) -> np.ndarray:
    """min{1, C/||g||} g: norm capped at C, direction preserved."""
    if C <= 0:
        raise ValueError("clip norm C must be positive")
    g = np.asarray(g, dtype=float)
    n = float(np.linalg.norm(g))
    if n <= C:
        return g
    return (C / n) * g


def gaussian_vector(m: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. N(0, sigma^2) vector, deterministic per generator state.

    Draws come from numpy's Generator (ziggurat normal sampler). sigma = 0
    returns exact zeros without consuming generator state, so noise-free runs
    are bit-identical to loops that never sample.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0.0:
        return np.zeros(m)
    return rng.normal(0.0, sigma, size=m)


def privacy_budget_with_release(T: int, release: bool) -> int:
    """Iteration count to charge when the gradient-scale d is released: one
    extra Gaussian release costs the same budget as one more GD step."""
    if T < 1:
        raise ValueError("T must be >= 1")
    return T + 1 if release else T


@dataclass
class DPParams:
    """Privacy budget plus the derived calibration values carried by a run."""

    epsilon: float
    delta: float
    N: int
    T: int
    Delta2: float
    sigma: float
    c_delta: float
    clip_C: Optional[float] = None

    def __post_init__(self):
        if self.epsilon <= 0 or not (0 < self.delta < 1):
            raise ValueError("require epsilon > 0 and delta in (0, 1)")
        if self.Delta2 < 0 or self.sigma < 0:
            raise ValueError("Delta2 and sigma must be nonnegative")
        if self.clip_C is not None and self.clip_C <= 0:
            raise ValueError("clip_C must be positive when set")

    @classmethod
    def calibrated(
        cls,
        epsilon: float,
        delta: float,
        N: int,
        T: int,
        e_f: float,
        m: int,
        phi_max: float = 1.0,
        release_d: bool = False,
        clip_C: Optional[float] = None,
    ) -> "DPParams":
        """Build parameters from the closed-form noise formula."""
        T_eff = privacy_budget_with_release(T, release_d)
        Delta2 = sensitivity_delta2(e_f, m, phi_max)
        sigma = calibrate_sigma(Delta2, T_eff, epsilon, delta, N)
        return cls(
            epsilon=epsilon,
            delta=delta,
            N=N,
            T=T,
            Delta2=Delta2,
            sigma=sigma,
            c_delta=c_delta(T_eff, delta),
            clip_C=clip_C,
        )

    @classmethod
    def noiseless(cls, N: int, T: int, clip_C: Optional[float] = None) -> "DPParams":
        """sigma = 0 placeholder for non-private runs and degeneration tests."""
        return cls(
            epsilon=1.0,
            delta=0.5,
            N=N,
            T=T,
            Delta2=0.0,
            sigma=0.0,
            c_delta=c_delta(max(T, 1), 0.5),
            clip_C=clip_C,
        )

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "N": self.N,
            "T": self.T,
            "Delta2": self.Delta2,
            "sigma": self.sigma,
            "c_delta": self.c_delta,
            "clip_C": self.clip_C,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DPParams":
        return cls(
            epsilon=float(d["epsilon"]),
            delta=float(d["delta"]),
            N=int(d["N"]),
            T=int(d["T"]),
            Delta2=float(d["Delta2"]),
            sigma=float(d["sigma"]),
            c_delta=float(d["c_delta"]),
            clip_C=None if d.get("clip_C") is None else float(d["clip_C"]),
        )
