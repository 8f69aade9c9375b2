"""Warden energy detection under log-uniform noise uncertainty."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ConfigError


@dataclass(frozen=True)
class CovertnessBudget:
    p_th: float
    tau: float
    eps: float
    nominal_noise: float


def warden_received_power(h0, W) -> float:
    """Signal power at the warden, sum_k |h0^H w_k|^2."""
    return float(np.sum(np.abs(np.conj(h0) @ W) ** 2))


def covert_power_budget(nominal_noise: float, tau: float, eps: float) -> CovertnessBudget:
    """Largest warden signal power keeping the minimum detection error >= 1 - eps."""
    if tau < 1:
        raise ConfigError("tau must be >= 1")
    if not 0 < eps <= 0.5:
        raise ConfigError("eps must lie in (0, 0.5]")
    p_th = nominal_noise * (tau ** (2 * eps) - 1.0) / tau
    return CovertnessBudget(p_th, tau, eps, nominal_noise)


def optimal_threshold(received_power: float, nominal_noise: float, tau: float) -> float:
    return received_power + nominal_noise / tau


def min_detection_error(received_power: float, nominal_noise: float, tau: float) -> float:
    """Minimum false-alarm plus missed-detection probability, clamped to [0, 1]."""
    if tau <= 1:
        raise ConfigError("detection error is undefined for tau <= 1")
    if received_power < 0:
        raise ValueError("received power must be non-negative")
    xi = 1.0 - math.log1p(received_power * tau / nominal_noise) / (2.0 * math.log(tau))
    return min(max(xi, 0.0), 1.0)


def sample_warden_noise(nominal_noise: float, tau: float, size: int, rng) -> np.ndarray:
    """Draws from the log-uniform law on [nominal/tau, tau*nominal]."""
    log_tau = math.log(tau)
    return nominal_noise * np.exp(rng.uniform(-log_tau, log_tau, size=size))


def monte_carlo_detection_error(
    received_power: float, nominal_noise: float, tau: float, samples: int, seed: int
) -> float:
    """Empirical P_FA + P_MD of the radiometer at its optimal threshold.

    Each hypothesis gets its own noise draws so the two error terms are
    estimated independently.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    threshold = optimal_threshold(received_power, nominal_noise, tau)
    noise_h0 = sample_warden_noise(nominal_noise, tau, samples, rng)
    noise_h1 = sample_warden_noise(nominal_noise, tau, samples, rng)
    p_fa = np.mean(noise_h0 > threshold)
    p_md = np.mean(received_power + noise_h1 <= threshold)
    return float(p_fa + p_md)
