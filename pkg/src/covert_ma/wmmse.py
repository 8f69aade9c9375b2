"""Sum-rate evaluation and closed-form WMMSE auxiliary updates.

Channels are passed as an (N, K) matrix ``H`` whose column k is h_k and the
beamformer as an (N, K) matrix ``W``. Entry (k, i) of ``H^H W`` is h_k^H w_i.
"""
from __future__ import annotations

import numpy as np


def _gains(W, H) -> np.ndarray:
    return H.conj().T @ W


def sinr(W, H, noise_power: float) -> np.ndarray:
    """Per-user SINR vector."""
    G = np.abs(_gains(W, H)) ** 2
    signal = np.diag(G)
    interference = G.sum(axis=1) - signal
    return signal / (interference + noise_power)


def sum_rate(W, H, noise_power: float) -> float:
    """Sum of log2(1 + SINR_k) in bits/s/Hz."""
    return float(np.sum(np.log2(1.0 + sinr(W, H, noise_power))))


def update_phi(W, H, noise_power: float) -> np.ndarray:
    """Scalar MMSE receivers phi_k = h_k^H w_k / (sum_i |h_k^H w_i|^2 + sigma^2)."""
    G = _gains(W, H)
    total = np.sum(np.abs(G) ** 2, axis=1) + noise_power
    return np.diag(G) / total


def update_beta(phi, W, H) -> np.ndarray:
    """MSE weights beta_k = 1 / (1 - conj(phi_k) h_k^H w_k)."""
    useful = np.diag(_gains(W, H))
    denom = 1.0 - np.real(np.conj(phi) * useful)
    if np.any(denom <= 0):
        raise ValueError("non-positive MSE; phi is not the MMSE receiver for W")
    return 1.0 / denom


def mse_terms(phi, W, H, noise_power: float) -> np.ndarray:
    """g_k = |phi_k|^2 (sum_i |h_k^H w_i|^2 + sigma^2) - 2 Re{phi_k^* h_k^H w_k} + 1."""
    G = _gains(W, H)
    total = np.sum(np.abs(G) ** 2, axis=1) + noise_power
    return np.abs(phi) ** 2 * total - 2.0 * np.real(np.conj(phi) * np.diag(G)) + 1.0


def surrogate_f(phi, beta, W, H, noise_power: float) -> float:
    """WMMSE objective sum_k beta_k g_k - ln beta_k (natural log)."""
    beta = np.asarray(beta, dtype=float)
    if np.any(beta <= 0):
        raise ValueError("beta must be positive")
    return float(np.sum(beta * mse_terms(phi, W, H, noise_power) - np.log(beta)))
