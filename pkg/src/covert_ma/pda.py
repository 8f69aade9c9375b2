"""Proximal distance algorithm for the covert beamforming block.

The block problem is

    min_W  sum_k w_k^H A w_k - 2 Re{b_k^H w_k}
    s.t.   ||W||_F^2 <= p_max,   sum_k |h0^H w_k|^2 <= p_th.

Each iteration projects the current point onto both sets and solves the
penalized quadratic in closed form, then grows the penalty.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class ProjectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class PdaConfig:
    penalty_init: float = 0.05
    penalty_growth: float = 1.1
    max_iters: int = 200
    objective_tol: float = 1e-3
    # squared distance to either set, relative to p_max, below which the
    # iterate counts as feasible enough to stop
    feasibility_tol: float = 1e-6

    def __post_init__(self):
        if self.penalty_init <= 0 or self.penalty_growth <= 1 or self.max_iters < 1:
            raise ValueError("invalid PDA configuration")


@dataclass(frozen=True, eq=False)
class BlockData:
    """Quadratic coefficients of the beamforming block.

    ``A`` is shared by all users; ``B`` holds b_k as columns; ``h0`` is the
    warden channel (H0 = h0 h0^H is never formed explicitly).
    """

    A: np.ndarray
    B: np.ndarray
    h0: np.ndarray

    @property
    def H0(self) -> np.ndarray:
        return np.outer(self.h0, self.h0.conj())


def build_block_data(phi, beta, H, h0) -> BlockData:
    weights = np.asarray(beta) * np.abs(phi) ** 2
    A = (H * weights) @ H.conj().T
    A = 0.5 * (A + A.conj().T)
    B = H * (np.asarray(beta) * np.asarray(phi))
    return BlockData(A, B, np.asarray(h0, dtype=complex))


def block_objective(data: BlockData, W) -> float:
    """sum_k w_k^H A w_k - 2 Re{b_k^H w_k}."""
    quad = np.vdot(W, data.A @ W).real
    lin = np.vdot(data.B, W).real
    return float(quad - 2.0 * lin)


def project_power(W, p_max: float) -> np.ndarray:
    """Euclidean projection onto the Frobenius ball of radius sqrt(p_max)."""
    power = float(np.real(np.vdot(W, W)))
    if power <= p_max:
        return W
    return W * np.sqrt(p_max / power)


def project_covert(W, h0, p_th: float, max_iter: int = 200) -> np.ndarray:
    """Projection onto {W : sum_k |h0^H w_k|^2 <= p_th}.

    The multiplier of the active constraint is found by bisection. By
    Sherman-Morrison, (I + s h0 h0^H)^{-1} w = w - s h0 (h0^H w) / (1 + s ||h0||^2),
    so every trial costs O(NK).
    """
    leak = h0.conj() @ W
    current = float(np.vdot(leak, leak).real)
    if current <= p_th:
        return W
    h_norm2 = float(np.real(np.vdot(h0, h0)))
    if h_norm2 == 0.0:
        raise ProjectionError("warden channel is zero but leakage is positive")

    def leaked(s):
        return current / (1.0 + s * h_norm2) ** 2

    lo, hi = 0.0, 1.0 / h_norm2
    for _ in range(max_iter):
        if leaked(hi) <= p_th:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise ProjectionError("could not bracket the covertness multiplier")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * hi:
            break
        if leaked(mid) <= p_th:
            hi = mid
        else:
            lo = mid
    else:
        raise ProjectionError("covertness bisection did not converge")
    shrink = hi / (1.0 + hi * h_norm2)
    return W - shrink * np.outer(h0, leak)


def _sq_dist(X, Y) -> float:
    D = X - Y
    return float(np.vdot(D, D).real)


def penalized_objective(data: BlockData, W, W1, W2, rho: float) -> float:
    """Block objective plus rho times squared distances to the two anchors."""
    return block_objective(data, W) + rho * (_sq_dist(W, W1) + _sq_dist(W, W2))


def pda_step(data: BlockData, W1, W2, rho: float) -> np.ndarray:
    """Minimizer of the penalized quadratic: (A + 2 rho I) w_k = b_k + rho(w1_k + w2_k)."""
    n = data.A.shape[0]
    M = data.A + 2.0 * rho * np.eye(n)
    factor = scipy.linalg.cho_factor(M, lower=True, check_finite=False)
    return scipy.linalg.cho_solve(factor, data.B + rho * (W1 + W2), check_finite=False)


def run_pda(
    data: BlockData,
    W_init,
    p_max: float,
    p_th: float,
    cfg: PdaConfig = PdaConfig(),
    history: list | None = None,
) -> np.ndarray:
    """Algorithm: project, closed-form step, grow the penalty; stop once the
    penalized objective, taken at each iterate with its own penalty, moves by
    at most ``objective_tol`` between iterations and the iterate sits within
    ``feasibility_tol * p_max`` (squared distance) of both sets.

    The result is finally projected onto the covert set and then the power
    ball, so it is feasible for both. ``history``, if given, receives one
    ``(rho, before, after)`` tuple per iteration, the penalized objective at
    fixed rho and anchors before and after the step.
    """
    W = np.array(W_init, dtype=complex)
    rho = cfg.penalty_init
    W1, W2 = project_power(W, p_max), project_covert(W, data.h0, p_th)
    previous = None
    for _ in range(cfg.max_iters):
        W_next = pda_step(data, W1, W2, rho)
        after = penalized_objective(data, W_next, W1, W2, rho)
        if history is not None:
            history.append((rho, penalized_objective(data, W, W1, W2, rho), after))
        W = W_next
        rho *= cfg.penalty_growth
        W1, W2 = project_power(W, p_max), project_covert(W, data.h0, p_th)
        if previous is not None and abs(previous - after) <= cfg.objective_tol:
            if max(_sq_dist(W, W1), _sq_dist(W, W2)) <= cfg.feasibility_tol * p_max:
                break
        previous = after
    return project_power(project_covert(W, data.h0, p_th), p_max)
