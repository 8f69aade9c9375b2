"""Block successive upper-bound minimization over (phi, beta, W, T) and baselines."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import position as pos
from .channel import Scenario
from .config import ConfigError, SystemConfig
from .covertness import warden_received_power
from .pda import PdaConfig, build_block_data, run_pda
from .wmmse import sum_rate, surrogate_f, update_beta, update_phi

log = logging.getLogger(__name__)

SCHEMES = ("MA-PDA", "ES-PDA", "MA-ZF", "FPA-PDA", "FPA-ZF")


@dataclass(frozen=True)
class SolverConfig:
    max_outer_iters: int = 100
    rate_tol: float = 1e-3
    pda: PdaConfig = PdaConfig()
    es_grid_step: float | None = None   # metres; None -> 0.05 wavelength


@dataclass
class SolverState:
    W: np.ndarray
    positions: np.ndarray
    phi: np.ndarray | None = None
    beta: np.ndarray | None = None
    sum_rate_trace: list[float] = field(default_factory=list)
    iteration: int = 0
    flags: list[str] = field(default_factory=list)

    @property
    def sum_rate(self) -> float:
        return self.sum_rate_trace[-1]


# --- initialization -----------------------------------------------------------------


def init_positions(cfg: SystemConfig, seed, max_attempts: int = 100_000) -> np.ndarray:
    """Uniform positions in the region, redrawn until every pair is >= d_min apart."""
    rng = np.random.default_rng(seed)
    N = cfg.num_antennas
    for _ in range(max_attempts):
        T = rng.uniform(0.0, cfg.region_size, size=(N, 2))
        if N == 1 or _min_pair_distance(T) >= cfg.min_spacing:
            return T
    raise ConfigError(f"could not place {N} antennas at spacing {cfg.min_spacing} m")


def _min_pair_distance(T) -> float:
    diff = T[:, None, :] - T[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    dist[np.diag_indices(len(T))] = np.inf
    return float(dist.min())


def fpa_positions(cfg: SystemConfig) -> np.ndarray:
    """Fixed array centred in the region: a near-square planar grid (default)
    or a line along x, with half-wavelength (or d_min, if larger) pitch."""
    N = cfg.num_antennas
    pitch = max(cfg.wavelength / 2, cfg.min_spacing)
    if cfg.fpa_layout == "linear":
        cols, rows = N, 1
    else:
        cols = math.ceil(math.sqrt(N))
        rows = math.ceil(N / cols)
    idx = np.arange(N)
    grid = np.stack([idx % cols, idx // cols], axis=1).astype(float) * pitch
    extent = np.array([cols - 1, rows - 1], dtype=float) * pitch
    T = grid + (cfg.region_size - extent) / 2.0
    if np.any(T < -1e-12) or np.any(T > cfg.region_size + 1e-12):
        raise ConfigError("fixed array does not fit in the region")
    return np.clip(T, 0.0, cfg.region_size)


def init_zf(H, p_max: float, h0, p_th: float) -> tuple[np.ndarray, str]:
    """Zero-forcing beamformer with equal per-user power, scaled down uniformly
    if the warden would receive more than ``p_th``."""
    N, K = H.shape
    gram = H.conj().T @ H
    flag = ""
    try:
        if K > N or np.linalg.cond(gram) > 1e12:
            raise np.linalg.LinAlgError
        W = H @ np.linalg.inv(gram)
    except np.linalg.LinAlgError:
        reg = 1e-12 * np.real(np.trace(gram)) / K
        W = H @ np.linalg.inv(gram + reg * np.eye(K))
        flag = "rank-deficient channel; regularized zero-forcing"
    norms = np.linalg.norm(W, axis=0)
    norms[norms == 0] = 1.0
    W = W / norms * np.sqrt(p_max / K)
    leak = warden_received_power(h0, W)
    if leak > p_th:
        W = W * np.sqrt(p_th / leak)
    return W, flag


# --- feasibility ---------------------------------------------------------------------


def check_feasible(scenario: Scenario, W, T, tol: float = 1e-9) -> list[str]:
    """Names of violated constraint families (empty when feasible)."""
    cfg = scenario.config
    problems = []
    power = float(np.real(np.vdot(W, W)))
    if power > cfg.max_power * (1 + tol):
        problems.append(f"power {power:.6g} > {cfg.max_power:.6g}")
    if np.any(T < -tol * cfg.region_size) or np.any(T > cfg.region_size * (1 + tol)):
        problems.append("antenna outside region")
    if len(T) > 1 and _min_pair_distance(T) < cfg.min_spacing - tol:
        problems.append(f"spacing {_min_pair_distance(T):.6g} < {cfg.min_spacing:.6g}")
    leak = warden_received_power(scenario.warden_channel(T), W)
    if leak > cfg.covert_threshold * (1 + tol):
        problems.append(f"warden power {leak:.6g} > {cfg.covert_threshold:.6g}")
    return problems


# --- position blocks -----------------------------------------------------------------


def _es_update_antenna(n, W, phi, beta, scenario, T, p_th, grid) -> np.ndarray:
    cfg = scenario.config
    lam = cfg.wavelength
    cand = np.vstack([grid, T[n][None]])
    others = np.delete(T, n, axis=0)
    ok = np.ones(len(cand), dtype=bool)
    for t in others:
        ok &= np.hypot(*(cand - t).T) >= cfg.min_spacing
    ok &= pos.leakage_power(cand, n, W, scenario.warden, T, lam) <= p_th
    ok[-1] = True
    vals = pos.block_objective(cand, n, W, phi, beta, scenario.users, T, lam)
    vals[~ok] = np.inf
    return cand[int(np.argmin(vals))].copy()


def _region_grid(cfg: SystemConfig, step: float) -> np.ndarray:
    count = int(round(cfg.region_size / step)) + 1
    axis = np.linspace(0.0, cfg.region_size, count)
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=1)


# --- the solver ----------------------------------------------------------------------


def solve(
    scenario: Scenario,
    cfg: SolverConfig = SolverConfig(),
    seed=0,
    *,
    beamforming: str = "pda",
    placement: str = "sca",
    initial_positions=None,
) -> SolverState:
    """Run the alternating scheme.

    ``beamforming`` is "pda" or "zf"; ``placement`` is "sca", "exhaustive" or
    "fixed". Each outer iteration updates phi, beta, then W, then every
    antenna in index order, and records the sum rate. A block update is kept
    only if it does not worsen the objective it targets, so the trace is
    non-decreasing; with zero-forcing, whose beamformer ignores that
    objective, an iteration that lowers the rate is undone and ends the run.
    """
    sys_cfg = scenario.config
    sigma2 = sys_cfg.noise_power
    p_max, p_th = sys_cfg.max_power, sys_cfg.covert_threshold
    if initial_positions is not None:
        T = np.array(initial_positions, dtype=float)
    elif placement == "fixed":
        T = fpa_positions(sys_cfg)
    else:
        T = init_positions(sys_cfg, seed)

    H, h0 = scenario.user_channels(T), scenario.warden_channel(T)
    W, flag = init_zf(H, p_max, h0, p_th)
    state = SolverState(W=W, positions=T, sum_rate_trace=[sum_rate(W, H, sigma2)])
    if flag:
        state.flags.append(flag)
    grid = None
    if placement == "exhaustive":
        step = cfg.es_grid_step or 0.05 * sys_cfg.wavelength
        grid = _region_grid(sys_cfg, step)

    for m in range(1, cfg.max_outer_iters + 1):
        W_prev, T_prev = W, T
        if beamforming == "zf" and m > 1:
            W, flag = init_zf(H, p_max, h0, p_th)
        phi = update_phi(W, H, sigma2)
        beta = update_beta(phi, W, H)

        if beamforming == "pda":
            data = build_block_data(phi, beta, H, h0)
            W_new = run_pda(data, W, p_max, p_th, cfg.pda)
            if surrogate_f(phi, beta, W_new, H, sigma2) <= surrogate_f(phi, beta, W, H, sigma2):
                W = W_new

        if placement != "fixed":
            T = T.copy()
            for n in range(sys_cfg.num_antennas):
                if placement == "sca":
                    T[n], flag = pos.sca_update_antenna(n, W, phi, beta, scenario, T, p_th)
                else:
                    T[n] = _es_update_antenna(n, W, phi, beta, scenario, T, p_th, grid)

        H, h0 = scenario.user_channels(T), scenario.warden_channel(T)
        rate = sum_rate(W, H, sigma2)
        state.iteration = m
        if rate < state.sum_rate_trace[-1]:
            # only reachable with zero-forcing beamforming
            W, T = W_prev, T_prev
            H, h0 = scenario.user_channels(T), scenario.warden_channel(T)
            break
        state.W, state.positions, state.phi, state.beta = W, T, phi, beta
        gain = rate - state.sum_rate_trace[-1]
        state.sum_rate_trace.append(rate)
        if gain <= cfg.rate_tol:
            break

    state.W, state.positions = W, T
    return state


def run_bsum(scenario, cfg=SolverConfig(), seed=0, **kw) -> SolverState:
    """Proposed scheme: PDA beamforming with SCA antenna placement (MA-PDA)."""
    return solve(scenario, cfg, seed, beamforming="pda", placement="sca", **kw)


def run_fpa(scenario, cfg=SolverConfig(), seed=0, **kw) -> SolverState:
    return solve(scenario, cfg, seed, beamforming="pda", placement="fixed", **kw)


def run_exhaustive_positions(scenario, cfg=SolverConfig(), seed=0, grid_step=None, **kw) -> SolverState:
    if grid_step is not None:
        cfg = SolverConfig(cfg.max_outer_iters, cfg.rate_tol, cfg.pda, grid_step)
    return solve(scenario, cfg, seed, beamforming="pda", placement="exhaustive", **kw)


def run_ma_zf(scenario, cfg=SolverConfig(), seed=0, **kw) -> SolverState:
    return solve(scenario, cfg, seed, beamforming="zf", placement="sca", **kw)


def run_fpa_zf(scenario, cfg=SolverConfig(), seed=0, **kw) -> SolverState:
    return solve(scenario, cfg, seed, beamforming="zf", placement="fixed", **kw)


RUNNERS = {
    "MA-PDA": run_bsum,
    "ES-PDA": run_exhaustive_positions,
    "MA-ZF": run_ma_zf,
    "FPA-PDA": run_fpa,
    "FPA-ZF": run_fpa_zf,
}
