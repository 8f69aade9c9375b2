import numpy as np
import pytest

from covert_ma.channel import sample_scenario
from covert_ma.config import SystemConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def reference_config():
    return SystemConfig()


@pytest.fixture
def scenario(reference_config):
    return sample_scenario(reference_config, 7)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def position_instance(seed, cfg=None):
    """Scenario, positions and a ZF-initialised (W, phi, beta) state."""
    from covert_ma.bsum import init_positions, init_zf
    from covert_ma.wmmse import update_beta, update_phi

    cfg = cfg or SystemConfig()
    sc = sample_scenario(cfg, seed)
    T = init_positions(cfg, seed + 1000)
    H, h0 = sc.user_channels(T), sc.warden_channel(T)
    W, _ = init_zf(H, cfg.max_power, h0, cfg.covert_threshold)
    phi = update_phi(W, H, cfg.noise_power)
    beta = update_beta(phi, W, H)
    return sc, T, W, phi, beta


def subproblem_instance(seed, cfg=None):
    """Objective, leakage surrogate, half-planes and anchor for one antenna."""
    from covert_ma import position as pos

    sc, T, W, phi, beta = position_instance(seed, cfg)
    cfg = sc.config
    n = seed % cfg.num_antennas
    lam = cfg.wavelength
    objective = pos.assemble_objective(n, W, phi, beta, sc.users, T, lam)
    leak = pos.QuadraticSurrogate.zero()
    for z in pos.zeta3(n, W, sc.warden, T, lam):
        leak = leak + z
    halfplanes = []
    for m in range(len(T)):
        if m != n:
            normal, offset = pos.min_distance_linearization(T[n], T[m])
            halfplanes.append((normal, offset + cfg.min_spacing))
    return objective, leak, cfg.covert_threshold, halfplanes, cfg.region_size, T[n]


def true_power(n, t, w, paths, T, lam):
    from covert_ma.channel import channel

    T = np.array(T, dtype=float)
    T[n] = t
    return abs(np.vdot(w, channel(T, paths, lam))) ** 2


def true_correlation(n, t, w, phi, paths, T, lam):
    from covert_ma.channel import channel

    T = np.array(T, dtype=float)
    T[n] = t
    return float(np.real(phi * np.vdot(w, channel(T, paths, lam))))


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
