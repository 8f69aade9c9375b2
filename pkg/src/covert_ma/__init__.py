"""Joint beamforming and movable-antenna placement for multiuser covert downlinks."""
from .bsum import (
    SolverConfig, SolverState, check_feasible, init_positions, init_zf, run_bsum,
    run_exhaustive_positions, run_fpa, run_fpa_zf, run_ma_zf,
)
from .channel import PathSet, Scenario, channel, sample_scenario
from .config import ConfigError, SystemConfig, dbm_to_watt, watt_to_dbm
from .covertness import covert_power_budget, min_detection_error
from .pda import PdaConfig
from .wmmse import sinr, sum_rate

__version__ = "0.1.0"
