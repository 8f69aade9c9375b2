"""Seeded parameter sweeps over the five schemes, with CSV persistence."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .bsum import RUNNERS, SCHEMES, SolverConfig, check_feasible, solve
from .channel import PathSet, Scenario, sample_scenario
from .config import ConfigError, SystemConfig, dbm_to_watt
from .covertness import min_detection_error, warden_received_power
from .pda import PdaConfig
from .wmmse import sum_rate

log = logging.getLogger(__name__)

SWEEPS = ("power", "antennas", "aod_error", "region")
DEFAULT_VALUES = {
    "power": tuple(float(x) for x in range(-20, 21, 5)),
    "antennas": (2.0, 4.0, 6.0, 8.0),
    "aod_error": (0.0, 0.05, 0.1, 0.2, 0.4),
    "region": (1.0, 2.0, 3.0, 4.0, 5.0, 6.0),
}


@dataclass(frozen=True)
class ExperimentConfig:
    base: SystemConfig = SystemConfig()
    sweep: str = "power"
    values: tuple[float, ...] = DEFAULT_VALUES["power"]
    schemes: tuple[str, ...] = SCHEMES
    trials: int = 50
    seed: int = 0
    output_dir: str = "results"
    threads: int = 1
    solver: SolverConfig = SolverConfig()

    def __post_init__(self):
        if self.sweep not in SWEEPS:
            raise ConfigError(f"sweep must be one of {SWEEPS}, got {self.sweep!r}")
        if not self.values:
            raise ConfigError("sweep values must be non-empty")
        if list(self.values) != sorted(self.values):
            raise ConfigError("sweep values must be sorted")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown or not self.schemes:
            raise ConfigError(f"unknown schemes {sorted(unknown)}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        for v in self.values:
            point_config(self.base, self.sweep, v)


@dataclass(frozen=True)
class TrialRecord:
    scheme: str
    sweep_value: float
    trial_index: int
    seed: int
    sum_rate: float
    warden_power: float
    detection_error: float
    iterations: int
    scenario_hash: str
    positions: str          # JSON [[x, y], ...]
    beamformer: str         # JSON [[[re, im], ...K], ...N]
    flag: str = ""
    wall_time: float = field(default=0.0, compare=False)


RECORD_COLUMNS = [f.name for f in fields(TrialRecord) if f.name != "wall_time"]


# --- sweep plumbing ------------------------------------------------------------------


def point_config(base: SystemConfig, sweep: str, value: float) -> SystemConfig:
    """System configuration at one sweep point."""
    if sweep == "power":
        return replace(base, max_power=dbm_to_watt(value))
    if sweep == "antennas":
        if value != int(value):
            raise ConfigError("antenna counts must be integers")
        return replace(base, num_antennas=int(value))
    if sweep == "region":
        return replace(base, region_size=value * base.wavelength)
    if value < 0:
        raise ConfigError("AoD error must be non-negative")
    return base


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


def apply_aod_error(paths: PathSet, max_error: float, seed) -> PathSet:
    """Copy of ``paths`` with each angle offset by Uniform[-max_error, max_error].

    The unit draws depend only on ``seed``, so the same seed at larger
    ``max_error`` scales the same perturbation.
    """
    if max_error < 0:
        raise ValueError("max_error must be non-negative")
    if max_error == 0:
        return paths
    u = np.random.default_rng(seed).uniform(-1.0, 1.0, size=paths.angles.shape)
    angles = np.clip(paths.angles + max_error * u, 0.0, np.pi)
    return PathSet(paths.receiver_id, angles, paths.responses)


def perturbed_scenario(scenario: Scenario, max_error: float, seed: int) -> Scenario:
    ss = np.random.SeedSequence([seed, 1])
    child_seeds = ss.spawn(len(scenario.paths))
    return scenario.with_paths(
        apply_aod_error(p, max_error, s) for p, s in zip(scenario.paths, child_seeds)
    )


def _encode_positions(T) -> str:
    return json.dumps([[float(x), float(y)] for x, y in np.asarray(T)])


def _encode_beamformer(W) -> str:
    return json.dumps([[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(W)])


def decode_positions(text: str) -> np.ndarray:
    return np.array(json.loads(text), dtype=float).reshape(-1, 2)


def decode_beamformer(text: str) -> np.ndarray:
    arr = np.array(json.loads(text), dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def run_scheme(scheme: str, scenario: Scenario, solver: SolverConfig, seed: int,
               opt_scenario: Scenario | None = None):
    """Solve one scheme; with ``opt_scenario`` the placement is optimized on
    those (erroneous) paths and the beamformer is then redesigned on the true
    ``scenario`` channel at the chosen positions."""
    if opt_scenario is None or scheme.startswith("FPA"):
        return RUNNERS[scheme](scenario, solver, seed)
    placed = RUNNERS[scheme](opt_scenario, solver, seed)
    beamforming = "zf" if scheme.endswith("ZF") else "pda"
    final = solve(scenario, solver, seed, beamforming=beamforming, placement="fixed",
                  initial_positions=placed.positions)
    final.iteration += placed.iteration
    return final


def run_trial(config: ExperimentConfig, scheme: str, value: float, trial: int) -> TrialRecord:
    seed = trial_seed(config.seed, trial)
    sys_cfg = point_config(config.base, config.sweep, value)
    scenario = sample_scenario(sys_cfg, seed)
    opt = None
    if config.sweep == "aod_error" and value > 0:
        opt = perturbed_scenario(scenario, value, seed)
    start = time.perf_counter()
    try:
        state = run_scheme(scheme, scenario, config.solver, seed, opt)
    except Exception as exc:   # recorded as a flagged row, never aborts the sweep
        log.warning("trial %s/%s/%s failed: %s", scheme, value, trial, exc)
        return TrialRecord(scheme, float(value), trial, seed, math.nan, math.nan, math.nan,
                           0, scenario.fingerprint(), "[]", "[]", f"error: {exc}",
                           time.perf_counter() - start)
    elapsed = time.perf_counter() - start
    H = scenario.user_channels(state.positions)
    leak = warden_received_power(scenario.warden_channel(state.positions), state.W)
    problems = check_feasible(scenario, state.W, state.positions)
    return TrialRecord(
        scheme=scheme,
        sweep_value=float(value),
        trial_index=trial,
        seed=seed,
        sum_rate=sum_rate(state.W, H, sys_cfg.noise_power),
        warden_power=leak,
        detection_error=min_detection_error(leak, sys_cfg.warden_noise_power,
                                            sys_cfg.noise_uncertainty),
        iterations=state.iteration,
        scenario_hash=scenario.fingerprint(),
        positions=_encode_positions(state.positions),
        beamformer=_encode_beamformer(state.W),
        flag="; ".join(problems),
        wall_time=elapsed,
    )


def _run_task(args):
    return run_trial(*args)


def resolve_threads(requested: int | None, default: int = 1) -> int:
    env = os.environ.get("COVERT_MA_THREADS")
    if requested is not None:
        return max(1, int(requested))
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"COVERT_MA_THREADS must be an integer, got {env!r}") from None
    return default


def run_sweep(config: ExperimentConfig) -> list[TrialRecord]:
    """Every (scheme, sweep value, trial) combination, in canonical order.

    All schemes at one (value, trial) see the same channel realization and the
    same initial antenna draw.
    """
    tasks = [(config, scheme, value, trial)
             for scheme in config.schemes
             for value in config.values
             for trial in range(config.trials)]
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            records = list(pool.map(_run_task, tasks, chunksize=1))
    else:
        records = [_run_task(t) for t in tasks]
    return sorted(records, key=lambda r: (r.scheme, r.sweep_value, r.trial_index))


# --- aggregation ---------------------------------------------------------------------


@dataclass(frozen=True)
class Summary:
    scheme: str
    sweep_value: float
    count: int
    mean: float
    std: float
    min: float
    max: float


def aggregate(records) -> list[Summary]:
    """Per (scheme, sweep value) statistics of the sum rate; std is the
    population standard deviation (ddof = 0). Flagged rows are skipped."""
    groups: dict[tuple[str, float], list[float]] = {}
    for r in records:
        if r.flag or not math.isfinite(r.sum_rate):
            continue
        groups.setdefault((r.scheme, r.sweep_value), []).append(r.sum_rate)
    out = []
    for (scheme, value), rates in sorted(groups.items()):
        arr = np.array(rates)
        out.append(Summary(scheme, value, len(arr), float(arr.mean()), float(arr.std()),
                           float(arr.min()), float(arr.max())))
    return out


def paired_differences(records) -> list[tuple[str, str, float, int, float]]:
    """Mean of ``rate_a - rate_b`` over trials both schemes completed at the
    same sweep value: rows ``(a, b, sweep_value, count, mean_difference)``."""
    table: dict[tuple[str, float], dict[int, float]] = {}
    for r in records:
        if r.flag or not math.isfinite(r.sum_rate):
            continue
        table.setdefault((r.scheme, r.sweep_value), {})[r.trial_index] = r.sum_rate
    schemes = sorted({s for s, _ in table})
    values = sorted({v for _, v in table})
    rows = []
    for v in values:
        for i, a in enumerate(schemes):
            for b in schemes[i + 1:]:
                ra, rb = table.get((a, v), {}), table.get((b, v), {})
                shared = sorted(set(ra) & set(rb))
                if shared:
                    diff = np.array([ra[t] - rb[t] for t in shared])
                    rows.append((a, b, v, len(shared), float(diff.mean())))
    return rows


# --- files ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(RECORD_COLUMNS)
        for r in records:
            writer.writerow([_fmt(getattr(r, c)) for c in RECORD_COLUMNS])


def read_records(path) -> list[TrialRecord]:
    types = {f.name: f.type for f in fields(TrialRecord)}
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            kwargs = {}
            for name, text in row.items():
                kind = types[name]
                if kind == "float":
                    kwargs[name] = float(text)
                elif kind == "int":
                    kwargs[name] = int(text)
                else:
                    kwargs[name] = text
            out.append(TrialRecord(**kwargs))
    return out


def write_outputs(config: ExperimentConfig, records, out_dir=None) -> Path:
    out = Path(out_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_records(records, out / "records.csv")
    (out / "config.txt").write_text(dump_config(config), encoding="utf-8")

    summaries = aggregate(records)
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow([f.name for f in fields(Summary)])
        for s in summaries:
            writer.writerow([_fmt(v) for v in asdict(s).values()])
    with open(out / "paired.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(["scheme_a", "scheme_b", "sweep_value", "count", "mean_difference"])
        for row in paired_differences(records):
            writer.writerow([_fmt(v) for v in row])
    with open(out / "timing.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(["scheme", "sweep_value", "trial_index", "wall_time"])
        for r in records:
            writer.writerow([r.scheme, _fmt(r.sweep_value), r.trial_index, _fmt(r.wall_time)])
    for scheme in config.schemes:
        lines = [f"{_fmt(s.sweep_value)} {_fmt(s.mean)}" for s in summaries if s.scheme == scheme]
        (out / f"curve_{scheme}.dat").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out


# --- config files --------------------------------------------------------------------

_POWER_KEYS = ("noise_power", "warden_noise_power", "max_power")
_SYSTEM_KEYS = {
    "wavelength": float, "num_users": int, "num_antennas": int, "region_size": float,
    "min_spacing": float, "noise_uncertainty": float, "covertness": float,
    "path_gain": float, "fpa_layout": str,
}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` starts a comment).

    Powers take a ``_dbm`` or ``_w`` suffix; lengths may be given in
    wavelengths with a ``_wavelengths`` suffix.
    """
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value

    try:
        return _build_config(raw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _build_config(raw: dict[str, str]) -> ExperimentConfig:
    raw = dict(raw)
    system: dict = {}
    wavelength = float(raw.get("wavelength", SystemConfig.wavelength))
    for key, kind in _SYSTEM_KEYS.items():
        if key in raw:
            system[key] = kind(raw.pop(key))
    for key in ("region_size", "min_spacing"):
        alt = f"{key}_wavelengths"
        if alt in raw:
            if key in system:
                raise ConfigError(f"give either {key} or {alt}, not both")
            system[key] = float(raw.pop(alt)) * wavelength
    for key in _POWER_KEYS:
        dbm, watt = raw.pop(f"{key}_dbm", None), raw.pop(f"{key}_w", None)
        if dbm is not None and watt is not None:
            raise ConfigError(f"give either {key}_dbm or {key}_w, not both")
        if dbm is not None:
            system[key] = dbm_to_watt(float(dbm))
        elif watt is not None:
            system[key] = float(watt)
    if "paths_per_user" in raw:
        system["paths_per_user"] = tuple(int(x) for x in _floats(raw.pop("paths_per_user")))
    system.setdefault("region_size", 3 * wavelength)
    system.setdefault("min_spacing", wavelength / 2)
    base = SystemConfig(**system)

    pda = PdaConfig(
        penalty_init=float(raw.pop("penalty_init", PdaConfig.penalty_init)),
        penalty_growth=float(raw.pop("penalty_growth", PdaConfig.penalty_growth)),
        max_iters=int(raw.pop("pda_max_iters", PdaConfig.max_iters)),
        objective_tol=float(raw.pop("pda_objective_tol", PdaConfig.objective_tol)),
        feasibility_tol=float(raw.pop("pda_feasibility_tol", PdaConfig.feasibility_tol)),
    )
    es_step = raw.pop("es_grid_step_wavelengths", None)
    solver = SolverConfig(
        max_outer_iters=int(raw.pop("max_outer_iters", SolverConfig.max_outer_iters)),
        rate_tol=float(raw.pop("rate_tol", SolverConfig.rate_tol)),
        pda=pda,
        es_grid_step=None if es_step is None else float(es_step) * wavelength,
    )
    sweep = raw.pop("sweep", "power")
    values = _floats(raw.pop("values")) if "values" in raw else DEFAULT_VALUES.get(sweep, ())
    schemes = tuple(s.strip() for s in raw.pop("schemes").split(",")) if "schemes" in raw else SCHEMES
    cfg = ExperimentConfig(
        base=base,
        sweep=sweep,
        values=values,
        schemes=schemes,
        trials=int(raw.pop("trials", 50)),
        seed=int(raw.pop("seed", 0)),
        output_dir=raw.pop("output_dir", "results"),
        threads=int(raw.pop("threads", 1)),
        solver=solver,
    )
    if raw:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(raw))}")
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; ``parse_config(dump_config(c)) == c``."""
    b, s = cfg.base, cfg.solver
    lines = [
        f"wavelength = {b.wavelength!r}",
        f"num_users = {b.num_users}",
        f"num_antennas = {b.num_antennas}",
        f"paths_per_user = {', '.join(str(L) for L in b.paths_per_user)}",
        f"region_size = {b.region_size!r}",
        f"min_spacing = {b.min_spacing!r}",
        f"noise_power_w = {b.noise_power!r}",
        f"warden_noise_power_w = {b.warden_noise_power!r}",
        f"noise_uncertainty = {b.noise_uncertainty!r}",
        f"covertness = {b.covertness!r}",
        f"max_power_w = {b.max_power!r}",
        f"path_gain = {b.path_gain!r}",
        f"fpa_layout = {b.fpa_layout}",
        f"sweep = {cfg.sweep}",
        f"values = {', '.join(repr(float(v)) for v in cfg.values)}",
        f"schemes = {', '.join(cfg.schemes)}",
        f"trials = {cfg.trials}",
        f"seed = {cfg.seed}",
        f"output_dir = {cfg.output_dir}",
        f"threads = {cfg.threads}",
        f"max_outer_iters = {s.max_outer_iters}",
        f"rate_tol = {s.rate_tol!r}",
        f"penalty_init = {s.pda.penalty_init!r}",
        f"penalty_growth = {s.pda.penalty_growth!r}",
        f"pda_max_iters = {s.pda.max_iters}",
        f"pda_objective_tol = {s.pda.objective_tol!r}",
        f"pda_feasibility_tol = {s.pda.feasibility_tol!r}",
    ]
    if s.es_grid_step is not None:
        lines.append(f"es_grid_step_wavelengths = {s.es_grid_step / b.wavelength!r}")
    return "\n".join(lines) + "\n"


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


# --- verification --------------------------------------------------------------------


def verify_record(config: ExperimentConfig, record: TrialRecord, rate_tol: float = 1e-9) -> list[str]:
    """Re-derive the scenario of ``record`` and re-check feasibility and rate."""
    if record.flag:
        return [f"flagged: {record.flag}"]
    sys_cfg = point_config(config.base, config.sweep, record.sweep_value)
    scenario = sample_scenario(sys_cfg, record.seed)
    problems = []
    if scenario.fingerprint() != record.scenario_hash:
        problems.append("scenario hash mismatch")
    T = decode_positions(record.positions)
    W = decode_beamformer(record.beamformer)
    if T.shape != (sys_cfg.num_antennas, 2) or W.shape != (sys_cfg.num_antennas, sys_cfg.num_users):
        return problems + ["stored solution has wrong dimensions"]
    problems += check_feasible(scenario, W, T)
    rate = sum_rate(W, scenario.user_channels(T), sys_cfg.noise_power)
    if abs(rate - record.sum_rate) > rate_tol * max(1.0, abs(record.sum_rate)):
        problems.append(f"sum rate {rate!r} differs from recorded {record.sum_rate!r}")
    xi = min_detection_error(
        warden_received_power(scenario.warden_channel(T), W),
        sys_cfg.warden_noise_power, sys_cfg.noise_uncertainty)
    if xi < 1 - sys_cfg.covertness - 1e-6:
        problems.append(f"detection error {xi:.6f} below {1 - sys_cfg.covertness}")
    return problems
