"""Experiment harness: seeded instances, single solves, sweeps and oracle checks.

Configuration comes from a flat "key = value" text file (powers in dBm,
distances in meters); every key has a default so an empty config runs the
reference setup of six users, four antennas and thirty elements. Sweeps
emit one CSV data row per (value, mode, seed) plus one seed-averaged
summary row per (value, mode), in deterministic order and with 9
significant digits, so repeated runs produce byte-identical files.

Channels are generated once per seed and reused across sweep values; only
the element-count sweep regenerates them (the dimensions change).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

from . import channel as ch
from . import system_model as sm
from .ao_driver import MODES, AoConfig, SolveReport, alternating_optimize
from .errors import InfeasibleInstanceError, SolverFailureError
from .oracle import GridSpec, oracle_grid_search
from .system_model import PowerModel, SystemDims, SystemInstance

SWEEP_PARAMS = ("pmax_dbm", "ris_elements", "static_power_dbm", "noise_dbm")

SWEEP_CSV_HEADER = "sweep_param,value,mode,seed,min_ee,avg_se,outer_iters,feasible"
ORACLE_CSV_HEADER = "seed,ao_min_ee,oracle_min_ee,ratio,status"


@dataclass
class ExperimentConfig:
    """Full description of an experiment; defaults follow the reference setup."""

    num_users: int = 6
    num_bs_antennas: int = 4
    num_ris_elements: int = 30
    pmax_dbm: float = 50.0
    static_power_dbm: float = 5.0
    noise_dbm: float = -20.0
    qos_rate_bps_hz: float = 6.6
    seeds: tuple = (0,)
    modes: tuple = ("star_es",)
    sweep_param: str = "pmax_dbm"
    sweep_values: tuple = ()
    path_loss_exponent: float = ch.DEFAULT_PATH_LOSS_EXPONENT
    ref_path_loss_db: float = ch.DEFAULT_REF_PATH_LOSS_DB
    geometry: ch.Geometry | None = None
    ao: AoConfig = field(default_factory=AoConfig)
    oracle_grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        if self.sweep_param not in SWEEP_PARAMS:
            raise ValueError(f"sweep_param must be one of {SWEEP_PARAMS}")
        for m in self.modes:
            if m not in MODES:
                raise ValueError(f"unknown mode {m!r}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if not self.modes:
            raise ValueError("need at least one mode")

    def resolved_geometry(self, num_users=None):
        if self.geometry is not None:
            return self.geometry
        return ch.default_geometry(num_users or self.num_users)


_INT_KEYS = {"num_users", "num_bs_antennas", "num_ris_elements"}
_FLOAT_KEYS = {"pmax_dbm", "static_power_dbm", "noise_dbm", "qos_rate_bps_hz",
               "path_loss_exponent", "ref_path_loss_db"}
_GEOMETRY_KEYS = {"bs_position", "ris_position", "ris_normal",
                  "user_circle_center", "user_circle_radius"}


def parse_config_text(text):
    """Parse the flat key = value config format (see README for the key list)."""
    values = {}
    geo_raw = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key in _INT_KEYS:
            values[key] = int(val)
        elif key in _FLOAT_KEYS:
            values[key] = float(val)
        elif key == "seeds":
            values["seeds"] = tuple(int(x) for x in val.split(",") if x.strip())
        elif key == "modes":
            values["modes"] = tuple(x.strip() for x in val.split(",") if x.strip())
        elif key == "sweep_param":
            values["sweep_param"] = val
        elif key == "sweep_values":
            values["sweep_values"] = tuple(float(x) for x in val.split(",") if x.strip())
        elif key in _GEOMETRY_KEYS:
            geo_raw[key] = val
        else:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
    config = ExperimentConfig(**values)
    if geo_raw:
        config = replace(config, geometry=_geometry_from_raw(geo_raw, config.num_users))
    return config


def _geometry_from_raw(geo_raw, num_users):
    def vec(key, default):
        if key not in geo_raw:
            return np.asarray(default, float)
        return np.array([float(x) for x in geo_raw[key].split(",")])

    center = vec("user_circle_center", [50.0, 5.0, 1.5])
    radius = float(geo_raw.get("user_circle_radius", 5.0))
    angles = 2.0 * np.pi * np.arange(num_users) / num_users
    users = [center + radius * np.array([np.cos(a), np.sin(a), 0.0]) for a in angles]
    return ch.Geometry(
        bs_position=vec("bs_position", [0.0, 0.0, 10.0]),
        ris_position=vec("ris_position", [50.0, 0.0, 10.0]),
        user_positions=users,
        ris_plane_normal=vec("ris_normal", [-1.0, 0.0, 0.0]),
    )


def load_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read())


def power_model_from_config(config: ExperimentConfig, pmax_dbm=None,
                            static_dbm=None, noise_dbm=None):
    return PowerModel(
        p_max_watts=sm.dbm_to_watt(pmax_dbm if pmax_dbm is not None else config.pmax_dbm),
        static_power_watts=sm.dbm_to_watt(
            static_dbm if static_dbm is not None else config.static_power_dbm),
        noise_power_watts=sm.dbm_to_watt(
            noise_dbm if noise_dbm is not None else config.noise_dbm),
        qos_rate_threshold=config.qos_rate_bps_hz,
    )


def generate_channels(config: ExperimentConfig, seed, num_elements=None):
    dims = SystemDims(config.num_users, config.num_bs_antennas,
                      num_elements or config.num_ris_elements)
    return dims, ch.generate_instance(
        seed, dims, config.resolved_geometry(),
        path_loss_exponent=config.path_loss_exponent,
        ref_path_loss_db=config.ref_path_loss_db,
    )


def build_instance(config: ExperimentConfig, seed, num_elements=None,
                   pmax_dbm=None, static_dbm=None, noise_dbm=None,
                   channels=None, dims=None):
    if channels is None:
        dims, channels = generate_channels(config, seed, num_elements)
    power = power_model_from_config(config, pmax_dbm, static_dbm, noise_dbm)
    return SystemInstance.from_channels(dims, power, channels)


@dataclass
class SweepRow:
    sweep_param: str
    value: float
    mode: str
    seed: int | str
    min_ee: float
    avg_se: float
    outer_iters: int | float
    feasible: bool


def _run_single(config, instance, mode):
    ao_cfg = replace(config.ao, mode=mode)
    return alternating_optimize(instance, ao_cfg)


def run_sweep(config: ExperimentConfig, report_sink=None):
    """Run the configured sweep; returns data rows followed by summary rows.

    Per-run failures (infeasible instances, solver breakdowns) are recorded
    in their row with feasible false and NaN metrics; the sweep always
    produces |values| x |modes| x |seeds| data rows. report_sink, when
    given, collects every successful SolveReport.
    """
    values = config.sweep_values or (getattr(config, config.sweep_param)
                                     if config.sweep_param != "ris_elements"
                                     else (config.num_ris_elements,))
    if np.isscalar(values):
        values = (values,)

    base_channels = {}
    if config.sweep_param != "ris_elements":
        for seed in config.seeds:
            base_channels[seed] = generate_channels(config, seed)

    data_rows = []
    for value in values:
        for mode in config.modes:
            for seed in config.seeds:
                if config.sweep_param == "ris_elements":
                    instance = build_instance(config, seed,
                                              num_elements=int(round(value)))
                else:
                    dims, channels = base_channels[seed]
                    kwargs = {}
                    if config.sweep_param == "pmax_dbm":
                        kwargs["pmax_dbm"] = value
                    elif config.sweep_param == "static_power_dbm":
                        kwargs["static_dbm"] = value
                    elif config.sweep_param == "noise_dbm":
                        kwargs["noise_dbm"] = value
                    instance = build_instance(config, seed, channels=channels,
                                              dims=dims, **kwargs)
                try:
                    report = _run_single(config, instance, mode)
                    if report_sink is not None:
                        report_sink.append(report)
                    row = SweepRow(config.sweep_param, float(value), mode, seed,
                                   report.min_ee, report.avg_se,
                                   report.outer_iterations, report.qos_feasible)
                except (InfeasibleInstanceError, SolverFailureError):
                    row = SweepRow(config.sweep_param, float(value), mode, seed,
                                   float("nan"), float("nan"), 0, False)
                data_rows.append(row)

    summary_rows = []
    for value in values:
        for mode in config.modes:
            group = [r for r in data_rows
                     if r.value == float(value) and r.mode == mode]
            ok = [r for r in group if r.feasible]
            if ok:
                summary_rows.append(SweepRow(
                    config.sweep_param, float(value), mode, "mean",
                    float(np.mean([r.min_ee for r in ok])),
                    float(np.mean([r.avg_se for r in ok])),
                    float(np.mean([r.outer_iters for r in ok])),
                    len(ok) == len(group)))
            else:
                summary_rows.append(SweepRow(
                    config.sweep_param, float(value), mode, "mean",
                    float("nan"), float("nan"), 0, False))
    return data_rows + summary_rows


def format_csv_value(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"


def sweep_rows_to_csv(rows):
    buf = io.StringIO()
    buf.write(SWEEP_CSV_HEADER + "\n")
    for r in rows:
        buf.write(",".join([
            r.sweep_param, format_csv_value(r.value), r.mode,
            format_csv_value(r.seed), format_csv_value(r.min_ee),
            format_csv_value(r.avg_se), format_csv_value(r.outer_iters),
            format_csv_value(r.feasible),
        ]) + "\n")
    return buf.getvalue()


def read_sweep_csv(path):
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != SWEEP_CSV_HEADER:
            raise ValueError(f"unexpected sweep CSV header: {header!r}")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 8:
                continue
            rows.append(SweepRow(
                sweep_param=parts[0], value=float(parts[1]), mode=parts[2],
                seed=parts[3] if parts[3] == "mean" else int(parts[3]),
                min_ee=float(parts[4]), avg_se=float(parts[5]),
                outer_iters=float(parts[6]), feasible=parts[7] == "true"))
    return rows


@dataclass
class OracleCheckRow:
    seed: int
    ao_min_ee: float
    oracle_min_ee: float
    ratio: float
    status: str


def run_oracle_check(config: ExperimentConfig, report_sink=None):
    """Run the alternating optimizer and the grid oracle on identical channels.

    The oracle's winning configuration is also re-evaluated through the
    closed-form system equations; a mismatch beyond 1e-3 relative marks the
    row inconsistent instead of silently passing.
    """
    rows = []
    for seed in config.seeds:
        instance = build_instance(config, seed)
        oracle_res = oracle_grid_search(instance, config.oracle_grid)

        ao_value = float("nan")
        ao_status = "ok"
        try:
            report = _run_single(config, instance, config.modes[0])
            ao_value = report.min_ee
            if report_sink is not None:
                report_sink.append(report)
        except InfeasibleInstanceError:
            ao_status = "ao_infeasible"
        except SolverFailureError:
            ao_status = "ao_solver_failure"

        if not oracle_res.feasible:
            status = ("both_infeasible" if ao_status == "ao_infeasible"
                      else "oracle_infeasible")
            rows.append(OracleCheckRow(seed, ao_value, float("nan"),
                                       float("nan"), status))
            continue
        exact = sm.min_user_ee(
            instance, oracle_res.star_coefficients(), oracle_res.beamformer_set())[1]
        status = ao_status
        if abs(exact - oracle_res.best_min_ee) > 1e-3 * max(abs(exact), 1e-12):
            status = "oracle_inconsistent"
        ratio = ao_value / oracle_res.best_min_ee if ao_status == "ok" else float("nan")
        rows.append(OracleCheckRow(seed, ao_value, oracle_res.best_min_ee,
                                   ratio, status))
    return rows


def oracle_rows_to_csv(rows):
    buf = io.StringIO()
    buf.write(ORACLE_CSV_HEADER + "\n")
    for r in rows:
        buf.write(",".join([
            format_csv_value(r.seed), format_csv_value(r.ao_min_ee),
            format_csv_value(r.oracle_min_ee), format_csv_value(r.ratio),
            r.status,
        ]) + "\n")
    return buf.getvalue()
