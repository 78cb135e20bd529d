"""Flat dotted-key run configuration.

Config files are UTF-8 `key = value` lines with `#` comments; command-line
`--set key=value` pairs override file values. Every key has a default, so an
empty configuration reproduces the reference scenario.
"""

import hashlib
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError
from .scene import ScenarioConfig
from .velocity import EstimatorConfig
from .waveform import OFDMGrid


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    grid: OFDMGrid = field(default_factory=OFDMGrid)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    p_fa: float = 0.05
    threshold_mode: str = "analytic"
    coherent_sensing_stream: bool = True
    perfect_csi: bool = False
    timed_single_thread: bool = True
    master_seed: int = 1
    trials_case1: int = 200
    trials_case2: int = 300
    trials_case3: int = 300
    case2_nu_max: tuple = (50.0, 100.0, 150.0)
    case3_nc: tuple = (1, 6, 12, 24)
    out_dir: str = "results"
    threads: int = 1


def _parse_bool(raw):
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: '{raw}'")


def _parse_int_list(raw):
    return tuple(int(x.strip()) for x in raw.split(",") if x.strip())


def _parse_float_list(raw):
    return tuple(float(x.strip()) for x in raw.split(",") if x.strip())


# key -> (section attribute on RunConfig or None, field name, parser)
KEYS = {
    "scene.area_side": ("scenario", "area_side", float),
    "scene.n_ap": ("scenario", "n_ap", int),
    "scene.n_ue": ("scenario", "n_ue", int),
    "scene.n_regions": ("scenario", "n_regions", int),
    "scene.aps_per_ue": ("scenario", "aps_per_ue", int),
    "scene.n_antennas": ("scenario", "n_antennas", int),
    "scene.m_tx": ("scenario", "m_tx", int),
    "scene.m_rx": ("scenario", "m_rx", int),
    "scene.ap_height": ("scenario", "ap_height", float),
    "scene.ue_height": ("scenario", "ue_height", float),
    "scene.target_height_min": ("scenario", "target_height_min", float),
    "scene.target_height_max": ("scenario", "target_height_max", float),
    "scene.nu_max": ("scenario", "nu_max", float),
    "scene.rcs_variance_dbsm": ("scenario", "rcs_variance_dbsm", float),
    "scene.rcs_corr_rad": ("scenario", "rcs_corr_rad", float),
    "scene.power_per_ap": ("scenario", "power_per_ap", float),
    "scene.noise_psd_dbm_hz": ("scenario", "noise_psd_dbm_hz", float),
    "scene.noise_figure_db": ("scenario", "noise_figure_db", float),
    "scene.n_rx_per_region": ("scenario", "n_rx_per_region", int),
    "scene.cells_per_side": ("scenario", "cells_per_side", int),
    "scene.tx_ap_ids": ("scenario", "tx_ap_ids", _parse_int_list),
    "ofdm.nc": ("grid", "nc", int),
    "ofdm.ns": ("grid", "ns", int),
    "ofdm.delta_f": ("grid", "delta_f", float),
    "ofdm.fc": ("grid", "fc", float),
    "ofdm.t_cp": ("grid", "t_cp", float),
    "est.method": ("estimator", "method", str),
    "est.grid_points": ("estimator", "grid_points", int),
    "est.coarse_points": ("estimator", "coarse_points", int),
    "est.pso_swarm": ("estimator", "pso_swarm", int),
    "est.pso_iters": ("estimator", "pso_iters", int),
    "est.pso_inertia": ("estimator", "pso_inertia", float),
    "est.pso_cognitive": ("estimator", "pso_cognitive", float),
    "est.pso_social": ("estimator", "pso_social", float),
    "est.grad_max_iters": ("estimator", "grad_max_iters", int),
    "est.grad_fd_step": ("estimator", "grad_fd_step", float),
    "est.grad_init_step": ("estimator", "grad_init_step", float),
    "est.grad_backtrack": ("estimator", "grad_backtrack", float),
    "est.grad_tol": ("estimator", "grad_tol", float),
    "detector.p_fa": (None, "p_fa", float),
    "detector.threshold_mode": (None, "threshold_mode", str),
    "channel.coherent_sensing_stream": (None, "coherent_sensing_stream", _parse_bool),
    "channel.perfect_csi": (None, "perfect_csi", _parse_bool),
    "run.master_seed": (None, "master_seed", int),
    "run.out_dir": (None, "out_dir", str),
    "run.threads": (None, "threads", int),
    "run.timed_single_thread": (None, "timed_single_thread", _parse_bool),
    "case1.trials": (None, "trials_case1", int),
    "case2.trials": (None, "trials_case2", int),
    "case3.trials": (None, "trials_case3", int),
    "case2.nu_max_list": (None, "case2_nu_max", _parse_float_list),
    "case3.nc_list": (None, "case3_nc", _parse_int_list),
}


def _read_pairs(path):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = text.split("=", 1)
            pairs.append((key.strip(), raw.strip(), f"{path}:{lineno}"))
    return pairs


def parse_config(path=None, overrides=()):
    """Build a validated RunConfig from an optional file plus override pairs."""
    pairs = _read_pairs(path) if path else []
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set '{item}': expected key=value")
        key, raw = item.split("=", 1)
        pairs.append((key.strip(), raw.strip(), "--set"))

    collected = {}
    for key, raw, where in pairs:
        if key not in KEYS:
            raise ConfigError(f"{where}: unknown key '{key}'")
        section, name, parser = KEYS[key]
        try:
            collected[(section, name)] = parser(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: bad value for '{key}': {exc}") from exc

    scenario_kw = {name: val for (sec, name), val in collected.items()
                   if sec == "scenario"}
    grid_kw = {name: val for (sec, name), val in collected.items()
               if sec == "grid"}
    est_kw = {name: val for (sec, name), val in collected.items()
              if sec == "estimator"}
    top_kw = {name: val for (sec, name), val in collected.items() if sec is None}
    try:
        scenario = ScenarioConfig(**scenario_kw)
        grid = OFDMGrid(**grid_kw)
        estimator = EstimatorConfig(**est_kw)
        cfg = RunConfig(scenario=scenario, grid=grid, estimator=estimator,
                        **top_kw)
        grid.validate(scenario.nu_max)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if not 0.0 < cfg.p_fa < 1.0:
        raise ConfigError("detector.p_fa must lie in (0, 1)")
    if cfg.threads < 1:
        raise ConfigError("run.threads must be at least 1")
    return cfg


def flat_dump(cfg):
    """Canonical key -> formatted-value mapping over every registered key."""
    out = {}
    for key, (section, name, _) in sorted(KEYS.items()):
        obj = cfg if section is None else getattr(cfg, section)
        val = getattr(obj, name)
        if isinstance(val, bool):
            out[key] = "true" if val else "false"
        elif isinstance(val, tuple):
            out[key] = ",".join(str(x) for x in val)
        elif isinstance(val, float):
            out[key] = repr(val)
        else:
            out[key] = str(val)
    return out


def config_hash(cfg):
    dump = flat_dump(cfg)
    text = "\n".join(f"{k}={v}" for k, v in dump.items())
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def config_echo(cfg):
    dump = flat_dump(cfg)
    return ";".join(f"{k}={v}" for k, v in dump.items())
