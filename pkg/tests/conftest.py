from dataclasses import replace

import numpy as np
import pytest

from cfisac.config import RunConfig
from cfisac.experiments import synthesize_trial


def quiet_config(noise_offset_db=0.0, **scenario_kw):
    """RunConfig with optionally rescaled noise floor and scenario overrides."""
    cfg = RunConfig()
    scenario = replace(cfg.scenario,
                       noise_psd_dbm_hz=cfg.scenario.noise_psd_dbm_hz
                       + noise_offset_db,
                       **scenario_kw)
    return replace(cfg, scenario=scenario)


def build_trial(cfg=None, seed=0, velocity=None, present=True, grid=None):
    cfg = cfg if cfg is not None else RunConfig()
    grid = grid if grid is not None else cfg.grid
    rng = np.random.default_rng(seed)
    return synthesize_trial(cfg, grid, rng, present=present, velocity=velocity)


@pytest.fixture(scope="session")
def noiseless_trial():
    """High-SNR trial (noise floor lowered 120 dB) with a lattice-aligned velocity."""
    cfg = quiet_config(noise_offset_db=-120.0)
    return build_trial(cfg, seed=101, velocity=np.array([60.0, -90.0, 30.0]))


@pytest.fixture(scope="session")
def default_trial():
    return build_trial(seed=55)
