"""OFDM integrated sensing and communication simulator for cell-free massive
MIMO networks: bistatic Doppler geometry, Doppler-aware GLRT detection, and
3D target-velocity estimation."""

from .config import RunConfig, parse_config
from .errors import (BisectorUndefined, ConfigError, DegenerateGeometry,
                     RankDeficient)
from .experiments import empirical_cdf, run_case1, run_case2, run_case3
from .geometry import (AnglePair, ArraySpec, BistaticAngles, PhysicalConstants,
                       angles_to, bistatic_angles, bistatic_delay,
                       bistatic_doppler, steering_vector)
from .scene import ScenarioConfig, Scene, make_scene
from .sensing import (DetectionContext, build_detection_context,
                      build_response_stack, calibrate_threshold, glrt_detect,
                      glrt_statistic, ml_rcs_estimate, realized_snr,
                      sensing_snr)
from .velocity import (EstimatorConfig, SearchBox, VelocityEstimate,
                       estimate_velocity, grid_search, gradient_refine,
                       pso_search)
from .waveform import OFDMGrid

__all__ = [
    "AnglePair", "ArraySpec", "BisectorUndefined", "BistaticAngles",
    "ConfigError", "DegenerateGeometry", "DetectionContext", "EstimatorConfig",
    "OFDMGrid", "PhysicalConstants", "RankDeficient", "RunConfig",
    "ScenarioConfig", "Scene", "SearchBox", "VelocityEstimate", "angles_to",
    "bistatic_angles", "bistatic_delay", "bistatic_doppler",
    "build_detection_context", "build_response_stack", "calibrate_threshold",
    "empirical_cdf", "estimate_velocity", "glrt_detect", "glrt_statistic",
    "gradient_refine", "grid_search", "make_scene", "ml_rcs_estimate",
    "parse_config", "pso_search", "realized_snr", "run_case1", "run_case2",
    "run_case3", "sensing_snr", "steering_vector",
]
