"""Monte Carlo harness for the three case studies, plus CSV emission.

Trials are reproducible: trial i of case c derives its RNG from
(master_seed, c, i) regardless of worker count, and results are merged by
trial index, so repeated runs give identical output files.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .scene import make_scene, rcs_covariance
from .sensing import (build_detection_context, build_response_stack,
                      calibrate_threshold, glrt_detect, noise_variance,
                      realized_snr, sensing_snr,
                      synthesize_region_observations)
from .velocity import (METHODS, SearchBox, componentwise_error,
                       estimate_velocity, relative_component_error)
from .waveform import OFDMGrid, build_frames, make_symbol_streams

CASE2_SCENARIOS = ("stationary", "estimated", "zero_assumed")


@dataclass
class CDFSeries:
    """Empirical CDF: sorted sample values with ordinates k/N."""

    values: np.ndarray
    ordinates: np.ndarray


def empirical_cdf(samples):
    samples = np.asarray(list(samples), dtype=float)
    if samples.size == 0:
        raise ConfigError("cannot build a CDF from zero samples")
    values = np.sort(samples)
    ordinates = np.arange(1, values.size + 1) / values.size
    return CDFSeries(values=values, ordinates=ordinates)


@dataclass
class TimingRecord:
    method: str
    mean_time_s: float
    normalized_time: float


@dataclass
class TrialData:
    scene: object
    grid: OFDMGrid
    noise_var: float
    frames: dict
    observations: dict
    context: object
    rcs_cov: np.ndarray
    region: int
    inspected_points: dict


def trial_rng(master_seed, case_index, *key):
    """Deterministic per-trial generator independent of execution order."""
    entropy = (int(master_seed), int(case_index)) + tuple(int(k) for k in key)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def synthesize_trial(run_cfg, grid, rng, present=True, velocity=None):
    """One block: scene, frames, region observations, and detection context.

    The tested region is the one containing the target; its inspected cell is
    the target's position when present, a random cell otherwise. velocity
    overrides the randomly drawn target velocity when given.
    """
    scene = make_scene(run_cfg.scenario, grid.constants(), rng)
    if velocity is not None:
        scene.target.velocity = np.asarray(velocity, dtype=float)
    region = scene.grid.region_of(scene.target.position)
    inspected = {}
    for i in range(scene.grid.n_regions):
        if i == region and present:
            inspected[i] = scene.target.position.copy()
        else:
            inspected[i] = scene.grid.random_cell(i, rng)
    streams = make_symbol_streams(scene, grid, rng,
                                  run_cfg.coherent_sensing_stream)
    nv = noise_variance(grid, run_cfg.scenario.noise_psd_dbm_hz,
                        run_cfg.scenario.noise_figure_db)
    frames = build_frames(scene, grid, streams, inspected, rng, nv,
                          run_cfg.perfect_csi)
    alphas = None
    if not present:
        alphas = np.zeros((len(scene.assoc.region_raps[region]),
                           len(scene.taps)), dtype=complex)
    observations, _, cov = synthesize_region_observations(
        region, scene, frames, grid, nv, rng, present=present, alphas=alphas)
    context = build_detection_context(inspected[region], scene, frames,
                                      observations, grid, nv)
    return TrialData(scene=scene, grid=grid, noise_var=nv, frames=frames,
                     observations=observations, context=context, rcs_cov=cov,
                     region=region, inspected_points=inspected)


def _map_trials(fn, n_trials, threads):
    if threads <= 1:
        return [fn(t) for t in range(n_trials)]
    results = [None] * n_trials
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for t, out in zip(range(n_trials), pool.map(fn, range(n_trials))):
            results[t] = out
    return results


@dataclass
class Case1Result:
    timing: list          # TimingRecord per method
    errors: list          # rows (trial, method, ex, ey, ez, *speednorm)
    cdfs: dict            # (method, axis) -> CDFSeries of speed-normalized errors


def run_case1(run_cfg, n_trials=None, seed=None):
    """Estimator timing and velocity-error comparison on shared per-trial data.

    All five strategies run on identical observations, so accuracy and timing
    comparisons are paired. Runs single-threaded so wall times are unbiased.
    """
    n = n_trials if n_trials is not None else run_cfg.trials_case1
    seed = seed if seed is not None else run_cfg.master_seed
    grid = run_cfg.grid
    box = SearchBox(run_cfg.scenario.nu_max)
    rows = []
    times = {m: [] for m in METHODS}
    for t in range(n):
        rng = trial_rng(seed, 1, t)
        data = synthesize_trial(run_cfg, grid, rng, present=True)
        v_true = data.scene.target.velocity
        for mi, method in enumerate(METHODS):
            mrng = trial_rng(seed, 1, t, 100 + mi)
            t0 = time.perf_counter()
            est = estimate_velocity(method, data.context, box,
                                    run_cfg.estimator, mrng)
            times[method].append(time.perf_counter() - t0)
            e_comp = componentwise_error(est.velocity, v_true)
            e_speed = relative_component_error(est.velocity, v_true)
            rows.append((t, method, e_comp[0], e_comp[1], e_comp[2],
                         e_speed[0], e_speed[1], e_speed[2]))
    mean_grid = float(np.mean(times["grid"]))
    timing = [TimingRecord(method=m, mean_time_s=float(np.mean(times[m])),
                           normalized_time=float(np.mean(times[m]) / mean_grid))
              for m in METHODS]
    cdfs = {}
    for m in METHODS:
        per_axis = [[], [], []]
        for row in rows:
            if row[1] == m:
                for ax in range(3):
                    per_axis[ax].append(row[5 + ax])
        for ax, name in enumerate("xyz"):
            cdfs[(m, name)] = empirical_cdf(per_axis[ax])
    return Case1Result(timing=timing, errors=rows, cdfs=cdfs)


@dataclass
class Case2Result:
    rows: list            # (trial, scenario, nu_max, gamma_db)
    cdfs: dict            # (scenario, nu_max) -> CDFSeries


def run_case2(run_cfg, n_trials=None, seed=None, nu_max_list=None):
    """Doppler-mismatch SNR comparison across target mobility levels.

    Per trial: (i) a stationary target with the matched zero-velocity
    detector, (ii) the moving target with the velocity estimated by PSO-RI,
    (iii) the same moving target with the detector forced to zero velocity.
    """
    n = n_trials if n_trials is not None else run_cfg.trials_case2
    seed = seed if seed is not None else run_cfg.master_seed
    nu_list = tuple(nu_max_list) if nu_max_list is not None else run_cfg.case2_nu_max
    grid = run_cfg.grid
    rows = []

    def one_trial(args):
        v_ix, nu, t = args
        cfg_nu = replace(run_cfg, scenario=replace(run_cfg.scenario, nu_max=nu))
        rng = trial_rng(seed, 2, t)
        data = synthesize_trial(cfg_nu, grid, rng, present=True)
        ctx = data.context
        v_true = data.scene.target.velocity
        stacks_true = [ctx.response_stack(m, v_true) for m in range(ctx.n_raps)]
        stacks_zero = [ctx.response_stack(m, np.zeros(3)) for m in range(ctx.n_raps)]
        mrng = trial_rng(seed, 2, t, 200 + v_ix)
        est = estimate_velocity("pso_ri", ctx, SearchBox(nu),
                                cfg_nu.estimator, mrng)
        stacks_hat = [ctx.response_stack(m, est.velocity) for m in range(ctx.n_raps)]
        g_stationary = sensing_snr(stacks_zero, data.rcs_cov, data.noise_var)
        g_estimated = realized_snr(stacks_true, stacks_hat, data.rcs_cov,
                                   data.noise_var)
        g_zero = realized_snr(stacks_true, stacks_zero, data.rcs_cov,
                              data.noise_var)
        return [(t, "stationary", nu, g_stationary.gamma_db),
                (t, "estimated", nu, g_estimated.gamma_db),
                (t, "zero_assumed", nu, g_zero.gamma_db)]

    for v_ix, nu in enumerate(nu_list):
        tasks = [(v_ix, nu, t) for t in range(n)]
        out = _map_trials(lambda t: one_trial(tasks[t]), n, run_cfg.threads)
        for chunk in out:
            rows.extend(chunk)
    cdfs = {}
    for nu in nu_list:
        for scn in CASE2_SCENARIOS:
            vals = [r[3] for r in rows if r[1] == scn and r[2] == nu]
            cdfs[(scn, nu)] = empirical_cdf(vals)
    return Case2Result(rows=rows, cdfs=cdfs)


@dataclass
class Case3Result:
    rows: list            # (trial, nc, gamma_db)
    cdfs: dict            # nc -> CDFSeries


def run_case3(run_cfg, n_trials=None, seed=None, nc_list=None):
    """Sensing-SNR sweep over the subcarrier count, per-subcarrier power fixed."""
    n = n_trials if n_trials is not None else run_cfg.trials_case3
    seed = seed if seed is not None else run_cfg.master_seed
    ncs = tuple(nc_list) if nc_list is not None else run_cfg.case3_nc
    rows = []
    for nc in ncs:
        grid = OFDMGrid(nc=int(nc), ns=run_cfg.grid.ns,
                        delta_f=run_cfg.grid.delta_f, fc=run_cfg.grid.fc,
                        t_cp=run_cfg.grid.t_cp)
        grid.validate(run_cfg.scenario.nu_max)
        nv = noise_variance(grid, run_cfg.scenario.noise_psd_dbm_hz,
                            run_cfg.scenario.noise_figure_db)

        def one_trial(t, grid=grid, nv=nv, nc=nc):
            rng = trial_rng(seed, 3, t)
            scene = make_scene(run_cfg.scenario, grid.constants(), rng)
            region = scene.grid.region_of(scene.target.position)
            inspected = {i: (scene.target.position.copy() if i == region
                             else scene.grid.random_cell(i, rng))
                         for i in range(scene.grid.n_regions)}
            streams = make_symbol_streams(scene, grid, rng,
                                          run_cfg.coherent_sensing_stream)
            frames = build_frames(scene, grid, streams, inspected, rng, nv,
                                  run_cfg.perfect_csi)
            cov = rcs_covariance(scene.target.position, scene.taps,
                                 run_cfg.scenario.rcs_variance,
                                 run_cfg.scenario.rcs_corr_rad)
            rap_ids = scene.assoc.region_raps[region]
            stacks = [build_response_stack(scene.target.position, scene, frames,
                                           scene.aps[rid],
                                           scene.target.velocity, grid)
                      for rid in rap_ids]
            report = sensing_snr(stacks, cov, nv)
            return (t, int(nc), report.gamma_db)

        rows.extend(_map_trials(one_trial, n, run_cfg.threads))
    cdfs = {}
    for nc in ncs:
        cdfs[int(nc)] = empirical_cdf([r[2] for r in rows if r[1] == int(nc)])
    return Case3Result(rows=rows, cdfs=cdfs)


def run_detect(run_cfg, seed=None):
    """One seeded end-to-end detection trial."""
    seed = seed if seed is not None else run_cfg.master_seed
    grid = run_cfg.grid
    rng = trial_rng(seed, 4, 0)
    data = synthesize_trial(run_cfg, grid, rng, present=True)
    ctx = data.context
    r_tot = int(sum(ctx.ranks(np.zeros(3))))
    threshold = calibrate_threshold(r_tot, data.noise_var, run_cfg.p_fa,
                                    mode=run_cfg.threshold_mode,
                                    rng=trial_rng(seed, 4, 1))
    box = SearchBox(run_cfg.scenario.nu_max)
    mrng = trial_rng(seed, 4, 2)

    def estimator(context):
        return estimate_velocity(run_cfg.estimator.method, context, box,
                                 run_cfg.estimator, mrng)

    outcome = glrt_detect(ctx, estimator, threshold)
    return outcome, data


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows, seed, config_hash, config_echo=""):
    """Write one output file: provenance comments, header, then data rows."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# seed={seed}\n")
        fh.write(f"# config_hash={config_hash}\n")
        if config_echo:
            fh.write(f"# config={config_echo}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_case1(result, out_dir, seed, config_hash, config_echo=""):
    timing_rows = [(r.method, r.mean_time_s, r.normalized_time)
                   for r in result.timing]
    write_csv(f"{out_dir}/case1_timing.csv",
              ["method", "mean_time_s", "normalized_time"],
              timing_rows, seed, config_hash, config_echo)
    write_csv(f"{out_dir}/case1_errors.csv",
              ["trial", "method", "ex", "ey", "ez",
               "ex_speednorm", "ey_speednorm", "ez_speednorm"],
              result.errors, seed, config_hash, config_echo)


def write_case2(result, out_dir, seed, config_hash, config_echo=""):
    write_csv(f"{out_dir}/case2_snr.csv",
              ["trial", "scenario", "nu_max", "gamma_db"],
              result.rows, seed, config_hash, config_echo)


def write_case3(result, out_dir, seed, config_hash, config_echo=""):
    write_csv(f"{out_dir}/case3_snr.csv",
              ["trial", "nc", "gamma_db"],
              result.rows, seed, config_hash, config_echo)
