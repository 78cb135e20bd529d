"""Observation synthesis, Doppler-aware GLRT statistic, threshold calibration,
and sensing SNR metrics.

Stacked vectors order their rows antenna-fastest, then subcarrier, then OFDM
symbol, i.e. a (ns, nc, n_antennas) grid flattened in C order.

The candidate-velocity search relies on a factorization of the response stack:
all velocity-independent factors (two-leg gains, array responses, transmit
frames, delay phases) are reduced once per trial to per-symbol Gram blocks and
observation correlations; evaluating the statistic at a new velocity then only
applies the per-symbol Doppler phase ramps and solves small Gram systems.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sp_stats

from .channel import direct_ap_channel, sensing_channel
from .errors import ConfigError, RankDeficient
from .geometry import angles_to, bistatic_delay, steering_vector
from .scene import bistatic_gain, rcs_covariance

CONDITION_LIMIT = 1e8     # Gram condition above which the SVD path is used
RANK_EPS = 1e-9           # relative singular-value threshold for rank decisions


def noise_variance(grid, noise_psd_dbm_hz, noise_figure_db):
    """Per-subcarrier noise power: PSD times subcarrier bandwidth times noise figure."""
    n0 = 10.0 ** ((noise_psd_dbm_hz - 30.0) / 10.0)
    return n0 * grid.delta_f * 10.0 ** (noise_figure_db / 10.0)


def draw_reflectivities(cov, n_raps, rng):
    """Per receive AP, a jointly correlated complex reflectivity vector across
    transmit APs, constant over the block (Swerling-I)."""
    w, v = np.linalg.eigh(cov)
    root = v @ np.diag(np.sqrt(np.clip(w, 0.0, None)))
    n = cov.shape[0]
    z = (rng.standard_normal((n_raps, n)) + 1j * rng.standard_normal((n_raps, n))) \
        / np.sqrt(2.0)
    return z @ root.T


@dataclass
class ObservationStack:
    """Residual observation of one receive AP over the whole frame."""

    y: np.ndarray          # flat complex vector, length n_antennas * nc * ns
    noise_var: float
    n_antennas: int
    nc: int
    ns: int

    def grid_view(self):
        return self.y.reshape(self.ns, self.nc, self.n_antennas)


@dataclass
class DopplerResponseStack:
    """Stacked spatial-Doppler response matrix of one receive AP at a candidate
    velocity; columns run over transmit APs."""

    matrix: np.ndarray
    velocity: np.ndarray
    rap_id: int = -1


@dataclass
class DetectionOutcome:
    statistic: float
    threshold: float
    decision: bool                    # True = target declared present
    alpha_hats: list                  # per receive AP reflectivity estimates
    v_hat: np.ndarray
    estimator_failed: bool = False


@dataclass
class SNRReport:
    gamma: float
    gamma_db: float
    ranks: list


def synthesize_observation(rap, taps, frames, sensing_factors, direct_channels,
                           present, noise_var, grid, rng):
    """Residual observation at one receive AP after direct-link cancellation.

    The direct AP-AP contribution is generated, added, and then subtracted
    using the same known channel matrices, leaving the target echo plus noise.
    """
    echo = np.zeros((grid.ns, grid.nc, rap.n_antennas), dtype=complex)
    direct = np.zeros_like(echo)
    for tap, factors, dchan in zip(taps, sensing_factors, direct_channels):
        s = frames[tap.id]
        direct += np.einsum("nab,tnb->tna", dchan.g, s)
        if present:
            hs = np.einsum("ab,tnb->tna", factors.array_outer, s)
            rho = factors.delay_phase(np.arange(grid.nc), grid)
            xi = factors.doppler_phase(np.arange(grid.ns), grid)
            echo += factors.gain * xi[:, None, None] * rho[None, :, None] * hs
    presence = 1.0 if present else 0.0
    shape = echo.shape
    noise = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) \
        * np.sqrt(noise_var / 2.0)
    received = presence * echo + direct + noise
    residual = received - direct
    return ObservationStack(y=residual.reshape(-1), noise_var=noise_var,
                            n_antennas=rap.n_antennas, nc=grid.nc, ns=grid.ns)


def _pair_base(point, scene, frames, rap, grid, delay_offset_s=0.0):
    """Velocity-independent response factors of one receive AP.

    Returns (s0, a_rx, dirs): s0[t, n, j] collects, per transmit AP j, the
    scalar sqrt(gain) * (steering-matched frame sample) * delay phase; a_rx is
    the receive steering vector; dirs[j] is the sum of the two target->AP unit
    vectors driving the pair Doppler.
    """
    consts = grid.constants()
    p = np.asarray(point, dtype=float)
    a_rx = steering_vector(angles_to(rap.position, p), rap.n_antennas, rap.array)
    n_idx = np.arange(grid.nc)
    n_taps = len(scene.taps)
    s0 = np.empty((grid.ns, grid.nc, n_taps), dtype=complex)
    dirs = np.empty((n_taps, 3))
    for j, tap in enumerate(scene.taps):
        d_tx = float(np.linalg.norm(tap.position - p))
        d_rx = float(np.linalg.norm(rap.position - p))
        beta = bistatic_gain(d_tx, d_rx, consts.wavelength)
        a_tx = steering_vector(angles_to(tap.position, p), tap.n_antennas, tap.array)
        g = np.einsum("b,tnb->tn", np.conj(a_tx), frames[tap.id])
        tau = bistatic_delay(p, tap.position, rap.position, consts) - delay_offset_s
        rho = np.exp(-2j * np.pi * n_idx * tau / grid.t_useful)
        s0[:, :, j] = np.sqrt(beta) * g * rho[None, :]
        dirs[j] = (tap.position - p) / d_tx + (rap.position - p) / d_rx
    return s0, a_rx, dirs


def build_response_stack(point, scene, frames, rap, velocity, grid,
                         delay_offset_s=0.0):
    """Explicit stacked response matrix of one receive AP at a candidate velocity."""
    s0, a_rx, dirs = _pair_base(point, scene, frames, rap, grid, delay_offset_s)
    consts = grid.constants()
    v = np.asarray(velocity, dtype=float)
    freqs = consts.fc / consts.c * dirs @ v
    xi = np.exp(2j * np.pi * grid.t_symbol * np.outer(np.arange(grid.ns), freqs))
    cols = s0 * xi[:, None, :]
    matrix = (cols[:, :, None, :] * a_rx[None, None, :, None]).reshape(-1, dirs.shape[0])
    return DopplerResponseStack(matrix=matrix, velocity=v.copy(), rap_id=rap.id)


@dataclass
class DetectionContext:
    """Precomputed per-trial factors for fast statistic evaluation over velocity.

    gram_blocks[m, t] is the per-symbol Gram of the velocity-independent
    signatures (antenna factor absorbed); corr_blocks[m, t] the per-symbol
    correlation with the beamformed observation. The statistic at velocity v
    contracts these with the Doppler phase ramps and solves one small Gram
    system per receive AP.
    """

    point: np.ndarray
    rap_ids: list
    noise_var: float
    t_symbol: float
    ns: int
    n_antennas: int
    doppler_coef: float               # fc / c
    dirs: np.ndarray                  # (n_raps, n_taps, 3)
    gram_blocks: np.ndarray           # (n_raps, ns, n_taps, n_taps)
    corr_blocks: np.ndarray           # (n_raps, ns, n_taps)
    s0: np.ndarray                    # (n_raps, ns, nc, n_taps)
    a_rx: np.ndarray                  # (n_raps, n_antennas)
    observations: list
    sum_y_sq: float
    _t_phase: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self._t_phase = 2.0 * np.pi * self.t_symbol * np.arange(self.ns)

    @property
    def n_raps(self):
        return len(self.rap_ids)

    def doppler_table(self, velocity):
        """Pair Doppler shifts (n_raps, n_taps) at a candidate velocity."""
        return self.doppler_coef * self.dirs @ np.asarray(velocity, dtype=float)

    def phase_ramps(self, velocity):
        freqs = self.doppler_table(velocity)
        return np.exp(1j * self._t_phase[:, None, None] * freqs[None, :, :])

    def correlate(self, observations):
        """Per-symbol correlation blocks for alternative observations, aligned
        with rap_ids (flat vectors, grids, or ObservationStack objects)."""
        corr = np.empty_like(self.corr_blocks)
        for m in range(self.n_raps):
            y = observations[m]
            y = y.y if hasattr(y, "y") else np.asarray(y)
            grid_view = y.reshape(self.ns, -1, self.n_antennas)
            q = np.einsum("a,tna->tn", np.conj(self.a_rx[m]), grid_view)
            corr[m] = np.einsum("tni,tn->ti", np.conj(self.s0[m]), q)
        return corr

    def statistic(self, velocity, corr_blocks=None):
        """GLRT statistic: summed energy of each observation's projection onto
        its response column space at the candidate velocity."""
        xi = self.phase_ramps(velocity)
        xic = np.conj(xi)
        corr = self.corr_blocks if corr_blocks is None else corr_blocks
        g = np.einsum("tmi,tmj,mtij->mij", xic, xi, self.gram_blocks)
        b = np.einsum("tmi,mti->mi", xic, corr)
        try:
            x = np.linalg.solve(g, b[..., None])[..., 0]
            val = float(np.real(np.sum(np.conj(b) * x)))
        except np.linalg.LinAlgError:
            val = 0.0
            for m in range(g.shape[0]):
                val += _quadratic_form_pinv(g[m], b[m])
        return max(val, 0.0)

    def ranks(self, velocity):
        """Per receive AP numerical rank of the response stack at velocity."""
        xi = self.phase_ramps(velocity)
        g = np.einsum("tmi,tmj,mtij->mij", np.conj(xi), xi, self.gram_blocks)
        out = []
        for m in range(g.shape[0]):
            w = np.linalg.eigvalsh(g[m])
            wmax = w[-1]
            if wmax <= 0.0:
                out.append(0)
            else:
                out.append(int(np.sum(w > RANK_EPS ** 2 * wmax)))
        return out

    def response_stack(self, m_index, velocity):
        """Explicit response matrix of the m_index-th receive AP at velocity."""
        v = np.asarray(velocity, dtype=float)
        freqs = self.doppler_coef * self.dirs[m_index] @ v
        xi = np.exp(1j * self._t_phase[:, None] * freqs[None, :])
        cols = self.s0[m_index] * xi[:, None, :]
        matrix = (cols[:, :, None, :] * self.a_rx[m_index][None, None, :, None]) \
            .reshape(-1, self.dirs.shape[1])
        return DopplerResponseStack(matrix=matrix, velocity=v.copy(),
                                    rap_id=self.rap_ids[m_index])


def _quadratic_form_pinv(g, b):
    """b^H pinv(g) b for a Hermitian PSD Gram with rank truncation."""
    w, v = np.linalg.eigh(g)
    wmax = w[-1]
    if wmax <= 0.0:
        return 0.0
    keep = w > RANK_EPS ** 2 * wmax
    proj = v[:, keep].conj().T @ b
    return float(np.real(np.sum(np.abs(proj) ** 2 / w[keep])))


def build_detection_context(point, scene, frames, observations, grid, noise_var,
                            delay_offset_s=0.0):
    """Reduce one region's observations and response factors for the search loop.

    observations maps receive-AP id -> ObservationStack; the receive APs are
    the region's inspecting set, iterated in sorted id order.
    """
    rap_ids = sorted(observations.keys())
    consts = grid.constants()
    n_taps = len(scene.taps)
    n_raps = len(rap_ids)
    na = scene.cfg.n_antennas
    s0_all = np.empty((n_raps, grid.ns, grid.nc, n_taps), dtype=complex)
    a_all = np.empty((n_raps, na), dtype=complex)
    dirs_all = np.empty((n_raps, n_taps, 3))
    gram = np.empty((n_raps, grid.ns, n_taps, n_taps), dtype=complex)
    corr = np.empty((n_raps, grid.ns, n_taps), dtype=complex)
    obs_list = []
    sum_y_sq = 0.0
    for m, rid in enumerate(rap_ids):
        rap = scene.aps[rid]
        s0, a_rx, dirs = _pair_base(point, scene, frames, rap, grid, delay_offset_s)
        s0_all[m], a_all[m], dirs_all[m] = s0, a_rx, dirs
        stack = observations[rid]
        q = np.einsum("a,tna->tn", np.conj(a_rx), stack.grid_view())
        gram[m] = na * np.einsum("tni,tnj->tij", np.conj(s0), s0)
        corr[m] = np.einsum("tni,tn->ti", np.conj(s0), q)
        obs_list.append(stack)
        sum_y_sq += float(np.real(np.vdot(stack.y, stack.y)))
    return DetectionContext(
        point=np.asarray(point, dtype=float), rap_ids=rap_ids,
        noise_var=noise_var, t_symbol=grid.t_symbol, ns=grid.ns,
        n_antennas=na, doppler_coef=consts.fc / consts.c, dirs=dirs_all,
        gram_blocks=gram, corr_blocks=corr, s0=s0_all, a_rx=a_all,
        observations=obs_list, sum_y_sq=sum_y_sq)


def _as_matrix(stack):
    return stack.matrix if hasattr(stack, "matrix") else np.asarray(stack)


def _as_vector(obs):
    return obs.y if hasattr(obs, "y") else np.asarray(obs)


def _projection_energy(d, y):
    """Energy of y projected onto col(d): Cholesky of the Gram when well
    conditioned, rank-truncated SVD otherwise."""
    if not np.any(d):
        raise RankDeficient("all-zero response stack")
    g = d.conj().T @ d
    b = d.conj().T @ y
    if np.linalg.cond(g) < CONDITION_LIMIT:
        chol = np.linalg.cholesky(g)
        w = np.linalg.solve(chol, b)
        return float(np.real(np.vdot(w, w)))
    u, s, _ = np.linalg.svd(d, full_matrices=False)
    keep = s > RANK_EPS * s[0]
    proj = u[:, keep].conj().T @ y
    return float(np.real(np.vdot(proj, proj)))


def glrt_statistic(observations, stacks):
    """Summed projection energy over the receive APs inspecting a region."""
    if len(observations) != len(stacks):
        raise ConfigError("observation and stack lists must align")
    total = 0.0
    for obs, stack in zip(observations, stacks):
        total += _projection_energy(_as_matrix(stack), _as_vector(obs))
    return total


def ml_rcs_estimate(stack, observation):
    """Least-squares reflectivity estimate given a response stack.

    Uses the Gram/Cholesky solve when well-conditioned, otherwise a
    rank-truncated SVD pseudo-inverse.
    """
    d = _as_matrix(stack)
    y = _as_vector(observation)
    if not np.any(d):
        raise RankDeficient("all-zero response stack")
    g = d.conj().T @ d
    b = d.conj().T @ y
    if np.linalg.cond(g) < CONDITION_LIMIT:
        chol = np.linalg.cholesky(g)
        z = np.linalg.solve(chol, b)
        return np.linalg.solve(chol.conj().T, z)
    u, s, vh = np.linalg.svd(d, full_matrices=False)
    keep = s > RANK_EPS * s[0]
    return vh[keep].conj().T @ ((u[:, keep].conj().T @ y) / s[keep])


def calibrate_threshold(total_rank, noise_var, p_fa, mode="analytic", rng=None,
                        n_trials=20000):
    """Statistic threshold for a target false-alarm probability.

    Under the noise-only hypothesis the statistic is Gamma-distributed with
    shape equal to the total projection rank and scale the noise variance;
    the analytic mode inverts that tail, the Monte Carlo mode draws projected
    noise energies and takes the empirical quantile.
    """
    if not 0.0 < p_fa < 1.0:
        raise ConfigError("false-alarm probability must lie in (0, 1)")
    if total_rank < 1:
        raise ConfigError("total rank must be at least 1")
    if mode == "analytic":
        return float(sp_stats.gamma.ppf(1.0 - p_fa, a=total_rank, scale=noise_var))
    if mode == "monte_carlo":
        if rng is None:
            rng = np.random.default_rng(0)
        n_trials = max(int(n_trials), 20000)
        z = (rng.standard_normal((n_trials, total_rank))
             + 1j * rng.standard_normal((n_trials, total_rank))) \
            * np.sqrt(noise_var / 2.0)
        sums = np.sum(np.abs(z) ** 2, axis=1)
        return float(np.quantile(sums, 1.0 - p_fa))
    raise ConfigError(f"unknown threshold mode '{mode}'")


def glrt_detect(context, estimator, threshold):
    """Run the velocity-aware detector: maximize the statistic over velocity,
    compare against the threshold, and estimate reflectivities at the maximizer.

    estimator is a callable(context) returning an object with .velocity and
    .statistic; on estimator failure the zero-velocity statistic is used and
    the outcome flagged.
    """
    failed = False
    try:
        est = estimator(context)
        v_hat = np.asarray(est.velocity, dtype=float)
        stat = float(est.statistic)
    except Exception:
        failed = True
        v_hat = np.zeros(3)
        stat = context.statistic(v_hat)
    alpha_hats = []
    for m in range(context.n_raps):
        stack = context.response_stack(m, v_hat)
        alpha_hats.append(ml_rcs_estimate(stack, context.observations[m]))
    return DetectionOutcome(statistic=stat, threshold=float(threshold),
                            decision=stat > threshold, alpha_hats=alpha_hats,
                            v_hat=v_hat, estimator_failed=failed)


def _stack_rank(d):
    s = np.linalg.svd(d, compute_uv=False)
    if s.size == 0 or s[0] <= 0.0:
        return 0
    return int(np.sum(s > RANK_EPS * s[0]))


def sensing_snr(stacks, rcs_cov, noise_var):
    """Trace-ratio sensing SNR: captured reflectivity-weighted response energy
    per unit noise per projection rank."""
    num = 0.0
    ranks = []
    for stack in stacks:
        d = _as_matrix(stack)
        g = d.conj().T @ d
        num += float(np.real(np.trace(rcs_cov @ g)))
        ranks.append(_stack_rank(d))
    r_tot = sum(ranks)
    if r_tot == 0:
        raise RankDeficient("zero total response rank")
    gamma = num / (noise_var * r_tot)
    gamma_db = 10.0 * np.log10(gamma) if gamma > 0.0 else -np.inf
    return SNRReport(gamma=gamma, gamma_db=gamma_db, ranks=ranks)


def realized_snr(stacks_true, stacks_assumed, rcs_cov, noise_var):
    """Mismatch-aware SNR: target energy captured by the projector built at an
    assumed velocity, normalized by noise and the assumed-stack ranks."""
    num = 0.0
    ranks = []
    for st, sa in zip(stacks_true, stacks_assumed):
        dt = _as_matrix(st)
        da = _as_matrix(sa)
        ga = da.conj().T @ da
        k = da.conj().T @ dt
        inner = k @ rcs_cov @ k.conj().T
        w, v = np.linalg.eigh(ga)
        wmax = w[-1] if w.size else 0.0
        if wmax <= 0.0:
            ranks.append(0)
            continue
        keep = w > RANK_EPS ** 2 * wmax
        proj = v[:, keep].conj().T @ inner @ v[:, keep]
        num += float(np.real(np.sum(proj.diagonal() / w[keep])))
        ranks.append(int(np.sum(keep)))
    r_tot = sum(ranks)
    if r_tot == 0:
        raise RankDeficient("zero total response rank at the assumed velocity")
    gamma = num / (noise_var * r_tot)
    gamma_db = 10.0 * np.log10(gamma) if gamma > 0.0 else -np.inf
    return SNRReport(gamma=gamma, gamma_db=gamma_db, ranks=ranks)


def synthesize_region_observations(region, scene, frames, grid, noise_var, rng,
                                   present=True, alphas=None,
                                   delay_offset_s=0.0):
    """Observations of every receive AP inspecting a region for one block.

    Reflectivities are drawn jointly across transmit APs (independently per
    receive AP) unless supplied. Returns (observations dict, alphas, rcs_cov).
    """
    rap_ids = scene.assoc.region_raps[region]
    taps = scene.taps
    consts = grid.constants()
    cov = rcs_covariance(scene.target.position, taps, scene.cfg.rcs_variance,
                         scene.cfg.rcs_corr_rad)
    if alphas is None:
        alphas = draw_reflectivities(cov, len(rap_ids), rng)
    observations = {}
    for m, rid in enumerate(rap_ids):
        rap = scene.aps[rid]
        factors = []
        directs = []
        for j, tap in enumerate(taps):
            f = sensing_channel(scene.target.position, scene.target.velocity,
                                tap, rap, alphas[m, j], consts)
            f.delay_s -= delay_offset_s
            factors.append(f)
            directs.append(direct_ap_channel(
                tap, rap, scene.lsf.beta_ap[rid, tap.id],
                scene.lsf.k_ap[rid, tap.id], grid.nc, rng))
        observations[rid] = synthesize_observation(
            rap, taps, frames, factors, directs, present, noise_var, grid, rng)
    return observations, alphas, cov
