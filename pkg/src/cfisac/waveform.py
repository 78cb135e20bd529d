"""OFDM grid bookkeeping, symbol streams, precoding, power allocation, and
per-AP transmit-frame assembly."""

from dataclasses import dataclass

import numpy as np

from .channel import estimate_channel, pilot_snr, ue_ap_channel
from .errors import ConfigError
from .geometry import PhysicalConstants, angles_to, steering_vector


@dataclass(frozen=True)
class OFDMGrid:
    """Subcarrier/symbol grid with carrier and cyclic-prefix timing.

    t_cp defaults to one fourteenth of the useful symbol (normal CP ratio).
    """

    nc: int = 12
    ns: int = 14
    delta_f: float = 30e3
    fc: float = 3e9
    t_cp: float = None

    def __post_init__(self):
        if self.nc < 1 or self.ns < 1:
            raise ConfigError("nc and ns must be at least 1")
        if self.delta_f <= 0 or self.fc <= 0:
            raise ConfigError("delta_f and fc must be positive")
        if self.t_cp is None:
            object.__setattr__(self, "t_cp", 1.0 / self.delta_f / 14.0)

    @property
    def bandwidth(self):
        return self.nc * self.delta_f

    @property
    def t_useful(self):
        return 1.0 / self.delta_f

    @property
    def t_symbol(self):
        return self.t_useful + self.t_cp

    def constants(self):
        return PhysicalConstants(fc=self.fc)

    def validate(self, nu_max, bandwidth_budget=20e6):
        """Reject grids whose maximum induced Doppler exceeds the subcarrier
        spacing, or whose occupied bandwidth exceeds the budget."""
        consts = self.constants()
        f_max = 2.0 * nu_max * self.fc / consts.c
        if f_max > self.delta_f:
            raise ConfigError(
                f"maximum Doppler {f_max:.1f} Hz exceeds subcarrier spacing "
                f"{self.delta_f:.1f} Hz")
        if self.bandwidth > bandwidth_budget:
            raise ConfigError(
                f"occupied bandwidth {self.bandwidth:.3e} Hz exceeds budget "
                f"{bandwidth_budget:.3e} Hz")


def qpsk_symbols(rng, shape):
    """Unit-power QPSK symbols."""
    k = rng.integers(0, 4, size=shape)
    return np.exp(1j * (np.pi / 4.0 + k * np.pi / 2.0))


@dataclass
class SymbolStreams:
    """Per-stream unit-power symbol grids for one processing block."""

    ue: dict        # UE id -> (ns, nc) symbols, shared by all serving APs
    sensing: dict   # region -> (ns, nc) if coherent, else (region, tap id) -> (ns, nc)
    coherent: bool

    def sensing_for(self, region, tap_id):
        if self.coherent:
            return self.sensing[region]
        return self.sensing[(region, tap_id)]


def make_symbol_streams(scene, grid, rng, coherent=True):
    shape = (grid.ns, grid.nc)
    ue = {k.id: qpsk_symbols(rng, shape) for k in scene.ues}
    sensing = {}
    if coherent:
        for i in range(scene.grid.n_regions):
            sensing[i] = qpsk_symbols(rng, shape)
    else:
        for i in range(scene.grid.n_regions):
            for tap in scene.taps:
                sensing[(i, tap.id)] = qpsk_symbols(rng, shape)
    return SymbolStreams(ue=ue, sensing=sensing, coherent=coherent)


def mrt_precoder(estimate):
    """Conjugate precoder scaled so its mean-square norm is one."""
    if estimate.mean_square_norm <= 0:
        raise ConfigError("channel estimate has non-positive normalization")
    return np.conj(estimate.h_hat) / np.sqrt(estimate.mean_square_norm)


def sensing_beamformer(tap, point):
    """Steering vector of a transmit AP toward an inspected point."""
    angles = angles_to(tap.position, point)
    return steering_vector(angles, tap.n_antennas, tap.array)


@dataclass
class PowerAllocation:
    mu: dict      # UE id -> power
    eta: dict     # region -> power
    budget: float

    @property
    def total(self):
        return sum(self.mu.values()) + sum(self.eta.values())


def allocate_power_uniform(ue_ids, region_ids, power):
    """Split the AP budget equally across all served streams."""
    n = len(ue_ids) + len(region_ids)
    if n == 0:
        return PowerAllocation(mu={}, eta={}, budget=power)
    share = power / n
    return PowerAllocation(mu={k: share for k in ue_ids},
                           eta={i: share for i in region_ids},
                           budget=power)


def transmit_frame(tap, precoders, beamformers, allocation, streams, grid):
    """Dual-purpose transmit signal of one AP, shape (ns, nc, n_antennas)."""
    frame = np.zeros((grid.ns, grid.nc, tap.n_antennas), dtype=complex)
    for k, power in allocation.mu.items():
        w = precoders[k]
        if w.shape != (tap.n_antennas,):
            raise ConfigError("precoder dimension does not match the array")
        frame += np.sqrt(power) * streams.ue[k][:, :, None] * w[None, None, :]
    for i, power in allocation.eta.items():
        w0 = beamformers[i]
        if w0.shape != (tap.n_antennas,):
            raise ConfigError("beamformer dimension does not match the array")
        x0 = streams.sensing_for(i, tap.id)
        frame += np.sqrt(power) * x0[:, :, None] * w0[None, None, :]
    return frame


def build_frames(scene, grid, streams, inspected_points, rng, noise_var,
                 perfect_csi=False):
    """Assemble every transmit AP's frame for one block.

    inspected_points maps region -> hypothesized cell position; the sensing
    beams of each AP point at the inspected cells of its assigned regions.
    Channel estimates for the communication precoders are drawn here.
    """
    cfg = scene.cfg
    frames = {}
    for tap in scene.taps:
        ue_ids = scene.assoc.tap_ues[tap.id]
        region_ids = scene.assoc.tap_regions[tap.id]
        precoders = {}
        for k in ue_ids:
            beta = scene.lsf.beta_ue[k, tap.id]
            ul = ue_ap_channel(scene.ues[k], tap, beta,
                               scene.lsf.k_ue[k, tap.id], 1, rng)
            if perfect_csi:
                est = estimate_channel(ul.h[0], beta, None)
            else:
                snr = pilot_snr(cfg.power_per_ap, beta, cfg.n_ue, noise_var)
                est = estimate_channel(ul.h[0], beta, snr, rng)
            precoders[k] = mrt_precoder(est)
        beamformers = {i: sensing_beamformer(tap, inspected_points[i])
                       for i in region_ids}
        allocation = allocate_power_uniform(ue_ids, region_ids, cfg.power_per_ap)
        frames[tap.id] = transmit_frame(tap, precoders, beamformers,
                                        allocation, streams, grid)
    return frames
