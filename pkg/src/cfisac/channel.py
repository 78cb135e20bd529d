"""Propagation channels: target-reflected sensing link, direct AP-AP link,
UE uplink, and the scalar-MMSE channel-estimation proxy feeding the precoder."""

from dataclasses import dataclass

import numpy as np

from .geometry import angles_to, bistatic_delay, bistatic_doppler, steering_vector
from .scene import bistatic_gain


@dataclass
class SensingChannelFactors:
    """Factorized target-reflected channel for one (receive AP, transmit AP) pair.

    The channel on subcarrier n and symbol n' is
    gain * array_outer * delay_phase(n) * doppler_phase(n').
    """

    gain: complex            # reflectivity times sqrt of two-leg gain
    array_outer: np.ndarray  # (n_rx_ant, n_tx_ant) rank-1 RX/TX response product
    delay_s: float
    doppler_hz: float

    def delay_phase(self, n, grid):
        return np.exp(-2j * np.pi * np.asarray(n) * self.delay_s / grid.t_useful)

    def doppler_phase(self, symbol, grid):
        return np.exp(2j * np.pi * np.asarray(symbol) * self.doppler_hz * grid.t_symbol)

    def evaluate(self, n, symbol, grid):
        """Channel matrix at one (subcarrier, symbol) index."""
        return self.gain * self.array_outer \
            * self.delay_phase(n, grid) * self.doppler_phase(symbol, grid)


@dataclass
class DirectChannel:
    """Rician tAP->rAP channel with per-subcarrier random LoS phase."""

    g: np.ndarray            # (n_subcarriers, n_rx_ant, n_tx_ant)
    kappa: float
    k_factor: float
    los_outer: np.ndarray


@dataclass
class UplinkChannel:
    """UE->AP channel, LoS plus diffuse scattering, drawn per subcarrier."""

    h: np.ndarray            # (n_subcarriers, n_ant)
    los_steering: np.ndarray
    beta: float
    k_factor: float


@dataclass
class ChannelEstimate:
    h_hat: np.ndarray
    mean_square_norm: float  # analytic E[||h_hat||^2]


def sensing_channel(point, velocity, tap, rap, alpha, consts):
    """Target-reflected channel factors for a hypothesized scatterer.

    alpha is the complex reflectivity drawn for this (receive AP, transmit AP)
    pair; it stays constant across the whole OFDM frame (Swerling-I block).
    """
    p = np.asarray(point, dtype=float)
    d_tx = float(np.linalg.norm(tap.position - p))
    d_rx = float(np.linalg.norm(rap.position - p))
    beta = bistatic_gain(d_tx, d_rx, consts.wavelength)
    a_rx = steering_vector(angles_to(rap.position, p), rap.n_antennas, rap.array)
    a_tx = steering_vector(angles_to(tap.position, p), tap.n_antennas, tap.array)
    return SensingChannelFactors(
        gain=alpha * np.sqrt(beta),
        array_outer=np.outer(a_rx, np.conj(a_tx)),
        delay_s=bistatic_delay(p, tap.position, rap.position, consts),
        doppler_hz=bistatic_doppler(p, velocity, tap.position, rap.position, consts),
    )


def direct_ap_channel(tap, rap, beta, k_factor, n_subcarriers, rng):
    """Direct tAP->rAP channel per subcarrier.

    NLoS entries are iid unit complex Gaussian (identity vec-covariance); the
    LoS term carries a fresh uniform phase per subcarrier.
    """
    kappa = np.sqrt(beta / (1.0 + k_factor))
    a_rx = steering_vector(angles_to(rap.position, tap.position),
                           rap.n_antennas, rap.array)
    a_tx = steering_vector(angles_to(tap.position, rap.position),
                           tap.n_antennas, tap.array)
    los_outer = np.outer(a_rx, np.conj(a_tx))
    shape = (n_subcarriers, rap.n_antennas, tap.n_antennas)
    nlos = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_subcarriers)
    los = np.sqrt(k_factor) * np.exp(1j * phases)
    g = kappa * (nlos + los[:, None, None] * los_outer)
    return DirectChannel(g=g, kappa=float(kappa), k_factor=float(k_factor),
                         los_outer=los_outer)


def ue_ap_channel(ue, ap, beta, k_factor, n_subcarriers, rng):
    """Uplink channel from a single-antenna UE, LoS plus scattering."""
    a = steering_vector(angles_to(ap.position, ue.position),
                        ap.n_antennas, ap.array)
    shape = (n_subcarriers, ap.n_antennas)
    scatter = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_subcarriers)
    h = np.sqrt(beta / (k_factor + 1.0)) * (
        np.sqrt(k_factor) * np.exp(1j * phases)[:, None] * a[None, :] + scatter)
    return UplinkChannel(h=h, los_steering=a, beta=float(beta),
                         k_factor=float(k_factor))


def pilot_snr(power, beta, pilot_length, noise_var):
    """Effective pilot SNR from transmit power, link gain, and pilot length."""
    return power * pilot_length * beta / noise_var


def estimate_channel(h_true, beta, pilot_snr_linear, rng=None):
    """Scalar-MMSE channel estimate: shrunk noisy observation of the true channel.

    pilot_snr_linear = None returns the perfect-CSI estimate.
    """
    h_true = np.asarray(h_true)
    n_ant = h_true.shape[-1]
    if pilot_snr_linear is None:
        return ChannelEstimate(h_hat=h_true.copy(),
                               mean_square_norm=beta * n_ant)
    if pilot_snr_linear <= 0:
        raise ValueError("pilot SNR must be positive")
    noise = (rng.standard_normal(n_ant) + 1j * rng.standard_normal(n_ant)) \
        * np.sqrt(beta / pilot_snr_linear / 2.0)
    c = pilot_snr_linear / (1.0 + pilot_snr_linear)
    return ChannelEstimate(h_hat=c * (h_true + noise),
                           mean_square_norm=c * beta * n_ant)
