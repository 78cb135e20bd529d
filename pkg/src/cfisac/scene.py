"""Scenario deployment: AP/UE/target placement, associations, large-scale statistics."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateGeometry
from .geometry import ArraySpec, PhysicalConstants


@dataclass
class ScenarioConfig:
    """Network scenario parameters; defaults reproduce the reference deployment."""

    area_side: float = 500.0
    n_ap: int = 16
    n_ue: int = 8
    n_regions: int = 4
    aps_per_ue: int = 4
    n_antennas: int = 4
    m_tx: int = 8
    m_rx: int = 8
    ap_height: float = 10.0
    ue_height: float = 1.65
    target_height_min: float = 20.0
    target_height_max: float = 100.0
    nu_max: float = 150.0
    rcs_variance_dbsm: float = 10.0
    rcs_corr_rad: float = 0.5
    power_per_ap: float = 2.0
    noise_psd_dbm_hz: float = -174.0
    noise_figure_db: float = 9.0
    n_rx_per_region: int = 0      # 0 = all receive APs inspect every region
    cells_per_side: int = 5
    tx_ap_ids: tuple = ()         # explicit transmit-role override; empty = random split

    def __post_init__(self):
        if self.m_tx + self.m_rx != self.n_ap:
            raise ConfigError("m_tx + m_rx must equal n_ap")
        if self.aps_per_ue > self.m_tx:
            raise ConfigError("aps_per_ue cannot exceed the number of transmit APs")
        for name in ("n_ap", "n_ue", "n_regions", "aps_per_ue", "n_antennas",
                     "m_tx", "m_rx"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")

    @property
    def rcs_variance(self):
        """Mean-square reflectivity in linear m^2."""
        return 10.0 ** (self.rcs_variance_dbsm / 10.0)


@dataclass
class APNode:
    id: int
    position: np.ndarray
    role: str = ""                 # 'tx' or 'rx'
    n_antennas: int = 4
    array: ArraySpec = field(default_factory=ArraySpec)


@dataclass
class UENode:
    id: int
    position: np.ndarray


@dataclass
class TargetState:
    position: np.ndarray
    velocity: np.ndarray
    present: bool = True


class RegionGrid:
    """Partition of the square area into equal rectangular sensing regions.

    Each region is further divided into a grid of radar cells; one cell per
    region is inspected per processing block.
    """

    def __init__(self, area_side, n_regions, height_range, cells_per_side=5):
        rows = int(np.floor(np.sqrt(n_regions)))
        while n_regions % rows:
            rows -= 1
        self.rows = rows
        self.cols = n_regions // rows
        self.n_regions = n_regions
        self.area_side = float(area_side)
        self.height_range = (float(height_range[0]), float(height_range[1]))
        self.cells_per_side = int(cells_per_side)
        self._dx = self.area_side / self.cols
        self._dy = self.area_side / self.rows

    def bounds(self, region):
        r, c = divmod(region, self.cols)
        return (c * self._dx, (c + 1) * self._dx, r * self._dy, (r + 1) * self._dy)

    def centroid(self, region):
        x0, x1, y0, y1 = self.bounds(region)
        z = 0.5 * (self.height_range[0] + self.height_range[1])
        return np.array([0.5 * (x0 + x1), 0.5 * (y0 + y1), z])

    def region_of(self, position):
        x = min(max(position[0], 0.0), np.nextafter(self.area_side, 0.0))
        y = min(max(position[1], 0.0), np.nextafter(self.area_side, 0.0))
        return int(y // self._dy) * self.cols + int(x // self._dx)

    def random_cell(self, region, rng):
        """Center of a uniformly drawn radar cell in the region, random height."""
        x0, x1, y0, y1 = self.bounds(region)
        n = self.cells_per_side
        cx = x0 + (rng.integers(n) + 0.5) * (x1 - x0) / n
        cy = y0 + (rng.integers(n) + 0.5) * (y1 - y0) / n
        z = rng.uniform(*self.height_range)
        return np.array([cx, cy, z])


@dataclass
class AssociationMap:
    """User- and target-centric AP association sets with their inversions."""

    ue_taps: dict       # UE id -> list of serving transmit-AP ids
    tap_ues: dict       # transmit-AP id -> list of served UE ids
    region_taps: dict   # region -> list of transmit-AP ids illuminating it
    region_raps: dict   # region -> list of receive-AP ids inspecting it
    tap_regions: dict   # transmit-AP id -> list of regions it illuminates

    def check(self):
        for k, taps in self.ue_taps.items():
            for m in taps:
                assert k in self.tap_ues[m]
        for m, ues in self.tap_ues.items():
            for k in ues:
                assert m in self.ue_taps[k]
        for i, taps in self.region_taps.items():
            for m in taps:
                assert i in self.tap_regions[m]
        for m, regions in self.tap_regions.items():
            for i in regions:
                assert m in self.region_taps[i]


@dataclass
class LSFTable:
    """Large-scale fading gains and Rician factors for the static links.

    Bistatic sensing gains depend on the inspected point and are computed on
    demand with bistatic_gain().
    """

    beta_ue: np.ndarray   # (n_ue, n_ap) linear power gain UE <-> AP
    k_ue: np.ndarray      # (n_ue, n_ap) Rician K-factor
    beta_ap: np.ndarray   # (n_ap, n_ap) linear power gain AP <-> AP, diag unused
    k_ap: np.ndarray      # (n_ap, n_ap) Rician K-factor, diag unused


def pathloss_db(distance):
    """One-way pathloss in dB for UE-AP and AP-AP links."""
    return -30.5 - 36.7 * np.log10(distance)


def oneway_gain(distance):
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0.0):
        raise DegenerateGeometry("zero-distance link")
    return 10.0 ** (pathloss_db(d) / 10.0)


def rician_k(distance):
    """Distance-dependent Rician K-factor (linear)."""
    return 10.0 ** (1.3 - 0.003 * np.asarray(distance, dtype=float))


def bistatic_gain(d_tx, d_rx, wavelength):
    """Radar-equation two-leg gain, reflectivity excluded."""
    if d_tx <= 0.0 or d_rx <= 0.0:
        raise DegenerateGeometry("zero-distance sensing leg")
    return wavelength ** 2 / ((4.0 * np.pi) ** 3 * d_tx ** 2 * d_rx ** 2)


def deploy_scene(cfg, rng):
    """Random AP/UE/target placement; returns (aps, ues, targets, grid)."""
    aps = []
    for m in range(cfg.n_ap):
        xy = rng.uniform(0.0, cfg.area_side, size=2)
        aps.append(APNode(id=m,
                          position=np.array([xy[0], xy[1], cfg.ap_height]),
                          n_antennas=cfg.n_antennas))
    ues = []
    for k in range(cfg.n_ue):
        xy = rng.uniform(0.0, cfg.area_side, size=2)
        ues.append(UENode(id=k, position=np.array([xy[0], xy[1], cfg.ue_height])))
    txy = rng.uniform(0.0, cfg.area_side, size=2)
    tz = rng.uniform(cfg.target_height_min, cfg.target_height_max)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    speed = rng.uniform(0.0, cfg.nu_max)
    target = TargetState(position=np.array([txy[0], txy[1], tz]),
                         velocity=speed * direction)
    grid = RegionGrid(cfg.area_side, cfg.n_regions,
                      (cfg.target_height_min, cfg.target_height_max),
                      cfg.cells_per_side)
    return aps, ues, [target], grid


def partition_aps(aps, cfg, rng):
    """Assign transmit/receive roles: random balanced split, or explicit override."""
    if cfg.m_tx + cfg.m_rx != len(aps):
        raise ConfigError("m_tx + m_rx must equal the AP count")
    if cfg.tx_ap_ids:
        tx_ids = set(cfg.tx_ap_ids)
        if len(tx_ids) != cfg.m_tx or not tx_ids.issubset(range(len(aps))):
            raise ConfigError("tx_ap_ids must name exactly m_tx distinct AP ids")
    else:
        perm = rng.permutation(len(aps))
        tx_ids = set(int(i) for i in perm[:cfg.m_tx])
    for ap in aps:
        ap.role = "tx" if ap.id in tx_ids else "rx"
    taps = [ap for ap in aps if ap.role == "tx"]
    raps = [ap for ap in aps if ap.role == "rx"]
    return taps, raps


def associate_users(ues, taps, lsf, aps_per_ue):
    """Serve each UE by its aps_per_ue strongest transmit APs."""
    ue_taps = {}
    tap_ues = {m.id: [] for m in taps}
    tap_ids = np.array([m.id for m in taps])
    for ue in ues:
        betas = lsf.beta_ue[ue.id, tap_ids]
        order = np.argsort(-betas, kind="stable")[:aps_per_ue]
        chosen = sorted(int(tap_ids[j]) for j in order)
        ue_taps[ue.id] = chosen
        for m in chosen:
            tap_ues[m].append(ue.id)
    return ue_taps, tap_ues


def associate_regions(grid, taps, raps, n_rx=0):
    """Assign every region all transmit APs and its n_rx closest receive APs.

    n_rx = 0 assigns all receive APs. Every receive AP ends up inspecting at
    least one region.
    """
    region_taps = {i: sorted(m.id for m in taps) for i in range(grid.n_regions)}
    tap_regions = {m.id: list(range(grid.n_regions)) for m in taps}
    region_raps = {}
    n = len(raps) if n_rx <= 0 else min(n_rx, len(raps))
    for i in range(grid.n_regions):
        c = grid.centroid(i)
        dists = np.array([np.linalg.norm(m.position - c) for m in raps])
        order = np.argsort(dists, kind="stable")[:n]
        region_raps[i] = sorted(raps[j].id for j in order)
    assigned = set()
    for ids in region_raps.values():
        assigned.update(ids)
    for m in raps:
        if m.id not in assigned:
            dists = [np.linalg.norm(m.position - grid.centroid(i))
                     for i in range(grid.n_regions)]
            best = int(np.argmin(dists))
            region_raps[best] = sorted(region_raps[best] + [m.id])
    return region_taps, region_raps, tap_regions


def large_scale_fading(aps, ues):
    """One-way gains and Rician factors for all UE-AP and AP-AP links."""
    n_ap, n_ue = len(aps), len(ues)
    beta_ue = np.zeros((n_ue, n_ap))
    k_ue = np.zeros((n_ue, n_ap))
    for ue in ues:
        for ap in aps:
            d = np.linalg.norm(ue.position - ap.position)
            beta_ue[ue.id, ap.id] = oneway_gain(d)
            k_ue[ue.id, ap.id] = rician_k(d)
    beta_ap = np.zeros((n_ap, n_ap))
    k_ap = np.zeros((n_ap, n_ap))
    for a in aps:
        for b in aps:
            if a.id == b.id:
                continue
            d = np.linalg.norm(a.position - b.position)
            beta_ap[a.id, b.id] = oneway_gain(d)
            k_ap[a.id, b.id] = rician_k(d)
    return LSFTable(beta_ue=beta_ue, k_ue=k_ue, beta_ap=beta_ap, k_ap=k_ap)


def rcs_covariance(point, taps, sigma_alpha_sq, corr_len):
    """Reflectivity covariance across transmit APs with Gaussian angular correlation.

    Entry (j, k) = sigma_alpha_sq * exp(-dphi^2 / (2 corr_len^2)) with dphi the
    great-circle angle between the target->AP unit vectors.
    """
    if sigma_alpha_sq <= 0:
        raise ValueError("sigma_alpha_sq must be positive")
    p = np.asarray(point, dtype=float)
    units = []
    for m in taps:
        d = m.position - p
        r = np.linalg.norm(d)
        if r == 0.0:
            raise DegenerateGeometry("target coincides with a transmit AP")
        units.append(d / r)
    units = np.array(units)
    cosang = np.clip(units @ units.T, -1.0, 1.0)
    dphi = np.arccos(cosang)
    return sigma_alpha_sq * np.exp(-dphi ** 2 / (2.0 * corr_len ** 2))


@dataclass
class Scene:
    """Immutable per-block snapshot of the deployed network."""

    cfg: ScenarioConfig
    consts: PhysicalConstants
    grid: RegionGrid
    aps: list
    taps: list
    raps: list
    ues: list
    target: TargetState
    assoc: AssociationMap
    lsf: LSFTable


def make_scene(cfg, consts, rng):
    """Deploy, partition, and associate a full scene from one RNG stream."""
    aps, ues, targets, grid = deploy_scene(cfg, rng)
    taps, raps = partition_aps(aps, cfg, rng)
    lsf = large_scale_fading(aps, ues)
    ue_taps, tap_ues = associate_users(ues, taps, lsf, cfg.aps_per_ue)
    region_taps, region_raps, tap_regions = associate_regions(
        grid, taps, raps, cfg.n_rx_per_region)
    assoc = AssociationMap(ue_taps=ue_taps, tap_ues=tap_ues,
                           region_taps=region_taps, region_raps=region_raps,
                           tap_regions=tap_regions)
    return Scene(cfg=cfg, consts=consts, grid=grid, aps=aps, taps=taps,
                 raps=raps, ues=ues, target=targets[0], assoc=assoc, lsf=lsf)
