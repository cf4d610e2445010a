"""Deterministic scenarios and geometry-based downlink channels.

The channel is a sum of rays (line of sight plus one bounce per scatterer)
with free-space gain, planar-array steering vectors and per-ray delay
phases.  Everything is a pure function of the scenario and its arguments,
so the CSI derived from it is a reproducible function of user geolocation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from .errors import OutOfAreaError

SPEED_OF_LIGHT = 299_792_458.0


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_amplitude(db: float) -> float:
    """Amplitude factor corresponding to a power loss of `db` dB."""
    return 10.0 ** (-db / 20.0)


@dataclass(frozen=True)
class Rect:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass(frozen=True)
class Box:
    """Axis-aligned building box in meters."""

    x_min: float
    y_min: float
    z_min: float
    x_max: float
    y_max: float
    z_max: float

    def contains(self, p: Sequence[float]) -> bool:
        return (
            self.x_min <= p[0] <= self.x_max
            and self.y_min <= p[1] <= self.y_max
            and self.z_min <= p[2] <= self.z_max
        )


@dataclass(frozen=True)
class BaseStation:
    id: int
    position: tuple[float, float, float]
    num_tx_antennas: int
    panel: tuple[int, int]  # (N1, N2), single polarization
    tx_power_dbm: float
    bandwidth_hz: float
    rb_count: int


@dataclass(frozen=True)
class Geolocation:
    x: float
    y: float
    z: float = 1.5
    velocity: tuple[float, float, float] | None = None

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class Scenario:
    """The deterministic world: geometry plus channel parameters."""

    area: Rect
    bs_list: tuple[BaseStation, ...]
    buildings: tuple[Box, ...]
    scatterers: tuple[tuple[float, float, float], ...]
    noise_power: float  # linear watts
    carrier_frequency: float
    subcarriers_per_rb: int
    symbols_per_slot: int
    seed: int
    num_rx_antennas: int = 4
    penetration_loss_db: float = 20.0
    reflection_loss_db: float = 4.0
    # Small-scale phase reference (Hz).  Kept well below the carrier so the
    # channel stays smooth on the sub-centimeter scale and CSI remains a
    # regional function of geolocation, while still decorrelating over
    # decimeter displacements.
    phase_ref_hz: float = 2.0e8
    ue_height_m: float = 1.5

    def __post_init__(self):
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")
        if self.subcarriers_per_rb <= 0 or self.symbols_per_slot <= 0:
            raise ValueError("subcarriers_per_rb and symbols_per_slot must be positive")
        if not self.bs_list:
            raise ValueError("scenario needs at least one BS")
        for bs in self.bs_list:
            if not self.area.contains(bs.position[0], bs.position[1]):
                raise ValueError(f"BS {bs.id} outside area")
            if bs.bandwidth_hz <= 0:
                raise ValueError(f"BS {bs.id} has nonpositive bandwidth")
            if bs.rb_count <= 0:
                raise ValueError(f"BS {bs.id} has nonpositive rb_count")
            n1, n2 = bs.panel
            if n1 * n2 != bs.num_tx_antennas:
                raise ValueError(f"BS {bs.id} panel {bs.panel} inconsistent with num_tx_antennas")

    def bs_by_id(self, bs_id: int) -> BaseStation:
        for bs in self.bs_list:
            if bs.id == bs_id:
                return bs
        raise KeyError(f"no BS with id {bs_id}")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency


@dataclass(frozen=True)
class ChannelMatrix:
    entries: np.ndarray  # complex, N_R x N_T
    subcarrier_index: int
    time_index: int


@dataclass
class ScenarioConfig:
    """Parameters for the seeded scenario generator."""

    area_width: float = 400.0
    area_height: float = 300.0
    num_bs: int = 5
    bs_positions: list[tuple[float, float, float]] | None = None
    bs_height_m: float = 25.0
    panel: tuple[int, int] = (4, 1)
    tx_power_dbm: float = 40.0
    bandwidth_hz: float = 20e6
    rb_count: int = 8
    num_buildings: int = 9
    building_size_range: tuple[float, float] = (20.0, 60.0)
    building_height_range: tuple[float, float] = (10.0, 30.0)
    num_scatterers: int = 30
    scatterer_height_range: tuple[float, float] = (2.0, 25.0)
    noise_power: float = 2e-9
    carrier_frequency: float = 3.5e9
    subcarriers_per_rb: int = 4
    symbols_per_slot: int = 2
    num_rx_antennas: int = 4
    penetration_loss_db: float = 20.0
    reflection_loss_db: float = 4.0
    phase_ref_hz: float = 2.0e8
    ue_height_m: float = 1.5


def generate_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Build a reproducible Scenario from `config` and `seed`.

    BS sites come from the config when given, otherwise from a seeded
    uniform draw over the inner 80% of the area.  Buildings and scatterers
    are always placed by the seeded generator.
    """
    if config.area_width <= 0 or config.area_height <= 0:
        raise ValueError("area dimensions must be positive")
    if config.num_bs < 1 and not config.bs_positions:
        raise ValueError("need at least one BS")
    rng = np.random.default_rng(seed)
    area = Rect(0.0, 0.0, config.area_width, config.area_height)

    if config.bs_positions is not None:
        positions = [tuple(map(float, p)) for p in config.bs_positions]
    else:
        margin_x = 0.1 * config.area_width
        margin_y = 0.1 * config.area_height
        positions = [
            (
                float(rng.uniform(margin_x, config.area_width - margin_x)),
                float(rng.uniform(margin_y, config.area_height - margin_y)),
                config.bs_height_m,
            )
            for _ in range(config.num_bs)
        ]

    n1, n2 = config.panel
    bs_list = tuple(
        BaseStation(
            id=i,
            position=positions[i],
            num_tx_antennas=n1 * n2,
            panel=(n1, n2),
            tx_power_dbm=config.tx_power_dbm,
            bandwidth_hz=config.bandwidth_hz,
            rb_count=config.rb_count,
        )
        for i in range(len(positions))
    )

    buildings = []
    lo, hi = config.building_size_range
    h_lo, h_hi = config.building_height_range
    for _ in range(config.num_buildings):
        w = rng.uniform(lo, hi)
        d = rng.uniform(lo, hi)
        h = rng.uniform(h_lo, h_hi)
        x0 = rng.uniform(0.0, config.area_width - w)
        y0 = rng.uniform(0.0, config.area_height - d)
        buildings.append(Box(float(x0), float(y0), 0.0, float(x0 + w), float(y0 + d), float(h)))

    s_lo, s_hi = config.scatterer_height_range
    scatterers = tuple(
        (
            float(rng.uniform(0.0, config.area_width)),
            float(rng.uniform(0.0, config.area_height)),
            float(rng.uniform(s_lo, s_hi)),
        )
        for _ in range(config.num_scatterers)
    )

    return Scenario(
        area=area,
        bs_list=bs_list,
        buildings=tuple(buildings),
        scatterers=scatterers,
        noise_power=config.noise_power,
        carrier_frequency=config.carrier_frequency,
        subcarriers_per_rb=config.subcarriers_per_rb,
        symbols_per_slot=config.symbols_per_slot,
        seed=seed,
        num_rx_antennas=config.num_rx_antennas,
        penetration_loss_db=config.penetration_loss_db,
        reflection_loss_db=config.reflection_loss_db,
        phase_ref_hz=config.phase_ref_hz,
        ue_height_m=config.ue_height_m,
    )


def segment_intersects_box(p0: np.ndarray, p1: np.ndarray, box: Box) -> bool:
    """Slab test: does the closed segment p0->p1 pass through the box interior?"""
    d = p1 - p0
    t_min, t_max = 0.0, 1.0
    lo = (box.x_min, box.y_min, box.z_min)
    hi = (box.x_max, box.y_max, box.z_max)
    for axis in range(3):
        if abs(d[axis]) < 1e-12:
            if p0[axis] < lo[axis] or p0[axis] > hi[axis]:
                return False
        else:
            t1 = (lo[axis] - p0[axis]) / d[axis]
            t2 = (hi[axis] - p0[axis]) / d[axis]
            if t1 > t2:
                t1, t2 = t2, t1
            t_min = max(t_min, t1)
            t_max = min(t_max, t2)
            if t_min > t_max:
                return False
    return True


def _segment_attenuation(s: Scenario, p0: np.ndarray, p1: np.ndarray) -> float:
    """Amplitude factor after wall penetration along the segment (1.0 = clear)."""
    hits = sum(segment_intersects_box(p0, p1, b) for b in s.buildings)
    if hits == 0:
        return 1.0
    return db_to_amplitude(s.penetration_loss_db) ** hits


def blockage(s: Scenario, bs_id: int, ue: Geolocation) -> tuple[float, np.ndarray]:
    """Amplitude attenuation per ray class: (LoS factor, per-scatterer factors).

    A scattered ray is attenuated once per building crossed on either leg.
    """
    bs = s.bs_by_id(bs_id)
    p_bs = np.array(bs.position)
    p_ue = ue.as_array()
    los = _segment_attenuation(s, p_bs, p_ue)
    scat = np.ones(len(s.scatterers))
    for i, sc in enumerate(s.scatterers):
        p_sc = np.array(sc)
        scat[i] = _segment_attenuation(s, p_bs, p_sc) * _segment_attenuation(s, p_sc, p_ue)
    return los, scat


def _steering_tx(panel: tuple[int, int], unit_dir: np.ndarray) -> np.ndarray:
    """Half-wavelength planar array response; dim-1 along y, dim-2 along z."""
    n1, n2 = panel
    ph1 = np.exp(1j * np.pi * np.arange(n1) * unit_dir[1])
    ph2 = np.exp(1j * np.pi * np.arange(n2) * unit_dir[2])
    return np.kron(ph1, ph2)


def _steering_rx(n_rx: int, unit_dir: np.ndarray) -> np.ndarray:
    """Half-wavelength ULA along x at the UE."""
    return np.exp(1j * np.pi * np.arange(n_rx) * unit_dir[0])


def _ray_geometry(s: Scenario, bs_id: int, ue: Geolocation):
    """Per-ray amplitudes, delays and steering vectors for (bs, ue).

    Returns (amps (R,), delays (R,), a_rx (R, N_R), a_tx (R, N_T)).
    Rays with zero blockage survive with attenuated amplitude; the set of
    rays itself never changes with position, keeping H continuous away
    from blockage transitions.
    """
    if not s.area.contains(ue.x, ue.y):
        raise OutOfAreaError(f"geolocation ({ue.x}, {ue.y}) outside area")
    bs = s.bs_by_id(bs_id)
    p_bs = np.array(bs.position)
    p_ue = ue.as_array()
    lam = s.wavelength
    p_tx_amp = np.sqrt(dbm_to_watts(bs.tx_power_dbm))
    los_att, scat_att = blockage(s, bs_id, ue)

    amps, delays, a_rx_rows, a_tx_rows = [], [], [], []

    d_los = float(np.linalg.norm(p_ue - p_bs))
    d_los = max(d_los, 1.0)  # clamp to avoid the near-field singularity
    u_dep = (p_ue - p_bs) / d_los
    amps.append(p_tx_amp * lam / (4.0 * np.pi * d_los) * los_att)
    delays.append(d_los / SPEED_OF_LIGHT)
    a_tx_rows.append(_steering_tx(bs.panel, u_dep))
    a_rx_rows.append(_steering_rx(s.num_rx_antennas, -u_dep))

    refl = db_to_amplitude(s.reflection_loss_db)
    for i, sc in enumerate(s.scatterers):
        p_sc = np.array(sc)
        d1 = max(float(np.linalg.norm(p_sc - p_bs)), 1.0)
        d2 = max(float(np.linalg.norm(p_ue - p_sc)), 1.0)
        u1 = (p_sc - p_bs) / d1
        u2 = (p_sc - p_ue) / d2  # direction UE -> scatterer
        amps.append(p_tx_amp * lam / (4.0 * np.pi * (d1 + d2)) * refl * scat_att[i])
        delays.append((d1 + d2) / SPEED_OF_LIGHT)
        a_tx_rows.append(_steering_tx(bs.panel, u1))
        a_rx_rows.append(_steering_rx(s.num_rx_antennas, u2))

    return (
        np.array(amps),
        np.array(delays),
        np.array(a_rx_rows),
        np.array(a_tx_rows),
    )


def _subcarrier_offset_hz(s: Scenario, bs: BaseStation, k: int) -> float:
    total = s.subcarriers_per_rb * bs.rb_count
    scs = bs.bandwidth_hz / total
    return (k - (total - 1) / 2.0) * scs


def channel_grid(
    s: Scenario, bs_id: int, ue: Geolocation, k_indices: Sequence[int], t_indices: Sequence[int]
) -> np.ndarray:
    """Channel matrices H for a grid of subcarrier and symbol indices.

    Returns a complex array of shape (len(k), len(t), N_R, N_T).  Time
    dependence enters only through Doppler, so a UE without velocity sees a
    time-invariant grid.
    """
    bs = s.bs_by_id(bs_id)
    total = s.subcarriers_per_rb * bs.rb_count
    for k in k_indices:
        if not 0 <= k < total:
            raise ValueError(f"subcarrier index {k} out of range (total {total})")
    amps, delays, a_rx, a_tx = _ray_geometry(s, bs_id, ue)

    f_off = np.array([_subcarrier_offset_hz(s, bs, k) for k in k_indices])
    # Delay phase at the offset frequency plus the reduced phase reference.
    phase_k = np.exp(-2j * np.pi * (f_off[:, None] + s.phase_ref_hz) * delays[None, :])

    t_arr = np.asarray(list(t_indices), dtype=float)
    if ue.velocity is not None and np.any(np.asarray(ue.velocity) != 0.0):
        v = np.asarray(ue.velocity, dtype=float)
        # Radial velocity toward each ray endpoint, at the phase-reference rate.
        doppler = _doppler_per_ray(s, bs_id, ue, v)
        scs = bs.bandwidth_hz / total
        t_sym = 1.0 / scs
        phase_t = np.exp(2j * np.pi * doppler[None, :] * t_arr[:, None] * t_sym)
    else:
        phase_t = np.ones((len(t_arr), len(delays)), dtype=complex)

    weights = amps[None, None, :] * phase_k[:, None, :] * phase_t[None, :, :]
    h = np.einsum("ktr,ri,rj->ktij", weights, a_rx, a_tx.conj())
    return h


def _doppler_per_ray(s: Scenario, bs_id: int, ue: Geolocation, v: np.ndarray) -> np.ndarray:
    bs = s.bs_by_id(bs_id)
    p_bs = np.array(bs.position)
    p_ue = ue.as_array()
    dirs = [p_bs - p_ue]
    for sc in s.scatterers:
        dirs.append(np.array(sc) - p_ue)
    out = np.empty(len(dirs))
    for i, d in enumerate(dirs):
        n = np.linalg.norm(d)
        u = d / n if n > 0 else d
        out[i] = s.phase_ref_hz / SPEED_OF_LIGHT * float(np.dot(v, u))
    return out


def channel_matrix(s: Scenario, bs_id: int, ue: Geolocation, k: int, t: int) -> ChannelMatrix:
    """Single-subcarrier, single-symbol channel H_{k,t}."""
    h = channel_grid(s, bs_id, ue, [k], [t])[0, 0]
    return ChannelMatrix(entries=h, subcarrier_index=k, time_index=t)


def point_in_building(s: Scenario, x: float, y: float, z: float) -> bool:
    return any(b.contains((x, y, z)) for b in s.buildings)


def sample_geolocations(s: Scenario, n: int, seed: int) -> list[Geolocation]:
    """Uniform draws over the non-building part of the area, at UE height."""
    rng = np.random.default_rng(seed)
    out: list[Geolocation] = []
    guard = 0
    while len(out) < n:
        x = float(rng.uniform(s.area.x_min, s.area.x_max))
        y = float(rng.uniform(s.area.y_min, s.area.y_max))
        if not point_in_building(s, x, y, s.ue_height_m):
            out.append(Geolocation(x, y, s.ue_height_m))
        guard += 1
        if guard > 1000 * max(n, 1) + 1000:
            raise RuntimeError("area appears to be fully covered by buildings")
    return out


def advance(
    s: Scenario, ue: Geolocation, speed_kmh: float, delta_t_s: float, heading_rad: float
) -> Geolocation:
    """Constant-velocity straight-line motion with reflection off the area edge."""
    dist = speed_kmh / 3.6 * delta_t_s
    x = ue.x + dist * np.cos(heading_rad)
    y = ue.y + dist * np.sin(heading_rad)
    x = _reflect(x, s.area.x_min, s.area.x_max)
    y = _reflect(y, s.area.y_min, s.area.y_max)
    return Geolocation(float(x), float(y), ue.z, ue.velocity)


def _reflect(v: float, lo: float, hi: float) -> float:
    span = hi - lo
    if span <= 0:
        return lo
    # Fold into a [0, 2*span) sawtooth, then mirror the upper half.
    v = (v - lo) % (2.0 * span)
    if v > span:
        v = 2.0 * span - v
    return lo + v


# --- JSON serialization (field names match the domain types) ---


def scenario_to_json(s: Scenario) -> str:
    doc = {
        "area": asdict(s.area),
        "bs_list": [asdict(b) for b in s.bs_list],
        "buildings": [asdict(b) for b in s.buildings],
        "scatterers": [list(p) for p in s.scatterers],
        "noise_power": s.noise_power,
        "carrier_frequency": s.carrier_frequency,
        "subcarriers_per_rb": s.subcarriers_per_rb,
        "symbols_per_slot": s.symbols_per_slot,
        "seed": s.seed,
        "num_rx_antennas": s.num_rx_antennas,
        "penetration_loss_db": s.penetration_loss_db,
        "reflection_loss_db": s.reflection_loss_db,
        "phase_ref_hz": s.phase_ref_hz,
        "ue_height_m": s.ue_height_m,
    }
    return json.dumps(doc, indent=2)


def scenario_from_json(text: str) -> Scenario:
    doc = json.loads(text)
    return Scenario(
        area=Rect(**doc["area"]),
        bs_list=tuple(
            BaseStation(
                id=b["id"],
                position=tuple(b["position"]),
                num_tx_antennas=b["num_tx_antennas"],
                panel=tuple(b["panel"]),
                tx_power_dbm=b["tx_power_dbm"],
                bandwidth_hz=b["bandwidth_hz"],
                rb_count=b["rb_count"],
            )
            for b in doc["bs_list"]
        ),
        buildings=tuple(Box(**b) for b in doc["buildings"]),
        scatterers=tuple(tuple(p) for p in doc["scatterers"]),
        noise_power=doc["noise_power"],
        carrier_frequency=doc["carrier_frequency"],
        subcarriers_per_rb=doc["subcarriers_per_rb"],
        symbols_per_slot=doc["symbols_per_slot"],
        seed=doc["seed"],
        num_rx_antennas=doc["num_rx_antennas"],
        penetration_loss_db=doc["penetration_loss_db"],
        reflection_loss_db=doc["reflection_loss_db"],
        phase_ref_hz=doc["phase_ref_hz"],
        ue_height_m=doc["ue_height_m"],
    )
