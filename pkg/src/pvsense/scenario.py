"""Geometric scene generation for uplink passive sensing.

A scene consists of a fixed user terminal (UT, the transmitter), a fixed
remote radio unit (RRU, the receiver), a handful of moving targets, and a
cloud of static reflectors clustered around each target.  Every reflector,
moving or static, contributes one propagation path UT -> reflector -> RRU
described by a :class:`PathParam`.

All positions are 2-D points in metres with the receive array along the
x-axis, so arrival/departure angles land in [0, pi] as long as the scene
stays in the upper half plane (the generator enforces this).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 3.0e8  # m/s, radar convention


class SceneGeometryError(ValueError):
    """Scene configuration produces physically unusable geometry."""


@dataclass(frozen=True)
class SceneConfig:
    """Randomised scene description.

    Intervals are inclusive (lo, hi) pairs; a degenerate (a, a) interval
    pins the quantity to a constant.  ``cfo_speed_range`` and
    ``to_range_interval`` express the oscillator offsets through their
    kinematic equivalents: the CFO equals the Doppler shift of a target
    moving at the drawn speed, the TO equals the one-way delay of the
    drawn range.
    """

    rru_pos: tuple[float, float] = (0.0, 0.0)
    ut_pos: tuple[float, float] = (80.0, 0.0)
    n_targets: int = 3
    target_speed_range: tuple[float, float] = (0.0, 40.0)
    target_range_interval: tuple[float, float] = (20.0, 90.0)
    statics_per_target: tuple[int, int] = (2, 7)
    static_scatter_radius: float = 8.0
    rcs: float = 1.0
    static_rcs: float | None = None
    tx_power_dbm: float = 25.0
    rng_seed: int = 0
    cfo_speed_range: tuple[float, float] = (15.0, 65.0)
    to_range_interval: tuple[float, float] = (55.0, 95.0)
    min_speed_gap: float = 0.0
    min_projected_speed: float = 0.0
    min_doa_gap_deg: float = 0.0
    include_los: bool = False
    los_power_ratio: float = 1.0

    def __post_init__(self):
        if self.n_targets < 1:
            raise ValueError("n_targets must be >= 1")
        for name in ("target_speed_range", "target_range_interval",
                     "statics_per_target", "cfo_speed_range",
                     "to_range_interval"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is empty: ({lo}, {hi})")
        if self.static_scatter_radius <= 0:
            raise ValueError("static_scatter_radius must be > 0")


@dataclass(frozen=True)
class PathParam:
    """One propagation path UT -> reflector -> RRU.

    ``gain`` holds the compound channel gain including the carrier phase
    rotation of the geometric delay; the (global) carrier rotation of the
    timing offset is applied at waveform synthesis.  ``doa``/``aod`` are
    arrival/departure angles in radians, ``delay`` the geometric two-hop
    delay in seconds, ``doppler`` the bistatic Doppler shift in Hz
    (exactly 0.0 for static reflectors).
    """

    gain: complex
    doa: float
    aod: float
    delay: float
    doppler: float
    is_static: bool

    def __post_init__(self):
        for name, cast in (("gain", complex), ("doa", float), ("aod", float),
                           ("delay", float), ("doppler", float),
                           ("is_static", bool)):
            object.__setattr__(self, name, cast(getattr(self, name)))
        if not (0.0 <= self.doa <= math.pi and 0.0 <= self.aod <= math.pi):
            raise ValueError("doa/aod must lie in [0, pi]")
        if self.delay < 0:
            raise ValueError("delay must be >= 0")
        if self.is_static and self.doppler != 0.0:
            raise ValueError("static path must have exactly zero doppler")


@dataclass(frozen=True)
class OffsetState:
    """Carrier frequency offset (Hz) and timing offset (s) of the link."""

    cfo_hz: float = 0.0
    to_s: float = 0.0

    def shifted(self, d_cfo_hz=0.0, d_to_s=0.0) -> "OffsetState":
        return OffsetState(self.cfo_hz + d_cfo_hz, self.to_s + d_to_s)


def _angle_in_half_plane(origin, point) -> float:
    ang = math.atan2(point[1] - origin[1], point[0] - origin[0])
    if -1e-12 <= ang < 0.0:
        ang = 0.0
    return ang


def path_from_geometry(ut_pos, rru_pos, scatter_pos, speed, rcs,
                       tx_power_dbm, carrier_hz, is_static=False,
                       phase=0.0) -> PathParam:
    """Derive the path parameters of one reflector from scene geometry.

    The reflector is treated as a point scatterer.  Amplitude follows the
    two-hop free-space law sqrt(P_tx * rcs) / (R1 * R2); the moving
    reflector's velocity vector points along the bistatic bisector
    (approaching), so the Doppler shift is 2 * speed * cos(psi) * f_c / c
    with psi the geometric bistatic half-angle.
    """
    ut = np.asarray(ut_pos, dtype=float)
    rru = np.asarray(rru_pos, dtype=float)
    pos = np.asarray(scatter_pos, dtype=float)
    r1 = float(np.linalg.norm(pos - ut))
    r2 = float(np.linalg.norm(pos - rru))
    if r1 < 1e-9 or r2 < 1e-9:
        raise SceneGeometryError("reflector coincides with UT or RRU")
    delay = (r1 + r2) / SPEED_OF_LIGHT

    if is_static or speed == 0.0:
        doppler = 0.0
    else:
        u1 = (pos - ut) / r1
        u2 = (pos - rru) / r2
        cos_psi = float(np.linalg.norm(u1 + u2)) / 2.0
        doppler = 2.0 * speed * cos_psi * carrier_hz / SPEED_OF_LIGHT

    tx_watts = 10.0 ** (tx_power_dbm / 10.0) * 1e-3
    amplitude = math.sqrt(tx_watts * rcs) / (r1 * r2)
    gain = amplitude * np.exp(1j * phase) * np.exp(-2j * np.pi * carrier_hz * delay)
    return PathParam(gain=complex(gain), doa=_angle_in_half_plane(rru, pos),
                     aod=_angle_in_half_plane(ut, pos), delay=delay,
                     doppler=doppler, is_static=bool(is_static))


def draw_offsets(cfg: SceneConfig, carrier_hz, rng=None) -> OffsetState:
    """Draw CFO/TO from their kinematic-equivalent intervals.

    cfo = 2 * v * f_c / c with v uniform over ``cfo_speed_range``;
    to = r / c with r uniform over ``to_range_interval``.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    v = rng.uniform(*cfg.cfo_speed_range)
    r = rng.uniform(*cfg.to_range_interval)
    cfo = 2.0 * v * carrier_hz / SPEED_OF_LIGHT
    return OffsetState(cfo_hz=cfo, to_s=r / SPEED_OF_LIGHT)


def _bistatic_cos_psi(ut, rru, pos) -> float:
    """cos of the bistatic half-angle; scales speed into visible Doppler."""
    ut = np.asarray(ut, dtype=float)
    rru = np.asarray(rru, dtype=float)
    pos = np.asarray(pos, dtype=float)
    u1 = (pos - ut) / np.linalg.norm(pos - ut)
    u2 = (pos - rru) / np.linalg.norm(pos - rru)
    return float(np.linalg.norm(u1 + u2)) / 2.0


def _draw_speeds(cfg: SceneConfig, cos_psis, rng):
    """Target speeds constrained through the projected (radar-visible)
    velocities v * cos(psi): pairwise gaps of at least ``min_speed_gap``
    and a blind-speed floor of ``min_projected_speed``.  Returns None
    when the drawn geometry cannot satisfy the constraints."""
    lo, hi = cfg.target_speed_range
    unconstrained = (cfg.min_speed_gap <= 0.0
                     and cfg.min_projected_speed <= 0.0)
    for _ in range(200):
        v = rng.uniform(lo, hi, size=cfg.n_targets)
        if unconstrained:
            return v
        projected = np.sort(v * np.asarray(cos_psis))
        if projected[0] < cfg.min_projected_speed:
            continue
        if cfg.n_targets > 1 and cfg.min_speed_gap > 0.0 \
                and np.min(np.diff(projected)) < cfg.min_speed_gap:
            continue
        return v
    return None


def _draw_target_angles(cfg: SceneConfig, rng) -> np.ndarray:
    """Arrival angles with separation enforced in the array's sin space,
    where mirror angles coincide."""
    min_gap = math.sin(math.radians(cfg.min_doa_gap_deg))
    for _ in range(10_000):
        ang = rng.uniform(0.0, math.pi, size=cfg.n_targets)
        if cfg.n_targets == 1 or cfg.min_doa_gap_deg <= 0.0:
            return ang
        gaps = np.diff(np.sort(np.sin(ang)))
        if np.min(gaps) >= min_gap:
            return ang
    raise SceneGeometryError("cannot satisfy min_doa_gap inside [0, pi]")


def generate_scene(cfg: SceneConfig, carrier_hz, max_delay_s=None, rng=None):
    """Generate one randomised scene.

    Returns ``(paths, offsets)``.  Paths are ordered target by target:
    the moving path of target k comes first, followed by its static
    reflectors; the k-th non-static entry therefore always corresponds
    to target k.  When ``max_delay_s`` is given, any geometric delay
    beyond it (the CP-supported unambiguous delay) raises
    :class:`SceneGeometryError`.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)

    for _ in range(200):
        angles = _draw_target_angles(cfg, rng)
        ranges = rng.uniform(*cfg.target_range_interval, size=cfg.n_targets)
        positions = [(r * math.cos(a), r * math.sin(a))
                     for r, a in zip(ranges, angles)]
        cos_psis = [_bistatic_cos_psi(cfg.ut_pos, cfg.rru_pos, p)
                    for p in positions]
        speeds = _draw_speeds(cfg, cos_psis, rng)
        if speeds is not None:
            break
    else:
        raise SceneGeometryError(
            "cannot satisfy min_speed_gap on projected velocities")

    paths: list[PathParam] = []
    for k in range(cfg.n_targets):
        pos = positions[k]
        paths.append(path_from_geometry(
            cfg.ut_pos, cfg.rru_pos, pos, speeds[k], cfg.rcs,
            cfg.tx_power_dbm, carrier_hz, is_static=False,
            phase=rng.uniform(0.0, 2.0 * math.pi)))

        n_static = int(rng.integers(cfg.statics_per_target[0],
                                    cfg.statics_per_target[1] + 1))
        static_rcs = cfg.rcs if cfg.static_rcs is None else cfg.static_rcs
        placed = 0
        while placed < n_static:
            rad = cfg.static_scatter_radius * math.sqrt(rng.uniform())
            theta = rng.uniform(0.0, 2.0 * math.pi)
            spos = (pos[0] + rad * math.cos(theta), pos[1] + rad * math.sin(theta))
            if spos[1] < 0.0:
                continue
            try:
                paths.append(path_from_geometry(
                    cfg.ut_pos, cfg.rru_pos, spos, 0.0, static_rcs,
                    cfg.tx_power_dbm, carrier_hz, is_static=True,
                    phase=rng.uniform(0.0, 2.0 * math.pi)))
            except SceneGeometryError:
                continue
            placed += 1

    if cfg.include_los:
        paths.append(_los_path(cfg, paths, carrier_hz, rng))

    if max_delay_s is not None:
        worst = max(p.delay for p in paths)
        if worst > max_delay_s:
            raise SceneGeometryError(
                f"path delay {worst:.3e}s exceeds supported {max_delay_s:.3e}s")

    offsets = draw_offsets(cfg, carrier_hz, rng)
    return paths, offsets


def _los_path(cfg, reflected_paths, carrier_hz, rng) -> PathParam:
    """Direct UT->RRU path scaled to ``los_power_ratio`` times the total
    reflected (non-LOS) power."""
    ut = np.asarray(cfg.ut_pos, dtype=float)
    rru = np.asarray(cfg.rru_pos, dtype=float)
    dist = float(np.linalg.norm(ut - rru))
    if dist < 1e-9:
        raise SceneGeometryError("UT and RRU coincide; no LOS geometry")
    nlos_power = sum(abs(p.gain) ** 2 for p in reflected_paths)
    amp = math.sqrt(cfg.los_power_ratio * nlos_power)
    delay = dist / SPEED_OF_LIGHT
    gain = amp * np.exp(1j * rng.uniform(0.0, 2.0 * math.pi))
    return PathParam(gain=complex(gain), doa=_angle_in_half_plane(rru, ut),
                     aod=_angle_in_half_plane(ut, rru), delay=delay,
                     doppler=0.0, is_static=True)


def moving_paths(paths) -> list[PathParam]:
    """The target paths, in target order."""
    return [p for p in paths if not p.is_static]


def static_paths(paths) -> list[PathParam]:
    return [p for p in paths if p.is_static]


# ---------------------------------------------------------------------------
# scene persistence: human-readable key=value text, one path per line
# ---------------------------------------------------------------------------

def save_scene(filename, paths, offsets: OffsetState) -> None:
    with open(filename, "w") as fh:
        fh.write(f"cfo_hz={offsets.cfo_hz!r}\n")
        fh.write(f"to_s={offsets.to_s!r}\n")
        fh.write(f"n_paths={len(paths)}\n")
        fh.write("# pathK=gain_re,gain_im,doa,aod,delay,doppler,is_static\n")
        for k, p in enumerate(paths):
            fields = (p.gain.real, p.gain.imag, p.doa, p.aod, p.delay,
                      p.doppler, int(p.is_static))
            fh.write(f"path{k}=" + ",".join(repr(v) for v in fields) + "\n")


def load_scene(filename):
    values = {}
    with open(filename) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            values[key] = val
    offsets = OffsetState(cfo_hz=float(values["cfo_hz"]),
                          to_s=float(values["to_s"]))
    n = int(values["n_paths"])
    paths = []
    for k in range(n):
        gre, gim, doa, aod, delay, doppler, is_static = values[f"path{k}"].split(",")
        paths.append(PathParam(
            gain=complex(float(gre), float(gim)), doa=float(doa),
            aod=float(aod), delay=float(delay), doppler=float(doppler),
            is_static=bool(int(is_static))))
    return paths, offsets
