"""Cell layout, user drops and large-scale fading.

Two layouts are supported:

* ``I == 7``: the classical 7-cell hexagonal cluster, wrapped around by the
  six translations of the cluster onto itself.
* any other ``I``: a row of ``I`` hexagonal cells with period ``I * ISD``
  along x (a 1-D ring).  A single cell has no mirrors.

Hexagons are pointy-top with circumradius ``cell_radius``, so the
inter-site distance is ``sqrt(3) * cell_radius``.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .rng import stream

MIN_DISTANCE = 10.0


def dbm_to_watts(x):
    """Convert dBm to watts."""
    w = 10.0 ** ((np.asarray(x, dtype=float) - 30.0) / 10.0)
    return float(w) if w.ndim == 0 else w


def watts_to_dbm(x):
    return 10.0 * np.log10(x) + 30.0


@dataclass(frozen=True)
class ScenarioConfig:
    num_cells: int = 7
    users_per_cell: tuple = (9,) * 7
    antennas: int = 96
    cell_radius: float = 500.0
    pmax_dbm: float = 10.0
    noise_psd_dbm_hz: float = -169.0
    bandwidth_hz: float = 1e6
    pathloss_exponent: float = 3.0
    shadowing_std_db: float = 8.0
    seed: int = 0
    min_distance: float = MIN_DISTANCE

    def __post_init__(self):
        k = self.users_per_cell
        if np.ndim(k) == 0:
            k = (int(k),) * int(self.num_cells)
        object.__setattr__(self, "users_per_cell", tuple(int(x) for x in k))
        self.validate()

    def validate(self):
        if int(self.num_cells) < 1:
            raise ValueError("num_cells must be >= 1")
        if len(self.users_per_cell) != self.num_cells:
            raise ValueError(
                f"users_per_cell has {len(self.users_per_cell)} entries, expected num_cells={self.num_cells}"
            )
        if min(self.users_per_cell) < 1:
            raise ValueError("users_per_cell entries must be >= 1")
        if int(self.antennas) < 1:
            raise ValueError("antennas must be >= 1")
        if not self.cell_radius > 0:
            raise ValueError("cell_radius must be > 0")
        if not self.bandwidth_hz > 0:
            raise ValueError("bandwidth_hz must be > 0")
        if not self.shadowing_std_db >= 0:
            raise ValueError("shadowing_std_db must be >= 0")
        if not self.min_distance > 0:
            raise ValueError("min_distance must be > 0")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        for name in ("pmax_dbm", "noise_psd_dbm_hz", "pathloss_exponent"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def pmax(self):
        return dbm_to_watts(self.pmax_dbm)

    @property
    def noise_power(self):
        return dbm_to_watts(self.noise_psd_dbm_hz + 10.0 * math.log10(self.bandwidth_hz))

    @property
    def num_users(self):
        return sum(self.users_per_cell)

    @property
    def isd(self):
        return math.sqrt(3.0) * self.cell_radius

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        if "num_cells" in changes and "users_per_cell" not in changes:
            d["users_per_cell"] = self.users_per_cell[0]
        return ScenarioConfig(**d)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class NetworkScenario:
    """Geometry and large-scale fading of one network drop.

    ``large_scale[j, u]`` is the gain from flat user ``u`` to BS ``j``; users
    are numbered cell-major.
    """

    config: ScenarioConfig
    bs_positions: np.ndarray
    user_positions: np.ndarray
    large_scale: np.ndarray
    distances: np.ndarray
    noise_power: float
    user_cell: np.ndarray = field(init=False)

    def __post_init__(self):
        cells = np.repeat(np.arange(self.config.num_cells), self.config.users_per_cell)
        object.__setattr__(self, "user_cell", cells)
        for name in ("bs_positions", "user_positions", "large_scale", "distances"):
            getattr(self, name).setflags(write=False)

    @property
    def num_cells(self):
        return self.config.num_cells

    @property
    def num_users(self):
        return self.config.num_users

    @property
    def antennas(self):
        return self.config.antennas

    @property
    def pmax(self):
        return self.config.pmax

    def cell_slices(self):
        edges = np.concatenate([[0], np.cumsum(self.config.users_per_cell)])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    @property
    def own_gain(self):
        """``v_{i,ik}`` for every user, i.e. the gain to its serving BS."""
        return self.large_scale[self.user_cell, np.arange(self.num_users)]

    def with_antennas(self, m):
        return NetworkScenario(
            self.config.replace(antennas=int(m)),
            self.bs_positions, self.user_positions,
            self.large_scale, self.distances, self.noise_power,
        )

    def normalized(self):
        """Same scenario rescaled so that the noise power is 1.

        Every SINR is invariant under this rescaling.
        """
        return NetworkScenario(
            self.config, self.bs_positions, self.user_positions,
            self.large_scale / self.noise_power, self.distances, 1.0,
        )

    def to_dict(self):
        cfg = asdict(self.config)
        cfg["users_per_cell"] = list(cfg["users_per_cell"])
        return {
            "config": cfg,
            "bs_positions": self.bs_positions.tolist(),
            "user_positions": self.user_positions.tolist(),
            "large_scale": self.large_scale.tolist(),
            "distances": self.distances.tolist(),
            "noise_power": self.noise_power,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        config = ScenarioConfig.from_dict(d["config"])
        scen = cls(
            config,
            np.array(d["bs_positions"], dtype=float),
            np.array(d["user_positions"], dtype=float),
            np.array(d["large_scale"], dtype=float),
            np.array(d["distances"], dtype=float),
            float(d["noise_power"]),
        )
        n = config.num_users
        if scen.large_scale.shape != (config.num_cells, n) or scen.user_positions.shape != (n, 2):
            raise ValueError("scenario arrays do not match config dimensions")
        return scen

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def bs_layout(config):
    """BS coordinates, shape ``(I, 2)``."""
    d = config.isd
    if config.num_cells == 7:
        ang = np.arange(6) * np.pi / 3
        ring = d * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        return np.vstack([np.zeros((1, 2)), ring])
    x = d * np.arange(config.num_cells)
    return np.stack([x, np.zeros_like(x)], axis=1)


def mirror_shifts(config):
    """Translations (including zero) under which the layout wraps onto itself."""
    d = config.isd
    if config.num_cells == 7:
        # cluster translation 2*e1 + e2 of the hexagonal lattice, |t| = sqrt(7)*ISD
        t = d * np.array([2.5, math.sqrt(3.0) / 2])
        ang = np.arange(6) * np.pi / 3
        c, s = np.cos(ang), np.sin(ang)
        rot = np.stack([c * t[0] - s * t[1], s * t[0] + c * t[1]], axis=1)
        return np.vstack([np.zeros((1, 2)), rot])
    if config.num_cells == 1:
        return np.zeros((1, 2))
    period = d * config.num_cells
    return np.array([[0.0, 0.0], [period, 0.0], [-period, 0.0]])


def wrap_distance(a, b, scenario_or_config):
    """Wrap-around distance between points ``a`` and ``b``.

    Broadcasts over leading dimensions.  The result is clamped below at the
    configured minimum distance.
    """
    config = getattr(scenario_or_config, "config", scenario_or_config)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    diff = (a - b)[..., None, :] + mirror_shifts(config)
    d = np.sqrt(np.min(np.sum(diff**2, axis=-1), axis=-1))
    return np.maximum(d, config.min_distance)


def in_hexagon(points, center, radius):
    """Membership test for a pointy-top hexagon of circumradius ``radius``."""
    p = np.abs(np.asarray(points, dtype=float) - center)
    x, y = p[..., 0], p[..., 1]
    h = math.sqrt(3.0) / 2 * radius
    return (x <= h * (1 + 1e-12)) & (x / math.sqrt(3.0) + y <= radius * (1 + 1e-12))


def _drop_users(rng, center, radius, count):
    h = math.sqrt(3.0) / 2 * radius
    out = np.empty((0, 2))
    while len(out) < count:
        cand = rng.uniform([-h, -radius], [h, radius], size=(2 * count + 4, 2))
        cand = cand[in_hexagon(cand, 0.0, radius)]
        out = np.vstack([out, cand])
    return out[:count] + center


def build_scenario(config, user_positions, shadow_db=None):
    """Scenario from explicit user positions and shadowing (dB, shape ``(I, N)``)."""
    bs = bs_layout(config)
    users = np.asarray(user_positions, dtype=float)
    if users.shape != (config.num_users, 2):
        raise ValueError(f"user_positions must have shape ({config.num_users}, 2)")
    dist = wrap_distance(users[None, :, :], bs[:, None, :], config)
    if shadow_db is None:
        shadow_db = np.zeros_like(dist)
    v = 10.0 ** (np.asarray(shadow_db) / 10.0) / dist**config.pathloss_exponent
    return NetworkScenario(config, bs, users, v, dist, config.noise_power)


def generate_scenario(config):
    """Random network drop; a pure function of ``config`` (seed included)."""
    if config.num_cells < 1 or min(config.users_per_cell) < 1:
        raise ValueError("need at least one cell and one user per cell")
    rng = stream(config.seed, "scenario")
    bs = bs_layout(config)
    users = np.vstack([
        _drop_users(rng, bs[i], config.cell_radius, k)
        for i, k in enumerate(config.users_per_cell)
    ])
    shadow = config.shadowing_std_db * rng.standard_normal((config.num_cells, config.num_users))
    return build_scenario(config, users, shadow)
