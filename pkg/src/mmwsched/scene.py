"""Synthetic urban scene: sites, buildings, moving blockers and the user track.

Moving objects follow straight lines at constant speed and wrap around the
area edges. Positions are evaluated in closed form from the scene clock, so a
``Scene`` is an immutable snapshot and :func:`advance` only moves the clock.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .antenna import BeamCodebook
from .geometry import segment_hits_aabb, segment_hits_oriented


class ConfigError(ValueError):
    """Invalid scene or run configuration."""


KMH = 1.0 / 3.6


@dataclass(frozen=True)
class ObstacleClass:
    width: float
    length: float
    height: float
    speed_kmh: float


# Pedestrian footprint is not given by the source scenario; 0.5 m x 0.5 m assumed.
OBSTACLE_CLASSES: dict[str, ObstacleClass] = {
    "pedestrian": ObstacleClass(width=0.5, length=0.5, height=1.75, speed_kmh=3.0),
    "small-vehicle": ObstacleClass(width=2.2, length=4.0, height=1.8, speed_kmh=50.0),
    "large-vehicle": ObstacleClass(width=2.2, length=8.0, height=3.0, speed_kmh=30.0),
}
CLASS_NAMES = tuple(OBSTACLE_CLASSES)


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass
class SiteConfig:
    position: tuple[float, float, float]
    boresight_deg: float = 0.0
    codebook: str = "default"


@dataclass
class BuildingConfig:
    xmin: float
    ymin: float
    xmax: float
    ymax: float
    height: float


@dataclass
class UserConfig:
    kind: str = "small-vehicle"
    # start position is drawn uniformly inside this rectangle
    region: tuple[float, float, float, float] = (0.0, 32.0, 200.0, 48.0)
    directions_deg: tuple[float, ...] = (0.0, 180.0)
    height: float = 1.5
    speed_kmh: Optional[float] = None


def _default_aps() -> list[SiteConfig]:
    return [
        SiteConfig((50.0, 28.5, 10.0), 90.0),
        SiteConfig((150.0, 28.5, 10.0), 90.0),
        SiteConfig((100.0, 51.5, 10.0), -90.0),
    ]


def _default_buildings() -> list[BuildingConfig]:
    # a 20 m main street (y in 28..52) crossed by a 14 m side street (x in 93..107)
    return [
        BuildingConfig(5.0, 5.0, 93.0, 28.0, 25.0),
        BuildingConfig(107.0, 5.0, 195.0, 28.0, 25.0),
        BuildingConfig(5.0, 52.0, 93.0, 75.0, 30.0),
        BuildingConfig(107.0, 52.0, 195.0, 75.0, 30.0),
    ]


@dataclass
class SceneConfig:
    area: tuple[float, float, float, float] = (0.0, 0.0, 200.0, 80.0)
    aps: list[SiteConfig] = field(default_factory=_default_aps)
    lb: SiteConfig = field(default_factory=lambda: SiteConfig((100.0, 40.0, 10.0)))
    buildings: list[BuildingConfig] = field(default_factory=_default_buildings)
    # obstacles per square metre of open (non-building) ground
    densities: dict[str, float] = field(
        default_factory=lambda: {"pedestrian": 0.03, "small-vehicle": 0.005, "large-vehicle": 0.005}
    )
    # optional per-class speed override, km/h
    speeds_kmh: dict[str, float] = field(default_factory=dict)
    codebooks: dict[str, BeamCodebook] = field(default_factory=lambda: {"default": BeamCodebook()})
    user: UserConfig = field(default_factory=UserConfig)
    seed: int = 0

    def validate(self) -> None:
        x0, y0, x1, y1 = self.area
        if not (x1 > x0 and y1 > y0):
            raise ConfigError(f"area {self.area} has zero or negative extent")
        if len(self.aps) < 1:
            raise ConfigError("at least one mmAP is required")
        for name, rho in self.densities.items():
            if name not in OBSTACLE_CLASSES:
                raise ConfigError(f"unknown obstacle class {name!r}")
            if rho < 0:
                raise ConfigError(f"negative density for {name}")
        for name, v in self.speeds_kmh.items():
            if name not in OBSTACLE_CLASSES or v < 0:
                raise ConfigError(f"bad speed override {name}={v}")
        for site in [*self.aps, self.lb]:
            x, y, z = site.position
            if not (x0 <= x <= x1 and y0 <= y <= y1):
                raise ConfigError(f"site {site.position} outside area")
            if z <= 0:
                raise ConfigError("site heights must be positive")
            if site.codebook not in self.codebooks:
                raise ConfigError(f"unknown codebook {site.codebook!r}")
        for b in self.buildings:
            if not (b.xmax > b.xmin and b.ymax > b.ymin and b.height > 0):
                raise ConfigError(f"degenerate building {b}")
            if b.xmin < x0 or b.ymin < y0 or b.xmax > x1 or b.ymax > y1:
                raise ConfigError(f"building {b} outside area")
        if self.user.kind not in ("pedestrian", "small-vehicle", "large-vehicle"):
            raise ConfigError(f"unknown user class {self.user.kind!r}")
        if self.user.height <= 0:
            raise ConfigError("user height must be positive")
        ux0, uy0, ux1, uy1 = self.user.region
        if not (x0 <= ux0 <= ux1 <= x1 and y0 <= uy0 <= uy1 <= y1):
            raise ConfigError("user region must lie inside the area")
        if not self.user.directions_deg:
            raise ConfigError("user needs at least one direction")


# --------------------------------------------------------------------------
# scene snapshot
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Site:
    position: np.ndarray  # (3,)
    boresight_deg: float
    codebook: BeamCodebook


@dataclass(frozen=True)
class Building:
    lo: np.ndarray  # (3,), z = 0
    hi: np.ndarray  # (3,)


@dataclass(frozen=True)
class MovingObstacle:
    kind: str
    width: float
    length: float
    height: float
    position: tuple[float, float]
    heading: tuple[float, float]
    speed: float  # m/s

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("speed must be non-negative")
        if min(self.width, self.length, self.height) <= 0:
            raise ValueError("obstacle dimensions must be positive")

    @classmethod
    def of_class(cls, kind: str, position, heading, speed_kmh: Optional[float] = None) -> "MovingObstacle":
        shape = OBSTACLE_CLASSES[kind]
        h = np.asarray(heading, dtype=float)
        h = h / np.linalg.norm(h)
        v = shape.speed_kmh if speed_kmh is None else speed_kmh
        return cls(kind, shape.width, shape.length, shape.height,
                   (float(position[0]), float(position[1])), (float(h[0]), float(h[1])), v * KMH)


@dataclass(frozen=True, eq=False)
class Fleet:
    """Struct-of-arrays storage for the moving obstacles at time zero."""

    kind: np.ndarray  # (n,) index into CLASS_NAMES
    width: np.ndarray
    length: np.ndarray
    height: np.ndarray
    start: np.ndarray  # (n, 2)
    heading: np.ndarray  # (n, 2), unit
    speed: np.ndarray  # (n,), m/s

    @classmethod
    def empty(cls) -> "Fleet":
        z = np.zeros(0)
        return cls(np.zeros(0, dtype=np.int8), z, z, z, np.zeros((0, 2)), np.zeros((0, 2)), z)

    @classmethod
    def from_obstacles(cls, obstacles) -> "Fleet":
        obstacles = list(obstacles)
        if not obstacles:
            return cls.empty()
        return cls(
            kind=np.array([CLASS_NAMES.index(o.kind) for o in obstacles], dtype=np.int8),
            width=np.array([o.width for o in obstacles], dtype=float),
            length=np.array([o.length for o in obstacles], dtype=float),
            height=np.array([o.height for o in obstacles], dtype=float),
            start=np.array([o.position for o in obstacles], dtype=float).reshape(-1, 2),
            heading=np.array([o.heading for o in obstacles], dtype=float).reshape(-1, 2),
            speed=np.array([o.speed for o in obstacles], dtype=float),
        )

    def __len__(self) -> int:
        return len(self.speed)

    @property
    def radius(self) -> np.ndarray:
        """Half diagonal of each footprint."""
        return 0.5 * np.hypot(self.length, self.width)

    def subset(self, keep) -> "Fleet":
        keep = np.asarray(keep)
        return Fleet(*(getattr(self, f.name)[keep] for f in dataclasses.fields(self)))


@dataclass(frozen=True)
class UserTrack:
    kind: str
    start: np.ndarray  # (2,)
    heading: np.ndarray  # (2,)
    speed: float  # m/s
    height: float = 1.5


def wrap_xy(p: np.ndarray, area) -> np.ndarray:
    x0, y0, x1, y1 = area
    origin = np.array([x0, y0])
    size = np.array([x1 - x0, y1 - y0])
    return origin + np.mod(p - origin, size)


@dataclass(frozen=True, eq=False)
class Scene:
    area: tuple[float, float, float, float]
    aps: tuple[Site, ...]
    lb: Site
    buildings: tuple[Building, ...]
    fleet: Fleet
    user: UserTrack
    seed: int = 0
    time: float = 0.0

    @property
    def n_aps(self) -> int:
        return len(self.aps)

    @property
    def n_beams(self) -> int:
        return self.aps[0].codebook.n_beams

    def obstacle_positions(self, times) -> np.ndarray:
        """Obstacle centres at the given times, shape (*times.shape, n, 2)."""
        t = np.asarray(times, dtype=float)[..., None, None]
        f = self.fleet
        return wrap_xy(f.start + f.heading * (f.speed[:, None] * t), self.area)

    def user_positions(self, times) -> np.ndarray:
        """User antenna positions, shape (*times.shape, 3)."""
        t = np.asarray(times, dtype=float)[..., None]
        u = self.user
        xy = wrap_xy(u.start + u.heading * (u.speed * t), self.area)
        z = np.full(xy.shape[:-1] + (1,), u.height)
        return np.concatenate([xy, z], axis=-1)

    @property
    def user_position(self) -> np.ndarray:
        return self.user_positions(self.time)

    @property
    def obstacles(self) -> tuple[MovingObstacle, ...]:
        pos = self.obstacle_positions(self.time)
        f = self.fleet
        return tuple(
            MovingObstacle(CLASS_NAMES[f.kind[i]], float(f.width[i]), float(f.length[i]), float(f.height[i]),
                           (float(pos[i, 0]), float(pos[i, 1])), (float(f.heading[i, 0]), float(f.heading[i, 1])),
                           float(f.speed[i]))
            for i in range(len(f))
        )

    @property
    def building_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.buildings:
            return np.zeros((0, 3)), np.zeros((0, 3))
        return np.array([b.lo for b in self.buildings]), np.array([b.hi for b in self.buildings])

    def with_fleet(self, fleet: Fleet) -> "Scene":
        return dataclasses.replace(self, fleet=fleet)

    def with_obstacles(self, obstacles) -> "Scene":
        """Replace the moving obstacles; positions are taken as the current ones."""
        fleet = Fleet.from_obstacles(obstacles)
        # rewind so that the given positions hold at the current clock
        start = fleet.start - fleet.heading * (fleet.speed[:, None] * self.time)
        return self.with_fleet(dataclasses.replace(fleet, start=start))

    def with_buildings(self, boxes) -> "Scene":
        """Replace the fixed obstacles by (lo, hi) corner pairs."""
        return dataclasses.replace(
            self, buildings=tuple(Building(np.asarray(lo, float), np.asarray(hi, float)) for lo, hi in boxes))


def _site(cfg: SiteConfig, codebooks) -> Site:
    return Site(np.asarray(cfg.position, dtype=float), float(cfg.boresight_deg), codebooks[cfg.codebook])


def open_area(config: SceneConfig) -> float:
    x0, y0, x1, y1 = config.area
    total = (x1 - x0) * (y1 - y0)
    return total - sum((b.xmax - b.xmin) * (b.ymax - b.ymin) for b in config.buildings)


def _inside_buildings(xy: np.ndarray, buildings) -> np.ndarray:
    inside = np.zeros(len(xy), dtype=bool)
    for b in buildings:
        inside |= (xy[:, 0] >= b.xmin) & (xy[:, 0] <= b.xmax) & (xy[:, 1] >= b.ymin) & (xy[:, 1] <= b.ymax)
    return inside


def _drop_points(rng: np.random.Generator, n: int, config: SceneConfig) -> np.ndarray:
    x0, y0, x1, y1 = config.area
    out = np.zeros((0, 2))
    while len(out) < n:
        cand = rng.uniform([x0, y0], [x1, y1], size=(max(2 * (n - len(out)), 16), 2))
        cand = cand[~_inside_buildings(cand, config.buildings)]
        out = np.concatenate([out, cand])
    return out[:n]


def build_scene(config: SceneConfig) -> Scene:
    """Instantiate a scene; obstacle drops and the user track depend only on ``config.seed``."""
    config.validate()
    if open_area(config) <= 0:
        raise ConfigError("buildings cover the whole area")
    rng = np.random.default_rng(config.seed)

    obstacles: list[MovingObstacle] = []
    for kind in CLASS_NAMES:
        rho = config.densities.get(kind, 0.0)
        n = int(rng.poisson(rho * open_area(config))) if rho > 0 else 0
        if n == 0:
            continue
        pos = _drop_points(rng, n, config)
        ang = rng.uniform(0.0, 2.0 * np.pi, size=n)
        for p, a in zip(pos, ang):
            obstacles.append(MovingObstacle.of_class(kind, p, (np.cos(a), np.sin(a)), config.speeds_kmh.get(kind)))

    u = config.user
    ux0, uy0, ux1, uy1 = u.region
    start = rng.uniform([ux0, uy0], [ux1, uy1])
    direction = np.deg2rad(u.directions_deg[int(rng.integers(len(u.directions_deg)))])
    speed_kmh = OBSTACLE_CLASSES[u.kind].speed_kmh if u.speed_kmh is None else u.speed_kmh
    user = UserTrack(u.kind, start, np.array([np.cos(direction), np.sin(direction)]), speed_kmh * KMH, u.height)

    return Scene(
        area=tuple(float(v) for v in config.area),
        aps=tuple(_site(s, config.codebooks) for s in config.aps),
        lb=_site(config.lb, config.codebooks),
        buildings=tuple(
            Building(np.array([b.xmin, b.ymin, 0.0]), np.array([b.xmax, b.ymax, b.height])) for b in config.buildings
        ),
        fleet=Fleet.from_obstacles(obstacles),
        user=user,
        seed=config.seed,
    )


def advance(scene: Scene, dt: float) -> Scene:
    """Move the scene clock forward by ``dt`` seconds."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return dataclasses.replace(scene, time=scene.time + dt)


def segment_blocked(a, b, scene: Scene) -> bool:
    """True iff the open segment a-b crosses a building or a moving obstacle at the scene time."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.array_equal(a, b):
        raise ValueError("segment endpoints coincide")
    lo, hi = scene.building_bounds
    if len(lo) and segment_hits_aabb(a, b, lo, hi).any():
        return True
    f = scene.fleet
    if len(f) == 0:
        return False
    centers = scene.obstacle_positions(scene.time)
    return bool(segment_hits_oriented(a, b, centers, f.heading, f.length, f.width, f.height).any())
