from dataclasses import dataclass

from shapely.geometry import Polygon


@dataclass(frozen=True, slots=True)
class GeoPoint:
    lon: float
    lat: float

    def __post_init__(self):
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"lon {self.lon} outside [-180, 180]")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"lat {self.lat} outside [-90, 90]")


@dataclass(frozen=True, slots=True)
class LocalXY:
    """Meters east (x) and north (y) of a projection origin."""

    x: float
    y: float


@dataclass(frozen=True)
class District:
    district_id: int
    name: str
    polygon: Polygon
