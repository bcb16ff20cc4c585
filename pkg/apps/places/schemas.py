from dataclasses import dataclass

import numpy as np
from pydantic import Field

from apps.common.schemas import DiagnosticsSchema, StrictSchema
from apps.geo.schemas import GeoPoint

PLACE_COLUMNS = ["user_id", "rank", "lon", "lat", "share", "district_id"]
PLACE_COUNT_COLUMNS = ["district_id", "name", "frequent_places", "all_places", "phi"]


@dataclass(frozen=True, slots=True)
class SignificantPlace:
    user_id: str
    rank: int
    centroid: GeoPoint
    share: float
    n_events: int
    district: int | None = None


@dataclass
class DistrictShares:
    """
    Place counts per district: ``m`` for very frequent users, ``n`` for all
    users. Places outside every district are only counted in the ``*_none``
    totals.
    """

    m: np.ndarray
    n: np.ndarray
    m_none: int = 0
    n_none: int = 0

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=np.int64)
        self.n = np.asarray(self.n, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.n)

    @property
    def phi_i(self) -> np.ndarray:
        """m_i / n_i, 0 where the district hosts no place."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.n > 0, self.m / np.maximum(self.n, 1), 0.0)

    @property
    def phi(self) -> float:
        total = int(self.n.sum())
        return float(self.m.sum()) / total if total else 0.0

    @property
    def empty_districts(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.n == 0)]


class PlaceSchema(StrictSchema):
    radius_m: float = Field(1000.0, gt=0)
    min_share: float = Field(0.15, ge=0.0, le=1.0)
    max_iter: int = Field(50, ge=1)


class PlaceDiagnostics(DiagnosticsSchema):
    n_users: int = 0
    n_users_without_places: int = 0
    n_places: int = 0
    n_places_without_district: int = 0
    n_not_converged: int = 0
