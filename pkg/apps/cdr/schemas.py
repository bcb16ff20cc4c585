from dataclasses import dataclass
from typing import Literal

from pydantic import Field

from apps.common.schemas import DiagnosticsSchema, StrictSchema
from apps.geo.schemas import GeoPoint

CDR_COLUMNS = ["user_id", "timestamp", "lon", "lat"]
CDR_TOWER_COLUMNS = ["user_id", "timestamp", "tower_id"]
TOWER_COLUMNS = ["tower_id", "lon", "lat"]


@dataclass(frozen=True, slots=True)
class EventRecord:
    user_id: str
    t: float
    pos: GeoPoint


@dataclass(frozen=True, slots=True)
class UserStats:
    user_id: str
    n_events: int
    inter_event_mean_min: float | None = None
    quartiles_min: tuple[float, float, float] | None = None


@dataclass(frozen=True, slots=True)
class VirtualLocation:
    centroid: GeoPoint
    t_first: float
    t_last: float
    n_records: int

    @property
    def dwell_s(self) -> float:
        return self.t_last - self.t_first


@dataclass(frozen=True, slots=True)
class DwellCluster(VirtualLocation):
    """A virtual location with at least two records and a dwell above the threshold."""


@dataclass(frozen=True, slots=True)
class Trip:
    user_id: str
    origin: DwellCluster
    dest: DwellCluster
    origin_district: int | None = None
    dest_district: int | None = None

    @property
    def start_t(self) -> float:
        return self.origin.t_last

    @property
    def end_t(self) -> float:
        return self.dest.t_first


class CdrSchema(StrictSchema):
    ts_format: Literal["unix", "rfc3339"] = "unix"
    # tower_id -> (lon, lat); when set the log is read in tower mode
    towers: dict[str, tuple[float, float]] | None = None
    max_malformed_fraction: float = Field(0.01, ge=0.0, le=1.0)
    study_start: float | None = None
    study_end: float | None = None
    chunk_rows: int = Field(1_000_000, ge=1)

    @property
    def columns(self) -> list[str]:
        return CDR_TOWER_COLUMNS if self.towers is not None else CDR_COLUMNS


class ParseDiagnostics(DiagnosticsSchema):
    n_lines: int = 0
    n_records: int = 0
    n_malformed: int = 0
    n_out_of_window: int = 0
    n_bytes: int = 0


class TripDiagnostics(DiagnosticsSchema):
    n_users: int = 0
    n_virtual_locations: int = 0
    n_clusters: int = 0
    n_trips: int = 0
    n_trips_without_district: int = 0
    n_trips_dropped_nonpositive: int = 0


class StatsDiagnostics(DiagnosticsSchema):
    n_users: int = 0
    n_users_single_event: int = 0
    n_frequent: int = 0
