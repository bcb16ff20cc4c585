from dataclasses import dataclass
from typing import Literal

from pydantic import Field

from apps.common.schemas import DiagnosticsSchema, StrictSchema

LEG_COLUMNS = ["card_id", "board_time", "alight_time", "board_station", "alight_station"]
STATION_COLUMNS = ["station_id", "lon", "lat"]
JOURNEY_COLUMNS = ["card_id", "origin_station", "dest_station", "start_t", "end_t", "n_legs"]


@dataclass(frozen=True, slots=True)
class SmartCardLeg:
    card_id: str
    board_t: float
    alight_t: float
    board_station: str
    alight_station: str


@dataclass(frozen=True, slots=True)
class Journey:
    card_id: str
    origin_station: str
    dest_station: str
    start_t: float
    end_t: float
    n_legs: int


class LegSchema(StrictSchema):
    ts_format: Literal["unix", "rfc3339"] = "unix"
    max_malformed_fraction: float = Field(0.01, ge=0.0, le=1.0)
    chunk_rows: int = Field(1_000_000, ge=1)


class LegDiagnostics(DiagnosticsSchema):
    n_lines: int = 0
    n_legs: int = 0
    n_malformed: int = 0
    n_bytes: int = 0


class JourneyDiagnostics(DiagnosticsSchema):
    n_legs: int = 0
    n_overlapping: int = 0
    n_accepted: int = 0
    n_journeys: int = 0
    n_multi_leg: int = 0
