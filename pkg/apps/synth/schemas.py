import json
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Literal

import pandas as pd
from pydantic import Field, ValidationError as PydanticValidationError, field_validator, model_validator

from apps.common.exceptions import InputError, config_errors
from apps.common.schemas import DiagnosticsSchema, StrictSchema
from apps.common.utils import require_file
from apps.geo.schemas import GeoPoint
from apps.od.matrix import ODMatrix
from apps.od.windows import DEFAULT_WINDOWS, zone

TRUTH_TRIP_COLUMNS = [
    "user_id",
    "card_id",
    "mode",
    "frequent",
    "start_t",
    "end_t",
    "origin_district",
    "dest_district",
    "origin_lon",
    "origin_lat",
    "dest_lon",
    "dest_lat",
    "displacement_m",
]
AGENT_COLUMNS = [
    "user_id",
    "card_id",
    "frequent",
    "home_district",
    "work_district",
    "home_lon",
    "home_lat",
    "work_lon",
    "work_lat",
]
TOWER_FILE_COLUMNS = ["tower_id", "lon", "lat"]

PUBLIC, PRIVATE = "public", "private"


class WorldSpec(StrictSchema):
    """
    A synthetic city: a grid of rectangular districts, commuting agents and
    their phone and smart-card traces. Everything is a function of ``seed``.
    """

    seed: int = 0
    rows: int = Field(2, ge=1)
    cols: int = Field(3, ge=1)
    # 12.9 km2, the average district of a 710 km2 city split in 55
    cell_m: float = Field(3592.0, gt=0)
    origin: tuple[float, float] = (103.82, 1.35)

    n_agents: int = Field(100, ge=0)
    frequent_fraction: float = Field(0.5, ge=0, le=1)
    frequent_gap_min: float = Field(10.0, gt=0)
    infrequent_gap_min: float = Field(300.0, gt=0)
    # agent i lives in home_districts[i % len] when given
    home_districts: list[int] | None = None
    work_districts: list[int] | None = None

    n_days: int = Field(5, ge=1)
    start_date: date = date(2011, 4, 4)
    timezone: str = "Asia/Singapore"
    regime: Literal["detectable", "naturalistic"] = "detectable"

    public_share: dict[str, float] = Field(default_factory=lambda: {"morning": 0.38, "midday": 0.44, "evening": 0.52})
    midday_trip_prob: float = Field(0.2, ge=0, le=1)
    transfer_prob: float = Field(0.2, ge=0, le=1)
    stations_per_district: int = Field(3, ge=0)
    towers_per_side: int = Field(4, ge=1)
    min_trip_m: float = Field(2500.0, ge=0)
    boundary_transfers: bool = True

    @field_validator("timezone")
    @classmethod
    def known_timezone(cls, value):
        zone(value)
        return value

    @field_validator("public_share")
    @classmethod
    def window_shares(cls, value):
        if set(value) != set(DEFAULT_WINDOWS):
            raise ValueError(f"Expected shares for {sorted(DEFAULT_WINDOWS)}")
        if any(not 0 <= share <= 1 for share in value.values()):
            raise ValueError("Shares must lie in [0, 1]")
        return value

    @model_validator(mode="after")
    def layout(self):
        n_districts = self.rows * self.cols
        if n_districts < 2:
            raise ValueError("The grid needs at least two districts")
        for districts in (self.home_districts, self.work_districts):
            if districts is not None and (not districts or any(not 0 <= d < n_districts for d in districts)):
                raise ValueError(f"District ids must lie in 0..{n_districts - 1}")
        return self

    @property
    def n_districts(self) -> int:
        return self.rows * self.cols

    @property
    def origin_point(self) -> GeoPoint:
        return GeoPoint(lon=self.origin[0], lat=self.origin[1])

    @classmethod
    def load(cls, path) -> "WorldSpec":
        path = require_file(path)
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise InputError(f"{path}: not a JSON document ({exc})")
        try:
            return cls.model_validate(data)
        except PydanticValidationError as exc:
            raise config_errors(exc)


@dataclass
class GroundTruth:
    """
    Every trip of every agent and the exact hourly OD matrices built from
    them; ``overall`` is ``public + private`` cell by cell.
    """

    trips: pd.DataFrame
    agents: pd.DataFrame
    span: tuple[float, float]
    overall: list[ODMatrix] = field(default_factory=list)
    public: list[ODMatrix] = field(default_factory=list)
    private: list[ODMatrix] = field(default_factory=list)
    # trips of frequent agents only: what trip extraction can recover
    frequent_overall: list[ODMatrix] = field(default_factory=list)


class WorldDiagnostics(DiagnosticsSchema):
    n_agents: int = 0
    n_frequent: int = 0
    n_events: int = 0
    n_legs: int = 0
    n_trips: int = 0
    n_public_trips: int = 0
    n_stations: int = 0
    n_towers: int = 0


class ComparisonReport(StrictSchema):
    truth_total: float
    inferred_total: float
    # None when the truth is empty but the inference is not
    relative_error: float | None
    cellwise_l1: float
    n_windows: int = 1
    n_windows_exact: int = 0
    mode_share_error: dict[str, float | None] = Field(default_factory=dict)
    recall: dict[str, dict] = Field(default_factory=dict)
