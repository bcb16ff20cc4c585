import json
from datetime import date
from pathlib import Path
from typing import Literal

from django.conf import settings
from pydantic import Field, ValidationError as PydanticValidationError, field_validator, model_validator

from apps.analysis.distance import MIN_SAMPLES
from apps.common.exceptions import InputError, config_errors
from apps.common.schemas import StrictSchema
from apps.common.utils import hash_params, require_file
from apps.od.windows import DEFAULT_WINDOWS, WORKDAYS, zone


def _default(key: str):
    return Field(default_factory=lambda: settings.ODFLOW[key])


class RunConfig(StrictSchema):
    """
    Everything a pipeline run depends on. Written verbatim into the manifest
    and every matrix sidecar; its hash identifies the run.
    """

    # inputs and outputs
    cdr: str
    districts: str
    legs: str
    stations: str
    towers: str | None = None
    out_dir: str

    # parsing
    ts_format: Literal["unix", "rfc3339"] = "unix"
    max_malformed_fraction: float = _default("MAX_MALFORMED_FRACTION")
    study_start: float | None = None
    study_end: float | None = None

    # trips, places and journeys
    delta_d_m: float = _default("DELTA_D_M")
    delta_t_min: float = _default("DELTA_T_MIN")
    frequent_threshold_min: float = _default("FREQUENT_THRESHOLD_MIN")
    radius_m: float = _default("RADIUS_M")
    min_share: float = _default("MIN_SHARE")
    max_iter: int = _default("MAX_ITER")
    transfer_min: float = _default("TRANSFER_MIN")

    # scaling; frequent_share None means the measured phi
    upscale: bool = True
    market_share: float = _default("MARKET_SHARE")
    penetration: float = _default("PENETRATION")
    frequent_share: float | None = _default("FREQUENT_SHARE")

    # time
    granularity_s: int = Field(3600, gt=0)
    windows: dict[str, tuple[float, float]] = Field(default_factory=lambda: dict(DEFAULT_WINDOWS))
    timezone: str = _default("TIMEZONE")
    workdays: list[int] = Field(default_factory=lambda: list(WORKDAYS))
    holidays: list[date] = Field(default_factory=list)

    # analysis
    top_k: int = _default("TOP_K")
    intra_samples: int = _default("INTRA_SAMPLES")
    seed: int = _default("SEED")

    workers: int = _default("WORKERS")

    @field_validator("max_malformed_fraction", "min_share")
    @classmethod
    def fraction(cls, value):
        if not 0 <= value <= 1:
            raise ValueError("Must lie in [0, 1]")
        return value

    @field_validator("delta_d_m", "delta_t_min", "frequent_threshold_min", "radius_m", "transfer_min")
    @classmethod
    def positive(cls, value):
        if value <= 0:
            raise ValueError("Must be positive")
        return value

    @field_validator("max_iter", "top_k", "workers")
    @classmethod
    def at_least_one(cls, value):
        if value < 1:
            raise ValueError("Must be at least 1")
        return value

    @field_validator("intra_samples")
    @classmethod
    def samples(cls, value):
        if value != 0 and value < MIN_SAMPLES:
            raise ValueError(f"Must be 0 (skip) or at least {MIN_SAMPLES}")
        return value

    @field_validator("timezone")
    @classmethod
    def known_timezone(cls, value):
        zone(value)
        return value

    @field_validator("workdays")
    @classmethod
    def iso_weekdays(cls, value):
        if any(not 1 <= day <= 7 for day in value):
            raise ValueError("ISO weekdays run from 1 (Monday) to 7 (Sunday)")
        return value

    @field_validator("windows")
    @classmethod
    def window_hours(cls, value):
        if not value:
            raise ValueError("At least one window is required")
        for name, (start, end) in value.items():
            if not 0 <= start < end <= 24:
                raise ValueError(f"Window '{name}' needs 0 <= start < end <= 24")
        return value

    @model_validator(mode="after")
    def study_window(self):
        if self.study_start is not None and self.study_end is not None and self.study_start >= self.study_end:
            raise ValueError("study_start must be before study_end")
        return self

    @property
    def config_hash(self) -> str:
        return hash_params(self.model_dump(mode="json"))

    @property
    def input_paths(self) -> list[str]:
        return [p for p in (self.districts, self.cdr, self.legs, self.stations, self.towers) if p]

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        """A JSON config file, if any, then ``overrides``; unset (None) overrides are ignored."""
        data = {}
        if path:
            path = require_file(path)
            try:
                data = json.loads(Path(path).read_text(encoding="utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise InputError(f"{path}: not a JSON document ({exc})")
            if not isinstance(data, dict):
                raise InputError(f"{path}: expected a JSON object")
        data.update({key: value for key, value in (overrides or {}).items() if value is not None})
        try:
            return cls.model_validate(data)
        except PydanticValidationError as exc:
            raise config_errors(exc)
