from enum import Enum

from pydantic import Field

from apps.common.schemas import DiagnosticsSchema, StrictSchema

OD_COLUMNS = ["origin_district", "dest_district", "window_start", "window_end", "count"]

MARKET_SHARE = 0.453
PENETRATION = 1.44


class MatrixKind(str, Enum):
    COUNT = "count"
    ESTIMATE = "estimate"


class Normalization(str, Enum):
    TOTAL = "total"
    PER_DAY = "per_day"


class ScalingConfig(StrictSchema):
    market_share: float = Field(MARKET_SHARE, gt=0.0, le=3.0)
    penetration: float = Field(PENETRATION, gt=0.0, le=3.0)
    frequent_share: float = Field(0.34, gt=0.0, le=3.0)

    @property
    def divisor(self) -> float:
        return self.market_share * self.penetration * self.frequent_share


class BinningDiagnostics(DiagnosticsSchema):
    n_trips: int = 0
    n_binned: int = 0
    n_without_district: int = 0
    n_out_of_window: int = 0
    n_intra_district: int = 0
