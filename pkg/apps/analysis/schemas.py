from dataclasses import asdict, dataclass, field

from apps.common.schemas import DiagnosticsSchema


@dataclass(frozen=True)
class WindowShare:
    window: str
    public_trips: float
    private_trips: float
    # None when the window holds no inter-district trip
    public_share: float | None


@dataclass
class ModeShareReport:
    windows: list[WindowShare] = field(default_factory=list)

    def share(self, window: str) -> float | None:
        for entry in self.windows:
            if entry.window == window:
                return entry.public_share
        raise KeyError(window)

    def as_dict(self) -> dict:
        return {entry.window: asdict(entry) for entry in self.windows}


@dataclass(frozen=True)
class ConnectionRecord:
    window: str
    origin: int
    dest: int
    public_n: float
    private_n: float
    total_n: float
    private_share: float | None
    underserved: bool


@dataclass(frozen=True)
class DistrictDistance:
    district_id: int
    name: str
    area_m2: float
    mean_distance_m: float | None


@dataclass
class IntraDistanceReport:
    districts: list[DistrictDistance]
    n_samples: int
    side_m: float
    classical_estimate_m: float
    printed_estimate_m: float
    mean_distance_m: float | None
    detectability_floor_m: float

    def as_dict(self) -> dict:
        return asdict(self)


class PrivateDiagnostics(DiagnosticsSchema):
    n_clamped_cells: int = 0
    residual: float = 0.0
