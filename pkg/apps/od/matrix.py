from dataclasses import dataclass, field, replace

import numpy as np

from apps.common.exceptions import ErrorCode, OdflowError, ValidationError
from apps.od.schemas import MatrixKind, Normalization


@dataclass
class ODMatrix:
    """
    Trips from district i (row) to district k (column) whose end time lies
    in ``[t_start, t_end)``. Aggregated matrices keep the hourly windows they
    were built from in ``windows``.
    """

    values: np.ndarray
    t_start: float
    t_end: float
    label: str = ""
    kind: MatrixKind = MatrixKind.COUNT
    normalization: Normalization | None = None
    windows: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise OdflowError(ErrorCode.SHAPE_MISMATCH, f"OD matrix must be square, got {self.values.shape}")
        if not self.t_start < self.t_end:
            raise ValidationError("window", f"Window start {self.t_start} is not before its end {self.t_end}")
        if self.kind == MatrixKind.COUNT and np.any(self.values < 0):
            raise ValidationError("values", "COUNT matrices cannot hold negative entries")

    @classmethod
    def zeros(cls, n_districts: int, t_start: float, t_end: float, **kwargs) -> "ODMatrix":
        return cls(np.zeros((n_districts, n_districts)), t_start, t_end, **kwargs)

    @property
    def n_districts(self) -> int:
        return self.values.shape[0]

    @property
    def window(self) -> tuple[float, float]:
        return self.t_start, self.t_end

    @property
    def total(self) -> float:
        return float(self.values.sum())

    @property
    def intra_district_total(self) -> float:
        return float(np.trace(self.values))

    @property
    def inter_district_total(self) -> float:
        return self.total - self.intra_district_total

    def with_values(self, values, **changes) -> "ODMatrix":
        return replace(self, values=np.asarray(values, dtype=float), **changes)

    def check_compatible(self, other: "ODMatrix", same_window: bool = True):
        if self.values.shape != other.values.shape:
            raise OdflowError(
                ErrorCode.SHAPE_MISMATCH,
                f"OD matrices have different shapes: {self.values.shape} and {other.values.shape}",
            )
        if same_window and self.window != other.window:
            raise OdflowError(
                ErrorCode.WINDOW_MISMATCH,
                f"OD matrices cover different windows: {self.window} and {other.window}",
                data={"windows": [list(self.window), list(other.window)]},
            )
