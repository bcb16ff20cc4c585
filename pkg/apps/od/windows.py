"""Time-of-day windows evaluated in the study area's local time."""
from dataclasses import dataclass
from datetime import date, datetime, timezone
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

from apps.common.exceptions import ValidationError

DEFAULT_WINDOWS = {"morning": (6, 10), "midday": (10, 17), "evening": (17, 22)}
WORKDAYS = (1, 2, 3, 4, 5)


def zone(name: str) -> ZoneInfo:
    try:
        return ZoneInfo(name)
    except (ZoneInfoNotFoundError, ValueError):
        raise ValidationError("timezone", f"Unknown timezone '{name}'")


def local_datetime(t: float, tz: str) -> datetime:
    return datetime.fromtimestamp(t, tz=timezone.utc).astimezone(zone(tz))


@dataclass(frozen=True)
class WindowFilter:
    """
    Selects hourly matrices whose window starts within ``[start_hour, end_hour)``
    local time on a workday that is not a holiday. An empty ``workdays``
    accepts every day of the week.
    """

    name: str
    start_hour: float = 0.0
    end_hour: float = 24.0
    timezone: str = "Asia/Singapore"
    workdays: tuple[int, ...] = WORKDAYS
    holidays: frozenset[date] = frozenset()

    def __post_init__(self):
        if not 0 <= self.start_hour < self.end_hour <= 24:
            raise ValidationError("windows", f"Window '{self.name}' needs 0 <= start < end <= 24")
        zone(self.timezone)

    def local_date(self, t: float) -> date:
        return local_datetime(t, self.timezone).date()

    def accepts(self, t: float) -> bool:
        start = local_datetime(t, self.timezone)
        hour = start.hour + start.minute / 60.0 + start.second / 3600.0
        if not self.start_hour <= hour < self.end_hour:
            return False
        if self.workdays and start.isoweekday() not in self.workdays:
            return False
        return start.date() not in self.holidays

    def __call__(self, matrix) -> bool:
        return self.accepts(matrix.t_start)


def window_filters(
    windows: dict[str, tuple[float, float]] | None = None,
    tz: str = "Asia/Singapore",
    workdays=WORKDAYS,
    holidays=(),
) -> dict[str, WindowFilter]:
    windows = DEFAULT_WINDOWS if windows is None else windows
    return {
        name: WindowFilter(name, float(start), float(end), tz, tuple(workdays), frozenset(holidays))
        for name, (start, end) in windows.items()
    }
