from typing import Iterable

from apps.analysis.schemas import ModeShareReport, WindowShare
from apps.common.exceptions import ErrorCode, OdflowError
from apps.od.matrix import ODMatrix


def mode_share(
    public: dict[str, ODMatrix],
    private: dict[str, ODMatrix],
    windows: Iterable[str] | None = None,
) -> ModeShareReport:
    """Public share of inter-district trips per window; intra-district cells are ignored."""
    windows = list(public) if windows is None else list(windows)
    report = ModeShareReport()
    for window in windows:
        if window not in public or window not in private:
            raise OdflowError(ErrorCode.WINDOW_MISMATCH, f"Window '{window}' missing from the mode share inputs")
        public[window].check_compatible(private[window], same_window=False)
        public_trips = public[window].inter_district_total
        private_trips = private[window].inter_district_total
        total = public_trips + private_trips
        report.windows.append(
            WindowShare(window, public_trips, private_trips, public_trips / total if total > 0 else None)
        )
    return report
