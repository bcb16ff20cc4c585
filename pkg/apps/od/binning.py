import logging
import math
from typing import Sequence

import numpy as np
import pandas as pd

from apps.cdr.schemas import Trip
from apps.common.exceptions import ValidationError
from apps.geo.districts import NO_DISTRICT, DistrictMap
from apps.od.matrix import ODMatrix
from apps.od.schemas import BinningDiagnostics, MatrixKind

logger = logging.getLogger(__name__)

GRANULARITY_S = 3600


def aligned_span(t_min: float, t_max: float, granularity_s: int = GRANULARITY_S) -> tuple[float, float]:
    """Smallest epoch-aligned span ``[start, end)`` holding both times."""
    start = math.floor(t_min / granularity_s) * granularity_s
    end = (math.floor(t_max / granularity_s) + 1) * granularity_s
    return float(start), float(end)


def bin_counts(
    end_t,
    origins,
    dests,
    n_districts: int,
    granularity_s: int = GRANULARITY_S,
    label: str = "",
    span: tuple[float, float] | None = None,
) -> tuple[list[ODMatrix], BinningDiagnostics]:
    """
    One COUNT matrix per ``granularity_s`` window, each trip counted in the
    window holding its end time. Endpoints equal to NO_DISTRICT are skipped.
    Without ``span`` the windows cover the binned trips only.
    """
    if granularity_s <= 0:
        raise ValidationError("granularity", "Must be positive")
    end_t = np.asarray(end_t, dtype=float)
    origins = np.asarray(origins, dtype=np.int64)
    dests = np.asarray(dests, dtype=np.int64)
    diagnostics = BinningDiagnostics(n_trips=len(end_t))

    located = (origins != NO_DISTRICT) & (dests != NO_DISTRICT)
    if np.any((origins >= n_districts) | (dests >= n_districts) | (origins < NO_DISTRICT) | (dests < NO_DISTRICT)):
        raise ValidationError("district", f"District ids must lie in 0..{n_districts - 1}")
    diagnostics.n_without_district = int((~located).sum())

    if span is not None:
        if not span[0] < span[1]:
            raise ValidationError("span", "Span start must be before its end")
        start = float(math.floor(span[0] / granularity_s) * granularity_s)
        end = float(math.ceil(span[1] / granularity_s) * granularity_s)
        in_span = (end_t >= span[0]) & (end_t < span[1])
    elif located.any():
        start, end = aligned_span(end_t[located].min(), end_t[located].max(), granularity_s)
        in_span = np.ones(len(end_t), dtype=bool)
    else:
        logger.info("No trips to bin")
        return [], diagnostics
    diagnostics.n_out_of_window = int((located & ~in_span).sum())

    keep = located & in_span
    n_windows = int(round((end - start) / granularity_s))
    cube = np.zeros((n_windows, n_districts, n_districts))
    index = ((end_t[keep] - start) // granularity_s).astype(np.int64)
    np.add.at(cube, (index, origins[keep], dests[keep]), 1.0)

    diagnostics.n_binned = int(keep.sum())
    diagnostics.n_intra_district = int((origins[keep] == dests[keep]).sum())
    matrices = [
        ODMatrix(cube[w], start + w * granularity_s, start + (w + 1) * granularity_s, label, MatrixKind.COUNT)
        for w in range(n_windows)
    ]
    logger.info(f"Binned {diagnostics.n_binned:,} of {diagnostics.n_trips:,} trips into {n_windows} windows ({label})")
    return matrices, diagnostics


def trip_endpoints(trips) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """End times and district endpoints of Trip objects or a trips frame."""
    if isinstance(trips, pd.DataFrame):
        return (
            trips["end_t"].to_numpy(dtype=float),
            trips["origin_district"].to_numpy(dtype=np.int64),
            trips["dest_district"].to_numpy(dtype=np.int64),
        )
    return (
        np.array([t.end_t for t in trips], dtype=float),
        np.array([NO_DISTRICT if t.origin_district is None else t.origin_district for t in trips], dtype=np.int64),
        np.array([NO_DISTRICT if t.dest_district is None else t.dest_district for t in trips], dtype=np.int64),
    )


def bin_trips(
    trips: Sequence[Trip] | pd.DataFrame,
    district_map: DistrictMap,
    granularity_s: int = GRANULARITY_S,
    label: str = "cdr-raw",
    span: tuple[float, float] | None = None,
) -> tuple[list[ODMatrix], BinningDiagnostics]:
    end_t, origins, dests = trip_endpoints(trips)
    return bin_counts(end_t, origins, dests, len(district_map), granularity_s, label, span)
