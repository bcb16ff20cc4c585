from typing import Sequence

import pandas as pd

from apps.common.exceptions import InputError
from apps.common.utils import require_file
from apps.places.schemas import PLACE_COLUMNS, PLACE_COUNT_COLUMNS, DistrictShares, SignificantPlace


def write_places(path, places: Sequence[SignificantPlace]):
    pd.DataFrame(
        {
            "user_id": [p.user_id for p in places],
            "rank": pd.Series([p.rank for p in places], dtype="int64"),
            "lon": pd.Series([p.centroid.lon for p in places], dtype=float),
            "lat": pd.Series([p.centroid.lat for p in places], dtype=float),
            "share": pd.Series([p.share for p in places], dtype=float),
            "district_id": pd.array([p.district for p in places], dtype="Int64"),
        },
        columns=PLACE_COLUMNS,
    ).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def write_place_counts(path, frame: pd.DataFrame):
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def read_place_counts(path) -> DistrictShares:
    """District shares back from a ``place_counts.csv`` written by the places command."""
    path = require_file(path)
    # district names may be quoted, so this small file goes through the regular CSV engine
    try:
        frame = pd.read_csv(path, dtype={"name": str}, keep_default_na=False)
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: unreadable place counts ({exc})")
    if list(frame.columns) != PLACE_COUNT_COLUMNS:
        raise InputError(f"{path}: unreadable header", data={"expected": ",".join(PLACE_COUNT_COLUMNS)})
    numbers = frame[["district_id", "frequent_places", "all_places"]].apply(pd.to_numeric, errors="coerce")
    if numbers.isna().any(axis=None):
        raise InputError(f"{path}: non-numeric place counts")
    numbers = numbers.astype("int64").sort_values("district_id")
    if list(numbers["district_id"]) != list(range(len(numbers))):
        raise InputError(f"{path}: district ids must be 0..D-1")
    return DistrictShares(numbers["frequent_places"].to_numpy(), numbers["all_places"].to_numpy())
