import logging
from typing import Sequence

import numpy as np
import pandas as pd

from apps.common.exceptions import ValidationError
from apps.geo.districts import NO_DISTRICT, DistrictMap
from apps.places.schemas import PLACE_COUNT_COLUMNS, DistrictShares, SignificantPlace

logger = logging.getLogger(__name__)

# Overall share measured on the operator data; used only when place
# detection is skipped and no share is configured
REFERENCE_PHI = 0.34


def _count_places(places: Sequence[SignificantPlace], district_map: DistrictMap) -> tuple[np.ndarray, int]:
    districts = district_map.assign([p.centroid.lon for p in places], [p.centroid.lat for p in places])
    inside = districts != NO_DISTRICT
    counts = np.bincount(districts[inside], minlength=len(district_map))
    return counts, int((~inside).sum())


def district_shares(
    places_frequent: Sequence[SignificantPlace],
    places_all: Sequence[SignificantPlace],
    district_map: DistrictMap,
) -> DistrictShares:
    """Places (not users) per district for frequent users (m) and all users (n)."""
    m, m_none = _count_places(places_frequent, district_map)
    n, n_none = _count_places(places_all, district_map)
    if np.any(m > n):
        raise ValidationError("places_frequent", "Frequent users' places must be a subset of all places")
    shares = DistrictShares(m, n, m_none, n_none)
    if shares.empty_districts:
        logger.warning(f"Districts without any significant place: {shares.empty_districts}")
    logger.info(f"Overall frequent-user share phi = {shares.phi:.4f}")
    return shares


def place_counts_frame(shares: DistrictShares, district_map: DistrictMap) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "district_id": np.arange(len(shares)),
            "name": district_map.names,
            "frequent_places": shares.m,
            "all_places": shares.n,
            "phi": shares.phi_i,
        },
        columns=PLACE_COUNT_COLUMNS,
    )
