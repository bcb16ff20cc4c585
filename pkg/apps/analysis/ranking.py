import numpy as np
import pandas as pd
from shapely.geometry import LineString, mapping

from apps.analysis.schemas import ConnectionRecord
from apps.common.exceptions import ValidationError
from apps.geo.districts import DistrictMap
from apps.od.matrix import ODMatrix

TOP_K = 50
RANKING_COLUMNS = ["rank", "origin", "dest", "public_n", "private_n", "total_n", "private_share", "underserved"]


def candidate_pairs(n_districts: int) -> int:
    """Directed inter-district connections."""
    return n_districts * (n_districts - 1)


def underserved_ranking(
    public: ODMatrix,
    private: ODMatrix,
    top_k: int | None = TOP_K,
    window: str = "",
) -> list[ConnectionRecord]:
    """
    Directed inter-district connections by total trips, descending, ties by
    (origin, dest). A connection is underserved when private trips strictly
    exceed public trips.
    """
    public.check_compatible(private, same_window=False)
    n = public.n_districts
    if n < 2:
        raise ValidationError("districts", "A ranking needs at least two districts")
    origins, dests = np.nonzero(~np.eye(n, dtype=bool))
    public_n = public.values[origins, dests]
    private_n = private.values[origins, dests]
    total_n = public_n + private_n
    # row-major candidates, so a stable sort keeps (origin, dest) order within ties
    order = np.argsort(-total_n, kind="stable")
    if top_k is not None:
        order = order[:top_k]
    return [
        ConnectionRecord(
            window=window,
            origin=int(origins[i]),
            dest=int(dests[i]),
            public_n=float(public_n[i]),
            private_n=float(private_n[i]),
            total_n=float(total_n[i]),
            private_share=float(private_n[i] / total_n[i]) if total_n[i] > 0 else None,
            underserved=bool(private_n[i] > public_n[i]),
        )
        for i in order
    ]


def ranking_frame(records: list[ConnectionRecord]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "rank": np.arange(1, len(records) + 1),
            "origin": [r.origin for r in records],
            "dest": [r.dest for r in records],
            "public_n": pd.Series([r.public_n for r in records], dtype=float),
            "private_n": pd.Series([r.private_n for r in records], dtype=float),
            "total_n": pd.Series([r.total_n for r in records], dtype=float),
            "private_share": pd.Series([r.private_share for r in records], dtype=float),
            "underserved": [int(r.underserved) for r in records],
        },
        columns=RANKING_COLUMNS,
    )


def connections_feature_collection(records: list[ConnectionRecord], district_map: DistrictMap) -> dict:
    """One LineString per connection between the districts' representative points."""
    anchors = [district_map.representative_point(d) for d in range(len(district_map))]
    features = []
    for rank, record in enumerate(records, start=1):
        start, end = anchors[record.origin], anchors[record.dest]
        features.append(
            {
                "type": "Feature",
                "geometry": mapping(LineString([(start.lon, start.lat), (end.lon, end.lat)])),
                "properties": {
                    "window": record.window,
                    "rank": rank,
                    "origin": record.origin,
                    "dest": record.dest,
                    "origin_name": district_map.names[record.origin],
                    "dest_name": district_map.names[record.dest],
                    "public_n": record.public_n,
                    "private_n": record.private_n,
                    "underserved": record.underserved,
                },
            }
        )
    return {"type": "FeatureCollection", "features": features}
