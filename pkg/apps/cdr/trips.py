"""
Trip extraction from CDR positions.

Consecutive records closer than ``delta_d_m`` to the first record of their
run are fused into a virtual location; virtual locations with at least two
records and a dwell above ``delta_t_min`` are clusters, and every pair of
consecutive clusters is a trip.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from apps.cdr.grouping import UserGroups
from apps.cdr.schemas import DwellCluster, EventRecord, Trip, TripDiagnostics, VirtualLocation
from apps.common.csvio import CsvReader, check_malformed, parse_floats
from apps.common.parallel import map_shards, shard_bounds
from apps.common.utils import open_input
from apps.geo.districts import NO_DISTRICT, DistrictMap
from apps.geo.projection import EARTH_RADIUS_M, project_arrays
from apps.geo.schemas import GeoPoint

logger = logging.getLogger(__name__)

DELTA_D_M = 2000.0
DELTA_T_MIN = 20.0

TRIP_COLUMNS = [
    "user_id",
    "start_t",
    "end_t",
    "origin_lon",
    "origin_lat",
    "dest_lon",
    "dest_lat",
    "origin_district",
    "dest_district",
]


def _run_bounds(xs: list[float], ys: list[float], delta_d_m: float) -> list[tuple[int, int]]:
    """Greedy runs anchored at each run's first position."""
    limit = delta_d_m * delta_d_m
    n = len(xs)
    bounds = []
    k = 0
    while k < n:
        ax, ay = xs[k], ys[k]
        i = k + 1
        while i < n and (xs[i] - ax) ** 2 + (ys[i] - ay) ** 2 < limit:
            i += 1
        bounds.append((k, i))
        k = i
    return bounds


def _virtual_locations(t, xs, ys, origin: GeoPoint, delta_d_m: float) -> list[VirtualLocation]:
    t, xs, ys = (np.asarray(v, dtype=float).tolist() for v in (t, xs, ys))
    coslat = math.cos(math.radians(origin.lat))
    locations = []
    for a, b in _run_bounds(xs, ys, delta_d_m):
        n = b - a
        cx, cy = sum(xs[a:b]) / n, sum(ys[a:b]) / n
        centroid = GeoPoint(
            lon=origin.lon + math.degrees(cx / (EARTH_RADIUS_M * coslat)),
            lat=origin.lat + math.degrees(cy / EARTH_RADIUS_M),
        )
        locations.append(VirtualLocation(centroid, float(t[a]), float(t[b - 1]), n))
    return locations


def extract_virtual_locations(
    events: Sequence[EventRecord],
    delta_d_m: float = DELTA_D_M,
    origin: GeoPoint | None = None,
) -> list[VirtualLocation]:
    """
    Fuse one user's time-sorted events into virtual locations. Centroids
    are means in the plane projected around ``origin`` (default: the first
    event's position).
    """
    if not events:
        return []
    origin = origin or events[0].pos
    xs, ys = project_arrays([e.pos.lon for e in events], [e.pos.lat for e in events], origin)
    return _virtual_locations([e.t for e in events], xs, ys, origin, delta_d_m)


def extract_clusters(vlocs: Sequence[VirtualLocation], delta_t_min: float = DELTA_T_MIN) -> list[DwellCluster]:
    min_dwell_s = delta_t_min * 60.0
    return [
        DwellCluster(v.centroid, v.t_first, v.t_last, v.n_records)
        for v in vlocs
        if v.n_records >= 2 and v.dwell_s > min_dwell_s
    ]


def extract_trips(clusters: Sequence[DwellCluster], user_id: str = "") -> list[Trip]:
    trips = []
    for origin, dest in zip(clusters, clusters[1:]):
        # records sharing a timestamp across two places would give a zero-length trip
        if dest.t_first > origin.t_last:
            trips.append(Trip(user_id, origin, dest))
    return trips


@dataclass(frozen=True)
class ExtractionParams:
    origin: GeoPoint
    delta_d_m: float = DELTA_D_M
    delta_t_min: float = DELTA_T_MIN


def _extract_shard(task: tuple[UserGroups, ExtractionParams]) -> tuple[list[Trip], TripDiagnostics]:
    groups, params = task
    xs, ys = project_arrays(groups.lon, groups.lat, params.origin)
    trips, diagnostics = [], TripDiagnostics()
    for index, user_id in enumerate(groups.user_ids):
        a, b = groups.span(index)
        vlocs = _virtual_locations(groups.t[a:b], xs[a:b], ys[a:b], params.origin, params.delta_d_m)
        clusters = extract_clusters(vlocs, params.delta_t_min)
        user_trips = extract_trips(clusters, user_id)
        trips.extend(user_trips)
        diagnostics.n_virtual_locations += len(vlocs)
        diagnostics.n_clusters += len(clusters)
        diagnostics.n_trips_dropped_nonpositive += max(len(clusters) - 1, 0) - len(user_trips)
    return trips, diagnostics


def extract_all_trips(
    groups: UserGroups,
    district_map: DistrictMap,
    delta_d_m: float = DELTA_D_M,
    delta_t_min: float = DELTA_T_MIN,
    workers: int = 1,
) -> tuple[list[Trip], TripDiagnostics]:
    """Trips of every user in ``groups``, with district endpoints assigned."""
    params = ExtractionParams(district_map.projection_origin, delta_d_m, delta_t_min)
    shards = [(groups.subset(a, b), params) for a, b in shard_bounds(len(groups), workers * 4)]
    diagnostics = TripDiagnostics(n_users=len(groups))
    trips = []
    for shard_trips, shard_diagnostics in map_shards(_extract_shard, shards, workers):
        trips.extend(shard_trips)
        diagnostics = diagnostics.merge(shard_diagnostics)

    trips = assign_trip_districts(trips, district_map)
    diagnostics.n_trips = len(trips)
    diagnostics.n_trips_without_district = sum(
        1 for trip in trips if trip.origin_district is None or trip.dest_district is None
    )
    if diagnostics.n_trips_dropped_nonpositive:
        logger.warning(f"{diagnostics.n_trips_dropped_nonpositive} trips dropped for ending no later than they start")
    if diagnostics.n_trips_without_district:
        logger.warning(f"{diagnostics.n_trips_without_district} trips start or end outside every district")
    logger.info(f"Extracted {len(trips):,} trips from {len(groups):,} users")
    return trips, diagnostics


def assign_trip_districts(trips: list[Trip], district_map: DistrictMap) -> list[Trip]:
    if not trips:
        return []
    origins = district_map.assign([t.origin.centroid.lon for t in trips], [t.origin.centroid.lat for t in trips])
    dests = district_map.assign([t.dest.centroid.lon for t in trips], [t.dest.centroid.lat for t in trips])
    return [
        dataclasses.replace(
            trip,
            origin_district=None if o == NO_DISTRICT else int(o),
            dest_district=None if d == NO_DISTRICT else int(d),
        )
        for trip, o, d in zip(trips, origins, dests)
    ]


def trips_frame(trips: Sequence[Trip]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "user_id": [t.user_id for t in trips],
            "start_t": pd.Series([t.start_t for t in trips], dtype=float),
            "end_t": pd.Series([t.end_t for t in trips], dtype=float),
            "origin_lon": pd.Series([t.origin.centroid.lon for t in trips], dtype=float),
            "origin_lat": pd.Series([t.origin.centroid.lat for t in trips], dtype=float),
            "dest_lon": pd.Series([t.dest.centroid.lon for t in trips], dtype=float),
            "dest_lat": pd.Series([t.dest.centroid.lat for t in trips], dtype=float),
            "origin_district": pd.array([t.origin_district for t in trips], dtype="Int64"),
            "dest_district": pd.array([t.dest_district for t in trips], dtype="Int64"),
        },
        columns=TRIP_COLUMNS,
    )


def write_trips(path, trips: Sequence[Trip]):
    trips_frame(trips).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def read_trips(path) -> pd.DataFrame:
    """Trips file as a frame; district columns use -1 for trips outside every district."""
    frames = []
    with open_input(path) as stream:
        reader = CsvReader(stream, TRIP_COLUMNS, source=str(path))
        for chunk, _ in reader:
            frame = pd.DataFrame({"user_id": chunk["user_id"]})
            for column in TRIP_COLUMNS[1:7]:
                frame[column] = parse_floats(chunk[column])
            for column in ("origin_district", "dest_district"):
                values = chunk[column].replace("", str(NO_DISTRICT))
                frame[column] = pd.to_numeric(values, errors="coerce")
            frames.append(frame)
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=TRIP_COLUMNS)
    bad = frame[TRIP_COLUMNS[1:]].isna().any(axis=1)
    check_malformed(int(bad.sum()) + reader.n_malformed, reader.n_lines, 0.0, str(path))
    for column in ("origin_district", "dest_district"):
        frame[column] = frame[column].astype(np.int64)
    return frame
