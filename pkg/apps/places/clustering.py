"""
Significant places of a user: a K-means whose number of clusters follows
from a greedy radius-gated seeding pass, with Lloyd iterations that leave
events farther than the radius from every centroid unassigned.
"""
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from apps.cdr.grouping import UserGroups
from apps.cdr.schemas import EventRecord
from apps.common.exceptions import ValidationError
from apps.common.parallel import map_shards, shard_bounds
from apps.geo.districts import NO_DISTRICT, DistrictMap
from apps.geo.projection import project_arrays, unproject_arrays
from apps.geo.schemas import GeoPoint
from apps.places.schemas import PlaceDiagnostics, PlaceSchema, SignificantPlace

logger = logging.getLogger(__name__)

RADIUS_M = 1000.0
MIN_SHARE = 0.15
MAX_ITER = 50
UNASSIGNED = -1


@dataclass
class Clustering:
    cx: np.ndarray
    cy: np.ndarray
    labels: np.ndarray
    converged: bool
    n_iter: int

    def members(self) -> np.ndarray:
        assigned = self.labels[self.labels != UNASSIGNED]
        return np.bincount(assigned, minlength=len(self.cx))


def seed_centroids(xs: Sequence[float], ys: Sequence[float], radius_m: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Scan positions in time order. A position farther than ``radius_m`` from
    every centroid starts a new one; otherwise it joins the nearest centroid,
    which moves to the running mean of its members.
    """
    limit = radius_m * radius_m
    cx, cy, counts = [], [], []
    for x, y in zip(xs, ys):
        nearest, nearest_d = -1, 0.0
        for k in range(len(cx)):
            d = (x - cx[k]) ** 2 + (y - cy[k]) ** 2
            if nearest < 0 or d < nearest_d:
                nearest, nearest_d = k, d
        if nearest < 0 or nearest_d > limit:
            cx.append(x)
            cy.append(y)
            counts.append(1)
            continue
        counts[nearest] += 1
        cx[nearest] += (x - cx[nearest]) / counts[nearest]
        cy[nearest] += (y - cy[nearest]) / counts[nearest]
    return np.array(cx, dtype=float), np.array(cy, dtype=float)


def assign_to_centroids(xs: np.ndarray, ys: np.ndarray, cx: np.ndarray, cy: np.ndarray, radius_m: float) -> np.ndarray:
    """Nearest centroid (lowest index on ties) if within ``radius_m``, else UNASSIGNED."""
    if len(cx) == 0:
        return np.full(len(xs), UNASSIGNED, dtype=np.int64)
    d2 = (xs[:, None] - cx[None, :]) ** 2 + (ys[:, None] - cy[None, :]) ** 2
    nearest = np.argmin(d2, axis=1)
    within = d2[np.arange(len(xs)), nearest] <= radius_m * radius_m
    return np.where(within, nearest, UNASSIGNED).astype(np.int64)


def cluster_positions(xs, ys, radius_m: float = RADIUS_M, max_iter: int = MAX_ITER) -> Clustering:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    cx, cy = seed_centroids(xs.tolist(), ys.tolist(), radius_m)
    labels = None
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new_labels = assign_to_centroids(xs, ys, cx, cy, radius_m)
        if labels is not None and np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels
        assigned = labels != UNASSIGNED
        counts = np.bincount(labels[assigned], minlength=len(cx))
        sum_x = np.bincount(labels[assigned], weights=xs[assigned], minlength=len(cx))
        sum_y = np.bincount(labels[assigned], weights=ys[assigned], minlength=len(cx))
        # a centroid that lost every member keeps its position
        occupied = counts > 0
        cx = np.where(occupied, sum_x / np.maximum(counts, 1), cx)
        cy = np.where(occupied, sum_y / np.maximum(counts, 1), cy)
    # members and shares always come from the final centroids
    labels = assign_to_centroids(xs, ys, cx, cy, radius_m)
    return Clustering(cx, cy, labels, converged, n_iter)


def _places_from_clustering(
    user_id: str,
    clustering: Clustering,
    n_events: int,
    origin: GeoPoint,
    min_share: float,
) -> list[SignificantPlace]:
    members = clustering.members()
    shares = members / n_events
    kept = [k for k in np.argsort(-shares, kind="stable") if members[k] > 0 and shares[k] >= min_share]
    lons, lats = unproject_arrays(clustering.cx[kept], clustering.cy[kept], origin)
    return [
        SignificantPlace(
            user_id=user_id,
            rank=rank,
            centroid=GeoPoint(float(lon), float(lat)),
            share=float(shares[k]),
            n_events=int(members[k]),
        )
        for rank, (k, lon, lat) in enumerate(zip(kept, lons, lats), start=1)
    ]


def significant_places(
    events: Sequence[EventRecord],
    radius_m: float = RADIUS_M,
    min_share: float = MIN_SHARE,
    max_iter: int = MAX_ITER,
    origin: GeoPoint | None = None,
) -> list[SignificantPlace]:
    """
    Places holding at least ``min_share`` of ALL the user's events, sorted
    by descending share. Events left unassigned still count in the
    denominator.
    """
    if not events:
        raise ValidationError("events", "At least one event is required")
    origin = origin or events[0].pos
    xs, ys = project_arrays([e.pos.lon for e in events], [e.pos.lat for e in events], origin)
    clustering = cluster_positions(xs, ys, radius_m, max_iter)
    return _places_from_clustering(events[0].user_id, clustering, len(events), origin, min_share)


def _detect_shard(task: tuple[UserGroups, PlaceSchema, GeoPoint]) -> tuple[list[SignificantPlace], int]:
    groups, schema, origin = task
    xs, ys = project_arrays(groups.lon, groups.lat, origin)
    places, n_not_converged = [], 0
    for index, user_id in enumerate(groups.user_ids):
        a, b = groups.span(index)
        clustering = cluster_positions(xs[a:b], ys[a:b], schema.radius_m, schema.max_iter)
        n_not_converged += not clustering.converged
        places.extend(_places_from_clustering(user_id, clustering, b - a, origin, schema.min_share))
    return places, n_not_converged


def detect_places(
    groups: UserGroups,
    district_map: DistrictMap,
    schema: PlaceSchema | None = None,
    workers: int = 1,
) -> tuple[list[SignificantPlace], PlaceDiagnostics]:
    """Significant places of every user in ``groups`` with their districts."""
    schema = schema or PlaceSchema()
    origin = district_map.projection_origin
    shards = [(groups.subset(a, b), schema, origin) for a, b in shard_bounds(len(groups), workers * 4)]
    places, n_not_converged = [], 0
    for shard_places, shard_not_converged in map_shards(_detect_shard, shards, workers):
        places.extend(shard_places)
        n_not_converged += shard_not_converged

    districts = district_map.assign([p.centroid.lon for p in places], [p.centroid.lat for p in places])
    places = [
        SignificantPlace(p.user_id, p.rank, p.centroid, p.share, p.n_events, None if d == NO_DISTRICT else int(d))
        for p, d in zip(places, districts)
    ]
    diagnostics = PlaceDiagnostics(
        n_users=len(groups),
        n_users_without_places=len(groups) - len({p.user_id for p in places}),
        n_places=len(places),
        n_places_without_district=sum(1 for p in places if p.district is None),
        n_not_converged=n_not_converged,
    )
    if n_not_converged:
        logger.warning(f"{n_not_converged} users did not converge within {schema.max_iter} iterations")
    logger.info(f"Detected {len(places):,} significant places for {len(groups):,} users")
    return places, diagnostics
