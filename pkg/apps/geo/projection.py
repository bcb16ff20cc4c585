"""Equirectangular local projection around a fixed origin.

At city scale the error against a geodesic is far below the localization
uncertainty of cell towers, and the projected plane makes every distance
threshold a plain Euclidean comparison.
"""
import math

import numpy as np

from apps.geo.schemas import GeoPoint, LocalXY

EARTH_RADIUS_M = 6_371_000.0


def project(p: GeoPoint, origin: GeoPoint) -> LocalXY:
    coslat = math.cos(math.radians(origin.lat))
    return LocalXY(
        x=EARTH_RADIUS_M * math.radians(p.lon - origin.lon) * coslat,
        y=EARTH_RADIUS_M * math.radians(p.lat - origin.lat),
    )


def unproject(q: LocalXY, origin: GeoPoint) -> GeoPoint:
    coslat = math.cos(math.radians(origin.lat))
    return GeoPoint(
        lon=origin.lon + math.degrees(q.x / (EARTH_RADIUS_M * coslat)),
        lat=origin.lat + math.degrees(q.y / EARTH_RADIUS_M),
    )


def project_arrays(lons, lats, origin: GeoPoint) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised `project` for coordinate arrays."""
    coslat = math.cos(math.radians(origin.lat))
    x = EARTH_RADIUS_M * np.radians(np.asarray(lons, dtype=float) - origin.lon) * coslat
    y = EARTH_RADIUS_M * np.radians(np.asarray(lats, dtype=float) - origin.lat)
    return x, y


def unproject_arrays(xs, ys, origin: GeoPoint) -> tuple[np.ndarray, np.ndarray]:
    coslat = math.cos(math.radians(origin.lat))
    lons = origin.lon + np.degrees(np.asarray(xs, dtype=float) / (EARTH_RADIUS_M * coslat))
    lats = origin.lat + np.degrees(np.asarray(ys, dtype=float) / EARTH_RADIUS_M)
    return lons, lats


def distance_m(a: GeoPoint, b: GeoPoint, origin: GeoPoint | None = None) -> float:
    """
    Distance in meters between two points.

    With ``origin`` both points are projected around it and the planar
    distance is returned; pass the district map's origin to compare against
    the pipeline thresholds. Without one the great-circle distance is used,
    which is a metric over any set of points.
    """
    if origin is None:
        phi_a, phi_b = math.radians(a.lat), math.radians(b.lat)
        h = (
            math.sin((phi_b - phi_a) / 2.0) ** 2
            + math.cos(phi_a) * math.cos(phi_b) * math.sin(math.radians(b.lon - a.lon) / 2.0) ** 2
        )
        return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))
    pa, pb = project(a, origin), project(b, origin)
    return math.hypot(pa.x - pb.x, pa.y - pb.y)
