import json
import logging
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely.geometry import Polygon, mapping, shape

from apps.common.exceptions import ErrorCode, InputError
from apps.common.utils import require_file
from apps.geo.projection import project_arrays, unproject_arrays
from apps.geo.schemas import District, GeoPoint

logger = logging.getLogger(__name__)

NO_DISTRICT = -1


class DistrictMap:
    """
    Polygonal partition of the study area with stable indices 0..D-1.

    Assignment uses a per-polygon bounding-box prefilter followed by an exact
    point-in-polygon test; a point on a shared boundary belongs to the lowest
    district id that touches it.
    """

    def __init__(self, districts: Sequence[District], projection_origin: GeoPoint | None = None):
        districts = tuple(sorted(districts, key=lambda d: d.district_id))
        if not districts:
            raise InputError("District map has no districts")
        ids = [d.district_id for d in districts]
        if len(set(ids)) != len(ids):
            raise InputError("Duplicate district ids", data={"district_ids": ids})
        if ids != list(range(len(ids))):
            raise InputError("District ids must be 0..D-1 without gaps", data={"district_ids": ids})
        for district in districts:
            polygon = district.polygon
            if not isinstance(polygon, Polygon) or polygon.is_empty or not polygon.is_valid:
                raise InputError(
                    f"District {district.district_id} polygon is not a valid simple polygon",
                    data={"district_id": district.district_id},
                )
            shapely.prepare(polygon)
        self.districts = districts
        self.bounds = np.array([d.polygon.bounds for d in districts])
        if projection_origin is None:
            minx, miny = self.bounds[:, 0].min(), self.bounds[:, 1].min()
            maxx, maxy = self.bounds[:, 2].max(), self.bounds[:, 3].max()
            projection_origin = GeoPoint(lon=(minx + maxx) / 2.0, lat=(miny + maxy) / 2.0)
        self.projection_origin = projection_origin

    def __len__(self) -> int:
        return len(self.districts)

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.districts]

    def district_of(self, p: GeoPoint) -> int | None:
        district_id = int(self.assign([p.lon], [p.lat])[0])
        return None if district_id == NO_DISTRICT else district_id

    def assign(self, lons, lats) -> np.ndarray:
        """District id per point, NO_DISTRICT for points outside every polygon."""
        lons = np.asarray(lons, dtype=float)
        lats = np.asarray(lats, dtype=float)
        result = np.full(lons.shape, NO_DISTRICT, dtype=np.int64)
        for district, (minx, miny, maxx, maxy) in zip(self.districts, self.bounds):
            candidates = np.flatnonzero(
                (result == NO_DISTRICT)
                & (lons >= minx) & (lons <= maxx)
                & (lats >= miny) & (lats <= maxy)
            )
            if candidates.size == 0:
                continue
            inside = shapely.intersects_xy(district.polygon, lons[candidates], lats[candidates])
            result[candidates[inside]] = district.district_id
        return result

    def projected_polygon(self, district_id: int) -> Polygon:
        """The district polygon in meters around the map's projection origin."""
        return shapely.transform(
            self.districts[district_id].polygon,
            lambda coords: np.column_stack(
                project_arrays(coords[:, 0], coords[:, 1], self.projection_origin)
            ),
        )

    def representative_point(self, district_id: int) -> GeoPoint:
        point = self.districts[district_id].polygon.representative_point()
        return GeoPoint(lon=point.x, lat=point.y)

    @classmethod
    def from_geojson(cls, path) -> "DistrictMap":
        path = require_file(path)
        try:
            collection = json.loads(Path(path).read_text(encoding="utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise InputError(f"{path}: not a GeoJSON document ({exc})")
        district_map = cls.from_feature_collection(collection, source=str(path))
        logger.info(f"Loaded {len(district_map)} districts from {path}")
        return district_map

    @classmethod
    def from_feature_collection(cls, collection: dict, source: str = "<districts>") -> "DistrictMap":
        if collection.get("type") != "FeatureCollection":
            raise InputError(f"{source}: expected a GeoJSON FeatureCollection")
        districts = []
        for index, feature in enumerate(collection.get("features", [])):
            properties = feature.get("properties") or {}
            geometry = feature.get("geometry") or {}
            district_id = properties.get("district_id")
            name = properties.get("name")
            if not isinstance(district_id, int) or isinstance(district_id, bool):
                raise InputError(f"{source}: feature {index} lacks an integer 'district_id'")
            if not isinstance(name, str):
                raise InputError(f"{source}: feature {index} lacks a string 'name'")
            if geometry.get("type") != "Polygon":
                raise InputError(f"{source}: district {district_id} is not a Polygon")
            for ring in geometry.get("coordinates", []):
                if len(ring) < 4 or list(ring[0]) != list(ring[-1]):
                    raise InputError(
                        f"{source}: district {district_id} has an unclosed ring",
                        ErrorCode.INPUT_MALFORMED,
                    )
            districts.append(District(district_id, name, shape(geometry)))
        origin = collection.get("projection_origin")
        projection_origin = GeoPoint(lon=origin[0], lat=origin[1]) if origin else None
        return cls(districts, projection_origin)

    def to_feature_collection(self) -> dict:
        return {
            "type": "FeatureCollection",
            "projection_origin": [self.projection_origin.lon, self.projection_origin.lat],
            "features": [
                {
                    "type": "Feature",
                    "properties": {"district_id": d.district_id, "name": d.name},
                    "geometry": mapping(d.polygon),
                }
                for d in self.districts
            ],
        }


def district_of(p: GeoPoint, district_map: DistrictMap) -> int | None:
    return district_map.district_of(p)


def grid_districts(
    origin: GeoPoint, rows: int, cols: int, cell_m: float, names: Iterable[str] | None = None
) -> DistrictMap:
    """
    Rectangular grid of districts centred on ``origin``; ids run row-major
    from the south-west corner. Neighbouring cells share identical edge
    coordinates.
    """
    names = list(names) if names is not None else [f"D{i:02d}" for i in range(rows * cols)]
    x_edges = (np.arange(cols + 1) - cols / 2.0) * cell_m
    y_edges = (np.arange(rows + 1) - rows / 2.0) * cell_m
    lon_edges, _ = unproject_arrays(x_edges, np.zeros_like(x_edges), origin)
    _, lat_edges = unproject_arrays(np.zeros_like(y_edges), y_edges, origin)
    districts = []
    for row in range(rows):
        for col in range(cols):
            w, e = float(lon_edges[col]), float(lon_edges[col + 1])
            s, n = float(lat_edges[row]), float(lat_edges[row + 1])
            district_id = row * cols + col
            polygon = Polygon([(w, s), (e, s), (e, n), (w, n), (w, s)])
            districts.append(District(district_id, names[district_id], polygon))
    return DistrictMap(districts, origin)
