import json, math, tempfile
import numpy as np
from pathlib import Path
from django.test import SimpleTestCase
from shapely.geometry import Polygon

from apps.common.exceptions import ErrorCode, InputError
from apps.geo.districts import NO_DISTRICT, DistrictMap, district_of, grid_districts
from apps.geo.projection import distance_m, project, project_arrays, unproject
from apps.geo.schemas import District, GeoPoint, LocalXY

SINGAPORE = GeoPoint(lon=103.82, lat=1.35)


class TestGeoUtil:
    def grid(rows=3, cols=4, cell_m=3000.0):
        return grid_districts(SINGAPORE, rows, cols, cell_m)

    def winding_number(x, y, ring):
        """Independent point-in-polygon oracle (non-zero winding)."""
        wn = 0
        for (x1, y1), (x2, y2) in zip(ring[:-1], ring[1:]):
            is_left = (x2 - x1) * (y - y1) - (x - x1) * (y2 - y1)
            if y1 <= y < y2 and is_left > 0:
                wn += 1
            elif y2 <= y < y1 and is_left < 0:
                wn -= 1
        return wn

    def feature(district_id, name, ring):
        return {
            "type": "Feature",
            "properties": {"district_id": district_id, "name": name},
            "geometry": {"type": "Polygon", "coordinates": [ring]},
        }


class TestProjection(SimpleTestCase):
    def test_origin_projects_to_zero(self):
        self.assertEqual(project(SINGAPORE, SINGAPORE), LocalXY(0.0, 0.0))

    def test_latitude_step(self):
        q = project(GeoPoint(SINGAPORE.lon, SINGAPORE.lat + 0.01), SINGAPORE)
        self.assertAlmostEqual(q.y, 1111.9, delta=0.5)
        self.assertEqual(q.x, 0.0)

    def test_longitude_step_at_singapore(self):
        q = project(GeoPoint(SINGAPORE.lon + 0.01, SINGAPORE.lat), SINGAPORE)
        self.assertAlmostEqual(q.x, 1111.6, delta=0.5)

    def test_round_trip_within_100km(self):
        rng = np.random.default_rng(7)
        for dx, dy in rng.uniform(-70_000, 70_000, size=(500, 2)):
            p = unproject(LocalXY(dx, dy), SINGAPORE)
            q = project(p, SINGAPORE)
            back = unproject(q, SINGAPORE)
            self.assertLess(distance_m(p, back, SINGAPORE), 1.0)
            self.assertAlmostEqual(q.x, dx, delta=1e-6)

    def test_array_projection_matches_scalar(self):
        p = GeoPoint(103.9, 1.30)
        xs, ys = project_arrays([p.lon], [p.lat], SINGAPORE)
        q = project(p, SINGAPORE)
        self.assertAlmostEqual(xs[0], q.x)
        self.assertAlmostEqual(ys[0], q.y)

    def test_invalid_point_rejected(self):
        with self.assertRaises(ValueError):
            GeoPoint(lon=181.0, lat=0.0)
        with self.assertRaises(ValueError):
            GeoPoint(lon=0.0, lat=-90.5)


class TestDistance(SimpleTestCase):
    def test_zero_distance(self):
        self.assertEqual(distance_m(SINGAPORE, SINGAPORE), 0.0)

    def test_just_above_delta_d(self):
        b = GeoPoint(SINGAPORE.lon, SINGAPORE.lat + 0.018)
        self.assertAlmostEqual(distance_m(SINGAPORE, b), 2001.5, delta=1.0)

    def test_metric_properties(self):
        rng = np.random.default_rng(11)
        coords = rng.uniform([103.6, 1.2], [104.0, 1.5], size=(1000, 3, 2))
        for triple in coords:
            a, b, c = (GeoPoint(lon, lat) for lon, lat in triple)
            ab = distance_m(a, b, SINGAPORE)
            bc = distance_m(b, c, SINGAPORE)
            ac = distance_m(a, c, SINGAPORE)
            self.assertLessEqual(ac, ab + bc + 1e-9)
            self.assertAlmostEqual(ab, distance_m(b, a, SINGAPORE), places=9)
            self.assertGreater(ab, 0.0)

    def test_default_origin_is_symmetric(self):
        a, b = GeoPoint(103.7, 1.25), GeoPoint(103.95, 1.44)
        self.assertEqual(distance_m(a, b), distance_m(b, a))

    def test_metric_without_origin(self):
        rng = np.random.default_rng(12)
        # spread wide enough that per-pair projections would disagree
        coords = rng.uniform([100.0, -10.0], [110.0, 40.0], size=(1000, 3, 2))
        for triple in coords:
            a, b, c = (GeoPoint(lon, lat) for lon, lat in triple)
            self.assertLessEqual(distance_m(a, c), distance_m(a, b) + distance_m(b, c) + 1e-6)

    def test_planar_matches_great_circle_at_city_scale(self):
        rng = np.random.default_rng(13)
        coords = rng.uniform([103.6, 1.2], [104.0, 1.5], size=(200, 2, 2))
        for (lon_a, lat_a), (lon_b, lat_b) in coords:
            a, b = GeoPoint(lon_a, lat_a), GeoPoint(lon_b, lat_b)
            planar, spherical = distance_m(a, b, SINGAPORE), distance_m(a, b)
            self.assertAlmostEqual(planar, spherical, delta=max(1e-3 * spherical, 1e-6))


class TestDistrictMap(SimpleTestCase):
    def setUp(self):
        self.grid = TestGeoUtil.grid()

    def test_own_centroid(self):
        centroid = self.grid.districts[0].polygon.centroid
        self.assertEqual(district_of(GeoPoint(centroid.x, centroid.y), self.grid), 0)

    def test_outside_is_none(self):
        self.assertIsNone(self.grid.district_of(GeoPoint(100.0, 1.0)))

    def test_shared_edge_goes_to_lowest_id(self):
        # districts 3 and 7 share the horizontal edge between rows 0 and 1
        d3 = self.grid.districts[3].polygon.bounds
        d7 = self.grid.districts[7].polygon.bounds
        self.assertEqual(d3[3], d7[1])
        on_edge = GeoPoint((d3[0] + d3[2]) / 2.0, d3[3])
        self.assertEqual(self.grid.district_of(on_edge), 3)

    def test_agrees_with_winding_number_oracle(self):
        rng = np.random.default_rng(3)
        b = self.grid.bounds
        lons = rng.uniform(b[:, 0].min() - 0.01, b[:, 2].max() + 0.01, 10_000)
        lats = rng.uniform(b[:, 1].min() - 0.01, b[:, 3].max() + 0.01, 10_000)
        assigned = self.grid.assign(lons, lats)
        for lon, lat, got in zip(lons, lats, assigned):
            containing = [
                d.district_id
                for d in self.grid.districts
                if TestGeoUtil.winding_number(lon, lat, list(d.polygon.exterior.coords)) != 0
            ]
            if len(containing) == 1:
                self.assertEqual(got, containing[0])
            elif not containing:
                self.assertEqual(got, NO_DISTRICT)

    def test_concave_polygon_with_hole(self):
        ring = [(0, 0), (4, 0), (4, 4), (2, 1), (0, 4), (0, 0)]
        hole = [(0.5, 0.5), (1.0, 0.5), (1.0, 1.0), (0.5, 1.0), (0.5, 0.5)]
        dmap = DistrictMap([District(0, "notch", Polygon(ring, [hole]))])
        self.assertEqual(dmap.district_of(GeoPoint(3.5, 1.0)), 0)
        self.assertIsNone(dmap.district_of(GeoPoint(2.0, 3.0)))
        self.assertIsNone(dmap.district_of(GeoPoint(0.75, 0.75)))

    def test_geojson_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "districts.geojson"
            path.write_text(json.dumps(self.grid.to_feature_collection()))
            loaded = DistrictMap.from_geojson(path)
        self.assertEqual(len(loaded), 12)
        self.assertEqual(loaded.names, self.grid.names)
        self.assertEqual(loaded.projection_origin, SINGAPORE)

    def test_gapped_ids_rejected(self):
        square = [[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]
        collection = {
            "type": "FeatureCollection",
            "features": [TestGeoUtil.feature(0, "a", square), TestGeoUtil.feature(2, "b", square)],
        }
        with self.assertRaises(InputError) as ctx:
            DistrictMap.from_feature_collection(collection)
        self.assertEqual(ctx.exception.err_code, ErrorCode.INPUT_MALFORMED)

    def test_duplicate_ids_rejected(self):
        square = [[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]
        collection = {
            "type": "FeatureCollection",
            "features": [TestGeoUtil.feature(0, "a", square), TestGeoUtil.feature(0, "b", square)],
        }
        with self.assertRaises(InputError):
            DistrictMap.from_feature_collection(collection)

    def test_unclosed_ring_rejected(self):
        collection = {
            "type": "FeatureCollection",
            "features": [TestGeoUtil.feature(0, "a", [[0, 0], [1, 0], [1, 1], [0, 1]])],
        }
        with self.assertRaises(InputError):
            DistrictMap.from_feature_collection(collection)

    def test_self_intersecting_rejected(self):
        bowtie = [[0, 0], [1, 1], [1, 0], [0, 1], [0, 0]]
        collection = {"type": "FeatureCollection", "features": [TestGeoUtil.feature(0, "a", bowtie)]}
        with self.assertRaises(InputError):
            DistrictMap.from_feature_collection(collection)

    def test_missing_file(self):
        with self.assertRaises(InputError) as ctx:
            DistrictMap.from_geojson("/nonexistent/districts.geojson")
        self.assertEqual(ctx.exception.err_code, ErrorCode.INPUT_MISSING)

    def test_projected_polygon_area(self):
        area = self.grid.projected_polygon(5).area
        self.assertAlmostEqual(area, 3000.0 * 3000.0, delta=1.0)
