import io
import json
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.test import SimpleTestCase

from apps.cdr.grouping import group_events
from apps.cdr.schemas import EventRecord
from apps.common.exceptions import ValidationError
from apps.geo.districts import grid_districts
from apps.geo.projection import distance_m, unproject
from apps.geo.schemas import GeoPoint, LocalXY
from apps.places.clustering import cluster_positions, detect_places, significant_places
from apps.places.schemas import PlaceSchema, SignificantPlace
from apps.places.shares import district_shares, place_counts_frame
from apps.places.utils import read_place_counts, write_place_counts

ORIGIN = GeoPoint(lon=103.82, lat=1.35)


class TestPlacesUtil:
    def at(dx_m, dy_m):
        return unproject(LocalXY(dx_m, dy_m), ORIGIN)

    def events(user_id, positions):
        """One event per minute at the given (dx_m, dy_m) offsets."""
        return [EventRecord(user_id, 60.0 * i, TestPlacesUtil.at(dx, dy)) for i, (dx, dy) in enumerate(positions)]

    def frame(records):
        return pd.DataFrame(
            {
                "user_id": [r.user_id for r in records],
                "t": [r.t for r in records],
                "lon": [r.pos.lon for r in records],
                "lat": [r.pos.lat for r in records],
            }
        )

    def places_in(district_map, district_id, count, user_prefix):
        point = district_map.representative_point(district_id)
        return [SignificantPlace(f"{user_prefix}{i}", 1, point, 0.5, 10) for i in range(count)]


class TestSignificantPlaces(SimpleTestCase):
    def test_single_location(self):
        events = TestPlacesUtil.events("u", [(300.0, 200.0)] * 8)
        (place,) = significant_places(events, origin=ORIGIN)
        self.assertEqual(place.share, 1.0)
        self.assertEqual(place.rank, 1)
        self.assertLess(distance_m(place.centroid, events[0].pos, ORIGIN), 1e-6)

    def test_home_work_and_noise(self):
        positions = [(0.0, 0.0)] * 12 + [(5000.0, 0.0)] * 6 + [(0.0, 10000.0), (-9000.0, -9000.0)]
        places = significant_places(TestPlacesUtil.events("u", positions), origin=ORIGIN)
        self.assertEqual([p.share for p in places], [0.6, 0.3])
        self.assertLess(distance_m(places[0].centroid, TestPlacesUtil.at(0.0, 0.0), ORIGIN), 1e-6)
        self.assertLess(distance_m(places[1].centroid, TestPlacesUtil.at(5000.0, 0.0), ORIGIN), 1e-6)

    def test_nearby_event_joins_cluster(self):
        positions = [(0.0, 0.0), (0.0, 0.0), (500.0, 0.0)]
        (place,) = significant_places(TestPlacesUtil.events("u", positions), origin=ORIGIN)
        self.assertEqual(place.share, 1.0)
        self.assertEqual(place.n_events, 3)
        self.assertLess(distance_m(place.centroid, TestPlacesUtil.at(500.0 / 3.0, 0.0), ORIGIN), 1e-6)

    def test_scattered_user_has_no_places(self):
        positions = [(5000.0 * i, 0.0) for i in range(10)]
        self.assertEqual(significant_places(TestPlacesUtil.events("u", positions), origin=ORIGIN), [])

    def test_no_events(self):
        with self.assertRaises(ValidationError):
            significant_places([])


class TestPlacesProperty(SimpleTestCase):
    def test_radius_contract_and_shares(self):
        rng = np.random.default_rng(41)
        for _ in range(100):
            n = int(rng.integers(1, 150))
            centres = rng.uniform(-6000, 6000, (3, 2))
            picks = centres[rng.integers(0, 3, n)] + rng.normal(0, 700, (n, 2))
            clustering = cluster_positions(picks[:, 0], picks[:, 1], 1000.0, 50)
            self.assertLessEqual(clustering.n_iter, 50)
            assigned = clustering.labels >= 0
            labels = clustering.labels[assigned]
            d = np.hypot(picks[assigned, 0] - clustering.cx[labels], picks[assigned, 1] - clustering.cy[labels])
            self.assertTrue(np.all(d <= 1000.0))
            self.assertLessEqual(clustering.members().sum(), n)

            events = [EventRecord("u", float(i), TestPlacesUtil.at(x, y)) for i, (x, y) in enumerate(picks)]
            places = significant_places(events, origin=ORIGIN)
            self.assertTrue(all(p.share >= 0.15 for p in places))
            self.assertLessEqual(sum(p.share for p in places), 1.0 + 1e-12)
            self.assertEqual([p.rank for p in places], list(range(1, len(places) + 1)))

    def test_converged_assignment_is_fixed_point(self):
        rng = np.random.default_rng(43)
        xy = np.concatenate([rng.normal(0, 300, (40, 2)), rng.normal(4000, 300, (30, 2))])
        clustering = cluster_positions(xy[:, 0], xy[:, 1], 1000.0, 50)
        self.assertTrue(clustering.converged)
        for k in range(len(clustering.cx)):
            members = xy[clustering.labels == k]
            if len(members):
                self.assertAlmostEqual(members[:, 0].mean(), clustering.cx[k])
                self.assertAlmostEqual(members[:, 1].mean(), clustering.cy[k])


class TestDistrictShares(SimpleTestCase):
    def setUp(self):
        self.grid = grid_districts(ORIGIN, 2, 3, 4000.0)

    def test_no_frequent_users(self):
        everyone = TestPlacesUtil.places_in(self.grid, 2, 4, "a")
        shares = district_shares([], everyone, self.grid)
        self.assertEqual(shares.phi, 0.0)
        self.assertEqual(list(shares.phi_i), [0.0] * 6)

    def test_share_per_district(self):
        frequent = TestPlacesUtil.places_in(self.grid, 5, 20, "f")
        everyone = frequent + TestPlacesUtil.places_in(self.grid, 5, 30, "i") + TestPlacesUtil.places_in(self.grid, 0, 10, "i")
        shares = district_shares(frequent, everyone, self.grid)
        self.assertAlmostEqual(shares.phi_i[5], 0.40)
        self.assertAlmostEqual(shares.phi, 20 / 60)
        self.assertEqual(int(shares.n.sum()) + shares.n_none, len(everyone))
        self.assertEqual(shares.empty_districts, [1, 2, 3, 4])

    def test_places_outside_every_district(self):
        far = [SignificantPlace("x", 1, TestPlacesUtil.at(50_000.0, 0.0), 1.0, 5)]
        shares = district_shares([], far, self.grid)
        self.assertEqual(shares.n_none, 1)
        self.assertEqual(int(shares.n.sum()), 0)

    def test_scale_free(self):
        frequent = TestPlacesUtil.places_in(self.grid, 1, 3, "f")
        everyone = frequent + TestPlacesUtil.places_in(self.grid, 1, 4, "i")
        once = district_shares(frequent, everyone, self.grid)
        twice = district_shares(frequent * 2, everyone * 2, self.grid)
        np.testing.assert_array_equal(once.phi_i, twice.phi_i)
        self.assertEqual(once.phi, twice.phi)

    def test_place_counts_file(self):
        frequent = TestPlacesUtil.places_in(self.grid, 5, 2, "f")
        shares = district_shares(frequent, frequent + TestPlacesUtil.places_in(self.grid, 3, 3, "i"), self.grid)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "place_counts.csv"
            write_place_counts(path, place_counts_frame(shares, self.grid))
            loaded = read_place_counts(path)
        np.testing.assert_array_equal(loaded.m, shares.m)
        np.testing.assert_array_equal(loaded.n, shares.n)


class TestDetectPlaces(SimpleTestCase):
    def setUp(self):
        self.grid = grid_districts(ORIGIN, 2, 3, 4000.0)

    def population(self, n_users=10):
        records = []
        for i in range(n_users):
            home, work = (-5000.0 + 100 * i, -1500.0), (5000.0, 1500.0 - 100 * i)
            positions = [home] * 10 + [work] * 8 + [(0.0, 3000.0)]
            records += TestPlacesUtil.events(f"user{i:02d}", positions)
        return group_events(TestPlacesUtil.frame(records))

    def test_home_and_work_districts(self):
        places, diagnostics = detect_places(self.population(), self.grid)
        self.assertEqual(diagnostics.n_places, 20)
        self.assertEqual(diagnostics.n_users_without_places, 0)
        self.assertEqual({p.district for p in places if p.rank == 1}, {0})
        self.assertEqual({p.district for p in places if p.rank == 2}, {5})

    def test_same_result_for_any_worker_count(self):
        groups = self.population(16)
        single, _ = detect_places(groups, self.grid, PlaceSchema(), workers=1)
        sharded, _ = detect_places(groups, self.grid, PlaceSchema(), workers=3)
        self.assertEqual(single, sharded)

    def test_places_command(self):
        records = TestPlacesUtil.events("u1", [(-5000.0, -1500.0)] * 5 + [(5000.0, 1500.0)] * 5)
        data = "user_id,timestamp,lon,lat\n" + "".join(
            f"{r.user_id},{r.t:.0f},{r.pos.lon!r},{r.pos.lat!r}\n" for r in records
        )
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            (tmp / "cdr.csv").write_text(data)
            (tmp / "districts.geojson").write_text(json.dumps(self.grid.to_feature_collection()))
            call_command(
                "places",
                cdr=str(tmp / "cdr.csv"),
                districts=str(tmp / "districts.geojson"),
                out=str(tmp / "places.csv"),
                stdout=io.StringIO(),
            )
            places = (tmp / "places.csv").read_text().splitlines()
            counts = (tmp / "place_counts.csv").read_text().splitlines()
        self.assertEqual(places[0], "user_id,rank,lon,lat,share,district_id")
        self.assertEqual(len(places), 3)
        self.assertTrue(places[1].endswith(",0.5,0"))
        self.assertEqual(counts[0], "district_id,name,frequent_places,all_places,phi")
        self.assertEqual(counts[1], "0,D00,1,1,1")
