import io
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from apps.cdr.grouping import group_events
from apps.cdr.parsers import parse_cdr
from apps.cdr.schemas import CdrSchema, DwellCluster, EventRecord, UserStats, VirtualLocation
from apps.cdr.stats import compute_user_stats, filter_frequent, summarize, user_stats
from apps.cdr.trips import (
    extract_all_trips,
    extract_clusters,
    extract_trips,
    extract_virtual_locations,
    read_trips,
    write_trips,
)
from apps.common.exceptions import ErrorCode, InputError
from apps.geo.districts import grid_districts
from apps.geo.projection import distance_m, unproject
from apps.geo.schemas import GeoPoint, LocalXY

ORIGIN = GeoPoint(lon=103.82, lat=1.35)
HEADER = b"user_id,timestamp,lon,lat\n"


class TestCdrUtil:
    def at(dx_m, dy_m):
        return unproject(LocalXY(dx_m, dy_m), ORIGIN)

    def events(user_id, rows):
        """rows of (minute, dx_m, dy_m)"""
        return [EventRecord(user_id, minute * 60.0, TestCdrUtil.at(dx, dy)) for minute, dx, dy in rows]

    def csv_bytes(records):
        lines = [f"{r.user_id},{r.t:.0f},{r.pos.lon!r},{r.pos.lat!r}" for r in records]
        return HEADER + "".join(line + "\n" for line in lines).encode()

    def cluster(t_first_min, t_last_min, n_records=3, dx=0.0):
        return DwellCluster(TestCdrUtil.at(dx, 0.0), t_first_min * 60.0, t_last_min * 60.0, n_records)

    def stay(minute_from, minute_to, dx, dy, step=10):
        return [(m, dx, dy) for m in range(minute_from, minute_to + 1, step)]


class TestParseCdr(SimpleTestCase):
    def test_empty_file_with_header(self):
        parsed = parse_cdr(io.BytesIO(HEADER))
        self.assertEqual(parsed.diagnostics.n_records, 0)
        self.assertEqual(parsed.diagnostics.n_malformed, 0)
        self.assertEqual(len(parsed.events), 0)

    def test_malformed_line_counted_and_skipped(self):
        data = HEADER + b"u1,100,103.8,1.3\nu1,200,103.8,abc\nu2,300,103.9,1.31\nu3,400,103.7,1.29\n"
        parsed = parse_cdr(io.BytesIO(data), CdrSchema(max_malformed_fraction=0.5))
        self.assertEqual(parsed.diagnostics.n_records, 3)
        self.assertEqual(parsed.diagnostics.n_malformed, 1)
        self.assertEqual(list(parsed.events["user_id"]), ["u1", "u2", "u3"])

    def test_too_many_malformed_lines_is_fatal(self):
        data = HEADER + b"u1,100,103.8,1.3\nu1,200,103.8,abc\nu2,300,103.9,1.31\nu3,400,103.7,1.29\n"
        with self.assertRaises(InputError) as ctx:
            parse_cdr(io.BytesIO(data))
        self.assertEqual(ctx.exception.err_code, ErrorCode.INPUT_MALFORMED)
        self.assertEqual(ctx.exception.exit_code, 2)

    def test_invalid_utf8_line_is_malformed(self):
        data = HEADER + b"u1,1000,103.8,1.35\n" * 300 + b"u\xff,2000,103.8,1.35\n"
        parsed = parse_cdr(io.BytesIO(data))
        self.assertEqual(parsed.diagnostics.n_records, 300)
        self.assertEqual(parsed.diagnostics.n_malformed, 1)
        self.assertEqual(parsed.diagnostics.n_bytes, len(data))

    def test_wrong_field_count_and_out_of_range(self):
        data = HEADER + b"u1,100,103.8\nu1,100,103.8,1.3,9\nu1,100,190.0,1.3\n,100,103.8,1.3\n" + b"u1,100,103.8,1.3\n" * 6
        parsed = parse_cdr(io.BytesIO(data), CdrSchema(max_malformed_fraction=0.5))
        self.assertEqual(parsed.diagnostics.n_malformed, 4)
        self.assertEqual(parsed.diagnostics.n_records, 6)

    def test_unreadable_header_is_fatal(self):
        with self.assertRaises(InputError):
            parse_cdr(io.BytesIO(b"who,when,where\nu1,1,2\n"))
        with self.assertRaises(InputError):
            parse_cdr(io.BytesIO(b""))

    def test_byte_count_matches_stream(self):
        records = TestCdrUtil.events("u1", [(m, m * 10.0, 0.0) for m in range(2000)])
        data = TestCdrUtil.csv_bytes(records)
        parsed = parse_cdr(io.BytesIO(data), CdrSchema(chunk_rows=300))
        self.assertEqual(parsed.diagnostics.n_bytes, len(data))
        self.assertEqual(parsed.diagnostics.n_records, 2000)
        self.assertEqual(parsed.diagnostics.n_lines, 2000)

    def test_rfc3339_timestamps(self):
        data = HEADER + b"u1,2011-04-04T08:00:00+08:00,103.8,1.3\nu1,2011-04-04T00:30:00Z,103.8,1.3\n"
        parsed = parse_cdr(io.BytesIO(data), CdrSchema(ts_format="rfc3339"))
        self.assertEqual(list(parsed.events["t"]), [1301875200.0, 1301877000.0])

    def test_tower_mode(self):
        data = b"user_id,timestamp,tower_id\nu1,100,T1\nu1,200,T2\nu1,300,T9\n"
        schema = CdrSchema(towers={"T1": (103.8, 1.3), "T2": (103.9, 1.31)}, max_malformed_fraction=0.5)
        parsed = parse_cdr(io.BytesIO(data), schema)
        self.assertEqual(parsed.diagnostics.n_records, 2)
        self.assertEqual(parsed.diagnostics.n_malformed, 1)
        self.assertEqual(list(parsed.events["lon"]), [103.8, 103.9])

    def test_study_window(self):
        data = HEADER + b"u1,50,103.8,1.3\nu1,100,103.8,1.3\nu1,200,103.8,1.3\n"
        parsed = parse_cdr(io.BytesIO(data), CdrSchema(study_start=100, study_end=200))
        self.assertEqual(parsed.diagnostics.n_records, 1)
        self.assertEqual(parsed.diagnostics.n_out_of_window, 2)

    def test_records_iterate_in_file_order(self):
        data = HEADER + b"u2,300,103.8,1.3\nu1,100,103.9,1.31\n"
        records = list(parse_cdr(io.BytesIO(data)).records())
        self.assertEqual([r.user_id for r in records], ["u2", "u1"])
        self.assertEqual(records[1].pos, GeoPoint(103.9, 1.31))


class TestUserStats(SimpleTestCase):
    def test_uniform_spacing(self):
        stats = user_stats(TestCdrUtil.events("u", [(0, 0, 0), (60, 0, 0), (120, 0, 0)]))
        self.assertAlmostEqual(stats.inter_event_mean_min, 60.0)
        self.assertEqual(stats.quartiles_min, (60.0, 60.0, 60.0))

    def test_uneven_spacing(self):
        stats = user_stats(TestCdrUtil.events("u", [(0, 0, 0), (10, 0, 0), (110, 0, 0)]))
        self.assertAlmostEqual(stats.inter_event_mean_min, 55.0)
        self.assertEqual(stats.quartiles_min, (32.5, 55.0, 77.5))

    def test_single_event_has_no_inter_event_time(self):
        stats = user_stats(TestCdrUtil.events("u", [(5, 0, 0)]))
        self.assertEqual(stats.n_events, 1)
        self.assertIsNone(stats.inter_event_mean_min)

    def test_vectorised_stats_agree(self):
        rng = np.random.default_rng(5)
        records = []
        for user in range(30):
            minutes = np.sort(rng.uniform(0, 5000, rng.integers(1, 40)))
            records += [EventRecord(f"u{user:02d}", m * 60.0, ORIGIN) for m in minutes]
        groups = group_events(_frame(records))
        bulk = {s.user_id: s for s in compute_user_stats(groups)}
        for user in range(30):
            own = [r for r in records if r.user_id == f"u{user:02d}"]
            single = user_stats(own)
            self.assertEqual(bulk[single.user_id].n_events, single.n_events)
            if single.inter_event_mean_min is None:
                self.assertIsNone(bulk[single.user_id].inter_event_mean_min)
            else:
                self.assertAlmostEqual(bulk[single.user_id].inter_event_mean_min, single.inter_event_mean_min, places=9)
                np.testing.assert_allclose(bulk[single.user_id].quartiles_min, single.quartiles_min)


def _frame(records):
    return pd.DataFrame(
        {
            "user_id": [r.user_id for r in records],
            "t": [r.t for r in records],
            "lon": [r.pos.lon for r in records],
            "lat": [r.pos.lat for r in records],
        }
    )


class TestFrequentFilter(SimpleTestCase):
    def test_strict_threshold(self):
        stats = [UserStats("a", 10, 59.99, (1, 2, 3)), UserStats("b", 10, 60.0, (1, 2, 3)), UserStats("c", 1)]
        self.assertEqual(filter_frequent(stats, 60.0), {"a"})

    def test_empty(self):
        self.assertEqual(filter_frequent([]), set())

    def test_summary(self):
        stats = [UserStats("a", 3, 10.0, (1, 2, 3)), UserStats("b", 3, 300.0, (1, 2, 3)), UserStats("c", 1)]
        summary, diagnostics = summarize(stats)
        self.assertEqual(diagnostics.n_users_single_event, 1)
        self.assertEqual(diagnostics.n_frequent, 1)
        self.assertAlmostEqual(summary["mean_min"], 155.0)
        self.assertAlmostEqual(summary["frequent_share"], 0.5)


class TestStatsProperty(SimpleTestCase):
    def test_telescoping_identity(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            times = np.sort(rng.uniform(0, 10**6, rng.integers(2, 200)))
            naive = sum(times[i] - times[i - 1] for i in range(1, len(times))) / (len(times) - 1) / 60.0
            events = [EventRecord("u", t, ORIGIN) for t in times]
            self.assertAlmostEqual(user_stats(events).inter_event_mean_min, naive, delta=1e-9)


class TestVirtualLocations(SimpleTestCase):
    def test_single_event(self):
        events = TestCdrUtil.events("u", [(0, 500.0, 0.0)])
        (vloc,) = extract_virtual_locations(events, origin=ORIGIN)
        self.assertEqual(vloc.n_records, 1)
        self.assertLess(distance_m(vloc.centroid, events[0].pos, ORIGIN), 1e-6)

    def test_two_events_one_km_apart(self):
        events = TestCdrUtil.events("u", [(0, 0.0, 0.0), (5, 1000.0, 0.0)])
        (vloc,) = extract_virtual_locations(events, origin=ORIGIN)
        self.assertEqual(vloc.n_records, 2)
        self.assertLess(distance_m(vloc.centroid, TestCdrUtil.at(500.0, 0.0), ORIGIN), 1e-6)

    def test_jump_breaks_runs(self):
        events = TestCdrUtil.events("u", [(0, 0.0, 0.0), (5, 3000.0, 0.0), (10, 0.0, 0.0)])
        self.assertEqual(len(extract_virtual_locations(events, origin=ORIGIN)), 3)

    def test_anchor_is_first_point_of_run(self):
        # each step is 1.5 km but the third point is 3 km from the anchor
        events = TestCdrUtil.events("u", [(0, 0.0, 0.0), (5, 1500.0, 0.0), (10, 3000.0, 0.0)])
        vlocs = extract_virtual_locations(events, origin=ORIGIN)
        self.assertEqual([v.n_records for v in vlocs], [2, 1])

    def test_event_partition(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            n = int(rng.integers(1, 80))
            rows = [(i, *rng.uniform(-4000, 4000, 2)) for i in range(n)]
            vlocs = extract_virtual_locations(TestCdrUtil.events("u", rows), origin=ORIGIN)
            self.assertEqual(sum(v.n_records for v in vlocs), n)
            for before, after in zip(vlocs, vlocs[1:]):
                self.assertLessEqual(before.t_last, after.t_first)


class TestClustersAndTrips(SimpleTestCase):
    def test_single_record_dropped(self):
        vloc = VirtualLocation(ORIGIN, 0.0, 3600.0, 1)
        self.assertEqual(extract_clusters([vloc]), [])

    def test_dwell_boundary_is_strict(self):
        self.assertEqual(extract_clusters([VirtualLocation(ORIGIN, 0.0, 1200.0, 4)]), [])
        self.assertEqual(len(extract_clusters([VirtualLocation(ORIGIN, 0.0, 1200.5, 4)])), 1)

    def test_kept_cluster(self):
        (cluster,) = extract_clusters([VirtualLocation(ORIGIN, 0.0, 45 * 60.0, 3)])
        self.assertIsInstance(cluster, DwellCluster)
        self.assertEqual(cluster.n_records, 3)

    def test_one_cluster_no_trip(self):
        self.assertEqual(extract_trips([TestCdrUtil.cluster(0, 60)]), [])

    def test_two_clusters_one_trip(self):
        first, second = TestCdrUtil.cluster(0, 60), TestCdrUtil.cluster(90, 200, dx=5000.0)
        (trip,) = extract_trips([first, second], "u")
        self.assertEqual(trip.start_t, first.t_last)
        self.assertEqual(trip.end_t, second.t_first)
        self.assertEqual(trip.user_id, "u")


class TestTripExtraction(SimpleTestCase):
    def setUp(self):
        self.grid = grid_districts(ORIGIN, 2, 3, 4000.0)

    def commuter(self, user_id="u1"):
        # home in district 0, work in district 5 (opposite corner)
        home, work = (-5000.0, -1500.0), (5000.0, 1500.0)
        rows = TestCdrUtil.stay(0, 420, *home)
        rows += TestCdrUtil.stay(480, 1020, *work)
        rows += TestCdrUtil.stay(1080, 1440, *home)
        return TestCdrUtil.events(user_id, rows)

    def test_home_work_home(self):
        groups = group_events(_frame(self.commuter()))
        trips, diagnostics = extract_all_trips(groups, self.grid)
        self.assertEqual(len(trips), 2)
        self.assertEqual([(t.origin_district, t.dest_district) for t in trips], [(0, 5), (5, 0)])
        self.assertEqual(trips[0].start_t, 420 * 60.0)
        self.assertEqual(trips[0].end_t, 480 * 60.0)
        self.assertEqual(diagnostics.n_clusters, 3)

    def test_zero_length_trip_is_counted(self):
        # last record at home and first record at work share minute 420
        rows = TestCdrUtil.stay(0, 420, -5000.0, -1500.0)
        rows += TestCdrUtil.stay(420, 1020, 5000.0, 1500.0)
        rows += TestCdrUtil.stay(1080, 1440, -5000.0, -1500.0)
        groups = group_events(_frame(TestCdrUtil.events("u1", rows)))
        for workers in (1, 2):
            trips, diagnostics = extract_all_trips(groups, self.grid, workers=workers)
            self.assertEqual([(t.origin_district, t.dest_district) for t in trips], [(5, 0)])
            self.assertEqual(diagnostics.n_clusters, 3)
            self.assertEqual(diagnostics.n_trips_dropped_nonpositive, 1)

    def test_detectability_floor(self):
        rng = np.random.default_rng(29)
        for case in range(1000):
            d = rng.uniform(0.0, 1999.0)
            angle = rng.uniform(0, 2 * np.pi)
            b = (d * np.cos(angle), d * np.sin(angle))
            rows = TestCdrUtil.stay(0, 120, 0.0, 0.0, 30) + TestCdrUtil.stay(150, 300, *b, 30) + TestCdrUtil.stay(330, 480, 0.0, 0.0, 30)
            vlocs = extract_virtual_locations(TestCdrUtil.events("u", rows), origin=ORIGIN)
            self.assertEqual(extract_trips(extract_clusters(vlocs)), [], f"case {case}: {d:.0f} m")

    def test_end_times_strictly_increasing(self):
        groups = group_events(_frame(self.commuter("a") + self.commuter("b")))
        trips, _ = extract_all_trips(groups, self.grid)
        for user in ("a", "b"):
            ends = [t.end_t for t in trips if t.user_id == user]
            self.assertTrue(all(x < y for x, y in zip(ends, ends[1:])))

    def test_same_result_for_any_worker_count(self):
        events = []
        for i in range(12):
            events += self.commuter(f"user{i:02d}")
        groups = group_events(_frame(events))
        single, _ = extract_all_trips(groups, self.grid, workers=1)
        sharded, _ = extract_all_trips(groups, self.grid, workers=3)
        self.assertEqual(single, sharded)

    def test_trips_file_round_trip(self):
        trips, _ = extract_all_trips(group_events(_frame(self.commuter())), self.grid)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "trips.csv"
            write_trips(path, trips)
            frame = read_trips(path)
        self.assertEqual(list(frame["end_t"]), [t.end_t for t in trips])
        self.assertEqual(list(frame["dest_district"]), [5, 0])


class TestCdrCommands(SimpleTestCase):
    def test_missing_districts_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            cdr = Path(tmp) / "cdr.csv"
            cdr.write_bytes(HEADER)
            err = io.StringIO()
            with self.assertRaises(CommandError) as ctx:
                call_command(
                    "trips", cdr=str(cdr), districts=str(Path(tmp) / "none.geojson"),
                    out=str(Path(tmp) / "trips.csv"), stderr=err,
                )
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('"code": "input-missing"', err.getvalue())

    def test_stats_command(self):
        records = TestCdrUtil.events("u1", [(0, 0, 0), (30, 0, 0), (60, 0, 0)]) + TestCdrUtil.events("u2", [(0, 0, 0), (300, 0, 0)])
        with tempfile.TemporaryDirectory() as tmp:
            cdr = Path(tmp) / "cdr.csv"
            cdr.write_bytes(TestCdrUtil.csv_bytes(records))
            out = io.StringIO()
            call_command("stats", cdr=str(cdr), out=str(Path(tmp) / "stats.csv"), stdout=out)
            lines = (Path(tmp) / "stats.csv").read_text().splitlines()
        self.assertEqual(lines[0], "user_id,n_events,inter_event_mean_min,t25_min,t50_min,t75_min,frequent")
        self.assertTrue(lines[1].endswith(",1"))
        self.assertTrue(lines[2].endswith(",0"))
        self.assertIn('"frequent_share": 0.5', out.getvalue())
