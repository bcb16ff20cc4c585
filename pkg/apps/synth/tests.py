import io
import json
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.test import SimpleTestCase
from pydantic import ValidationError as PydanticValidationError

from apps.analysis.mode_share import mode_share
from apps.cdr.grouping import group_events
from apps.cdr.parsers import load_cdr, load_towers
from apps.cdr.stats import compute_user_stats, filter_frequent
from apps.cdr.trips import extract_all_trips
from apps.common.exceptions import ConfigError, ErrorCode, ExitCode, OdflowError
from apps.geo.districts import DistrictMap
from apps.od.aggregation import aggregate
from apps.od.binning import bin_trips
from apps.od.files import read_matrices
from apps.od.matrix import ODMatrix
from apps.od.windows import window_filters
from apps.synth.compare import compare, compare_series, mode_share_error, trip_recall
from apps.synth.generate import generate
from apps.synth.schemas import PUBLIC, WorldSpec
from apps.synth.utils import read_truth_trips, write_world
from apps.transit.journeys import chain_all, public_od
from apps.transit.parsers import StationIndex, load_legs

MONDAY = 1301875200.0
HOUR = 3600.0
SINGAPORE_OFFSET = 8 * HOUR


class TestSynthUtil:
    def spec(**changes):
        params = {"n_agents": 20, "n_days": 2, "frequent_fraction": 0.5, "seed": 7}
        params.update(changes)
        return WorldSpec(**params)

    def commuter(**changes):
        params = {
            "n_agents": 1,
            "frequent_fraction": 1.0,
            "home_districts": [0],
            "work_districts": [5],
            "n_days": 1,
            "public_share": {"morning": 1.0, "midday": 1.0, "evening": 1.0},
            "midday_trip_prob": 0.0,
            "transfer_prob": 0.0,
            "boundary_transfers": False,
        }
        params.update(changes)
        return WorldSpec(**params)

    def events(world):
        return world.cdr.rename(columns={"timestamp": "t"}).astype({"t": float})

    def legs(world):
        return world.legs.rename(columns={"board_time": "board_t", "alight_time": "alight_t"})

    def stations(world):
        frame = world.stations
        return StationIndex(frame["station_id"], frame["lon"], frame["lat"], world.district_map)


class TestGenerate(SimpleTestCase):
    def test_no_agents(self):
        world = generate(TestSynthUtil.spec(n_agents=0, n_days=5))
        self.assertTrue(world.cdr.empty)
        self.assertTrue(world.legs.empty)
        self.assertTrue(world.truth.trips.empty)
        self.assertEqual(len(world.truth.overall), 5 * 24)
        self.assertTrue(all(m.total == 0 for m in world.truth.overall + world.truth.public))

    def test_single_public_commuter(self):
        world = generate(TestSynthUtil.commuter())
        trips = world.truth.trips
        self.assertEqual(len(trips), 2)
        self.assertEqual(list(zip(trips["origin_district"], trips["dest_district"])), [(0, 5), (5, 0)])
        self.assertTrue((trips["mode"] == PUBLIC).all())
        morning_end = (trips["end_t"].iloc[0] - MONDAY + SINGAPORE_OFFSET) / HOUR
        self.assertTrue(7.25 <= morning_end <= 9.75)
        public = aggregate(world.truth.public)
        self.assertEqual(public.values[0, 5], 1.0)
        self.assertEqual(public.values[5, 0], 1.0)
        self.assertEqual(public.total, 2.0)
        self.assertEqual(aggregate(world.truth.private).total, 0.0)
        self.assertEqual(len(world.legs), 2)

    def test_decomposition_is_exact(self):
        world = generate(TestSynthUtil.spec(n_agents=60))
        for overall, public, private in zip(world.truth.overall, world.truth.public, world.truth.private):
            np.testing.assert_array_equal(overall.values, public.values + private.values)
        self.assertEqual(aggregate(world.truth.overall).total, len(world.truth.trips))

    def test_frequent_agents_are_exact(self):
        spec = TestSynthUtil.spec(n_agents=40, frequent_fraction=0.5)
        world = generate(spec)
        self.assertEqual(world.diagnostics.n_frequent, 20)
        groups = group_events(TestSynthUtil.events(world))
        frequent = filter_frequent(compute_user_stats(groups))
        truth_agents = world.truth.agents
        self.assertEqual(frequent, set(truth_agents.loc[truth_agents["frequent"] == 1, "user_id"]))
        trips, _ = extract_all_trips(groups.select(frequent), world.district_map)
        matrices, diagnostics = bin_trips(trips, world.district_map, span=world.truth.span)
        self.assertEqual(diagnostics.n_binned, (world.truth.trips["frequent"] == 1).sum())
        for extracted, truth in zip(matrices, world.truth.frequent_overall):
            np.testing.assert_array_equal(extracted.values, truth.values)

    def test_public_journeys_are_exact(self):
        world = generate(TestSynthUtil.spec(n_agents=40, transfer_prob=0.5))
        journeys, diagnostics = chain_all(TestSynthUtil.legs(world))
        self.assertGreater(diagnostics.n_multi_leg, 0)
        matrices, _ = public_od(journeys, TestSynthUtil.stations(world), span=world.truth.span)
        for inferred, truth in zip(matrices, world.truth.public):
            np.testing.assert_array_equal(inferred.values, truth.values)
        # boundary cards: 44:59 is one journey, 45:00 two
        boundary = journeys[journeys["card_id"].str.startswith("p")]
        self.assertEqual(list(boundary["n_legs"]), [2, 1, 1])

    def test_regeneration_is_deterministic(self):
        spec = TestSynthUtil.spec(n_agents=30)
        first, second, sharded = generate(spec), generate(spec), generate(spec, workers=3)
        for other in (second, sharded):
            pd.testing.assert_frame_equal(first.cdr, other.cdr)
            pd.testing.assert_frame_equal(first.legs, other.legs)
            pd.testing.assert_frame_equal(first.truth.trips, other.truth.trips)
        with tempfile.TemporaryDirectory() as tmp:
            a = write_world(first, Path(tmp) / "a")
            b = write_world(sharded, Path(tmp) / "b")
            for name, path in a.items():
                self.assertEqual(path.read_bytes(), b[name].read_bytes(), name)

    def test_event_rate(self):
        spec = TestSynthUtil.spec(
            n_agents=1000, n_days=1, frequent_fraction=1.0, regime="naturalistic", boundary_transfers=False
        )
        world = generate(spec)
        t = world.cdr.groupby("user_id")["timestamp"]
        means = (t.max() - t.min()) / (t.count() - 1) / 60.0
        self.assertAlmostEqual(means.mean(), spec.frequent_gap_min, delta=0.05 * spec.frequent_gap_min)

    def test_window_shares(self):
        spec = TestSynthUtil.spec(n_agents=2000, n_days=1, frequent_fraction=0.0, midday_trip_prob=1.0)
        world = generate(spec)
        filters = window_filters(tz=spec.timezone)
        public = {name: aggregate(world.truth.public, f) for name, f in filters.items()}
        private = {name: aggregate(world.truth.private, f) for name, f in filters.items()}
        report = mode_share(public, private)
        for window, share in spec.public_share.items():
            self.assertAlmostEqual(report.share(window), share, delta=0.05)

    def test_naturalistic_positions_are_towers(self):
        world = generate(TestSynthUtil.spec(regime="naturalistic"))
        towers = set(zip(world.towers["lon"], world.towers["lat"]))
        self.assertTrue(set(zip(world.cdr["lon"], world.cdr["lat"])) <= towers)


class TestWorldSpec(SimpleTestCase):
    def test_infeasible(self):
        with self.assertRaises(OdflowError) as ctx:
            generate(TestSynthUtil.spec(stations_per_district=0))
        self.assertEqual(ctx.exception.err_code, ErrorCode.INFEASIBLE_SPEC)
        self.assertEqual(ctx.exception.exit_code, ExitCode.CONFIG)
        with self.assertRaises(OdflowError):
            generate(TestSynthUtil.spec(min_trip_m=50_000))
        generate(TestSynthUtil.spec(stations_per_district=0, public_share={"morning": 0, "midday": 0, "evening": 0}))

    def test_invalid_values(self):
        with self.assertRaises(PydanticValidationError):
            WorldSpec(rows=1, cols=1)
        with self.assertRaises(PydanticValidationError):
            WorldSpec(public_share={"morning": 0.5})
        with self.assertRaises(PydanticValidationError):
            WorldSpec(frequent_fraction=1.5)

    def test_unknown_key(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "world.json"
            path.write_text(json.dumps({"n_agents": 3, "agents": 5}))
            with self.assertRaises(ConfigError) as ctx:
                WorldSpec.load(path)
        self.assertEqual(ctx.exception.data, {"agents": "Unknown key"})


class TestWorldFiles(SimpleTestCase):
    def test_files_parse_cleanly(self):
        world = generate(TestSynthUtil.spec(n_agents=25, transfer_prob=0.5))
        with tempfile.TemporaryDirectory() as tmp:
            paths = write_world(world, tmp)
            cdr = load_cdr(paths["cdr"], None)
            legs = load_legs(paths["legs"])
            district_map = DistrictMap.from_geojson(paths["districts"])
            stations = StationIndex.load(paths["stations"], district_map)
            towers = load_towers(paths["towers"])
            overall = read_matrices(paths["truth_overall"])
            truth_trips = read_truth_trips(paths["truth_trips"])
        self.assertEqual(cdr.diagnostics.n_malformed, 0)
        self.assertEqual(cdr.diagnostics.n_records, len(world.cdr))
        self.assertEqual(legs.diagnostics.n_malformed, 0)
        self.assertEqual(legs.diagnostics.n_legs, len(world.legs))
        self.assertEqual(len(district_map), 6)
        self.assertEqual(len(stations), len(world.stations))
        self.assertEqual(len(towers), 6 * 16)
        self.assertEqual(len(overall), len(world.truth.overall))
        for read, written in zip(overall, world.truth.overall):
            np.testing.assert_array_equal(read.values, written.values)
        self.assertEqual(len(truth_trips), len(world.truth.trips))


class TestCompare(SimpleTestCase):
    def matrix(self, values, t_start=MONDAY):
        return ODMatrix(np.array(values, dtype=float), t_start, t_start + HOUR)

    def test_identical(self):
        truth = self.matrix([[0, 3], [2, 1]])
        report = compare(truth, truth)
        self.assertEqual(report.relative_error, 0.0)
        self.assertEqual(report.cellwise_l1, 0.0)
        self.assertEqual(report.n_windows_exact, 1)

    def test_truth_scaled_by_two(self):
        inferred = self.matrix([[0, 3], [2, 1]])
        report = compare(inferred, inferred.with_values(inferred.values * 2))
        self.assertEqual(report.relative_error, 0.5)
        self.assertEqual(report.cellwise_l1, 6.0)

    def test_shape_mismatch(self):
        with self.assertRaises(OdflowError) as ctx:
            compare(self.matrix(np.ones((2, 2))), self.matrix(np.ones((3, 3))))
        self.assertEqual(ctx.exception.err_code, ErrorCode.SHAPE_MISMATCH)

    def test_series_with_missing_windows(self):
        truth = [self.matrix([[0, 1], [0, 0]]), self.matrix([[0, 0], [1, 0]], MONDAY + HOUR)]
        report = compare_series(truth[:1], truth)
        self.assertEqual(report.n_windows, 2)
        self.assertEqual(report.n_windows_exact, 1)
        self.assertEqual(report.relative_error, 0.5)

    def test_empty_truth(self):
        zeros = self.matrix(np.zeros((2, 2)))
        self.assertEqual(compare(zeros, zeros).relative_error, 0.0)
        self.assertIsNone(compare(self.matrix([[0, 1], [0, 0]]), zeros).relative_error)

    def test_mode_share_error(self):
        public = {"morning": self.matrix([[0, 4], [0, 0]])}
        truth = mode_share(public, {"morning": self.matrix([[0, 6], [0, 0]])})
        inferred = mode_share(public, {"morning": self.matrix([[0, 4], [0, 0]])})
        self.assertAlmostEqual(mode_share_error(inferred, truth)["morning"], 0.1)


class TestTripRecall(SimpleTestCase):
    def test_bands(self):
        truth = pd.DataFrame(
            {
                "user_id": ["u1", "u1", "u2", "u2", "u2", "p0"],
                "frequent": [1, 1, 1, 1, 0, 0],
                "end_t": [MONDAY + 100, MONDAY + 9000, MONDAY + 200, MONDAY + 200, MONDAY + 300, MONDAY],
                "origin_district": [0, 1, 2, 2, 0, 0],
                "dest_district": [1, 0, 3, 3, 1, 1],
                "displacement_m": [1500.0, 3000.0, 7000.0, 7000.0, 3000.0, np.nan],
            }
        )
        extracted = pd.DataFrame(
            {
                "user_id": ["u1", "u2", "u9"],
                # same bin as the truth trip (second 9000 lies in hour 2)
                "end_t": [MONDAY + 7300, MONDAY + 3599, MONDAY + 100],
                "origin_district": [1, 2, 0],
                "dest_district": [0, 3, 1],
            }
        )
        recall = trip_recall(extracted, truth)
        self.assertEqual(recall["<2km"], {"truth": 1, "matched": 0, "recall": 0.0})
        self.assertEqual(recall["2-5km"], {"truth": 1, "matched": 1, "recall": 1.0})
        # one extracted trip matches only one of two identical truth trips
        self.assertEqual(recall[">=5km"], {"truth": 2, "matched": 1, "recall": 0.5})
        everyone = trip_recall(extracted, truth, frequent_only=False)
        self.assertEqual(everyone["2-5km"]["truth"], 2)


class TestSynthCommands(SimpleTestCase):
    def test_synth_and_compare(self):
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            (tmp / "world.json").write_text(json.dumps({"n_agents": 10, "n_days": 1}))
            call_command("synth", spec=str(tmp / "world.json"), out_dir=str(tmp / "world"), stdout=io.StringIO())
            world = json.loads((tmp / "world" / "world.json").read_text())
            truth = str(tmp / "world" / "truth" / "overall.csv")
            call_command("compare", inferred=truth, truth=truth, out=str(tmp / "compare.json"), stdout=io.StringIO())
            report = json.loads((tmp / "compare.json").read_text())
        self.assertEqual(world["spec"]["n_agents"], 10)
        self.assertEqual(world["diagnostics"]["n_agents"], 10)
        self.assertEqual(report["relative_error"], 0.0)
        self.assertEqual(report["n_windows_exact"], report["n_windows"])
