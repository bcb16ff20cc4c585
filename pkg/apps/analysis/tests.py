import io
import json
import tempfile
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.test import SimpleTestCase
from shapely.geometry import box

from apps.analysis import references
from apps.analysis.distance import (
    CLASSICAL_CONSTANT,
    PRINTED_CONSTANT,
    intra_district_mean_distance,
    mean_pair_distance,
)
from apps.analysis.mode_share import mode_share
from apps.analysis.private import private_od
from apps.analysis.ranking import candidate_pairs, connections_feature_collection, underserved_ranking
from apps.analysis.reports import DAY, build_report, write_report
from apps.common.exceptions import ErrorCode, OdflowError, ValidationError
from apps.geo.districts import grid_districts
from apps.geo.schemas import GeoPoint
from apps.od.files import write_matrices
from apps.od.matrix import ODMatrix
from apps.od.schemas import MatrixKind
from apps.od.windows import window_filters

ORIGIN = GeoPoint(lon=103.82, lat=1.35)
MONDAY = 1301875200.0
HOUR = 3600.0


class TestAnalysisUtil:
    def matrix(values, t_start=MONDAY, kind=MatrixKind.COUNT):
        return ODMatrix(np.array(values, dtype=float), t_start, t_start + HOUR, kind=kind)

    def hourly(cells: dict, n_districts=2, hours=24, kind=MatrixKind.COUNT):
        """One day of hourly matrices; ``cells`` maps hour -> {(i, k): count}."""
        matrices = []
        for hour in range(hours):
            values = np.zeros((n_districts, n_districts))
            for (i, k), count in cells.get(hour, {}).items():
                values[i, k] = count
            matrices.append(TestAnalysisUtil.matrix(values, MONDAY + hour * HOUR, kind))
        return matrices


class TestPrivateOd(SimpleTestCase):
    def test_subtraction_and_clamping(self):
        overall = TestAnalysisUtil.matrix([[5, 10], [4, 0]], kind=MatrixKind.ESTIMATE)
        public = TestAnalysisUtil.matrix([[1, 3], [6, 0]])
        private, diagnostics = private_od(overall, public)
        np.testing.assert_array_equal(private.values, [[4, 7], [0, 0]])
        self.assertEqual(diagnostics.n_clamped_cells, 1)
        self.assertEqual(diagnostics.residual, 2.0)
        self.assertEqual(private.kind, MatrixKind.ESTIMATE)

    def test_decomposition_identity(self):
        rng = np.random.default_rng(5)
        public = TestAnalysisUtil.matrix(rng.uniform(0, 50, (4, 4)))
        overall = public.with_values(public.values + rng.uniform(0, 50, (4, 4)), kind=MatrixKind.ESTIMATE)
        private, diagnostics = private_od(overall, public)
        np.testing.assert_allclose(public.values + private.values, overall.values, rtol=1e-12)
        self.assertEqual(diagnostics.residual, 0.0)

    def test_windows_must_match(self):
        with self.assertRaises(OdflowError) as ctx:
            private_od(TestAnalysisUtil.matrix(np.ones((2, 2))), TestAnalysisUtil.matrix(np.ones((2, 2)), MONDAY + HOUR))
        self.assertEqual(ctx.exception.err_code, ErrorCode.WINDOW_MISMATCH)


class TestModeShare(SimpleTestCase):
    def test_even_split_ignores_intra_district(self):
        public = {"morning": TestAnalysisUtil.matrix([[50, 10], [0, 0]])}
        private = {"morning": TestAnalysisUtil.matrix([[0, 4], [6, 70]])}
        report = mode_share(public, private)
        self.assertEqual(report.share("morning"), 0.5)

    def test_empty_window(self):
        zeros = {"midday": TestAnalysisUtil.matrix(np.zeros((2, 2)))}
        self.assertIsNone(mode_share(zeros, zeros).share("midday"))

    def test_scale_invariant(self):
        rng = np.random.default_rng(8)
        public = TestAnalysisUtil.matrix(rng.uniform(0, 9, (3, 3)))
        private = TestAnalysisUtil.matrix(rng.uniform(0, 9, (3, 3)))
        once = mode_share({"w": public}, {"w": private}).share("w")
        scaled = mode_share(
            {"w": public.with_values(public.values * 7)}, {"w": private.with_values(private.values * 7)}
        ).share("w")
        self.assertAlmostEqual(once, scaled, delta=1e-12)

    def test_missing_window(self):
        public = {"morning": TestAnalysisUtil.matrix(np.ones((2, 2)))}
        with self.assertRaises(OdflowError) as ctx:
            mode_share(public, {}, ["morning"])
        self.assertEqual(ctx.exception.err_code, ErrorCode.WINDOW_MISMATCH)


class TestUnderservedRanking(SimpleTestCase):
    def test_candidate_pool(self):
        grid = grid_districts(ORIGIN, 5, 11, 3600.0)
        self.assertEqual(candidate_pairs(len(grid)), 2970)
        zeros = TestAnalysisUtil.matrix(np.zeros((55, 55)))
        records = underserved_ranking(zeros, zeros, top_k=None)
        self.assertEqual(len(records), 2970)
        self.assertTrue(all(r.origin != r.dest for r in records))
        # all ties: row-major order
        self.assertEqual((records[0].origin, records[0].dest), (0, 1))
        self.assertEqual((records[54].origin, records[54].dest), (1, 0))

    def test_mostly_private_connection_is_flagged(self):
        public = TestAnalysisUtil.matrix([[0, 20, 5], [0, 0, 0], [0, 0, 0]])
        private = TestAnalysisUtil.matrix([[0, 80, 5], [1, 0, 0], [0, 0, 0]])
        records = underserved_ranking(public, private, top_k=3, window="morning")
        self.assertEqual((records[0].origin, records[0].dest), (0, 1))
        self.assertTrue(records[0].underserved)
        self.assertEqual(records[0].private_share, 0.8)
        self.assertEqual(records[0].window, "morning")
        # equal public and private is not underserved
        self.assertEqual((records[1].origin, records[1].dest), (0, 2))
        self.assertFalse(records[1].underserved)
        self.assertEqual(len(records), 3)

    def test_needs_two_districts(self):
        one = TestAnalysisUtil.matrix([[3]])
        with self.assertRaises(ValidationError):
            underserved_ranking(one, one)

    def test_connection_lines(self):
        grid = grid_districts(ORIGIN, 1, 2, 3000.0)
        public = TestAnalysisUtil.matrix([[0, 1], [0, 0]])
        private = TestAnalysisUtil.matrix([[0, 3], [0, 0]])
        collection = connections_feature_collection(underserved_ranking(public, private, 1), grid)
        (feature,) = collection["features"]
        self.assertEqual(feature["geometry"]["type"], "LineString")
        self.assertEqual(feature["properties"]["origin_name"], "D00")
        self.assertTrue(feature["properties"]["underserved"])


class TestIntraDistrictDistance(SimpleTestCase):
    def test_unit_square(self):
        rng = np.random.default_rng(0)
        self.assertAlmostEqual(mean_pair_distance(box(0, 0, 1, 1), 1_000_000, rng), 0.52141, delta=0.002)
        self.assertAlmostEqual(CLASSICAL_CONSTANT, 0.521405, delta=1e-6)
        self.assertAlmostEqual(PRINTED_CONSTANT, 0.796, delta=0.001)

    def test_district_sized_square(self):
        report = intra_district_mean_distance(grid_districts(ORIGIN, 1, 1, 3600.0), n_samples=200_000, seed=1)
        self.assertAlmostEqual(report.side_m, 3600.0, delta=1.0)
        self.assertAlmostEqual(report.mean_distance_m, 1877.0, delta=8.0)
        self.assertAlmostEqual(report.classical_estimate_m, 1877.0, delta=1.0)
        self.assertLess(report.mean_distance_m, references.DETECTABILITY_FLOOR_M)

    def test_identical_districts_agree(self):
        report = intra_district_mean_distance(grid_districts(ORIGIN, 1, 2, 2000.0), n_samples=100_000)
        first, second = (d.mean_distance_m for d in report.districts)
        self.assertAlmostEqual(first, second, delta=0.01 * first)

    def test_too_few_samples(self):
        with self.assertRaises(ValidationError):
            intra_district_mean_distance(grid_districts(ORIGIN, 1, 1, 1000.0), n_samples=100)


class TestReport(SimpleTestCase):
    def build(self):
        grid = grid_districts(ORIGIN, 1, 2, 3000.0)
        overall = TestAnalysisUtil.hourly({7: {(0, 1): 10.0, (1, 1): 2.0}, 18: {(1, 0): 5.0}}, kind=MatrixKind.ESTIMATE)
        # public trips only in two hours; the rest of the day is padded with zeros
        public = [m for m in TestAnalysisUtil.hourly({7: {(0, 1): 4.0}, 18: {(1, 0): 1.0}}) if m.total]
        bundle = build_report(overall, public, grid, window_filters(tz="UTC"), top_k=2, intra_samples=0)
        return grid, bundle

    def test_build_report(self):
        _, bundle = self.build()
        self.assertEqual(bundle.mode_share.share("morning"), 0.4)
        self.assertIsNone(bundle.mode_share.share("midday"))
        self.assertEqual(bundle.mode_share.share("evening"), 0.2)
        self.assertEqual(bundle.private[DAY].values[0, 1], 6.0)
        morning = bundle.rankings["morning"]
        self.assertEqual((morning[0].origin, morning[0].dest), (0, 1))
        self.assertTrue(morning[0].underserved)
        self.assertNotIn(DAY, bundle.rankings)
        self.assertIsNone(bundle.intra)
        self.assertAlmostEqual(bundle.evaluation["intra_district_share"]["detected"], 2.0 / 17.0)
        self.assertEqual(bundle.evaluation["public_split"]["value"], 5.0 / 15.0)

    def test_written_report_is_reproducible(self):
        grid, bundle = self.build()
        with tempfile.TemporaryDirectory() as tmp:
            first, second = Path(tmp) / "a", Path(tmp) / "b"
            write_report(bundle, first, grid, geojson=True)
            write_report(bundle, second, grid, geojson=True)
            for name in ("report.json", "mode_share.csv", "underserved_morning.csv", "underserved.geojson"):
                self.assertEqual((first / name).read_bytes(), (second / name).read_bytes())
            mode_shares = (first / "mode_share.csv").read_text().splitlines()
            self.assertEqual(mode_shares[0], "window,public_trips,private_trips,public_share")
            self.assertEqual(mode_shares[2], "midday,0,0,N/A")
            report = json.loads((first / "report.json").read_text())
            self.assertEqual(report["references"]["public_split"], references.PUBLIC_SPLIT)
            self.assertTrue((first / "od" / "morning_private.csv").is_file())


class TestReportCommand(SimpleTestCase):
    def test_report(self):
        grid = grid_districts(ORIGIN, 1, 2, 3000.0)
        overall = TestAnalysisUtil.hourly({8: {(0, 1): 9.0}})
        public = TestAnalysisUtil.hourly({8: {(0, 1): 3.0}})
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            (tmp / "districts.geojson").write_text(json.dumps(grid.to_feature_collection()))
            write_matrices(tmp / "overall.csv", overall)
            write_matrices(tmp / "public.csv", public)
            call_command(
                "report",
                overall=str(tmp / "overall.csv"),
                public=str(tmp / "public.csv"),
                districts=str(tmp / "districts.geojson"),
                out_dir=str(tmp / "report"),
                format="geojson",
                timezone="UTC",
                intra_samples=0,
                stdout=io.StringIO(),
            )
            report = json.loads((tmp / "report" / "report.json").read_text())
            lines = (tmp / "report" / "underserved_morning.csv").read_text().splitlines()
            self.assertTrue((tmp / "report" / "underserved.geojson").is_file())
        self.assertAlmostEqual(report["mode_share"]["morning"]["public_share"], 1.0 / 3.0)
        self.assertEqual(lines[1], "1,0,1,3,6,9,0.66666666666666663,1")
