import io
import json
import tempfile
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from apps.cdr.trips import TRIP_COLUMNS
from apps.common.exceptions import ErrorCode, ExitCode, InputError, OdflowError, ValidationError
from apps.geo.districts import grid_districts
from apps.geo.schemas import GeoPoint
from apps.od.aggregation import aggregate
from apps.od.binning import aligned_span, bin_counts
from apps.od.files import read_matrices, write_matrices
from apps.od.matrix import ODMatrix
from apps.od.scaling import correct_bias, correct_bias_series, correction_factors, subscriber_check, upscale
from apps.od.schemas import MatrixKind, Normalization, ScalingConfig
from apps.od.windows import WindowFilter, window_filters
from apps.places.schemas import DistrictShares

# Monday 2011-04-04 00:00 UTC
MONDAY = 1301875200.0
HOUR = 3600.0
DAY = 86400.0


class TestOdUtil:
    def shares(m, n):
        return DistrictShares(np.array(m), np.array(n))

    def matrix(values, t_start=MONDAY, hours=1, **kwargs):
        return ODMatrix(np.array(values, dtype=float), t_start, t_start + hours * HOUR, **kwargs)

    def random_matrix(rng, n_districts=4, t_start=MONDAY):
        return TestOdUtil.matrix(rng.uniform(0, 100, (n_districts, n_districts)), t_start)


class TestODMatrix(SimpleTestCase):
    def test_must_be_square(self):
        with self.assertRaises(OdflowError) as ctx:
            ODMatrix(np.zeros((2, 3)), 0.0, 1.0)
        self.assertEqual(ctx.exception.err_code, ErrorCode.SHAPE_MISMATCH)

    def test_window_order(self):
        with self.assertRaises(ValidationError):
            ODMatrix(np.zeros((2, 2)), 5.0, 5.0)

    def test_counts_are_non_negative(self):
        with self.assertRaises(ValidationError):
            ODMatrix(np.array([[0.0, -1.0], [0.0, 0.0]]), 0.0, 1.0)
        estimate = ODMatrix(np.array([[0.0, -1.0], [0.0, 0.0]]), 0.0, 1.0, kind=MatrixKind.ESTIMATE)
        self.assertEqual(estimate.total, -1.0)

    def test_inter_and_intra_totals(self):
        matrix = TestOdUtil.matrix([[2, 3], [4, 5]])
        self.assertEqual(matrix.intra_district_total, 7.0)
        self.assertEqual(matrix.inter_district_total, 7.0)


class TestBinning(SimpleTestCase):
    def test_no_trips(self):
        matrices, diagnostics = bin_counts([], [], [], 3, span=(MONDAY, MONDAY + 3 * HOUR))
        self.assertEqual(len(matrices), 3)
        self.assertTrue(all(m.total == 0 for m in matrices))
        self.assertEqual(diagnostics.n_binned, 0)

    def test_half_open_windows(self):
        nine = MONDAY + 9 * HOUR
        matrices, _ = bin_counts([nine + HOUR - 1, nine + HOUR], [0, 0], [1, 1], 2, span=(MONDAY, MONDAY + DAY))
        self.assertEqual(matrices[9].values[0, 1], 1.0)
        self.assertEqual(matrices[10].values[0, 1], 1.0)
        self.assertEqual(matrices[9].window, (nine, nine + HOUR))

    def test_skips_missing_districts_and_out_of_window(self):
        end_t = [MONDAY + 10, MONDAY + 20, MONDAY + 30, MONDAY + DAY + 5]
        matrices, diagnostics = bin_counts(end_t, [0, -1, 1, 0], [1, 1, 1, 0], 2, span=(MONDAY, MONDAY + DAY))
        self.assertEqual(diagnostics.n_trips, 4)
        self.assertEqual(diagnostics.n_without_district, 1)
        self.assertEqual(diagnostics.n_out_of_window, 1)
        self.assertEqual(diagnostics.n_binned, 2)
        self.assertEqual(diagnostics.n_intra_district, 1)
        self.assertEqual(sum(m.total for m in matrices), diagnostics.n_binned)

    def test_total_conservation(self):
        rng = np.random.default_rng(3)
        end_t = MONDAY + rng.uniform(0, 5 * DAY, 1000).round()
        origins, dests = rng.integers(0, 6, 1000), rng.integers(0, 6, 1000)
        matrices, diagnostics = bin_counts(end_t, origins, dests, 6)
        self.assertEqual(sum(m.total for m in matrices), 1000)
        hourly = np.bincount(((end_t - matrices[0].t_start) // HOUR).astype(int), minlength=len(matrices))
        self.assertEqual([m.total for m in matrices], list(hourly.astype(float)))

    def test_aligned_span(self):
        self.assertEqual(aligned_span(MONDAY + 10, MONDAY + HOUR), (MONDAY, MONDAY + 2 * HOUR))

    def test_unknown_district_id(self):
        with self.assertRaises(ValidationError):
            bin_counts([MONDAY], [0], [7], 3)


class TestAggregate(SimpleTestCase):
    def test_single_matrix_total(self):
        matrix = TestOdUtil.matrix([[1, 2], [3, 4]])
        np.testing.assert_array_equal(aggregate([matrix]).values, matrix.values)

    def test_per_day(self):
        day_one = TestOdUtil.matrix([[0, 6], [2, 0]], MONDAY)
        day_two = TestOdUtil.matrix([[0, 6], [2, 0]], MONDAY + DAY)
        result = aggregate([day_one, day_two], normalize=Normalization.PER_DAY)
        np.testing.assert_array_equal(result.values, day_one.values)
        self.assertEqual(result.windows, [day_one.window, day_two.window])

    def test_kinds_cannot_mix(self):
        count = TestOdUtil.matrix([[1, 0], [0, 1]])
        estimate = TestOdUtil.matrix([[1, 0], [0, 1]], kind=MatrixKind.ESTIMATE)
        with self.assertRaises(OdflowError) as ctx:
            aggregate([count, estimate])
        self.assertEqual(ctx.exception.err_code, ErrorCode.KIND_MISMATCH)

    def test_morning_workdays(self):
        # one trip per hour for a full week, local time = UTC
        matrices, _ = bin_counts(MONDAY + np.arange(7 * 24) * HOUR + 1800, [0] * 168, [1] * 168, 2)
        morning = window_filters(tz="UTC")["morning"]
        result = aggregate(matrices, morning, Normalization.PER_DAY)
        self.assertEqual(result.values[0, 1], 4.0)
        self.assertEqual(len(result.windows), 20)
        total = aggregate(matrices, morning, Normalization.TOTAL)
        self.assertEqual(total.values[0, 1], 20.0)

    def test_holidays_and_local_time(self):
        matrices, _ = bin_counts(MONDAY + np.arange(48) * HOUR + 60, [0] * 48, [1] * 48, 2)
        singapore = WindowFilter("morning", 6, 10, "Asia/Singapore")
        # 06:00-10:00 local is 22:00-02:00 UTC; the span starts at 08:00 local on Monday
        selected = [(m.t_start - MONDAY) / HOUR for m in matrices if singapore(m)]
        self.assertEqual(selected, [0, 1, 22, 23, 24, 25, 46, 47])
        days = frozenset(singapore.local_date(MONDAY + d * DAY) for d in range(3))
        holiday = WindowFilter("morning", 6, 10, "Asia/Singapore", holidays=days)
        self.assertFalse(any(holiday(m) for m in matrices))

    def test_invalid_window(self):
        with self.assertRaises(ValidationError):
            WindowFilter("late", 22, 6)
        with self.assertRaises(ValidationError):
            WindowFilter("morning", 6, 10, "Mars/Olympus")


class TestBiasCorrection(SimpleTestCase):
    def test_uniform_shares_identity(self):
        rng = np.random.default_rng(7)
        matrix = TestOdUtil.random_matrix(rng, 3)
        corrected = correct_bias(matrix, TestOdUtil.shares([2, 4, 6], [10, 20, 30]))
        np.testing.assert_array_equal(corrected.values, matrix.values)

    def test_square_root_two(self):
        # phi = 0.34 overall, phi_0 = 0.17, phi_1 = 0.34, phi_2 = 0.51
        factors = correction_factors(TestOdUtil.shares([17, 34, 51], [100, 100, 100]))
        self.assertAlmostEqual(factors[0, 1], np.sqrt(2.0), delta=1e-9)
        self.assertAlmostEqual(factors[1, 1], 1.0, delta=1e-12)

    def test_common_scaling_of_counts(self):
        rng = np.random.default_rng(11)
        matrix = TestOdUtil.random_matrix(rng, 3)
        once = correct_bias(matrix, TestOdUtil.shares([1, 3, 5], [9, 8, 7]))
        twice = correct_bias(matrix, TestOdUtil.shares([2, 6, 10], [18, 16, 14]))
        np.testing.assert_allclose(once.values, twice.values, rtol=1e-15)

    def test_linear_per_cell(self):
        rng = np.random.default_rng(13)
        matrix = TestOdUtil.random_matrix(rng, 3)
        shares = TestOdUtil.shares([1, 3, 5], [9, 8, 7])
        scaled = correct_bias(matrix.with_values(matrix.values * 2.5), shares)
        np.testing.assert_allclose(scaled.values, correct_bias(matrix, shares).values * 2.5, rtol=1e-15)

    def test_missing_district_share_is_neutral(self):
        factors = correction_factors(TestOdUtil.shares([0, 5, 5], [0, 10, 10]))
        self.assertEqual(factors[0, 0], 1.0)
        self.assertAlmostEqual(factors[0, 1], 1.0)

    def test_no_frequent_users_is_fatal(self):
        with self.assertRaises(OdflowError) as ctx:
            correction_factors(TestOdUtil.shares([0, 0], [4, 5]))
        self.assertEqual(ctx.exception.err_code, ErrorCode.NO_FREQUENT_USERS)

    def test_dimension_mismatch(self):
        with self.assertRaises(OdflowError):
            correct_bias(TestOdUtil.matrix(np.ones((2, 2))), TestOdUtil.shares([1, 1, 1], [2, 2, 2]))


class TestUpscale(SimpleTestCase):
    def test_unit_factors(self):
        matrix = TestOdUtil.matrix([[0, 5], [7, 0]])
        result = upscale(matrix, ScalingConfig(market_share=1, penetration=1, frequent_share=1))
        np.testing.assert_array_equal(result.values, matrix.values)
        self.assertEqual(result.kind, MatrixKind.ESTIMATE)

    def test_reference_factors(self):
        result = upscale(TestOdUtil.matrix([[0, 100], [0, 0]]), ScalingConfig())
        self.assertAlmostEqual(result.values[0, 1], 450.9, delta=0.1)
        self.assertAlmostEqual(result.values[0, 1], 100 / (0.453 * 1.44 * 0.34), delta=1e-9)

    def test_invalid_factor(self):
        cfg = ScalingConfig.model_construct(market_share=0.0, penetration=1.0, frequent_share=1.0)
        with self.assertRaises(ValidationError):
            upscale(TestOdUtil.matrix([[0, 1], [0, 0]]), cfg)

    def test_commutes_with_correction(self):
        rng = np.random.default_rng(17)
        matrix = TestOdUtil.random_matrix(rng, 3)
        shares, cfg = TestOdUtil.shares([1, 3, 5], [9, 8, 7]), ScalingConfig()
        first = upscale(correct_bias(matrix, shares), cfg).values
        second = correct_bias(upscale(matrix, cfg), shares).values
        np.testing.assert_allclose(first, second, rtol=1e-12)

    def test_subscriber_arithmetic(self):
        check = subscriber_check()
        self.assertTrue(7.49e6 <= check["subscriptions"] <= 7.51e6)
        self.assertAlmostEqual(check["penetration"], 1.44, delta=0.01)


class TestMatrixFiles(SimpleTestCase):
    def test_round_trip_is_exact(self):
        rng = np.random.default_rng(19)
        matrices = [TestOdUtil.random_matrix(rng, 5, MONDAY + h * HOUR) for h in range(3)]
        matrices.append(ODMatrix.zeros(5, MONDAY + 3 * HOUR, MONDAY + 4 * HOUR))
        matrices = correct_bias_series(matrices, TestOdUtil.shares([1, 2, 3, 4, 5], [5, 5, 5, 5, 9]))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "od.csv"
            write_matrices(path, matrices, {"seed": 1})
            loaded = read_matrices(path)
            meta = json.loads(path.with_suffix(".json").read_text())
        self.assertEqual(len(loaded), 4)
        for before, after in zip(matrices, loaded):
            self.assertEqual(before.window, after.window)
            np.testing.assert_array_equal(before.values, after.values)
        self.assertEqual(meta["metadata"], {"seed": 1})
        self.assertEqual(meta["kind"], "count")

    def test_cell_outside_matrix_is_fatal(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "od.csv"
            write_matrices(path, [TestOdUtil.matrix([[0, 1], [0, 0]])])
            with path.open("a") as handle:
                handle.write(f"0,9,{MONDAY:.0f},{MONDAY + HOUR:.0f},1\n")
            with self.assertRaises(InputError):
                read_matrices(path)


class TestOdCommand(SimpleTestCase):
    def test_bin_and_upscale(self):
        grid = grid_districts(GeoPoint(103.82, 1.35), 1, 2, 3000.0)
        trips = (
            "user_id,start_t,end_t,origin_lon,origin_lat,dest_lon,dest_lat,origin_district,dest_district\n"
            f"u1,{MONDAY:.0f},{MONDAY + 600:.0f},103.81,1.35,103.83,1.35,0,1\n"
            f"u1,{MONDAY + 900:.0f},{MONDAY + 1800:.0f},103.83,1.35,103.9,1.35,1,\n"
        )
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            (tmp / "trips.csv").write_text(trips)
            (tmp / "districts.geojson").write_text(json.dumps(grid.to_feature_collection()))
            call_command(
                "od",
                trips=str(tmp / "trips.csv"),
                districts=str(tmp / "districts.geojson"),
                out=str(tmp / "od.csv"),
                upscale=True,
                market_share=0.5,
                penetration=1.0,
                frequent_share=0.5,
                stdout=io.StringIO(),
            )
            (matrix,) = read_matrices(tmp / "od.csv")
        self.assertEqual(matrix.values[0, 1], 4.0)
        self.assertEqual(matrix.kind, MatrixKind.ESTIMATE)

    def test_empty_trips_write_zero_matrices_over_study_window(self):
        grid = grid_districts(GeoPoint(103.82, 1.35), 1, 2, 3000.0)
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            (tmp / "trips.csv").write_text(",".join(TRIP_COLUMNS) + "\n")
            (tmp / "districts.geojson").write_text(json.dumps(grid.to_feature_collection()))
            call_command(
                "od",
                trips=str(tmp / "trips.csv"),
                districts=str(tmp / "districts.geojson"),
                out=str(tmp / "od.csv"),
                study_start=MONDAY,
                study_end=MONDAY + DAY,
                stdout=io.StringIO(),
            )
            matrices = read_matrices(tmp / "od.csv")
        self.assertEqual(len(matrices), 24)
        self.assertTrue(all(m.total == 0 for m in matrices))
        self.assertEqual(matrices[0].window, (MONDAY, MONDAY + HOUR))
        self.assertEqual(matrices[-1].window, (MONDAY + DAY - HOUR, MONDAY + DAY))
        self.assertEqual(matrices[0].values.shape, (2, 2))

    def test_study_window_needs_both_ends(self):
        stderr = io.StringIO()
        with self.assertRaises(CommandError) as ctx:
            call_command("od", trips="t.csv", districts="d.geojson", out="o.csv", study_start=MONDAY, stderr=stderr)
        self.assertEqual(ctx.exception.returncode, ExitCode.CONFIG)
        self.assertIn("study_window", json.loads(stderr.getvalue())["data"])
