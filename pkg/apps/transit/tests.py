import io
import json
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.test import SimpleTestCase

from apps.common.exceptions import ErrorCode, InputError
from apps.geo.districts import grid_districts
from apps.geo.schemas import GeoPoint
from apps.od.files import read_matrices
from apps.transit.journeys import chain_all, chain_journeys, journeys_frame, public_od
from apps.transit.parsers import StationIndex, parse_legs
from apps.transit.schemas import LegSchema, SmartCardLeg

ORIGIN = GeoPoint(lon=103.82, lat=1.35)
MONDAY = 1301875200.0
MINUTE = 60.0
LEGS_HEADER = b"card_id,board_time,alight_time,board_station,alight_station\n"


class TestTransitUtil:
    def legs(card_id, rows):
        """rows of (board_min, alight_min, board_station, alight_station)"""
        return [SmartCardLeg(card_id, MONDAY + b * MINUTE, MONDAY + a * MINUTE, s, e) for b, a, s, e in rows]

    def legs_frame(legs):
        return pd.DataFrame(
            {
                "card_id": [leg.card_id for leg in legs],
                "board_t": [leg.board_t for leg in legs],
                "alight_t": [leg.alight_t for leg in legs],
                "board_station": [leg.board_station for leg in legs],
                "alight_station": [leg.alight_station for leg in legs],
            }
        )

    def grid():
        return grid_districts(ORIGIN, 2, 5, 3000.0)

    def stations(grid):
        """One station S<d> at the representative point of every district."""
        points = [grid.representative_point(d) for d in range(len(grid))]
        return StationIndex([f"S{d}" for d in range(len(grid))], [p.lon for p in points], [p.lat for p in points], grid)

    def random_legs(rng, n_cards=20):
        legs = []
        for card in range(n_cards):
            t = 0.0
            for _ in range(int(rng.integers(1, 12))):
                t += rng.uniform(0, 90)
                duration = rng.uniform(1, 40)
                stations = rng.choice(["A", "B", "C", "D"], 2)
                legs += TestTransitUtil.legs(f"c{card:02d}", [(t, t + duration, *stations)])
                t += duration
        return legs


class TestChainJourneys(SimpleTestCase):
    def test_single_leg(self):
        (journey,) = chain_journeys(TestTransitUtil.legs("c", [(0, 20, "A", "B")]))
        self.assertEqual(journey.n_legs, 1)
        self.assertEqual((journey.origin_station, journey.dest_station), ("A", "B"))

    def test_transfer_boundary(self):
        merged = TestTransitUtil.legs("c", [(0, 20, "A", "B"), (20 + 44 + 59 / 60, 80, "B", "C")])
        split = TestTransitUtil.legs("c", [(0, 20, "A", "B"), (65, 80, "B", "C")])
        self.assertEqual(len(chain_journeys(merged)), 1)
        self.assertEqual(len(chain_journeys(split)), 2)

    def test_stepwise_merging(self):
        legs = TestTransitUtil.legs("c", [(0, 15, "A", "B"), (25, 40, "B", "C"), (90, 110, "C", "D")])
        journeys = chain_journeys(legs)
        self.assertEqual([(j.origin_station, j.dest_station) for j in journeys], [("A", "C"), ("C", "D")])
        self.assertEqual(journeys[0].start_t, MONDAY)
        self.assertEqual(journeys[0].end_t, MONDAY + 40 * MINUTE)

    def test_overlapping_leg_is_dropped(self):
        legs = TestTransitUtil.legs("c", [(0, 30, "A", "B"), (20, 40, "X", "Y")])
        (journey,) = chain_journeys(legs)
        self.assertEqual((journey.origin_station, journey.dest_station, journey.n_legs), ("X", "Y", 1))
        frame, diagnostics = chain_all(TestTransitUtil.legs_frame(legs))
        self.assertEqual(diagnostics.n_overlapping, 1)
        self.assertEqual(list(frame["origin_station"]), ["X"])

    def test_cards_never_merge(self):
        legs = TestTransitUtil.legs("a", [(0, 10, "A", "B")]) + TestTransitUtil.legs("b", [(11, 20, "B", "C")])
        self.assertEqual(len(chain_journeys(legs)), 2)

    def test_empty(self):
        frame, diagnostics = chain_all(TestTransitUtil.legs_frame([]))
        self.assertEqual(len(frame), 0)
        self.assertEqual(diagnostics.n_journeys, 0)


class TestJourneyProperty(SimpleTestCase):
    def test_frame_and_sequence_agree(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            legs = TestTransitUtil.random_legs(rng)
            frame, diagnostics = chain_all(TestTransitUtil.legs_frame(legs))
            expected = journeys_frame(chain_journeys(legs))
            pd.testing.assert_frame_equal(frame.reset_index(drop=True), expected, check_dtype=False)
            self.assertLessEqual(diagnostics.n_journeys, diagnostics.n_legs)
            self.assertEqual(int(frame["n_legs"].sum()), diagnostics.n_accepted)

    def test_monotone_in_transfer_time(self):
        rng = np.random.default_rng(37)
        legs = TestTransitUtil.legs_frame(TestTransitUtil.random_legs(rng, 50))
        counts = [chain_all(legs, transfer)[1].n_journeys for transfer in (0, 5, 15, 30, 45, 60, 120)]
        self.assertEqual(counts, sorted(counts, reverse=True))


class TestPublicOd(SimpleTestCase):
    def setUp(self):
        self.grid = TestTransitUtil.grid()
        self.stations = TestTransitUtil.stations(self.grid)

    def test_no_journeys(self):
        matrices, _ = public_od([], self.stations, span=(MONDAY, MONDAY + 7200))
        self.assertEqual([m.total for m in matrices], [0.0, 0.0])

    def test_single_journey(self):
        journeys = chain_journeys(TestTransitUtil.legs("c", [(480 + 5, 480 + 30, "S2", "S9")]))
        matrices, _ = public_od(journeys, self.stations, span=(MONDAY, MONDAY + 86400))
        self.assertEqual(matrices[8].values[2, 9], 1.0)
        self.assertEqual(sum(m.total for m in matrices), 1.0)

    def test_unknown_station(self):
        journeys = chain_journeys(TestTransitUtil.legs("c", [(0, 10, "S2", "S99")]))
        with self.assertRaises(InputError) as ctx:
            public_od(journeys, self.stations)
        self.assertEqual(ctx.exception.err_code, ErrorCode.UNKNOWN_STATION)

    def test_station_outside_every_district(self):
        with self.assertRaises(InputError):
            StationIndex(["far"], [104.5], [1.35], self.grid)


class TestParseLegs(SimpleTestCase):
    def test_malformed_legs(self):
        data = LEGS_HEADER + b"c1,100,200,A,B\nc1,300,300,B,C\nc2,400,350,A,B\nc3,x,500,A,B\n"
        parsed = parse_legs(io.BytesIO(data), LegSchema(max_malformed_fraction=0.8))
        self.assertEqual(parsed.diagnostics.n_legs, 1)
        self.assertEqual(parsed.diagnostics.n_malformed, 3)
        (leg,) = parsed.records()
        self.assertEqual(leg, SmartCardLeg("c1", 100.0, 200.0, "A", "B"))


class TestTransitCommands(SimpleTestCase):
    def test_public_od_command(self):
        grid = TestTransitUtil.grid()
        points = [grid.representative_point(d) for d in range(len(grid))]
        stations = "station_id,lon,lat\n" + "".join(f"S{d},{p.lon!r},{p.lat!r}\n" for d, p in enumerate(points))
        legs = (
            "card_id,board_time,alight_time,board_station,alight_station\n"
            f"c1,{MONDAY:.0f},{MONDAY + 600:.0f},S0,S1\n"
            f"c1,{MONDAY + 1200:.0f},{MONDAY + 1800:.0f},S1,S4\n"
        )
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            (tmp / "stations.csv").write_text(stations)
            (tmp / "legs.csv").write_text(legs)
            (tmp / "districts.geojson").write_text(json.dumps(TestTransitUtil.grid().to_feature_collection()))
            call_command(
                "public_od",
                legs=str(tmp / "legs.csv"),
                stations=str(tmp / "stations.csv"),
                districts=str(tmp / "districts.geojson"),
                out=str(tmp / "public.csv"),
                journeys_out=str(tmp / "journeys.csv"),
                stdout=io.StringIO(),
            )
            (matrix,) = read_matrices(tmp / "public.csv")
            journeys = (tmp / "journeys.csv").read_text().splitlines()
        self.assertEqual(matrix.values[0, 4], 1.0)
        self.assertEqual(matrix.total, 1.0)
        self.assertEqual(journeys[1], f"c1,S0,S4,{MONDAY:.0f},{MONDAY + 1800:.0f},2")
