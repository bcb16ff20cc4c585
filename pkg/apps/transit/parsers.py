import logging
from dataclasses import dataclass
from typing import BinaryIO, Iterator

import numpy as np
import pandas as pd

from apps.cdr.parsers import valid_positions
from apps.common.csvio import CsvReader, check_malformed, parse_floats, parse_timestamps
from apps.common.exceptions import ErrorCode, InputError
from apps.common.utils import open_input
from apps.geo.districts import NO_DISTRICT, DistrictMap
from apps.geo.schemas import GeoPoint
from apps.transit.schemas import LEG_COLUMNS, STATION_COLUMNS, LegDiagnostics, LegSchema, SmartCardLeg

logger = logging.getLogger(__name__)


@dataclass
class ParsedLegs:
    """Legs in file order as columns ``card_id, board_t, alight_t, board_station, alight_station``."""

    legs: pd.DataFrame
    diagnostics: LegDiagnostics

    def records(self) -> Iterator[SmartCardLeg]:
        for row in self.legs.itertuples(index=False, name=None):
            card_id, board_t, alight_t, board_station, alight_station = row
            yield SmartCardLeg(card_id, float(board_t), float(alight_t), board_station, alight_station)


def parse_legs(stream: BinaryIO, schema: LegSchema | None = None, source: str = "") -> ParsedLegs:
    """A leg is malformed when a field is missing or it does not alight after boarding."""
    schema = schema or LegSchema()
    reader = CsvReader(stream, LEG_COLUMNS, schema.chunk_rows, source)
    diagnostics = LegDiagnostics()
    frames = []
    for chunk, _ in reader:
        board_t = parse_timestamps(chunk["board_time"], schema.ts_format)
        alight_t = parse_timestamps(chunk["alight_time"], schema.ts_format)
        good = (
            np.isfinite(board_t)
            & np.isfinite(alight_t)
            & (board_t < alight_t)
            & (chunk["card_id"] != "").to_numpy()
            & (chunk["board_station"] != "").to_numpy()
            & (chunk["alight_station"] != "").to_numpy()
        )
        diagnostics.n_malformed += int((~good).sum())
        frames.append(
            pd.DataFrame(
                {
                    "card_id": chunk["card_id"].to_numpy()[good],
                    "board_t": board_t[good],
                    "alight_t": alight_t[good],
                    "board_station": chunk["board_station"].to_numpy()[good],
                    "alight_station": chunk["alight_station"].to_numpy()[good],
                }
            )
        )
        logger.info(f"{reader.source}: {reader.n_lines:,} lines parsed")

    diagnostics.n_lines = reader.n_lines
    diagnostics.n_malformed += reader.n_malformed
    diagnostics.n_bytes = reader.n_bytes
    check_malformed(diagnostics.n_malformed, diagnostics.n_lines, schema.max_malformed_fraction, reader.source)
    if frames:
        legs = pd.concat(frames, ignore_index=True)
    else:
        legs = pd.DataFrame(
            {
                "card_id": pd.Series(dtype=object),
                "board_t": pd.Series(dtype=float),
                "alight_t": pd.Series(dtype=float),
                "board_station": pd.Series(dtype=object),
                "alight_station": pd.Series(dtype=object),
            }
        )
    diagnostics.n_legs = len(legs)
    return ParsedLegs(legs, diagnostics)


def load_legs(path, schema: LegSchema | None = None) -> ParsedLegs:
    with open_input(path) as stream:
        return parse_legs(stream, schema, source=str(path))


class StationIndex:
    """station_id -> position -> district. The station file is authoritative."""

    def __init__(self, station_ids, lons, lats, district_map: DistrictMap):
        self.station_ids = [str(s) for s in station_ids]
        self.lons = np.asarray(lons, dtype=float)
        self.lats = np.asarray(lats, dtype=float)
        self.n_districts = len(district_map)
        self.districts = district_map.assign(self.lons, self.lats)
        outside = [s for s, d in zip(self.station_ids, self.districts) if d == NO_DISTRICT]
        if outside:
            raise InputError(
                f"{len(outside)} stations lie outside every district",
                data={"stations": outside[:20]},
            )
        self._district_of = pd.Series(self.districts, index=pd.Index(self.station_ids))
        if not self._district_of.index.is_unique:
            raise InputError("Duplicate station ids")

    def __len__(self) -> int:
        return len(self.station_ids)

    def __contains__(self, station_id) -> bool:
        return station_id in self._district_of.index

    def position(self, station_id: str) -> GeoPoint:
        i = self._district_of.index.get_loc(station_id)
        return GeoPoint(float(self.lons[i]), float(self.lats[i]))

    def district_of(self, station_id: str) -> int:
        return int(self.districts_of([station_id])[0])

    def districts_of(self, station_ids) -> np.ndarray:
        ids = pd.Index(station_ids, dtype=object)
        positions = self._district_of.index.get_indexer(ids)
        if np.any(positions < 0):
            unknown = sorted(set(ids[positions < 0]))
            raise InputError(
                f"{len(unknown)} unknown station ids",
                ErrorCode.UNKNOWN_STATION,
                data={"stations": unknown[:20]},
            )
        return self.districts[positions]

    @classmethod
    def load(cls, path, district_map: DistrictMap) -> "StationIndex":
        station_ids, lons, lats = [], [], []
        with open_input(path) as stream:
            reader = CsvReader(stream, STATION_COLUMNS, source=str(path))
            n_bad = 0
            for chunk, _ in reader:
                chunk_lons, chunk_lats = parse_floats(chunk["lon"]), parse_floats(chunk["lat"])
                good = valid_positions(chunk_lons, chunk_lats) & (chunk["station_id"] != "").to_numpy()
                n_bad += int((~good).sum())
                station_ids.extend(chunk["station_id"][good])
                lons.extend(chunk_lons[good])
                lats.extend(chunk_lats[good])
        check_malformed(n_bad + reader.n_malformed, reader.n_lines, 0.0, str(path))
        index = cls(station_ids, lons, lats, district_map)
        logger.info(f"Loaded {len(index)} stations from {path}")
        return index
