import logging
from dataclasses import dataclass
from typing import BinaryIO, Iterator

import numpy as np
import pandas as pd

from apps.cdr.schemas import TOWER_COLUMNS, CdrSchema, EventRecord, ParseDiagnostics
from apps.common.csvio import CsvReader, check_malformed, parse_floats, parse_timestamps
from apps.common.exceptions import InputError
from apps.common.utils import open_input
from apps.geo.schemas import GeoPoint

logger = logging.getLogger(__name__)


@dataclass
class ParsedCdr:
    """Events in file order as columns ``user_id, t, lon, lat``."""

    events: pd.DataFrame
    diagnostics: ParseDiagnostics

    def records(self) -> Iterator[EventRecord]:
        for user_id, t, lon, lat in self.events.itertuples(index=False, name=None):
            yield EventRecord(user_id, float(t), GeoPoint(float(lon), float(lat)))


def valid_positions(lons: np.ndarray, lats: np.ndarray) -> np.ndarray:
    return (
        np.isfinite(lons) & np.isfinite(lats)
        & (np.abs(lons) <= 180.0) & (np.abs(lats) <= 90.0)
    )


def parse_cdr(stream: BinaryIO, schema: CdrSchema | None = None, source: str = "") -> ParsedCdr:
    """
    Parse a CDR log. Malformed lines are counted and skipped; more than
    ``schema.max_malformed_fraction`` of them is fatal.
    """
    schema = schema or CdrSchema()
    reader = CsvReader(stream, schema.columns, schema.chunk_rows, source)
    diagnostics = ParseDiagnostics()
    frames = []
    for chunk, _ in reader:
        t = parse_timestamps(chunk["timestamp"], schema.ts_format)
        if schema.towers is not None:
            located = chunk["tower_id"].map(schema.towers)
            known = located.notna().to_numpy()
            lons = np.full(len(chunk), np.nan)
            lats = np.full(len(chunk), np.nan)
            if known.any():
                coords = np.array(located[known].tolist(), dtype=float)
                lons[known], lats[known] = coords[:, 0], coords[:, 1]
        else:
            lons = parse_floats(chunk["lon"])
            lats = parse_floats(chunk["lat"])
        good = valid_positions(lons, lats) & np.isfinite(t) & (chunk["user_id"] != "").to_numpy()
        diagnostics.n_malformed += int((~good).sum())

        in_window = good.copy()
        if schema.study_start is not None:
            in_window &= t >= schema.study_start
        if schema.study_end is not None:
            in_window &= t < schema.study_end
        diagnostics.n_out_of_window += int((good & ~in_window).sum())

        frames.append(
            pd.DataFrame(
                {
                    "user_id": chunk["user_id"].to_numpy()[in_window],
                    "t": t[in_window],
                    "lon": lons[in_window],
                    "lat": lats[in_window],
                }
            )
        )
        logger.info(f"{reader.source}: {reader.n_lines:,} lines parsed")

    diagnostics.n_lines = reader.n_lines
    diagnostics.n_malformed += reader.n_malformed
    diagnostics.n_bytes = reader.n_bytes
    check_malformed(diagnostics.n_malformed, diagnostics.n_lines, schema.max_malformed_fraction, reader.source)

    if frames:
        events = pd.concat(frames, ignore_index=True)
    else:
        events = pd.DataFrame(
            {
                "user_id": pd.Series(dtype=object),
                "t": pd.Series(dtype=float),
                "lon": pd.Series(dtype=float),
                "lat": pd.Series(dtype=float),
            }
        )
    diagnostics.n_records = len(events)
    return ParsedCdr(events, diagnostics)


def load_cdr(path, schema: CdrSchema | None = None) -> ParsedCdr:
    with open_input(path) as stream:
        return parse_cdr(stream, schema, source=str(path))


def load_towers(path, max_malformed_fraction: float = 0.0) -> dict[str, tuple[float, float]]:
    """Tower file ``tower_id,lon,lat``; every row must be valid unless a tolerance is given."""
    towers = {}
    with open_input(path) as stream:
        reader = CsvReader(stream, TOWER_COLUMNS, source=str(path))
        n_bad = 0
        for chunk, _ in reader:
            lons, lats = parse_floats(chunk["lon"]), parse_floats(chunk["lat"])
            good = valid_positions(lons, lats)
            n_bad += int((~good).sum())
            for tower_id, lon, lat in zip(chunk["tower_id"][good], lons[good], lats[good]):
                if tower_id in towers:
                    raise InputError(f"{path}: duplicate tower id '{tower_id}'")
                towers[tower_id] = (float(lon), float(lat))
    check_malformed(n_bad + reader.n_malformed, reader.n_lines, max_malformed_fraction, str(path))
    logger.info(f"Loaded {len(towers)} towers from {path}")
    return towers
