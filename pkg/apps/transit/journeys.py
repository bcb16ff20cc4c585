"""
Smart-card journeys: consecutive legs of a card are one journey when the
next boarding follows the previous alighting by less than the transfer time.
"""
import logging
from typing import Sequence

import numpy as np
import pandas as pd

from apps.od.binning import GRANULARITY_S, bin_counts
from apps.od.matrix import ODMatrix
from apps.od.schemas import BinningDiagnostics
from apps.transit.parsers import StationIndex
from apps.transit.schemas import JOURNEY_COLUMNS, Journey, JourneyDiagnostics, SmartCardLeg

logger = logging.getLogger(__name__)

TRANSFER_MIN = 45.0


def drop_overlaps(legs: Sequence[SmartCardLeg]) -> list[SmartCardLeg]:
    """Of two overlapping legs of a card the later one wins."""
    kept = []
    for leg, following in zip(legs, list(legs[1:]) + [None]):
        if following is not None and following.card_id == leg.card_id and following.board_t < leg.alight_t:
            continue
        kept.append(leg)
    return kept


def _journey(run: list[SmartCardLeg]) -> Journey:
    first, last = run[0], run[-1]
    return Journey(first.card_id, first.board_station, last.alight_station, first.board_t, last.alight_t, len(run))


def chain_journeys(legs: Sequence[SmartCardLeg], transfer_min: float = TRANSFER_MIN) -> list[Journey]:
    """Maximal runs of legs of the same card whose transfer gaps are below ``transfer_min``."""
    transfer_s = transfer_min * 60.0
    ordered = sorted(legs, key=lambda leg: (leg.card_id, leg.board_t, leg.alight_t))
    journeys, run = [], []
    for leg in drop_overlaps(ordered):
        if run and leg.card_id == run[-1].card_id and leg.board_t - run[-1].alight_t < transfer_s:
            run.append(leg)
            continue
        if run:
            journeys.append(_journey(run))
        run = [leg]
    if run:
        journeys.append(_journey(run))
    return journeys


def chain_all(legs: pd.DataFrame, transfer_min: float = TRANSFER_MIN) -> tuple[pd.DataFrame, JourneyDiagnostics]:
    """`chain_journeys` over a legs frame, ordered by (card_id, start_t)."""
    diagnostics = JourneyDiagnostics(n_legs=len(legs))
    codes, cards = pd.factorize(legs["card_id"], sort=True)
    board = legs["board_t"].to_numpy(dtype=float)
    alight = legs["alight_t"].to_numpy(dtype=float)
    order = np.lexsort((alight, board, codes))
    codes, board, alight = codes[order], board[order], alight[order]
    board_station = legs["board_station"].to_numpy(dtype=object)[order]
    alight_station = legs["alight_station"].to_numpy(dtype=object)[order]

    overlap = np.zeros(len(codes), dtype=bool)
    overlap[:-1] = (codes[1:] == codes[:-1]) & (board[1:] < alight[:-1])
    diagnostics.n_overlapping = int(overlap.sum())
    if diagnostics.n_overlapping:
        logger.warning(f"Dropped {diagnostics.n_overlapping} legs overlapping the card's next leg")
    keep = ~overlap
    codes, board, alight = codes[keep], board[keep], alight[keep]
    board_station, alight_station = board_station[keep], alight_station[keep]
    diagnostics.n_accepted = len(codes)
    if not len(codes):
        return pd.DataFrame({column: [] for column in JOURNEY_COLUMNS}), diagnostics

    starts_journey = np.ones(len(codes), dtype=bool)
    starts_journey[1:] = (codes[1:] != codes[:-1]) | (board[1:] - alight[:-1] >= transfer_min * 60.0)
    first = np.flatnonzero(starts_journey)
    last = np.append(first[1:], len(codes)) - 1
    journeys = pd.DataFrame(
        {
            "card_id": np.asarray(cards, dtype=object)[codes[first]],
            "origin_station": board_station[first],
            "dest_station": alight_station[last],
            "start_t": board[first],
            "end_t": alight[last],
            "n_legs": (last - first + 1).astype(np.int64),
        },
        columns=JOURNEY_COLUMNS,
    )
    diagnostics.n_journeys = len(journeys)
    diagnostics.n_multi_leg = int((journeys["n_legs"] > 1).sum())
    logger.info(f"Chained {diagnostics.n_accepted:,} legs into {diagnostics.n_journeys:,} journeys")
    return journeys, diagnostics


def journeys_frame(journeys: Sequence[Journey]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "card_id": [j.card_id for j in journeys],
            "origin_station": [j.origin_station for j in journeys],
            "dest_station": [j.dest_station for j in journeys],
            "start_t": pd.Series([j.start_t for j in journeys], dtype=float),
            "end_t": pd.Series([j.end_t for j in journeys], dtype=float),
            "n_legs": pd.Series([j.n_legs for j in journeys], dtype="int64"),
        },
        columns=JOURNEY_COLUMNS,
    )


def public_od(
    journeys: Sequence[Journey] | pd.DataFrame,
    stations: StationIndex,
    granularity_s: int = GRANULARITY_S,
    span: tuple[float, float] | None = None,
) -> tuple[list[ODMatrix], BinningDiagnostics]:
    """Exact public-transport counts, each journey in the window holding its end time."""
    if not isinstance(journeys, pd.DataFrame):
        journeys = journeys_frame(journeys)
    origins = stations.districts_of(journeys["origin_station"])
    dests = stations.districts_of(journeys["dest_station"])
    return bin_counts(journeys["end_t"], origins, dests, stations.n_districts, granularity_s, "public", span)


def write_journeys(path, journeys: pd.DataFrame):
    journeys.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
