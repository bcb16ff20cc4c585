"""Error metrics of inferred OD matrices and trips against the generator's ground truth."""
import logging
from typing import Sequence

import numpy as np
import pandas as pd

from apps.analysis.schemas import ModeShareReport
from apps.od.aggregation import aggregate, align
from apps.od.binning import GRANULARITY_S
from apps.od.matrix import ODMatrix
from apps.synth.schemas import ComparisonReport

logger = logging.getLogger(__name__)

# ground-truth displacement bands; trips under 2 km are below the detectability floor
DISPLACEMENT_BANDS = {"<2km": (0.0, 2000.0), "2-5km": (2000.0, 5000.0), ">=5km": (5000.0, np.inf)}


def relative_error(inferred_total: float, truth_total: float) -> float | None:
    if truth_total == 0:
        return 0.0 if inferred_total == 0 else None
    return abs(inferred_total - truth_total) / truth_total


def compare(inferred: ODMatrix, truth: ODMatrix) -> ComparisonReport:
    """Total-trip relative error and cellwise L1 of one matrix pair."""
    truth.check_compatible(inferred)
    return ComparisonReport(
        truth_total=truth.total,
        inferred_total=inferred.total,
        relative_error=relative_error(inferred.total, truth.total),
        cellwise_l1=float(np.abs(inferred.values - truth.values).sum()),
        n_windows_exact=int(np.array_equal(inferred.values, truth.values)),
    )


def compare_series(inferred: Sequence[ODMatrix], truth: Sequence[ODMatrix]) -> ComparisonReport:
    """Window by window, then summed; a window missing on one side counts as empty."""
    inferred, truth = align(inferred, truth)
    per_window = [compare(a, b) for a, b in zip(inferred, truth)]
    truth_total = aggregate(truth).total
    inferred_total = aggregate(inferred).total
    report = ComparisonReport(
        truth_total=truth_total,
        inferred_total=inferred_total,
        relative_error=relative_error(inferred_total, truth_total),
        cellwise_l1=sum(r.cellwise_l1 for r in per_window),
        n_windows=len(per_window),
        n_windows_exact=sum(r.n_windows_exact for r in per_window),
    )
    logger.info(
        f"{report.n_windows_exact} of {report.n_windows} windows exact, cellwise L1 {report.cellwise_l1:.6g}"
    )
    return report


def mode_share_error(inferred: ModeShareReport, truth: ModeShareReport) -> dict[str, float | None]:
    errors = {}
    for entry in truth.windows:
        estimate = inferred.share(entry.window)
        if estimate is None or entry.public_share is None:
            errors[entry.window] = None
        else:
            errors[entry.window] = abs(estimate - entry.public_share)
    return errors


def trip_recall(
    extracted: pd.DataFrame,
    truth: pd.DataFrame,
    granularity_s: int = GRANULARITY_S,
    frequent_only: bool = True,
) -> dict[str, dict]:
    """
    Share of ground-truth trips matched by an extracted trip of the same user
    with the same districts ending in the same time bin, per displacement band.
    Each extracted trip matches at most one truth trip.
    """
    truth = truth[truth["displacement_m"].notna()]
    if frequent_only:
        truth = truth[truth["frequent"] == 1]
    keys = ["user_id", "origin_district", "dest_district", "bin"]

    def keyed(frame: pd.DataFrame) -> pd.DataFrame:
        frame = frame.fillna({"origin_district": -1, "dest_district": -1})
        frame = frame.assign(bin=(frame["end_t"] // granularity_s).astype(np.int64))
        frame = frame.astype({"user_id": str, "origin_district": np.int64, "dest_district": np.int64})
        return frame.assign(occurrence=frame.groupby(keys).cumcount())

    matched = keyed(truth).merge(
        keyed(extracted)[keys + ["occurrence"]],
        on=keys + ["occurrence"],
        how="left",
        indicator=True,
    )
    matched["matched"] = matched["_merge"] == "both"
    recall = {}
    for band, (low, high) in DISPLACEMENT_BANDS.items():
        in_band = matched[(matched["displacement_m"] >= low) & (matched["displacement_m"] < high)]
        n_matched = int(in_band["matched"].sum())
        recall[band] = {
            "truth": len(in_band),
            "matched": n_matched,
            "recall": n_matched / len(in_band) if len(in_band) else None,
        }
    return recall
