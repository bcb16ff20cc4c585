import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import pandas as pd

from apps.analysis import references
from apps.analysis.distance import intra_district_mean_distance
from apps.analysis.mode_share import mode_share
from apps.analysis.private import private_od
from apps.analysis.ranking import TOP_K, connections_feature_collection, ranking_frame, underserved_ranking
from apps.analysis.schemas import ConnectionRecord, IntraDistanceReport, ModeShareReport, PrivateDiagnostics
from apps.common.exceptions import ValidationError
from apps.common.utils import write_json
from apps.geo.districts import DistrictMap
from apps.od.aggregation import aggregate, align
from apps.od.files import write_matrices
from apps.od.matrix import ODMatrix
from apps.od.schemas import Normalization
from apps.od.windows import WindowFilter

logger = logging.getLogger(__name__)

DAY = "day"


@dataclass
class ReportBundle:
    overall: dict[str, ODMatrix] = field(default_factory=dict)
    public: dict[str, ODMatrix] = field(default_factory=dict)
    private: dict[str, ODMatrix] = field(default_factory=dict)
    residuals: dict[str, PrivateDiagnostics] = field(default_factory=dict)
    mode_share: ModeShareReport = field(default_factory=ModeShareReport)
    rankings: dict[str, list[ConnectionRecord]] = field(default_factory=dict)
    intra: IntraDistanceReport | None = None
    evaluation: dict = field(default_factory=dict)


def intra_district_share(matrices: Sequence[ODMatrix]) -> float | None:
    total = sum(m.total for m in matrices)
    return sum(m.intra_district_total for m in matrices) / total if total else None


def evaluation_summary(
    overall_day: ODMatrix,
    public_day: ODMatrix,
    private_day: ODMatrix,
    intra_share: float | None,
) -> dict:
    """Daily inter-district totals and splits next to the reference figures."""
    public_trips, private_trips = public_day.inter_district_total, private_day.inter_district_total
    both = public_trips + private_trips
    return {
        "daily_inter_district_trips": {
            "overall": overall_day.inter_district_total,
            "public": public_trips,
            "private": private_trips,
            "reference": references.DAILY_INTER_DISTRICT_TRIPS,
            "survey": references.SURVEY_DAILY_TRIPS,
        },
        "public_split": {
            "value": public_trips / both if both else None,
            "reference": references.PUBLIC_SPLIT,
            "authority": references.AUTHORITY_PUBLIC_SPLIT,
        },
        "intra_district_share": {
            "detected": intra_share,
            "reference": references.DETECTED_INTRA_DISTRICT_SHARE,
            "survey": references.SURVEY_INTRA_DISTRICT_SHARE,
        },
        "passengers_reference": {
            "public": references.PUBLIC_PASSENGERS,
            "private": references.PRIVATE_PASSENGERS,
        },
    }


def build_report(
    overall_hourly: Sequence[ODMatrix],
    public_hourly: Sequence[ODMatrix],
    district_map: DistrictMap,
    filters: dict[str, WindowFilter],
    top_k: int | None = TOP_K,
    intra_samples: int | None = 100_000,
    seed: int = 0,
    detected_hourly: Sequence[ODMatrix] | None = None,
) -> ReportBundle:
    """
    Per-day averages of the overall estimate and of public counts in every
    window, private trips by subtraction, mode shares, underserved rankings
    and the intra-district distance check.
    """
    if not filters:
        raise ValidationError("windows", "At least one time window is required")
    overall_hourly, public_hourly = align(overall_hourly, public_hourly)
    day = dataclasses.replace(next(iter(filters.values())), name=DAY, start_hour=0.0, end_hour=24.0)

    bundle = ReportBundle()
    for name, window_filter in {**filters, DAY: day}.items():
        overall = aggregate(overall_hourly, window_filter, Normalization.PER_DAY)
        public = aggregate(public_hourly, window_filter, Normalization.PER_DAY)
        private, residual = private_od(overall, public)
        bundle.overall[name], bundle.public[name], bundle.private[name] = overall, public, private
        bundle.residuals[name] = residual

    bundle.mode_share = mode_share(bundle.public, bundle.private, filters)
    for name in filters:
        bundle.rankings[name] = underserved_ranking(bundle.public[name], bundle.private[name], top_k, name)
    if intra_samples:
        bundle.intra = intra_district_mean_distance(district_map, intra_samples, seed)
    bundle.evaluation = evaluation_summary(
        bundle.overall[DAY],
        bundle.public[DAY],
        bundle.private[DAY],
        intra_district_share(detected_hourly if detected_hourly is not None else overall_hourly),
    )
    for entry in bundle.mode_share.windows:
        share = "N/A" if entry.public_share is None else f"{entry.public_share:.3f}"
        logger.info(f"Public share {entry.window}: {share}")
    return bundle


def mode_share_frame(report: ModeShareReport) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "window": [w.window for w in report.windows],
            "public_trips": pd.Series([w.public_trips for w in report.windows], dtype=float),
            "private_trips": pd.Series([w.private_trips for w in report.windows], dtype=float),
            "public_share": pd.Series([w.public_share for w in report.windows], dtype=float),
        }
    )


def write_report(
    bundle: ReportBundle,
    out_dir,
    district_map: DistrictMap,
    geojson: bool = True,
    metadata: dict | None = None,
) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in bundle.overall:
        for label, matrices in (("overall", bundle.overall), ("public", bundle.public), ("private", bundle.private)):
            written.append(write_matrices(out_dir / "od" / f"{name}_{label}.csv", [matrices[name]], metadata))

    path = out_dir / "mode_share.csv"
    mode_share_frame(bundle.mode_share).to_csv(
        path, index=False, float_format="%.17g", na_rep="N/A", lineterminator="\n"
    )
    written.append(path)
    for name, records in bundle.rankings.items():
        path = out_dir / f"underserved_{name}.csv"
        ranking_frame(records).to_csv(path, index=False, float_format="%.17g", na_rep="N/A", lineterminator="\n")
        written.append(path)
    if geojson:
        records = [record for name in bundle.rankings for record in bundle.rankings[name]]
        written.append(write_json(out_dir / "underserved.geojson", connections_feature_collection(records, district_map)))

    written.append(
        write_json(
            out_dir / "report.json",
            {
                "mode_share": bundle.mode_share.as_dict(),
                "private_residuals": {name: r.model_dump() for name, r in bundle.residuals.items()},
                "underserved": {
                    name: [dataclasses.asdict(record) for record in records]
                    for name, records in bundle.rankings.items()
                },
                "intra_district": bundle.intra.as_dict() if bundle.intra else None,
                "evaluation": bundle.evaluation,
                "references": references.as_dict(),
                "metadata": metadata or {},
            },
        )
    )
    logger.info(f"Report written to {out_dir}")
    return written
